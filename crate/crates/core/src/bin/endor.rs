use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use endor_core::codec::{
    decompress_chunked, dequantize_values, quantize_values, EndorTensor, DEFAULT_CHUNK_SIZE,
};
use endor_core::compare::{
    byte_codec_roundtrip, csr_compress, csr_decompress, IndexWidth, ZstdCodec,
};
use endor_core::gen::{
    magnitude_prune, measure_sparsity, model_catalog, nm_prune, synth_weight, ModelSpec, OpShape,
};
use endor_core::sim::{
    calibrate_default_profile, calibrate_llama_profile, remap_cpu_layers, simulate_pass,
    BandwidthProfile, DeviceMap, ExecMode, PassReport, Placement,
};
use endor_core::store::{
    bench_read, decode_dense, decode_endor, encode_endor, inspect_endor, read_dense_file,
    read_endor_file, write_dense_file, write_endor_file, DENSE_MAGIC,
};
use endor_core::{compress, compression_ratio, decompress, DenseMatrix, ElementType};

#[derive(Parser)]
#[command(
    name = "endor",
    version,
    about = "Bitmap sparse storage for pruned weights"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic weight matrix as a .dense file
    Gen(GenArgs),
    /// Prune a .dense file
    #[command(subcommand)]
    Prune(PruneCmd),
    /// Convert a .dense file to .endor
    Compress(CompressArgs),
    /// Convert a .endor file back to .dense
    Decompress(DecompressArgs),
    /// Print the header of a .endor or .dense file
    Inspect { file: PathBuf },
    /// Fully decode a file and check its integrity
    Verify { file: PathBuf },
    /// Time sequential reads of one or more files
    Bench(BenchArgs),
    /// Simulate an offloaded forward pass
    Simulate(SimulateArgs),
    /// Compare storage formats on one matrix
    Compare(CompareArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Model catalog name
    #[arg(long, default_value = "opt-66b")]
    model: String,
    /// Operation name within a layer, e.g. fc1
    #[arg(long)]
    layer_op: Option<String>,
    /// Explicit shape ROWSxCOLS, overrides --layer-op
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    dtype: Option<ElementType>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Magnitude-prune to this sparsity after generation
    #[arg(long)]
    sparsity: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PruneCmd {
    /// Zero the smallest-magnitude fraction of elements
    Magnitude {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        sparsity: f64,
    },
    /// Keep the n largest of every m consecutive elements in a row
    Nm {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
    },
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    output: PathBuf,
    /// Store non-zero values as INT8 with a per-tensor scale
    #[arg(long)]
    quantize: bool,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    output: PathBuf,
    /// Convert INT8 values back to F16 before writing
    #[arg(long)]
    dequantize: bool,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Evict each file from the page cache before every read
    #[arg(long)]
    drop_cache: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON document with any of: model, map, mode, profile, sparsity
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog name or path to a model JSON document
    #[arg(long)]
    model: Option<String>,
    /// Layer counts gpu,cpu,ssd or path to a JSON placement list
    #[arg(long)]
    map: Option<String>,
    /// dense, endor, endor-direct, endor-cpu, zstd or all
    #[arg(long)]
    mode: Option<String>,
    /// default, llama or path to a profile JSON document
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    sparsity: Option<f64>,
    /// Store every weight as this element type
    #[arg(long)]
    dtype: Option<ElementType>,
    /// Grow the host-mapped region to hold as many compressed layers as fit
    #[arg(long)]
    remap: bool,
    /// Include per-operation timelines
    #[arg(long)]
    detail: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// A .dense file; when absent a matrix is generated
    input: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    json: bool,
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("shape `{s}` is not ROWSxCOLS"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

fn resolve_shape(a: &ShapeArgs) -> Result<OpShape> {
    let op = match (&a.shape, &a.layer_op) {
        (Some(s), _) => {
            let (rows, cols) = parse_shape(s)?;
            OpShape::new("custom", rows, cols, ElementType::F16)
        }
        (None, Some(name)) => {
            let spec = model_catalog(&a.model)?;
            spec.op(name)
                .cloned()
                .ok_or_else(|| anyhow!("model `{}` has no operation `{name}`", a.model))?
        }
        (None, None) => bail!("one of --layer-op or --shape is required"),
    };
    Ok(match a.dtype {
        Some(d) => op.with_dtype(d),
        None => op,
    })
}

fn generate(a: &ShapeArgs) -> Result<DenseMatrix> {
    let shape = resolve_shape(a)?;
    let w = synth_weight(&shape, a.seed)?;
    Ok(match a.sparsity {
        Some(s) => magnitude_prune(&w, s)?,
        None => w,
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let w = generate(&a.shape)?;
    let bytes = write_dense_file(&w, None, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} ({}x{} {}, sparsity {:.4}, {bytes} bytes)",
        a.out.display(),
        w.rows(),
        w.cols(),
        w.dtype(),
        measure_sparsity(&w)
    );
    Ok(())
}

fn cmd_prune(c: &PruneCmd) -> Result<()> {
    let (input, output) = match c {
        PruneCmd::Magnitude { input, output, .. } | PruneCmd::Nm { input, output, .. } => {
            (input, output)
        }
    };
    let f = read_dense_file(input).with_context(|| format!("reading {}", input.display()))?;
    let pruned = match *c {
        PruneCmd::Magnitude { sparsity, .. } => magnitude_prune(&f.matrix, sparsity)?,
        PruneCmd::Nm { n, m, .. } => nm_prune(&f.matrix, n, m)?,
    };
    write_dense_file(&pruned, f.quant_scale, output)?;
    println!(
        "wrote {} (sparsity {:.4})",
        output.display(),
        measure_sparsity(&pruned)
    );
    Ok(())
}

fn cmd_compress(a: &CompressArgs) -> Result<()> {
    let f = read_dense_file(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut t = compress(&f.matrix);
    if let Some(scale) = f.quant_scale {
        t = EndorTensor::from_parts(
            t.rows(),
            t.cols(),
            t.bitmap().clone(),
            t.values().clone(),
            Some(scale),
            t.neg_zero_collapsed(),
        )?;
    }
    if a.quantize {
        t = quantize_values(&t)?;
    }
    let out_bytes = write_endor_file(&t, &a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let in_bytes = fs::metadata(&a.input)?.len();
    println!(
        "wrote {} ({out_bytes} bytes, {:.4} of {in_bytes}, nnz {})",
        a.output.display(),
        out_bytes as f64 / in_bytes as f64,
        t.nnz()
    );
    Ok(())
}

fn cmd_decompress(a: &DecompressArgs) -> Result<()> {
    let mut t =
        read_endor_file(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if a.dequantize {
        t = dequantize_values(&t)?;
    }
    let idx = t.rank_index(a.chunk_size)?;
    let w = decompress_chunked(&t, &idx)?;
    let bytes = write_dense_file(&w, t.quant_scale(), &a.output)?;
    println!("wrote {} ({bytes} bytes)", a.output.display());
    Ok(())
}

fn magic_of(bytes: &[u8]) -> Option<[u8; 4]> {
    bytes.get(..4).map(|m| [m[0], m[1], m[2], m[3]])
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let v = match magic_of(&bytes) {
        Some(DENSE_MAGIC) => {
            let f = decode_dense(&bytes)?;
            json!({
                "container": "dense",
                "file_bytes": bytes.len(),
                "dtype": f.matrix.dtype(),
                "rows": f.matrix.rows(),
                "cols": f.matrix.cols(),
                "quant_scale": f.quant_scale,
                "sparsity": measure_sparsity(&f.matrix),
            })
        }
        _ => {
            let h = inspect_endor(&bytes)?;
            let n = h.rows * h.cols;
            let nnz = h.nnz.unwrap_or(0);
            json!({
                "container": "endor",
                "file_bytes": bytes.len(),
                "header_bytes": h.encoded_len(),
                "dtype": h.dtype,
                "flags": h.flags,
                "rows": h.rows,
                "cols": h.cols,
                "nnz": nnz,
                "quant_scale": h.quant_scale,
                "sparsity": if n == 0 { 0.0 } else { 1.0 - nnz as f64 / n as f64 },
                "bitmap_bytes": n.div_ceil(8),
                "value_bytes": nnz as usize * h.dtype.bytes(),
            })
        }
    };
    print_json(&v)
}

fn cmd_verify(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match magic_of(&bytes) {
        Some(DENSE_MAGIC) => {
            let f = decode_dense(&bytes)
                .with_context(|| format!("{} failed verification", path.display()))?;
            println!(
                "ok: {} dense {}x{}",
                path.display(),
                f.matrix.rows(),
                f.matrix.cols()
            );
        }
        _ => {
            let t = decode_endor(&bytes)
                .with_context(|| format!("{} failed verification", path.display()))?;
            decompress(&t)?;
            println!(
                "ok: {} endor {}x{} nnz {}",
                path.display(),
                t.rows(),
                t.cols(),
                t.nnz()
            );
        }
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let reports = a
        .files
        .iter()
        .map(|f| {
            bench_read(f, a.reps, a.drop_cache)
                .with_context(|| format!("benchmarking {}", f.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    print_json(&reports)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelRef {
    Name(String),
    Spec(ModelSpec),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MapRef {
    Counts(String),
    Layers(DeviceMap),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProfileRef {
    Name(String),
    Profile(Box<BandwidthProfile>),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimConfig {
    model: Option<ModelRef>,
    map: Option<MapRef>,
    mode: Option<String>,
    profile: Option<ProfileRef>,
    sparsity: Option<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(r: ModelRef) -> Result<ModelSpec> {
    match r {
        ModelRef::Spec(s) => Ok(s),
        ModelRef::Name(n) => match model_catalog(&n) {
            Ok(s) => Ok(s),
            Err(e) if Path::new(&n).is_file() => read_json(Path::new(&n)).context(e),
            Err(e) => Err(e.into()),
        },
    }
}

fn load_map(r: MapRef) -> Result<DeviceMap> {
    match r {
        MapRef::Layers(m) => Ok(m),
        MapRef::Counts(s) if Path::new(&s).is_file() => read_json(Path::new(&s)),
        MapRef::Counts(s) => Ok(DeviceMap::parse_counts(&s)?),
    }
}

fn load_profile(r: ProfileRef) -> Result<BandwidthProfile> {
    let p = match r {
        ProfileRef::Profile(p) => *p,
        ProfileRef::Name(n) => match n.as_str() {
            "default" | "opt" => calibrate_default_profile(),
            "llama" => calibrate_llama_profile(),
            path => read_json(Path::new(path))?,
        },
    };
    p.validate()?;
    Ok(p)
}

fn default_map(spec: &ModelSpec) -> Result<DeviceMap> {
    match spec.model_name.as_str() {
        "opt-66b" => Ok(DeviceMap::from_counts(5, 8, 51)),
        "llama2-70b" => Ok(DeviceMap::from_counts(6, 10, 64)),
        other => bail!("no default layer map for `{other}`, pass --map"),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg: SimConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    let model = a.model.clone().map(ModelRef::Name).or(cfg.model);
    let mut spec = load_model(model.unwrap_or(ModelRef::Name("opt-66b".into())))?;
    if let Some(d) = a.dtype {
        spec = spec.with_dtype(d);
    }
    let map = match a.map.clone().map(MapRef::Counts).or(cfg.map) {
        Some(m) => load_map(m)?,
        None => default_map(&spec)?,
    };
    let profile_ref = a
        .profile
        .clone()
        .map(ProfileRef::Name)
        .or(cfg.profile)
        .or_else(|| std::env::var("ENDOR_PROFILE").ok().map(ProfileRef::Name))
        .unwrap_or(ProfileRef::Name("default".into()));
    let profile = load_profile(profile_ref)?;
    let sparsity = a.sparsity.or(cfg.sparsity).unwrap_or(0.5);
    let mode = a
        .mode
        .clone()
        .or(cfg.mode)
        .unwrap_or_else(|| "endor".into());
    let modes: Vec<ExecMode> = if mode == "all" {
        ExecMode::ALL.to_vec()
    } else {
        vec![mode.parse()?]
    };

    let reference = simulate_pass(&spec, &map, ExecMode::DenseBaseline, &profile, sparsity)?;
    let mut remapped = map.clone();
    if a.remap {
        let dtype = spec
            .ops_per_layer
            .first()
            .map_or(ElementType::F16, |o| o.dtype);
        let cpu = remap_cpu_layers(
            &spec,
            map.count(Placement::Cpu),
            compression_ratio(dtype, sparsity),
        )?;
        remapped = map.with_cpu_layers(cpu);
    }
    let reports = modes
        .into_iter()
        .map(|m| {
            // dense weights gain no host capacity from remapping
            let m_map = if m == ExecMode::DenseBaseline {
                &map
            } else {
                &remapped
            };
            let r = simulate_pass(&spec, m_map, m, &profile, sparsity)?.with_reference(&reference);
            Ok(if a.detail { r } else { r.summary() })
        })
        .collect::<Result<Vec<PassReport>>>()?;
    match reports.as_slice() {
        [one] => print_json(one),
        many => print_json(&many),
    }
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let w = match &a.input {
        Some(p) => read_dense_file(p)?.matrix,
        None => generate(&a.shape)?,
    };
    let dense = w.byte_len();
    let mut rows = vec![("dense".to_string(), Some(dense), true)];

    let t = compress(&w);
    let endor_bytes = encode_endor(&t).len();
    rows.push(("endor".into(), Some(endor_bytes), decompress(&t)? == w));

    for width in [IndexWidth::U16, IndexWidth::U32] {
        let name = format!("csr-{}", width.bits());
        match csr_compress(&w, width) {
            Ok(c) => {
                let ok = csr_decompress(&c)? == w;
                rows.push((name, Some(c.byte_len()), ok));
            }
            Err(_) => rows.push((name, None, false)),
        }
    }
    let z = byte_codec_roundtrip(&w.data().to_le_bytes(), &ZstdCodec::default())?;
    rows.push(("zstd".into(), Some(z.output_bytes), true));

    let sparsity = measure_sparsity(&w);
    if a.json {
        let table: Vec<_> = rows
            .iter()
            .map(|(name, bytes, ok)| {
                json!({
                    "format": name,
                    "bytes": bytes,
                    "ratio": bytes.map(|b| b as f64 / dense as f64),
                    "roundtrip_ok": ok,
                })
            })
            .collect();
        return print_json(&json!({
            "rows": w.rows(),
            "cols": w.cols(),
            "dtype": w.dtype(),
            "sparsity": sparsity,
            "formats": table,
        }));
    }
    println!(
        "{}x{} {} sparsity {:.4}",
        w.rows(),
        w.cols(),
        w.dtype(),
        sparsity
    );
    println!("{:<10} {:>14} {:>8}  roundtrip", "format", "bytes", "ratio");
    for (name, bytes, ok) in rows {
        match bytes {
            Some(b) => println!(
                "{name:<10} {b:>14} {:>8.4}  {}",
                b as f64 / dense as f64,
                if ok { "ok" } else { "FAILED" }
            ),
            None => println!("{name:<10} {:>14} {:>8}  -", "n/a", "-"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Prune(c) => cmd_prune(c),
        Cmd::Compress(a) => cmd_compress(a),
        Cmd::Decompress(a) => cmd_decompress(a),
        Cmd::Inspect { file } => cmd_inspect(file),
        Cmd::Verify { file } => cmd_verify(file),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("endor: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
