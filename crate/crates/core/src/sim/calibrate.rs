//! Fitting a [`BandwidthProfile`] to measured pass timings.
//!
//! Link bandwidths come from the timing of one storage-mapped layer and how
//! that time splits between the storage-to-host and host-to-GPU copies.
//! Compute per layer is whatever remains of the dense pass total once the
//! transfers are accounted for. GPU decompression throughput is solved from
//! either a host-region speedup or a compressed pass total. Direct
//! storage-to-GPU bandwidth is solved from one or more direct-transfer
//! anchors; with several, the per-layer times they imply are combined by
//! geometric mean so the relative misfit is split between them.
//!
//! Host-side decompression has no timing anchor of its own, only the
//! observation that it costs more than the transfer it saves; the constants
//! below satisfy that with a wide margin.

use crate::codec::compression_ratio;
use crate::gen::{model_catalog, ModelSpec, LLAMA2_70B, OPT_66B};
use crate::matrix::ElementType;

use super::{BandwidthProfile, DeviceMap, Placement, SimError};

/// Host decompression of the bitmap format on 12 cores, dense bytes/s.
pub const CPU_DECOMP_TPUT: f64 = 2.0e9;
/// Byte-codec compressed size of a 50%-pruned F16 weight over its dense size.
pub const ZSTD_RATIO: f64 = 0.58;
/// Byte-codec decompression on the host, compressed bytes/s.
pub const ZSTD_DECOMP_TPUT: f64 = 0.5e9;

/// Timing of one storage-mapped dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkAnchor {
    pub layer_bytes: f64,
    /// Weight transfer time of the layer.
    pub transfer_seconds: f64,
    /// Share of `transfer_seconds` spent reading storage into host memory.
    pub ssd_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecompAnchor {
    /// Dense over compressed time of one host-mapped layer.
    CpuRegionSpeedup(f64),
    /// Compressed pass total over the anchor map.
    EndorTotalSeconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationAnchors {
    pub spec: ModelSpec,
    pub map: DeviceMap,
    pub sparsity: f64,
    pub link: LinkAnchor,
    pub dense_total_seconds: f64,
    pub decomp: DecompAnchor,
    /// Dense over direct-transfer time of one storage-mapped layer.
    pub direct_ssd_layer_speedup: Option<f64>,
    /// Direct-transfer pass total over the anchor map.
    pub direct_total_seconds: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<f64, SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SimError::InvalidProfile(format!(
            "anchors imply non-positive {name} ({v})"
        )))
    }
}

pub fn fit_profile(a: &CalibrationAnchors) -> Result<BandwidthProfile, SimError> {
    let n_gpu = a.map.count(Placement::Gpu) as f64;
    let n_cpu = a.map.count(Placement::Cpu) as f64;
    let n_ssd = a.map.count(Placement::Ssd) as f64;
    if a.map.len() != a.spec.num_layers {
        return Err(SimError::MapLength {
            map: a.map.len(),
            model: a.spec.num_layers,
        });
    }
    let layer = a.spec.with_dtype(ElementType::F16).bytes_per_layer() as f64;

    let bw_ssd_cpu = positive(
        "bw_ssd_cpu",
        a.link.layer_bytes / (a.link.transfer_seconds * a.link.ssd_fraction),
    )?;
    let bw_cpu_gpu = positive(
        "bw_cpu_gpu",
        a.link.layer_bytes / (a.link.transfer_seconds * (1.0 - a.link.ssd_fraction)),
    )?;
    let t_ssd = layer / bw_ssd_cpu;
    let t_cg = layer / bw_cpu_gpu;

    let n_layers = a.map.len() as f64;
    let compute = (a.dense_total_seconds - n_cpu * t_cg - n_ssd * (t_ssd + t_cg)) / n_layers;
    let compute = positive("compute_seconds_per_layer", compute)?;

    let c = compression_ratio(ElementType::F16, a.sparsity);
    let decomp = match a.decomp {
        DecompAnchor::CpuRegionSpeedup(s) => (t_cg + compute) / s - c * t_cg - compute,
        DecompAnchor::EndorTotalSeconds(total) => {
            let fixed = n_layers * compute + n_cpu * c * t_cg + n_ssd * c * (t_ssd + t_cg);
            (total - fixed) / (n_cpu + n_ssd)
        }
    };
    let decomp = positive("gpu decompression time", decomp)?;
    let cpu_endor_layer = c * t_cg + decomp + compute;

    let mut implied = Vec::new();
    if let Some(s) = a.direct_ssd_layer_speedup {
        implied.push((t_ssd + t_cg + compute) / s);
    }
    if let Some(total) = a.direct_total_seconds {
        implied.push((total - n_gpu * compute - n_cpu * cpu_endor_layer) / n_ssd);
    }
    let bw_ssd_gpu_direct = if implied.is_empty() {
        None
    } else {
        let log_mean = implied.iter().map(|x| x.ln()).sum::<f64>() / implied.len() as f64;
        let transfer = positive("direct transfer time", log_mean.exp() - decomp - compute)?;
        Some(c * layer / transfer)
    };

    Ok(BandwidthProfile {
        bw_ssd_cpu,
        bw_cpu_gpu,
        bw_ssd_gpu_direct,
        gpu_decomp_tput: layer / decomp,
        cpu_decomp_tput: CPU_DECOMP_TPUT,
        zstd_ratio: ZSTD_RATIO,
        zstd_decomp_tput: ZSTD_DECOMP_TPUT,
        compute_seconds_per_layer: compute,
        compute_reference_elements: a.spec.elements_per_layer() as u64,
    })
}

fn opt_link() -> LinkAnchor {
    let opt = model_catalog(OPT_66B).expect("catalog entry");
    // a storage-mapped layer takes about a second, 80% of it reading storage
    LinkAnchor {
        layer_bytes: opt.bytes_per_layer() as f64,
        transfer_seconds: 1.0,
        ssd_fraction: 0.8,
    }
}

/// Anchors for the OPT-66B measurements: 5/8/51 layer map, 54 s dense pass,
/// 1.30x host-region speedup, 2.03x direct speedup per storage layer and a
/// 24.2 s direct-transfer pass.
pub fn opt_anchors() -> CalibrationAnchors {
    CalibrationAnchors {
        spec: model_catalog(OPT_66B).expect("catalog entry"),
        map: DeviceMap::from_counts(5, 8, 51),
        sparsity: 0.5,
        link: opt_link(),
        dense_total_seconds: 54.0,
        decomp: DecompAnchor::CpuRegionSpeedup(1.30),
        direct_ssd_layer_speedup: Some(2.03),
        direct_total_seconds: Some(24.2),
    }
}

/// Anchors for the Llama2-70B measurements on the same machine: 6/10/64 map,
/// 57 s dense, 35.2 s compressed, 27 s direct.
pub fn llama_anchors() -> CalibrationAnchors {
    CalibrationAnchors {
        spec: model_catalog(LLAMA2_70B).expect("catalog entry"),
        map: DeviceMap::from_counts(6, 10, 64),
        sparsity: 0.5,
        link: opt_link(),
        dense_total_seconds: 57.0,
        decomp: DecompAnchor::EndorTotalSeconds(35.2),
        direct_ssd_layer_speedup: None,
        direct_total_seconds: Some(27.0),
    }
}

/// The default profile, fitted to the OPT-66B anchors.
pub fn calibrate_default_profile() -> BandwidthProfile {
    fit_profile(&opt_anchors()).expect("built-in anchors are consistent")
}

/// Profile fitted to the Llama2-70B anchors.
pub fn calibrate_llama_profile() -> BandwidthProfile {
    fit_profile(&llama_anchors()).expect("built-in anchors are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::OpShape;
    use crate::sim::{simulate_op, ExecMode};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a / b - 1.0).abs() <= rel
    }

    #[test]
    fn default_profile_frozen_values() {
        let p = calibrate_default_profile();
        assert!(
            close(p.bw_ssd_cpu, 2.548_039_68e9, 1e-6),
            "{}",
            p.bw_ssd_cpu
        );
        assert!(
            close(p.bw_cpu_gpu, 1.019_215_872e10, 1e-6),
            "{}",
            p.bw_cpu_gpu
        );
        assert!(close(p.compute_seconds_per_layer, 0.021_875, 1e-9));
        assert!(
            close(p.gpu_decomp_tput, 5.6158e10, 1e-3),
            "{}",
            p.gpu_decomp_tput
        );
        assert!(
            close(p.bw_ssd_gpu_direct.unwrap(), 2.7600e9, 1e-3),
            "{:?}",
            p.bw_ssd_gpu_direct
        );
        assert_eq!(p.compute_reference_elements, 1_019_215_872);
    }

    #[test]
    fn direct_link_is_at_least_storage_link() {
        for p in [calibrate_default_profile(), calibrate_llama_profile()] {
            assert!(p.bw_ssd_gpu_direct.unwrap() >= p.bw_ssd_cpu);
            p.validate().unwrap();
        }
    }

    #[test]
    fn llama_profile_shares_links() {
        let opt = calibrate_default_profile();
        let llama = calibrate_llama_profile();
        assert_eq!(opt.bw_ssd_cpu, llama.bw_ssd_cpu);
        assert_eq!(opt.bw_cpu_gpu, llama.bw_cpu_gpu);
        assert!(close(llama.compute_seconds_per_layer, 0.0199, 0.01));
    }

    #[test]
    fn host_decompression_outweighs_its_saving() {
        let p = calibrate_default_profile();
        for op in &opt_anchors().spec.ops_per_layer {
            let dense = simulate_op(op, Placement::Ssd, ExecMode::DenseBaseline, &p, 0.5).unwrap();
            for mode in [ExecMode::EndorCpuDecomp, ExecMode::ZstdCpu] {
                let t = simulate_op(op, Placement::Ssd, mode, &p, 0.5).unwrap();
                assert!(t.total() > dense.total(), "{mode} on {}", op.name);
            }
        }
    }

    #[test]
    fn gpu_decompression_costs_less_than_host_copy_saving() {
        let p = calibrate_default_profile();
        let op = OpShape::new("fc1", 9216, 36864, ElementType::F16);
        let dense = simulate_op(&op, Placement::Cpu, ExecMode::DenseBaseline, &p, 0.5).unwrap();
        let endor = simulate_op(&op, Placement::Cpu, ExecMode::Endor, &p, 0.5).unwrap();
        let saving = dense.transfer_seconds() - endor.transfer_seconds();
        assert!(endor.time_in(crate::sim::SegmentKind::Decompress) < saving);
    }

    #[test]
    fn inconsistent_anchors_are_rejected() {
        let mut a = opt_anchors();
        a.dense_total_seconds = 10.0;
        assert!(matches!(fit_profile(&a), Err(SimError::InvalidProfile(_))));
        let mut a = opt_anchors();
        a.decomp = DecompAnchor::CpuRegionSpeedup(5.0);
        assert!(fit_profile(&a).is_err());
    }
}
