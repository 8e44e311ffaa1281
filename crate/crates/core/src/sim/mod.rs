//! Analytical model of offloaded inference.
//!
//! Each offloaded linear operation is a sequence of non-overlapping segments:
//! storage-to-host transfer, host-to-GPU transfer (or one direct
//! storage-to-GPU transfer), decompression, and compute. Segment durations are
//! bytes divided by a bandwidth or throughput from a [`BandwidthProfile`].
//! Compute is a fixed time per layer, split across a layer's operations in
//! proportion to their element counts.

mod calibrate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::compression_ratio;
use crate::gen::{ModelSpec, OpShape};
use crate::matrix::ElementType;

pub use calibrate::{
    calibrate_default_profile, calibrate_llama_profile, fit_profile, llama_anchors, opt_anchors,
    CalibrationAnchors, DecompAnchor, LinkAnchor, CPU_DECOMP_TPUT, ZSTD_DECOMP_TPUT, ZSTD_RATIO,
};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("direct storage-to-GPU mode needs bw_ssd_gpu_direct in the profile")]
    MissingDirectBandwidth,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("device map has {map} layers, model has {model}")]
    MapLength { map: usize, model: usize },
    #[error("invalid device map: {0}")]
    BadMap(String),
    #[error("{0} outside its valid range")]
    OutOfRange(String),
    #[error("unknown execution mode `{0}`")]
    UnknownMode(String),
}

/// Where a layer's weights live between uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Gpu,
    Cpu,
    Ssd,
}

impl FromStr for Placement {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpu" => Ok(Placement::Gpu),
            "cpu" => Ok(Placement::Cpu),
            "ssd" => Ok(Placement::Ssd),
            other => Err(SimError::BadMap(format!("unknown placement `{other}`"))),
        }
    }
}

/// Placement of every layer of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceMap(pub Vec<Placement>);

impl DeviceMap {
    /// First `gpu` layers on the GPU, the next `cpu` in host memory, the rest on storage.
    pub fn from_counts(gpu: usize, cpu: usize, ssd: usize) -> Self {
        let mut v = vec![Placement::Gpu; gpu];
        v.extend(std::iter::repeat_n(Placement::Cpu, cpu));
        v.extend(std::iter::repeat_n(Placement::Ssd, ssd));
        DeviceMap(v)
    }

    /// Parses `"g,c,s"` layer counts.
    pub fn parse_counts(s: &str) -> Result<Self, SimError> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| SimError::BadMap(format!("`{s}`: {e}")))?;
        match parts.as_slice() {
            &[g, c, d] => Ok(Self::from_counts(g, c, d)),
            _ => Err(SimError::BadMap(format!(
                "`{s}`: expected three counts gpu,cpu,ssd"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, p: Placement) -> usize {
        self.0.iter().filter(|&&x| x == p).count()
    }

    /// True if all GPU layers precede all CPU layers, which precede all SSD layers.
    pub fn is_contiguous(&self) -> bool {
        self.0.windows(2).all(|w| rank(w[0]) <= rank(w[1]))
    }

    /// Same GPU prefix, `cpu` host-resident layers, everything else on storage.
    pub fn with_cpu_layers(&self, cpu: usize) -> Self {
        let gpu = self.count(Placement::Gpu);
        let rest = self.len().saturating_sub(gpu + cpu);
        Self::from_counts(gpu, cpu.min(self.len() - gpu), rest)
    }
}

fn rank(p: Placement) -> u8 {
    match p {
        Placement::Gpu => 0,
        Placement::Cpu => 1,
        Placement::Ssd => 2,
    }
}

/// How offloaded weights are stored and restored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    /// Dense weights moved as is.
    DenseBaseline,
    /// Bitmap format moved through host memory, decompressed on the GPU.
    Endor,
    /// Bitmap format read straight from storage into GPU memory.
    EndorDirect,
    /// Bitmap format decompressed on the host before the host-to-GPU copy.
    EndorCpuDecomp,
    /// Byte-level compressed weights decompressed on the host.
    ZstdCpu,
}

impl ExecMode {
    pub const ALL: [ExecMode; 5] = [
        ExecMode::DenseBaseline,
        ExecMode::Endor,
        ExecMode::EndorDirect,
        ExecMode::EndorCpuDecomp,
        ExecMode::ZstdCpu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExecMode::DenseBaseline => "dense",
            ExecMode::Endor => "endor",
            ExecMode::EndorDirect => "endor-direct",
            ExecMode::EndorCpuDecomp => "endor-cpu",
            ExecMode::ZstdCpu => "zstd",
        }
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExecMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "dense" | "dense-baseline" | "baseline" => Ok(ExecMode::DenseBaseline),
            "endor" => Ok(ExecMode::Endor),
            "endor-direct" | "direct" => Ok(ExecMode::EndorDirect),
            "endor-cpu" | "endor-cpu-decomp" => Ok(ExecMode::EndorCpuDecomp),
            "zstd" | "zstd-cpu" => Ok(ExecMode::ZstdCpu),
            _ => Err(SimError::UnknownMode(s)),
        }
    }
}

/// Link bandwidths and decompression throughputs, all in bytes per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthProfile {
    pub bw_ssd_cpu: f64,
    pub bw_cpu_gpu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_ssd_gpu_direct: Option<f64>,
    /// Dense output bytes reconstructed per second on the GPU.
    pub gpu_decomp_tput: f64,
    /// Dense output bytes reconstructed per second on the host.
    pub cpu_decomp_tput: f64,
    /// Byte-codec compressed size over dense size.
    pub zstd_ratio: f64,
    /// Compressed input bytes consumed per second by the byte codec.
    pub zstd_decomp_tput: f64,
    pub compute_seconds_per_layer: f64,
    /// Element count of the layer `compute_seconds_per_layer` was measured on.
    pub compute_reference_elements: u64,
}

impl BandwidthProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("bw_ssd_cpu", self.bw_ssd_cpu),
            ("bw_cpu_gpu", self.bw_cpu_gpu),
            ("gpu_decomp_tput", self.gpu_decomp_tput),
            ("cpu_decomp_tput", self.cpu_decomp_tput),
            ("zstd_ratio", self.zstd_ratio),
            ("zstd_decomp_tput", self.zstd_decomp_tput),
            (
                "compute_reference_elements",
                self.compute_reference_elements as f64,
            ),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidProfile(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if let Some(d) = self.bw_ssd_gpu_direct {
            if !(d.is_finite() && d > 0.0) {
                return Err(SimError::InvalidProfile(format!(
                    "bw_ssd_gpu_direct must be positive, got {d}"
                )));
            }
        }
        if !(self.compute_seconds_per_layer.is_finite() && self.compute_seconds_per_layer >= 0.0) {
            return Err(SimError::InvalidProfile(
                "compute_seconds_per_layer must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Compute time attributed to one operation.
    pub fn compute_seconds(&self, shape: &OpShape) -> f64 {
        self.compute_seconds_per_layer * shape.elements() as f64
            / self.compute_reference_elements as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    SsdToCpu,
    CpuToGpu,
    SsdToGpu,
    Decompress,
    Compute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Cpu,
    Gpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Device doing the work; the destination for transfers.
    pub device: Device,
    pub start: f64,
    pub duration: f64,
}

/// Sequential segments of one operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub op: String,
    pub placement: Placement,
    pub mode: ExecMode,
    pub segments: Vec<Segment>,
}

impl Timeline {
    fn new(op: &str, placement: Placement, mode: ExecMode) -> Self {
        Self {
            op: op.to_string(),
            placement,
            mode,
            segments: Vec::new(),
        }
    }

    fn push(&mut self, kind: SegmentKind, device: Device, duration: f64) {
        let start = self.total();
        self.segments.push(Segment {
            kind,
            device,
            start,
            duration,
        });
    }

    pub fn total(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.start + s.duration)
    }

    /// Summed duration of all segments of `kind`.
    pub fn time_in(&self, kind: SegmentKind) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.duration)
            .sum()
    }

    /// Time spent moving weights.
    pub fn transfer_seconds(&self) -> f64 {
        [
            SegmentKind::SsdToCpu,
            SegmentKind::CpuToGpu,
            SegmentKind::SsdToGpu,
        ]
        .into_iter()
        .map(|k| self.time_in(k))
        .sum()
    }
}

/// Simulates one operation's weight delivery and compute.
pub fn simulate_op(
    shape: &OpShape,
    placement: Placement,
    mode: ExecMode,
    p: &BandwidthProfile,
    sparsity: f64,
) -> Result<Timeline, SimError> {
    use SegmentKind::*;
    p.validate()?;
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(SimError::OutOfRange(format!("sparsity {sparsity}")));
    }
    let direct = match (mode, p.bw_ssd_gpu_direct) {
        (ExecMode::EndorDirect, None) => return Err(SimError::MissingDirectBandwidth),
        (_, d) => d,
    };
    let dense = shape.dense_bytes() as f64;
    let c = compression_ratio(shape.dtype, sparsity);
    let compressed = c * dense;
    let gpu_decomp = dense / p.gpu_decomp_tput;
    let mut t = Timeline::new(&shape.name, placement, mode);
    let from_ssd = placement == Placement::Ssd;
    match (placement, mode) {
        (Placement::Gpu, _) => {}
        (_, ExecMode::DenseBaseline) => {
            if from_ssd {
                t.push(SsdToCpu, Device::Cpu, dense / p.bw_ssd_cpu);
            }
            t.push(CpuToGpu, Device::Gpu, dense / p.bw_cpu_gpu);
        }
        (_, ExecMode::Endor) => {
            if from_ssd {
                t.push(SsdToCpu, Device::Cpu, compressed / p.bw_ssd_cpu);
            }
            t.push(CpuToGpu, Device::Gpu, compressed / p.bw_cpu_gpu);
            t.push(Decompress, Device::Gpu, gpu_decomp);
        }
        (_, ExecMode::EndorDirect) => {
            // checked above
            let direct = direct.unwrap_or(f64::NAN);
            if from_ssd {
                t.push(SsdToGpu, Device::Gpu, compressed / direct);
            } else {
                t.push(CpuToGpu, Device::Gpu, compressed / p.bw_cpu_gpu);
            }
            t.push(Decompress, Device::Gpu, gpu_decomp);
        }
        (_, ExecMode::EndorCpuDecomp) => {
            if from_ssd {
                t.push(SsdToCpu, Device::Cpu, compressed / p.bw_ssd_cpu);
            }
            t.push(Decompress, Device::Cpu, dense / p.cpu_decomp_tput);
            t.push(CpuToGpu, Device::Gpu, dense / p.bw_cpu_gpu);
        }
        (_, ExecMode::ZstdCpu) => {
            let packed = p.zstd_ratio * dense;
            if from_ssd {
                t.push(SsdToCpu, Device::Cpu, packed / p.bw_ssd_cpu);
            }
            t.push(Decompress, Device::Cpu, packed / p.zstd_decomp_tput);
            t.push(CpuToGpu, Device::Gpu, dense / p.bw_cpu_gpu);
        }
    }
    t.push(Compute, Device::Gpu, p.compute_seconds(shape));
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub placement: Placement,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ops: Vec<Timeline>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionTotals {
    pub gpu: f64,
    pub cpu: f64,
    pub ssd: f64,
}

impl RegionTotals {
    pub fn get(&self, p: Placement) -> f64 {
        match p {
            Placement::Gpu => self.gpu,
            Placement::Cpu => self.cpu,
            Placement::Ssd => self.ssd,
        }
    }

    fn add(&mut self, p: Placement, secs: f64) {
        match p {
            Placement::Gpu => self.gpu += secs,
            Placement::Cpu => self.cpu += secs,
            Placement::Ssd => self.ssd += secs,
        }
    }
}

/// Result of simulating one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub model: String,
    pub mode: ExecMode,
    pub dtype: ElementType,
    pub sparsity: f64,
    pub gpu_layers: usize,
    pub cpu_layers: usize,
    pub ssd_layers: usize,
    pub total_seconds: f64,
    pub region_seconds: RegionTotals,
    /// Reference total over this total, when a reference was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
    pub layers: Vec<LayerReport>,
}

impl PassReport {
    pub fn with_reference(mut self, reference: &PassReport) -> Self {
        self.speedup = Some(reference.total_seconds / self.total_seconds);
        self
    }

    /// Speedup of this report's `p`-mapped layers relative to `reference`,
    /// compared per layer so differing layer counts do not matter.
    pub fn region_speedup(&self, reference: &PassReport, p: Placement) -> Option<f64> {
        let mine = self.region_seconds.get(p) / self.layers_on(p)? as f64;
        let theirs = reference.region_seconds.get(p) / reference.layers_on(p)? as f64;
        Some(theirs / mine)
    }

    fn layers_on(&self, p: Placement) -> Option<usize> {
        let n = match p {
            Placement::Gpu => self.gpu_layers,
            Placement::Cpu => self.cpu_layers,
            Placement::Ssd => self.ssd_layers,
        };
        (n > 0).then_some(n)
    }

    /// Drops per-operation timelines, keeping per-layer totals.
    pub fn summary(mut self) -> Self {
        self.layers.iter_mut().for_each(|l| l.ops.clear());
        self
    }
}

/// Simulates a full pass: every operation of every layer, in order.
pub fn simulate_pass(
    spec: &ModelSpec,
    map: &DeviceMap,
    mode: ExecMode,
    p: &BandwidthProfile,
    sparsity: f64,
) -> Result<PassReport, SimError> {
    p.validate()?;
    if map.len() != spec.num_layers {
        return Err(SimError::MapLength {
            map: map.len(),
            model: spec.num_layers,
        });
    }
    // layers sharing a placement are identical, simulate each kind once
    let mut cache: [Option<(f64, Vec<Timeline>)>; 3] = [None, None, None];
    let mut layers = Vec::with_capacity(spec.num_layers);
    let mut regions = RegionTotals::default();
    let mut total = 0.0;
    for (index, &placement) in map.0.iter().enumerate() {
        let slot = &mut cache[rank(placement) as usize];
        if slot.is_none() {
            let ops = spec
                .ops_per_layer
                .iter()
                .map(|op| simulate_op(op, placement, mode, p, sparsity))
                .collect::<Result<Vec<_>, _>>()?;
            let secs = ops.iter().map(Timeline::total).sum();
            *slot = Some((secs, ops));
        }
        let (secs, ops) = slot.as_ref().expect("filled above");
        regions.add(placement, *secs);
        total += secs;
        layers.push(LayerReport {
            index,
            placement,
            seconds: *secs,
            ops: ops.clone(),
        });
    }
    Ok(PassReport {
        model: spec.model_name.clone(),
        mode,
        dtype: spec
            .ops_per_layer
            .first()
            .map_or(ElementType::F16, |o| o.dtype),
        sparsity,
        gpu_layers: map.count(Placement::Gpu),
        cpu_layers: map.count(Placement::Cpu),
        ssd_layers: map.count(Placement::Ssd),
        total_seconds: total,
        region_seconds: regions,
        speedup: None,
        layers,
    })
}

/// Number of compressed layers that fit the host memory previously holding
/// `dense_cpu_layers` dense layers, capped at the model's layer count.
pub fn remap_cpu_layers(
    spec: &ModelSpec,
    dense_cpu_layers: usize,
    ratio: f64,
) -> Result<usize, SimError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SimError::OutOfRange(format!("compression ratio {ratio}")));
    }
    // the epsilon keeps exact quotients like 9 / 0.75 from rounding down
    let fit = (dense_cpu_layers as f64 / ratio + 1e-9).floor() as usize;
    Ok(fit.min(spec.num_layers))
}

/// Dense and bitmap-compressed passes with every weight stored as INT8 at 50%
/// sparsity. The compressed report carries its speedup over the dense one.
pub fn quantized_pass(
    spec: &ModelSpec,
    map: &DeviceMap,
    p: &BandwidthProfile,
) -> Result<(PassReport, PassReport), SimError> {
    let int8 = spec.with_dtype(ElementType::I8);
    let dense = simulate_pass(&int8, map, ExecMode::DenseBaseline, p, 0.5)?;
    let endor = simulate_pass(&int8, map, ExecMode::Endor, p, 0.5)?.with_reference(&dense);
    Ok((dense, endor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::model_catalog;

    fn profile() -> BandwidthProfile {
        calibrate_default_profile()
    }

    fn fc() -> OpShape {
        OpShape::new("fc1", 9216, 36864, ElementType::F16)
    }

    #[test]
    fn gpu_placement_is_compute_only() {
        for mode in ExecMode::ALL {
            let t = simulate_op(&fc(), Placement::Gpu, mode, &profile(), 0.5).unwrap();
            assert_eq!(t.segments.len(), 1);
            assert_eq!(t.segments[0].kind, SegmentKind::Compute);
        }
    }

    #[test]
    fn segments_are_sequential() {
        for mode in ExecMode::ALL {
            let t = simulate_op(&fc(), Placement::Ssd, mode, &profile(), 0.5).unwrap();
            let mut clock = 0.0;
            for s in &t.segments {
                assert!(s.duration >= 0.0);
                assert_eq!(s.start, clock);
                clock += s.duration;
            }
            assert_eq!(t.total(), clock);
        }
    }

    #[test]
    fn endor_transfer_shrinks_by_ratio() {
        let p = profile();
        let dense = simulate_op(&fc(), Placement::Ssd, ExecMode::DenseBaseline, &p, 0.5).unwrap();
        let endor = simulate_op(&fc(), Placement::Ssd, ExecMode::Endor, &p, 0.5).unwrap();
        let shrink = dense.transfer_seconds() / endor.transfer_seconds();
        assert!((shrink - 1.0 / 0.5625).abs() < 1e-9);
    }

    #[test]
    fn zero_sparsity_costs_more_than_dense() {
        let p = profile();
        let dense = simulate_op(&fc(), Placement::Ssd, ExecMode::DenseBaseline, &p, 0.0).unwrap();
        let endor = simulate_op(&fc(), Placement::Ssd, ExecMode::Endor, &p, 0.0).unwrap();
        assert!((endor.transfer_seconds() / dense.transfer_seconds() - 1.0625).abs() < 1e-9);
        assert!(endor.total() > dense.total());
    }

    #[test]
    fn direct_mode_requires_bandwidth() {
        let mut p = profile();
        p.bw_ssd_gpu_direct = None;
        assert_eq!(
            simulate_op(&fc(), Placement::Ssd, ExecMode::EndorDirect, &p, 0.5),
            Err(SimError::MissingDirectBandwidth)
        );
        assert!(simulate_op(&fc(), Placement::Ssd, ExecMode::Endor, &p, 0.5).is_ok());
    }

    #[test]
    fn lowering_bandwidth_never_speeds_up() {
        let base = profile();
        let knobs: [fn(&mut BandwidthProfile); 7] = [
            |p| p.bw_ssd_cpu *= 0.7,
            |p| p.bw_cpu_gpu *= 0.7,
            |p| p.bw_ssd_gpu_direct = p.bw_ssd_gpu_direct.map(|d| d * 0.7),
            |p| p.gpu_decomp_tput *= 0.7,
            |p| p.cpu_decomp_tput *= 0.7,
            |p| p.zstd_decomp_tput *= 0.7,
            |p| p.compute_seconds_per_layer *= 1.3,
        ];
        let spec = model_catalog("opt-66b").unwrap();
        let map = DeviceMap::from_counts(5, 8, 51);
        for knob in knobs {
            let mut slow = base.clone();
            knob(&mut slow);
            for mode in ExecMode::ALL {
                for placement in [Placement::Gpu, Placement::Cpu, Placement::Ssd] {
                    let a = simulate_op(&fc(), placement, mode, &base, 0.5).unwrap();
                    let b = simulate_op(&fc(), placement, mode, &slow, 0.5).unwrap();
                    for (x, y) in a.segments.iter().zip(&b.segments) {
                        assert!(y.duration >= x.duration);
                    }
                }
                let a = simulate_pass(&spec, &map, mode, &base, 0.5).unwrap();
                let b = simulate_pass(&spec, &map, mode, &slow, 0.5).unwrap();
                assert!(b.total_seconds >= a.total_seconds);
            }
        }
    }

    #[test]
    fn pass_is_sum_of_op_timelines() {
        let spec = model_catalog("opt-66b").unwrap();
        let map = DeviceMap::from_counts(5, 8, 51);
        for mode in ExecMode::ALL {
            let r = simulate_pass(&spec, &map, mode, &profile(), 0.5).unwrap();
            let sum: f64 = r
                .layers
                .iter()
                .flat_map(|l| &l.ops)
                .map(Timeline::total)
                .sum();
            assert!((r.total_seconds - sum).abs() < 1e-9 * sum);
            let regions = r.region_seconds.gpu + r.region_seconds.cpu + r.region_seconds.ssd;
            assert!((r.total_seconds - regions).abs() < 1e-9 * sum);
        }
    }

    #[test]
    fn gpu_layers_identical_across_modes() {
        let spec = model_catalog("llama2-70b").unwrap();
        let map = DeviceMap::from_counts(6, 10, 64);
        let base = simulate_pass(&spec, &map, ExecMode::DenseBaseline, &profile(), 0.5).unwrap();
        for mode in ExecMode::ALL {
            let r = simulate_pass(&spec, &map, mode, &profile(), 0.5).unwrap();
            assert_eq!(r.region_seconds.gpu, base.region_seconds.gpu);
        }
    }

    #[test]
    fn map_length_checked() {
        let spec = model_catalog("opt-66b").unwrap();
        let err = simulate_pass(
            &spec,
            &DeviceMap::from_counts(1, 1, 1),
            ExecMode::Endor,
            &profile(),
            0.5,
        );
        assert_eq!(err.unwrap_err(), SimError::MapLength { map: 3, model: 64 });
    }

    #[test]
    fn remap_counts() {
        let opt = model_catalog("opt-66b").unwrap();
        let llama = model_catalog("llama2-70b").unwrap();
        assert_eq!(remap_cpu_layers(&opt, 8, 0.5625).unwrap(), 14);
        assert_eq!(remap_cpu_layers(&opt, 8, 1.0).unwrap(), 8);
        assert_eq!(remap_cpu_layers(&llama, 10, 0.5625).unwrap(), 17);
        assert_eq!(remap_cpu_layers(&opt, 60, 0.5).unwrap(), 64);
        assert!(remap_cpu_layers(&opt, 8, 0.0).is_err());
        assert!(remap_cpu_layers(&opt, 8, 1.5).is_err());
    }

    #[test]
    fn device_map_parsing() {
        let m = DeviceMap::parse_counts("5, 8,51").unwrap();
        assert_eq!(m.len(), 64);
        assert_eq!(m.count(Placement::Cpu), 8);
        assert!(m.is_contiguous());
        assert!(DeviceMap::parse_counts("5,8").is_err());
        assert!(DeviceMap::parse_counts("a,b,c").is_err());
        let odd = DeviceMap(vec![Placement::Ssd, Placement::Gpu]);
        assert!(!odd.is_contiguous());
        let remapped = m.with_cpu_layers(14);
        assert_eq!(
            (
                remapped.count(Placement::Gpu),
                remapped.count(Placement::Cpu),
                remapped.count(Placement::Ssd)
            ),
            (5, 14, 45)
        );
    }

    #[test]
    fn quantized_pass_uses_int8() {
        let spec = model_catalog("opt-66b").unwrap();
        let map = DeviceMap::from_counts(5, 8, 51);
        let (dense, endor) = quantized_pass(&spec, &map, &profile()).unwrap();
        assert_eq!(dense.dtype, ElementType::I8);
        assert!(endor.speedup.unwrap() > 1.0);
        let f16 = simulate_pass(&spec, &map, ExecMode::DenseBaseline, &profile(), 0.5).unwrap();
        assert!(dense.total_seconds < f16.total_seconds);
    }

    #[test]
    fn quantized_zero_sparsity_slows_down() {
        let p = profile();
        let op = fc().with_dtype(ElementType::I8);
        let dense = simulate_op(&op, Placement::Ssd, ExecMode::DenseBaseline, &p, 0.0).unwrap();
        let endor = simulate_op(&op, Placement::Ssd, ExecMode::Endor, &p, 0.0).unwrap();
        assert!(dense.total() / endor.total() < 1.0);
    }

    #[test]
    fn mode_names_roundtrip() {
        for mode in ExecMode::ALL {
            assert_eq!(mode.name().parse::<ExecMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(serde_json::from_str::<ExecMode>(&json).unwrap(), mode);
        }
        assert!("warp".parse::<ExecMode>().is_err());
    }

    #[test]
    fn invalid_profile_rejected() {
        let mut p = profile();
        p.bw_cpu_gpu = 0.0;
        let spec = model_catalog("opt-66b").unwrap();
        let map = DeviceMap::from_counts(5, 8, 51);
        assert!(matches!(
            simulate_pass(&spec, &map, ExecMode::Endor, &p, 0.5),
            Err(SimError::InvalidProfile(_))
        ));
    }
}
