//! SNN layer stack modeling: per-layer compute/storage costs, balanced
//! partitioning into logical cores, and the weighted task DAG with per-node
//! features.
//!
//! Node ids are assigned layer by layer, so the forward dataflow is always
//! id-ascending: an edge with `src < dst` carries spikes (forward pass), an
//! edge with `src > dst` carries gradients (backward pass, training graphs
//! only).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the workload models inference (forward only) or training
/// (forward + backward + weight-gradient).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Inference,
    Training,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Inference => write!(f, "inference"),
            Mode::Training => write!(f, "training"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inference" => Ok(Mode::Inference),
            "training" => Ok(Mode::Training),
            other => Err(Error::Validation(format!(
                "unknown mode `{other}`, expected `inference` or `training`"
            ))),
        }
    }
}

/// Per-core hardware resources of the target architecture. The MAC array is
/// square (16×16 by default); storage and bandwidth defaults are configurable
/// placeholders and are recorded in every output file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareProfile {
    pub macs_per_core: u64,
    pub bytes_per_mac_cycle: u64,
    pub sram_bytes_per_core: u64,
    pub link_bandwidth: u64,
    pub offchip_bandwidth: u64,
    pub sram_activation_reserve: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile {
            macs_per_core: 256,
            bytes_per_mac_cycle: 1,
            sram_bytes_per_core: 4 * 1024 * 1024,
            link_bandwidth: 16,
            offchip_bandwidth: 8,
            sram_activation_reserve: 0.25,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if self.macs_per_core == 0
            || self.bytes_per_mac_cycle == 0
            || self.sram_bytes_per_core == 0
            || self.link_bandwidth == 0
            || self.offchip_bandwidth == 0
        {
            return Err(Error::Validation(
                "hardware profile fields must all be positive".into(),
            ));
        }
        let root = (self.macs_per_core as f64).sqrt().round() as u64;
        if root * root != self.macs_per_core {
            return Err(Error::Validation(format!(
                "macs_per_core must be a perfect square (square MAC array), got {}",
                self.macs_per_core
            )));
        }
        if !(0.0..1.0).contains(&self.sram_activation_reserve) {
            return Err(Error::Validation(format!(
                "sram_activation_reserve must be in [0,1), got {}",
                self.sram_activation_reserve
            )));
        }
        Ok(())
    }

    /// SRAM available for resident weights after the activation reserve.
    pub fn weight_capacity(&self) -> u64 {
        let reserved = (self.sram_bytes_per_core as f64 * self.sram_activation_reserve) as u64;
        self.sram_bytes_per_core - reserved
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

/// One layer of the SNN stack and its shape parameters. Weights are FP16
/// (2 bytes per parameter); spike activations are 1 bit per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub in_channels: u64,
    pub out_channels: u64,
    pub kernel: [u64; 2],
    pub out: [u64; 2],
    #[serde(default = "default_timesteps")]
    pub timesteps: u64,
    /// Residual connection: this layer additionally consumes the output of
    /// the named earlier layer (the membrane add of a skip path).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_from: Option<String>,
}

fn default_timesteps() -> u64 {
    4
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.timesteps == 0 {
            return Err(Error::Validation(format!(
                "layer `{}`: in_channels, out_channels and timesteps must be >= 1",
                self.id
            )));
        }
        if self.kernel[0] == 0 || self.kernel[1] == 0 || self.out[0] == 0 || self.out[1] == 0 {
            return Err(Error::Validation(format!(
                "layer `{}`: kernel and out dimensions must be >= 1",
                self.id
            )));
        }
        Ok(())
    }

    /// FP16 parameter bytes: C·K·kh·kw·2.
    pub fn weight_bytes(&self) -> u64 {
        self.in_channels * self.out_channels * self.kernel[0] * self.kernel[1] * 2
    }

    fn out_elems(&self) -> u64 {
        self.out[0] * self.out[1]
    }
}

/// Model file: an ordered stack of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("model has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if self.layers[..i].iter().any(|l| l.id == layer.id) {
                return Err(Error::Validation(format!(
                    "duplicate layer id `{}`",
                    layer.id
                )));
            }
            if let Some(skip) = &layer.skip_from {
                let found = self.layers[..i].iter().position(|l| &l.id == skip);
                if found.is_none() {
                    return Err(Error::Validation(format!(
                        "layer `{}`: skip_from `{skip}` does not name an earlier layer",
                        layer.id
                    )));
                }
            }
        }
        Ok(())
    }

    fn skip_index(&self, layer_index: usize) -> Option<usize> {
        self.layers[layer_index]
            .skip_from
            .as_ref()
            .and_then(|id| self.layers.iter().position(|l| &l.id == id))
    }
}

/// Load a model spec from JSON, with schema and semantic validation.
pub fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    let model: ModelSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        source: e,
    })?;
    model.validate()?;
    Ok(model)
}

/// Per-layer cost estimate: MAC counts per engine, parameter bytes, and
/// per-timestep activation bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub fp_ops: u64,
    pub bp_ops: u64,
    pub wg_ops: u64,
    pub weight_bytes: u64,
    /// Packed spike bytes per timestep (1 bit/element).
    pub spike_bytes_per_step: u64,
    /// FP16 gradient bytes per timestep.
    pub grad_bytes_per_step: u64,
    /// Engine MACs counted for the requested mode.
    pub total_ops: u64,
    /// Busy cycles on the MAC array for the requested mode.
    pub compute_cycles: u64,
}

/// Deterministic, side-effect-free cost model.
///
/// Forward MACs are T·K·C·kh·kw·oh·ow; the transposed convolution of the
/// backward pass and the outer-product weight gradient have identical MAC
/// counts at this granularity. Training counts all three engines, inference
/// only the forward one.
pub fn estimate_layer_cost(
    layer: &LayerSpec,
    hw: &HardwareProfile,
    mode: Mode,
) -> Result<LayerCost> {
    layer.validate()?;
    hw.validate()?;
    let fp_ops = layer.timesteps
        * layer.out_channels
        * layer.in_channels
        * layer.kernel[0]
        * layer.kernel[1]
        * layer.out_elems();
    let total_ops = match mode {
        Mode::Inference => fp_ops,
        Mode::Training => 3 * fp_ops,
    };
    let compute_cycles = match mode {
        Mode::Inference => fp_ops.div_ceil(hw.macs_per_core),
        Mode::Training => 3 * fp_ops.div_ceil(hw.macs_per_core),
    };
    Ok(LayerCost {
        fp_ops,
        bp_ops: fp_ops,
        wg_ops: fp_ops,
        weight_bytes: layer.weight_bytes(),
        spike_bytes_per_step: spike_bytes(layer.out_channels, layer.out_elems()),
        grad_bytes_per_step: layer.out_channels * layer.out_elems() * 2,
        total_ops,
        compute_cycles,
    })
}

/// Packed spike bytes for `channels` output channels of `elems` spatial
/// elements each: 1 bit per element, rounded up to whole bytes.
fn spike_bytes(channels: u64, elems: u64) -> u64 {
    (channels * elems).div_ceil(8)
}

/// One partition slice: a channel-range block of a layer plus its cost model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub layer_id: String,
    pub layer_index: usize,
    /// Input-channel range `[c0, c1)`.
    pub c_range: [u64; 2],
    /// Output-channel range `[k0, k1)`.
    pub k_range: [u64; 2],
    pub fp_ops: u64,
    pub bp_ops: u64,
    pub wg_ops: u64,
    pub resident_weight_bytes: u64,
    pub overflow_weight_bytes: u64,
    pub est_latency_cycles: u64,
}

impl SliceSpec {
    pub fn k_width(&self) -> u64 {
        self.k_range[1] - self.k_range[0]
    }

    pub fn c_width(&self) -> u64 {
        self.c_range[1] - self.c_range[0]
    }

    pub fn weight_bytes(&self) -> u64 {
        self.resident_weight_bytes + self.overflow_weight_bytes
    }

    /// Busy cycles for the mode: each engine rounds up to whole array passes.
    pub fn compute_cycles(&self, mode: Mode, hw: &HardwareProfile) -> u64 {
        let fp = self.fp_ops.div_ceil(hw.macs_per_core);
        match mode {
            Mode::Inference => fp,
            Mode::Training => {
                fp + self.bp_ops.div_ceil(hw.macs_per_core) + self.wg_ops.div_ceil(hw.macs_per_core)
            }
        }
    }

    /// Compute latency plus off-chip weight streaming for the overflow part.
    pub fn est_latency(&self, mode: Mode, hw: &HardwareProfile) -> u64 {
        self.compute_cycles(mode, hw) + self.overflow_weight_bytes.div_ceil(hw.offchip_bandwidth)
    }

    fn synthetic(fp_ops: u64, bp_ops: u64, wg_ops: u64) -> Self {
        SliceSpec {
            layer_id: "synthetic".into(),
            layer_index: 0,
            c_range: [0, 1],
            k_range: [0, 1],
            fp_ops,
            bp_ops,
            wg_ops,
            resident_weight_bytes: 0,
            overflow_weight_bytes: 0,
            est_latency_cycles: 0,
        }
    }
}

/// Max per-slice latency of `layer` when split into `m` equal parts.
/// Used both by the allocator and as the objective the greedy balances.
fn split_latency(layer: &LayerSpec, m: u64, hw: &HardwareProfile, mode: Mode) -> u64 {
    let (k_width, c_width) = if m <= layer.out_channels {
        (layer.out_channels.div_ceil(m), layer.in_channels)
    } else {
        let per_channel = m.div_ceil(layer.out_channels);
        (1, layer.in_channels.div_ceil(per_channel))
    };
    slice_latency(layer, k_width, c_width, hw, mode)
}

fn slice_latency(
    layer: &LayerSpec,
    k_width: u64,
    c_width: u64,
    hw: &HardwareProfile,
    mode: Mode,
) -> u64 {
    let fp =
        layer.timesteps * k_width * c_width * layer.kernel[0] * layer.kernel[1] * layer.out_elems();
    let engine = fp.div_ceil(hw.macs_per_core);
    let cycles = match mode {
        Mode::Inference => engine,
        Mode::Training => 3 * engine,
    };
    let weights = c_width * k_width * layer.kernel[0] * layer.kernel[1] * 2;
    let overflow = weights.saturating_sub(hw.weight_capacity());
    cycles + overflow.div_ceil(hw.offchip_bandwidth)
}

fn max_slices(layer: &LayerSpec) -> u64 {
    layer.out_channels * layer.in_channels
}

/// Splits the model into exactly `n_cores` slices with balanced per-slice
/// latency (compute plus off-chip weight streaming).
///
/// Allocation: each layer starts with a share proportional to its total cost,
/// repaired one slice at a time toward the layer with the largest (adding) or
/// smallest (removing) per-slice latency. Within a layer, output channels are
/// split into contiguous near-equal ranges; input channels are split only
/// when a layer holds more slices than output channels.
pub fn partition_model(
    model: &ModelSpec,
    hw: &HardwareProfile,
    n_cores: usize,
    mode: Mode,
) -> Result<Vec<SliceSpec>> {
    model.validate()?;
    hw.validate()?;
    let totals: Vec<u64> = model
        .layers
        .iter()
        .map(|l| split_latency(l, 1, hw, mode))
        .collect();
    let per_slice = |layer_idx: usize, m: u64| split_latency(&model.layers[layer_idx], m, hw, mode);
    let mut counts = allocate(model, n_cores, &per_slice, &totals)?;
    refine_ratio(model, &mut counts, &per_slice);
    Ok(materialize_slices(model, &counts, hw, mode))
}

/// The naive comparison baseline: slices allocated in proportion to output
/// channel counts alone, ignoring the cost model. Shares the splitting and
/// cost bookkeeping of [`partition_model`] so latencies are comparable.
pub fn partition_model_uniform_k(
    model: &ModelSpec,
    hw: &HardwareProfile,
    n_cores: usize,
    mode: Mode,
) -> Result<Vec<SliceSpec>> {
    model.validate()?;
    hw.validate()?;
    let totals: Vec<u64> = model.layers.iter().map(|l| l.out_channels).collect();
    // per-slice "latency" proxy is channels per slice; no latency refinement
    let counts = allocate(
        model,
        n_cores,
        &|layer_idx, m| model.layers[layer_idx].out_channels.div_ceil(m),
        &totals,
    )?;
    Ok(materialize_slices(model, &counts, hw, mode))
}

fn allocate(
    model: &ModelSpec,
    n_cores: usize,
    per_slice: &impl Fn(usize, u64) -> u64,
    totals: &[u64],
) -> Result<Vec<u64>> {
    let n_layers = model.layers.len();
    if n_cores < n_layers {
        return Err(Error::Infeasible(format!(
            "{n_cores} cores cannot hold {n_layers} layers (each layer needs at least one slice)"
        )));
    }
    let capacity: u64 = model.layers.iter().map(max_slices).sum();
    if (n_cores as u64) > capacity {
        return Err(Error::Infeasible(format!(
            "{n_cores} cores exceed the {capacity} single-channel slices this model can yield"
        )));
    }
    let sum: u64 = totals.iter().sum();
    let n = n_cores as f64;
    let mut counts: Vec<u64> = totals
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let share = if sum > 0 {
                (n * t as f64 / sum as f64).round() as u64
            } else {
                1
            };
            share.clamp(1, max_slices(&model.layers[i]))
        })
        .collect();
    loop {
        let total: u64 = counts.iter().sum();
        match total.cmp(&(n_cores as u64)) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Greater => {
                let victim = (0..n_layers)
                    .filter(|&i| counts[i] > 1)
                    .min_by_key(|&i| (per_slice(i, counts[i]), i))
                    .ok_or_else(|| Error::Internal("allocation repair underflow".into()))?;
                counts[victim] -= 1;
            }
            std::cmp::Ordering::Less => {
                let target = (0..n_layers)
                    .filter(|&i| counts[i] < max_slices(&model.layers[i]))
                    .max_by_key(|&i| (per_slice(i, counts[i]), std::cmp::Reverse(i)))
                    .ok_or_else(|| Error::Internal("allocation repair overflow".into()))?;
                counts[target] += 1;
            }
        }
    }
    Ok(counts)
}

/// Single-slice exchange descent on the max/min per-slice-latency ratio.
/// The sum repair only fixes the slice-count total; moving one slice from a
/// fast layer to a slow one can still shrink the spread, so exchanges are
/// applied (best first, deterministic tie-break) until none improves.
fn refine_ratio(model: &ModelSpec, counts: &mut [u64], per_slice: &impl Fn(usize, u64) -> u64) {
    let n_layers = counts.len();
    let ratio_of = |lat: &[u64]| {
        let max = *lat.iter().max().unwrap() as f64;
        let min = *lat.iter().min().unwrap() as f64;
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    loop {
        let lat: Vec<u64> = (0..n_layers).map(|i| per_slice(i, counts[i])).collect();
        let current = ratio_of(&lat);
        let mut best: Option<(f64, usize, usize)> = None;
        for donor in 0..n_layers {
            if counts[donor] <= 1 {
                continue;
            }
            for receiver in 0..n_layers {
                if receiver == donor || counts[receiver] >= max_slices(&model.layers[receiver]) {
                    continue;
                }
                let mut trial = lat.clone();
                trial[donor] = per_slice(donor, counts[donor] - 1);
                trial[receiver] = per_slice(receiver, counts[receiver] + 1);
                let r = ratio_of(&trial);
                if r + 1e-12 < current && best.is_none_or(|(b, ..)| r < b) {
                    best = Some((r, donor, receiver));
                }
            }
        }
        match best {
            Some((_, donor, receiver)) => {
                counts[donor] -= 1;
                counts[receiver] += 1;
            }
            None => break,
        }
    }
}

fn materialize_slices(
    model: &ModelSpec,
    counts: &[u64],
    hw: &HardwareProfile,
    mode: Mode,
) -> Vec<SliceSpec> {
    let mut slices = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for (layer_index, layer) in model.layers.iter().enumerate() {
        let m = counts[layer_index];
        for (c_range, k_range) in layer_ranges(layer, m) {
            let k_width = k_range[1] - k_range[0];
            let c_width = c_range[1] - c_range[0];
            let fp = layer.timesteps
                * k_width
                * c_width
                * layer.kernel[0]
                * layer.kernel[1]
                * layer.out_elems();
            let weights = c_width * k_width * layer.kernel[0] * layer.kernel[1] * 2;
            let overflow = weights.saturating_sub(hw.weight_capacity());
            let mut slice = SliceSpec {
                layer_id: layer.id.clone(),
                layer_index,
                c_range,
                k_range,
                fp_ops: fp,
                bp_ops: fp,
                wg_ops: fp,
                resident_weight_bytes: weights - overflow,
                overflow_weight_bytes: overflow,
                est_latency_cycles: 0,
            };
            slice.est_latency_cycles = slice.est_latency(mode, hw);
            slices.push(slice);
        }
    }
    slices
}

/// Contiguous (c_range, k_range) pairs tiling the layer into `m` slices.
fn layer_ranges(layer: &LayerSpec, m: u64) -> Vec<([u64; 2], [u64; 2])> {
    let k = layer.out_channels;
    let c = layer.in_channels;
    if m <= k {
        split_ranges(k, m)
            .into_iter()
            .map(|kr| ([0, c], kr))
            .collect()
    } else {
        // one output channel per k-range; spread the rest along C
        let base = m / k;
        let rem = m % k;
        let mut out = Vec::with_capacity(m as usize);
        for ch in 0..k {
            let parts = base + u64::from(ch < rem);
            for cr in split_ranges(c, parts) {
                out.push((cr, [ch, ch + 1]));
            }
        }
        out
    }
}

/// `total` channels into `parts` contiguous ranges differing by at most one.
fn split_ranges(total: u64, parts: u64) -> Vec<[u64; 2]> {
    let base = total / parts;
    let rem = total % parts;
    let mut out = Vec::with_capacity(parts as usize);
    let mut start = 0;
    for i in 0..parts {
        let width = base + u64::from(i < rem);
        out.push([start, start + width]);
        start += width;
    }
    out
}

/// A logical core: one slice plus its aggregate connectivity features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: usize,
    pub multicast: bool,
    pub degree_in: u32,
    pub degree_out: u32,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub compute_cycles: u64,
    pub slice: SliceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEdge {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
}

impl TaskEdge {
    /// Forward edges carry spikes downstream; ids are topologically ordered
    /// so direction is recoverable from the id comparison.
    pub fn is_forward(&self) -> bool {
        self.src < self.dst
    }
}

/// Weighted task DAG of logical cores (plus gradient back-edges in training
/// mode). The hardware profile used to build it travels with the graph so
/// downstream consumers can recover cycle counts from slice MAC counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub mode: Mode,
    pub hardware: HardwareProfile,
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<TaskEdge>,
}

impl TaskGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_edge_bytes(&self) -> u64 {
        self.edges.iter().map(|e| e.bytes).sum()
    }

    /// Builds a graph from explicit per-node engine MAC counts and weighted
    /// edges. Intended for synthetic workloads in benchmarks and tests.
    pub fn synthetic(
        mode: Mode,
        hw: HardwareProfile,
        node_ops: &[(u64, u64, u64)],
        edges: &[(usize, usize, u64)],
    ) -> Result<TaskGraph> {
        let nodes = node_ops
            .iter()
            .enumerate()
            .map(|(id, &(fp, bp, wg))| {
                let slice = SliceSpec::synthetic(fp, bp, wg);
                let compute_cycles = slice.compute_cycles(mode, &hw);
                TaskNode {
                    id,
                    multicast: false,
                    degree_in: 0,
                    degree_out: 0,
                    bytes_in: 0,
                    bytes_out: 0,
                    compute_cycles,
                    slice,
                }
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(src, dst, bytes)| TaskEdge { src, dst, bytes })
            .collect();
        let mut graph = TaskGraph {
            mode,
            hardware: hw,
            nodes,
            edges,
        };
        graph.recompute_features();
        graph.validate()?;
        Ok(graph)
    }

    fn recompute_features(&mut self) {
        for node in &mut self.nodes {
            node.degree_in = 0;
            node.degree_out = 0;
            node.bytes_in = 0;
            node.bytes_out = 0;
        }
        for edge in &self.edges {
            self.nodes[edge.src].degree_out += 1;
            self.nodes[edge.src].bytes_out += edge.bytes;
            self.nodes[edge.dst].degree_in += 1;
            self.nodes[edge.dst].bytes_in += edge.bytes;
        }
        for node in &mut self.nodes {
            node.multicast = node.degree_out > 1;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hardware.validate()?;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Validation(format!(
                    "node ids must be contiguous, node at position {i} has id {}",
                    node.id
                )));
            }
        }
        let mut deg_in = vec![0u32; self.nodes.len()];
        let mut deg_out = vec![0u32; self.nodes.len()];
        let mut b_in = vec![0u64; self.nodes.len()];
        let mut b_out = vec![0u64; self.nodes.len()];
        for edge in &self.edges {
            if edge.src == edge.dst {
                return Err(Error::Validation(format!("self-edge on node {}", edge.src)));
            }
            if edge.src >= self.nodes.len() || edge.dst >= self.nodes.len() {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) references a missing node",
                    edge.src, edge.dst
                )));
            }
            deg_out[edge.src] += 1;
            b_out[edge.src] += edge.bytes;
            deg_in[edge.dst] += 1;
            b_in[edge.dst] += edge.bytes;
        }
        for node in &self.nodes {
            let consistent = node.degree_in == deg_in[node.id]
                && node.degree_out == deg_out[node.id]
                && node.bytes_in == b_in[node.id]
                && node.bytes_out == b_out[node.id]
                && node.multicast == (node.degree_out > 1);
            if !consistent {
                return Err(Error::Validation(format!(
                    "node {} features are inconsistent with the edge list",
                    node.id
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Internal(format!("taskgraph serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TaskGraph> {
        let text = std::fs::read_to_string(path)?;
        let graph: TaskGraph = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
        graph.validate()?;
        Ok(graph)
    }
}

/// Assembles the weighted task DAG from partition slices.
///
/// Every slice of a layer feeds every slice of the next layer with the
/// producer's packed spike output for all timesteps (each consumer needs the
/// full input feature map). Skip connections add the same fan-out from the
/// skipped-from layer. Training adds one gradient back-edge per forward edge,
/// carrying FP16 gradients for the producer's output-channel share; the
/// backward pass reads its input spikes from the consumer's forward-pass
/// cache, so they add no traffic.
pub fn build_taskgraph(
    slices: &[SliceSpec],
    model: &ModelSpec,
    hw: &HardwareProfile,
    mode: Mode,
) -> Result<TaskGraph> {
    model.validate()?;
    if slices.is_empty() {
        return Err(Error::Validation("no slices to build a graph from".into()));
    }
    let n_layers = model.layers.len();
    let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); n_layers];
    for (i, s) in slices.iter().enumerate() {
        if s.layer_index >= n_layers {
            return Err(Error::Validation(format!(
                "slice {i} references layer index {} beyond the model",
                s.layer_index
            )));
        }
        by_layer[s.layer_index].push(i);
    }
    if by_layer.iter().any(Vec::is_empty) {
        return Err(Error::Validation(
            "every layer must contribute at least one slice".into(),
        ));
    }

    let mut forward: Vec<TaskEdge> = Vec::new();
    let push_fanout =
        |producer_layer: usize, consumer_layer: usize, forward: &mut Vec<TaskEdge>| {
            let src_layer = &model.layers[producer_layer];
            for &p in &by_layer[producer_layer] {
                let bytes =
                    src_layer.timesteps * spike_bytes(slices[p].k_width(), src_layer.out_elems());
                for &c in &by_layer[consumer_layer] {
                    forward.push(TaskEdge {
                        src: p,
                        dst: c,
                        bytes,
                    });
                }
            }
        };
    for consumer in 1..n_layers {
        push_fanout(consumer - 1, consumer, &mut forward);
        if let Some(skip) = model.skip_index(consumer) {
            push_fanout(skip, consumer, &mut forward);
        }
    }

    let mut edges = forward.clone();
    if mode == Mode::Training {
        for e in &forward {
            let src_layer = &model.layers[slices[e.src].layer_index];
            let bytes = src_layer.timesteps * slices[e.src].k_width() * src_layer.out_elems() * 2;
            edges.push(TaskEdge {
                src: e.dst,
                dst: e.src,
                bytes,
            });
        }
    }

    let nodes = slices
        .iter()
        .enumerate()
        .map(|(id, slice)| TaskNode {
            id,
            multicast: false,
            degree_in: 0,
            degree_out: 0,
            bytes_in: 0,
            bytes_out: 0,
            compute_cycles: slice.compute_cycles(mode, hw),
            slice: slice.clone(),
        })
        .collect();
    let mut graph = TaskGraph {
        mode,
        hardware: *hw,
        nodes,
        edges,
    };
    graph.recompute_features();
    graph.validate()?;
    Ok(graph)
}

/// Test/bench fixture helpers.
pub mod test_support {
    use super::*;

    /// Zero-compute inference graph with the given weighted edges.
    pub fn graph_from_edges(n: usize, edges: &[(usize, usize, u64)]) -> TaskGraph {
        TaskGraph::synthetic(
            Mode::Inference,
            HardwareProfile::default(),
            &vec![(0, 0, 0); n],
            edges,
        )
        .expect("valid synthetic graph")
    }
}
