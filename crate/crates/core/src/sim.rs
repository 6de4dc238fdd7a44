//! Deterministic packet-level NoC simulator and pipeline scheduler.
//!
//! Work is modeled as (node, sample, phase, tile) units. Layer-wise
//! pipelining is the single-tile case: a node starts a sample only after all
//! inbound edges for it fully arrive. Fine-grained pipelining splits every
//! unit of work and every edge into `ceil(1/f)` tiles: a node runs tile t
//! once fraction (t+1)·f of each inbound edge has arrived, and emits its own
//! outputs tile by tile.
//!
//! Traffic travels the fixed clockwise-routing paths as store-and-forward
//! chunks; each output port serves one chunk at a time from a FIFO ordered
//! by (enqueue time, source node id). Training graphs run the forward pass
//! and the gradient back-traffic on one timeline per sample, with
//! weight-gradient compute appended to each node's busy time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{route, Mesh, Placement};
use crate::taskgraph::{Mode, TaskGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Layerwise,
    Fpdeep,
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineMode::Layerwise => write!(f, "layerwise"),
            PipelineMode::Fpdeep => write!(f, "fpdeep"),
        }
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layerwise" => Ok(PipelineMode::Layerwise),
            "fpdeep" => Ok(PipelineMode::Fpdeep),
            other => Err(Error::Validation(format!(
                "unknown pipeline `{other}`, expected layerwise|fpdeep"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub link_bandwidth: u64,
    pub pipeline: PipelineMode,
    pub mode: Mode,
    pub batch_size: u32,
    /// Fine-grained tile fraction; a node starts once this fraction of each
    /// inbound edge has arrived. Ignored in layerwise mode.
    pub tile_fraction: f64,
    /// Store-and-forward chunk size on the wire.
    pub chunk_bytes: u64,
}

impl SimConfig {
    pub fn new(mode: Mode, pipeline: PipelineMode) -> Self {
        SimConfig {
            link_bandwidth: 16,
            pipeline,
            mode,
            batch_size: 8,
            tile_fraction: 1.0 / 16.0,
            chunk_bytes: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.link_bandwidth == 0 || self.chunk_bytes == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "link_bandwidth, chunk_bytes and batch_size must be positive".into(),
            ));
        }
        if !(self.tile_fraction > 0.0 && self.tile_fraction <= 1.0) {
            return Err(Error::Validation(format!(
                "tile_fraction must be in (0,1], got {}",
                self.tile_fraction
            )));
        }
        if self.tiles() > 4096 {
            return Err(Error::Validation(
                "tile_fraction below 1/4096 is not supported".into(),
            ));
        }
        Ok(())
    }

    fn tiles(&self) -> u64 {
        match self.pipeline {
            PipelineMode::Layerwise => 1,
            PipelineMode::Fpdeep => (1.0 / self.tile_fraction).ceil() as u64,
        }
    }
}

/// One contiguous busy stretch of a node's compute engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusyInterval {
    pub node: u32,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub makespan: u64,
    /// Samples per thousand cycles.
    pub throughput_kcycles: f64,
    /// Bytes forwarded by each core over the whole run (row-major grid).
    pub heatmap: Vec<u64>,
    /// Per-core outgoing bytes through [N, E, S, W] ports.
    pub directional: Vec<[u64; 4]>,
    /// Peak queued bytes per directed link (core*4 + dir).
    pub peak_link_queue_bytes: Vec<u64>,
    pub busy: Vec<BusyInterval>,
    pub total_busy_cycles: u64,
    /// total_busy / (makespan × mesh cells).
    pub mean_utilization: f64,
    pub batch_size: u32,
    pub pipeline: PipelineMode,
    pub mode: Mode,
}

/// Busy-core fraction per time bucket, over [0, makespan).
pub fn utilization_waveform(result: &SimResult, bucket: u64, cells: usize) -> Vec<(u64, f64)> {
    assert!(bucket > 0, "bucket must be positive");
    if result.makespan == 0 {
        return Vec::new();
    }
    let buckets = result.makespan.div_ceil(bucket) as usize;
    let mut busy = vec![0u64; buckets];
    for iv in &result.busy {
        let mut t = iv.start;
        while t < iv.end {
            let b = (t / bucket) as usize;
            let bucket_end = ((b as u64) + 1) * bucket;
            let span = iv.end.min(bucket_end) - t;
            busy[b] += span;
            t += span;
        }
    }
    busy.iter()
        .enumerate()
        .map(|(b, &cycles)| {
            let start = b as u64 * bucket;
            let width = bucket.min(result.makespan - start);
            (start, cycles as f64 / (width as f64 * cells as f64))
        })
        .collect()
}

/// Writes the utilization waveform as CSV.
pub fn write_waveform_csv<W: std::io::Write>(
    result: &SimResult,
    bucket: u64,
    cells: usize,
    mut out: W,
) -> Result<()> {
    writeln!(out, "cycle,busy_fraction")?;
    for (t, frac) in utilization_waveform(result, bucket, cells) {
        writeln!(out, "{t},{frac}")?;
    }
    Ok(())
}

const PHASE_FP: u8 = 0;
const PHASE_BP: u8 = 1;

/// Total order over pending events. (rank, id) identifies the event: rank 0
/// is a hop completion on link `id`, rank 1 a compute completion on node
/// `id`. At most one of each can be pending, so keys are unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EventKey {
    time: u64,
    rank: u8,
    id: u32,
}

#[derive(Debug, Clone, Copy)]
struct Chunk {
    edge: u32,
    sample: u16,
    tile: u16,
    hop_idx: u16,
    src_node: u32,
    size: u64,
}

#[derive(Debug)]
struct Run {
    src_node: u32,
    edge: u32,
    sample: u16,
    tile: u16,
    hop_idx: u16,
    bytes: u64,
}

#[derive(Debug, Default)]
struct Link {
    queue: VecDeque<Run>,
    in_flight: Option<Chunk>,
    queued_bytes: u64,
    peak_queued_bytes: u64,
}

struct EdgeInfo {
    src: u32,
    dst: u32,
    bytes: u64,
    phase: u8,
    /// Link ids along the route; empty when the endpoints share a core.
    links: Vec<u32>,
}

struct NodeState {
    busy: bool,
    eligible: BTreeSet<(u16, u8, u16)>, // (sample, phase, tile)
    current: Option<(u16, u8, u16)>,
}

struct Engine {
    cfg: SimConfig,
    tiles: u64,
    batch: u16,
    phases: u8,
    edges: Vec<EdgeInfo>,
    out_edges: Vec<Vec<u32>>, // per node*phase
    phase_cycles: Vec<u64>,   // per node*phase
    // per edge*sample
    delivered_bytes: Vec<u64>,
    delivered_tiles: Vec<u16>,
    emitted_tiles: Vec<u16>,
    injected_bytes: Vec<u64>,
    missing: Vec<u32>, // per unit
    nodes: Vec<NodeState>,
    links: Vec<Link>,
    directional: Vec<[u64; 4]>,
    heap: BinaryHeap<Reverse<EventKey>>,
    pending: BTreeMap<u32, Vec<Run>>,
    kick_links: BTreeSet<u32>,
    kick_nodes: BTreeSet<u32>,
    busy_log: Vec<BusyInterval>,
    makespan: u64,
}

impl Engine {
    fn unit_index(&self, node: u32, phase: u8, sample: u16, tile: u16) -> usize {
        (((node as usize * self.phases as usize + phase as usize) * self.batch as usize)
            + sample as usize)
            * self.tiles as usize
            + tile as usize
    }

    fn np_index(&self, node: u32, phase: u8) -> usize {
        node as usize * self.phases as usize + phase as usize
    }

    fn es_index(&self, edge: u32, sample: u16) -> usize {
        edge as usize * self.batch as usize + sample as usize
    }

    fn tile_span(total: u64, tiles: u64, t: u64) -> u64 {
        total * (t + 1) / tiles - total * t / tiles
    }

    fn cum_bytes(total: u64, tiles: u64, upto: u64) -> u64 {
        total * upto / tiles
    }

    fn satisfy(&mut self, node: u32, phase: u8, sample: u16, tile: u16) {
        let idx = self.unit_index(node, phase, sample, tile);
        debug_assert!(self.missing[idx] > 0);
        self.missing[idx] -= 1;
        if self.missing[idx] == 0 {
            self.nodes[node as usize]
                .eligible
                .insert((sample, phase, tile));
            self.kick_nodes.insert(node);
        }
    }

    /// Marks tiles delivered while both emitted and fully arrived, feeding
    /// consumer units in order.
    fn try_advance(&mut self, edge: u32, sample: u16) {
        let es = self.es_index(edge, sample);
        let total = self.edges[edge as usize].bytes;
        let dst = self.edges[edge as usize].dst;
        let phase = self.edges[edge as usize].phase;
        while self.delivered_tiles[es] < self.emitted_tiles[es] {
            let next = self.delivered_tiles[es] as u64 + 1;
            if self.delivered_bytes[es] < Self::cum_bytes(total, self.tiles, next) {
                break;
            }
            let tile = self.delivered_tiles[es];
            self.delivered_tiles[es] += 1;
            self.satisfy(dst, phase, sample, tile);
        }
    }

    fn emit(&mut self, edge: u32, sample: u16, tile: u16) {
        let es = self.es_index(edge, sample);
        debug_assert_eq!(self.emitted_tiles[es], tile);
        self.emitted_tiles[es] += 1;
        let total = self.edges[edge as usize].bytes;
        let span = Self::tile_span(total, self.tiles, tile as u64);
        self.injected_bytes[es] += span;
        if self.edges[edge as usize].links.is_empty() {
            // zero-hop edge: the router's local ports deliver instantly
            self.delivered_bytes[es] += span;
            self.try_advance(edge, sample);
        } else if span == 0 {
            self.try_advance(edge, sample);
        } else {
            let first = self.edges[edge as usize].links[0];
            self.pending.entry(first).or_default().push(Run {
                src_node: self.edges[edge as usize].src,
                edge,
                sample,
                tile,
                hop_idx: 0,
                bytes: span,
            });
        }
    }

    fn on_hop_done(&mut self, link_id: u32) {
        let chunk = self.links[link_id as usize]
            .in_flight
            .take()
            .expect("hop completion without an in-flight chunk");
        let core = (link_id / 4) as usize;
        let dir = (link_id % 4) as usize;
        self.directional[core][dir] += chunk.size;
        self.kick_links.insert(link_id);
        let links = &self.edges[chunk.edge as usize].links;
        let next_hop = chunk.hop_idx as usize + 1;
        if next_hop == links.len() {
            let es = self.es_index(chunk.edge, chunk.sample);
            self.delivered_bytes[es] += chunk.size;
            self.try_advance(chunk.edge, chunk.sample);
        } else {
            let next_link = links[next_hop];
            self.pending.entry(next_link).or_default().push(Run {
                src_node: chunk.src_node,
                edge: chunk.edge,
                sample: chunk.sample,
                tile: chunk.tile,
                hop_idx: next_hop as u16,
                bytes: chunk.size,
            });
        }
    }

    fn on_compute_done(&mut self, node: u32, now: u64) {
        let (sample, phase, tile) = self.nodes[node as usize]
            .current
            .take()
            .expect("compute completion on an idle node");
        self.nodes[node as usize].busy = false;
        self.kick_nodes.insert(node);
        self.makespan = self.makespan.max(now);
        // open the gate of the next unit in this stream, or of the backward
        // stream once the forward pass of this sample is complete
        if (tile as u64) + 1 < self.tiles {
            self.satisfy(node, phase, sample, tile + 1);
        } else if phase == PHASE_FP && self.phases == 2 {
            self.satisfy(node, PHASE_BP, sample, 0);
        }
        let out = self.out_edges[self.np_index(node, phase)].clone();
        for edge in out {
            self.emit(edge, sample, tile);
        }
    }

    /// Appends same-instant arrivals in (source node, edge, sample, tile)
    /// order, merging trickle-through chunks back into the tail run they
    /// continue.
    fn flush_pending(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for (link_id, mut runs) in pending {
            runs.sort_by_key(|r| (r.src_node, r.edge, r.sample, r.tile));
            let link = &mut self.links[link_id as usize];
            for run in runs {
                link.queued_bytes += run.bytes;
                match link.queue.back_mut() {
                    Some(tail)
                        if tail.edge == run.edge
                            && tail.sample == run.sample
                            && tail.tile == run.tile
                            && tail.hop_idx == run.hop_idx =>
                    {
                        tail.bytes += run.bytes;
                    }
                    _ => link.queue.push_back(run),
                }
            }
            link.peak_queued_bytes = link.peak_queued_bytes.max(link.queued_bytes);
            self.kick_links.insert(link_id);
        }
    }

    /// Starts idle links and nodes, in id order, after all state changes of
    /// the current instant have landed.
    fn kick(&mut self, now: u64) {
        self.flush_pending();
        let links = std::mem::take(&mut self.kick_links);
        for link_id in links {
            let link = &mut self.links[link_id as usize];
            if link.in_flight.is_some() {
                continue;
            }
            let Some(head) = link.queue.front_mut() else {
                continue;
            };
            let size = self.cfg.chunk_bytes.min(head.bytes);
            head.bytes -= size;
            let chunk = Chunk {
                edge: head.edge,
                sample: head.sample,
                tile: head.tile,
                hop_idx: head.hop_idx,
                src_node: head.src_node,
                size,
            };
            if head.bytes == 0 {
                link.queue.pop_front();
            }
            link.queued_bytes -= size;
            link.in_flight = Some(chunk);
            let duration = size.div_ceil(self.cfg.link_bandwidth);
            self.heap.push(Reverse(EventKey {
                time: now + duration,
                rank: 0,
                id: link_id,
            }));
        }
        let nodes = std::mem::take(&mut self.kick_nodes);
        for node in nodes {
            let state = &mut self.nodes[node as usize];
            if state.busy {
                continue;
            }
            let Some(&unit) = state.eligible.iter().next() else {
                continue;
            };
            state.eligible.remove(&unit);
            state.busy = true;
            state.current = Some(unit);
            let (_sample, phase, tile) = unit;
            let total = self.phase_cycles[self.np_index(node, phase)];
            let duration = Self::tile_span(total, self.tiles, tile as u64);
            if duration > 0 {
                self.busy_log.push(BusyInterval {
                    node,
                    start: now,
                    end: now + duration,
                });
            }
            self.heap.push(Reverse(EventKey {
                time: now + duration,
                rank: 1,
                id: node,
            }));
        }
    }

    fn run(&mut self) -> Result<()> {
        for node in 0..self.nodes.len() as u32 {
            self.kick_nodes.insert(node);
        }
        self.kick(0);
        while let Some(&Reverse(head)) = self.heap.peek() {
            let now = head.time;
            loop {
                while let Some(&Reverse(key)) = self.heap.peek() {
                    if key.time != now {
                        break;
                    }
                    self.heap.pop();
                    match key.rank {
                        0 => self.on_hop_done(key.id),
                        _ => self.on_compute_done(key.id, now),
                    }
                }
                self.kick(now);
                match self.heap.peek() {
                    Some(Reverse(k)) if k.time == now => continue,
                    _ => break,
                }
            }
        }
        for edge in 0..self.edges.len() as u32 {
            for sample in 0..self.batch {
                let es = self.es_index(edge, sample);
                if self.delivered_bytes[es] != self.edges[edge as usize].bytes
                    || self.injected_bytes[es] != self.edges[edge as usize].bytes
                {
                    return Err(Error::Internal(format!(
                        "flow conservation violated on edge {edge} sample {sample}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Runs the discrete-event simulation of the placed graph.
pub fn simulate(
    graph: &TaskGraph,
    placement: &Placement,
    mesh: &Mesh,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    graph.validate()?;
    if graph.is_empty() {
        return Err(Error::Validation("cannot simulate an empty graph".into()));
    }
    if cfg.mode != graph.mode {
        return Err(Error::Validation(format!(
            "config mode {} does not match graph mode {}",
            cfg.mode, graph.mode
        )));
    }
    if graph.mode == Mode::Inference {
        if let Some(e) = graph.edges.iter().find(|e| !e.is_forward()) {
            return Err(Error::Validation(format!(
                "inference graph carries gradient edge ({}, {}); simulate it as training",
                e.src, e.dst
            )));
        }
    }
    for node in 0..graph.len() {
        let c = placement.coord_of(node).ok_or(Error::UnplacedNode(node))?;
        if !mesh.contains(c) {
            return Err(Error::Validation(format!(
                "node {node} placed outside the {}x{} mesh",
                mesh.width, mesh.height
            )));
        }
    }

    let tiles = cfg.tiles();
    let batch = cfg.batch_size as u16;
    let phases: u8 = match graph.mode {
        Mode::Inference => 1,
        Mode::Training => 2,
    };
    let n = graph.len();
    let hw = &graph.hardware;

    let edges: Vec<EdgeInfo> = graph
        .edges
        .iter()
        .map(|e| {
            let a = placement.coord_of(e.src).unwrap();
            let b = placement.coord_of(e.dst).unwrap();
            let mut links = Vec::new();
            let mut cur = a;
            for dir in route(mesh, a, b).hops {
                links.push((mesh.index(cur) as u32) * 4 + dir.index() as u32);
                cur = dir.step(cur);
            }
            EdgeInfo {
                src: e.src as u32,
                dst: e.dst as u32,
                bytes: e.bytes,
                phase: if e.is_forward() { PHASE_FP } else { PHASE_BP },
                links,
            }
        })
        .collect();

    let mut in_edge_count = vec![0u32; n * phases as usize];
    let mut out_edges: Vec<Vec<u32>> = vec![Vec::new(); n * phases as usize];
    for (i, e) in edges.iter().enumerate() {
        in_edge_count[e.dst as usize * phases as usize + e.phase as usize] += 1;
        out_edges[e.src as usize * phases as usize + e.phase as usize].push(i as u32);
    }

    let mut phase_cycles: Vec<u64> = Vec::with_capacity(n * phases as usize);
    for node in &graph.nodes {
        phase_cycles.push(node.slice.fp_ops.div_ceil(hw.macs_per_core));
        if phases == 2 {
            phase_cycles.push(
                node.slice.bp_ops.div_ceil(hw.macs_per_core)
                    + node.slice.wg_ops.div_ceil(hw.macs_per_core),
            );
        }
    }

    let units = n * phases as usize * batch as usize * tiles as usize;
    let link_count = mesh.cells() * 4;
    let mut engine = Engine {
        cfg: *cfg,
        tiles,
        batch,
        phases,
        edges,
        out_edges,
        phase_cycles,
        delivered_bytes: vec![0; graph.edges.len() * batch as usize],
        delivered_tiles: vec![0; graph.edges.len() * batch as usize],
        emitted_tiles: vec![0; graph.edges.len() * batch as usize],
        injected_bytes: vec![0; graph.edges.len() * batch as usize],
        missing: vec![0; units],
        nodes: (0..n)
            .map(|_| NodeState {
                busy: false,
                eligible: BTreeSet::new(),
                current: None,
            })
            .collect(),
        links: (0..link_count).map(|_| Link::default()).collect(),
        directional: vec![[0; 4]; mesh.cells()],
        heap: BinaryHeap::new(),
        pending: BTreeMap::new(),
        kick_links: BTreeSet::new(),
        kick_nodes: BTreeSet::new(),
        busy_log: Vec::new(),
        makespan: 0,
    };

    for node in 0..n as u32 {
        for phase in 0..phases {
            let inputs = in_edge_count[node as usize * phases as usize + phase as usize];
            for sample in 0..batch {
                for tile in 0..tiles as u16 {
                    let idx = engine.unit_index(node, phase, sample, tile);
                    // one requirement per inbound edge of this phase, plus a
                    // gate on the previous stream unit (the completed forward
                    // pass, for the first backward tile)
                    let gate = if tile > 0 || phase == PHASE_BP { 1 } else { 0 };
                    engine.missing[idx] = inputs + gate;
                    if engine.missing[idx] == 0 {
                        engine.nodes[node as usize]
                            .eligible
                            .insert((sample, phase, tile));
                    }
                }
            }
        }
    }

    engine.run()?;

    let makespan = engine.makespan;
    if makespan == 0 {
        return Err(Error::Validation(
            "graph produced an empty schedule (no compute, no traffic)".into(),
        ));
    }
    // merge back-to-back intervals per node for compact waveforms
    let mut by_node: Vec<Vec<BusyInterval>> = vec![Vec::new(); n];
    for iv in engine.busy_log {
        let list = &mut by_node[iv.node as usize];
        match list.last_mut() {
            Some(last) if last.end == iv.start => last.end = iv.end,
            _ => list.push(iv),
        }
    }
    let busy: Vec<BusyInterval> = by_node.into_iter().flatten().collect();
    let total_busy_cycles: u64 = busy.iter().map(|iv| iv.end - iv.start).sum();
    let heatmap: Vec<u64> = engine.directional.iter().map(|d| d.iter().sum()).collect();
    Ok(SimResult {
        makespan,
        throughput_kcycles: cfg.batch_size as f64 * 1000.0 / makespan as f64,
        heatmap,
        directional: engine.directional,
        peak_link_queue_bytes: engine.links.iter().map(|l| l.peak_queued_bytes).collect(),
        busy,
        total_busy_cycles,
        mean_utilization: total_busy_cycles as f64 / (makespan as f64 * mesh.cells() as f64),
        batch_size: cfg.batch_size,
        pipeline: cfg.pipeline,
        mode: graph.mode,
    })
}
