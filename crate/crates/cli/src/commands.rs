//! The five subcommands. Every one writes its artifacts plus a manifest into
//! `--out`, and all randomness is governed by `--seed`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use coremap_core::mesh::{
    communication_cost, directional_loads, hop_histogram, write_heatmap_csv, Mesh, Placement,
};
use coremap_core::placement::{
    place_oracle, place_random_search, place_snake, place_zigzag, EngineConfig, EngineKind,
};
use coremap_core::rl::{
    train as rl_train, write_reward_curve, Checkpoint, OptimizerKind, TrainConfig,
};
use coremap_core::sim::{simulate as run_sim, write_waveform_csv, PipelineMode, SimConfig};
use coremap_core::taskgraph::{
    build_taskgraph, load_model_spec, partition_model, HardwareProfile, Mode, TaskGraph,
};

use crate::manifest::RunManifest;
use crate::{parse_mesh, CliError, PartitionArgs, PlaceArgs, SimulateArgs, TrainArgs};

/// Environment variable naming a JSON file with default hardware-profile
/// fields; explicit flags still win.
pub const HW_PROFILE_ENV: &str = "COREMAP_HW_PROFILE";

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::validation(format!("cannot create {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("serialization: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn resolve_hardware(args: &crate::HwArgs) -> Result<HardwareProfile, CliError> {
    let mut hw = match std::env::var_os(HW_PROFILE_ENV) {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::validation(format!(
                    "{HW_PROFILE_ENV} points at {}: {e}",
                    path.display()
                ))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::validation(format!("{}: bad hardware profile: {e}", path.display()))
            })?
        }
        None => HardwareProfile::default(),
    };
    if let Some(v) = args.macs_per_core {
        hw.macs_per_core = v;
    }
    if let Some(v) = args.sram_bytes {
        hw.sram_bytes_per_core = v;
    }
    if let Some(v) = args.link_bandwidth {
        hw.link_bandwidth = v;
    }
    if let Some(v) = args.offchip_bandwidth {
        hw.offchip_bandwidth = v;
    }
    if let Some(v) = args.sram_reserve {
        hw.sram_activation_reserve = v;
    }
    hw.validate()?;
    Ok(hw)
}

pub fn partition(args: PartitionArgs) -> Result<(), CliError> {
    let mode: Mode = args
        .mode
        .parse()
        .map_err(|e: coremap_core::Error| CliError::usage(e.to_string()))?;
    let hw = resolve_hardware(&args.hw)?;
    let mut model = load_model_spec(&args.model)?;
    if let Some(t) = args.timesteps {
        for layer in &mut model.layers {
            layer.timesteps = t;
        }
    }
    let slices = partition_model(&model, &hw, args.cores, mode)?;
    let graph = build_taskgraph(&slices, &model, &hw, mode)?;

    ensure_out_dir(&args.out)?;
    graph.save(&args.out.join("taskgraph.json"))?;
    let manifest = RunManifest::new(
        "partition",
        json!({
            "model": args.model.display().to_string(),
            "cores": args.cores,
            "mode": mode.to_string(),
            "timesteps_override": args.timesteps,
            "hardware": hw,
        }),
        std::slice::from_ref(&args.model),
    )?;
    manifest.write(&args.out)?;
    println!(
        "partitioned {} layers into {} slices ({} edges, {} total bytes)",
        model.layers.len(),
        graph.len(),
        graph.edges.len(),
        graph.total_edge_bytes()
    );
    Ok(())
}

/// Placement quality metrics shared by `place` and `train` outputs.
#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub engine: String,
    pub seed: u64,
    pub mesh: [u32; 2],
    pub mode: String,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub communication_cost: u64,
    pub zigzag_cost: u64,
    pub reduction_vs_zigzag_pct: f64,
    pub mean_hops_per_edge: f64,
    pub mean_hops_per_byte: f64,
    pub hop_histogram: std::collections::BTreeMap<u32, u64>,
    pub max_core_forwarded_bytes: u64,
}

pub fn placement_metrics(
    engine: &str,
    seed: u64,
    graph: &TaskGraph,
    placement: &Placement,
    mesh: &Mesh,
) -> Result<MetricsReport, CliError> {
    let cost = communication_cost(graph, placement)?;
    let zigzag_cost = communication_cost(graph, &place_zigzag(graph, mesh)?)?;
    let hist = hop_histogram(graph, placement)?;
    let loads = directional_loads(graph, placement, mesh)?;
    let max_core = loads.iter().map(|l| l.total()).max().unwrap_or(0);
    Ok(MetricsReport {
        engine: engine.to_string(),
        seed,
        mesh: [mesh.width, mesh.height],
        mode: graph.mode.to_string(),
        graph_nodes: graph.len(),
        graph_edges: graph.edges.len(),
        communication_cost: cost,
        zigzag_cost,
        reduction_vs_zigzag_pct: if zigzag_cost > 0 {
            100.0 * (zigzag_cost as f64 - cost as f64) / zigzag_cost as f64
        } else {
            0.0
        },
        mean_hops_per_edge: hist.mean_hops_per_edge,
        mean_hops_per_byte: hist.mean_hops_per_byte,
        hop_histogram: hist.counts,
        max_core_forwarded_bytes: max_core,
    })
}

pub fn place(args: PlaceArgs) -> Result<(), CliError> {
    let engine: EngineKind = args
        .engine
        .parse()
        .map_err(|e: coremap_core::Error| CliError::usage(e.to_string()))?;
    let mesh = parse_mesh(&args.mesh)?;
    let graph = TaskGraph::load(&args.graph)?;
    let config = EngineConfig {
        engine,
        seed: args.seed,
        iterations: args.iters,
    };
    let (placement, trace) = match engine {
        EngineKind::Zigzag => (place_zigzag(&graph, &mesh)?, None),
        EngineKind::Snake => (place_snake(&graph, &mesh)?, None),
        EngineKind::Oracle => (place_oracle(&graph, &mesh)?, None),
        EngineKind::Random => {
            let (p, trace) = place_random_search(&graph, &mesh, &config)?;
            (p, Some(trace))
        }
    };

    ensure_out_dir(&args.out)?;
    placement.save(&args.out.join("placement.json"))?;
    let metrics = placement_metrics(&engine.to_string(), args.seed, &graph, &placement, &mesh)?;
    write_json(&args.out.join("metrics.json"), &metrics)?;
    let loads = directional_loads(&graph, &placement, &mesh)?;
    let totals: Vec<u64> = loads.iter().map(|l| l.total()).collect();
    let mut heatmap = Vec::new();
    write_heatmap_csv(&mesh, &totals, &mut heatmap)?;
    std::fs::write(args.out.join("heatmap.csv"), heatmap)
        .map_err(|e| CliError::validation(format!("cannot write heatmap: {e}")))?;
    if let Some(trace) = trace {
        let mut csv = String::from("iteration,best_cost\n");
        for (i, c) in trace.iter().enumerate() {
            csv.push_str(&format!("{i},{c}\n"));
        }
        std::fs::write(args.out.join("search_trace.csv"), csv)
            .map_err(|e| CliError::validation(format!("cannot write trace: {e}")))?;
    }
    let manifest = RunManifest::new(
        "place",
        json!({
            "graph": args.graph.display().to_string(),
            "mesh": [mesh.width, mesh.height],
            "engine": engine.to_string(),
            "seed": args.seed,
            "iterations": args.iters,
        }),
        std::slice::from_ref(&args.graph),
    )?;
    manifest.write(&args.out)?;
    println!(
        "{engine}: cost {} ({:+.2}% vs zigzag)",
        metrics.communication_cost, -metrics.reduction_vs_zigzag_pct
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mesh = parse_mesh(&args.mesh)?;
    let graph = TaskGraph::load(&args.graph)?;
    let optimizer = match args.optimizer.as_str() {
        "sgd" => OptimizerKind::Sgd,
        "adam" => OptimizerKind::Adam,
        other => {
            return Err(CliError::usage(format!(
                "unknown optimizer `{other}`, expected sgd|adam"
            )))
        }
    };
    let cfg = TrainConfig {
        embed_dim: args.embed,
        hidden_dim: args.hidden,
        clip_epsilon: args.clip_epsilon,
        batch_size: args.batch,
        learning_rate: args.lr,
        ppo_epochs: args.ppo_epochs,
        grad_clip: args.grad_clip,
        episodes: args.episodes,
        sigma_min: args.sigma_min,
        seed: args.seed,
        optimizer,
        pretrain_encoder: args.pretrain_encoder,
    };
    let result = rl_train(&graph, &mesh, &cfg)?;
    if result.fallback {
        eprintln!("warning: episode budget is 0; emitting the zigzag baseline placement");
    }

    ensure_out_dir(&args.out)?;
    result
        .best_placement
        .save(&args.out.join("placement.json"))?;
    Checkpoint::from_result(&result).save(&args.out.join("checkpoint.json"))?;
    let mut curve = Vec::new();
    write_reward_curve(&result.curve, &mut curve)?;
    std::fs::write(args.out.join("reward_curve.csv"), curve)
        .map_err(|e| CliError::validation(format!("cannot write reward curve: {e}")))?;
    let metrics = placement_metrics("rl", args.seed, &graph, &result.best_placement, &mesh)?;
    write_json(&args.out.join("metrics.json"), &metrics)?;
    let manifest = RunManifest::new(
        "train",
        json!({
            "graph": args.graph.display().to_string(),
            "mesh": [mesh.width, mesh.height],
            "train": cfg,
        }),
        std::slice::from_ref(&args.graph),
    )?;
    manifest.write(&args.out)?;
    println!(
        "rl best cost {} vs zigzag {} ({:.2}% reduction) over {} episodes",
        result.best_cost, result.baseline_cost, metrics.reduction_vs_zigzag_pct, cfg.episodes
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimSummary {
    mode: String,
    pipeline: String,
    batch_size: u32,
    link_bandwidth: u64,
    tile_fraction: f64,
    chunk_bytes: u64,
    makespan: u64,
    throughput_kcycles: f64,
    mean_utilization: f64,
    total_busy_cycles: u64,
    max_core_forwarded_bytes: u64,
    max_link_queue_bytes: u64,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let pipeline: PipelineMode = args
        .pipeline
        .parse()
        .map_err(|e: coremap_core::Error| CliError::usage(e.to_string()))?;
    let graph = TaskGraph::load(&args.graph)?;
    let placement = Placement::load(&args.placement)?;
    let mesh = placement.mesh;
    let cfg = SimConfig {
        link_bandwidth: args.bandwidth,
        pipeline,
        mode: graph.mode,
        batch_size: args.batch,
        tile_fraction: args.tile_fraction,
        chunk_bytes: args.chunk_bytes,
    };
    let result = run_sim(&graph, &placement, &mesh, &cfg)?;

    ensure_out_dir(&args.out)?;
    let summary = SimSummary {
        mode: graph.mode.to_string(),
        pipeline: pipeline.to_string(),
        batch_size: cfg.batch_size,
        link_bandwidth: cfg.link_bandwidth,
        tile_fraction: cfg.tile_fraction,
        chunk_bytes: cfg.chunk_bytes,
        makespan: result.makespan,
        throughput_kcycles: result.throughput_kcycles,
        mean_utilization: result.mean_utilization,
        total_busy_cycles: result.total_busy_cycles,
        max_core_forwarded_bytes: result.heatmap.iter().copied().max().unwrap_or(0),
        max_link_queue_bytes: result
            .peak_link_queue_bytes
            .iter()
            .copied()
            .max()
            .unwrap_or(0),
    };
    write_json(&args.out.join("sim_result.json"), &summary)?;

    let bucket = args
        .bucket
        .unwrap_or_else(|| (result.makespan / 256).max(1));
    let mut waveform = Vec::new();
    write_waveform_csv(&result, bucket, mesh.cells(), &mut waveform)?;
    std::fs::write(args.out.join("waveform.csv"), waveform)
        .map_err(|e| CliError::validation(format!("cannot write waveform: {e}")))?;
    let mut heatmap = Vec::new();
    write_heatmap_csv(&mesh, &result.heatmap, &mut heatmap)?;
    std::fs::write(args.out.join("heatmap.csv"), heatmap)
        .map_err(|e| CliError::validation(format!("cannot write heatmap: {e}")))?;

    let manifest = RunManifest::new(
        "simulate",
        json!({
            "graph": args.graph.display().to_string(),
            "placement": args.placement.display().to_string(),
            "pipeline": pipeline.to_string(),
            "batch": args.batch,
            "bandwidth": args.bandwidth,
            "tile_fraction": args.tile_fraction,
            "chunk_bytes": args.chunk_bytes,
            "bucket": bucket,
        }),
        &[args.graph.clone(), args.placement.clone()],
    )?;
    manifest.write(&args.out)?;
    println!(
        "{pipeline}: makespan {} cycles, throughput {:.4} samples/kcycle, utilization {:.3}",
        result.makespan, result.throughput_kcycles, result.mean_utilization
    );
    Ok(())
}
