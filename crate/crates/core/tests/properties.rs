//! Property tests for the structural invariants that hold across random
//! graphs, placements, and meshes.

use proptest::prelude::*;

use coremap_core::mesh::{
    communication_cost, directional_loads, hop_histogram, hops, route, Coord, Mesh, Placement,
};
use coremap_core::placement::{
    place_oracle, place_random_search, place_snake, place_zigzag, resolve_conflicts, EngineConfig,
    EngineKind,
};
use coremap_core::sim::{simulate, PipelineMode, SimConfig};
use coremap_core::taskgraph::{HardwareProfile, Mode, TaskGraph};

fn arb_mesh() -> impl Strategy<Value = Mesh> {
    (1u32..=8, 1u32..=8).prop_map(|(w, h)| Mesh::new(w, h).unwrap())
}

/// Graph + an injective placement on the mesh.
fn arb_instance() -> impl Strategy<Value = (TaskGraph, Mesh, Placement)> {
    (arb_mesh(), any::<u64>()).prop_flat_map(|(mesh, seed)| {
        let cells = mesh.cells();
        let n = 1 + (seed as usize % cells.min(12));
        (
            Just(mesh),
            Just(n),
            proptest::collection::vec((0..n, 0..n, 1u64..50_000), 0..24),
            Just(seed),
        )
            .prop_map(|(mesh, n, raw_edges, seed)| {
                let edges: Vec<(usize, usize, u64)> =
                    raw_edges.into_iter().filter(|(a, b, _)| a != b).collect();
                let graph = TaskGraph::synthetic(
                    Mode::Inference,
                    HardwareProfile::default(),
                    &vec![(0, 0, 0); n],
                    &edges,
                )
                .unwrap();
                // deterministic pseudorandom injective placement
                let mut cells: Vec<Coord> = mesh.iter_coords().collect();
                let mut state = seed | 1;
                for i in (1..cells.len()).rev() {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let j = (state >> 33) as usize % (i + 1);
                    cells.swap(i, j);
                }
                cells.truncate(n);
                let placement = Placement::new(mesh, cells).unwrap();
                (graph, mesh, placement)
            })
    })
}

proptest! {
    /// The module's central identity: every hop is counted exactly once, so
    /// the directional loads sum to the communication cost.
    #[test]
    fn conservation_identity((graph, mesh, placement) in arb_instance()) {
        let cost = communication_cost(&graph, &placement).unwrap();
        let loads = directional_loads(&graph, &placement, &mesh).unwrap();
        let total: u64 = loads.iter().map(|l| l.total()).sum();
        prop_assert_eq!(total, cost);
    }

    /// Every inter-core edge costs at least one hop.
    #[test]
    fn cost_lower_bound((graph, _mesh, placement) in arb_instance()) {
        let cost = communication_cost(&graph, &placement).unwrap();
        let bound: u64 = graph
            .edges
            .iter()
            .filter(|e| placement.coord_of(e.src) != placement.coord_of(e.dst))
            .map(|e| e.bytes)
            .sum();
        prop_assert!(cost >= bound);
    }

    #[test]
    fn hops_symmetric(x1 in 0u32..16, y1 in 0u32..16, x2 in 0u32..16, y2 in 0u32..16) {
        let a = Coord::new(x1, y1);
        let b = Coord::new(x2, y2);
        prop_assert_eq!(hops(a, b), hops(b, a));
    }

    /// Route length equals Manhattan distance, and recomputation is identical.
    #[test]
    fn route_minimal_on_random_pairs(mesh in arb_mesh(), s in any::<u64>()) {
        let a = mesh.coord((s as usize) % mesh.cells());
        let b = mesh.coord((s as usize / 7) % mesh.cells());
        let r = route(&mesh, a, b);
        prop_assert_eq!(r.hops.len() as u32, hops(a, b));
        prop_assert_eq!(route(&mesh, a, b), r);
    }

    /// The histogram covers every edge exactly once.
    #[test]
    fn histogram_totals((graph, _mesh, placement) in arb_instance()) {
        let h = hop_histogram(&graph, &placement).unwrap();
        let edges: u64 = h.counts.values().sum();
        prop_assert_eq!(edges, graph.edges.len() as u64);
    }

    /// All engines emit injective in-bounds placements covering the graph.
    #[test]
    fn engines_emit_valid_placements((graph, mesh, _p) in arb_instance()) {
        let zig = place_zigzag(&graph, &mesh).unwrap();
        let snake = place_snake(&graph, &mesh).unwrap();
        let cfg = EngineConfig { engine: EngineKind::Random, seed: 5, iterations: 8 };
        let (rand_p, _) = place_random_search(&graph, &mesh, &cfg).unwrap();
        for p in [zig, snake, rand_p] {
            prop_assert_eq!(p.len(), graph.len());
            communication_cost(&graph, &p).unwrap();
        }
    }

    /// Resolving an already-injective assignment returns it unchanged.
    #[test]
    fn resolver_idempotent((_graph, mesh, placement) in arb_instance()) {
        let targets: Vec<Coord> = (0..placement.len())
            .map(|i| placement.coord_of(i).unwrap())
            .collect();
        let order: Vec<usize> = (0..placement.len()).collect();
        let resolved = resolve_conflicts(&targets, &order, &mesh).unwrap();
        prop_assert_eq!(resolved, placement);
    }

    /// Conflict resolution is total and injective from arbitrary targets.
    #[test]
    fn resolver_total_and_injective(mesh in arb_mesh(), seed in any::<u64>()) {
        let n = 1 + (seed as usize % mesh.cells());
        let targets: Vec<Coord> = (0..n)
            .map(|i| {
                let s = seed.wrapping_add(i as u64).wrapping_mul(0x9E3779B97F4A7C15);
                mesh.coord((s >> 32) as usize % mesh.cells())
            })
            .collect();
        let order: Vec<usize> = (0..n).collect();
        let p = resolve_conflicts(&targets, &order, &mesh).unwrap();
        prop_assert_eq!(p.len(), n);
    }
}

#[test]
fn oracle_beats_heuristics_on_small_instances() {
    // the oracle is an exhaustive minimum, so every engine is at or above it
    let mesh = Mesh::new(2, 3).unwrap();
    for seed in 0..10u64 {
        let mut edges = Vec::new();
        let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D) | 1;
        for a in 0..6usize {
            for b in (a + 1)..6 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                if (state >> 60) % 2 == 0 {
                    edges.push((a, b, 1 + (state >> 32) % 1000));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 5, 10));
        }
        let g = TaskGraph::synthetic(
            Mode::Inference,
            HardwareProfile::default(),
            &[(0, 0, 0); 6],
            &edges,
        )
        .unwrap();
        let oracle_cost = communication_cost(&g, &place_oracle(&g, &mesh).unwrap()).unwrap();
        let zig_cost = communication_cost(&g, &place_zigzag(&g, &mesh).unwrap()).unwrap();
        let snake_cost = communication_cost(&g, &place_snake(&g, &mesh).unwrap()).unwrap();
        assert!(oracle_cost <= zig_cost);
        assert!(oracle_cost <= snake_cost);
    }
}

#[test]
fn simulator_heatmap_matches_closed_form_on_random_instances() {
    // same routes, same volumes: the simulator's forwarded-bytes grid must
    // equal the closed-form directional loads at batch 1
    for seed in 0..6u64 {
        let mesh = Mesh::new(3, 3).unwrap();
        let n = 5 + (seed as usize % 4);
        let mut edges = Vec::new();
        let mut state = seed | 1;
        for a in 0..n {
            for b in (a + 1)..n {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(97);
                if (state >> 61) % 2 == 0 {
                    edges.push((a, b, 1 + (state >> 40) % 3000));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1, 64));
        }
        let macs = HardwareProfile::default().macs_per_core;
        let ops: Vec<(u64, u64, u64)> = (0..n)
            .map(|i| (((i as u64 % 7) + 1) * macs, 0, 0))
            .collect();
        let g = TaskGraph::synthetic(Mode::Inference, HardwareProfile::default(), &ops, &edges)
            .unwrap();
        let p = place_snake(&g, &mesh).unwrap();
        let mut cfg = SimConfig::new(Mode::Inference, PipelineMode::Fpdeep);
        cfg.batch_size = 1;
        cfg.tile_fraction = 0.25;
        let result = simulate(&g, &p, &mesh, &cfg).unwrap();
        let closed = directional_loads(&g, &p, &mesh).unwrap();
        for (core, load) in closed.iter().enumerate() {
            assert_eq!(
                result.heatmap[core],
                load.total(),
                "seed {seed} core {core}"
            );
        }
    }
}
