//! Baseline placement engines (zigzag, snake, seeded random search), a
//! brute-force optimal oracle for small instances, and the clockwise-ring
//! conflict resolver shared with the RL engine.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::error::{Error, Result};
use crate::mesh::{communication_cost, Coord, Mesh, Placement};
use crate::taskgraph::TaskGraph;

/// Upper bound on the assignments the oracle will enumerate.
const ORACLE_GUARD: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Zigzag,
    Snake,
    Random,
    Oracle,
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineKind::Zigzag => write!(f, "zigzag"),
            EngineKind::Snake => write!(f, "snake"),
            EngineKind::Random => write!(f, "random"),
            EngineKind::Oracle => write!(f, "oracle"),
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zigzag" => Ok(EngineKind::Zigzag),
            "snake" => Ok(EngineKind::Snake),
            "random" => Ok(EngineKind::Random),
            "oracle" => Ok(EngineKind::Oracle),
            other => Err(Error::Validation(format!(
                "unknown engine `{other}`, expected zigzag|snake|random|oracle"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engine: EngineKind,
    pub seed: u64,
    pub iterations: usize,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.engine == EngineKind::Random && self.iterations == 0 {
            return Err(Error::Validation(
                "random search needs iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_fits(graph: &TaskGraph, mesh: &Mesh) -> Result<()> {
    if graph.len() > mesh.cells() {
        return Err(Error::MeshTooSmall {
            nodes: graph.len(),
            cells: mesh.cells(),
        });
    }
    Ok(())
}

/// Row-major fill from the top-left corner: node k goes to (k mod W, k div W).
pub fn place_zigzag(graph: &TaskGraph, mesh: &Mesh) -> Result<Placement> {
    check_fits(graph, mesh)?;
    let w = mesh.width;
    let assign = (0..graph.len() as u32)
        .map(|k| Coord::new(k % w, k / w))
        .collect();
    Placement::new(*mesh, assign)
}

/// Serpentine fill: even rows run west-to-east, odd rows east-to-west.
pub fn place_snake(graph: &TaskGraph, mesh: &Mesh) -> Result<Placement> {
    check_fits(graph, mesh)?;
    let w = mesh.width;
    let assign = (0..graph.len() as u32)
        .map(|k| {
            let row = k / w;
            let col = if row.is_multiple_of(2) {
                k % w
            } else {
                w - 1 - (k % w)
            };
            Coord::new(col, row)
        })
        .collect();
    Placement::new(*mesh, assign)
}

/// Seeded random search: `iterations` uniform random injective placements,
/// returning the argmin and the best-so-far cost trace.
///
/// Candidates are drawn sequentially from the seeded RNG and may be scored in
/// parallel; the argmin scan runs in draw order, so the result is identical
/// to a fully sequential run.
pub fn place_random_search(
    graph: &TaskGraph,
    mesh: &Mesh,
    config: &EngineConfig,
) -> Result<(Placement, Vec<u64>)> {
    config.validate()?;
    check_fits(graph, mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cells: Vec<Coord> = mesh.iter_coords().collect();
    let n = graph.len();
    let candidates: Vec<Placement> = (0..config.iterations)
        .map(|_| {
            let mut pool = cells.clone();
            pool.shuffle(&mut rng);
            pool.truncate(n);
            Placement::new(*mesh, pool).expect("shuffled cells are injective")
        })
        .collect();
    let costs = batch::map(&candidates, |p| {
        communication_cost(graph, p).expect("candidate covers all nodes")
    });

    let mut best_idx = 0;
    let mut trace = Vec::with_capacity(costs.len());
    for (i, &c) in costs.iter().enumerate() {
        if c < costs[best_idx] {
            best_idx = i;
        }
        trace.push(costs[best_idx]);
    }
    Ok((candidates.into_iter().nth(best_idx).unwrap(), trace))
}

/// Exhaustive minimum-cost placement with lexicographic tie-breaking
/// (node 0 on the lowest-index feasible cell, then node 1, ...).
///
/// Guarded: refuses instances with more than 10^7 partial assignments.
pub fn place_oracle(graph: &TaskGraph, mesh: &Mesh) -> Result<Placement> {
    check_fits(graph, mesh)?;
    let n = graph.len();
    let cells = mesh.cells();
    let mut perms: u64 = 1;
    for i in 0..n {
        perms = perms.saturating_mul((cells - i) as u64);
        if perms > ORACLE_GUARD {
            return Err(Error::Infeasible(format!(
                "oracle guard: |N|!/(|N|-|A|)! exceeds {ORACLE_GUARD} for {n} nodes on {cells} cells"
            )));
        }
    }

    // edges grouped by their higher endpoint so prefix costs are incremental
    let mut incident: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for e in &graph.edges {
        let (lo, hi) = if e.src < e.dst {
            (e.src, e.dst)
        } else {
            (e.dst, e.src)
        };
        incident[hi].push((lo, e.bytes));
    }

    let coords: Vec<Coord> = mesh.iter_coords().collect();
    let mut assigned: Vec<Coord> = Vec::with_capacity(n);
    let mut used = vec![false; cells];
    let mut best_cost = u64::MAX;
    let mut best: Option<Vec<Coord>> = None;

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        node: usize,
        n: usize,
        cost_so_far: u64,
        coords: &[Coord],
        incident: &[Vec<(usize, u64)>],
        assigned: &mut Vec<Coord>,
        used: &mut [bool],
        best_cost: &mut u64,
        best: &mut Option<Vec<Coord>>,
    ) {
        if node == n {
            if cost_so_far < *best_cost {
                *best_cost = cost_so_far;
                *best = Some(assigned.clone());
            }
            return;
        }
        for (idx, &cell) in coords.iter().enumerate() {
            if used[idx] {
                continue;
            }
            let added: u64 = incident[node]
                .iter()
                .map(|&(other, bytes)| bytes * crate::mesh::hops(assigned[other], cell) as u64)
                .sum();
            let cost = cost_so_far + added;
            if cost >= *best_cost {
                continue;
            }
            used[idx] = true;
            assigned.push(cell);
            dfs(
                node + 1,
                n,
                cost,
                coords,
                incident,
                assigned,
                used,
                best_cost,
                best,
            );
            assigned.pop();
            used[idx] = false;
        }
    }

    dfs(
        0,
        n,
        0,
        &coords,
        &incident,
        &mut assigned,
        &mut used,
        &mut best_cost,
        &mut best,
    );
    let assign = best.ok_or_else(|| Error::Internal("oracle found no assignment".into()))?;
    Placement::new(*mesh, assign)
}

/// Priority order used when several nodes contend for a cell: heaviest
/// traffic first, ties by node id.
pub fn traffic_priority(graph: &TaskGraph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.sort_by_key(|&i| {
        let node = &graph.nodes[i];
        (std::cmp::Reverse(node.bytes_in + node.bytes_out), i)
    });
    order
}

/// Assigns every node its target cell when free; otherwise scans rings of
/// growing Manhattan distance around the target, each ring enumerated from
/// due north and proceeding clockwise, and takes the first free in-bounds
/// cell. Nodes are processed in `priorities` order.
pub fn resolve_conflicts(
    targets: &[Coord],
    priorities: &[usize],
    mesh: &Mesh,
) -> Result<Placement> {
    if targets.len() > mesh.cells() {
        return Err(Error::MeshTooSmall {
            nodes: targets.len(),
            cells: mesh.cells(),
        });
    }
    if priorities.len() != targets.len() {
        return Err(Error::Validation(
            "priorities must be a total order over the target nodes".into(),
        ));
    }
    let mut seen = vec![false; targets.len()];
    for &p in priorities {
        if p >= targets.len() || seen[p] {
            return Err(Error::Validation(
                "priorities must be a permutation of node ids".into(),
            ));
        }
        seen[p] = true;
    }

    let mut used = vec![false; mesh.cells()];
    let mut assign = vec![Coord::new(0, 0); targets.len()];
    for &node in priorities {
        let target = targets[node];
        if !mesh.contains(target) {
            return Err(Error::Validation(format!(
                "node {node} targets out-of-bounds cell ({}, {})",
                target.x, target.y
            )));
        }
        let cell = find_free(target, mesh, &used)
            .ok_or_else(|| Error::Internal("no free cell despite capacity check".into()))?;
        used[mesh.index(cell)] = true;
        assign[node] = cell;
    }
    Placement::new(*mesh, assign)
}

fn find_free(target: Coord, mesh: &Mesh, used: &[bool]) -> Option<Coord> {
    if !used[mesh.index(target)] {
        return Some(target);
    }
    let max_d = mesh.width + mesh.height;
    for d in 1..=max_d as i64 {
        for cell in ring(target, d) {
            if cell.0 >= 0 && cell.1 >= 0 && mesh.contains(Coord::new(cell.0 as u32, cell.1 as u32))
            {
                let c = Coord::new(cell.0 as u32, cell.1 as u32);
                if !used[mesh.index(c)] {
                    return Some(c);
                }
            }
        }
    }
    None
}

/// Cells at Manhattan distance `d` from `center`, starting due north and
/// walking clockwise through the E, S, and W vertices of the diamond.
fn ring(center: Coord, d: i64) -> impl Iterator<Item = (i64, i64)> {
    let (cx, cy) = (center.x as i64, center.y as i64);
    let ne = (0..d).map(move |i| (cx + i, cy - d + i));
    let se = (0..d).map(move |i| (cx + d - i, cy + i));
    let sw = (0..d).map(move |i| (cx - i, cy + d - i));
    let nw = (0..d).map(move |i| (cx - d + i, cy - i));
    ne.chain(se).chain(sw).chain(nw)
}
