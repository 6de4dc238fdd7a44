//! 2D-mesh topology, deterministic clockwise shortest-path routing, and
//! closed-form placement metrics (communication cost, directional loads,
//! hop histograms).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskgraph::TaskGraph;

/// Grid coordinate. Origin is the top-left core; `x` grows east, `y` grows south.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Coord {
    pub x: u32,
    pub y: u32,
}

impl From<[u32; 2]> for Coord {
    fn from(v: [u32; 2]) -> Self {
        Coord { x: v[0], y: v[1] }
    }
}

impl From<Coord> for [u32; 2] {
    fn from(c: Coord) -> Self {
        [c.x, c.y]
    }
}

impl Coord {
    pub fn new(x: u32, y: u32) -> Self {
        Coord { x, y }
    }
}

/// Port direction out of a router. Clockwise enumeration order starting due
/// north is the tie-break order used by the routing policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const CLOCKWISE: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    /// Index into 4-element per-core arrays (N=0, E=1, S=2, W=3).
    pub fn index(self) -> usize {
        match self {
            Dir::North => 0,
            Dir::East => 1,
            Dir::South => 2,
            Dir::West => 3,
        }
    }

    pub fn step(self, c: Coord) -> Coord {
        match self {
            Dir::North => Coord::new(c.x, c.y - 1),
            Dir::East => Coord::new(c.x + 1, c.y),
            Dir::South => Coord::new(c.x, c.y + 1),
            Dir::West => Coord::new(c.x - 1, c.y),
        }
    }
}

/// W×H grid of cores, each linked to at most four mesh neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh {
    pub width: u32,
    pub height: u32,
}

impl Mesh {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "mesh dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Mesh { width, height })
    }

    pub fn cells(&self) -> usize {
        (self.width as usize) * (self.height as usize)
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.width && c.y < self.height
    }

    /// Linear core index, row-major.
    pub fn index(&self, c: Coord) -> usize {
        (c.y as usize) * (self.width as usize) + c.x as usize
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new(
            (index % self.width as usize) as u32,
            (index / self.width as usize) as u32,
        )
    }

    /// All coordinates in row-major order.
    pub fn iter_coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.cells()).map(|i| self.coord(i))
    }
}

/// A routed path: the ordered hop directions from `src` to `dst`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub src: Coord,
    pub dst: Coord,
    pub hops: Vec<Dir>,
}

/// Manhattan distance between two cores.
pub fn hops(a: Coord, b: Coord) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Deterministic minimal route: at each router, take the first productive
/// direction in clockwise order N, E, S, W.
pub fn route(mesh: &Mesh, src: Coord, dst: Coord) -> Route {
    debug_assert!(mesh.contains(src) && mesh.contains(dst));
    let mut hops_out = Vec::with_capacity(hops(src, dst) as usize);
    let mut cur = src;
    while cur != dst {
        let dir = Dir::CLOCKWISE
            .into_iter()
            .find(|d| productive(*d, cur, dst))
            .expect("distinct in-bounds coords always have a productive direction");
        cur = dir.step(cur);
        hops_out.push(dir);
    }
    Route {
        src,
        dst,
        hops: hops_out,
    }
}

fn productive(d: Dir, cur: Coord, dst: Coord) -> bool {
    match d {
        Dir::North => dst.y < cur.y,
        Dir::East => dst.x > cur.x,
        Dir::South => dst.y > cur.y,
        Dir::West => dst.x < cur.x,
    }
}

/// Injective map from logical node id (the vector index) to a grid coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub mesh: Mesh,
    assign: Vec<Coord>,
}

impl Placement {
    /// Builds a placement, checking bounds and injectivity.
    pub fn new(mesh: Mesh, assign: Vec<Coord>) -> Result<Self> {
        if assign.len() > mesh.cells() {
            return Err(Error::MeshTooSmall {
                nodes: assign.len(),
                cells: mesh.cells(),
            });
        }
        let mut seen = vec![false; mesh.cells()];
        for (id, &c) in assign.iter().enumerate() {
            if !mesh.contains(c) {
                return Err(Error::Validation(format!(
                    "node {id} placed out of bounds at ({}, {})",
                    c.x, c.y
                )));
            }
            let idx = mesh.index(c);
            if seen[idx] {
                return Err(Error::Validation(format!(
                    "node {id} placed on occupied cell ({}, {})",
                    c.x, c.y
                )));
            }
            seen[idx] = true;
        }
        Ok(Placement { mesh, assign })
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn coord_of(&self, node: usize) -> Option<Coord> {
        self.assign.get(node).copied()
    }

    pub fn assignments(&self) -> &[Coord] {
        &self.assign
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlacementFile {
    mesh: [u32; 2],
    assign: BTreeMap<u32, [u32; 2]>,
}

impl Placement {
    pub fn to_json(&self) -> Result<String> {
        let file = PlacementFile {
            mesh: [self.mesh.width, self.mesh.height],
            assign: self
                .assign
                .iter()
                .enumerate()
                .map(|(id, c)| (id as u32, [c.x, c.y]))
                .collect(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Internal(format!("placement serialization: {e}")))
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let file: PlacementFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            source: e,
        })?;
        let mesh = Mesh::new(file.mesh[0], file.mesh[1])?;
        let n = file.assign.len();
        let mut assign = vec![Coord::new(0, 0); n];
        for (id, xy) in &file.assign {
            let id = *id as usize;
            if id >= n {
                return Err(Error::Validation(format!(
                    "placement node ids must be contiguous 0..{n}, found {id}"
                )));
            }
            assign[id] = Coord::new(xy[0], xy[1]);
        }
        Placement::new(mesh, assign)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Outgoing bytes through each of a core's four mesh ports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionalLoad {
    pub north: u64,
    pub east: u64,
    pub south: u64,
    pub west: u64,
}

impl DirectionalLoad {
    pub fn total(&self) -> u64 {
        self.north + self.east + self.south + self.west
    }

    fn add(&mut self, dir: Dir, bytes: u64) {
        match dir {
            Dir::North => self.north += bytes,
            Dir::East => self.east += bytes,
            Dir::South => self.south += bytes,
            Dir::West => self.west += bytes,
        }
    }
}

/// Total weighted hop count: sum over edges of bytes × Manhattan distance of
/// the placed endpoints. Edges whose endpoints share a core cost nothing
/// (handled by the router's local ports).
pub fn communication_cost(graph: &TaskGraph, placement: &Placement) -> Result<u64> {
    let mut cost = 0u64;
    for edge in &graph.edges {
        let a = placement
            .coord_of(edge.src)
            .ok_or(Error::UnplacedNode(edge.src))?;
        let b = placement
            .coord_of(edge.dst)
            .ok_or(Error::UnplacedNode(edge.dst))?;
        cost += edge.bytes * hops(a, b) as u64;
    }
    Ok(cost)
}

/// Per-core directional loads: each link traversal on an edge's route adds the
/// edge's bytes to the sending core's port counter, so the grid total equals
/// `communication_cost` exactly.
pub fn directional_loads(
    graph: &TaskGraph,
    placement: &Placement,
    mesh: &Mesh,
) -> Result<Vec<DirectionalLoad>> {
    let mut loads = vec![DirectionalLoad::default(); mesh.cells()];
    for edge in &graph.edges {
        let a = placement
            .coord_of(edge.src)
            .ok_or(Error::UnplacedNode(edge.src))?;
        let b = placement
            .coord_of(edge.dst)
            .ok_or(Error::UnplacedNode(edge.dst))?;
        let mut cur = a;
        for dir in route(mesh, a, b).hops {
            loads[mesh.index(cur)].add(dir, edge.bytes);
            cur = dir.step(cur);
        }
    }
    Ok(loads)
}

/// Distribution of per-edge hop counts, with both edge-weighted and
/// bytes-weighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopHistogram {
    pub counts: BTreeMap<u32, u64>,
    pub mean_hops_per_edge: f64,
    pub mean_hops_per_byte: f64,
}

pub fn hop_histogram(graph: &TaskGraph, placement: &Placement) -> Result<HopHistogram> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut hop_sum = 0u64;
    let mut byte_hop_sum = 0u64;
    let mut byte_sum = 0u64;
    for edge in &graph.edges {
        let a = placement
            .coord_of(edge.src)
            .ok_or(Error::UnplacedNode(edge.src))?;
        let b = placement
            .coord_of(edge.dst)
            .ok_or(Error::UnplacedNode(edge.dst))?;
        let h = hops(a, b);
        *counts.entry(h).or_insert(0) += 1;
        hop_sum += h as u64;
        byte_hop_sum += edge.bytes * h as u64;
        byte_sum += edge.bytes;
    }
    let edges = graph.edges.len() as f64;
    Ok(HopHistogram {
        counts,
        mean_hops_per_edge: if edges > 0.0 {
            hop_sum as f64 / edges
        } else {
            0.0
        },
        mean_hops_per_byte: if byte_sum > 0 {
            byte_hop_sum as f64 / byte_sum as f64
        } else {
            0.0
        },
    })
}

/// Writes a heatmap grid as CSV: one row per y, one cell per x, each cell the
/// total bytes forwarded by that core.
pub fn write_heatmap_csv<W: Write>(mesh: &Mesh, per_core_bytes: &[u64], mut out: W) -> Result<()> {
    debug_assert_eq!(per_core_bytes.len(), mesh.cells());
    for y in 0..mesh.height {
        let row: Vec<String> = (0..mesh.width)
            .map(|x| per_core_bytes[mesh.index(Coord::new(x, y))].to_string())
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgraph::test_support::graph_from_edges;

    #[test]
    fn hops_examples() {
        assert_eq!(hops(Coord::new(0, 0), Coord::new(1, 2)), 3);
        assert_eq!(hops(Coord::new(3, 3), Coord::new(3, 3)), 0);
        assert_eq!(hops(Coord::new(0, 7), Coord::new(3, 0)), 10);
    }

    #[test]
    fn route_identity_is_empty() {
        let mesh = Mesh::new(3, 3).unwrap();
        let r = route(&mesh, Coord::new(0, 0), Coord::new(0, 0));
        assert!(r.hops.is_empty());
    }

    #[test]
    fn route_single_direction() {
        let mesh = Mesh::new(3, 1).unwrap();
        let r = route(&mesh, Coord::new(0, 0), Coord::new(2, 0));
        assert_eq!(r.hops, vec![Dir::East, Dir::East]);
    }

    #[test]
    fn route_clockwise_prefers_east_over_south() {
        let mesh = Mesh::new(2, 2).unwrap();
        let r = route(&mesh, Coord::new(0, 0), Coord::new(1, 1));
        assert_eq!(r.hops, vec![Dir::East, Dir::South]);
    }

    #[test]
    fn route_clockwise_prefers_north() {
        let mesh = Mesh::new(2, 2).unwrap();
        // north-east quadrant: N is productive and precedes E
        let r = route(&mesh, Coord::new(0, 1), Coord::new(1, 0));
        assert_eq!(r.hops, vec![Dir::North, Dir::East]);
    }

    #[test]
    fn routes_minimal_and_productive_exhaustive() {
        for w in 1..=8u32 {
            for h in 1..=8u32 {
                let mesh = Mesh::new(w, h).unwrap();
                for a in mesh.iter_coords().collect::<Vec<_>>() {
                    for b in mesh.iter_coords().collect::<Vec<_>>() {
                        let r = route(&mesh, a, b);
                        assert_eq!(r.hops.len() as u32, hops(a, b));
                        let mut cur = a;
                        for d in &r.hops {
                            let next = d.step(cur);
                            assert!(hops(next, b) < hops(cur, b), "unproductive hop");
                            assert!(mesh.contains(next));
                            cur = next;
                        }
                        assert_eq!(cur, b);
                        // determinism: recomputing gives the identical path
                        assert_eq!(route(&mesh, a, b), r);
                    }
                }
            }
        }
    }

    #[test]
    fn cost_examples() {
        let mesh = Mesh::new(2, 2).unwrap();
        let g = graph_from_edges(2, &[(0, 1, 10)]);
        let adjacent = Placement::new(mesh, vec![Coord::new(0, 0), Coord::new(1, 0)]).unwrap();
        assert_eq!(communication_cost(&g, &adjacent).unwrap(), 10);

        // src = dst core is impossible with an injective placement; an
        // intra-core edge means a self-referencing node pair, modeled here as
        // a graph whose two endpoints are the same node id. Self-edges are
        // rejected upstream, so the zero-hop case is covered by hop symmetry:
        assert_eq!(hops(Coord::new(1, 1), Coord::new(1, 1)), 0);
    }

    #[test]
    fn ring_on_2x2_costs_four() {
        let mesh = Mesh::new(2, 2).unwrap();
        let g = graph_from_edges(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)]);
        let ring_order = Placement::new(
            mesh,
            vec![
                Coord::new(0, 0),
                Coord::new(1, 0),
                Coord::new(1, 1),
                Coord::new(0, 1),
            ],
        )
        .unwrap();
        // frozen from exhaustive enumeration: 4 edges x 1 hop each
        assert_eq!(communication_cost(&g, &ring_order).unwrap(), 4);
    }

    #[test]
    fn directional_loads_follow_route() {
        let mesh = Mesh::new(3, 1).unwrap();
        let g = graph_from_edges(2, &[(0, 1, 5)]);
        let p = Placement::new(mesh, vec![Coord::new(0, 0), Coord::new(2, 0)]).unwrap();
        let loads = directional_loads(&g, &p, &mesh).unwrap();
        assert_eq!(loads[0].east, 5);
        assert_eq!(loads[1].east, 5);
        assert_eq!(loads[2].east, 0);
        assert_eq!(loads.iter().map(|l| l.total()).sum::<u64>(), 10);
        assert_eq!(communication_cost(&g, &p).unwrap(), 10);
    }

    #[test]
    fn directional_loads_empty_graph() {
        let mesh = Mesh::new(2, 2).unwrap();
        let g = graph_from_edges(1, &[]);
        let p = Placement::new(mesh, vec![Coord::new(0, 0)]).unwrap();
        let loads = directional_loads(&g, &p, &mesh).unwrap();
        assert!(loads.iter().all(|l| l.total() == 0));
    }

    #[test]
    fn unplaced_node_is_named() {
        let mesh = Mesh::new(2, 2).unwrap();
        let g = graph_from_edges(2, &[(0, 1, 3)]);
        let p = Placement::new(mesh, vec![Coord::new(0, 0)]).unwrap();
        match communication_cost(&g, &p) {
            Err(Error::UnplacedNode(1)) => {}
            other => panic!("expected UnplacedNode(1), got {other:?}"),
        }
    }

    #[test]
    fn histogram_examples() {
        let mesh = Mesh::new(3, 1).unwrap();
        let g = graph_from_edges(3, &[(0, 1, 4), (1, 2, 4)]);
        let p = Placement::new(
            mesh,
            vec![Coord::new(0, 0), Coord::new(1, 0), Coord::new(2, 0)],
        )
        .unwrap();
        let h = hop_histogram(&g, &p).unwrap();
        assert_eq!(h.counts.get(&1), Some(&2));
        assert_eq!(h.mean_hops_per_edge, 1.0);
        assert_eq!(h.mean_hops_per_byte, 1.0);
    }

    #[test]
    fn cost_invariant_under_horizontal_mirror() {
        let mesh = Mesh::new(4, 3).unwrap();
        let g = graph_from_edges(5, &[(0, 1, 7), (1, 2, 3), (2, 3, 9), (0, 4, 2)]);
        let coords = vec![
            Coord::new(0, 0),
            Coord::new(2, 1),
            Coord::new(3, 2),
            Coord::new(1, 1),
            Coord::new(3, 0),
        ];
        let mirrored: Vec<Coord> = coords
            .iter()
            .map(|c| Coord::new(mesh.width - 1 - c.x, c.y))
            .collect();
        let p1 = Placement::new(mesh, coords).unwrap();
        let p2 = Placement::new(mesh, mirrored).unwrap();
        assert_eq!(
            communication_cost(&g, &p1).unwrap(),
            communication_cost(&g, &p2).unwrap()
        );
    }

    #[test]
    fn placement_json_round_trip() {
        let mesh = Mesh::new(2, 2).unwrap();
        let p = Placement::new(mesh, vec![Coord::new(1, 0), Coord::new(0, 1)]).unwrap();
        let text = p.to_json().unwrap();
        let back = Placement::from_json(&text, "mem").unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn placement_rejects_duplicates_and_out_of_bounds() {
        let mesh = Mesh::new(2, 2).unwrap();
        assert!(Placement::new(mesh, vec![Coord::new(0, 0), Coord::new(0, 0)]).is_err());
        assert!(Placement::new(mesh, vec![Coord::new(5, 0)]).is_err());
        assert!(matches!(
            Placement::new(mesh, vec![Coord::new(0, 0); 5]),
            Err(Error::MeshTooSmall { .. })
        ));
    }
}
