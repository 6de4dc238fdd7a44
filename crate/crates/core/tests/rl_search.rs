//! The RL optimizer against the exhaustive oracle on a small instance.

use coremap_core::mesh::{communication_cost, Mesh};
use coremap_core::placement::{place_oracle, place_zigzag};
use coremap_core::rl::{train, TrainConfig};
use coremap_core::taskgraph::{HardwareProfile, Mode, TaskGraph};

#[test]
fn chain_on_2x3_reaches_the_optimum_on_most_seeds() {
    // unit-edge 6-node chain; a Hamiltonian snake exists, optimal cost 5
    let g = TaskGraph::synthetic(
        Mode::Inference,
        HardwareProfile::default(),
        &[(0, 0, 0); 6],
        &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1)],
    )
    .unwrap();
    let mesh = Mesh::new(2, 3).unwrap();
    let optimum = communication_cost(&g, &place_oracle(&g, &mesh).unwrap()).unwrap();
    assert_eq!(optimum, 5);
    let zigzag = communication_cost(&g, &place_zigzag(&g, &mesh).unwrap()).unwrap();

    let mut hits = 0;
    for seed in 0..10 {
        let cfg = TrainConfig {
            episodes: 200,
            seed,
            ..TrainConfig::default()
        };
        let result = train(&g, &mesh, &cfg).unwrap();
        assert!(result.best_cost <= zigzag, "seed {seed} worse than zigzag");
        if result.best_cost == optimum {
            hits += 1;
        }
    }
    assert!(hits >= 8, "optimum reached on only {hits}/10 seeds");
}
