//! Seeded synthetic graphs for density sweeps and randomized tests.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Edge, EdgeListGraph, GraphError};

/// Directed graph on `v` vertices with `round(density · v²)` distinct edges
/// placed uniformly at random, weights uniform in `1..=max_weight`.
pub fn uniform_graph(v: usize, density: f64, max_weight: u32, seed: u64) -> Result<EdgeListGraph, GraphError> {
    let cells = v * v;
    let target = (density.clamp(0.0, 1.0) * cells as f64).round() as usize;
    uniform_graph_edges(v, target.min(cells), max_weight, seed)
}

/// Directed graph on `v` vertices with exactly `edges` distinct edges.
pub fn uniform_graph_edges(v: usize, edges: usize, max_weight: u32, seed: u64) -> Result<EdgeListGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = v * v;
    let picks = index::sample(&mut rng, cells, edges.min(cells));
    let max_weight = max_weight.max(1);
    let list: Vec<Edge> = picks
        .into_iter()
        .map(|cell| {
            let w = rng.gen_range(1..=max_weight);
            Edge::new((cell / v) as u32, (cell % v) as u32, w as f64)
        })
        .collect();
    EdgeListGraph::new(v, list, true)
}

/// Vector of `len` values uniform in `[0, bound)`.
pub fn uniform_vector(len: usize, bound: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen::<f64>() * bound).collect()
}
