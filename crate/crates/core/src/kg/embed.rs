use rand_distr::{Distribution, Normal};

use super::{KgError, QuerySubgraph};
use crate::rng::keyed_rng;
use crate::tensor::Array;

/// Standard deviation of the seeded entity vectors.
pub const NODE_INIT_STD: f64 = 0.02;

/// Deterministic N(0, 0.02^2) vector for one entity, keyed by `(id, seed)`.
pub fn node_vector(node_id: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = keyed_rng(node_id, seed);
    let normal = Normal::new(0.0, NODE_INIT_STD).expect("valid std");
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Initial node matrix `(M + 1) x dim`. Row 0 (interaction node) is zero; the
/// model adds its learned interaction vector there.
pub fn init_node_embeddings(subgraph: &QuerySubgraph, dim: usize, seed: u64) -> Result<Array, KgError> {
    if dim == 0 {
        return Err(KgError::ZeroDimension);
    }
    let mut data = vec![0.0; dim];
    for node in subgraph.kg_node_ids() {
        data.extend(node_vector(node, dim, seed));
    }
    Ok(Array::matrix(subgraph.num_nodes(), dim, data).expect("row count matches"))
}
