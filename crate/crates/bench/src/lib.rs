//! Shared fixtures for the criterion benches.

use ruelle::assembly::{assemble_flow_generator, assemble_flow_generator_with};
use ruelle::{AssemblyOptions, FlowField, FourierTruncation, OperatorMatrix, StoragePolicy};

/// Generator of the variable-coefficient T² benchmark at cutoff `k`.
pub fn benchmark_generator(epsilon: f64, k: usize) -> OperatorMatrix {
    assemble_flow_generator(&FlowField::t2_benchmark(), epsilon, FourierTruncation::new(2, k).unwrap()).unwrap()
}

/// Same operator forced into sparse storage.
pub fn benchmark_generator_sparse(epsilon: f64, k: usize) -> OperatorMatrix {
    let opts = AssemblyOptions { storage: StoragePolicy::Sparse, ..Default::default() };
    assemble_flow_generator_with(&FlowField::t2_benchmark(), epsilon, FourierTruncation::new(2, k).unwrap(), &opts)
        .unwrap()
}
