//! Shared fixtures for the criterion benchmarks.

use nalgebra::DMatrix;
use robustfit::geometry::{embedding, hartley_normalize, HomPoint};
use robustfit::subspace::{BlockData, DataMatrix};
use robustfit::{synthesize, EmbeddingBlock, ModelKind, SynthConfig, SynthDataset};

/// Labeled synthetic scene with 1 px noise.
pub fn scene(kind: ModelKind, n_inliers: usize, n_outliers: usize, seed: u64) -> SynthDataset {
    synthesize(&SynthConfig {
        n_inliers,
        n_outliers,
        noise_sigma: 1.0,
        seed,
        ..SynthConfig::new(kind)
    })
    .expect("synthetic scene")
}

/// Hartley-normalized points of both views.
pub fn normalized(ds: &SynthDataset) -> (Vec<HomPoint>, Vec<HomPoint>) {
    let x1: Vec<_> = ds.correspondences.iter().map(|c| c.x).collect();
    let x2: Vec<_> = ds.correspondences.iter().map(|c| c.x2).collect();
    let (_, p1) = hartley_normalize(&x1).expect("normalizable");
    let (_, p2) = hartley_normalize(&x2).expect("normalizable");
    (p1, p2)
}

pub fn embeddings(ds: &SynthDataset) -> Vec<EmbeddingBlock> {
    let (p1, p2) = normalized(ds);
    p1.iter()
        .zip(&p2)
        .map(|(a, b)| embedding(ds.problem(), a, b).expect("finite embedding"))
        .collect()
}

pub fn block_data(ds: &SynthDataset) -> BlockData {
    BlockData::from_embeddings(&embeddings(ds))
}

/// Single-column embeddings stacked as a 9 x n data matrix.
pub fn data_matrix(ds: &SynthDataset) -> DataMatrix {
    let cols: Vec<_> = embeddings(ds)
        .iter()
        .flat_map(|b| b.columns().to_vec())
        .collect();
    DataMatrix::new(DMatrix::from_fn(9, cols.len(), |i, j| cols[j][i])).expect("finite data")
}
