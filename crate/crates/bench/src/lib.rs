//! Shared fixtures for the benchmarks.

use cadnn::nn::KernelSpec;
use cadnn::vision::{texture_dataset, TextureKind};
use cadnn::{Example, RngState, Tensor};

/// A `[c, size, size]` input with entries in `[0, 1)`.
pub fn input(c: usize, size: usize, seed: u64) -> Tensor {
    Tensor::seeded_uniform(&[c, size, size], 0.0, 1.0, &mut RngState::new(seed)).unwrap()
}

/// A 3x3 kernel bank with small random weights.
pub fn kernel(out_c: usize, in_c: usize, seed: u64) -> KernelSpec {
    let mut rng = RngState::new(seed);
    let w = Tensor::seeded_uniform(&[out_c, in_c, 3, 3], -0.1, 0.1, &mut rng).unwrap();
    let b = Tensor::seeded_uniform(&[out_c], -0.1, 0.1, &mut rng).unwrap();
    KernelSpec::new(w, b).unwrap()
}

/// Two texture classes rendered at `size`, `per_class` images each.
pub fn textures(per_class: usize, size: usize) -> Vec<Example> {
    let kinds = [("h", TextureKind::Horizontal), ("v", TextureKind::Vertical)];
    texture_dataset(&kinds, per_class, size, 1).unwrap().to_examples(size).unwrap()
}
