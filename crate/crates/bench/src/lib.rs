//! Fixtures shared by the benchmarks in `benches/`.

use gpembed::{affinity, normalize_symmetric, sample, KernelMatrix, ManifoldKind, ManifoldSpec, PointCloud};

pub fn torus(n: usize) -> PointCloud {
    sample(&ManifoldSpec::new(ManifoldKind::FlatTorus { r: 3.5 }, n, 1)).expect("valid spec")
}

/// Raw affinity of an `n`-point torus sample at the usual bandwidth.
pub fn raw_kernel(n: usize) -> KernelMatrix {
    affinity(&torus(n), 0.3).expect("finite cloud")
}

pub fn symmetric_kernel(n: usize) -> KernelMatrix {
    normalize_symmetric(&raw_kernel(n)).expect("positive diagonal")
}
