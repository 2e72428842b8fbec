//! Scratch probe: conditioning distribution of the small Gram-Hankel fixtures.

use sbk_core::gen::symmetric_with_spectrum;
use sbk_core::krylov::{assemble_block_hankel, build_krylov};
use sbk_core::linops::{svd_summary, LinearOperatorHandle};
use sbk_core::sketch::{sample_sparse_gaussian, SeedPath, SketchSpec};

fn main() {
    let (n, s, m) = (12usize, 3usize, 4usize);
    let mut conds: Vec<f64> = Vec::new();
    for seed in 0..400u64 {
        let mut rng = SeedPath::new(seed).stream();
        let eigs: Vec<f64> = (0..n)
            .map(|i| 0.5 + 1.5 * i as f64 / (n - 1) as f64)
            .collect();
        let a = symmetric_with_spectrum(&eigs, &mut rng);
        let g = sample_sparse_gaussian(&SketchSpec {
            n,
            s,
            h: n as f64,
            seed: seed + 1,
        })
        .unwrap();
        let k = build_krylov(LinearOperatorHandle::from_dense_symmetric(&a).unwrap(), g, m).unwrap();
        let h = assemble_block_hankel(&k).unwrap();
        conds.push(svd_summary(&h.expand()).unwrap().condition_number);
    }
    conds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for q in [0usize, 10, 40, 100, 200, 300, 399] {
        println!("cond quantile {}/400: {:.2e}", q, conds[q]);
    }
    println!("count <= 1e4: {}", conds.iter().filter(|&&c| c <= 1e4).count());
    println!("count <= 1e5: {}", conds.iter().filter(|&&c| c <= 1e5).count());
    println!("count <= 1e6: {}", conds.iter().filter(|&&c| c <= 1e6).count());
}
