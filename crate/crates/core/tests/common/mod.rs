#![allow(dead_code)]

use gibbsgate::kernel::ObservableFn;
use gibbsgate::sigma::Partition;
use gibbsgate::FiniteJoint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_a() -> FiniteJoint {
    FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
}

pub fn fixture_b() -> FiniteJoint {
    FiniteJoint::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

pub fn lower_triangle(n: usize) -> FiniteJoint {
    FiniteJoint::from_rows(
        (0..n)
            .map(|x| (0..n).map(|y| if y <= x { 1.0 } else { 0.0 }).collect())
            .collect(),
    )
    .unwrap()
}

/// Integer weights in `1..=9`, each cell zeroed with probability `zero_p`.
/// Redrawn until some weight is positive.
pub fn weight_grid(r: &mut ChaCha8Rng, xs: usize, ys: usize, zero_p: f64) -> Vec<Vec<f64>> {
    loop {
        let w: Vec<Vec<f64>> = (0..xs)
            .map(|_| {
                (0..ys)
                    .map(|_| {
                        if r.gen_bool(zero_p) {
                            0.0
                        } else {
                            r.gen_range(1..=9) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        if w.iter().flatten().any(|v| *v > 0.0) {
            return w;
        }
    }
}

/// Random joint with sides in `1..=max_side` and a random zero density.
pub fn random_joint(r: &mut ChaCha8Rng, max_side: usize) -> FiniteJoint {
    let xs = r.gen_range(1..=max_side);
    let ys = r.gen_range(1..=max_side);
    let zero_p = r.gen_range(0.0..0.75);
    FiniteJoint::from_rows(weight_grid(r, xs, ys, zero_p)).unwrap()
}

/// Random joint whose grid has at most `max_cells` cells.
pub fn random_small_joint(r: &mut ChaCha8Rng, max_cells: usize) -> FiniteJoint {
    loop {
        let xs = r.gen_range(1..=max_cells);
        let ys = r.gen_range(1..=max_cells);
        if xs * ys <= max_cells {
            let zero_p = r.gen_range(0.0..0.7);
            return FiniteJoint::from_rows(weight_grid(r, xs, ys, zero_p)).unwrap();
        }
    }
}

/// Partition of `0..n` with at most `max_blocks` labels.
pub fn random_partition(r: &mut ChaCha8Rng, n: usize, max_blocks: usize) -> Partition {
    let k = r.gen_range(1..=max_blocks);
    let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    Partition::from_labels(&labels)
}

pub fn random_observable(r: &mut ChaCha8Rng, xs: usize, ys: usize) -> ObservableFn {
    let rows: Vec<Vec<f64>> = (0..xs)
        .map(|_| (0..ys).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    ObservableFn::from_rows(&rows).unwrap()
}

pub fn positive_measure(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(1..=4) as f64).collect()
}
