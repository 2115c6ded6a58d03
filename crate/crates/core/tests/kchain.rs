mod common;

use gibbsgate::chain::{slln_diagnose_with, ChainConfig, Start};
use gibbsgate::ergodic::tv_curve;
use gibbsgate::kernel::build_kernel;
use gibbsgate::kgibbs::{build_k_kernel, check_k_admissible, KJoint, KSampler};

fn cube(weights: [f64; 8]) -> KJoint {
    KJoint::from_weights(vec![2, 2, 2], weights.to_vec()).unwrap()
}

fn corner_indicator() -> Vec<f64> {
    let mut phi = vec![0.0; 8];
    phi[0] = 1.0;
    phi
}

#[test]
fn admissible_cube_passes_slln() {
    let kj = cube([1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(check_k_admissible(&kj).admissible);
    let sampler = KSampler::new(&kj, &[0, 1, 2]).unwrap();
    let cfg = ChainConfig::new(11, 200_000, Start::Cell(vec![1, 1, 1])).with_chains(4);
    let d = slln_diagnose_with(&sampler, &corner_indicator(), &cfg).unwrap();
    assert!(d.pass, "{d:?}");
    assert!((d.target - 0.25).abs() < 1e-15);
}

#[test]
fn diagonal_cube_fails_slln_from_corner() {
    let kj = cube([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(!check_k_admissible(&kj).admissible);
    let sampler = KSampler::new(&kj, &[0, 1, 2]).unwrap();
    let cfg = ChainConfig::new(3, 10_000, Start::Cell(vec![0, 0, 0])).with_chains(2);
    let d = slln_diagnose_with(&sampler, &corner_indicator(), &cfg).unwrap();
    assert!(!d.pass);
    assert!(d.finals.iter().all(|m| *m == 1.0));
}

#[test]
fn admissible_cube_mixes() {
    let kj = cube([2.0, 1.0, 0.0, 1.0, 0.0, 0.0, 3.0, 1.0]);
    assert!(check_k_admissible(&kj).admissible);
    let k = build_k_kernel(&kj, &[2, 0, 1]).unwrap();
    let curve = tv_curve(&k, 200);
    assert!(curve[200] < 1e-9, "{}", curve[200]);
    let kj = cube([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let k = build_k_kernel(&kj, &[0, 1, 2]).unwrap();
    assert!(tv_curve(&k, 20).iter().all(|v| *v >= 0.5 - 1e-12));
}

#[test]
fn two_axis_curves_match_plain_kernel() {
    let mut r = common::rng(21);
    for _ in 0..40 {
        let j = common::random_joint(&mut r, 4);
        let plain = tv_curve(&build_kernel(&j), 30);
        let k = build_k_kernel(&KJoint::from_joint(&j), &[1, 0]).unwrap();
        assert_eq!(plain, tv_curve(&k, 30));
    }
}
