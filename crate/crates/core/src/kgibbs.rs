//! Joints on products of `k ≥ 2` finite coordinates and the systematic-scan
//! Gibbs sampler that updates one coordinate at a time.
//!
//! Field `i` is generated by all coordinates except the `i`-th, so its atoms
//! are the fibers along axis `i`. On a finite space the intersection of the
//! completed fields is read off the graph on support cells linking cells
//! that differ in a single coordinate. That characterization is validated
//! here against direct enumeration of common events.

use nalgebra::DMatrix;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::chain::{sample_index, TransitionSampler};
use crate::dsu::Dsu;
use crate::error::{check_budget, Error, Result};
use crate::kernel::MarkovKernel;
use crate::sigma::Partition;
use crate::space::FiniteJoint;

/// Largest cell count for [`oracle_d_trivial`].
pub const D_TRIVIAL_MAX_CELLS: usize = 16;
/// Largest `log2` of the tuple count for [`oracle_k_completion_commutes`].
pub const TUPLE_SCAN_LOG2_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct KJoint {
    shape: Vec<usize>,
    weights: Vec<f64>,
    prob: Vec<f64>,
    support: Vec<bool>,
}

impl KJoint {
    /// Joint from a shape and row-major (last axis fastest) weights.
    pub fn from_weights(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if shape.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least two coordinates, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Shape(format!("empty coordinate in shape {shape:?}")));
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(*s))
            .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))?;
        if weights.len() != n {
            return Err(Error::Shape(format!(
                "shape {shape:?} has {n} cells but {} weights were given",
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeight {
                position: format!("flat index {i}"),
                value: weights[i],
            });
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        Ok(KJoint {
            prob: weights.iter().map(|w| w / total).collect(),
            support: weights.iter().map(|w| *w > 0.0).collect(),
            shape,
            weights,
        })
    }

    /// The two-coordinate joint `(X, Y)` as a `k = 2` instance.
    pub fn from_joint(j: &FiniteJoint) -> Self {
        KJoint {
            shape: vec![j.x_size(), j.y_size()],
            weights: j.weights().to_vec(),
            prob: j.probs().to_vec(),
            support: j.support_mask().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn k(&self) -> usize {
        self.shape.len()
    }

    pub fn cell_count(&self) -> usize {
        self.prob.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn support_mask(&self) -> &[bool] {
        &self.support
    }

    pub fn support_cells(&self) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| self.support[c])
            .collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        let mut rest = cell;
        let mut out = vec![0; self.k()];
        for axis in (0..self.k()).rev() {
            out[axis] = rest % self.shape[axis];
            rest /= self.shape[axis];
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.k() || coords.iter().zip(&self.shape).any(|(c, s)| c >= s) {
            return None;
        }
        Some(
            coords
                .iter()
                .zip(&self.shape)
                .fold(0, |acc, (c, s)| acc * s + c),
        )
    }

    /// Cells sharing every coordinate of `cell` except the one on `axis`,
    /// in increasing order.
    pub fn fiber(&self, cell: usize, axis: usize) -> Vec<usize> {
        let stride = self.stride(axis);
        let base = cell - (cell / stride % self.shape[axis]) * stride;
        (0..self.shape[axis]).map(|v| base + v * stride).collect()
    }
}

/// The partition of all cells into fibers along `axis`; it generates the
/// field of all coordinates except that one.
pub fn fiber_partition(kj: &KJoint, axis: usize) -> Partition {
    let labels: Vec<usize> = (0..kj.cell_count()).map(|c| kj.fiber(c, axis)[0]).collect();
    Partition::from_labels(&labels)
}

/// Components of the support cells under single-coordinate moves, indexed
/// by position in the row-major support list.
pub fn hamming_atoms(kj: &KJoint) -> Partition {
    let cells = kj.support_cells();
    let mut pos = vec![usize::MAX; kj.cell_count()];
    cells.iter().enumerate().for_each(|(i, &c)| pos[c] = i);
    let mut dsu = Dsu::new(cells.len());
    for axis in 0..kj.k() {
        for &c in &cells {
            if let Some(&first) = kj.fiber(c, axis).iter().find(|&&f| kj.support[f]) {
                dsu.union(pos[first], pos[c]);
            }
        }
    }
    let roots: Vec<usize> = (0..cells.len()).map(|i| dsu.find(i)).collect();
    Partition::from_labels(&roots)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KAdmissibility {
    pub admissible: bool,
    pub atom_count: usize,
    pub atoms: Partition,
    /// Cells of the first two atoms when there is more than one.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
}

pub fn check_k_admissible(kj: &KJoint) -> KAdmissibility {
    let atoms = hamming_atoms(kj);
    let atom_count = atoms.block_count();
    let cells = kj.support_cells();
    let witness = (atom_count > 1).then(|| {
        let blocks = atoms.blocks();
        let to_cells = |b: &Vec<usize>| b.iter().map(|&i| cells[i]).collect::<Vec<_>>();
        (to_cells(&blocks[0]), to_cells(&blocks[1]))
    });
    KAdmissibility {
        admissible: atom_count == 1,
        atom_count,
        atoms,
        witness,
    }
}

/// Enumerates every subset `F` of the support and keeps those lying in each
/// completed field, i.e. those that never split a fiber's support cells.
/// True iff only the empty set and the full support survive.
pub fn oracle_d_trivial(kj: &KJoint) -> Result<bool> {
    if kj.cell_count() > D_TRIVIAL_MAX_CELLS {
        return Err(Error::BudgetExceeded {
            what: "cells for common-event enumeration",
            needed: kj.cell_count(),
            limit: D_TRIVIAL_MAX_CELLS,
        });
    }
    let cells = kj.support_cells();
    let n = cells.len();
    let mut linked = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let (ca, cb) = (kj.coords(cells[a]), kj.coords(cells[b]));
            if ca.iter().zip(&cb).filter(|(u, v)| u != v).count() == 1 {
                linked.push((a, b));
            }
        }
    }
    let full = (1u32 << n) - 1;
    Ok((1..full).all(|f| linked.iter().any(|&(a, b)| (f >> a & 1) != (f >> b & 1))))
}

/// Brute-force test that completing commutes with intersecting for the
/// given fields: every tuple `A_i ∈ σ(parts[i])` whose members agree a.s.
/// (`P(∩A_i) + P(∩A_i^c) = 1`) must have its common trace on the support
/// equal to the trace of an event of the plain intersection `∩σ(parts[i])`.
pub fn oracle_k_completion_commutes(kj: &KJoint, parts: &[Partition]) -> Result<bool> {
    if parts.len() < 2 {
        return Err(Error::InvalidArgument("need at least two fields".into()));
    }
    if parts.iter().any(|p| p.len() != kj.cell_count()) {
        return Err(Error::Shape("partition does not cover the grid".into()));
    }
    let counts: Vec<usize> = parts.iter().map(|p| p.block_count()).collect();
    let total_bits: usize = counts.iter().sum();
    check_budget("field tuples", total_bits, TUPLE_SCAN_LOG2_LIMIT)?;
    let mut plain = parts[0].clone();
    for p in &parts[1..] {
        plain = plain.common_coarsening(p)?;
    }
    let cells = kj.support_cells();
    let in_plain = |trace: &[bool]| {
        let mut seen: Vec<Option<bool>> = vec![None; plain.block_count()];
        cells.iter().zip(trace).all(|(&c, &t)| {
            let slot = &mut seen[plain.block_of(c)];
            *slot.get_or_insert(t) == t
        })
    };
    let mut choice = vec![0u64; parts.len()];
    loop {
        let member = |i: usize, c: usize| choice[i] >> parts[i].block_of(c) & 1 == 1;
        let agree = cells.iter().all(|&c| {
            let first = member(0, c);
            (1..parts.len()).all(|i| member(i, c) == first)
        });
        if agree {
            let trace: Vec<bool> = cells.iter().map(|&c| member(0, c)).collect();
            if !in_plain(&trace) {
                return Ok(false);
            }
        }
        // odometer over the block-union masks
        let mut i = 0;
        loop {
            if i == parts.len() {
                return Ok(true);
            }
            choice[i] += 1;
            if choice[i] < 1 << counts[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn check_order(kj: &KJoint, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; kj.k()];
    let ok = order.len() == kj.k()
        && order
            .iter()
            .all(|&a| a < kj.k() && !std::mem::replace(&mut seen[a], true));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "scan order {order:?} is not a permutation of 0..{}",
            kj.k()
        )))
    }
}

fn fiber_mass(kj: &KJoint, cell: usize, axis: usize) -> f64 {
    kj.fiber(cell, axis).iter().map(|&c| kj.prob[c]).sum()
}

/// Systematic-scan kernel on the cells whose fiber along the first scanned
/// axis has positive mass, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct KKernel {
    order: Vec<usize>,
    states: Vec<usize>,
    matrix: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl MarkovKernel for KKernel {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn stationary(&self) -> &[f64] {
        &self.stationary
    }
}

impl KKernel {
    /// Flat cell index of each kernel state.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// One sweep resamples the coordinates in `order` (0-based axes), each from
/// its full conditional given the others.
pub fn build_k_kernel(kj: &KJoint, order: &[usize]) -> Result<KKernel> {
    check_order(kj, order)?;
    let n = kj.cell_count();
    let states: Vec<usize> = (0..n)
        .filter(|&c| kj.fiber(c, order[0]).iter().any(|&f| kj.support[f]))
        .collect();
    let mut pos = vec![usize::MAX; n];
    states.iter().enumerate().for_each(|(i, &c)| pos[c] = i);
    let mut matrix = DMatrix::zeros(states.len(), states.len());
    for (r, &s) in states.iter().enumerate() {
        let mut dist = vec![0.0; n];
        dist[s] = 1.0;
        for &axis in order {
            let mut next = vec![0.0; n];
            for (c, &d) in dist.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let m = fiber_mass(kj, c, axis);
                if m == 0.0 {
                    return Err(Error::UndefinedConditional { cell: c, axis });
                }
                for f in kj.fiber(c, axis) {
                    next[f] += d * (kj.prob[f] / m);
                }
            }
            dist = next;
        }
        for (c, &p) in dist.iter().enumerate() {
            if p > 0.0 {
                if pos[c] == usize::MAX {
                    return Err(Error::Invariant(format!(
                        "sweep from cell {s} reaches cell {c} outside the state space"
                    )));
                }
                matrix[(r, pos[c])] = p;
            }
        }
    }
    let stationary = states.iter().map(|&c| kj.prob[c]).collect();
    Ok(KKernel {
        order: order.to_vec(),
        states,
        matrix,
        stationary,
    })
}

/// Sampler for the systematic scan, for use with the chain module.
#[derive(Debug, Clone)]
pub struct KSampler {
    kj: KJoint,
    order: Vec<usize>,
}

impl KSampler {
    pub fn new(kj: &KJoint, order: &[usize]) -> Result<Self> {
        check_order(kj, order)?;
        Ok(KSampler {
            kj: kj.clone(),
            order: order.to_vec(),
        })
    }
}

impl TransitionSampler for KSampler {
    fn shape(&self) -> &[usize] {
        &self.kj.shape
    }

    fn probs(&self) -> &[f64] {
        &self.kj.prob
    }

    fn is_valid_start(&self, cell: usize) -> bool {
        cell < self.kj.cell_count()
            && self
                .kj
                .fiber(cell, self.order[0])
                .iter()
                .any(|&f| self.kj.support[f])
    }

    fn step(&self, cell: usize, rng: &mut ChaCha20Rng) -> usize {
        let mut cur = cell;
        for &axis in &self.order {
            let fiber = self.kj.fiber(cur, axis);
            let m = fiber_mass(&self.kj, cur, axis);
            let row: Vec<f64> = fiber.iter().map(|&f| self.kj.prob[f] / m).collect();
            cur = fiber[sample_index(&row, rng)];
        }
        cur
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::sigma::{check_null_splits_reducible, d_atoms};

    fn cube(support: &[[usize; 3]]) -> KJoint {
        let mut w = vec![0.0; 8];
        for c in support {
            w[c[0] * 4 + c[1] * 2 + c[2]] = 1.0;
        }
        KJoint::from_weights(vec![2, 2, 2], w).unwrap()
    }

    #[test]
    fn validation() {
        assert!(KJoint::from_weights(vec![4], vec![1.0; 4]).is_err());
        assert!(KJoint::from_weights(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(KJoint::from_weights(vec![2, 0], vec![]).is_err());
        assert!(KJoint::from_weights(vec![2, 2], vec![0.0; 4]).is_err());
        assert!(KJoint::from_weights(vec![2, 2], vec![1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let kj = KJoint::from_weights(vec![3, 2, 4], vec![1.0; 24]).unwrap();
        for c in 0..24 {
            assert_eq!(kj.index(&kj.coords(c)), Some(c));
        }
        assert_eq!(kj.fiber(kj.index(&[1, 1, 2]).unwrap(), 0), vec![6, 14, 22]);
        assert_eq!(
            kj.fiber(kj.index(&[1, 1, 2]).unwrap(), 2),
            vec![12, 13, 14, 15]
        );
    }

    #[test]
    fn atoms_of_cube_fixtures() {
        let diag = cube(&[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(hamming_atoms(&diag).block_count(), 2);
        let r = check_k_admissible(&diag);
        assert!(!r.admissible);
        assert_eq!(r.witness, Some((vec![0], vec![7])));
        assert!(!oracle_d_trivial(&diag).unwrap());

        let stair = cube(&[[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]]);
        assert_eq!(hamming_atoms(&stair).block_count(), 1);
        assert!(oracle_d_trivial(&stair).unwrap());

        let full = KJoint::from_weights(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        assert!(check_k_admissible(&full).admissible);
        assert!(oracle_d_trivial(&full).unwrap());
    }

    #[test]
    fn embedding_matches_two_components() {
        let j = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let kj = KJoint::from_joint(&j);
        assert_eq!(hamming_atoms(&kj), d_atoms(&j));
        assert!(oracle_d_trivial(&kj).unwrap());
        let k = build_k_kernel(&kj, &[1, 0]).unwrap();
        assert_eq!(k.matrix(), build_kernel(&j).matrix());
    }

    #[test]
    fn completion_oracle() {
        let diag = cube(&[[0, 0, 0], [1, 1, 1]]);
        let fibers: Vec<Partition> = (0..3).map(|a| fiber_partition(&diag, a)).collect();
        assert!(!oracle_k_completion_commutes(&diag, &fibers).unwrap());
        let trivial = vec![Partition::trivial(8); 3];
        assert!(oracle_k_completion_commutes(&diag, &trivial).unwrap());

        let b = FiniteJoint::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (rows, cols) = (Partition::rows(&b), Partition::columns(&b));
        let kb = KJoint::from_joint(&b);
        assert_eq!(
            oracle_k_completion_commutes(&kb, &[rows.clone(), cols.clone()]).unwrap(),
            check_null_splits_reducible(&b, &rows, &cols).unwrap().holds
        );
    }

    #[test]
    fn kernel_properties() {
        let kj = KJoint::from_weights(vec![2, 3, 2], (1..=12).map(|v| v as f64).collect()).unwrap();
        let k = build_k_kernel(&kj, &[2, 0, 1]).unwrap();
        assert_eq!(k.states().len(), 12);
        assert!(crate::kernel::stationarity_defect(&k) < 1e-12);
        assert!(build_k_kernel(&kj, &[0, 0, 1]).is_err());

        // independent coordinates: every row is the target law
        let (a, b, c) = ([0.2, 0.8], [0.5, 0.5], [0.1, 0.9]);
        let mut w = Vec::new();
        for x in a {
            for y in b {
                for z in c {
                    w.push(x * y * z);
                }
            }
        }
        let prod = KJoint::from_weights(vec![2, 2, 2], w).unwrap();
        let k = build_k_kernel(&prod, &[0, 1, 2]).unwrap();
        for r in 0..8 {
            for s in 0..8 {
                assert!((k.matrix()[(r, s)] - prod.probs()[s]).abs() < 1e-15);
            }
        }
    }
}
