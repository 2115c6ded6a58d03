//! Sets with the trivial intersection property (TIP).
//!
//! `H` is TIP when the law `Q_H`, uniform on `H` with respect to the base
//! product measure, is Gibbs-admissible. This module implements `Q_H`, the
//! TIP predicate, the "communicates" relation that glues TIP sets into larger
//! TIP sets, a band-cross certificate for admissibility, finite mixtures with
//! their sufficient conditions, and generators for the standard
//! counterexamples.

use serde::Serialize;

use crate::error::{check_budget, Error, Result};
use crate::sigma::{check_gibbs_admissible, RECTANGLE_SCAN_LOG2_LIMIT};
use crate::space::{build_joint, Event, FiniteJoint, Rectangle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TipReport {
    pub tip: bool,
    /// Components of the bipartite graph of `H`'s cells.
    pub components: usize,
}

/// `Q_H`: the base product measure restricted to `H` and normalized.
///
/// The base measures are normalized first, so rescaling `mu` or `nu` by a
/// positive constant leaves the result unchanged up to rounding.
pub fn conditioned(mu: &[f64], nu: &[f64], h: &Event) -> Result<FiniteJoint> {
    let (xs, ys) = (mu.len(), nu.len());
    if h.x_size() != xs || h.y_size() != ys {
        return Err(Error::Shape(format!(
            "event is {}x{}, base measures give {xs}x{ys}",
            h.x_size(),
            h.y_size()
        )));
    }
    if h.is_empty() {
        return Err(Error::NullSet("H has zero base measure".into()));
    }
    let mu0 = normalized(mu, "mu")?;
    let nu0 = normalized(nu, "nu")?;
    let weights: Vec<Vec<f64>> = (0..xs)
        .map(|x| {
            (0..ys)
                .map(|y| {
                    if h.contains(x, y) {
                        mu0[x] * nu0[y]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    build_joint(&weights, None, None, Some(mu0), Some(nu0))
}

fn normalized(m: &[f64], name: &str) -> Result<Vec<f64>> {
    if let Some(bad) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidMeasure {
            position: name.to_string(),
            value: *bad,
        });
    }
    let total: f64 = m.iter().sum();
    Ok(m.iter().map(|v| v / total).collect())
}

pub fn is_tip(mu: &[f64], nu: &[f64], h: &Event) -> Result<TipReport> {
    let q = conditioned(mu, nu, h)?;
    let report = check_gibbs_admissible(&q);
    Ok(TipReport {
        tip: report.admissible,
        components: report.atom_count,
    })
}

/// How two sets were found to communicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Communication {
    /// Both sections along this column are non-null.
    Column(usize),
    /// Both sections along this row are non-null.
    Row(usize),
}

/// Whether `F` and `G` communicate: some column (checked first) or some row
/// on which both sections have positive base measure. With strictly positive
/// base measures a section is non-null iff nonempty. A band `V_0` of columns
/// works iff any single column of it does, so singletons suffice.
pub fn communicates(mu: &[f64], nu: &[f64], f: &Event, g: &Event) -> Option<Communication> {
    let (xs, ys) = (mu.len(), nu.len());
    let column = (0..ys).find(|&y| {
        nu[y] > 0.0
            && (0..xs).any(|x| mu[x] > 0.0 && f.contains(x, y))
            && (0..xs).any(|x| mu[x] > 0.0 && g.contains(x, y))
    });
    if let Some(y) = column {
        return Some(Communication::Column(y));
    }
    (0..xs)
        .find(|&x| {
            mu[x] > 0.0
                && (0..ys).any(|y| nu[y] > 0.0 && f.contains(x, y))
                && (0..ys).any(|y| nu[y] > 0.0 && g.contains(x, y))
        })
        .map(Communication::Row)
}

/// Result of checking a chain `H_1, H_2, …` of sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnionChainReport {
    /// Every member is TIP and consecutive members communicate.
    pub valid: bool,
    /// 1-based index of the first member that is not TIP.
    pub first_non_tip: Option<usize>,
    /// 1-based index `n` of the first pair `(H_n, H_{n+1})` that does not communicate.
    pub first_gap: Option<usize>,
    /// Independently computed TIP verdict of the union.
    pub union_tip: bool,
}

pub fn tip_union_chain(mu: &[f64], nu: &[f64], sets: &[Event]) -> Result<UnionChainReport> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty set chain".into()))?;
    let mut first_non_tip = None;
    for (i, h) in sets.iter().enumerate() {
        if !is_tip(mu, nu, h)?.tip && first_non_tip.is_none() {
            first_non_tip = Some(i + 1);
        }
    }
    let first_gap = sets
        .windows(2)
        .position(|w| communicates(mu, nu, &w[0], &w[1]).is_none())
        .map(|i| i + 1);
    let union = sets
        .iter()
        .skip(1)
        .fold(first.clone(), |acc, h| acc.union(h));
    let union_tip = is_tip(mu, nu, &union)?.tip;
    let valid = first_non_tip.is_none() && first_gap.is_none();
    if valid && !union_tip {
        return Err(Error::Invariant(
            "communicating chain of TIP sets has a non-TIP union".into(),
        ));
    }
    Ok(UnionChainReport {
        valid,
        first_non_tip,
        first_gap,
        union_tip,
    })
}

/// Band-cross certificate: `(U0, V0)` with `P(U0 × V0) > 0` and
/// `(U0 × Y) ∪ (X × V0) ⊃ {f > 0} ⊃ U0 × V0`.
///
/// Searches `U0` by ascending mask and, for each, `V0` by descending mask.
pub fn band_cross_certificate(j: &FiniteJoint) -> Result<Option<Rectangle>> {
    let (xs, ys) = (j.x_size(), j.y_size());
    check_budget("rectangles", xs + ys, RECTANGLE_SCAN_LOG2_LIMIT)?;
    let rows: Vec<u64> = (0..xs)
        .map(|x| {
            (0..ys)
                .filter(|&y| j.in_support(x, y))
                .fold(0u64, |m, y| m | 1 << y)
        })
        .collect();
    let ymask = (1u64 << ys) - 1;
    for u in 1u64..1 << xs {
        for v in (1..=ymask).rev() {
            let ok = (0..xs).all(|x| {
                let r = rows[x];
                if u >> x & 1 == 1 {
                    r & v == v
                } else {
                    r & !v == 0
                }
            });
            if ok {
                let cert = Rectangle::new(
                    (0..xs).map(|x| u >> x & 1 == 1).collect(),
                    (0..ys).map(|y| v >> y & 1 == 1).collect(),
                );
                if !check_gibbs_admissible(j).admissible {
                    return Err(Error::Invariant(
                        "band-cross certificate found for a non-admissible joint".into(),
                    ));
                }
                return Ok(Some(cert));
            }
        }
    }
    Ok(None)
}

/// A finite mixture `Σ_θ w_θ P_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<FiniteJoint>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<FiniteJoint>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Shape(format!(
                "{} mixture weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(
                "mixture weights must be positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}"
            )));
        }
        let first = &components[0];
        for c in &components[1..] {
            if c.x_size() != first.x_size()
                || c.y_size() != first.y_size()
                || c.mu() != first.mu()
                || c.nu() != first.nu()
            {
                return Err(Error::Shape(
                    "mixture components differ in shape or base measures".into(),
                ));
            }
        }
        Ok(Mixture {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[FiniteJoint] {
        &self.components
    }
}

pub fn mixture_joint(m: &Mixture) -> Result<FiniteJoint> {
    let first = &m.components[0];
    let (xs, ys) = (first.x_size(), first.y_size());
    let mut weights = vec![vec![0.0; ys]; xs];
    for (w, c) in m.weights.iter().zip(&m.components) {
        for (x, row) in weights.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                *cell += w * c.prob(x, y);
            }
        }
    }
    build_joint(
        &weights,
        Some(first.x_labels().to_vec()),
        Some(first.y_labels().to_vec()),
        Some(first.mu().to_vec()),
        Some(first.nu().to_vec()),
    )
}

/// For every rectangle: if some component gives it mass one, every component
/// gives it positive mass. Decided from supports.
pub fn check_mixture_full_mass_positive(m: &Mixture) -> Result<bool> {
    let first = &m.components[0];
    let (xs, ys) = (first.x_size(), first.y_size());
    check_budget("rectangles", xs + ys, RECTANGLE_SCAN_LOG2_LIMIT)?;
    let row_masks: Vec<Vec<u64>> = m
        .components
        .iter()
        .map(|c| {
            (0..xs)
                .map(|x| {
                    (0..ys)
                        .filter(|&y| c.in_support(x, y))
                        .fold(0u64, |acc, y| acc | 1 << y)
                })
                .collect()
        })
        .collect();
    let ymask = (1u64 << ys) - 1;
    for u in 0u64..1 << xs {
        for v in 0..=ymask {
            let full = |rows: &Vec<u64>| {
                (0..xs).all(|x| rows[x] == 0 || (u >> x & 1 == 1 && rows[x] & !v == 0))
            };
            let positive = |rows: &Vec<u64>| (0..xs).any(|x| u >> x & 1 == 1 && rows[x] & v != 0);
            if row_masks.iter().any(full) && !row_masks.iter().all(positive) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every component support is TIP and every pair of supports communicates.
/// When this holds the mixture must be admissible; a violation is reported
/// as an invariant error.
pub fn check_mixture_tip_communicating(m: &Mixture) -> Result<bool> {
    let first = &m.components[0];
    let (mu, nu) = (first.mu(), first.nu());
    let supports: Vec<Event> = m
        .components
        .iter()
        .map(|c| Event::from_mask(c.x_size(), c.y_size(), c.support_mask().to_vec()))
        .collect::<Result<_>>()?;
    for s in &supports {
        if !is_tip(mu, nu, s)?.tip {
            return Ok(false);
        }
    }
    for (i, a) in supports.iter().enumerate() {
        for b in &supports[i + 1..] {
            if communicates(mu, nu, a, b).is_none() {
                return Ok(false);
            }
        }
    }
    if !check_gibbs_admissible(&mixture_joint(m)?).admissible {
        return Err(Error::Invariant(
            "TIP, pairwise communicating mixture is not admissible".into(),
        ));
    }
    Ok(true)
}

/// A decreasing chain of TIP sets and the set it shrinks to.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkingBridge {
    /// `H_1 ⊃ H_2 ⊃ …`, each TIP.
    pub chain: Vec<Event>,
    /// The limit of the chain, contained in every member and not TIP.
    pub limit: Event,
}

/// Two quadrant blocks joined by a bridge that narrows one row per step.
///
/// On an `n × n` grid with `h = n / 2`, the lower block is `{x < h, y < h}`
/// and the upper block is `{x ≥ h − w, y ≥ h}`. Widths `w = h − 1, …, 1`
/// give TIP sets: row `h − w` meets both blocks. At `w = 0` the blocks no
/// longer share a row or column and the union is not TIP.
pub fn gen_shrinking_bridge(n: usize) -> Result<ShrinkingBridge> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid size {n} too small to separate the blocks (need n ≥ 4)"
        )));
    }
    let h = n / 2;
    let set = |w: usize| {
        let cells: Vec<(usize, usize)> = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| (x < h && y < h) || (x + w >= h && y >= h))
            .collect();
        Event::from_cells(n, n, &cells).expect("cells inside grid")
    };
    let chain: Vec<Event> = (1..h).rev().map(set).collect();
    let limit = set(0);
    let ones = vec![1.0; n];
    for pair in chain.windows(2) {
        debug_assert!(pair[1].is_subset(&pair[0]));
    }
    for member in &chain {
        if !is_tip(&ones, &ones, member)?.tip {
            return Err(Error::Invariant("bridge member is not TIP".into()));
        }
    }
    if is_tip(&ones, &ones, &limit)?.tip {
        return Err(Error::Invariant("bridge limit is TIP".into()));
    }
    Ok(ShrinkingBridge { chain, limit })
}

/// Uniform law on `{(x, y) : x, y ∈ I or x, y ∉ I}` over a square grid.
pub fn gen_split_diagonal(size: usize, set: &[usize]) -> Result<FiniteJoint> {
    let mut inside = vec![false; size];
    for &i in set {
        if i >= size {
            return Err(Error::InvalidArgument(format!(
                "index {i} outside 0..{size}"
            )));
        }
        inside[i] = true;
    }
    let count = inside.iter().filter(|b| **b).count();
    if count == 0 || count == size {
        return Err(Error::InvalidArgument(
            "the split set must be proper and nonempty".into(),
        ));
    }
    let weights = (0..size)
        .map(|x| {
            (0..size)
                .map(|y| if inside[x] == inside[y] { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    FiniteJoint::from_rows(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma::atom_masses;
    use approx::assert_abs_diff_eq;

    const ONES: [f64; 2] = [1.0, 1.0];

    fn ev(cells: &[(usize, usize)]) -> Event {
        Event::from_cells(2, 2, cells).unwrap()
    }

    fn l_shape() -> Event {
        ev(&[(0, 0), (0, 1), (1, 1)])
    }

    #[test]
    fn conditioned_measures() {
        let q = conditioned(&ONES, &ONES, &Event::full(2, 2)).unwrap();
        q.probs().iter().for_each(|p| assert_abs_diff_eq!(*p, 0.25));
        let q = conditioned(&ONES, &ONES, &l_shape()).unwrap();
        let a = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        for (p, r) in q.probs().iter().zip(a.probs()) {
            assert_abs_diff_eq!(*p, *r, epsilon = 1e-15);
        }
        assert!(matches!(
            conditioned(&ONES, &ONES, &Event::empty(2, 2)),
            Err(Error::NullSet(_))
        ));
    }

    #[test]
    fn tip_fixtures() {
        let rect = Rectangle::from_indices(2, 2, &[0, 1], &[1]).to_event();
        assert!(is_tip(&ONES, &ONES, &rect).unwrap().tip);
        let diag = ev(&[(0, 0), (1, 1)]);
        assert_eq!(
            is_tip(&ONES, &ONES, &diag).unwrap(),
            TipReport {
                tip: false,
                components: 2
            }
        );
        assert!(is_tip(&ONES, &ONES, &l_shape()).unwrap().tip);
    }

    #[test]
    fn communication() {
        let f = ev(&[(0, 0), (0, 1)]);
        let g = ev(&[(0, 1), (1, 1)]);
        assert_eq!(
            communicates(&ONES, &ONES, &f, &g),
            Some(Communication::Column(1))
        );
        assert_eq!(
            communicates(&ONES, &ONES, &ev(&[(0, 0)]), &ev(&[(1, 1)])),
            None
        );
        assert!(communicates(&ONES, &ONES, &f, &f).is_some());
        // row-only contact
        let r1 = ev(&[(0, 0)]);
        let r2 = ev(&[(0, 1)]);
        assert_eq!(
            communicates(&ONES, &ONES, &r1, &r2),
            Some(Communication::Row(0))
        );
    }

    #[test]
    fn union_chains() {
        let f = ev(&[(0, 0), (0, 1)]);
        let g = ev(&[(0, 1), (1, 1)]);
        let r = tip_union_chain(&ONES, &ONES, &[f.clone(), g]).unwrap();
        assert!(r.valid && r.union_tip);
        let r = tip_union_chain(&ONES, &ONES, &[ev(&[(0, 0)]), ev(&[(1, 1)])]).unwrap();
        assert!(!r.valid);
        assert_eq!(r.first_gap, Some(1));
        assert!(!r.union_tip);
        let r = tip_union_chain(&ONES, &ONES, &[f]).unwrap();
        assert!(r.valid);
    }

    #[test]
    fn band_cross() {
        let a = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let c = band_cross_certificate(&a).unwrap().unwrap();
        assert_eq!(c.u_indices(), vec![0]);
        assert_eq!(c.v_indices(), vec![0, 1]);

        let band = FiniteJoint::from_rows(vec![vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let c = band_cross_certificate(&band).unwrap().unwrap();
        assert_eq!(c.u_indices(), vec![1]);
        assert_eq!(c.v_indices(), vec![0, 1]);

        let b = FiniteJoint::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(band_cross_certificate(&b).unwrap(), None);
    }

    fn point(x: usize, y: usize) -> FiniteJoint {
        let mut w = vec![vec![0.0; 2]; 2];
        w[x][y] = 1.0;
        FiniteJoint::from_rows(w).unwrap()
    }

    #[test]
    fn mixtures() {
        let a = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let same = Mixture::new(vec![0.5, 0.5], vec![a.clone(), a.clone()]).unwrap();
        for (p, q) in mixture_joint(&same).unwrap().probs().iter().zip(a.probs()) {
            assert_abs_diff_eq!(*p, *q, epsilon = 1e-15);
        }
        let single = Mixture::new(vec![1.0], vec![a.clone()]).unwrap();
        assert_eq!(mixture_joint(&single).unwrap().probs(), a.probs());

        let split = Mixture::new(vec![0.5, 0.5], vec![point(0, 0), point(1, 1)]).unwrap();
        let joint = mixture_joint(&split).unwrap();
        assert_eq!(joint.probs(), &[0.5, 0.0, 0.0, 0.5]);
        assert!(!check_mixture_full_mass_positive(&split).unwrap());
        assert!(!check_mixture_tip_communicating(&split).unwrap());
        assert!(check_mixture_full_mass_positive(&single).unwrap());
        assert!(check_mixture_tip_communicating(&single).unwrap());

        let a2 = FiniteJoint::from_rows(vec![vec![3.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let twin = Mixture::new(vec![0.25, 0.75], vec![a, a2]).unwrap();
        assert!(check_mixture_full_mass_positive(&twin).unwrap());

        let top = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let right = FiniteJoint::from_rows(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let bands = Mixture::new(vec![0.5, 0.5], vec![top, right]).unwrap();
        assert!(check_mixture_tip_communicating(&bands).unwrap());
        assert!(check_gibbs_admissible(&mixture_joint(&bands).unwrap()).admissible);

        assert!(Mixture::new(vec![0.5, 0.4], vec![point(0, 0), point(1, 1)]).is_err());
        assert!(Mixture::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn shrinking_bridge() {
        let b = gen_shrinking_bridge(4).unwrap();
        assert_eq!(b.chain.len(), 1);
        assert_eq!(
            is_tip(&[1.0; 4], &[1.0; 4], &b.limit).unwrap().components,
            2
        );
        let b8 = gen_shrinking_bridge(8).unwrap();
        assert_eq!(b8.chain.len(), 3);
        for pair in b8.chain.windows(2) {
            assert!(pair[1].is_subset(&pair[0]) && pair[1] != pair[0]);
        }
        assert!(b8.chain.iter().all(|h| b8.limit.is_subset(h)));
        assert!(gen_shrinking_bridge(3).is_err());
    }

    #[test]
    fn split_diagonal() {
        let j = gen_split_diagonal(2, &[0]).unwrap();
        assert_eq!(j.probs(), &[0.5, 0.0, 0.0, 0.5]);
        let j = gen_split_diagonal(4, &[0, 2]).unwrap();
        let r = check_gibbs_admissible(&j);
        assert!(!r.admissible);
        assert_eq!(atom_masses(&j, &r.atoms), vec![0.5, 0.5]);
        let w = r.witness.unwrap();
        assert_eq!(w.u_indices(), vec![1, 3]);
        assert_eq!(w.v_indices(), vec![0, 2]);
        assert!(gen_split_diagonal(2, &[0, 1]).is_err());
        assert!(gen_split_diagonal(2, &[]).is_err());
    }

    #[test]
    fn complement_of_tip_need_not_be_tip() {
        let ones = [1.0; 3];
        let h = Event::from_cells(3, 3, &[(0, 0), (1, 1)])
            .unwrap()
            .complement();
        assert!(is_tip(&ones, &ones, &h).unwrap().tip);
        assert!(!is_tip(&ones, &ones, &h.complement()).unwrap().tip);
    }
}
