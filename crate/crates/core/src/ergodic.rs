//! Total variation convergence, aperiodicity and minorization certificates.
//!
//! Total variation is the sup-over-events convention, `½ Σ |p_i − q_i|`.
//! Under a minorization `K(ω, ·) ≥ ε γ(·)` holding at every state, the
//! coupling bound reads `‖K^n(ω, ·) − P‖ ≤ (1 − ε)^n` with no leading
//! constant in this convention.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{check_budget, Error, Result};
use crate::kernel::{build_kernel, MarkovKernel};
use crate::sigma::RECTANGLE_SCAN_LOG2_LIMIT;
use crate::space::FiniteJoint;

/// A TV curve whose last value is below this counts as converged.
pub const ERGODIC_TAIL_TOL: f64 = 1e-9;
/// Curve values at or below this are round-off and are ignored by the rate fit.
pub const RATE_FIT_FLOOR: f64 = 1e-13;

/// States whose one-step law is absolutely continuous with respect to the
/// stationary law, indexed like the kernel states.
pub fn compute_s0<K: MarkovKernel + ?Sized>(k: &K) -> Vec<bool> {
    let m = k.matrix();
    let pi = k.stationary();
    (0..m.nrows())
        .map(|r| (0..m.ncols()).all(|c| m[(r, c)] == 0.0 || pi[c] > 0.0))
        .collect()
}

/// `sup_F |p(F) − q(F)| = ½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "probability vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    for v in [p, q] {
        let total: f64 = v.iter().sum();
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "tv_distance needs probability vectors".into(),
            ));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn row_tv(m: &DMatrix<f64>, r: usize, pi: &[f64]) -> f64 {
    0.5 * (0..m.ncols())
        .map(|c| (m[(r, c)] - pi[c]).abs())
        .sum::<f64>()
}

/// `max_ω ‖K^n(ω, ·) − P‖` for `n = 0, 1, …, n_max`.
pub fn tv_curve<K: MarkovKernel + ?Sized>(k: &K, n_max: usize) -> Vec<f64> {
    let m = k.matrix();
    let pi = k.stationary();
    let n = m.nrows();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut curve = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        if step > 0 {
            power = &power * m;
        }
        curve.push((0..n).map(|r| row_tv(&power, r, pi)).fold(0.0, f64::max));
    }
    curve
}

/// Geometric rate fitted by least squares to `ln tv(n)` over the last half
/// of the curve entries above [`RATE_FIT_FLOOR`] (excluding `n = 0`).
pub fn fitted_rate(curve: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > RATE_FIT_FLOOR)
        .map(|(n, v)| (n as f64, v.ln()))
        .collect();
    let tail = &pts[pts.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let len = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / len;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}

/// Rectangle `U × V` and constants with `s·1_{U×V} ≤ f` and `f_1 ≤ t·1_U`,
/// giving the minorization constant `ε = (s/t)·ν(V)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeblinCertificate {
    pub u: Vec<bool>,
    pub v: Vec<bool>,
    pub s: f64,
    pub t: f64,
    pub epsilon: f64,
    pub rate_bound: f64,
}

fn row_density_sums(j: &FiniteJoint, f: &[f64]) -> Vec<f64> {
    (0..j.x_size())
        .map(|x| (0..j.y_size()).map(|y| f[j.idx(x, y)] * j.nu()[y]).sum())
        .collect()
}

/// Exhaustive search for the certificate with the largest `ε`. Ties go to
/// the first pair in ascending `(U mask, V mask)` order. `s` and `t` are
/// taken tight: `s = min f` over `U × V`, `t = max f_1` over `U`.
pub fn doeblin_certificate(j: &FiniteJoint) -> Result<Option<DoeblinCertificate>> {
    let (xs, ys) = (j.x_size(), j.y_size());
    check_budget("rectangles", xs + ys, RECTANGLE_SCAN_LOG2_LIMIT)?;
    let f = j.density();
    let f1 = row_density_sums(j, &f);
    let mut best: Option<DoeblinCertificate> = None;
    for u in 1u64..1 << xs {
        let in_u = |x: usize| u >> x & 1 == 1;
        // f_1 must vanish off U, and s > 0 forces every row of U positive
        if (0..xs).any(|x| !in_u(x) && f1[x] > 0.0) || (0..xs).any(|x| in_u(x) && f1[x] == 0.0) {
            continue;
        }
        let t = (0..xs)
            .filter(|&x| in_u(x))
            .map(|x| f1[x])
            .fold(0.0, f64::max);
        for v in 1u64..1 << ys {
            let in_v = |y: usize| v >> y & 1 == 1;
            let s = (0..xs)
                .filter(|&x| in_u(x))
                .flat_map(|x| (0..ys).filter(|&y| in_v(y)).map(move |y| (x, y)))
                .map(|(x, y)| f[j.idx(x, y)])
                .fold(f64::INFINITY, f64::min);
            if s <= 0.0 {
                continue;
            }
            let nu_v: f64 = (0..ys).filter(|&y| in_v(y)).map(|y| j.nu()[y]).sum();
            let epsilon = s / t * nu_v;
            if best.as_ref().is_none_or(|b| epsilon > b.epsilon) {
                best = Some(DoeblinCertificate {
                    u: (0..xs).map(in_u).collect(),
                    v: (0..ys).map(in_v).collect(),
                    s,
                    t,
                    epsilon,
                    rate_bound: 1.0 - epsilon,
                });
            }
        }
    }
    Ok(best)
}

/// Rectangle and level witnessing the geometric-ergodicity hypotheses:
/// `f ≥ s` on `U × V`, `f = 0` on `U^c × V^c`, `P(U × V) > 0` and
/// `sup_{U^c × V} f < s·μ(U)/μ(U^c)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricCertificate {
    pub u: Vec<bool>,
    pub v: Vec<bool>,
    pub s: f64,
}

/// First qualifying rectangle in ascending `(U mask, V mask)` order, with
/// `s = min f` over `U × V`. An empty `U^c` makes the last inequality hold.
pub fn geometric_hypotheses(j: &FiniteJoint) -> Result<Option<GeometricCertificate>> {
    let (xs, ys) = (j.x_size(), j.y_size());
    check_budget("rectangles", xs + ys, RECTANGLE_SCAN_LOG2_LIMIT)?;
    let f = j.density();
    for u in 1u64..1 << xs {
        for v in 1u64..1 << ys {
            if let Some(s) = geometric_check(j, &f, u, v) {
                return Ok(Some(GeometricCertificate {
                    u: (0..xs).map(|x| u >> x & 1 == 1).collect(),
                    v: (0..ys).map(|y| v >> y & 1 == 1).collect(),
                    s,
                }));
            }
        }
    }
    Ok(None)
}

/// The level `s` if `(U, V)` meets every hypothesis.
fn geometric_check(j: &FiniteJoint, f: &[f64], u: u64, v: u64) -> Option<f64> {
    let (xs, ys) = (j.x_size(), j.y_size());
    let in_u = |x: usize| u >> x & 1 == 1;
    let in_v = |y: usize| v >> y & 1 == 1;
    let mut s = f64::INFINITY;
    let mut outside_sup = 0.0f64;
    for x in 0..xs {
        for y in 0..ys {
            let val = f[j.idx(x, y)];
            match (in_u(x), in_v(y)) {
                (true, true) => s = s.min(val),
                (false, false) if val != 0.0 => return None,
                (false, true) => outside_sup = outside_sup.max(val),
                _ => {}
            }
        }
    }
    if s <= 0.0 {
        return None;
    }
    let mu_u: f64 = (0..xs).filter(|&x| in_u(x)).map(|x| j.mu()[x]).sum();
    let mu_uc: f64 = (0..xs).filter(|&x| !in_u(x)).map(|x| j.mu()[x]).sum();
    let ok = mu_uc == 0.0 || outside_sup < s * mu_u / mu_uc;
    ok.then_some(s)
}

/// Whether every closed communicating class of the kernel's support digraph
/// has period 1. Computed on the graph, not from eigenvalues.
pub fn check_aperiodic<K: MarkovKernel + ?Sized>(k: &K) -> bool {
    let m = k.matrix();
    let n = m.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for r in 0..n {
        for c in 0..n {
            if m[(r, c)] > 0.0 {
                g.add_edge(nodes[r], nodes[c], ());
            }
        }
    }
    let mut class = vec![usize::MAX; n];
    let sccs = tarjan_scc(&g);
    for (i, comp) in sccs.iter().enumerate() {
        comp.iter().for_each(|v| class[v.index()] = i);
    }
    sccs.iter().enumerate().all(|(i, comp)| {
        let members: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        let closed = members
            .iter()
            .all(|&r| (0..n).all(|c| m[(r, c)] == 0.0 || class[c] == i));
        !closed || class_period(m, &members, &class, i) == 1
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected class: gcd of `level(u) + 1 − level(v)`
/// over its edges, with BFS levels from any member.
fn class_period(m: &DMatrix<f64>, members: &[usize], class: &[usize], id: usize) -> usize {
    let n = m.nrows();
    let mut level = vec![usize::MAX; n];
    let start = members[0];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut period = 0;
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if m[(r, c)] > 0.0 && class[c] == id {
                if level[c] == usize::MAX {
                    level[c] = level[r] + 1;
                    queue.push_back(c);
                } else {
                    period = gcd(period, (level[r] + 1).abs_diff(level[c]));
                }
            }
        }
    }
    // a single state without a self-loop cannot be closed, so period > 0 here
    period.max(1)
}

/// Second-largest eigenvalue modulus of a transition matrix (moduli sorted
/// with multiplicity), clamped to `[0, 1]`; 0 for a single state.
pub fn spectral_rate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < 2 {
        return 0.0;
    }
    let mut moduli: Vec<f64> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli[1].clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    /// Every kernel state has a one-step law absolutely continuous w.r.t. `P`.
    pub s0_full: bool,
    pub aperiodic: bool,
    /// Last curve value below [`ERGODIC_TAIL_TOL`].
    pub ergodic: bool,
    /// Sup-over-start TV distance for `n = 0..=n_max`.
    pub tv_curve: Vec<f64>,
    pub fitted_rate: Option<f64>,
    pub spectral_rate: f64,
    pub certificate: Option<DoeblinCertificate>,
}

/// Full ergodicity analysis of the Gibbs kernel of `j`. The Doeblin search
/// runs only when `with_certificate` is set.
pub fn ergodicity_report(
    j: &FiniteJoint,
    n_max: usize,
    with_certificate: bool,
) -> Result<ErgodicityReport> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let k = build_kernel(j);
    let s0 = compute_s0(&k);
    let curve = tv_curve(&k, n_max);
    let certificate = if with_certificate {
        doeblin_certificate(j)?
    } else {
        None
    };
    if let Some(c) = &certificate {
        let mut bound = 1.0;
        for (n, v) in curve.iter().enumerate() {
            if n > 0 {
                bound *= c.rate_bound;
            }
            if *v > bound + 1e-12 {
                return Err(Error::Invariant(format!(
                    "TV {v} at n = {n} exceeds the minorization bound {bound}"
                )));
            }
        }
    }
    Ok(ErgodicityReport {
        s0_full: s0.iter().all(|b| *b),
        aperiodic: check_aperiodic(&k),
        ergodic: curve.last().is_some_and(|v| *v < ERGODIC_TAIL_TOL),
        fitted_rate: fitted_rate(&curve),
        spectral_rate: spectral_rate(k.matrix()),
        tv_curve: curve,
        certificate,
    })
}
