//! The Gibbs transition operator and alternating conditional expectations.
//!
//! One sweep of the chain from `(x, y)` draws `y* ~ α(x)` and then
//! `x* ~ β(y*)`, so
//!
//! ```text
//! K((x, y), (x', y')) = α(x)(y') · β(y')(x')
//! ```
//!
//! depends on the start only through `x`. The kernel state space is every
//! cell whose row has positive mass; cells in null rows have no defined
//! `α(x)` and are left out. Off-support cells of positive rows are kept as
//! legal start states.
//!
//! Alternating projections `φ_n = E(φ_{n−1} | G_n)` use `G_n = σ(Y)` for odd
//! `n` and `σ(X)` for even `n`; with that convention `K^n φ = φ_{2n}` on the
//! support.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sigma::check_gibbs_admissible;
use crate::space::FiniteJoint;

/// Tolerance on the kernel/iterate identity.
pub const ITERATE_IDENTITY_TOL: f64 = 1e-10;

/// A finite row-stochastic transition matrix with a known stationary law.
pub trait MarkovKernel {
    fn matrix(&self) -> &DMatrix<f64>;
    /// Stationary probabilities, indexed like the matrix rows.
    fn stationary(&self) -> &[f64];
    fn state_count(&self) -> usize {
        self.matrix().nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsKernel {
    x_size: usize,
    y_size: usize,
    states: Vec<(usize, usize)>,
    matrix: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl MarkovKernel for GibbsKernel {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn stationary(&self) -> &[f64] {
        &self.stationary
    }
}

impl GibbsKernel {
    /// Kernel states `(x, y)`, row-major over rows of positive mass.
    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    pub fn state_index(&self, x: usize, y: usize) -> Option<usize> {
        self.states.iter().position(|&s| s == (x, y))
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }
}

pub fn build_kernel(j: &FiniteJoint) -> GibbsKernel {
    let alpha = j.conditional_alpha();
    let beta = j.conditional_beta();
    let states: Vec<(usize, usize)> = (0..j.x_size())
        .filter(|&x| alpha.row(x).is_some())
        .flat_map(|x| (0..j.y_size()).map(move |y| (x, y)))
        .collect();
    let n = states.len();
    let mut matrix = DMatrix::zeros(n, n);
    for (r, &(x, _)) in states.iter().enumerate() {
        let a = alpha.row(x).expect("state rows have positive mass");
        for (c, &(x2, y2)) in states.iter().enumerate() {
            if let Some(b) = beta.row(y2) {
                matrix[(r, c)] = a[y2] * b[x2];
            }
        }
    }
    let stationary = states.iter().map(|&(x, y)| j.prob(x, y)).collect();
    GibbsKernel {
        x_size: j.x_size(),
        y_size: j.y_size(),
        states,
        matrix,
        stationary,
    }
}

/// `K^n` by repeated multiplication; `K^0` is the identity.
pub fn kernel_power(k: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(k.nrows(), k.ncols());
    for _ in 0..n {
        out = &out * k;
    }
    out
}

/// `‖π K − π‖_∞` for the kernel's own stationary vector.
pub fn stationarity_defect<K: MarkovKernel + ?Sized>(k: &K) -> f64 {
    let pi = DVector::from_column_slice(k.stationary());
    let pushed = k.matrix().transpose() * &pi;
    (pushed - pi).amax()
}

/// A real function on the product grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableFn {
    x_size: usize,
    y_size: usize,
    values: Vec<f64>,
}

impl ObservableFn {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let x_size = rows.len();
        let y_size = rows.first().map_or(0, Vec::len);
        if x_size == 0 || y_size == 0 || rows.iter().any(|r| r.len() != y_size) {
            return Err(Error::Shape("observable grid is empty or ragged".into()));
        }
        let values: Vec<f64> = rows.concat();
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite observable value {bad}"
            )));
        }
        Ok(ObservableFn {
            x_size,
            y_size,
            values,
        })
    }

    pub fn constant(x_size: usize, y_size: usize, c: f64) -> Self {
        ObservableFn {
            x_size,
            y_size,
            values: vec![c; x_size * y_size],
        }
    }

    pub fn indicator(x_size: usize, y_size: usize, x: usize, y: usize) -> Self {
        let mut values = vec![0.0; x_size * y_size];
        values[x * y_size + y] = 1.0;
        ObservableFn {
            x_size,
            y_size,
            values,
        }
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.y_size + y]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.y_size)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    /// `∫ φ dP`.
    pub fn integral(&self, j: &FiniteJoint) -> f64 {
        self.values.iter().zip(j.probs()).map(|(v, p)| v * p).sum()
    }

    fn check_shape(&self, j: &FiniteJoint) -> Result<()> {
        if (self.x_size, self.y_size) != (j.x_size(), j.y_size()) {
            return Err(Error::Shape(format!(
                "observable is {}x{}, joint is {}x{}",
                self.x_size,
                self.y_size,
                j.x_size(),
                j.y_size()
            )));
        }
        Ok(())
    }
}

/// Which coordinate field the first projection conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Conditioning {
    X,
    Y,
}

impl Conditioning {
    fn other(self) -> Self {
        match self {
            Conditioning::X => Conditioning::Y,
            Conditioning::Y => Conditioning::X,
        }
    }
}

/// `φ_0, φ_1, …`: step `n ≥ 1` conditions on `first` for odd `n` and on the
/// other coordinate for even `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateTrace {
    pub first: Conditioning,
    pub steps: Vec<ObservableFn>,
}

impl IterateTrace {
    /// The field step `n ≥ 1` is measurable with respect to.
    pub fn conditioning_at(&self, n: usize) -> Conditioning {
        if n % 2 == 1 {
            self.first
        } else {
            self.first.other()
        }
    }
}

/// `E(g | σ(X))` or `E(g | σ(Y))`. Null rows or columns, where the
/// conditional law is undefined, get the value 0.
pub fn conditional_expectation(
    j: &FiniteJoint,
    g: &ObservableFn,
    given: Conditioning,
) -> Result<ObservableFn> {
    g.check_shape(j)?;
    let (xs, ys) = (j.x_size(), j.y_size());
    let mut values = vec![0.0; xs * ys];
    match given {
        Conditioning::X => {
            let alpha = j.conditional_alpha();
            for x in 0..xs {
                if let Some(a) = alpha.row(x) {
                    let m: f64 = (0..ys).map(|y| a[y] * g.value(x, y)).sum();
                    values[x * ys..(x + 1) * ys].fill(m);
                }
            }
        }
        Conditioning::Y => {
            let beta = j.conditional_beta();
            for y in 0..ys {
                if let Some(b) = beta.row(y) {
                    let m: f64 = (0..xs).map(|x| b[x] * g.value(x, y)).sum();
                    (0..xs).for_each(|x| values[x * ys + y] = m);
                }
            }
        }
    }
    Ok(ObservableFn {
        x_size: xs,
        y_size: ys,
        values,
    })
}

/// Alternating conditional expectations starting with `σ(Y)`.
pub fn bc_iterates(j: &FiniteJoint, phi: &ObservableFn, n_max: usize) -> Result<IterateTrace> {
    bc_iterates_from(j, phi, n_max, Conditioning::Y)
}

pub fn bc_iterates_from(
    j: &FiniteJoint,
    phi: &ObservableFn,
    n_max: usize,
    first: Conditioning,
) -> Result<IterateTrace> {
    phi.check_shape(j)?;
    let mut steps = Vec::with_capacity(n_max + 1);
    steps.push(phi.clone());
    let mut given = first;
    for _ in 0..n_max {
        let next = conditional_expectation(j, steps.last().expect("nonempty"), given)?;
        steps.push(next);
        given = given.other();
    }
    Ok(IterateTrace { first, steps })
}

/// `max |(K^n φ)(ω) − φ_{2n}(ω)|` over support states `ω` and `1 ≤ n ≤ n_max`.
pub fn verify_kernel_iterate_identity(
    j: &FiniteJoint,
    phi: &ObservableFn,
    n_max: usize,
) -> Result<f64> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let trace = bc_iterates(j, phi, 2 * n_max)?;
    let k = build_kernel(j);
    let mut pushed = DVector::from_iterator(
        k.states.len(),
        k.states.iter().map(|&(x, y)| phi.value(x, y)),
    );
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        pushed = &k.matrix * pushed;
        let target = &trace.steps[2 * n];
        for (s, &(x, y)) in k.states.iter().enumerate() {
            if j.in_support(x, y) {
                worst = worst.max((pushed[s] - target.value(x, y)).abs());
            }
        }
    }
    Ok(worst)
}

/// `E(φ | D)`: on each atom the conditional mean of `φ`. Off-support cells
/// in a positive row take the value of that row's atom; cells in null rows
/// are 0.
pub fn limit_conditional_d(j: &FiniteJoint, phi: &ObservableFn) -> Result<ObservableFn> {
    phi.check_shape(j)?;
    let report = check_gibbs_admissible(j);
    let cells = j.support_cells();
    let n_atoms = report.atom_count;
    let mut num = vec![0.0; n_atoms];
    let mut den = vec![0.0; n_atoms];
    let mut row_atom = vec![None; j.x_size()];
    for (k, &c) in cells.iter().enumerate() {
        let a = report.atoms.block_of(k);
        let (x, y) = j.coords(c);
        num[a] += j.probs()[c] * phi.value(x, y);
        den[a] += j.probs()[c];
        row_atom[x] = Some(a);
    }
    let values = (0..j.cell_count())
        .map(|c| {
            let (x, _) = j.coords(c);
            row_atom[x].map_or(0.0, |a| num[a] / den[a])
        })
        .collect();
    Ok(ObservableFn {
        x_size: j.x_size(),
        y_size: j.y_size(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlainMeanConvergence {
    pub converged: bool,
    /// First `n` with `sup |φ_{2n} − ∫φ dP| < tol` over the support.
    pub sweeps: Option<usize>,
    /// Sup-norm gap at the last evaluated sweep.
    pub final_gap: f64,
}

/// Whether the even iterates `φ_{2n}` reach the constant `∫ φ dP` (the
/// conditional expectation given the plain intersection `σ(X) ∩ σ(Y)`,
/// which is trivial) within `n_budget` sweeps.
pub fn check_iterates_reach_plain_mean(
    j: &FiniteJoint,
    phi: &ObservableFn,
    tol: f64,
    n_budget: usize,
) -> Result<PlainMeanConvergence> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    phi.check_shape(j)?;
    let target = phi.integral(j);
    let support = j.support_cells();
    let gap = |g: &ObservableFn| {
        support
            .iter()
            .map(|&c| (g.values[c] - target).abs())
            .fold(0.0, f64::max)
    };
    let mut current = phi.clone();
    let mut last = gap(&current);
    for n in 0..=n_budget {
        if n > 0 {
            let half = conditional_expectation(j, &current, Conditioning::Y)?;
            current = conditional_expectation(j, &half, Conditioning::X)?;
            last = gap(&current);
        }
        if last < tol {
            return Ok(PlainMeanConvergence {
                converged: true,
                sweeps: Some(n),
                final_gap: last,
            });
        }
    }
    Ok(PlainMeanConvergence {
        converged: false,
        sweeps: None,
        final_gap: last,
    })
}
