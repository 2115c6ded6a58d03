//! Finite product probability spaces.
//!
//! A [`FiniteJoint`] holds a normalized joint law on `X × Y` together with
//! strictly positive base measures `mu` on `X` and `nu` on `Y`. The support
//! is decided by exact positivity of the raw input weights and never by a
//! float threshold: every structural question downstream (null sets,
//! connectivity, atoms) reads the support mask only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for normalization identities (row sums, total mass).
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Everything needed to build a [`FiniteJoint`]. Labels and base measures are
/// optional; missing labels default to `x0, x1, …` / `y0, y1, …` and missing
/// base measures to counting measure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub weights: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
}

impl JointSpec {
    pub fn new(weights: Vec<Vec<f64>>) -> Self {
        JointSpec {
            weights,
            ..Default::default()
        }
    }

    pub fn with_base(mut self, mu: Vec<f64>, nu: Vec<f64>) -> Self {
        self.mu = Some(mu);
        self.nu = Some(nu);
        self
    }

    pub fn with_labels(mut self, x_labels: Vec<String>, y_labels: Vec<String>) -> Self {
        self.x_labels = Some(x_labels);
        self.y_labels = Some(y_labels);
        self
    }

    pub fn build(&self) -> Result<FiniteJoint> {
        build_joint(
            &self.weights,
            self.x_labels.clone(),
            self.y_labels.clone(),
            self.mu.clone(),
            self.nu.clone(),
        )
    }
}

/// A normalized joint distribution on a finite grid `X × Y`.
///
/// Grids are stored flat in row-major order: cell `(x, y)` lives at
/// `x * y_size + y`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    x_size: usize,
    y_size: usize,
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    weights: Vec<f64>,
    prob: Vec<f64>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    support: Vec<bool>,
}

/// Builds a joint from a weight grid.
///
/// Rows index `X`, columns index `Y`. `mu` and `nu` default to all-ones.
pub fn build_joint(
    weights: &[Vec<f64>],
    x_labels: Option<Vec<String>>,
    y_labels: Option<Vec<String>>,
    mu: Option<Vec<f64>>,
    nu: Option<Vec<f64>>,
) -> Result<FiniteJoint> {
    let x_size = weights.len();
    if x_size == 0 {
        return Err(Error::Shape("weight grid has no rows".into()));
    }
    let y_size = weights[0].len();
    if y_size == 0 {
        return Err(Error::Shape("weight grid has no columns".into()));
    }
    let mut flat = Vec::with_capacity(x_size * y_size);
    for (i, row) in weights.iter().enumerate() {
        if row.len() != y_size {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, expected {y_size}",
                row.len()
            )));
        }
        for (j, &w) in row.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight {
                    position: format!("({i}, {j})"),
                    value: w,
                });
            }
            flat.push(w);
        }
    }
    let mu = measure_or_counting(mu, x_size, "mu")?;
    let nu = measure_or_counting(nu, y_size, "nu")?;
    let x_labels = labels_or_default(x_labels, x_size, 'x')?;
    let y_labels = labels_or_default(y_labels, y_size, 'y')?;
    FiniteJoint::from_parts(x_size, y_size, flat, x_labels, y_labels, mu, nu)
}

fn measure_or_counting(m: Option<Vec<f64>>, len: usize, name: &str) -> Result<Vec<f64>> {
    match m {
        None => Ok(vec![1.0; len]),
        Some(v) => {
            if v.len() != len {
                return Err(Error::Shape(format!(
                    "{name} has {} entries, expected {len}",
                    v.len()
                )));
            }
            if let Some((i, &bad)) = v
                .iter()
                .enumerate()
                .find(|(_, &m)| !(m.is_finite() && m > 0.0))
            {
                return Err(Error::InvalidMeasure {
                    position: format!("{name}[{i}]"),
                    value: bad,
                });
            }
            Ok(v)
        }
    }
}

fn labels_or_default(labels: Option<Vec<String>>, len: usize, prefix: char) -> Result<Vec<String>> {
    match labels {
        None => Ok((0..len).map(|i| format!("{prefix}{i}")).collect()),
        Some(l) if l.len() == len => Ok(l),
        Some(l) => Err(Error::Shape(format!(
            "{} {prefix}-labels given, expected {len}",
            l.len()
        ))),
    }
}

impl FiniteJoint {
    fn from_parts(
        x_size: usize,
        y_size: usize,
        weights: Vec<f64>,
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        mu: Vec<f64>,
        nu: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        let prob = weights.iter().map(|w| w / total).collect();
        let support = weights.iter().map(|&w| w > 0.0).collect();
        Ok(FiniteJoint {
            x_size,
            y_size,
            x_labels,
            y_labels,
            weights,
            prob,
            mu,
            nu,
            support,
        })
    }

    /// Counting-measure joint from a weight grid with default labels.
    pub fn from_rows(weights: Vec<Vec<f64>>) -> Result<Self> {
        build_joint(&weights, None, None, None, None)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn cell_count(&self) -> usize {
        self.x_size * self.y_size
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        x * self.y_size + y
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.y_size, cell % self.y_size)
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Normalized probabilities, row-major.
    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.prob[self.idx(x, y)]
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn support_mask(&self) -> &[bool] {
        &self.support
    }

    pub fn in_support(&self, x: usize, y: usize) -> bool {
        self.support[self.idx(x, y)]
    }

    /// Support cells as flat indices, row-major.
    pub fn support_cells(&self) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| self.support[c])
            .collect()
    }

    /// Rows carrying positive mass, decided from the support mask.
    pub fn positive_rows(&self) -> Vec<bool> {
        (0..self.x_size)
            .map(|x| (0..self.y_size).any(|y| self.in_support(x, y)))
            .collect()
    }

    /// Columns carrying positive mass, decided from the support mask.
    pub fn positive_cols(&self) -> Vec<bool> {
        (0..self.y_size)
            .map(|y| (0..self.x_size).any(|x| self.in_support(x, y)))
            .collect()
    }

    /// Probability marginal of `X`.
    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.x_size)
            .map(|x| (0..self.y_size).map(|y| self.prob(x, y)).sum())
            .collect()
    }

    /// Probability marginal of `Y`.
    pub fn marginal_y(&self) -> Vec<f64> {
        (0..self.y_size)
            .map(|y| (0..self.x_size).map(|x| self.prob(x, y)).sum())
            .collect()
    }

    /// Conditional law of `Y` given `X = x`, one row per `x`.
    pub fn conditional_alpha(&self) -> Conditional {
        let rows = (0..self.x_size)
            .map(|x| {
                if !(0..self.y_size).any(|y| self.in_support(x, y)) {
                    return None;
                }
                let m: f64 = (0..self.y_size).map(|y| self.prob(x, y)).sum();
                Some((0..self.y_size).map(|y| self.prob(x, y) / m).collect())
            })
            .collect();
        Conditional { rows }
    }

    /// Conditional law of `X` given `Y = y`, one row per `y`.
    pub fn conditional_beta(&self) -> Conditional {
        let rows = (0..self.y_size)
            .map(|y| {
                if !(0..self.x_size).any(|x| self.in_support(x, y)) {
                    return None;
                }
                let m: f64 = (0..self.x_size).map(|x| self.prob(x, y)).sum();
                Some((0..self.x_size).map(|x| self.prob(x, y) / m).collect())
            })
            .collect();
        Conditional { rows }
    }

    /// Density with respect to `mu × nu`, row-major.
    pub fn density(&self) -> Vec<f64> {
        (0..self.cell_count())
            .map(|c| {
                let (x, y) = self.coords(c);
                self.prob[c] / (self.mu[x] * self.nu[y])
            })
            .collect()
    }

    pub fn event_prob(&self, e: &Event) -> Result<f64> {
        self.check_event(e)?;
        Ok(self.mass_of(&e.member))
    }

    pub(crate) fn mass_of(&self, member: &[bool]) -> f64 {
        member
            .iter()
            .zip(&self.prob)
            .filter(|(m, _)| **m)
            .map(|(_, p)| p)
            .sum()
    }

    pub(crate) fn check_event(&self, e: &Event) -> Result<()> {
        if e.x_size != self.x_size || e.y_size != self.y_size {
            return Err(Error::Shape(format!(
                "event is {}x{}, joint is {}x{}",
                e.x_size, e.y_size, self.x_size, self.y_size
            )));
        }
        Ok(())
    }

    /// True when `e` misses every support cell.
    pub fn is_null(&self, e: &Event) -> bool {
        !e.member.iter().zip(&self.support).any(|(m, s)| *m && *s)
    }

    /// Same law with the roles of `X` and `Y` exchanged.
    pub fn transpose(&self) -> FiniteJoint {
        let mut weights = Vec::with_capacity(self.cell_count());
        for y in 0..self.y_size {
            for x in 0..self.x_size {
                weights.push(self.weights[self.idx(x, y)]);
            }
        }
        FiniteJoint::from_parts(
            self.y_size,
            self.x_size,
            weights,
            self.y_labels.clone(),
            self.x_labels.clone(),
            self.nu.clone(),
            self.mu.clone(),
        )
        .expect("transpose of a valid joint is valid")
    }

    /// Raw weights as a grid of rows, the inverse of [`build_joint`].
    pub fn weight_rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .chunks(self.y_size)
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn to_spec(&self) -> JointSpec {
        JointSpec {
            weights: self.weight_rows(),
            x_labels: Some(self.x_labels.clone()),
            y_labels: Some(self.y_labels.clone()),
            mu: Some(self.mu.clone()),
            nu: Some(self.nu.clone()),
        }
    }
}

/// A subset of the product space, as a row-major membership grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    x_size: usize,
    y_size: usize,
    member: Vec<bool>,
}

impl Event {
    pub fn empty(x_size: usize, y_size: usize) -> Self {
        Event {
            x_size,
            y_size,
            member: vec![false; x_size * y_size],
        }
    }

    pub fn full(x_size: usize, y_size: usize) -> Self {
        Event {
            x_size,
            y_size,
            member: vec![true; x_size * y_size],
        }
    }

    pub fn from_mask(x_size: usize, y_size: usize, member: Vec<bool>) -> Result<Self> {
        if member.len() != x_size * y_size {
            return Err(Error::Shape(format!(
                "membership grid has {} cells, expected {}",
                member.len(),
                x_size * y_size
            )));
        }
        Ok(Event {
            x_size,
            y_size,
            member,
        })
    }

    pub fn from_cells(x_size: usize, y_size: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut e = Event::empty(x_size, y_size);
        for &(x, y) in cells {
            if x >= x_size || y >= y_size {
                return Err(Error::Shape(format!(
                    "cell ({x}, {y}) outside {x_size}x{y_size} grid"
                )));
            }
            e.member[x * y_size + y] = true;
        }
        Ok(e)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn mask(&self) -> &[bool] {
        &self.member
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.member[x * self.y_size + y]
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(c, _)| (c / self.y_size, c % self.y_size))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|m| *m)
    }

    pub fn complement(&self) -> Event {
        Event {
            member: self.member.iter().map(|m| !m).collect(),
            ..self.clone()
        }
    }

    pub fn union(&self, other: &Event) -> Event {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Event) -> Event {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn is_subset(&self, other: &Event) -> bool {
        self.member.iter().zip(&other.member).all(|(a, b)| !a || *b)
    }

    fn zip_with(&self, other: &Event, f: impl Fn(bool, bool) -> bool) -> Event {
        assert_eq!(
            (self.x_size, self.y_size),
            (other.x_size, other.y_size),
            "event shapes differ"
        );
        Event {
            member: self
                .member
                .iter()
                .zip(&other.member)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            ..self.clone()
        }
    }
}

/// The event `U × V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rectangle {
    pub u: Vec<bool>,
    pub v: Vec<bool>,
}

impl Rectangle {
    pub fn new(u: Vec<bool>, v: Vec<bool>) -> Self {
        Rectangle { u, v }
    }

    pub fn from_indices(x_size: usize, y_size: usize, us: &[usize], vs: &[usize]) -> Self {
        let mut u = vec![false; x_size];
        let mut v = vec![false; y_size];
        us.iter().for_each(|&i| u[i] = true);
        vs.iter().for_each(|&j| v[j] = true);
        Rectangle { u, v }
    }

    pub fn to_event(&self) -> Event {
        let (xs, ys) = (self.u.len(), self.v.len());
        let member = (0..xs * ys)
            .map(|c| self.u[c / ys] && self.v[c % ys])
            .collect();
        Event {
            x_size: xs,
            y_size: ys,
            member,
        }
    }

    /// `U^c × V^c`.
    pub fn opposite(&self) -> Rectangle {
        Rectangle {
            u: self.u.iter().map(|b| !b).collect(),
            v: self.v.iter().map(|b| !b).collect(),
        }
    }

    pub fn u_indices(&self) -> Vec<usize> {
        indices(&self.u)
    }

    pub fn v_indices(&self) -> Vec<usize> {
        indices(&self.v)
    }
}

pub(crate) fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(i, _)| i)
        .collect()
}

/// A regular conditional distribution: one probability vector per
/// conditioning point, or `None` where that point has zero marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    rows: Vec<Option<Vec<f64>>>,
}

impl Conditional {
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows[i].as_deref()
    }

    pub fn defined_mask(&self) -> Vec<bool> {
        self.rows.iter().map(Option::is_some).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Mass that row `i` gives to the set `set`; `None` if undefined.
    pub fn measure(&self, i: usize, set: &[bool]) -> Option<f64> {
        self.row(i)
            .map(|r| r.iter().zip(set).filter(|(_, s)| **s).map(|(p, _)| p).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fixture_a() -> FiniteJoint {
        FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn normalizes_fixture_a() {
        let j = fixture_a();
        for (c, &p) in j.probs().iter().enumerate() {
            let expected = if c == 2 { 0.0 } else { 1.0 / 3.0 };
            assert_abs_diff_eq!(p, expected, epsilon = 1e-15);
        }
        assert_eq!(j.support_mask(), &[true, true, false, true]);
    }

    #[test]
    fn single_point_space() {
        let j = FiniteJoint::from_rows(vec![vec![5.0]]).unwrap();
        assert_eq!(j.probs(), &[1.0]);
        assert_eq!(j.marginal_x(), vec![1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            FiniteJoint::from_rows(vec![vec![0.0, 0.0], vec![0.0, 0.0]]),
            Err(Error::EmptyDistribution)
        );
        assert!(matches!(
            FiniteJoint::from_rows(vec![vec![1.0, -1.0]]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            FiniteJoint::from_rows(vec![vec![1.0, f64::NAN]]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![1.0]]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            JointSpec::new(vec![vec![1.0]])
                .with_base(vec![0.0], vec![1.0])
                .build(),
            Err(Error::InvalidMeasure { .. })
        ));
    }

    #[test]
    fn marginals_and_conditionals_fixture_a() {
        let j = fixture_a();
        let mx = j.marginal_x();
        assert_abs_diff_eq!(mx[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mx[1], 1.0 / 3.0, epsilon = 1e-15);
        let a = j.conditional_alpha();
        assert_abs_diff_eq!(a.row(0).unwrap()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.row(0).unwrap()[1], 0.5, epsilon = 1e-15);
        assert_eq!(a.row(1).unwrap(), &[0.0, 1.0]);
        let b = j.conditional_beta();
        assert_eq!(b.row(0).unwrap(), &[1.0, 0.0]);
        assert_abs_diff_eq!(b.row(1).unwrap()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn product_measure_conditionals_equal_marginal() {
        let p = [0.2, 0.8];
        let q = [0.1, 0.3, 0.6];
        let rows = p
            .iter()
            .map(|a| q.iter().map(|b| a * b).collect())
            .collect();
        let j = FiniteJoint::from_rows(rows).unwrap();
        let mx = j.marginal_x();
        for (a, b) in mx.iter().zip(p) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let alpha = j.conditional_alpha();
        for x in 0..2 {
            for (a, b) in alpha.row(x).unwrap().iter().zip(q) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_marginal_rows_are_flagged() {
        let j = FiniteJoint::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let a = j.conditional_alpha();
        assert_eq!(a.defined_mask(), vec![true, false]);
        assert!(a.row(1).is_none());
        assert!(j.conditional_beta().row(1).is_none());
    }

    #[test]
    fn density_with_base_measures() {
        let j = fixture_a();
        assert_eq!(j.density(), j.probs());
        let j2 = JointSpec::new(j.weight_rows())
            .with_base(vec![2.0, 1.0], vec![1.0, 1.0])
            .build()
            .unwrap();
        let f = j2.density();
        assert_abs_diff_eq!(f[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn event_probabilities() {
        let j = fixture_a();
        assert_abs_diff_eq!(
            j.event_prob(&Event::full(2, 2)).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let e = Event::from_cells(2, 2, &[(0, 0)]).unwrap();
        assert_abs_diff_eq!(j.event_prob(&e).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let off = Event::from_cells(2, 2, &[(1, 0)]).unwrap();
        assert_eq!(j.event_prob(&off).unwrap(), 0.0);
        assert!(j.is_null(&off));
        assert!(j.event_prob(&Event::full(3, 2)).is_err());
    }

    #[test]
    fn transpose_swaps_roles() {
        let j = fixture_a();
        let t = j.transpose();
        assert_eq!(t.weight_rows(), vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(t.transpose(), j);
    }
}
