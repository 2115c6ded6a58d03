//! Seeded simulation of Gibbs chains and strong-law diagnostics.
//!
//! Randomness comes from ChaCha20 (`rand_chacha` 0.3). Replicate `i` of a run
//! with seed `s` uses `ChaCha20Rng::seed_from_u64(s)` with its stream set to
//! `i`, so replicates are independent keystreams of one key and do not
//! depend on scheduling. A uniform draw is `(next_u64 >> 11) · 2^-53`, and a
//! categorical draw walks the probability row in label order, returning the
//! first index whose cumulative mass exceeds the uniform. The last positive
//! entry takes any remaining round-off, so zero-mass labels are never drawn.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::ObservableFn;
use crate::space::{Conditional, FiniteJoint};

/// Default absolute half-width of the strong-law acceptance band.
pub const DEFAULT_BAND: f64 = 0.02;

/// How the initial state is chosen. Cells are given as coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Cell(Vec<usize>),
    /// Draw `X_0` from the target law `P`.
    Stationary,
    /// Draw `X_0` from the normalized weights (one per cell, row-major),
    /// which must vanish off the support of `P`.
    Distribution(Vec<f64>),
}

/// Acceptance band around the target in the strong-law diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Band {
    Absolute(f64),
    /// Multiple of the sample standard deviation of replicate finals.
    StdMultiple(f64),
}

impl Default for Band {
    fn default() -> Self {
        Band::Absolute(DEFAULT_BAND)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub seed: u64,
    /// Number of observed states `X_0, …, X_{steps−1}`.
    pub steps: usize,
    pub start: Start,
    pub chains: usize,
    /// Running means are kept for `n` divisible by this, plus the last `n`.
    pub record_every: usize,
    pub band: Band,
}

impl ChainConfig {
    pub fn new(seed: u64, steps: usize, start: Start) -> Self {
        ChainConfig {
            seed,
            steps,
            start,
            chains: 1,
            record_every: 1,
            band: Band::default(),
        }
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_band(mut self, band: Band) -> Self {
        self.band = band;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidArgument("chains must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "record_every must be at least 1".into(),
            ));
        }
        match self.band {
            Band::Absolute(w) | Band::StdMultiple(w) if !(w.is_finite() && w >= 0.0) => {
                Err(Error::InvalidArgument(format!("band width {w}")))
            }
            _ => Ok(()),
        }
    }
}

/// Random generator for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF draw from a probability row in label order.
pub fn sample_index(row: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u = uniform(rng);
    let last = row
        .iter()
        .rposition(|p| *p > 0.0)
        .expect("sampling from a row without positive mass");
    let mut cum = 0.0;
    for (i, p) in row[..last].iter().enumerate() {
        if *p > 0.0 {
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last
}

/// One transition of a Gibbs-type chain on the flat cells of a grid.
pub trait TransitionSampler: Sync {
    fn shape(&self) -> &[usize];
    /// Target law over flat row-major cells.
    fn probs(&self) -> &[f64];
    /// Whether the chain may start from `cell`.
    fn is_valid_start(&self, cell: usize) -> bool;
    fn step(&self, cell: usize, rng: &mut ChaCha20Rng) -> usize;

    fn flat_index(&self, coords: &[usize]) -> Option<usize> {
        let shape = self.shape();
        if coords.len() != shape.len() || coords.iter().zip(shape).any(|(c, s)| c >= s) {
            return None;
        }
        Some(coords.iter().zip(shape).fold(0, |acc, (c, s)| acc * s + c))
    }
}

/// Two-component sampler: `y* ~ α(x)`, then `x* ~ β(y*)`.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    shape: [usize; 2],
    probs: Vec<f64>,
    alpha: Conditional,
    beta: Conditional,
}

impl GibbsSampler {
    pub fn new(j: &FiniteJoint) -> Self {
        GibbsSampler {
            shape: [j.x_size(), j.y_size()],
            probs: j.probs().to_vec(),
            alpha: j.conditional_alpha(),
            beta: j.conditional_beta(),
        }
    }
}

impl TransitionSampler for GibbsSampler {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn is_valid_start(&self, cell: usize) -> bool {
        cell < self.probs.len() && self.alpha.row(cell / self.shape[1]).is_some()
    }

    fn step(&self, cell: usize, rng: &mut ChaCha20Rng) -> usize {
        let x = cell / self.shape[1];
        let a = self.alpha.row(x).expect("state with null x-marginal");
        let y = sample_index(a, rng);
        let b = self.beta.row(y).expect("drawn column has positive mass");
        sample_index(b, rng) * self.shape[1] + y
    }
}

fn initial_cell<S: TransitionSampler + ?Sized>(
    sampler: &S,
    start: &Start,
    rng: &mut ChaCha20Rng,
) -> usize {
    match start {
        Start::Cell(c) => sampler.flat_index(c).expect("validated start"),
        Start::Stationary => sample_index(sampler.probs(), rng),
        Start::Distribution(w) => sample_index(w, rng),
    }
}

fn validate_start<S: TransitionSampler + ?Sized>(sampler: &S, start: &Start) -> Result<Start> {
    let n = sampler.probs().len();
    match start {
        Start::Cell(c) => match sampler.flat_index(c) {
            Some(i) if sampler.is_valid_start(i) => Ok(start.clone()),
            _ => Err(Error::InvalidStart(format!(
                "cell {c:?} is not a chain state"
            ))),
        },
        Start::Stationary => Ok(Start::Stationary),
        Start::Distribution(w) => {
            if w.len() != n {
                return Err(Error::InvalidStart(format!(
                    "start distribution has {} entries for {n} cells",
                    w.len()
                )));
            }
            if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidStart(format!("weight {} at cell {i}", w[i])));
            }
            if let Some(i) = (0..n).find(|&i| w[i] > 0.0 && sampler.probs()[i] == 0.0) {
                return Err(Error::InvalidStart(format!(
                    "start distribution charges cell {i} outside the support"
                )));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidStart("start distribution has no mass".into()));
            }
            Ok(Start::Distribution(w.iter().map(|v| v / total).collect()))
        }
    }
}

fn run_replicate<S, F>(sampler: &S, cfg: &ChainConfig, start: &Start, index: usize, mut visit: F)
where
    S: TransitionSampler + ?Sized,
    F: FnMut(usize),
{
    let mut rng = replicate_rng(cfg.seed, index);
    let mut cell = initial_cell(sampler, start, &mut rng);
    visit(cell);
    for _ in 1..cfg.steps {
        cell = sampler.step(cell, &mut rng);
        visit(cell);
    }
}

/// Flat-cell trajectories `X_0, …, X_{steps−1}`, one per replicate.
pub fn simulate_with<S: TransitionSampler + ?Sized>(
    sampler: &S,
    cfg: &ChainConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let start = validate_start(sampler, &cfg.start)?;
    Ok((0..cfg.chains)
        .into_par_iter()
        .map(|i| {
            let mut path = Vec::with_capacity(cfg.steps);
            run_replicate(sampler, cfg, &start, i, |c| path.push(c));
            path
        })
        .collect())
}

/// Two-component trajectories as `(x, y)` pairs.
pub fn simulate(j: &FiniteJoint, cfg: &ChainConfig) -> Result<Vec<Vec<(usize, usize)>>> {
    let paths = simulate_with(&GibbsSampler::new(j), cfg)?;
    Ok(paths
        .into_iter()
        .map(|p| p.into_iter().map(|c| j.coords(c)).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SllnReport {
    /// `∫ φ dP`.
    pub target: f64,
    pub steps: usize,
    pub record_every: usize,
    /// Values of `n` at which running means were kept.
    pub recorded_n: Vec<usize>,
    /// `m_n(φ)` at each recorded `n`, one trace per replicate.
    pub running_means: Vec<Vec<f64>>,
    pub finals: Vec<f64>,
    pub final_abs_error: Vec<f64>,
    pub band_half_width: f64,
    /// Every replicate final lies within the band around the target.
    pub verdict: bool,
}

fn recorded_points(steps: usize, every: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (every..=steps).step_by(every).collect();
    if pts.last() != Some(&steps) {
        pts.push(steps);
    }
    pts
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Running means of `phi` (one value per flat cell) along each replicate.
///
/// `m_n` is kept as the incremental mean `m_n = m_{n−1} + (φ(X_{n−1}) − m_{n−1})/n`,
/// which reproduces a constant observable exactly.
pub fn slln_estimate_with<S: TransitionSampler + ?Sized>(
    sampler: &S,
    phi: &[f64],
    cfg: &ChainConfig,
) -> Result<SllnReport> {
    cfg.validate()?;
    if phi.len() != sampler.probs().len() {
        return Err(Error::Shape(format!(
            "observable has {} values for {} cells",
            phi.len(),
            sampler.probs().len()
        )));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "observable values must be finite".into(),
        ));
    }
    let start = validate_start(sampler, &cfg.start)?;
    let target: f64 = sampler.probs().iter().zip(phi).map(|(p, v)| p * v).sum();
    let recorded_n = recorded_points(cfg.steps, cfg.record_every);
    let running_means: Vec<Vec<f64>> = (0..cfg.chains)
        .into_par_iter()
        .map(|i| {
            let mut trace = Vec::with_capacity(recorded_n.len());
            let mut mean = 0.0;
            let mut n = 0usize;
            run_replicate(sampler, cfg, &start, i, |c| {
                n += 1;
                mean += (phi[c] - mean) / n as f64;
                if n.is_multiple_of(cfg.record_every) || n == cfg.steps {
                    trace.push(mean);
                }
            });
            trace
        })
        .collect();
    let finals: Vec<f64> = running_means.iter().map(|t| *t.last().unwrap()).collect();
    let final_abs_error: Vec<f64> = finals.iter().map(|m| (m - target).abs()).collect();
    let band_half_width = match cfg.band {
        Band::Absolute(w) => w,
        Band::StdMultiple(k) => k * sample_std(&finals),
    };
    Ok(SllnReport {
        target,
        steps: cfg.steps,
        record_every: cfg.record_every,
        recorded_n,
        verdict: final_abs_error.iter().all(|e| *e <= band_half_width),
        running_means,
        finals,
        final_abs_error,
        band_half_width,
    })
}

pub fn slln_estimate(j: &FiniteJoint, phi: &ObservableFn, cfg: &ChainConfig) -> Result<SllnReport> {
    check_observable(j, phi)?;
    slln_estimate_with(&GibbsSampler::new(j), phi.values(), cfg)
}

fn check_observable(j: &FiniteJoint, phi: &ObservableFn) -> Result<()> {
    if phi.x_size() != j.x_size() || phi.y_size() != j.y_size() {
        return Err(Error::Shape(format!(
            "observable is {}x{}, joint is {}x{}",
            phi.x_size(),
            phi.y_size(),
            j.x_size(),
            j.y_size()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SllnDiagnosis {
    pub pass: bool,
    pub target: f64,
    pub band_half_width: f64,
    pub finals: Vec<f64>,
}

/// Replicated strong-law check; needs at least two chains.
pub fn slln_diagnose_with<S: TransitionSampler + ?Sized>(
    sampler: &S,
    phi: &[f64],
    cfg: &ChainConfig,
) -> Result<SllnDiagnosis> {
    if cfg.chains < 2 {
        return Err(Error::InvalidArgument(
            "a diagnosis needs at least two chains".into(),
        ));
    }
    let cfg = ChainConfig {
        record_every: cfg.steps.max(1),
        ..cfg.clone()
    };
    let r = slln_estimate_with(sampler, phi, &cfg)?;
    Ok(SllnDiagnosis {
        pass: r.verdict,
        target: r.target,
        band_half_width: r.band_half_width,
        finals: r.finals,
    })
}

pub fn slln_diagnose(
    j: &FiniteJoint,
    phi: &ObservableFn,
    cfg: &ChainConfig,
) -> Result<SllnDiagnosis> {
    check_observable(j, phi)?;
    slln_diagnose_with(&GibbsSampler::new(j), phi.values(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_a() -> FiniteJoint {
        FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    fn fixture_b() -> FiniteJoint {
        FiniteJoint::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn inverse_cdf_skips_zero_mass() {
        let mut rng = replicate_rng(1, 0);
        for _ in 0..1000 {
            let i = sample_index(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
        assert_eq!(sample_index(&[0.0, 1.0], &mut rng), 1);
    }

    #[test]
    fn absorbing_atom() {
        let cfg = ChainConfig::new(3, 500, Start::Cell(vec![0, 0]));
        let paths = simulate(&fixture_b(), &cfg).unwrap();
        assert!(paths[0].iter().all(|c| *c == (0, 0)));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let j = fixture_a();
        let cfg = ChainConfig::new(99, 2000, Start::Stationary).with_chains(6);
        let a = simulate(&j, &cfg).unwrap();
        let b = simulate(&j, &cfg).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| simulate(&j, &cfg)).unwrap();
        assert_eq!(a, c);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn stays_in_support() {
        let j = FiniteJoint::from_rows(vec![
            vec![1.0, 0.0, 2.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 3.0, 1.0],
        ])
        .unwrap();
        let cfg = ChainConfig::new(5, 3000, Start::Cell(vec![0, 1])).with_chains(3);
        for path in simulate(&j, &cfg).unwrap() {
            assert!(path[1..].iter().all(|&(x, y)| j.in_support(x, y)));
        }
    }

    #[test]
    fn one_step_law_from_corner() {
        let s = GibbsSampler::new(&fixture_a());
        let mut rng = replicate_rng(2024, 0);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[s.step(3, &mut rng)] += 1;
        }
        assert_eq!(counts[0] + counts[2], 0);
        let p = counts[1] as f64 / draws as f64;
        let sigma = (0.25 / draws as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn rejects_bad_starts() {
        let j = fixture_a();
        let bad = |start| {
            slln_estimate(
                &j,
                &ObservableFn::constant(2, 2, 1.0),
                &ChainConfig::new(1, 10, start),
            )
        };
        assert!(matches!(
            bad(Start::Cell(vec![2, 0])),
            Err(Error::InvalidStart(_))
        ));
        assert!(matches!(
            bad(Start::Cell(vec![0])),
            Err(Error::InvalidStart(_))
        ));
        assert!(matches!(
            bad(Start::Distribution(vec![0.5, 0.0, 0.5, 0.0])),
            Err(Error::InvalidStart(_))
        ));
        // an off-support start in a positive row is allowed
        assert!(bad(Start::Cell(vec![1, 0])).is_ok());
        let j0 = FiniteJoint::from_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(simulate(&j0, &ChainConfig::new(1, 10, Start::Cell(vec![1, 1]))).is_err());
    }

    #[test]
    fn constant_observable_is_exact() {
        let cfg = ChainConfig::new(8, 5000, Start::Stationary).with_chains(2);
        let r = slln_estimate(&fixture_a(), &ObservableFn::constant(2, 2, 0.3), &cfg).unwrap();
        assert!(r.running_means.iter().flatten().all(|m| *m == 0.3));
        assert!(r.final_abs_error.iter().all(|e| *e == 0.0));
        assert!(r.verdict);
    }

    #[test]
    fn absorbing_atom_fails_strong_law() {
        let cfg = ChainConfig::new(1, 10_000, Start::Cell(vec![0, 0]));
        let r = slln_estimate(&fixture_b(), &ObservableFn::indicator(2, 2, 0, 0), &cfg).unwrap();
        assert!(r.running_means[0].iter().all(|m| *m == 1.0));
        assert_eq!(r.target, 0.5);
        assert!(!r.verdict);
    }

    #[test]
    fn diagnose() {
        let phi = ObservableFn::indicator(2, 2, 0, 0);
        let cfg = ChainConfig::new(7, 100_000, Start::Stationary).with_chains(4);
        assert!(slln_diagnose(&fixture_a(), &phi, &cfg).unwrap().pass);
        let d = slln_diagnose(&fixture_b(), &phi, &cfg.clone().with_chains(8)).unwrap();
        assert!(!d.pass);
        assert!(d.finals.iter().all(|m| *m == 0.0 || *m == 1.0));
        assert!(slln_diagnose(&fixture_a(), &phi, &cfg.clone().with_chains(1)).is_err());
        let point = FiniteJoint::from_rows(vec![vec![2.0]]).unwrap();
        let one = ObservableFn::indicator(1, 1, 0, 0);
        assert!(slln_diagnose(&point, &one, &cfg).unwrap().pass);
    }

    #[test]
    fn recorded_points_include_last() {
        assert_eq!(recorded_points(10, 4), vec![4, 8, 10]);
        assert_eq!(recorded_points(8, 4), vec![4, 8]);
        assert_eq!(recorded_points(3, 5), vec![3]);
    }
}
