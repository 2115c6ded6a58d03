//! The `gibbsgate` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 a `--strict` check found the
//! joint not admissible, 3 an internal invariant or oracle cross-check
//! failed. `GIBBSGATE_THREADS` caps the worker pool. Reports are assembled
//! single-threaded, so output does not depend on the thread count.

pub mod input;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chain::{slln_estimate, Band, ChainConfig, Start};
use crate::ergodic::{ergodicity_report, spectral_rate};
use crate::kernel::{
    bc_iterates, build_kernel, verify_kernel_iterate_identity, ITERATE_IDENTITY_TOL,
};
use crate::kgibbs::{check_k_admissible, oracle_d_trivial, KJoint};
use crate::sigma::{atom_masses, check_gibbs_admissible, oracle_rectangle_scan};
use crate::space::FiniteJoint;
use crate::tip::{communicates, is_tip, tip_union_chain, Communication};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NOT_ADMISSIBLE: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

/// Why a command stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Input(String),
    Invariant(String),
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Invariant(_) => Failure::Invariant(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "gibbsgate",
    version,
    about = "Admissibility, ergodicity and iterate checks for finite Gibbs samplers"
)]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide Gibbs-admissibility of a joint.
    Check(CheckArgs),
    /// Same as `check --atoms`.
    Atoms(AtomsArgs),
    /// Alternating conditional expectations and the kernel identity.
    Iterate(IterateArgs),
    /// Total variation curve and convergence certificates.
    Ergodic(ErgodicArgs),
    /// Simulate the chain and report running means.
    Simulate(SimulateArgs),
    /// Admissibility of a k-component joint.
    Kcheck(KcheckArgs),
    /// TIP verdicts for sets and their communicating chain.
    Tip(TipArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    input: PathBuf,
    /// Print a degenerate rectangle when not admissible.
    #[arg(long)]
    witness: bool,
    /// List the atoms of the intersection field.
    #[arg(long)]
    atoms: bool,
    /// Cross-check against the exhaustive rectangle scan.
    #[arg(long)]
    oracle: bool,
    /// Exit with status 2 when not admissible.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct AtomsArgs {
    input: PathBuf,
    #[arg(long)]
    witness: bool,
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct IterateArgs {
    input: PathBuf,
    /// Observable file: {"values": [[...]]}.
    #[arg(long)]
    phi: PathBuf,
    /// Number of projections after phi_0.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Write the iterates as CSV (n, given, x, y, value).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ErgodicArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    /// Search for a minorization certificate.
    #[arg(long)]
    doeblin: bool,
    /// Report the second-largest eigenvalue modulus.
    #[arg(long)]
    spectral: bool,
    /// Write the curve as CSV (n, sup_tv) instead of printing it.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    input: PathBuf,
    #[arg(long)]
    phi: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// `stationary` or a cell `X,Y` given by labels or indices.
    #[arg(long, default_value = "stationary")]
    start: String,
    /// Absolute half-width of the acceptance band.
    #[arg(long, default_value_t = crate::chain::DEFAULT_BAND)]
    band: f64,
    /// Keep running means every this many steps.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Write running means as CSV (n, m_0, m_1, ...).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KcheckArgs {
    input: PathBuf,
    #[arg(long)]
    witness: bool,
    #[arg(long)]
    atoms: bool,
    /// Cross-check against enumeration of common events (at most 16 cells).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct TipArgs {
    /// Joint file supplying the base measures.
    input: PathBuf,
    /// Sets file: {"sets": [[[x, y], ...], ...]}.
    #[arg(long)]
    sets: PathBuf,
}

/// Parses `args` (program name first), runs the command and writes the
/// report to `out`. Diagnostics go to stderr. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut impl Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let result = match thread_cap() {
        Ok(Some(n)) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Failure::Input(format!("thread pool: {e}"))),
        },
        Ok(None) => execute(&cli),
        Err(f) => Err(f),
    };
    match result {
        Ok((report, code)) => match out.write_all(report.as_bytes()) {
            Ok(()) => code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INPUT
            }
        },
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            EXIT_INVARIANT
        }
    }
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("GIBBSGATE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Input(format!(
                "GIBBSGATE_THREADS={v} is not a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}

type Outcome = Result<(String, u8), Failure>;

fn execute(cli: &Cli) -> Outcome {
    let f = cli.format;
    match &cli.command {
        Command::Check(a) => cmd_check(&a.input, a.witness, a.atoms, a.oracle, a.strict, f),
        Command::Atoms(a) => cmd_check(&a.input, a.witness, true, a.oracle, a.strict, f),
        Command::Iterate(a) => cmd_iterate(a, f),
        Command::Ergodic(a) => cmd_ergodic(a, f),
        Command::Simulate(a) => cmd_simulate(a, f),
        Command::Kcheck(a) => cmd_kcheck(a, f),
        Command::Tip(a) => cmd_tip(a, f),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn label_list(labels: &[String], mask: &[bool]) -> Vec<String> {
    labels
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| l.clone())
        .collect()
}

/// Shortest round-trip decimal, switching to exponent form for tiny values.
fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn rows_text(rows: &[Vec<f64>]) -> String {
    let inner: Vec<String> = rows
        .iter()
        .map(|r| {
            let vals: Vec<String> = r.iter().map(|v| num(*v)).collect();
            format!("[{}]", vals.join(", "))
        })
        .collect();
    format!("[{}]", inner.join(", "))
}

#[derive(Serialize)]
struct RectangleOut {
    u: Vec<String>,
    v: Vec<String>,
}

#[derive(Serialize)]
struct AtomOut {
    mass: f64,
    cells: Vec<(String, String)>,
}

#[derive(Serialize)]
struct CheckOut {
    admissible: bool,
    atoms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<RectangleOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atom_list: Option<Vec<AtomOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
}

fn cmd_check(
    path: &Path,
    witness: bool,
    atoms: bool,
    oracle: bool,
    strict: bool,
    f: Format,
) -> Outcome {
    let j = input::read_joint(path)?;
    let report = check_gibbs_admissible(&j);
    let oracle_agrees = if oracle {
        let scan = oracle_rectangle_scan(&j)?;
        if scan != report.admissible {
            return Err(Failure::Invariant(format!(
                "connectivity says admissible = {}, rectangle scan says {scan}",
                report.admissible
            )));
        }
        Some(true)
    } else {
        None
    };
    let cells = j.support_cells();
    let atom_list = atoms.then(|| {
        let masses = atom_masses(&j, &report.atoms);
        report
            .atoms
            .blocks()
            .iter()
            .zip(masses)
            .map(|(block, mass)| AtomOut {
                mass,
                cells: block
                    .iter()
                    .map(|&i| {
                        let (x, y) = j.coords(cells[i]);
                        (j.x_labels()[x].clone(), j.y_labels()[y].clone())
                    })
                    .collect(),
            })
            .collect::<Vec<_>>()
    });
    let out = CheckOut {
        admissible: report.admissible,
        atoms: report.atom_count,
        witness: report
            .witness
            .as_ref()
            .filter(|_| witness)
            .map(|r| RectangleOut {
                u: label_list(j.x_labels(), &r.u),
                v: label_list(j.y_labels(), &r.v),
            }),
        atom_list,
        oracle_agrees,
    };
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = format!("admissible: {}, atoms: {}\n", out.admissible, out.atoms);
            if let Some(w) = &out.witness {
                let _ = writeln!(
                    s,
                    "witness: U = [{}], V = [{}]",
                    w.u.join(", "),
                    w.v.join(", ")
                );
            }
            for (i, a) in out.atom_list.iter().flatten().enumerate() {
                let cells: Vec<String> =
                    a.cells.iter().map(|(x, y)| format!("({x}, {y})")).collect();
                let _ = writeln!(s, "atom {i} (mass {}): {}", num(a.mass), cells.join(" "));
            }
            if oracle_agrees.is_some() {
                s.push_str("oracle: agrees\n");
            }
            s
        }
    };
    let code = if strict && !report.admissible {
        EXIT_NOT_ADMISSIBLE
    } else {
        EXIT_OK
    };
    Ok((text, code))
}

#[derive(Serialize)]
struct IterateStepOut {
    n: usize,
    given: Option<crate::kernel::Conditioning>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct IterateOut {
    steps: Vec<IterateStepOut>,
    identity_max_n: usize,
    identity_max_discrepancy: f64,
}

fn given_name(c: Option<crate::kernel::Conditioning>) -> &'static str {
    match c {
        None => "-",
        Some(crate::kernel::Conditioning::X) => "X",
        Some(crate::kernel::Conditioning::Y) => "Y",
    }
}

fn cmd_iterate(a: &IterateArgs, f: Format) -> Outcome {
    let j = input::read_joint(&a.input)?;
    let phi = input::read_observable(&a.phi, &j)?;
    let trace = bc_iterates(&j, &phi, a.steps)?;
    let max_n = (a.steps / 2).max(1);
    let discrepancy = verify_kernel_iterate_identity(&j, &phi, max_n)?;
    let steps: Vec<IterateStepOut> = trace
        .steps
        .iter()
        .enumerate()
        .map(|(n, g)| IterateStepOut {
            n,
            given: (n > 0).then(|| trace.conditioning_at(n)),
            values: g.rows(),
        })
        .collect();
    if let Some(path) = &a.csv {
        let mut csv = String::from("n,given,x,y,value\n");
        for s in &steps {
            for (x, row) in s.values.iter().enumerate() {
                for (y, v) in row.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{}",
                        s.n,
                        given_name(s.given),
                        j.x_labels()[x],
                        j.y_labels()[y],
                        num(*v)
                    );
                }
            }
        }
        write_file(path, &csv)?;
    }
    let out = IterateOut {
        steps,
        identity_max_n: max_n,
        identity_max_discrepancy: discrepancy,
    };
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = String::new();
            for st in &out.steps {
                let _ = writeln!(
                    s,
                    "phi_{} | {}: {}",
                    st.n,
                    given_name(st.given),
                    rows_text(&st.values)
                );
            }
            let _ = writeln!(
                s,
                "kernel identity: max discrepancy {} over n <= {max_n}",
                num(discrepancy)
            );
            s
        }
    };
    if discrepancy > ITERATE_IDENTITY_TOL {
        // the report is still useful, so emit it before failing
        eprint!("{text}");
        return Err(Failure::Invariant(format!(
            "kernel identity discrepancy {discrepancy} exceeds {ITERATE_IDENTITY_TOL}"
        )));
    }
    Ok((text, EXIT_OK))
}

#[derive(Serialize)]
struct CertificateOut {
    u: Vec<String>,
    v: Vec<String>,
    s: f64,
    t: f64,
    epsilon: f64,
    rate_bound: f64,
}

#[derive(Serialize)]
struct ErgodicOut {
    verdict: String,
    atoms: usize,
    states: usize,
    s0_full: bool,
    aperiodic: bool,
    fitted_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    doeblin: Option<Option<CertificateOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral_rate: Option<f64>,
    sup_tv: Vec<f64>,
}

fn cmd_ergodic(a: &ErgodicArgs, f: Format) -> Outcome {
    let j = input::read_joint(&a.input)?;
    let report = ergodicity_report(&j, a.max_steps, a.doeblin)?;
    let atoms = check_gibbs_admissible(&j).atom_count;
    let kernel = build_kernel(&j);
    let verdict = if report.ergodic {
        "ergodic".to_string()
    } else if atoms > 1 {
        format!("not ergodic: {atoms} atoms")
    } else {
        format!("not converged within {} steps", a.max_steps)
    };
    let out = ErgodicOut {
        verdict,
        atoms,
        states: kernel.states().len(),
        s0_full: report.s0_full,
        aperiodic: report.aperiodic,
        fitted_rate: report.fitted_rate,
        doeblin: a.doeblin.then(|| {
            report.certificate.as_ref().map(|c| CertificateOut {
                u: label_list(j.x_labels(), &c.u),
                v: label_list(j.y_labels(), &c.v),
                s: c.s,
                t: c.t,
                epsilon: c.epsilon,
                rate_bound: c.rate_bound,
            })
        }),
        spectral_rate: a
            .spectral
            .then(|| spectral_rate(crate::kernel::MarkovKernel::matrix(&kernel))),
        sup_tv: report.tv_curve,
    };
    let mut csv = String::from("n,sup_tv\n");
    for (n, v) in out.sup_tv.iter().enumerate() {
        let _ = writeln!(csv, "{n},{}", num(*v));
    }
    if let Some(path) = &a.csv {
        write_file(path, &csv)?;
    }
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = format!("verdict: {}\n", out.verdict);
            let _ = writeln!(s, "states: {}", out.states);
            let _ = writeln!(s, "s0 covers all states: {}", out.s0_full);
            let _ = writeln!(s, "aperiodic: {}", out.aperiodic);
            match out.fitted_rate {
                Some(r) => {
                    let _ = writeln!(s, "fitted rate: {}", num(r));
                }
                None => s.push_str("fitted rate: none\n"),
            }
            match &out.doeblin {
                Some(Some(c)) => {
                    let _ = writeln!(
                        s,
                        "doeblin: U = [{}], V = [{}], s = {}, t = {}, epsilon = {}, rate_bound = {}",
                        c.u.join(", "),
                        c.v.join(", "),
                        num(c.s),
                        num(c.t),
                        num(c.epsilon),
                        num(c.rate_bound)
                    );
                }
                Some(None) => s.push_str("doeblin: no certificate\n"),
                None => {}
            }
            if let Some(r) = out.spectral_rate {
                let _ = writeln!(s, "spectral rate: {}", num(r));
            }
            if a.csv.is_none() {
                s.push_str(&csv);
            }
            s
        }
    };
    Ok((text, EXIT_OK))
}

#[derive(Serialize)]
struct ChainOut {
    chain: usize,
    final_mean: f64,
    abs_error: f64,
}

#[derive(Serialize)]
struct SimulateOut {
    seed: u64,
    steps: usize,
    target: f64,
    band: f64,
    chains: Vec<ChainOut>,
    verdict: bool,
}

fn cmd_simulate(a: &SimulateArgs, f: Format) -> Outcome {
    let j = input::read_joint(&a.input)?;
    let phi = input::read_observable(&a.phi, &j)?;
    let start = if a.start.trim() == "stationary" {
        Start::Stationary
    } else {
        let (x, y) = input::parse_cell(&j, &a.start)?;
        Start::Cell(vec![x, y])
    };
    let cfg = ChainConfig::new(a.seed, a.steps, start)
        .with_chains(a.chains)
        .with_record_every(a.record_every)
        .with_band(Band::Absolute(a.band));
    let r = slln_estimate(&j, &phi, &cfg)?;
    if let Some(path) = &a.csv {
        let mut csv = String::from("n");
        for c in 0..a.chains {
            let _ = write!(csv, ",m_{c}");
        }
        csv.push('\n');
        for (k, n) in r.recorded_n.iter().enumerate() {
            let _ = write!(csv, "{n}");
            for trace in &r.running_means {
                let _ = write!(csv, ",{}", num(trace[k]));
            }
            csv.push('\n');
        }
        write_file(path, &csv)?;
    }
    let out = SimulateOut {
        seed: a.seed,
        steps: a.steps,
        target: r.target,
        band: r.band_half_width,
        chains: r
            .finals
            .iter()
            .zip(&r.final_abs_error)
            .enumerate()
            .map(|(chain, (m, e))| ChainOut {
                chain,
                final_mean: *m,
                abs_error: *e,
            })
            .collect(),
        verdict: r.verdict,
    };
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = format!("target: {}\n", num(out.target));
            for c in &out.chains {
                let _ = writeln!(
                    s,
                    "chain {}: final mean {}, abs error {}",
                    c.chain,
                    num(c.final_mean),
                    num(c.abs_error)
                );
            }
            let _ = writeln!(s, "band: {}", num(out.band));
            let _ = writeln!(s, "verdict: {}", if out.verdict { "pass" } else { "fail" });
            s
        }
    };
    Ok((text, EXIT_OK))
}

/// Cells of two distinct atoms, as coordinate lists.
type CellPair = (Vec<Vec<usize>>, Vec<Vec<usize>>);

#[derive(Serialize)]
struct KcheckOut {
    admissible: bool,
    atoms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<CellPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atom_list: Option<Vec<Vec<Vec<usize>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
}

fn coord_text(c: &[usize]) -> String {
    let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

fn cmd_kcheck(a: &KcheckArgs, f: Format) -> Outcome {
    let kj: KJoint = input::read_k_joint(&a.input)?;
    let report = check_k_admissible(&kj);
    let oracle_agrees = if a.oracle {
        let trivial = oracle_d_trivial(&kj)?;
        if trivial != report.admissible {
            return Err(Failure::Invariant(format!(
                "fiber connectivity says admissible = {}, enumeration says {trivial}",
                report.admissible
            )));
        }
        Some(true)
    } else {
        None
    };
    let cells = kj.support_cells();
    let to_coords = |cs: &[usize]| cs.iter().map(|&c| kj.coords(c)).collect::<Vec<_>>();
    let out = KcheckOut {
        admissible: report.admissible,
        atoms: report.atom_count,
        witness: report
            .witness
            .as_ref()
            .filter(|_| a.witness)
            .map(|(p, q)| (to_coords(p), to_coords(q))),
        atom_list: a.atoms.then(|| {
            report
                .atoms
                .blocks()
                .iter()
                .map(|b| b.iter().map(|&i| kj.coords(cells[i])).collect())
                .collect()
        }),
        oracle_agrees,
    };
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = format!("admissible: {}, atoms: {}\n", out.admissible, out.atoms);
            if let Some((p, q)) = &out.witness {
                let _ = writeln!(s, "witness: {} | {}", coord_text(&p[0]), coord_text(&q[0]));
            }
            for (i, atom) in out.atom_list.iter().flatten().enumerate() {
                let cells: Vec<String> = atom.iter().map(|c| coord_text(c)).collect();
                let _ = writeln!(s, "atom {i}: {}", cells.join(" "));
            }
            if oracle_agrees.is_some() {
                s.push_str("oracle: agrees\n");
            }
            s
        }
    };
    let code = if a.strict && !report.admissible {
        EXIT_NOT_ADMISSIBLE
    } else {
        EXIT_OK
    };
    Ok((text, code))
}

#[derive(Serialize)]
struct SetOut {
    tip: bool,
    components: usize,
}

#[derive(Serialize)]
struct StepOut {
    step: usize,
    via: Option<String>,
}

#[derive(Serialize)]
struct ChainReportOut {
    valid: bool,
    first_non_tip: Option<usize>,
    first_gap: Option<usize>,
    union_tip: bool,
}

#[derive(Serialize)]
struct TipOut {
    sets: Vec<SetOut>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    steps: Vec<StepOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chain: Option<ChainReportOut>,
}

fn via_text(j: &FiniteJoint, c: Communication) -> String {
    match c {
        Communication::Column(y) => format!("column {}", j.y_labels()[y]),
        Communication::Row(x) => format!("row {}", j.x_labels()[x]),
    }
}

fn cmd_tip(a: &TipArgs, f: Format) -> Outcome {
    let j = input::read_joint(&a.input)?;
    let sets = input::read_sets(&a.sets, &j)?;
    let (mu, nu) = (j.mu(), j.nu());
    let set_out = sets
        .iter()
        .map(|h| {
            is_tip(mu, nu, h).map(|r| SetOut {
                tip: r.tip,
                components: r.components,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let steps: Vec<StepOut> = sets
        .windows(2)
        .enumerate()
        .map(|(i, w)| StepOut {
            step: i + 1,
            via: communicates(mu, nu, &w[0], &w[1]).map(|c| via_text(&j, c)),
        })
        .collect();
    let chain = if sets.len() > 1 {
        let r = tip_union_chain(mu, nu, &sets)?;
        Some(ChainReportOut {
            valid: r.valid,
            first_non_tip: r.first_non_tip,
            first_gap: r.first_gap,
            union_tip: r.union_tip,
        })
    } else {
        None
    };
    let out = TipOut {
        sets: set_out,
        steps,
        chain,
    };
    let text = match f {
        Format::Json => json(&out),
        Format::Text => {
            let mut s = String::new();
            for (i, st) in out.sets.iter().enumerate() {
                let verdict = if st.tip { "TIP" } else { "not TIP" };
                let _ = writeln!(s, "set {}: {verdict}, components: {}", i + 1, st.components);
            }
            for st in &out.steps {
                match &st.via {
                    Some(v) => {
                        let _ = writeln!(s, "step {}: communicates via {v}", st.step);
                    }
                    None => {
                        let _ = writeln!(s, "step {}: no communication", st.step);
                    }
                }
            }
            if let Some(c) = &out.chain {
                let union = if c.union_tip {
                    "union TIP"
                } else {
                    "union not TIP"
                };
                if c.valid {
                    let _ = writeln!(s, "chain valid, {union}");
                } else if let Some(n) = c.first_non_tip {
                    let _ = writeln!(s, "chain invalid: set {n} is not TIP, {union}");
                } else if let Some(n) = c.first_gap {
                    let _ = writeln!(s, "chain invalid: no communication at step {n}, {union}");
                }
            }
            s
        }
    };
    Ok((text, EXIT_OK))
}
