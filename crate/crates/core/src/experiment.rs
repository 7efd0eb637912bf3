//! Experiment configurations and their deterministic execution.
//!
//! [`run`] returns the `results` payload of the JSON envelope and an optional
//! CSV table. Both depend only on the configuration, never on wall time or
//! the worker count.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coset::{self, CubeSet};
use crate::empirical::{self, Design, ScalingPoint, SupConfig};
use crate::entropy::{self, BallSampler, L2Metric, PackingConfig};
use crate::error::{out_of_range, Error, Result};
use crate::metrics::{Ball, EpSpace, VectorSet};
use crate::optimize::gaussian_vector;
use crate::rng::{child_seed, substream, Purpose};
use crate::selection::{self, RatioConfig, RhoConfig, SplitConfig};
use crate::systems::{self, OrthonormalSystem, SystemSpec};

/// Tolerance for `gen --validate`.
pub const VALIDATION_TOL: f64 = 1e-9;

/// `p` given explicitly or chosen as `1 + 1/log μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PChoice {
    Auto,
    Fixed(f64),
}

impl fmt::Display for PChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PChoice::Auto => f.write_str("auto"),
            PChoice::Fixed(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for PChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(PChoice::Auto);
        }
        s.trim()
            .parse()
            .map(PChoice::Fixed)
            .map_err(|_| Error::Parse(format!("p `{s}`: expected a number or `auto`")))
    }
}

impl From<PChoice> for String {
    fn from(p: PChoice) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMetric {
    LinfM,
    Ellipsoid,
    L2,
}

impl FromStr for EntropyMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf_m" => Ok(EntropyMetric::LinfM),
            "ellipsoid" => Ok(EntropyMetric::Ellipsoid),
            "l2" => Ok(EntropyMetric::L2),
            _ => Err(Error::Parse(format!("metric `{s}`: expected linf_m, ellipsoid or l2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub system: SystemSpec,
    /// Load the system from a CSV table instead of generating it.
    pub table: Option<PathBuf>,
    pub validate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArgs {
    pub system: SystemSpec,
    pub p: PChoice,
    pub delta: f64,
    pub rho_calibration: f64,
    pub rho: Option<f64>,
    pub window_c: f64,
    pub max_retries: usize,
    pub restarts: usize,
    pub ratio_restarts: usize,
    pub ratio_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub system: SystemSpec,
    /// Defaults to `round(n log 2)`.
    pub k: Option<usize>,
    pub p: PChoice,
    pub delta: f64,
    pub rho_calibration: f64,
    pub rho: Option<f64>,
    pub restarts: usize,
    pub ratio_restarts: usize,
    pub ratio_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosetConfig {
    pub bits: u32,
    pub density: Option<f64>,
    pub set_file: Option<PathBuf>,
    pub emit_witness: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    pub system: SystemSpec,
    pub p: f64,
    /// `ρ` of the `E_p` norm.
    pub rho: f64,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub restarts: usize,
    /// Also run the moment-deviation estimator with this many samples.
    pub k: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub system: SystemSpec,
    pub p: f64,
    pub rho: f64,
    pub metric: EntropyMetric,
    /// Number of functionals for the `linf_m` and `ellipsoid` metrics.
    pub m: usize,
    pub eps_grid: Vec<f64>,
    pub budget: usize,
    pub max_centers: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Gen(GenConfig),
    Split(SplitArgs),
    Certify(CertifyConfig),
    Coset(CosetConfig),
    Deviation(DeviationConfig),
    Entropy(EntropyConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Split(_) => "split",
            Command::Certify(_) => "certify",
            Command::Coset(_) => "coset",
            Command::Deviation(_) => "deviation",
            Command::Entropy(_) => "entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub command: Command,
    /// JSON envelope destination (stdout when absent).
    pub json_out: Option<PathBuf>,
    pub csv_out: Option<PathBuf>,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Config,
    Infeasible,
    RetriesExhausted,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Config => 1,
            Status::Infeasible => 2,
            Status::RetriesExhausted => 3,
        }
    }

    /// Exit status for an error returned by [`run`].
    pub fn of_error(e: &Error) -> Status {
        match e {
            Error::Infeasible { .. } | Error::SamplerExhausted | Error::Verification(_) => Status::Infeasible,
            Error::RetriesExhausted { .. } => Status::RetriesExhausted,
            Error::OutOfRange { .. } | Error::Shape { .. } | Error::Empty(_) | Error::DependentGenerators | Error::Parse(_) => {
                Status::Config
            }
        }
    }
}

/// Machine-readable failure description for the envelope.
pub fn error_payload(e: &Error) -> Value {
    let kind = match e {
        Error::OutOfRange { .. } => "out_of_range",
        Error::Shape { .. } => "shape",
        Error::Empty(_) => "empty",
        Error::SamplerExhausted => "sampler_exhausted",
        Error::Infeasible { .. } => "infeasible",
        Error::RetriesExhausted { .. } => "retries_exhausted",
        Error::DependentGenerators => "dependent_generators",
        Error::Verification(_) => "verification",
        Error::Parse(_) => "parse",
    };
    json!({ "kind": kind, "exit_code": Status::of_error(e).code(), "message": e.to_string() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub results: Value,
    pub csv: Option<String>,
}

impl Outcome {
    fn ok(results: Value, csv: Option<String>) -> Self {
        Outcome {
            status: Status::Ok,
            results,
            csv,
        }
    }
}

/// Execute a configuration. Numeric failures that still carry a report
/// (an infeasible `ρ`, a failed validation) come back as an [`Outcome`]
/// with a nonzero status; all other failures are errors.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match &cfg.command {
        Command::Gen(c) => run_gen(c),
        Command::Split(c) => run_split(c),
        Command::Certify(c) => run_certify(c),
        Command::Coset(c) => run_coset(c),
        Command::Deviation(c) => run_deviation(c),
        Command::Entropy(c) => run_entropy(c),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn io_error(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(out_of_range("p", format!("need 1 < p ≤ 2, got {p}")));
    }
    Ok(())
}

fn run_gen(c: &GenConfig) -> Result<Outcome> {
    let sys = match &c.table {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
            OrthonormalSystem::read_csv(std::io::BufReader::new(f))?
        }
        None => c.system.build()?,
    };
    let validation = c.validate.then(|| systems::validate(&sys, VALIDATION_TOL));
    let mut table = Vec::new();
    let csv = if sys.n().saturating_mul(sys.m0()) <= systems::MAX_TABLE_ENTRIES {
        sys.write_csv(&mut table)?;
        Some(String::from_utf8(table).expect("csv is utf-8"))
    } else {
        None
    };
    let status = match &validation {
        Some(v) if !v.passed => Status::Config,
        _ => Status::Ok,
    };
    Ok(Outcome {
        status,
        results: json!({
            "n": sys.n(),
            "m0": sys.m0(),
            "linf_bound": sys.linf_bound(),
            "spans_grid": sys.spans_grid(),
            "validation": validation,
        }),
        csv,
    })
}

fn split_k(n: usize) -> usize {
    (n as f64 * std::f64::consts::LN_2).round() as usize
}

fn resolve_p(p: PChoice, n: usize, k: usize, linf: f64) -> Result<f64> {
    match p {
        PChoice::Auto => selection::p_auto(n, k, linf),
        PChoice::Fixed(p) => {
            check_p(p)?;
            Ok(p)
        }
    }
}

fn run_split(c: &SplitArgs) -> Result<Outcome> {
    let sys = c.system.build()?;
    let n = sys.n();
    let k = split_k(n);
    let p = resolve_p(c.p, n, k, sys.linf_bound())?;
    let cfg = SplitConfig {
        p,
        delta: c.delta,
        rho_calibration: c.rho_calibration,
        rho_override: c.rho,
        window_c: c.window_c,
        max_retries: c.max_retries,
        restarts: c.restarts,
        ratio_restarts: c.ratio_restarts,
        ratio_iters: c.ratio_iters,
        seed: c.seed,
    };
    let out = selection::kashin_split(&sys, &cfg)?;
    let cert = &out.certificate;
    let mu = selection::mu(n, k, sys.linf_bound());
    let scale = mu * mu.ln().abs().powf(2.5);
    let csv = csv_table(
        &[
            "seed", "n", "k", "p", "rho", "attempts", "cardinality", "vacuous", "deviation", "threshold", "l1_ratio_i",
            "l1_ratio_complement", "coset_ratio_i", "c_emp",
        ],
        [vec![
            c.seed.to_string(),
            n.to_string(),
            k.to_string(),
            p.to_string(),
            cert.rho_used.to_string(),
            out.attempts.to_string(),
            cert.cardinality.to_string(),
            cert.vacuous.to_string(),
            cert.deviation_found.map_or(String::new(), |d| d.to_string()),
            cert.threshold.to_string(),
            cert.selected.l1_ratio_lower_bound.to_string(),
            cert.complement.l1_ratio_lower_bound.to_string(),
            cert.selected.coset_ratio.map_or(String::new(), |r| r.to_string()),
            (cert.selected.l1_ratio_lower_bound / scale).to_string(),
        ]],
    );
    Ok(Outcome::ok(
        json!({
            "I": out.subset,
            "k": k,
            "p": p,
            "mu": mu,
            "rho": cert.rho_used,
            "attempts": out.attempts,
            "ratios": {
                "selected_l1_lower_bound": cert.selected.l1_ratio_lower_bound,
                "complement_l1_lower_bound": cert.complement.l1_ratio_lower_bound,
                "selected_lp": cert.selected.lp_ratio_found,
                "complement_lp": cert.complement.lp_ratio_found,
                "c_emp": cert.selected.l1_ratio_lower_bound / scale,
            },
            "certificates": to_value(cert),
        }),
        Some(csv),
    ))
}

fn run_certify(c: &CertifyConfig) -> Result<Outcome> {
    let sys = c.system.build()?;
    let n = sys.n();
    let k = c.k.unwrap_or_else(|| split_k(n));
    let p = resolve_p(c.p, n, k, sys.linf_bound())?;
    let op = selection::sample_operator(&sys, k, c.seed)?;
    let rho = match c.rho {
        Some(r) => r,
        None => selection::theoretical_rho(n, k as f64, sys.linf_bound(), p, c.delta, c.rho_calibration)?,
    };
    let rcfg = RhoConfig::new(c.restarts, child_seed(c.seed, Purpose::Instance, 0));
    let rho_check = match selection::check_rho_condition(&op, &sys, p, rho, &rcfg, &[]) {
        Ok(r) => Ok(r),
        Err(Error::Infeasible { rho, sup_ratio }) => Err((rho, sup_ratio)),
        Err(e) => return Err(e),
    };
    let ratio_cfg = |tag| RatioConfig::l1(c.ratio_restarts, c.ratio_iters, child_seed(c.seed, Purpose::Starts, tag));
    let l1_i = if op.complement.is_empty() {
        None
    } else {
        Some(selection::ratio_search(&sys, &op.complement, &ratio_cfg(0), &[])?.ratio)
    };
    let l1_c = selection::ratio_search(&sys, &op.picked(), &ratio_cfg(1), &[])?.ratio;
    let optimality = match sys.walsh_bits() {
        Some(bits) if ((n - op.complement.len()) as f64) >= (n as f64).sqrt() && !op.complement.is_empty() => {
            let mut set = coset::optimality_certificate(bits, &op.complement, n - op.complement.len())?;
            set.witness_support.clear();
            Some(set)
        }
        _ => None,
    };
    let (status, rho_value) = match &rho_check {
        Ok(r) => (Status::Ok, to_value(r)),
        Err((rho, sup)) => (
            Status::Infeasible,
            json!({ "rho": rho, "sup_ratio": sup, "infeasible": true }),
        ),
    };
    Ok(Outcome {
        status,
        results: json!({
            "k": k,
            "p": p,
            "I": op.complement,
            "rho_check": rho_value,
            "l1_ratio_i": l1_i,
            "l1_ratio_complement": l1_c,
            "optimality": optimality,
        }),
        csv: None,
    })
}

fn run_coset(c: &CosetConfig) -> Result<Outcome> {
    let set = match (&c.set_file, c.density) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            CubeSet::parse_hex(c.bits, &text)?
        }
        (None, Some(d)) => CubeSet::random(c.bits, d, c.seed)?,
        (Some(_), Some(_)) => return Err(Error::Parse("give either --density or --set-file, not both".into())),
        (None, None) => return Err(Error::Parse("one of --density or --set-file is required".into())),
    };
    let density = set.density();
    let cert = coset::find_coset(&set, density)?;
    let audit = coset::step_cardinality_audit(&cert.trace, set.universe());
    let norms = coset::subgroup_sum_norms(&cert.generators, c.bits)?;
    let mut results = json!({
        "set_size": set.len(),
        "density": density,
        "certificate": to_value(&cert),
        "audit": to_value(&audit),
        "subgroup_norms": to_value(&norms),
    });
    if c.emit_witness {
        results["witness"] = json!(cert.elements().iter().map(|x| format!("{x:#x}")).collect::<Vec<_>>());
    }
    let csv = csv_table(
        &["j", "gamma", "before", "after"],
        cert.trace
            .iter()
            .map(|s| vec![s.j.to_string(), format!("{:#x}", s.gamma), s.before.to_string(), s.after.to_string()]),
    );
    Ok(Outcome::ok(results, Some(csv)))
}

fn ep_ball(sys: &OrthonormalSystem, p: f64, rho: f64) -> Result<Ball<'_>> {
    Ok(Ball::ep(sys, EpSpace::new(p, rho)?))
}

fn run_deviation(c: &DeviationConfig) -> Result<Outcome> {
    let sys = c.system.build()?;
    let ball = ep_ball(&sys, c.p, c.rho)?;
    if c.m_grid.is_empty() {
        return Err(Error::Empty("m grid"));
    }
    let points = c
        .m_grid
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let picks = empirical::uniform_picks(sys.n(), m, child_seed(c.seed, Purpose::Picks, i as u64));
            Ok(ScalingPoint {
                ball,
                xs: VectorSet::from_picks(&ball, &picks)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_cfg = SupConfig::new(c.trials, c.restarts, c.seed);
    let study = empirical::scaling_study(&points, &sup_cfg)?;
    let moment = match c.k {
        Some(k) => {
            let mcfg = SupConfig::new(c.trials, c.restarts, child_seed(c.seed, Purpose::Subset, 0));
            Some(empirical::moment_deviation(&sys, &ball, None, k, Design::Random, &mcfg)?)
        }
        None => None,
    };
    let csv = csv_table(
        &["m", "n", "lhs", "lhs_std_err", "rhs", "ratio", "sqrt_m_log_m"],
        study.rows.iter().map(|r| {
            vec![
                r.m.to_string(),
                r.n.to_string(),
                r.lhs.to_string(),
                r.lhs_std_err.to_string(),
                r.rhs.to_string(),
                r.ratio.to_string(),
                r.sqrt_m_log_m.to_string(),
            ]
        }),
    );
    Ok(Outcome::ok(
        json!({
            "lhs_is_lower_estimate": true,
            "scaling": to_value(&study),
            "moment_deviation": moment,
        }),
        Some(csv),
    ))
}

fn run_entropy(c: &EntropyConfig) -> Result<Outcome> {
    let sys = c.system.build()?;
    let ball = ep_ball(&sys, c.p, c.rho)?;
    if c.eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    let pcfg = PackingConfig {
        budget: c.budget,
        max_centers: c.max_centers,
    };
    let real = sys.is_walsh();
    let picks = empirical::uniform_picks(sys.n(), c.m, child_seed(c.seed, Purpose::Picks, 0));
    let report = match c.metric {
        EntropyMetric::LinfM => {
            let xs = VectorSet::from_picks(&ball, &picks)?;
            entropy::lemma3_check(&ball, &xs, &c.eps_grid, &pcfg, real, c.seed)?
        }
        EntropyMetric::Ellipsoid => {
            let xs = VectorSet::from_picks(&ball, &picks)?;
            let mut rng = substream(c.seed, Purpose::Gaussian, 0);
            let u = entropy::normalize_for_ellipsoid(&xs, &gaussian_vector(&mut rng, sys.n(), None));
            entropy::lemma4_check(&ball, &xs, &u, &c.eps_grid, &pcfg, real, c.seed)?
        }
        EntropyMetric::L2 => {
            // compare with the volumetric bound for the enclosing ℓ2 ball
            let dim = if real { sys.n() } else { 2 * sys.n() };
            let r = ball.l2_radius();
            let packings = entropy::packing_sweep(|| BallSampler::new(ball, real, c.seed), &L2Metric, &c.eps_grid, &pcfg)?;
            let rows = packings
                .iter()
                .map(|pk| {
                    Ok(entropy::EntropyRow {
                        eps: pk.eps,
                        count: pk.count,
                        ratio: pk.count as f64 / entropy::volumetric_bound(dim, pk.eps / r)?,
                        capped: pk.capped,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            entropy::EntropyReport {
                metric: "l2".into(),
                scale: r,
                rows,
                max_ratio,
            }
        }
    };
    let csv = csv_table(
        &["eps", "count", "ratio"],
        report.rows.iter().map(|r| vec![r.eps.to_string(), r.count.to_string(), r.ratio.to_string()]),
    );
    Ok(Outcome::ok(to_value(&report), Some(csv)))
}
