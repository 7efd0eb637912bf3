//! Random selection of a large subsystem with an `L2/Lp` norm equivalence.
//!
//! `k` functions are drawn with replacement; the unpicked indices `I` span
//! `ker Γ`. If the sampling operator satisfies the `ρ` condition on
//! `{‖y‖_p ≤ 1, ‖y‖_2 = ρ}`, both `span I` and its complement satisfy
//! `‖y‖_2 ≤ ρ‖y‖_p`. The condition is checked by constrained ascent, so a
//! pass is heuristic while a fail comes with an explicit violating `y`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coset::{self, CubeSet};
use crate::entropy::MeanEstimate;
use crate::error::{out_of_range, Error, Result};
use crate::metrics::{self, lp_norm_grid};
use crate::optimize::{self, gaussian_vector, AscentConfig};
use crate::par;
use crate::rng::{child_seed, substream, Purpose};
use crate::systems::{OrthonormalSystem, C64};

/// Relative slack allowed when comparing a found value against a threshold.
pub const THRESHOLD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledOperator {
    pub n: usize,
    /// The multiset `X_1..X_k` as system indices.
    pub picks: Vec<usize>,
    /// Unpicked indices, ascending.
    pub complement: Vec<usize>,
}

impl SampledOperator {
    /// Operator with a prescribed multiset of picks.
    pub fn fixed_design(n: usize, picks: Vec<usize>) -> Result<Self> {
        if picks.is_empty() {
            return Err(Error::Empty("picks"));
        }
        if let Some(&bad) = picks.iter().find(|&&i| i >= n) {
            return Err(out_of_range("picks", format!("index {bad} ≥ n = {n}")));
        }
        let mut hit = vec![false; n];
        picks.iter().for_each(|&i| hit[i] = true);
        let complement = (0..n).filter(|&i| !hit[i]).collect();
        Ok(SampledOperator { n, picks, complement })
    }

    pub fn k(&self) -> usize {
        self.picks.len()
    }

    /// Picked indices, ascending and distinct.
    pub fn picked(&self) -> Vec<usize> {
        let mut v = self.picks.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Multiplicity of each index.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n];
        self.picks.iter().for_each(|&i| c[i] += 1);
        c
    }

    /// `Γy = (⟨X_i, y⟩)_i` for coefficients `a`.
    pub fn apply(&self, a: &[C64]) -> Vec<C64> {
        self.picks.iter().map(|&i| a[i]).collect()
    }

    /// Row `i` of the `k × n` pairing table.
    pub fn gamma_row(&self, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        r[self.picks[i]] = 1.0;
        r
    }
}

/// `k` iid uniform draws from the system's `n` functions.
pub fn sample_operator(sys: &OrthonormalSystem, k: usize, seed: u64) -> Result<SampledOperator> {
    let n = sys.n();
    if !(k > 1 && k < n) {
        return Err(out_of_range("k", format!("need 1 < k < n = {n}, got {k}")));
    }
    let mut rng = substream(seed, Purpose::Picks, 0);
    SampledOperator::fixed_design(n, (0..k).map(|_| rng.random_range(0..n)).collect())
}

/// `E|I| = n(1 − 1/n)^k`.
pub fn expected_unpicked(n: usize, k: usize) -> f64 {
    n as f64 * (1.0 - 1.0 / n as f64).powf(k as f64)
}

/// `Var |I|` for `k` draws into `n` cells.
pub fn variance_unpicked(n: usize, k: usize) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    let p1 = (1.0 - 1.0 / nf).powf(kf);
    let p2 = (1.0 - 2.0 / nf).powf(kf);
    nf * p1 + nf * (nf - 1.0) * p2 - nf * nf * p1 * p1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryMode {
    /// Random `y` against the given operator.
    Fixed,
    /// Random `y` and a freshly sampled operator per trial.
    Fresh,
}

/// Mean of `‖Γy‖²/((k/n)‖y‖²)` over random nonzero `y`.
pub fn gamma_isometry_check(
    op: &SampledOperator,
    sys: &OrthonormalSystem,
    trials: usize,
    mode: IsometryMode,
    seed: u64,
) -> Result<MeanEstimate> {
    if trials == 0 {
        return Err(out_of_range("trials", "need trials ≥ 1"));
    }
    let (n, k) = (op.n, op.k());
    let vals = par::map_indexed(trials, |t| -> Result<f64> {
        let mut rng = substream(seed, Purpose::Points, t as u64);
        let fresh;
        let g = match mode {
            IsometryMode::Fixed => op,
            IsometryMode::Fresh => {
                fresh = sample_operator(sys, k, child_seed(seed, Purpose::Instance, t as u64))?;
                &fresh
            }
        };
        let a = loop {
            let a = gaussian_vector(&mut rng, n, None);
            if optimize::l2_norm(&a) > 0.0 {
                break a;
            }
        };
        let num: f64 = g.apply(&a).iter().map(|z| z.norm_sqr()).sum();
        let den = k as f64 / n as f64 * a.iter().map(|z| z.norm_sqr()).sum::<f64>();
        Ok(num / den)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let (mean, std_err) = par::mean_and_se(&vals);
    Ok(MeanEstimate { mean, std_err, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoConfig {
    pub restarts: usize,
    pub seed: u64,
    pub ascent: AscentConfig,
}

impl RhoConfig {
    pub fn new(restarts: usize, seed: u64) -> Self {
        RhoConfig {
            restarts,
            seed,
            ascent: AscentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoCheck {
    pub rho: f64,
    pub p: f64,
    /// `kρ²/(3n)`.
    pub threshold: f64,
    /// Largest `|‖Γy‖² − (k/n)ρ²|` found on the slice.
    pub deviation_found: f64,
    pub passed: bool,
    /// Maximizer on the slice (`‖y‖_2 = ρ`); a certified violation when `!passed`.
    pub witness: Vec<C64>,
    /// Starts that were feasible for the slice.
    pub feasible_starts: usize,
}

/// `sup ‖y‖_2/‖y‖_p` over the span (an upper bound if the span is not the grid).
pub fn slice_sup_ratio(sys: &OrthonormalSystem, p: f64) -> f64 {
    metrics::max_l2_over_lp(sys, p)
}

/// Heuristic check of `sup_{y∈T∩ρS} |‖Γy‖² − kρ²/n| ≤ kρ²/(3n)` with
/// `T = B_{Lp} ∩ span`. `extra_starts` are tried in addition to the
/// built-in feasible starts (grid point masses and perturbations of them).
pub fn check_rho_condition(
    op: &SampledOperator,
    sys: &OrthonormalSystem,
    p: f64,
    rho: f64,
    cfg: &RhoConfig,
    extra_starts: &[Vec<C64>],
) -> Result<RhoCheck> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(out_of_range("rho", format!("need ρ > 0, got {rho}")));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(out_of_range("p", format!("need 1 ≤ p ≤ 2, got {p}")));
    }
    let sup_ratio = slice_sup_ratio(sys, p);
    if rho >= sup_ratio {
        return Err(Error::Infeasible { rho, sup_ratio });
    }
    let (n, k) = (op.n, op.k() as f64);
    // ‖Γy‖² − (k/n)‖y‖² = Σ_i w_i |a_i|² with w_i = c_i − k/n
    let w: Vec<f64> = op.counts().iter().map(|&c| c as f64 - k / n as f64).collect();
    let admissible = |a: &[C64]| {
        let l2 = optimize::l2_norm(a);
        lp_norm_grid(&sys.synthesize(a), p).expect("valid p") * rho <= l2 * (1.0 + 1e-12)
    };
    let starts = rho_starts(sys, cfg, extra_starts, &admissible);
    let feasible_starts = starts.len();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_point = Vec::new();
    for sign in [1.0, -1.0] {
        let objective = |a: &[C64]| {
            let nn: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            let q: f64 = a.iter().zip(&w).map(|(z, wi)| wi * z.norm_sqr()).sum();
            let g = a
                .iter()
                .zip(&w)
                .map(|(z, wi)| (z * (2.0 * wi * nn) - z * (2.0 * q)) * (sign / (nn * nn)))
                .collect();
            (sign * q / nn, g)
        };
        if let Some((out, _)) = optimize::multi_start(objective, starts.clone(), admissible, &cfg.ascent) {
            if out.value > best_val {
                best_val = out.value;
                best_point = out.point;
            }
        }
    }
    if best_point.is_empty() {
        return Err(Error::Infeasible { rho, sup_ratio });
    }
    let threshold = k * rho * rho / (3.0 * n as f64);
    let deviation_found = rho * rho * best_val.max(0.0);
    Ok(RhoCheck {
        rho,
        p,
        threshold,
        deviation_found,
        passed: deviation_found <= threshold * (1.0 + THRESHOLD_TOL),
        witness: best_point.iter().map(|z| z * rho).collect(),
        feasible_starts,
    })
}

fn rho_starts<A: Fn(&[C64]) -> bool>(
    sys: &OrthonormalSystem,
    cfg: &RhoConfig,
    extra: &[Vec<C64>],
    admissible: &A,
) -> Vec<Vec<C64>> {
    let (n, m0) = (sys.n(), sys.m0());
    let delta = |x: usize| {
        let mut f = vec![C64::new(0.0, 0.0); m0];
        f[x] = C64::new(1.0, 0.0);
        optimize::normalized(sys.analyze(&f))
    };
    let mut starts: Vec<Vec<C64>> = extra.iter().filter_map(|s| optimize::normalized(s.clone())).filter(|s| admissible(s)).collect();
    let mut rng = substream(cfg.seed, Purpose::Starts, 0);
    for r in 0..cfg.restarts {
        let Some(base) = delta(rng.random_range(0..m0)) else { continue };
        if !admissible(&base) {
            continue;
        }
        let dir = gaussian_vector(&mut rng, n, None);
        let scale = optimize::l2_norm(&dir);
        let mix = |t: f64| optimize::normalized(base.iter().zip(&dir).map(|(b, d)| b + d * (t / scale)).collect());
        // largest feasible perturbation size by bisection; r = 0 keeps the point mass
        if r == 0 {
            starts.push(base);
            continue;
        }
        let (mut lo, mut hi) = (0.0, 4.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if mix(mid).is_some_and(|v| admissible(&v)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        starts.extend(mix(lo));
    }
    starts
}

/// `ρ = c √(n/k) √log k · L / (δ (p−1)^{5/2})`.
pub fn theoretical_rho(n: usize, k: f64, linf: f64, p: f64, delta: f64, c_cal: f64) -> Result<f64> {
    if !(k > 1.0 && k < n as f64) {
        return Err(out_of_range("k", format!("need 1 < k < n, got {k}")));
    }
    if !(p > 1.0 && p <= 2.0) {
        return Err(out_of_range("p", format!("need 1 < p ≤ 2, got {p}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(out_of_range("delta", format!("need 0 < δ ≤ 1, got {delta}")));
    }
    Ok(c_cal * (n as f64 / k).sqrt() * k.ln().sqrt() * linf / (delta * (p - 1.0).powf(2.5)))
}

/// `μ = L √(n/k) √log k`.
pub fn mu(n: usize, k: usize, linf: f64) -> f64 {
    linf * (n as f64 / k as f64).sqrt() * (k as f64).ln().sqrt()
}

/// `p = 1 + 1/log μ`; defined only for `μ > e`.
pub fn p_auto(n: usize, k: usize, linf: f64) -> Result<f64> {
    let m = mu(n, k, linf);
    if !(m > std::f64::consts::E) {
        return Err(out_of_range(
            "p",
            format!("μ = {m:.6} ≤ e, so p = 1 + 1/log μ is not in (1,2); pass p explicitly"),
        ));
    }
    Ok(1.0 + 1.0 / m.ln())
}

/// Interpolation exponent `θ = (2−p)/p` in `‖f‖_p ≤ ‖f‖_1^θ ‖f‖_2^{1−θ}`.
pub fn holder_theta(p: f64) -> f64 {
    (2.0 - p) / p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub mu: f64,
    pub p: f64,
    pub cp: f64,
    pub theta: f64,
    /// `p/(2−p)`.
    pub cp_exponent: f64,
    /// `2(p−1)/(2−p)`.
    pub mu_exponent: f64,
    /// `μ C_p^{p/(2−p)} μ^{2(p−1)/(2−p)}`, the `L2/L1` factor.
    pub factor: f64,
    /// `factor / (μ (log μ)^{5/2})`.
    pub reported_c: f64,
}

/// Convert `‖f‖_2 ≤ C_p μ ‖f‖_p` into an `L2/L1` factor.
pub fn holder_convert(mu: f64, p: f64, cp: f64) -> Result<HolderReport> {
    if !(mu > std::f64::consts::E) {
        return Err(out_of_range("mu", format!("need μ > e, got {mu}")));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(out_of_range("p", format!("need 1 < p < 2, got {p}")));
    }
    if !(cp > 0.0) {
        return Err(out_of_range("cp", format!("need C_p > 0, got {cp}")));
    }
    let cp_exponent = p / (2.0 - p);
    let mu_exponent = 2.0 * (p - 1.0) / (2.0 - p);
    let factor = mu * cp.powf(cp_exponent) * mu.powf(mu_exponent);
    Ok(HolderReport {
        mu,
        p,
        cp,
        theta: holder_theta(p),
        cp_exponent,
        mu_exponent,
        factor,
        reported_c: factor / (mu * mu.ln().powf(2.5)),
    })
}

/// [`holder_convert`] at `p = 1 + 1/log μ` with `C_p = C/(p−1)^{5/2}`.
pub fn holder_canonical(mu: f64, c_abs: f64) -> Result<HolderReport> {
    if !(mu > std::f64::consts::E) {
        return Err(out_of_range("mu", format!("need μ > e, got {mu}")));
    }
    let p = 1.0 + 1.0 / mu.ln();
    holder_convert(mu, p, c_abs / (p - 1.0).powf(2.5))
}

/// `[n/2 − c√n, n/2 + c√n]`.
pub fn cardinality_window(n: usize, c: f64) -> (f64, f64) {
    let (h, s) = (n as f64 / 2.0, c * (n as f64).sqrt());
    (h - s, h + s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub c: f64,
    pub hit_rate: f64,
    pub mean_size: f64,
    pub sd_size: f64,
    /// Smallest `c` whose window catches at least `target` of the trials.
    pub smallest_c: f64,
    pub target: f64,
}

/// Empirical distribution of `|I|` over `trials` draws of `k` picks.
pub fn window_statistics(n: usize, k: usize, trials: usize, c: f64, target: f64, seed: u64) -> Result<WindowStats> {
    if trials == 0 {
        return Err(out_of_range("trials", "need trials ≥ 1"));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(out_of_range("target", "need 0 ≤ target ≤ 1"));
    }
    let sizes: Vec<usize> = par::map_indexed(trials, |t| {
        let mut rng = substream(child_seed(seed, Purpose::Retry, t as u64), Purpose::Picks, 0);
        let mut hit = vec![false; n];
        (0..k).for_each(|_| hit[rng.random_range(0..n)] = true);
        hit.iter().filter(|&&h| !h).count()
    });
    let (lo, hi) = cardinality_window(n, c);
    let hits = sizes.iter().filter(|&&s| s as f64 >= lo && s as f64 <= hi).count();
    let fs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let (mean, se) = par::mean_and_se(&fs);
    let sd = se * (trials as f64).sqrt();
    let mut dev: Vec<f64> = fs.iter().map(|s| (s - n as f64 / 2.0).abs() / (n as f64).sqrt()).collect();
    dev.sort_by(f64::total_cmp);
    let need = ((target * trials as f64).ceil() as usize).clamp(1, trials);
    Ok(WindowStats {
        n,
        k,
        trials,
        c,
        hit_rate: hits as f64 / trials as f64,
        mean_size: mean,
        sd_size: sd,
        smallest_c: dev[need - 1],
        target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioConfig {
    /// Exponent of the denominator norm (1 for the `L2/L1` ratio).
    pub p: f64,
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl RatioConfig {
    pub fn l1(restarts: usize, iters: usize, seed: u64) -> Self {
        RatioConfig {
            p: 1.0,
            restarts,
            iters,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSearch {
    /// Best `‖f‖_2/‖f‖_p` found, a lower bound on the sup over the span.
    pub ratio: f64,
    /// Coefficients of the best `f` (unit ℓ2).
    pub witness: Vec<C64>,
}

/// `‖f‖_2/‖f‖_p` for coefficients `a`.
pub fn l2_over_lp(sys: &OrthonormalSystem, a: &[C64], p: f64) -> f64 {
    let lp = lp_norm_grid(&sys.synthesize(a), p).expect("valid p");
    optimize::l2_norm(a) / lp
}

/// Maximize `‖f‖_2/‖f‖_p` over `span{φ_i : i ∈ I}` from random Gaussian
/// starts, unit vectors `e_i` and any caller-provided `seeds`.
pub fn ratio_search(sys: &OrthonormalSystem, subset: &[usize], cfg: &RatioConfig, seeds: &[Vec<C64>]) -> Result<RatioSearch> {
    if subset.is_empty() {
        return Err(Error::Empty("index set"));
    }
    let n = sys.n();
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(out_of_range("subset", format!("index {bad} ≥ n = {n}")));
    }
    if !(cfg.p >= 1.0 && cfg.p < 2.0) {
        return Err(out_of_range("p", format!("need 1 ≤ p < 2, got {}", cfg.p)));
    }
    let mut mask = vec![false; n];
    subset.iter().for_each(|&i| mask[i] = true);
    let restrict = |v: &mut Vec<C64>| {
        v.iter_mut().zip(&mask).filter(|(_, m)| !**m).for_each(|(z, _)| *z = C64::new(0.0, 0.0));
    };
    let m0 = sys.m0() as f64;
    let p = cfg.p;
    let objective = |a: &[C64]| {
        let f = sys.synthesize(a);
        let (lp, g) = metrics::lp_norm_with_grad(&f, p);
        let l2 = optimize::l2_norm(a);
        let glp = sys.analyze(&g);
        let mut grad: Vec<C64> = a
            .iter()
            .zip(&glp)
            .map(|(ai, gi)| (ai * (lp / l2) - gi * (m0 * l2)) / (lp * lp))
            .collect();
        restrict(&mut grad);
        (l2 / lp, grad)
    };
    let mut starts: Vec<Vec<C64>> = Vec::new();
    for s in seeds {
        let mut v = s.clone();
        restrict(&mut v);
        starts.push(v);
    }
    for &i in subset.iter().take(4) {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[i] = C64::new(1.0, 0.0);
        starts.push(e);
    }
    for r in 0..cfg.restarts {
        let mut rng = substream(cfg.seed, Purpose::Starts, r as u64);
        starts.push(gaussian_vector(&mut rng, n, Some(subset)));
    }
    let ascent = AscentConfig {
        max_iters: cfg.iters,
        ..AscentConfig::default()
    };
    let outs = par::map_indexed(starts.len(), |i| optimize::ascend(objective, starts[i].clone(), |_| true, &ascent));
    let best = outs
        .into_iter()
        .flatten()
        .fold(None::<optimize::AscentOutcome>, |b, o| match b {
            Some(b) if b.value >= o.value => Some(b),
            _ => Some(o),
        })
        .ok_or(Error::Empty("feasible start"))?;
    Ok(RatioSearch {
        ratio: best.value,
        witness: best.point,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub p: f64,
    pub delta: f64,
    /// Calibration `c` in the theoretical `ρ`.
    pub rho_calibration: f64,
    /// Use this `ρ` instead of the theoretical value.
    pub rho_override: Option<f64>,
    /// Window half-width in units of `√n`.
    pub window_c: f64,
    pub max_retries: usize,
    pub restarts: usize,
    pub ratio_restarts: usize,
    pub ratio_iters: usize,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(p: f64, seed: u64) -> Self {
        SplitConfig {
            p,
            delta: 0.5,
            rho_calibration: 1.0,
            rho_override: None,
            window_c: 3.0,
            max_retries: 100,
            restarts: 8,
            ratio_restarts: 8,
            ratio_iters: 200,
            seed,
        }
    }
}

/// Outcome of the `ρ` condition for one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCertificate {
    /// `|I|` or `n − |I|`.
    pub cardinality: usize,
    /// Best `‖f‖_2/‖f‖_p` found on this side; must not exceed `ρ`.
    pub lp_ratio_found: f64,
    /// Best `‖f‖_2/‖f‖_1` found on this side.
    pub l1_ratio_lower_bound: f64,
    /// `√|Γ|` from an exact coset witness (Walsh systems only).
    pub coset_ratio: Option<f64>,
    /// `ratio_search` seeded with the coset witness.
    pub coset_seeded_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCertificate {
    pub attempt: usize,
    pub k: usize,
    pub p: f64,
    pub rho_used: f64,
    /// `kρ²/(3n)`.
    pub threshold: f64,
    /// `None` when the slice is empty.
    pub deviation_found: Option<f64>,
    /// The slice `{‖y‖_p ≤ 1, ‖y‖_2 = ρ}` is empty, so the condition holds vacuously.
    pub vacuous: bool,
    pub sup_ratio: f64,
    pub passed: bool,
    pub cardinality: usize,
    pub window: (f64, f64),
    pub window_ok: bool,
    pub selected: SideCertificate,
    pub complement: SideCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    /// `I`, ascending.
    pub subset: Vec<usize>,
    pub certificate: SplitCertificate,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Attempt {
    op: SampledOperator,
    window_ok: bool,
    rho: Option<RhoCheck>,
    vacuous: bool,
    diameter: Option<(RatioSearch, RatioSearch)>,
}

impl Attempt {
    fn passed(&self) -> bool {
        self.window_ok && (self.vacuous || self.rho.as_ref().is_some_and(|r| r.passed))
    }
}

/// Number of retries evaluated per parallel batch; fixed so that the set of
/// evaluated attempts never depends on the worker count.
const RETRY_BATCH: usize = 8;

/// Sample until `|I|` lands in the window and the `ρ` condition holds, then
/// certify both `I` and its complement.
pub fn kashin_split(sys: &OrthonormalSystem, cfg: &SplitConfig) -> Result<SplitOutcome> {
    let n = sys.n();
    if !n.is_multiple_of(2) {
        return Err(out_of_range("n", format!("need n even, got {n}")));
    }
    let k = (n as f64 * std::f64::consts::LN_2).round() as usize;
    if !(k > 1 && 4 * k < 3 * n) {
        return Err(out_of_range("n", format!("k = round(n log 2) = {k} must satisfy 1 < k < 3n/4")));
    }
    if cfg.max_retries == 0 {
        return Err(out_of_range("max_retries", "need max_retries ≥ 1"));
    }
    let rho = match cfg.rho_override {
        Some(r) => r,
        None => theoretical_rho(n, k as f64, sys.linf_bound(), cfg.p, cfg.delta, cfg.rho_calibration)?,
    };
    let window = cardinality_window(n, cfg.window_c);
    let sup_ratio = slice_sup_ratio(sys, cfg.p);
    let ratio_cfg = |side: u64| RatioConfig {
        p: cfg.p,
        restarts: cfg.ratio_restarts,
        iters: cfg.ratio_iters,
        seed: child_seed(cfg.seed, Purpose::Starts, side),
    };

    let run_attempt = |idx: usize| -> Result<Attempt> {
        let op = sample_operator(sys, k, child_seed(cfg.seed, Purpose::Retry, idx as u64))?;
        let size = op.complement.len() as f64;
        let window_ok = size >= window.0 && size <= window.1;
        let mut att = Attempt {
            op,
            window_ok,
            rho: None,
            vacuous: false,
            diameter: None,
        };
        if !window_ok {
            return Ok(att);
        }
        let complement_side: Vec<usize> = att.op.picked();
        let diam_i = ratio_search(sys, &att.op.complement, &ratio_cfg(2 * idx as u64), &[])?;
        let diam_c = ratio_search(sys, &complement_side, &ratio_cfg(2 * idx as u64 + 1), &[])?;
        let rcfg = RhoConfig::new(cfg.restarts, child_seed(cfg.seed, Purpose::Instance, idx as u64));
        // diameter witnesses scaled onto the slice are natural violation candidates
        let extra = vec![diam_i.witness.clone(), diam_c.witness.clone()];
        match check_rho_condition(&att.op, sys, cfg.p, rho, &rcfg, &extra) {
            Ok(mut r) => {
                // a kernel or co-kernel element with ‖y‖_2 > ρ‖y‖_p is itself a violation
                for d in [&diam_i, &diam_c] {
                    if d.ratio > rho * (1.0 + THRESHOLD_TOL) && r.passed {
                        r.passed = false;
                        r.witness = metrics::Ball::l2(sys).to_sphere(&d.witness).iter().map(|z| z * rho).collect();
                        let y: Vec<C64> = r.witness.clone();
                        let gy: f64 = att.op.apply(&y).iter().map(|z| z.norm_sqr()).sum();
                        r.deviation_found = r.deviation_found.max((gy - k as f64 / n as f64 * rho * rho).abs());
                    }
                }
                att.rho = Some(r);
            }
            Err(Error::Infeasible { .. }) => att.vacuous = true,
            Err(e) => return Err(e),
        }
        att.diameter = Some((diam_i, diam_c));
        Ok(att)
    };

    let mut evaluated = 0;
    let mut chosen: Option<(usize, Attempt)> = None;
    while evaluated < cfg.max_retries && chosen.is_none() {
        let batch = RETRY_BATCH.min(cfg.max_retries - evaluated);
        let results = par::map_indexed(batch, |i| run_attempt(evaluated + i));
        for (i, r) in results.into_iter().enumerate() {
            let att = r?;
            if att.passed() {
                chosen = Some((evaluated + i, att));
                break;
            }
        }
        evaluated += batch;
    }
    let Some((idx, att)) = chosen else {
        return Err(Error::RetriesExhausted {
            attempts: cfg.max_retries,
        });
    };
    let (diam_i, diam_c) = att.diameter.clone().expect("window passed");
    let selected = certify_side(sys, &att.op.complement, diam_i.ratio, cfg, 0)?;
    let complement = certify_side(sys, &att.op.picked(), diam_c.ratio, cfg, 1)?;
    let certificate = SplitCertificate {
        attempt: idx,
        k,
        p: cfg.p,
        rho_used: rho,
        threshold: k as f64 * rho * rho / (3.0 * n as f64),
        deviation_found: att.rho.as_ref().map(|r| r.deviation_found),
        vacuous: att.vacuous,
        sup_ratio,
        passed: true,
        cardinality: att.op.complement.len(),
        window,
        window_ok: att.window_ok,
        selected,
        complement,
    };
    Ok(SplitOutcome {
        subset: att.op.complement.clone(),
        certificate,
        attempts: idx + 1,
    })
}

fn certify_side(sys: &OrthonormalSystem, side: &[usize], lp_ratio: f64, cfg: &SplitConfig, tag: u64) -> Result<SideCertificate> {
    let seed = child_seed(cfg.seed, Purpose::Subset, tag);
    let l1_cfg = RatioConfig::l1(cfg.ratio_restarts, cfg.ratio_iters, seed);
    let l1 = ratio_search(sys, side, &l1_cfg, &[])?;
    let (coset_ratio, coset_seeded_ratio) = match (sys.walsh_bits(), side.len()) {
        (Some(bits), len) if len > 0 => {
            let set = CubeSet::from_indices(bits, side)?;
            let cert = coset::find_coset(&set, set.density())?;
            let norms = coset::subgroup_sum_norms(&cert.generators, bits)?;
            let mut w = vec![C64::new(0.0, 0.0); sys.n()];
            cert.elements().into_iter().for_each(|i| w[i] = C64::new(1.0, 0.0));
            let seeded = ratio_search(sys, side, &l1_cfg, &[w])?;
            (Some(norms.l2 / norms.l1), Some(seeded.ratio))
        }
        _ => (None, None),
    };
    Ok(SideCertificate {
        cardinality: side.len(),
        lp_ratio_found: lp_ratio,
        l1_ratio_lower_bound: l1.ratio.max(coset_seeded_ratio.unwrap_or(0.0)),
        coset_ratio,
        coset_seeded_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::gen_walsh;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sample_operator_basics() {
        let sys = gen_walsh(6).unwrap();
        let a = sample_operator(&sys, 20, 3).unwrap();
        assert_eq!(a, sample_operator(&sys, 20, 3).unwrap());
        assert_eq!(a.complement.len(), 64 - a.picked().len());
        assert!(sample_operator(&sys, 1, 0).is_err());
        assert!(sample_operator(&sys, 64, 0).is_err());
        let distinct = SampledOperator::fixed_design(64, (0..16).map(|i| 4 * i).collect()).unwrap();
        assert_eq!(distinct.complement.len(), 64 - 16);
        assert_eq!(distinct.gamma_row(2)[8], 1.0);
    }

    #[test]
    fn unpicked_moments_match_simulation() {
        let sys = gen_walsh(8).unwrap();
        let k = 177;
        let trials = 4000;
        let sizes: Vec<f64> = (0..trials)
            .map(|t| sample_operator(&sys, k, t).unwrap().complement.len() as f64)
            .collect();
        let (mean, se) = par::mean_and_se(&sizes);
        let expected = expected_unpicked(256, k);
        assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected}");
        let sd = se * (trials as f64).sqrt();
        assert!((sd / variance_unpicked(256, k).sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn isometry_in_expectation_and_exact_for_full_tiling() {
        let sys = gen_walsh(6).unwrap();
        let op = sample_operator(&sys, 32, 1).unwrap();
        for mode in [IsometryMode::Fixed, IsometryMode::Fresh] {
            let r = gamma_isometry_check(&op, &sys, 4000, mode, 2).unwrap();
            assert!((r.mean - 1.0).abs() <= 3.0 * r.std_err, "{mode:?}: {r:?}");
        }
        let full = SampledOperator::fixed_design(64, (0..64).collect()).unwrap();
        let r = gamma_isometry_check(&full, &sys, 50, IsometryMode::Fixed, 2).unwrap();
        assert_abs_diff_eq!(r.mean, 1.0, epsilon = 1e-12);
        assert!(r.std_err < 1e-12);
    }

    #[test]
    fn kernel_duality() {
        let sys = gen_walsh(5).unwrap();
        let op = sample_operator(&sys, 20, 8).unwrap();
        let mut rng = substream(1, Purpose::Points, 0);
        let y = gaussian_vector(&mut rng, 32, Some(&op.complement));
        assert!(op.apply(&y).iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn rho_condition_full_tiling_and_infeasibility() {
        let sys = gen_walsh(4).unwrap();
        let full = SampledOperator::fixed_design(16, (0..16).collect()).unwrap();
        let r = check_rho_condition(&full, &sys, 1.5, 1.5, &RhoConfig::new(6, 1), &[]).unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.deviation_found, 0.0, epsilon = 1e-12);
        let sup = slice_sup_ratio(&sys, 1.5);
        assert_abs_diff_eq!(sup, 16f64.powf(1.0 / 1.5 - 0.5), epsilon = 1e-12);
        assert!(matches!(check_rho_condition(&full, &sys, 1.5, sup, &RhoConfig::new(2, 1), &[]), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn small_rho_fails_with_certified_witness() {
        let sys = gen_walsh(6).unwrap();
        let op = sample_operator(&sys, 32, 5).unwrap();
        let r = check_rho_condition(&op, &sys, 1.5, 0.9, &RhoConfig::new(6, 2), &[]).unwrap();
        assert!(!r.passed);
        // the witness really violates the condition
        let y = &r.witness;
        assert!(lp_norm_grid(&sys.synthesize(y), 1.5).unwrap() <= 1.0 + 1e-9);
        assert_abs_diff_eq!(optimize::l2_norm(y), 0.9, epsilon = 1e-9);
        let gy: f64 = op.apply(y).iter().map(|z| z.norm_sqr()).sum();
        let dev = (gy - 0.5 * 0.81).abs();
        assert!(dev > r.threshold);
        assert_abs_diff_eq!(dev, r.deviation_found, epsilon = 1e-9);
    }

    #[test]
    fn passing_slice_satisfies_two_sided_bound_on_samples() {
        let sys = gen_walsh(6).unwrap();
        let op = sample_operator(&sys, 32, 5).unwrap();
        let sup = slice_sup_ratio(&sys, 1.5);
        let rho = 0.999 * sup;
        let r = check_rho_condition(&op, &sys, 1.5, rho, &RhoConfig::new(8, 3), &[]).unwrap();
        assert!(r.passed, "{r:?}");
        let (k, n) = (32.0, 64.0);
        // feasible slice samples: perturbed point masses
        let samples = rho_starts(&sys, &RhoConfig::new(30, 9), &[], &|a: &[C64]| {
            lp_norm_grid(&sys.synthesize(a), 1.5).unwrap() * rho <= optimize::l2_norm(a) * (1.0 + 1e-12)
        });
        assert!(!samples.is_empty());
        for u in samples {
            let y: Vec<C64> = u.iter().map(|z| z * rho).collect();
            let gy: f64 = op.apply(&y).iter().map(|z| z.norm_sqr()).sum();
            assert!(gy >= 2.0 * k * rho * rho / (3.0 * n) - 1e-9);
            assert!(gy <= 4.0 * k * rho * rho / (3.0 * n) + 1e-9);
        }
    }

    #[test]
    fn theoretical_rho_examples() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(theoretical_rho(11, e, 1.0, 2.0, 1.0, 1.0).unwrap(), (11.0 / e).sqrt(), epsilon = 1e-12);
        let four_e = (4.0 * e).ceil() as usize;
        let v = theoretical_rho(four_e, four_e as f64 / 4.0, 1.0, 2.0, 1.0, 1.5).unwrap();
        assert_abs_diff_eq!(v, 1.5 * 2.0 * (four_e as f64 / 4.0).ln().sqrt(), epsilon = 1e-12);
        let a = theoretical_rho(1024, 512.0, 1.0, 1.5, 0.5, 1.0).unwrap();
        let b = theoretical_rho(1024, 512.0, 2.0, 1.5, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-12);
        // the p = 1 + 1/log μ chain at n = 1024, k = 512
        let m = mu(1024, 512, 1.0);
        let p = p_auto(1024, 512, 1.0).unwrap();
        let chain = 2f64.sqrt() * 512f64.ln().sqrt() / (0.5 * (1.0 / m.ln()).powf(2.5));
        assert_abs_diff_eq!(theoretical_rho(1024, 512.0, 1.0, p, 0.5, 1.0).unwrap(), chain, epsilon = 1e-9);
        assert!(theoretical_rho(10, 1.0, 1.0, 1.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn p_auto_examples() {
        // n = 256, k = 128: μ = √2·√log 128
        let m = mu(256, 128, 1.0);
        assert_abs_diff_eq!(m, 2f64.sqrt() * 128f64.ln().sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p_auto(256, 128, 1.0).unwrap(), 1.0 + 1.0 / m.ln(), epsilon = 1e-12);
        assert!(p_auto(256, 128, 2.0).unwrap() < p_auto(256, 128, 1.0).unwrap());
        assert!(p_auto(64, 44, 1.0).is_err());
    }

    #[test]
    fn holder_examples() {
        assert_eq!(holder_theta(2.0), 0.0);
        assert_eq!(holder_theta(1.0), 1.0);
        for mu in [std::f64::consts::E.powi(2), 20.0, 1e3, 1e6] {
            let r = holder_canonical(mu, 1.0).unwrap();
            let l = mu.ln();
            assert!(mu.powf(r.mu_exponent) <= (2.0 / (1.0 - 1.0 / l)).exp() * (1.0 + 1e-12));
            assert_abs_diff_eq!(r.cp_exponent, 1.0 + r.mu_exponent, epsilon = 1e-12);
            assert!(r.reported_c.is_finite() && r.reported_c > 0.0);
        }
        // μ = e²: p = 3/2, θ = 1/3, factor = μ C_p³ μ²
        let mu = std::f64::consts::E.powi(2);
        let r = holder_canonical(mu, 1.0).unwrap();
        assert_abs_diff_eq!(r.p, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.factor, mu.powi(3) * 0.5f64.powf(-7.5), epsilon = 1e-6 * r.factor);
        assert!(holder_convert(2.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn window_statistics_at_256() {
        let s = window_statistics(256, 177, 400, 3.0, 0.75, 1).unwrap();
        assert!(s.hit_rate >= 0.75);
        assert!((s.mean_size - expected_unpicked(256, 177)).abs() < 1.0);
        assert!(s.smallest_c < 3.0);
        // vacuous window at tiny n
        let (lo, hi) = cardinality_window(4, 3.0);
        assert!(lo <= 0.0 && hi >= 4.0);
    }

    #[test]
    fn ratio_search_examples() {
        let sys = gen_walsh(6).unwrap();
        let one = ratio_search(&sys, &[9], &RatioConfig::l1(2, 50, 1), &[]).unwrap();
        assert_abs_diff_eq!(one.ratio, 1.0, epsilon = 1e-12);
        // a full Walsh subgroup of size 8: the flat sum has ratio √8
        let sg = coset::subgroup(&[1, 6, 24]);
        let r = ratio_search(&sys, &sg, &RatioConfig::l1(4, 100, 2), &[]).unwrap();
        assert!(r.ratio >= 8f64.sqrt() * (1.0 - 1e-6), "{}", r.ratio);
        assert!(r.ratio <= 8f64.sqrt() * (1.0 + 1e-12));
        let ri = ratio_search(&sys, &[3, 17, 40, 41], &RatioConfig::l1(2, 50, 3), &[]).unwrap();
        assert!(ri.ratio >= 1.0);
    }

    #[test]
    fn ratio_search_monotone_under_inclusion() {
        let sys = gen_walsh(6).unwrap();
        let small: Vec<usize> = (0..64).step_by(3).collect();
        let r = ratio_search(&sys, &small, &RatioConfig::l1(4, 100, 4), &[]).unwrap();
        assert!(r.witness.iter().zip(0..).all(|(z, i)| small.contains(&i) || z.norm() == 0.0));
        let big: Vec<usize> = (0..64).filter(|i| i % 3 != 1).collect();
        let s = ratio_search(&sys, &big, &RatioConfig::l1(1, 100, 5), std::slice::from_ref(&r.witness)).unwrap();
        assert!(s.ratio >= r.ratio - 1e-12);
    }

    #[test]
    fn split_on_walsh_256() {
        let sys = gen_walsh(8).unwrap();
        let p = p_auto(256, 177, 1.0).unwrap();
        let mut cfg = SplitConfig::new(p, 1);
        cfg.ratio_restarts = 2;
        cfg.ratio_iters = 60;
        let out = kashin_split(&sys, &cfg).unwrap();
        let c = &out.certificate;
        assert!(out.attempts <= 100);
        assert!(c.window_ok && (80..=176).contains(&out.subset.len()));
        assert!(c.vacuous, "theoretical ρ = {} exceeds the slice sup {}", c.rho_used, c.sup_ratio);
        assert!(c.selected.coset_seeded_ratio.unwrap() >= (8f64 / 3.0).sqrt());
        assert_eq!(c.selected.cardinality + c.complement.cardinality, 256);
        assert_eq!(kashin_split(&sys, &cfg).unwrap(), out);
    }

    #[test]
    fn split_with_feasible_rho() {
        let sys = gen_walsh(6).unwrap();
        let mut cfg = SplitConfig::new(1.5, 3);
        cfg.rho_override = Some(0.999 * slice_sup_ratio(&sys, 1.5));
        cfg.ratio_restarts = 2;
        cfg.ratio_iters = 60;
        let out = kashin_split(&sys, &cfg).unwrap();
        let c = &out.certificate;
        assert!(!c.vacuous);
        assert!(c.deviation_found.unwrap() <= c.threshold * (1.0 + THRESHOLD_TOL));
        assert!(c.selected.lp_ratio_found <= c.rho_used * (1.0 + THRESHOLD_TOL));
        assert!(c.complement.lp_ratio_found <= c.rho_used * (1.0 + THRESHOLD_TOL));
        let mut tight = cfg;
        tight.rho_override = Some(0.9);
        tight.max_retries = 3;
        assert_eq!(kashin_split(&sys, &tight).unwrap_err(), Error::RetriesExhausted { attempts: 3 });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gamma_vanishes_off_picks(seed in 0u64..10_000, k in 2usize..30) {
            let sys = gen_walsh(5).unwrap();
            let op = sample_operator(&sys, k, seed).unwrap();
            let mut rng = substream(seed, Purpose::Points, 1);
            let y = gaussian_vector(&mut rng, 32, Some(&op.complement));
            let z = gaussian_vector(&mut rng, 32, None);
            let yz: Vec<C64> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
            prop_assert_eq!(op.apply(&yz), op.apply(&z));
        }
    }
}
