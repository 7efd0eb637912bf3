//! Bernoulli quadratic-process suprema and empirical moment deviations.
//!
//! All suprema over a ball come from [`metrics::quadratic_over_subspace`],
//! so every reported left-hand side is a lower estimate of the true value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::MeanEstimate;
use crate::error::{out_of_range, Result};
use crate::metrics::{self, Ball, Geometry, MSup, VectorSet};
use crate::optimize::AscentConfig;
use crate::par;
use crate::rng::{child_seed, substream, Purpose};
use crate::systems::OrthonormalSystem;

/// Largest `m` accepted by the exhaustive sign oracle.
pub const MAX_EXHAUSTIVE_M: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupConfig {
    pub trials: usize,
    pub restarts: usize,
    pub seed: u64,
    pub ascent: AscentConfig,
}

impl SupConfig {
    pub fn new(trials: usize, restarts: usize, seed: u64) -> Self {
        SupConfig {
            trials,
            restarts,
            seed,
            ascent: AscentConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(out_of_range("trials", "need trials ≥ 1"));
        }
        if self.restarts == 0 {
            return Err(out_of_range("restarts", "need restarts ≥ 1"));
        }
        Ok(())
    }
}

/// Factors of `λ⁴ T₂(E*) √log m · max‖X_j‖_* · √M` (absolute constant 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhsComponents {
    pub lambda4: f64,
    pub type2_dual: f64,
    pub sqrt_log_m: f64,
    pub max_dual_norm: f64,
    pub sqrt_m: f64,
    /// `M` used: the L2-ball eigenvalue, a proxy for the sup over the ball.
    pub m_sup: MSup,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub lhs: MeanEstimate,
    /// Always true: the inner sup is a heuristic maximum.
    pub lhs_is_lower_estimate: bool,
    pub rhs_components: Option<RhsComponents>,
    pub a: Option<f64>,
    pub sigma: Option<f64>,
    /// `rhs` for Bernoulli sups, `A² + σA` for moment deviations.
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
    /// Inner ascents that hit the iteration cap (trial kept at its best value).
    pub non_converged: usize,
}

fn ratio(lhs: f64, bound: Option<f64>) -> Option<f64> {
    bound.filter(|b| *b > 0.0).map(|b| lhs / b)
}

/// `Cλ⁴ T₂(E*) √log m max_j ‖X_j‖_* √M` with `C = 1`.
pub fn theorem1_rhs(xs: &VectorSet, ball: &Ball<'_>) -> Result<RhsComponents> {
    if xs.m() < 2 {
        return Err(out_of_range("m", "need m ≥ 2"));
    }
    let m_sup = xs.m_sup();
    let c = RhsComponents {
        lambda4: ball.lambda().powi(4),
        type2_dual: ball.type2_dual(),
        sqrt_log_m: (xs.m() as f64).ln().sqrt(),
        max_dual_norm: xs.dual_norm_bound(),
        sqrt_m: m_sup.used().sqrt(),
        m_sup,
        rhs: 0.0,
    };
    Ok(RhsComponents {
        rhs: c.lambda4 * c.type2_dual * c.sqrt_log_m * c.max_dual_norm * c.sqrt_m,
        ..c
    })
}

fn rademacher(seed: u64, trial: usize, m: usize) -> Vec<f64> {
    let mut rng = substream(seed, Purpose::Signs, trial as u64);
    (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// `E sup_{y∈B} |Σ_j ε_j |⟨X_j, y⟩|²|` over `cfg.trials` sign draws.
///
/// With `flip_signs` every draw is negated; the inner starts do not depend on
/// the signs, so the flipped run returns the same payload bit for bit.
pub fn bernoulli_sup(xs: &VectorSet, ball: &Ball<'_>, cfg: &SupConfig, flip_signs: bool) -> Result<DeviationReport> {
    cfg.validate()?;
    let m = xs.m();
    let outcomes = par::map_indexed(cfg.trials, |t| {
        let mut eps = rademacher(cfg.seed, t, m);
        if flip_signs {
            eps.iter_mut().for_each(|e| *e = -*e);
        }
        let start_seed = child_seed(cfg.seed, Purpose::Starts, t as u64);
        metrics::quadratic_over_ball(xs, ball, &eps, cfg.restarts, start_seed, &cfg.ascent)
    });
    let vals: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let (mean, std_err) = par::mean_and_se(&vals);
    let rhs = theorem1_rhs(xs, ball).ok();
    let bound = rhs.map(|r| r.rhs);
    Ok(DeviationReport {
        lhs: MeanEstimate {
            mean,
            std_err,
            trials: cfg.trials,
        },
        lhs_is_lower_estimate: true,
        rhs_components: rhs,
        a: None,
        sigma: None,
        bound,
        ratio: ratio(mean, bound),
        non_converged: outcomes.iter().map(|o| o.non_converged).sum(),
    })
}

/// Exact expectation over all `2^m` sign patterns (pairs `±ε` share a value,
/// so `2^{m−1}` sups are computed), each sup by `restarts` starts.
pub fn bernoulli_sup_exhaustive(xs: &VectorSet, ball: &Ball<'_>, restarts: usize, seed: u64, ascent: &AscentConfig) -> Result<f64> {
    let m = xs.m();
    if m > MAX_EXHAUSTIVE_M {
        return Err(out_of_range("m", format!("exhaustive oracle needs m ≤ {MAX_EXHAUSTIVE_M}")));
    }
    if restarts == 0 {
        return Err(out_of_range("restarts", "need restarts ≥ 1"));
    }
    let patterns = 1usize << (m - 1);
    let vals = par::map_indexed(patterns, |mask| {
        let eps: Vec<f64> = (0..m).map(|j| if j > 0 && mask >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect();
        let s = child_seed(seed, Purpose::Starts, mask as u64);
        metrics::quadratic_over_ball(xs, ball, &eps, restarts, s, ascent).value
    });
    Ok(vals.iter().sum::<f64>() / patterns as f64)
}

/// How the `k` functionals of a moment-deviation trial are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `k` iid uniform draws from the system.
    Random,
    /// Every function `k/n` times (requires `n | k`).
    Tiled,
}

/// `E sup_{y∈B∩span I} |(1/k)Σ_j |⟨X_j,y⟩|² − E|⟨X,y⟩|²|` with `X` uniform
/// over the system, together with `A`, `σ` and `A² + σA`.
///
/// `A = λ⁴ T₂(E*) √(log k / k) · L` uses the system's sup-norm bound `L` in
/// place of `max ‖X_j‖_*`. `σ² = sup_{y∈B} (1/n)‖y‖²_2`, exact for the full
/// span of a system that spans its grid and an upper bound otherwise.
pub fn moment_deviation(
    sys: &OrthonormalSystem,
    ball: &Ball<'_>,
    subset: Option<&[usize]>,
    k: usize,
    design: Design,
    cfg: &SupConfig,
) -> Result<DeviationReport> {
    cfg.validate()?;
    let n = sys.n();
    if k == 0 {
        return Err(out_of_range("k", "need k ≥ 1"));
    }
    if design == Design::Tiled && !k.is_multiple_of(n) {
        return Err(out_of_range("k", format!("tiled design needs n = {n} to divide k = {k}")));
    }
    if let Some(s) = subset {
        if s.is_empty() {
            return Err(crate::Error::Empty("subset"));
        }
        if let Some(&bad) = s.iter().find(|&&i| i >= n) {
            return Err(out_of_range("subset", format!("index {bad} ≥ n = {n}")));
        }
    }
    // the quadratic form is diagonal: weight c_i/k − 1/n on |a_i|²
    let all: Vec<usize> = (0..n).collect();
    let xs = VectorSet::from_picks(ball, &all)?;
    let outcomes = par::map_indexed(cfg.trials, |t| {
        let mut counts = vec![0usize; n];
        match design {
            Design::Random => {
                let mut rng = substream(cfg.seed, Purpose::Picks, t as u64);
                (0..k).for_each(|_| counts[rng.random_range(0..n)] += 1);
            }
            Design::Tiled => counts.iter_mut().for_each(|c| *c = k / n),
        }
        let w: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64 - 1.0 / n as f64).collect();
        let start_seed = child_seed(cfg.seed, Purpose::Starts, t as u64);
        metrics::quadratic_over_subspace(&xs, ball, &w, subset, cfg.restarts, start_seed, &cfg.ascent)
    });
    let vals: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let (mean, std_err) = par::mean_and_se(&vals);
    let a = ball.lambda().powi(4) * ball.type2_dual() * ((k as f64).ln() / k as f64).sqrt() * sys.linf_bound();
    let sigma = ball.l2_radius() / (n as f64).sqrt();
    let bound = a * a + sigma * a;
    Ok(DeviationReport {
        lhs: MeanEstimate {
            mean,
            std_err,
            trials: cfg.trials,
        },
        lhs_is_lower_estimate: true,
        rhs_components: None,
        a: Some(a),
        sigma: Some(sigma),
        bound: Some(bound),
        ratio: ratio(mean, Some(bound)),
        non_converged: outcomes.iter().map(|o| o.non_converged).sum(),
    })
}

/// Whether `σ` from [`moment_deviation`] is exact rather than an upper bound.
pub fn sigma_is_exact(sys: &OrthonormalSystem, ball: &Ball<'_>, subset: Option<&[usize]>) -> bool {
    matches!(ball.geometry, Geometry::L2) || (sys.spans_grid() && subset.is_none_or(|s| s.len() == sys.n()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: usize,
    pub n: usize,
    pub lhs: f64,
    pub lhs_std_err: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `√(M log m)`, the regressor of the fit.
    pub sqrt_m_log_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `lhs` on `√(M log m)` through the origin.
    pub slope: Option<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `log ratio` on `log m`.
    pub log_ratio_slope: Option<f64>,
    pub max_over_min_ratio: Option<f64>,
    /// Fewer than two distinct `m` values: no fit.
    pub degenerate: bool,
}

/// One instance of a scaling study.
#[derive(Debug, Clone)]
pub struct ScalingPoint<'a> {
    pub ball: Ball<'a>,
    pub xs: VectorSet,
}

/// Runs [`bernoulli_sup`] and [`theorem1_rhs`] on each instance and fits the trend.
pub fn scaling_study(points: &[ScalingPoint<'_>], cfg: &SupConfig) -> Result<ScalingStudy> {
    if points.is_empty() {
        return Err(crate::Error::Empty("scaling grid"));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (i, pt) in points.iter().enumerate() {
        let sub = SupConfig {
            seed: child_seed(cfg.seed, Purpose::Instance, i as u64),
            ..*cfg
        };
        let rep = bernoulli_sup(&pt.xs, &pt.ball, &sub, false)?;
        let rhs = theorem1_rhs(&pt.xs, &pt.ball)?;
        let m = pt.xs.m();
        rows.push(ScalingRow {
            m,
            n: pt.xs.n(),
            lhs: rep.lhs.mean,
            lhs_std_err: rep.lhs.std_err,
            rhs: rhs.rhs,
            ratio: rep.lhs.mean / rhs.rhs,
            sqrt_m_log_m: (pt.xs.m_sup().used() * (m as f64).ln()).sqrt(),
        });
    }
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let degenerate = ms.len() < 2;
    let (slope, residuals, log_ratio_slope) = if degenerate {
        (None, Vec::new(), None)
    } else {
        let sxx: f64 = rows.iter().map(|r| r.sqrt_m_log_m.powi(2)).sum();
        let sxy: f64 = rows.iter().map(|r| r.sqrt_m_log_m * r.lhs).sum();
        let b = sxy / sxx;
        let res = rows.iter().map(|r| r.lhs - b * r.sqrt_m_log_m).collect();
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.ratio > 0.0)
            .map(|r| ((r.m as f64).ln(), r.ratio.ln()))
            .collect();
        (Some(b), res, ols_slope(&pts))
    };
    let positive: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|r| *r > 0.0).collect();
    let max_over_min_ratio = (!positive.is_empty()).then(|| {
        positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min)
    });
    Ok(ScalingStudy {
        rows,
        slope,
        residuals,
        log_ratio_slope,
        max_over_min_ratio,
        degenerate,
    })
}

/// Slope of the ordinary least-squares line; `None` without spread in `x`.
pub fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// `m` iid uniform picks from `{0..n}`.
pub fn uniform_picks(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = substream(seed, Purpose::Picks, 0);
    (0..m).map(|_| rng.random_range(0..n)).collect()
}
