//! Packing and covering estimates, Gaussian widths and type-2 estimates.
//!
//! Packings are `ε`-separated in the closed sense (`d ≥ ε`) and covers use
//! open balls (`d < r`), so for a packing that is maximal on a finite set
//! `N(T, ε) ≤ M(T, ε) ≤ N(T, ε/2)` holds exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::metrics::{Ball, VectorSet};
use crate::optimize::{self, AscentConfig};
use crate::par;
use crate::rng::{substream, Purpose};
use crate::systems::C64;

/// Default number of consecutive rejections before a packing stops.
pub const DEFAULT_BUDGET: usize = 10_000;

/// `√log N`, with `√log 1 = 0`.
pub fn sqrt_log(count: usize) -> f64 {
    if count <= 1 {
        0.0
    } else {
        (count as f64).ln().sqrt()
    }
}

/// A distance evaluated on precomputed point embeddings.
pub trait Metric: Sync {
    fn id(&self) -> &'static str;
    fn embed(&self, point: &[C64]) -> Vec<C64>;
    fn dist(&self, a: &[C64], b: &[C64]) -> f64;

    fn distance(&self, x: &[C64], y: &[C64]) -> f64 {
        self.dist(&self.embed(x), &self.embed(y))
    }
}

/// Euclidean distance of coefficient vectors (the `L_2` distance on the span).
#[derive(Debug, Clone, Copy, Default)]
pub struct L2Metric;

impl Metric for L2Metric {
    fn id(&self) -> &'static str {
        "l2"
    }
    fn embed(&self, point: &[C64]) -> Vec<C64> {
        point.to_vec()
    }
    fn dist(&self, a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Coordinatewise `max |x_i − y_i|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SupMetric;

impl Metric for SupMetric {
    fn id(&self) -> &'static str {
        "sup"
    }
    fn embed(&self, point: &[C64]) -> Vec<C64> {
        point.to_vec()
    }
    fn dist(&self, a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }
}

/// `‖y − ȳ‖_{∞,m}`.
#[derive(Debug, Clone, Copy)]
pub struct LinfMMetric<'a>(pub &'a VectorSet);

impl Metric for LinfMMetric<'_> {
    fn id(&self) -> &'static str {
        "linf_m"
    }
    fn embed(&self, point: &[C64]) -> Vec<C64> {
        self.0.pairings(point)
    }
    fn dist(&self, a: &[C64], b: &[C64]) -> f64 {
        SupMetric.dist(a, b)
    }
}

/// `|y − ȳ|_{ℰ_u}`; embeds `y ↦ (|α_ℓ|⟨X_ℓ, y⟩)_ℓ`.
#[derive(Debug, Clone)]
pub struct EllipsoidMetric<'a> {
    xs: &'a VectorSet,
    alpha_abs: Vec<f64>,
}

impl<'a> EllipsoidMetric<'a> {
    pub fn new(xs: &'a VectorSet, u: &[C64]) -> Self {
        let alpha_abs = xs.pairings(u).iter().map(|z| z.norm()).collect();
        EllipsoidMetric { xs, alpha_abs }
    }

    /// `Σ_ℓ |α_ℓ|²`.
    pub fn alpha_sq_sum(&self) -> f64 {
        self.alpha_abs.iter().map(|a| a * a).sum()
    }
}

impl Metric for EllipsoidMetric<'_> {
    fn id(&self) -> &'static str {
        "ellipsoid"
    }
    fn embed(&self, point: &[C64]) -> Vec<C64> {
        self.xs.pairings(point).iter().zip(&self.alpha_abs).map(|(z, a)| z * *a).collect()
    }
    fn dist(&self, a: &[C64], b: &[C64]) -> f64 {
        L2Metric.dist(a, b)
    }
}

/// The norm of a ball as a metric.
#[derive(Debug, Clone, Copy)]
pub struct BallMetric<'a>(pub Ball<'a>);

impl Metric for BallMetric<'_> {
    fn id(&self) -> &'static str {
        "ball"
    }
    fn embed(&self, point: &[C64]) -> Vec<C64> {
        point.to_vec()
    }
    fn dist(&self, a: &[C64], b: &[C64]) -> f64 {
        let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.0.norm(&d)
    }
}

/// A stream of points of `T`. `None` means the set has been enumerated.
pub trait PointSource {
    fn next_point(&mut self) -> Option<Vec<C64>>;
}

/// Enumerates a finite set in order.
#[derive(Debug, Clone)]
pub struct FinitePoints {
    points: Vec<Vec<C64>>,
    pos: usize,
}

impl FinitePoints {
    pub fn new(points: Vec<Vec<C64>>) -> Self {
        FinitePoints { points, pos: 0 }
    }

    pub fn from_real(points: &[Vec<f64>]) -> Self {
        Self::new(points.iter().map(|p| p.iter().map(|&x| C64::new(x, 0.0)).collect()).collect())
    }
}

impl PointSource for FinitePoints {
    fn next_point(&mut self) -> Option<Vec<C64>> {
        let p = self.points.get(self.pos).cloned();
        self.pos += 1;
        p
    }
}

/// Uniform points of a unit ball on the span: a Gaussian direction scaled to
/// the sphere of the ball's norm, times `U^{1/d}` with `d` the real dimension.
#[derive(Debug, Clone)]
pub struct BallSampler<'a> {
    ball: Ball<'a>,
    rng: ChaCha8Rng,
    real: bool,
}

impl<'a> BallSampler<'a> {
    /// `real` restricts to real coefficient vectors (natural for Walsh spans).
    pub fn new(ball: Ball<'a>, real: bool, seed: u64) -> Self {
        BallSampler {
            ball,
            rng: substream(seed, Purpose::Points, 0),
            real,
        }
    }
}

impl PointSource for BallSampler<'_> {
    fn next_point(&mut self) -> Option<Vec<C64>> {
        let n = self.ball.sys.n();
        let dir: Vec<C64> = if self.real {
            (0..n).map(|_| C64::new(self.rng.sample(StandardNormal), 0.0)).collect()
        } else {
            optimize::gaussian_vector(&mut self.rng, n, None)
        };
        let d = if self.real { n } else { 2 * n } as f64;
        let r = self.rng.random::<f64>().powf(1.0 / d);
        Some(self.ball.to_sphere(&dir).iter().map(|z| z * r).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingResult {
    pub eps: f64,
    pub centers: Vec<Vec<C64>>,
    pub count: usize,
    pub metric_id: String,
    /// The source was enumerated completely, so the packing is maximal.
    pub exhausted: bool,
    /// Stopped at the center cap; `count` is then a truncated lower bound.
    pub capped: bool,
    pub proposals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    /// Consecutive rejections before stopping.
    pub budget: usize,
    pub max_centers: Option<usize>,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            budget: DEFAULT_BUDGET,
            max_centers: None,
        }
    }
}

fn validate_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(out_of_range("eps", format!("need ε > 0, got {eps}")));
    }
    Ok(())
}

/// Greedy `ε`-separated subset of the source: a lower bound on `M(T, ε)`.
pub fn greedy_packing<S: PointSource, M: Metric + ?Sized>(
    source: &mut S,
    metric: &M,
    eps: f64,
    cfg: &PackingConfig,
) -> Result<PackingResult> {
    extend_packing(source, metric, eps, cfg, Vec::new())
}

fn extend_packing<S: PointSource, M: Metric + ?Sized>(
    source: &mut S,
    metric: &M,
    eps: f64,
    cfg: &PackingConfig,
    seed_centers: Vec<Vec<C64>>,
) -> Result<PackingResult> {
    validate_eps(eps)?;
    if cfg.budget == 0 {
        return Err(out_of_range("budget", "need budget ≥ 1"));
    }
    let mut embedded: Vec<Vec<C64>> = seed_centers.iter().map(|c| metric.embed(c)).collect();
    let mut centers = seed_centers;
    let (mut rejections, mut proposals) = (0, 0);
    let (mut exhausted, mut capped) = (false, false);
    while rejections < cfg.budget {
        if cfg.max_centers.is_some_and(|cap| centers.len() >= cap) {
            capped = true;
            break;
        }
        let Some(p) = source.next_point() else {
            exhausted = true;
            break;
        };
        proposals += 1;
        let e = metric.embed(&p);
        if embedded.iter().all(|c| metric.dist(c, &e) >= eps) {
            embedded.push(e);
            centers.push(p);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    if proposals == 0 && centers.is_empty() {
        return Err(Error::SamplerExhausted);
    }
    Ok(PackingResult {
        eps,
        count: centers.len(),
        centers,
        metric_id: metric.id().to_string(),
        exhausted,
        capped,
        proposals,
    })
}

/// Packings over an `ε` grid, nested so counts are non-increasing in `ε`.
///
/// Grid points are processed from the largest; each packing starts from the
/// centers of the previous (coarser) one and then draws from a fresh source.
/// Results are returned in the order of `eps_grid`.
pub fn packing_sweep<S, F, M>(
    mut make_source: F,
    metric: &M,
    eps_grid: &[f64],
    cfg: &PackingConfig,
) -> Result<Vec<PackingResult>>
where
    S: PointSource,
    F: FnMut() -> S,
    M: Metric + ?Sized,
{
    if eps_grid.is_empty() {
        return Err(Error::Empty("eps grid"));
    }
    let mut order: Vec<usize> = (0..eps_grid.len()).collect();
    order.sort_by(|&i, &j| eps_grid[j].total_cmp(&eps_grid[i]).then(i.cmp(&j)));
    let mut out: Vec<Option<PackingResult>> = vec![None; eps_grid.len()];
    let mut prev: Vec<Vec<C64>> = Vec::new();
    for i in order {
        let mut source = make_source();
        let res = extend_packing(&mut source, metric, eps_grid[i], cfg, prev.clone())?;
        prev = res.centers.clone();
        out[i] = Some(res);
    }
    Ok(out.into_iter().map(|r| r.expect("filled")).collect())
}

/// Sets up to this size get an exact minimum cover.
pub const EXACT_COVER_MAX: usize = 16;

/// Smallest number of open `r`-balls centered in `T` covering `T`
/// (exact for small sets, greedy set cover otherwise).
pub fn cover_count<M: Metric + ?Sized>(points: &[Vec<C64>], metric: &M, r: f64) -> (usize, bool) {
    let n = points.len();
    if n == 0 {
        return (0, true);
    }
    let emb: Vec<Vec<C64>> = points.iter().map(|p| metric.embed(p)).collect();
    let covers: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| metric.dist(&emb[i], &emb[j]) < r).collect())
        .collect();
    if n <= EXACT_COVER_MAX {
        let masks: Vec<u32> = covers
            .iter()
            .map(|row| row.iter().enumerate().fold(0u32, |m, (j, &c)| if c { m | 1 << j } else { m }))
            .collect();
        let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        for size in 1..=n {
            if any_cover(&masks, full, size, 0, 0) {
                return (size, true);
            }
        }
        return (n, true);
    }
    let mut uncovered = vec![true; n];
    let mut left = n;
    let mut count = 0;
    while left > 0 {
        let best = (0..n)
            .max_by_key(|&i| (covers[i].iter().zip(&uncovered).filter(|(c, u)| **c && **u).count(), std::cmp::Reverse(i)))
            .expect("nonempty");
        for (u, &c) in uncovered.iter_mut().zip(&covers[best]) {
            if c && *u {
                *u = false;
                left -= 1;
            }
        }
        count += 1;
    }
    (count, false)
}

fn any_cover(masks: &[u32], full: u32, size: usize, start: usize, acc: u32) -> bool {
    if acc == full {
        return true;
    }
    if size == 0 {
        return false;
    }
    (start..masks.len()).any(|i| any_cover(masks, full, size - 1, i + 1, acc | masks[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub eps: f64,
    /// `N(T, ε)`.
    pub cover_eps: usize,
    /// `M(T, ε)` from the exhaustive greedy packing.
    pub packing_eps: usize,
    /// Maximal packing at `ε/2`, which is also an `ε/2`-cover.
    pub packing_half_eps: usize,
    /// Exact `N(T, ε/2)` when computable.
    pub cover_half_eps: usize,
    pub cover_exact: bool,
    pub holds: bool,
}

/// `N(T,ε) ≤ M(T,ε) ≤ N(T,ε/2)` on a finite set, with `N(T,ε/2)` bounded by
/// the maximal `ε/2` packing.
pub fn sandwich_check<M: Metric + ?Sized>(points: &[Vec<C64>], metric: &M, eps: f64) -> Result<SandwichReport> {
    validate_eps(eps)?;
    if points.is_empty() {
        return Err(Error::Empty("point set"));
    }
    let cfg = PackingConfig {
        budget: usize::MAX,
        max_centers: None,
    };
    let packing = greedy_packing(&mut FinitePoints::new(points.to_vec()), metric, eps, &cfg)?.count;
    let half = greedy_packing(&mut FinitePoints::new(points.to_vec()), metric, eps / 2.0, &cfg)?.count;
    let (cover, exact) = cover_count(points, metric, eps);
    let (cover_half, exact_half) = cover_count(points, metric, eps / 2.0);
    Ok(SandwichReport {
        eps,
        cover_eps: cover,
        packing_eps: packing,
        packing_half_eps: half,
        cover_half_eps: cover_half,
        cover_exact: exact && exact_half,
        holds: cover <= packing && packing <= cover_half && cover_half <= half,
    })
}

/// `(1 + 2/t)^n`.
pub fn volumetric_bound(n: usize, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(out_of_range("t", format!("need t > 0, got {t}")));
    }
    Ok((1.0 + 2.0 / t).powf(n as f64))
}

/// `g ↦ sup_{z ∈ T} ⟨g, z⟩` for a real Gaussian vector `g`.
pub trait SupportFunction: Sync {
    fn dim(&self) -> usize;
    fn support(&self, g: &[f64]) -> f64;
}

/// A finite subset of `R^d` (a segment is the set of its two endpoints).
#[derive(Debug, Clone)]
pub struct FiniteSet(pub Vec<Vec<f64>>);

impl SupportFunction for FiniteSet {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |p| p.len())
    }
    fn support(&self, g: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|z| z.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Euclidean unit ball of `R^d`.
#[derive(Debug, Clone, Copy)]
pub struct L2Ball(pub usize);

impl SupportFunction for L2Ball {
    fn dim(&self) -> usize {
        self.0
    }
    fn support(&self, g: &[f64]) -> f64 {
        g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `E‖G‖_2` for a standard Gaussian in `R^d`: `√2 Γ((d+1)/2)/Γ(d/2)`.
pub fn expected_gaussian_norm(d: usize) -> f64 {
    // Γ(x+1) = xΓ(x) gives E‖G‖_{d+2} = E‖G‖_d · (d+1)/d
    let (mut k, mut value) = if d % 2 == 1 {
        (1, (2.0 / std::f64::consts::PI).sqrt())
    } else {
        (2, (std::f64::consts::PI / 2.0).sqrt())
    };
    while k < d {
        value *= (k as f64 + 1.0) / k as f64;
        k += 2;
    }
    value
}

/// Image `{(α_ℓ⟨X_ℓ, y⟩)_ℓ : y ∈ B}` in `R^m`; its support function is the
/// dual norm `‖Σ α_ℓ g_ℓ X_ℓ‖_*`, estimated from below by ascent.
#[derive(Debug, Clone)]
pub struct DualImage<'a> {
    pub ball: Ball<'a>,
    pub xs: &'a VectorSet,
    pub alpha: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
    pub ascent: AscentConfig,
}

impl SupportFunction for DualImage<'_> {
    fn dim(&self) -> usize {
        self.xs.m()
    }
    fn support(&self, g: &[f64]) -> f64 {
        let n = self.xs.n();
        let mut w = vec![C64::new(0.0, 0.0); n];
        for (j, (gj, aj)) in g.iter().zip(&self.alpha).enumerate() {
            for (wi, b) in w.iter_mut().zip(self.xs.row(j)) {
                *wi += b * (gj * aj);
            }
        }
        let grad_lin: Vec<C64> = w.iter().map(|z| z.conj()).collect();
        let objective = |a: &[C64]| {
            let f: f64 = w.iter().zip(a).map(|(wi, ai)| (wi * ai).re).sum();
            let (nn, gn) = self.ball.norm_sq_with_grad(a, true);
            let nrm = nn.sqrt();
            let g = grad_lin
                .iter()
                .zip(&gn)
                .map(|(gl, gni)| (gl * nrm - gni * (f / (2.0 * nrm))) / nn)
                .collect();
            (f / nrm, g)
        };
        let mut starts = vec![grad_lin.clone()];
        let hash = g.iter().fold(self.seed, |h, x| h.rotate_left(7) ^ x.to_bits());
        for r in 0..self.restarts {
            let mut rng = substream(hash, Purpose::Starts, r as u64);
            starts.push(optimize::gaussian_vector(&mut rng, n, None));
        }
        optimize::multi_start(objective, starts, |_| true, &self.ascent).map_or(0.0, |(o, _)| o.value.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// `E sup_{z∈T} ⟨G, z⟩` by Monte Carlo over `trials` Gaussian draws.
pub fn gaussian_width<S: SupportFunction + ?Sized>(set: &S, trials: usize, seed: u64) -> Result<MeanEstimate> {
    if trials == 0 {
        return Err(out_of_range("trials", "need trials ≥ 1"));
    }
    let d = set.dim();
    let values = par::map_indexed(trials, |t| {
        let mut rng = substream(seed, Purpose::Gaussian, t as u64);
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        set.support(&g)
    });
    let (mean, std_err) = par::mean_and_se(&values);
    Ok(MeanEstimate { mean, std_err, trials })
}

/// `E‖Σ g_i x_i‖ / (Σ‖x_i‖²)^{1/2}`, a lower estimate of the type-2 constant.
pub fn type2_estimate<N>(vectors: &[Vec<C64>], norm: N, trials: usize, seed: u64) -> Result<MeanEstimate>
where
    N: Fn(&[C64]) -> f64 + Sync,
{
    if vectors.is_empty() {
        return Err(Error::Empty("vector list"));
    }
    if trials == 0 {
        return Err(out_of_range("trials", "need trials ≥ 1"));
    }
    let len = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != len) {
        return Err(Error::Shape {
            expected: len,
            got: v.len(),
        });
    }
    let denom = vectors.iter().map(|v| norm(v).powi(2)).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Ok(MeanEstimate {
            mean: 0.0,
            std_err: 0.0,
            trials,
        });
    }
    let values = par::map_indexed(trials, |t| {
        let mut rng = substream(seed, Purpose::Gaussian, t as u64);
        let mut sum = vec![C64::new(0.0, 0.0); len];
        for v in vectors {
            let g: f64 = rng.sample(StandardNormal);
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x * g);
        }
        norm(&sum) / denom
    });
    let (mean, std_err) = par::mean_and_se(&values);
    Ok(MeanEstimate { mean, std_err, trials })
}

/// One row of an entropy diagnostic: `(eps, count, ratio)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub eps: f64,
    pub count: usize,
    pub ratio: f64,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub metric: String,
    /// The constant-bearing denominator the ratios are normalized by.
    pub scale: f64,
    pub rows: Vec<EntropyRow>,
    pub max_ratio: f64,
}

fn entropy_report(metric: &str, scale: f64, packings: &[PackingResult]) -> EntropyReport {
    let rows: Vec<EntropyRow> = packings
        .iter()
        .map(|p| EntropyRow {
            eps: p.eps,
            count: p.count,
            ratio: p.eps * sqrt_log(p.count) / scale,
            capped: p.capped,
        })
        .collect();
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    EntropyReport {
        metric: metric.to_string(),
        scale,
        rows,
        max_ratio,
    }
}

/// `ε√log N / (λ² T₂(E*) L √log m)` for packings of the ball in `‖·‖_{∞,m}`.
pub fn lemma3_check(
    ball: &Ball<'_>,
    xs: &VectorSet,
    eps_grid: &[f64],
    cfg: &PackingConfig,
    real: bool,
    seed: u64,
) -> Result<EntropyReport> {
    if xs.m() < 2 {
        return Err(out_of_range("m", "need m ≥ 2 so that log m > 0"));
    }
    let scale = ball.lambda().powi(2) * ball.type2_dual() * xs.dual_norm_bound() * (xs.m() as f64).ln().sqrt();
    let metric = LinfMMetric(xs);
    let packings = packing_sweep(|| BallSampler::new(*ball, real, seed), &metric, eps_grid, cfg)?;
    Ok(entropy_report(metric.id(), scale, &packings))
}

/// `ε√log N / (T₂(E*) L)` for packings of the ball in `|·|_{ℰ_u}`.
/// Requires `Σ_ℓ |⟨X_ℓ, u⟩|² ≤ 1`.
pub fn lemma4_check(
    ball: &Ball<'_>,
    xs: &VectorSet,
    u: &[C64],
    eps_grid: &[f64],
    cfg: &PackingConfig,
    real: bool,
    seed: u64,
) -> Result<EntropyReport> {
    let metric = EllipsoidMetric::new(xs, u);
    let s = metric.alpha_sq_sum();
    if s > 1.0 + 1e-12 {
        return Err(out_of_range("u", format!("need Σ|⟨X_ℓ,u⟩|² ≤ 1, got {s}")));
    }
    let scale = ball.type2_dual() * xs.dual_norm_bound();
    let packings = packing_sweep(|| BallSampler::new(*ball, real, seed), &metric, eps_grid, cfg)?;
    Ok(entropy_report(metric.id(), scale, &packings))
}

/// Rescale `u` so that `Σ_ℓ |⟨X_ℓ, u⟩|² = 1` (unchanged if all pairings vanish).
pub fn normalize_for_ellipsoid(xs: &VectorSet, u: &[C64]) -> Vec<C64> {
    let s: f64 = xs.pairings(u).iter().map(|z| z.norm_sqr()).sum();
    if s == 0.0 {
        return u.to_vec();
    }
    u.iter().map(|z| z / s.sqrt()).collect()
}
