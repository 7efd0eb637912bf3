//! Norms and process distances on the span of an orthonormal system.
//!
//! Elements of the span are handled through their coefficient vectors
//! `a ∈ C^n` (`y = Σ a_i φ_i`), so `‖y‖_{L2} = ‖a‖_2` and a functional
//! `X_j` acts as `⟨X_j, y⟩ = Σ_i B_{ji} a_i`. `L_p` norms need grid values
//! and go through [`OrthonormalSystem::synthesize`].

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::optimize::{self, gaussian_vector, AscentConfig};
use crate::rng::{substream, Purpose};
use crate::systems::{OrthonormalSystem, SpanElement, C64};

/// Membership tolerance for `‖y‖ ≤ 1`.
pub const BALL_TOL: f64 = 1e-9;

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(out_of_range("p", format!("need p ≥ 1 or p = ∞, got {p}")));
    }
    Ok(())
}

/// `(Σ_x w_x |f(x)|^p)^{1/p}` with uniform weights; `max |f|` for `p = ∞`.
pub fn lp_norm_grid(f: &[C64], p: f64) -> Result<f64> {
    check_p(p)?;
    if f.is_empty() {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(f.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let w = 1.0 / f.len() as f64;
    // scale by the max modulus to keep |f|^p in range
    let top = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = if p == 2.0 {
        f.iter().map(|z| (z.norm() / top).powi(2)).sum()
    } else if p == 1.0 {
        f.iter().map(|z| z.norm() / top).sum()
    } else {
        f.iter().map(|z| (z.norm() / top).powf(p)).sum()
    };
    Ok(top * (w * s).powf(1.0 / p))
}

/// `L_p` norm of a span element, synthesized on the system's grid.
pub fn lp_norm(f: &SpanElement, sys: &OrthonormalSystem, p: f64) -> Result<f64> {
    lp_norm_grid(&f.synthesize(sys), p)
}

/// `‖f‖_p` with its gradient `G` with respect to the grid values,
/// `d‖f‖_p = Re Σ_x conj(G_x) df_x`. Zero grid values get a zero subgradient.
pub fn lp_norm_with_grad(f: &[C64], p: f64) -> (f64, Vec<C64>) {
    let norm = lp_norm_grid(f, p).expect("p validated by caller");
    let zero = C64::new(0.0, 0.0);
    if norm == 0.0 {
        return (0.0, vec![zero; f.len()]);
    }
    let w = 1.0 / f.len() as f64;
    let scale = norm.powf(1.0 - p) * w;
    let grad = f
        .iter()
        .map(|z| {
            let r = z.norm();
            if r == 0.0 {
                zero
            } else {
                z * (scale * r.powf(p - 2.0))
            }
        })
        .collect();
    (norm, grad)
}

/// Hölder conjugate `q = p/(p−1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// The interpolated space `‖y‖ = ((‖y‖²_{Lp} + ρ⁻²‖y‖²_{L2})/2)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpSpace {
    pub p: f64,
    pub rho: f64,
    /// Multiplier `C` in the dual type-2 constant `C·√(p/(p−1))`.
    pub calibration: f64,
}

impl EpSpace {
    pub fn new(p: f64, rho: f64) -> Result<Self> {
        Self::with_calibration(p, rho, 1.0)
    }

    pub fn with_calibration(p: f64, rho: f64, calibration: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(out_of_range("p", format!("need 1 < p ≤ 2, got {p}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(out_of_range("rho", format!("need ρ > 0, got {rho}")));
        }
        if !(calibration > 0.0 && calibration.is_finite()) {
            return Err(out_of_range("calibration", format!("need C > 0, got {calibration}")));
        }
        Ok(EpSpace { p, rho, calibration })
    }

    /// Convexity constant from `λ⁻² = p(p−1)/8`.
    pub fn lambda(&self) -> f64 {
        (8.0 / (self.p * (self.p - 1.0))).sqrt()
    }

    pub fn type2_dual(&self) -> f64 {
        self.calibration * (self.p / (self.p - 1.0)).sqrt()
    }

    /// The norm on grid values; both `L_p` and `L_2` are computed on the grid.
    pub fn norm_grid(&self, y: &[C64]) -> f64 {
        let lp = lp_norm_grid(y, self.p).expect("valid p");
        let l2 = lp_norm_grid(y, 2.0).expect("valid p");
        ((lp * lp + l2 * l2 / (self.rho * self.rho)) / 2.0).sqrt()
    }
}

/// `ep_norm(y)` for a span element.
pub fn ep_norm(y: &SpanElement, space: &EpSpace, sys: &OrthonormalSystem) -> f64 {
    space.norm_grid(&y.synthesize(sys))
}

/// Lower bound on `‖y‖_p / ‖y‖_2` over the span, exact when the span is the
/// whole grid (attained at a point mass). From Hölder with
/// `‖y‖_∞ ≤ √n·L·‖y‖_2`.
pub fn min_lp_over_l2(sys: &OrthonormalSystem, p: f64) -> f64 {
    let base = if sys.spans_grid() {
        sys.m0() as f64
    } else {
        sys.n() as f64 * sys.linf_bound().powi(2)
    };
    base.sqrt().powf(-(2.0 - p) / p)
}

/// Upper bound on `sup ‖y‖_2 / ‖y‖_p` over the span.
pub fn max_l2_over_lp(sys: &OrthonormalSystem, p: f64) -> f64 {
    1.0 / min_lp_over_l2(sys, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    /// Euclidean unit ball; `λ = 1`, `T₂ = 1`.
    L2,
    Ep(EpSpace),
}

/// A unit ball on the span of a system.
#[derive(Debug, Clone, Copy)]
pub struct Ball<'a> {
    pub sys: &'a OrthonormalSystem,
    pub geometry: Geometry,
}

impl<'a> Ball<'a> {
    pub fn l2(sys: &'a OrthonormalSystem) -> Self {
        Ball {
            sys,
            geometry: Geometry::L2,
        }
    }

    pub fn ep(sys: &'a OrthonormalSystem, space: EpSpace) -> Self {
        Ball {
            sys,
            geometry: Geometry::Ep(space),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self.geometry {
            Geometry::L2 => 1.0,
            Geometry::Ep(s) => s.lambda(),
        }
    }

    pub fn type2_dual(&self) -> f64 {
        match self.geometry {
            Geometry::L2 => 1.0,
            Geometry::Ep(s) => s.type2_dual(),
        }
    }

    /// Norm of `Σ a_i φ_i`.
    pub fn norm(&self, a: &[C64]) -> f64 {
        self.norm_sq_with_grad(a, false).0.sqrt()
    }

    pub fn contains(&self, a: &[C64]) -> bool {
        self.norm(a) <= 1.0 + BALL_TOL
    }

    /// `‖a‖²` and (optionally) its gradient in coefficient space.
    pub fn norm_sq_with_grad(&self, a: &[C64], want_grad: bool) -> (f64, Vec<C64>) {
        let l2sq: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        match self.geometry {
            Geometry::L2 => {
                let g = if want_grad { a.iter().map(|z| z * 2.0).collect() } else { Vec::new() };
                (l2sq, g)
            }
            Geometry::Ep(s) => {
                let f = self.sys.synthesize(a);
                let inv_rho2 = 1.0 / (s.rho * s.rho);
                if !want_grad {
                    let lp = lp_norm_grid(&f, s.p).expect("valid p");
                    return ((lp * lp + inv_rho2 * l2sq) / 2.0, Vec::new());
                }
                let (lp, gf) = lp_norm_with_grad(&f, s.p);
                let m0 = self.sys.m0() as f64;
                let ga = self.sys.analyze(&gf);
                let g = ga.iter().zip(a).map(|(gi, ai)| gi * (lp * m0) + ai * inv_rho2).collect();
                ((lp * lp + inv_rho2 * l2sq) / 2.0, g)
            }
        }
    }

    /// `sup ‖y‖_2` over the ball (an upper bound when the span is not the grid).
    pub fn l2_radius(&self) -> f64 {
        match self.geometry {
            Geometry::L2 => 1.0,
            Geometry::Ep(s) => {
                let r = min_lp_over_l2(self.sys, s.p);
                (2.0 / (r * r + 1.0 / (s.rho * s.rho))).sqrt()
            }
        }
    }

    /// Upper bound on the dual norm of a functional given its grid function
    /// and coefficient row.
    ///
    /// For `E_p`: `|⟨X,y⟩| ≤ min(‖X‖_q ‖y‖_p, ‖b‖_2 ‖y‖_2)` and
    /// `‖y‖_p² + ρ⁻²‖y‖_2² ≤ 2` on the ball; optimizing the convex
    /// combination of the two bounds gives `√2·AB/√(A²+B²)` with
    /// `A = ‖X‖_q`, `B = ρ‖b‖_2`.
    pub fn dual_norm_bound(&self, grid: Option<&[C64]>, row: &[C64]) -> f64 {
        let b = optimize::l2_norm(row);
        match self.geometry {
            Geometry::L2 => b,
            Geometry::Ep(s) => {
                let bb = s.rho * b;
                let a = match grid {
                    Some(g) => lp_norm_grid(g, conjugate_exponent(s.p)).expect("valid q"),
                    None => f64::INFINITY,
                };
                if a.is_infinite() {
                    return std::f64::consts::SQRT_2 * bb;
                }
                if a == 0.0 || bb == 0.0 {
                    return 0.0;
                }
                std::f64::consts::SQRT_2 * a * bb / (a * a + bb * bb).sqrt()
            }
        }
    }

    /// Scale `a` onto the unit sphere of this norm.
    pub fn to_sphere(&self, a: &[C64]) -> Vec<C64> {
        let r = self.norm(a);
        if r == 0.0 {
            return a.to_vec();
        }
        a.iter().map(|z| z / r).collect()
    }
}

/// Functional representation of `X_1..X_m` on the span.
#[derive(Debug, Clone, PartialEq)]
enum Rows {
    /// `X_j = φ_{picks[j]}`, so `⟨X_j, y⟩ = a_{picks[j]}`.
    Picks(Vec<usize>),
    /// Row-major `m × n`.
    Dense(Vec<C64>),
}

/// `M = sup_{y ∈ B} Σ_j |⟨X_j, y⟩|²` in its available forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MSup {
    /// Largest eigenvalue of `Σ X_j X_j*` on the span (sup over the L2 ball).
    pub l2_eigen: f64,
    /// Rigorous upper bound for the actual ball: `l2_radius² · l2_eigen`.
    pub ball_upper: f64,
    /// Heuristic lower estimate over the actual ball, when computed.
    pub search: Option<f64>,
}

impl MSup {
    /// The value reported as `M`: the L2-ball eigenvalue.
    pub fn used(&self) -> f64 {
        self.l2_eigen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    n: usize,
    rows: Rows,
    dual_norms: Vec<f64>,
    dual_norm_bound: f64,
    m_sup: MSup,
}

impl VectorSet {
    /// `X_j = φ_{picks[j]}`.
    pub fn from_picks(ball: &Ball<'_>, picks: &[usize]) -> Result<Self> {
        if picks.is_empty() {
            return Err(Error::Empty("vector set"));
        }
        let n = ball.sys.n();
        if let Some(&bad) = picks.iter().find(|&&i| i >= n) {
            return Err(out_of_range("picks", format!("index {bad} ≥ n = {n}")));
        }
        let dual_norms = picks
            .iter()
            .map(|&i| {
                let mut row = vec![C64::new(0.0, 0.0); n];
                row[i] = C64::new(1.0, 0.0);
                ball.dual_norm_bound(Some(&ball.sys.row(i)), &row)
            })
            .collect();
        let mut mult = vec![0usize; n];
        picks.iter().for_each(|&i| mult[i] += 1);
        let l2_eigen = *mult.iter().max().unwrap() as f64;
        Ok(Self::assemble(ball, Rows::Picks(picks.to_vec()), dual_norms, l2_eigen))
    }

    /// Arbitrary functionals given by their grid values; only their
    /// projection onto the span matters.
    pub fn from_functions(ball: &Ball<'_>, functions: &[Vec<C64>]) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::Empty("vector set"));
        }
        let (n, m0) = (ball.sys.n(), ball.sys.m0());
        let mut data = Vec::with_capacity(functions.len() * n);
        let mut dual_norms = Vec::with_capacity(functions.len());
        for f in functions {
            if f.len() != m0 {
                return Err(Error::Shape {
                    expected: m0,
                    got: f.len(),
                });
            }
            let row: Vec<C64> = ball.sys.analyze(f).iter().map(|z| z.conj()).collect();
            dual_norms.push(ball.dual_norm_bound(Some(f), &row));
            data.extend(row);
        }
        let rows = Rows::Dense(data);
        let l2_eigen = power_iteration(n, &rows, 1e-8);
        Ok(Self::assemble(ball, rows, dual_norms, l2_eigen))
    }

    fn assemble(ball: &Ball<'_>, rows: Rows, dual_norms: Vec<f64>, l2_eigen: f64) -> Self {
        let dual_norm_bound = dual_norms.iter().copied().fold(0.0, f64::max);
        let r = ball.l2_radius();
        VectorSet {
            n: ball.sys.n(),
            rows,
            dual_norms,
            dual_norm_bound,
            m_sup: MSup {
                l2_eigen,
                ball_upper: r * r * l2_eigen,
                search: None,
            },
        }
    }

    pub fn m(&self) -> usize {
        self.dual_norms.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn picks(&self) -> Option<&[usize]> {
        match &self.rows {
            Rows::Picks(p) => Some(p),
            Rows::Dense(_) => None,
        }
    }

    /// Upper bounds on `‖X_j‖_*` for the ball this set was built against.
    pub fn dual_norms(&self) -> &[f64] {
        &self.dual_norms
    }

    /// `L = max_j ‖X_j‖_*` (upper bound).
    pub fn dual_norm_bound(&self) -> f64 {
        self.dual_norm_bound
    }

    pub fn m_sup(&self) -> MSup {
        self.m_sup
    }

    /// Coefficient row `j`.
    pub fn row(&self, j: usize) -> Vec<C64> {
        match &self.rows {
            Rows::Picks(p) => {
                let mut r = vec![C64::new(0.0, 0.0); self.n];
                r[p[j]] = C64::new(1.0, 0.0);
                r
            }
            Rows::Dense(d) => d[j * self.n..(j + 1) * self.n].to_vec(),
        }
    }

    /// `(⟨X_j, y⟩)_j`.
    pub fn pairings(&self, a: &[C64]) -> Vec<C64> {
        apply(self.n, &self.rows, a)
    }

    /// `B^H (w ⊙ z)`.
    fn adjoint(&self, z: &[C64]) -> Vec<C64> {
        adjoint(self.n, &self.rows, z)
    }

    /// `q(a) = Σ_j w_j |⟨X_j, y⟩|²` and its gradient `2 B^H (w ⊙ Ba)`.
    pub fn weighted_quadratic(&self, weights: &[f64], a: &[C64]) -> (f64, Vec<C64>) {
        let z = self.pairings(a);
        let q = z.iter().zip(weights).map(|(v, w)| w * v.norm_sqr()).sum();
        let wz: Vec<C64> = z.iter().zip(weights).map(|(v, w)| v * (2.0 * w)).collect();
        (q, self.adjoint(&wz))
    }

    /// Rescale every functional by `t`.
    pub fn scaled(&self, t: f64) -> VectorSet {
        let data = match &self.rows {
            Rows::Picks(p) => {
                let mut d = Vec::with_capacity(p.len() * self.n);
                for &i in p {
                    let mut r = vec![C64::new(0.0, 0.0); self.n];
                    r[i] = C64::new(t, 0.0);
                    d.extend(r);
                }
                d
            }
            Rows::Dense(d) => d.iter().map(|z| z * t).collect(),
        };
        VectorSet {
            n: self.n,
            rows: Rows::Dense(data),
            dual_norms: self.dual_norms.iter().map(|v| v * t.abs()).collect(),
            dual_norm_bound: self.dual_norm_bound * t.abs(),
            m_sup: MSup {
                l2_eigen: self.m_sup.l2_eigen * t * t,
                ball_upper: self.m_sup.ball_upper * t * t,
                search: self.m_sup.search.map(|s| s * t * t),
            },
        }
    }

    /// Fill [`MSup::search`] by multi-start ascent of `Σ|⟨X_j,y⟩|²/‖y‖²`.
    pub fn search_m_sup(&mut self, ball: &Ball<'_>, restarts: usize, seed: u64, cfg: &AscentConfig) {
        let weights = vec![1.0; self.m()];
        let value = quadratic_over_ball(self, ball, &weights, restarts, seed, cfg).value;
        self.m_sup.search = Some(value);
    }
}

fn apply(n: usize, rows: &Rows, a: &[C64]) -> Vec<C64> {
    match rows {
        Rows::Picks(p) => p.iter().map(|&i| a[i]).collect(),
        Rows::Dense(d) => d
            .chunks_exact(n)
            .map(|r| r.iter().zip(a).map(|(b, x)| b * x).sum())
            .collect(),
    }
}

fn adjoint(n: usize, rows: &Rows, z: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n];
    match rows {
        Rows::Picks(p) => p.iter().zip(z).for_each(|(&i, v)| out[i] += v),
        Rows::Dense(d) => {
            for (r, v) in d.chunks_exact(n).zip(z) {
                for (o, b) in out.iter_mut().zip(r) {
                    *o += b.conj() * v;
                }
            }
        }
    }
    out
}

/// Largest eigenvalue of `B^H B` by power iteration to relative tolerance `tol`.
fn power_iteration(n: usize, rows: &Rows, tol: f64) -> f64 {
    let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + 0.01 * (i % 7) as f64, 0.003 * (i % 5) as f64)).collect();
    let mut est = 0.0;
    for _ in 0..20_000 {
        let Some(u) = optimize::normalized(v.clone()) else {
            return 0.0;
        };
        let w = adjoint(n, rows, &apply(n, rows, &u));
        let next: f64 = u.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        let done = (next - est).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        est = next;
        v = w;
        if done {
            break;
        }
    }
    est
}

/// Result of a heuristic quadratic sup over a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSup {
    pub value: f64,
    /// Maximizer on the unit sphere of the ball's norm.
    pub witness: Vec<C64>,
    pub non_converged: usize,
}

/// Heuristic `sup_{y ∈ B} |Σ_j w_j |⟨X_j,y⟩|²|` via ascent of `±q/‖·‖²`.
///
/// Starts are drawn from `(seed, Starts)` substreams and shared by both signs,
/// so negating every weight returns bit-identical output.
pub fn quadratic_over_ball(
    xs: &VectorSet,
    ball: &Ball<'_>,
    weights: &[f64],
    restarts: usize,
    seed: u64,
    cfg: &AscentConfig,
) -> QuadraticSup {
    quadratic_over_subspace(xs, ball, weights, None, restarts, seed, cfg)
}

/// [`quadratic_over_ball`] with `y` restricted to `span{φ_i : i ∈ support}`.
pub fn quadratic_over_subspace(
    xs: &VectorSet,
    ball: &Ball<'_>,
    weights: &[f64],
    support: Option<&[usize]>,
    restarts: usize,
    seed: u64,
    cfg: &AscentConfig,
) -> QuadraticSup {
    let n = xs.n();
    let mask: Option<Vec<bool>> = support.map(|s| {
        let mut m = vec![false; n];
        s.iter().for_each(|&i| m[i] = true);
        m
    });
    let restrict = |v: &mut [C64]| {
        if let Some(m) = &mask {
            v.iter_mut().zip(m).filter(|(_, keep)| !**keep).for_each(|(z, _)| *z = C64::new(0.0, 0.0));
        }
    };
    let mut starts = start_points(xs, weights, support, restarts, seed);
    starts.iter_mut().for_each(|s| restrict(s));
    let mut best = QuadraticSup {
        value: 0.0,
        witness: vec![C64::new(0.0, 0.0); n],
        non_converged: 0,
    };
    let mut non_converged = 0;
    // evaluate the two signs in a fixed order that flips with the weights,
    // keeping sign-flipped runs bit-identical
    let first_sign = if weights.iter().sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    let signs = if weights.iter().sum::<f64>() == 0.0 {
        [1.0, -1.0]
    } else {
        [first_sign, -first_sign]
    };
    for sign in signs {
        let objective = |a: &[C64]| {
            let (q, gq) = xs.weighted_quadratic(weights, a);
            let (nn, gn) = ball.norm_sq_with_grad(a, true);
            let r = sign * q / nn;
            let mut g: Vec<C64> = gq
                .iter()
                .zip(&gn)
                .map(|(x, y)| (x * (sign * nn) - y * (sign * q)) / (nn * nn))
                .collect();
            restrict(&mut g);
            (r, g)
        };
        if let Some((out, nc)) = optimize::multi_start(objective, starts.clone(), |_| true, cfg) {
            non_converged += nc;
            if out.value > best.value {
                best.value = out.value;
                best.witness = ball.to_sphere(&out.point);
            }
        }
    }
    best.non_converged = non_converged;
    best
}

fn start_points(xs: &VectorSet, weights: &[f64], support: Option<&[usize]>, restarts: usize, seed: u64) -> Vec<Vec<C64>> {
    let n = xs.n();
    let mut starts = Vec::with_capacity(restarts + 2);
    // rows with the largest |weight| are natural local maxima candidates
    let mut order: Vec<usize> = (0..xs.m()).collect();
    order.sort_by(|&i, &j| weights[j].abs().total_cmp(&weights[i].abs()).then(i.cmp(&j)));
    for &j in order.iter().take(2) {
        starts.push(xs.row(j).iter().map(|z| z.conj()).collect());
    }
    // flat combinations of the rows of each sign class
    for positive in [true, false] {
        let mut v = vec![C64::new(0.0, 0.0); n];
        for (j, w) in weights.iter().enumerate() {
            if (*w > 0.0) == positive && *w != 0.0 {
                v.iter_mut().zip(xs.row(j)).for_each(|(a, b)| *a += b.conj());
            }
        }
        starts.push(v);
    }
    for r in 0..restarts {
        let mut rng = substream(seed, Purpose::Starts, r as u64);
        starts.push(gaussian_vector(&mut rng, n, support));
    }
    starts
}

/// `‖y‖_{∞,m} = max_j |⟨X_j, y⟩|`.
pub fn sup_norm_m(xs: &VectorSet, y: &[C64]) -> f64 {
    xs.pairings(y).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `d(y,ȳ) = (Σ_j |⟨X_j,y−ȳ⟩|² (|⟨X_j,y⟩|² + |⟨X_j,ȳ⟩|²))^{1/2}`.
pub fn quasi_d(xs: &VectorSet, y: &[C64], ybar: &[C64]) -> f64 {
    let (a, b) = (xs.pairings(y), xs.pairings(ybar));
    a.iter()
        .zip(&b)
        .map(|(u, v)| (u - v).norm_sqr() * (u.norm_sqr() + v.norm_sqr()))
        .sum::<f64>()
        .sqrt()
}

/// `d̃(y,ȳ) = (Σ_j (|⟨X_j,y⟩|² − |⟨X_j,ȳ⟩|²)²)^{1/2}`.
pub fn tilde_d(xs: &VectorSet, y: &[C64], ybar: &[C64]) -> f64 {
    let (a, b) = (xs.pairings(y), xs.pairings(ybar));
    a.iter()
        .zip(&b)
        .map(|(u, v)| (u.norm_sqr() - v.norm_sqr()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `|x|_{ℰ_u} = (Σ_i |⟨X_i,x⟩|² |⟨X_i,u⟩|²)^{1/2}`.
pub fn ellipsoid_norm(xs: &VectorSet, u: &[C64], x: &[C64]) -> f64 {
    let (a, w) = (xs.pairings(x), xs.pairings(u));
    a.iter()
        .zip(&w)
        .map(|(v, alpha)| v.norm_sqr() * alpha.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sides {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl Sides {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        Sides {
            lhs,
            rhs,
            slack,
            holds: slack >= -tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricInequalities {
    /// `d̃(y,ȳ) ≤ 2 d(y,ȳ)`.
    pub tilde_le_2d: Sides,
    /// `d(y,ȳ) ≤ √2 ‖y−ȳ‖_{∞,m} √M`.
    pub d_le_sup_norm: Sides,
    /// `‖y−ȳ‖_{∞,m} ≤ max_j ‖X_j‖_* ‖y−ȳ‖`.
    pub sup_norm_le_dual: Sides,
    /// `d²(z,z̄) ≤ 8(|z−z̄|²_{ℰ_u} + M ‖z−z̄‖²_{∞,m} (‖z−u‖² + ‖z̄−u‖²))`.
    pub d2_le_ellipsoid: Sides,
}

impl MetricInequalities {
    pub fn all_hold(&self) -> bool {
        self.tilde_le_2d.holds && self.d_le_sup_norm.holds && self.sup_norm_le_dual.holds && self.d2_le_ellipsoid.holds
    }

    pub fn min_slack(&self) -> f64 {
        [self.tilde_le_2d, self.d_le_sup_norm, self.sup_norm_le_dual, self.d2_le_ellipsoid]
            .iter()
            .map(|s| s.slack)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluate the four process-metric inequalities at one tuple. `M` is the
/// rigorous [`MSup::ball_upper`]; `y, ȳ, z, z̄, u` must lie in the ball.
#[allow(clippy::too_many_arguments)]
pub fn check_metric_inequalities(
    ball: &Ball<'_>,
    xs: &VectorSet,
    y: &[C64],
    ybar: &[C64],
    z: &[C64],
    zbar: &[C64],
    u: &[C64],
    tol: f64,
) -> Result<MetricInequalities> {
    for (name, v) in [("y", y), ("ybar", ybar), ("z", z), ("zbar", zbar), ("u", u)] {
        if !ball.contains(v) {
            return Err(out_of_range(name, "point lies outside the unit ball"));
        }
    }
    let m = xs.m_sup().ball_upper;
    let sub = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, w)| x - w).collect::<Vec<C64>>();
    let dy = sub(y, ybar);
    let dz = sub(z, zbar);

    let d = quasi_d(xs, y, ybar);
    let tilde = tilde_d(xs, y, ybar);
    let sup_dy = sup_norm_m(xs, &dy);

    let dz2 = quasi_d(xs, z, zbar).powi(2);
    let ell = ellipsoid_norm(xs, u, &dz).powi(2);
    let sup_dz = sup_norm_m(xs, &dz);
    let spread = ball.norm(&sub(z, u)).powi(2) + ball.norm(&sub(zbar, u)).powi(2);

    Ok(MetricInequalities {
        tilde_le_2d: Sides::new(tilde, 2.0 * d, tol),
        d_le_sup_norm: Sides::new(d, std::f64::consts::SQRT_2 * sup_dy * m.sqrt(), tol),
        sup_norm_le_dual: Sides::new(sup_dy, xs.dual_norm_bound() * ball.norm(&dy), tol),
        d2_le_ellipsoid: Sides::new(dz2, 8.0 * (ell + m * sup_dz * sup_dz * spread), tol),
    })
}

/// Clarkson-type inequality
/// `‖(f+g)/2‖²_p + (p(p−1)/8)‖(f−g)/2‖²_p ≤ ½(‖f‖²_p + ‖g‖²_p)` on grid values.
pub fn clarkson_check(f: &[C64], g: &[C64], p: f64) -> Result<Sides> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(out_of_range("p", format!("need 1 < p ≤ 2, got {p}")));
    }
    if f.len() != g.len() {
        return Err(Error::Shape {
            expected: f.len(),
            got: g.len(),
        });
    }
    let half_sum: Vec<C64> = f.iter().zip(g).map(|(a, b)| (a + b) * 0.5).collect();
    let half_diff: Vec<C64> = f.iter().zip(g).map(|(a, b)| (a - b) * 0.5).collect();
    let n = |v: &[C64]| lp_norm_grid(v, p).expect("valid p").powi(2);
    let lhs = n(&half_sum) + p * (p - 1.0) / 8.0 * n(&half_diff);
    let rhs = 0.5 * (n(f) + n(g));
    Ok(Sides::new(lhs, rhs, 1e-12))
}

/// Sample a point of the ball: Gaussian direction scaled to radius `r`.
pub fn ball_point<R: rand::Rng>(ball: &Ball<'_>, rng: &mut R, radius: f64) -> Vec<C64> {
    let v = gaussian_vector(rng, ball.sys.n(), None);
    ball.to_sphere(&v).iter().map(|z| z * radius).collect()
}

/// Random tuple `(y, ȳ, z, z̄, u)` inside the ball for property checks.
pub fn random_tuple(ball: &Ball<'_>, seed: u64, index: u64) -> [Vec<C64>; 5] {
    use rand::Rng;
    let mut rng = substream(seed, Purpose::Points, index);
    std::array::from_fn(|_| {
        let r: f64 = rng.random::<f64>();
        ball_point(ball, &mut rng, r)
    })
}

#[doc(hidden)]
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
