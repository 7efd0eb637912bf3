//! Multi-start ascent for scale-invariant objectives on `C^n \ {0}`.
//!
//! Every heuristic supremum in this crate is a ratio of homogeneous
//! functions of the same degree, so maximizing over a norm ball is the same
//! as maximizing over the unit sphere of coefficient space. Iterates move
//! along great circles in the direction of the tangential gradient, with a
//! backtracking step that only accepts strict improvements; the value is
//! therefore monotone and the result is always a lower estimate of the sup.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::systems::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    pub max_iters: usize,
    /// Initial step, as an angle on the sphere.
    pub initial_step: f64,
    /// Stop once the step has shrunk below this angle.
    pub min_step: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iters: 200,
            initial_step: 0.5,
            min_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOutcome {
    pub value: f64,
    /// Unit-ℓ2 maximizer.
    pub point: Vec<C64>,
    pub iterations: usize,
    /// False when the iteration cap was hit before the step collapsed.
    pub converged: bool,
}

pub fn l2_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalized(mut v: Vec<C64>) -> Option<Vec<C64>> {
    let norm = l2_norm(&v);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|z| *z /= norm);
    Some(v)
}

/// Maximize `objective` (value, gradient) from `start`, visiting only points
/// accepted by `admissible`. The gradient `G` is taken in the real sense:
/// `dF = Re Σ conj(G_i) da_i`.
pub fn ascend<F, A>(mut objective: F, start: Vec<C64>, mut admissible: A, cfg: &AscentConfig) -> Option<AscentOutcome>
where
    F: FnMut(&[C64]) -> (f64, Vec<C64>),
    A: FnMut(&[C64]) -> bool,
{
    let mut x = normalized(start)?;
    if !admissible(&x) {
        return None;
    }
    let (mut value, mut grad) = objective(&x);
    if !value.is_finite() {
        return None;
    }
    let mut step = cfg.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let radial: f64 = x.iter().zip(&grad).map(|(a, g)| (a.conj() * g).re).sum();
        let mut dir: Vec<C64> = grad.iter().zip(&x).map(|(g, a)| g - a * radial).collect();
        let dnorm = l2_norm(&dir);
        if dnorm == 0.0 || !dnorm.is_finite() {
            converged = true;
            break;
        }
        dir.iter_mut().for_each(|d| *d /= dnorm);
        let mut accepted = false;
        while step >= cfg.min_step {
            let (c, s) = (step.cos(), step.sin());
            let cand: Vec<C64> = x.iter().zip(&dir).map(|(a, d)| a * c + d * s).collect();
            if let Some(cand) = normalized(cand) {
                if admissible(&cand) {
                    let (v, g) = objective(&cand);
                    if v.is_finite() && v > value {
                        x = cand;
                        value = v;
                        grad = g;
                        accepted = true;
                        step = (step * 1.5).min(std::f64::consts::FRAC_PI_2);
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Some(AscentOutcome {
        value,
        point: x,
        iterations,
        converged,
    })
}

/// Best outcome over several starts; ties keep the earliest start.
pub fn multi_start<F, A>(
    mut objective: F,
    starts: Vec<Vec<C64>>,
    mut admissible: A,
    cfg: &AscentConfig,
) -> Option<(AscentOutcome, usize)>
where
    F: FnMut(&[C64]) -> (f64, Vec<C64>),
    A: FnMut(&[C64]) -> bool,
{
    let mut best: Option<AscentOutcome> = None;
    let mut non_converged = 0;
    for start in starts {
        if let Some(out) = ascend(&mut objective, start, &mut admissible, cfg) {
            if !out.converged {
                non_converged += 1;
            }
            if best.as_ref().is_none_or(|b| out.value > b.value) {
                best = Some(out);
            }
        }
    }
    best.map(|b| (b, non_converged))
}

/// Standard complex Gaussian vector restricted to `support` (all indices if `None`).
pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize, support: Option<&[usize]>) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n];
    let draw = |rng: &mut R| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    match support {
        Some(s) => s.iter().for_each(|&i| v[i] = draw(rng)),
        None => v.iter_mut().for_each(|z| *z = draw(rng)),
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Rayleigh quotient of a diagonal matrix: sup is the largest entry.
    fn rayleigh(diag: &[f64]) -> impl FnMut(&[C64]) -> (f64, Vec<C64>) + '_ {
        move |a: &[C64]| {
            let nn: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            let q: f64 = a.iter().zip(diag).map(|(z, d)| d * z.norm_sqr()).sum();
            let r = q / nn;
            let g = a.iter().zip(diag).map(|(z, d)| (z * (2.0 * d) * nn - z * (2.0 * q)) / (nn * nn)).collect();
            (r, g)
        }
    }

    #[test]
    fn finds_top_eigenvalue() {
        let diag = [0.3, -1.0, 2.5, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let starts = (0..4).map(|_| gaussian_vector(&mut rng, 5, None)).collect();
        let (best, _) = multi_start(rayleigh(&diag), starts, |_| true, &AscentConfig::default()).unwrap();
        assert!((best.value - 2.5).abs() < 1e-6, "{}", best.value);
    }

    #[test]
    fn value_is_monotone_and_respects_admissible() {
        let diag = [1.0, 3.0];
        let adm = |a: &[C64]| a[1].norm() <= 0.5;
        let start = vec![C64::new(1.0, 0.0), C64::new(0.1, 0.0)];
        let out = ascend(rayleigh(&diag), start, adm, &AscentConfig::default()).unwrap();
        assert!(out.point[1].norm() <= 0.5 + 1e-12);
        assert!(out.value <= 1.0 + 2.0 * 0.25 + 1e-9);
        assert!(out.value >= 1.0 + 2.0 * 0.01);
    }

    #[test]
    fn zero_start_rejected() {
        let diag = [1.0];
        assert!(ascend(rayleigh(&diag), vec![C64::new(0.0, 0.0)], |_| true, &AscentConfig::default()).is_none());
    }
}
