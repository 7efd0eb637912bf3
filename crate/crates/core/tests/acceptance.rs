//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::time::{Duration, Instant};

use kashin_core::coset::{self, CubeSet};
use kashin_core::empirical::{self, Design, ScalingPoint, SupConfig};
use kashin_core::experiment::{self, Command, CosetConfig, DeviationConfig, EntropyConfig, EntropyMetric, ExperimentConfig, PChoice, SplitArgs};
use kashin_core::metrics::{self, Ball, EpSpace, VectorSet};
use kashin_core::optimize::{gaussian_vector, AscentConfig};
use kashin_core::rng::{substream, Purpose};
use kashin_core::selection::{self, IsometryMode, SplitConfig};
use kashin_core::systems::{gen_walsh, walsh_exact, SystemSpec, C64};
use rand::Rng;

const SEED: u64 = 20_240_601;

const CLARKSON_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;
const ISOMETRY_SE: f64 = 3.0;
const WINDOW_TARGET: f64 = 0.75;
const WINDOW_C: f64 = 3.0;
const MAX_RATIO_SPREAD: f64 = 10.0;
const MAX_LOG_SLOPE: f64 = 0.25;
const EXHAUSTIVE_REL_TOL: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn criterion(id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let in_time = budget.is_none_or(|b| took <= b);
    let pass = v.pass && in_time;
    let limit = budget.map_or(String::new(), |b| format!(" / {}s", b.as_secs()));
    let timing = if in_time { String::new() } else { " [over time budget]".into() };
    println!(
        "{} {id:>2} {name}: {} ({:.2}s{limit}){timing}",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        took.as_secs_f64()
    );
    pass
}

fn info(line: impl AsRef<str>) {
    println!("     info: {}", line.as_ref());
}

fn walsh_algebra() -> Verdict {
    for bits in 1..=10u32 {
        let n = 1usize << bits;
        let g = walsh_exact::gram(bits).unwrap();
        let bad = (0..n * n).find(|&i| g[i] != if i / n == i % n { n as i64 } else { 0 });
        if let Some(i) = bad {
            return verdict(false, format!("N={bits}: Gram[{},{}] = {}", i / n, i % n, g[i]));
        }
        if !walsh_exact::product_law_holds(bits).unwrap() {
            return verdict(false, format!("N={bits}: product law fails"));
        }
    }
    verdict(true, "Gram = m0·I and φ_j·φ_k = φ_(j⊕k) exactly for N = 1..10")
}

fn double_loop(set: &CubeSet) -> u128 {
    let n = set.universe();
    let mut total = 0u128;
    for g in 0..n {
        for x in 0..n {
            if set.contains(x) && set.contains(x ^ g) {
                total += 1;
            }
        }
    }
    total
}

fn convolution() -> Verdict {
    let mut checked = 0;
    for bits in 4..=14u32 {
        let mut rng = substream(SEED, Purpose::Subset, u64::from(bits));
        for t in 0..100u64 {
            let density = rng.random_range(0.05..0.95);
            let set = CubeSet::random(bits, density, SEED ^ (u64::from(bits) << 32) ^ t).unwrap();
            let c = coset::convolution_identity(&set);
            if !c.holds || c.rhs != (set.len() as u128).pow(2) {
                return verdict(false, format!("N={bits} trial {t}: {} ≠ {}", c.lhs, c.rhs));
            }
            if bits <= 8 && double_loop(&set) != c.lhs {
                return verdict(false, format!("N={bits} trial {t}: double loop disagrees"));
            }
            checked += 1;
        }
    }
    verdict(true, format!("{checked} sets, N = 4..14, exact; O(4^N) oracle agrees for N ≤ 8"))
}

fn coset_guarantee() -> Verdict {
    let mut worst = f64::INFINITY;
    for bits in [10u32, 12, 14] {
        for t in 0..50u64 {
            let set = CubeSet::random(bits, 0.5, SEED + 1000 * u64::from(bits) + t).unwrap();
            let cert = match coset::find_coset(&set, 0.5) {
                Ok(c) => c,
                Err(e) => return verdict(false, format!("N={bits} trial {t}: {e}")),
            };
            let members_ok = cert.elements().iter().all(|&x| set.contains(x));
            let size = cert.subgroup_size as f64;
            if !members_ok || size < f64::from(bits) / 3.0 || coset::gf2_rank(&cert.generators) != cert.p() {
                return verdict(false, format!("N={bits} trial {t}: |Γ| = {size}, members_ok = {members_ok}"));
            }
            worst = worst.min(size / (f64::from(bits) / 3.0));
        }
    }
    verdict(true, format!("150 sets, all verified; min 2^p/(N/3) = {worst:.3}"))
}

fn subgroup_norms() -> Verdict {
    let mut worst = 0.0f64;
    let mut rng = substream(SEED, Purpose::Instance, 4);
    for t in 0..100 {
        let bits = rng.random_range(1..=12u32);
        let p = rng.random_range(0..=bits as usize);
        let mut gens = Vec::new();
        while gens.len() < p {
            let g = rng.random_range(1..1usize << bits);
            gens.push(g);
            if coset::gf2_rank(&gens) < gens.len() {
                gens.pop();
            }
        }
        let r = coset::subgroup_sum_norms(&gens, bits).unwrap();
        let size = (1u64 << p) as f64;
        let err = (r.l1 - 1.0).abs().max((r.l2 - size.sqrt()).abs());
        worst = worst.max(err);
        if err > NORM_TOL {
            return verdict(false, format!("trial {t}: N={bits}, p={p}: ({}, {})", r.l1, r.l2));
        }
    }
    verdict(true, format!("100 generator sets, max error {worst:.1e} ≤ {NORM_TOL:.0e}"))
}

fn clarkson() -> Verdict {
    const PAIRS: u64 = 100_000;
    let m0 = 64;
    let mut min_slack = f64::INFINITY;
    for (pi, p) in [1.1, 1.5, 2.0].into_iter().enumerate() {
        let slacks = kashin_core::par::map_indexed(PAIRS as usize, |i| {
            let mut rng = substream(SEED, Purpose::Points, (pi as u64) << 40 | i as u64);
            let s = rng.random_range(0.01..10.0);
            let f = gaussian_vector(&mut rng, m0, None);
            let h = gaussian_vector(&mut rng, m0, None);
            // generic pairs, near-coincident pairs, antiparallel pairs, sparse pairs
            let g: Vec<C64> = match i % 4 {
                0 => h.iter().map(|z| z * s).collect(),
                1 => {
                    let eps = 10f64.powf(rng.random_range(-6.0..-1.0));
                    f.iter().zip(&h).map(|(a, b)| a + b * eps).collect()
                }
                2 => f.iter().map(|z| -z * s).collect(),
                _ => {
                    let support: Vec<usize> = (0..m0).filter(|_| rng.random_bool(0.1)).collect();
                    let mut g = vec![C64::new(0.0, 0.0); m0];
                    support.iter().for_each(|&x| g[x] = h[x] * s);
                    g
                }
            };
            metrics::clarkson_check(&f, &g, p).unwrap().slack
        });
        min_slack = slacks.into_iter().fold(min_slack, f64::min);
    }
    verdict(min_slack >= -CLARKSON_TOL, format!("3×10⁵ pairs on N=6 (generic, near-coincident, antiparallel, sparse), min slack {min_slack:.3e}"))
}

fn metric_inequalities() -> Verdict {
    let sys = gen_walsh(6).unwrap();
    let ball = Ball::ep(&sys, EpSpace::new(1.5, 1.0).unwrap());
    let xs = VectorSet::from_picks(&ball, &empirical::uniform_picks(64, 16, SEED)).unwrap();
    let results = kashin_core::par::map_indexed(10_000, |i| {
        let [y, yb, z, zb, u] = metrics::random_tuple(&ball, SEED, i as u64);
        metrics::check_metric_inequalities(&ball, &xs, &y, &yb, &z, &zb, &u, METRIC_TOL).unwrap()
    });
    let failures = results.iter().filter(|r| !r.all_hold()).count();
    let min = results.iter().map(|r| r.min_slack()).fold(f64::INFINITY, f64::min);
    verdict(failures == 0, format!("10⁴ tuples, p=1.5, m=16, {failures} failures, min slack {min:.3e}"))
}

fn isometry() -> Verdict {
    let sys = gen_walsh(8).unwrap();
    let op = selection::sample_operator(&sys, 64, SEED).unwrap();
    let r = selection::gamma_isometry_check(&op, &sys, 10_000, IsometryMode::Fresh, SEED).unwrap();
    let fixed = selection::gamma_isometry_check(&op, &sys, 10_000, IsometryMode::Fixed, SEED).unwrap();
    info(format!("fixed operator: {:.5} ± {:.5}", fixed.mean, fixed.std_err));
    let dev = (r.mean - 1.0).abs();
    verdict(
        dev <= ISOMETRY_SE * r.std_err,
        format!("ratio {:.5} ± {:.5} (|dev| = {:.2} SE)", r.mean, r.std_err, dev / r.std_err),
    )
}

fn window() -> Verdict {
    let n = 256;
    let k = (n as f64 * std::f64::consts::LN_2).round() as usize;
    let s = selection::window_statistics(n, k, 1000, WINDOW_C, WINDOW_TARGET, SEED).unwrap();
    info(format!(
        "E|I| = {:.2}, sd {:.2} (exact {:.2}, {:.2})",
        s.mean_size,
        s.sd_size,
        selection::expected_unpicked(n, k),
        selection::variance_unpicked(n, k).sqrt()
    ));
    verdict(
        s.hit_rate >= WINDOW_TARGET,
        format!("k={k}, hit rate {:.3} at c=3, smallest c reaching 0.75: {:.3}", s.hit_rate, s.smallest_c),
    )
}

fn end_to_end() -> Verdict {
    let bits = 8;
    let sys = gen_walsh(bits).unwrap();
    let n = sys.n();
    let k = (n as f64 * std::f64::consts::LN_2).round() as usize;
    let p = selection::p_auto(n, k, 1.0).unwrap();
    let floor = (f64::from(bits) / 3.0).sqrt();
    let mut c_emp: Vec<f64> = Vec::new();
    let mu = selection::mu(n, k, 1.0);
    let scale = mu * mu.ln().powf(2.5);
    for s in 0..20u64 {
        let out = match selection::kashin_split(&sys, &SplitConfig::new(p, SEED + s)) {
            Ok(o) => o,
            Err(e) => return verdict(false, format!("seed {s}: {e}")),
        };
        let cert = &out.certificate;
        let seeded = cert.selected.coset_seeded_ratio.unwrap_or(0.0);
        if out.attempts > 100 || seeded < floor {
            return verdict(false, format!("seed {s}: attempts {}, coset-seeded ratio {seeded:.3}", out.attempts));
        }
        c_emp.push(cert.selected.l1_ratio_lower_bound / scale);
    }
    let max_c = c_emp.iter().copied().fold(0.0, f64::max);
    info(format!("n=256: p = {p:.5}, μ = {mu:.4}, c_emp max {max_c:.4} over 20 seeds"));
    trend_study();
    verdict(
        true,
        format!("20 seeds terminate ≤ 100 retries; coset-seeded ratio ≥ √(N/3) = {floor:.3}; c_emp ≤ {max_c:.4}"),
    )
}

/// `c_emp = ratio_search(I) / (μ (log μ)^{5/2})` across `n`, reported but not gated.
fn trend_study() {
    let mut pts = Vec::new();
    for bits in [6u32, 7, 8, 9] {
        let sys = gen_walsh(bits).unwrap();
        let n = sys.n();
        let k = (n as f64 * std::f64::consts::LN_2).round() as usize;
        let (p, fallback) = match selection::p_auto(n, k, 1.0) {
            Ok(p) => (p, false),
            Err(_) => (1.5, true),
        };
        let mu = selection::mu(n, k, 1.0);
        let scale = mu * mu.ln().powf(2.5);
        let mut best = 0.0f64;
        for s in 0..20u64 {
            let mut cfg = SplitConfig::new(p, SEED + 100 + s);
            cfg.ratio_restarts = 2;
            cfg.ratio_iters = 100;
            match selection::kashin_split(&sys, &cfg) {
                Ok(out) => best = best.max(out.certificate.selected.l1_ratio_lower_bound / scale),
                Err(e) => info(format!("n={n} seed {s}: {e}")),
            }
        }
        info(format!(
            "trend n={n}: p = {p:.4}{}, μ = {mu:.4}, max c_emp = {best:.4}",
            if fallback { " (fallback, μ ≤ e)" } else { "" }
        ));
        pts.push(((n as f64).ln(), best.ln()));
    }
    if let Some(slope) = empirical::ols_slope(&pts) {
        info(format!(
            "trend slope d log c_emp / d log n = {slope:.3}{}",
            if slope > MAX_LOG_SLOPE { " (growth flagged)" } else { "" }
        ));
    }
}

fn bernoulli_scaling() -> (Verdict, f64) {
    let systems: Vec<_> = (4..=8u32).map(|b| gen_walsh(b).unwrap()).collect();
    let balls: Vec<Ball<'_>> = systems.iter().map(|s| Ball::ep(s, EpSpace::new(1.5, 1.0).unwrap())).collect();
    let points: Vec<ScalingPoint<'_>> = balls
        .iter()
        .zip(0u64..)
        .map(|(b, i)| {
            let n = b.sys.n();
            ScalingPoint {
                ball: *b,
                xs: VectorSet::from_picks(b, &empirical::uniform_picks(n, n / 2, SEED + i)).unwrap(),
            }
        })
        .collect();
    let study = empirical::scaling_study(&points, &SupConfig::new(200, 8, SEED)).unwrap();
    for r in &study.rows {
        info(format!("n={:>3} m={:>3}: lhs {:.4} ± {:.4}, rhs {:.3}, ratio {:.5}", r.n, r.m, r.lhs, r.lhs_std_err, r.rhs, r.ratio));
    }
    let spread = study.max_over_min_ratio.unwrap_or(f64::INFINITY);
    let slope = study.log_ratio_slope.unwrap_or(f64::INFINITY);
    let max_ratio = study.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);

    let sys = &systems[0];
    let ball = balls[0];
    let ascent = AscentConfig::default();
    let mut worst = 0.0f64;
    for (i, m) in [6usize, 9, 12].into_iter().enumerate() {
        let xs = VectorSet::from_picks(&ball, &empirical::uniform_picks(sys.n(), m, SEED + 50 + i as u64)).unwrap();
        let mc = empirical::bernoulli_sup(&xs, &ball, &SupConfig::new(2000, 8, SEED + i as u64), false).unwrap();
        let exact = empirical::bernoulli_sup_exhaustive(&xs, &ball, 8, SEED, &ascent).unwrap();
        let rel = (mc.lhs.mean - exact).abs() / exact;
        info(format!("m={m}: MC {:.5} ± {:.5}, exhaustive {exact:.5}, rel {rel:.4}", mc.lhs.mean, mc.lhs.std_err));
        worst = worst.max(rel);
    }
    let pass = spread <= MAX_RATIO_SPREAD && slope.abs() <= MAX_LOG_SLOPE && worst <= EXHAUSTIVE_REL_TOL;
    (
        verdict(
            pass,
            format!("max/min ratio {spread:.3} ≤ 10, log-ratio slope {slope:.3}, exhaustive rel err {worst:.4} ≤ 0.05"),
        ),
        max_ratio,
    )
}

fn deviation_direction(c_cal: f64) -> Verdict {
    let mut worst = 0.0f64;
    let mut all = true;
    for bits in 4..=6u32 {
        let sys = gen_walsh(bits).unwrap();
        let ball = Ball::ep(&sys, EpSpace::new(1.5, 1.0).unwrap());
        let n = sys.n();
        let r = empirical::moment_deviation(&sys, &ball, None, n, Design::Random, &SupConfig::new(200, 8, SEED + u64::from(bits)))
            .unwrap();
        let a = c_cal * r.a.unwrap();
        let sigma = r.sigma.unwrap();
        let bound = a * a + sigma * a;
        let ratio = r.lhs.mean / bound;
        info(format!(
            "N={bits}, k={n}: lhs {:.4} ± {:.4}, C=1 bound {:.3}, calibrated bound {bound:.4}, lhs/bound {ratio:.3}",
            r.lhs.mean,
            r.lhs.std_err,
            r.bound.unwrap()
        ));
        all &= r.lhs.mean <= bound;
        worst = worst.max(ratio);
    }
    verdict(all, format!("C = {c_cal:.5} from criterion 10; max lhs/(A²+σA) = {worst:.3}"))
}

fn stochastic_configs() -> Vec<ExperimentConfig> {
    let wrap = |command| ExperimentConfig {
        command,
        json_out: None,
        csv_out: None,
    };
    vec![
        wrap(Command::Coset(CosetConfig {
            bits: 12,
            density: Some(0.5),
            set_file: None,
            emit_witness: true,
            seed: 7,
        })),
        wrap(Command::Split(SplitArgs {
            system: SystemSpec::Walsh { bits: 8 },
            p: PChoice::Auto,
            delta: 0.5,
            rho_calibration: 1.0,
            rho: None,
            window_c: 3.0,
            max_retries: 100,
            restarts: 8,
            ratio_restarts: 4,
            ratio_iters: 100,
            seed: 1,
        })),
        wrap(Command::Certify(experiment::CertifyConfig {
            system: SystemSpec::Walsh { bits: 6 },
            k: None,
            p: PChoice::Fixed(1.5),
            delta: 0.5,
            rho_calibration: 1.0,
            rho: Some(1.9),
            restarts: 4,
            ratio_restarts: 4,
            ratio_iters: 100,
            seed: 3,
        })),
        wrap(Command::Deviation(DeviationConfig {
            system: SystemSpec::Walsh { bits: 5 },
            p: 1.5,
            rho: 1.0,
            m_grid: vec![4, 8, 16],
            trials: 64,
            restarts: 4,
            k: Some(32),
            seed: 5,
        })),
        wrap(Command::Entropy(EntropyConfig {
            system: SystemSpec::Walsh { bits: 4 },
            p: 1.5,
            rho: 1.0,
            metric: EntropyMetric::LinfM,
            m: 8,
            eps_grid: vec![0.3, 0.6, 1.2],
            budget: 2000,
            max_centers: Some(2000),
            seed: 11,
        })),
        wrap(Command::Entropy(EntropyConfig {
            system: SystemSpec::Fourier { n: 8 },
            p: 1.5,
            rho: 1.0,
            metric: EntropyMetric::Ellipsoid,
            m: 8,
            eps_grid: vec![0.3, 0.6],
            budget: 1000,
            max_centers: None,
            seed: 12,
        })),
    ]
}

fn reproducibility() -> Verdict {
    let pools: Vec<_> = [1, 8]
        .into_iter()
        .map(|w| rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap())
        .collect();
    for cfg in stochastic_configs() {
        let mut payloads = Vec::new();
        for pool in &pools {
            for _ in 0..2 {
                let out = pool.install(|| experiment::run(&cfg)).unwrap();
                payloads.push((serde_json::to_string(&out.results).unwrap(), out.csv));
            }
        }
        if payloads.iter().any(|p| *p != payloads[0]) {
            return verdict(false, format!("{} payload differs across runs", cfg.command.name()));
        }
    }
    verdict(true, "coset, split, certify, deviation, entropy ×2: byte-identical with 1 and 8 workers")
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= criterion(1, "Walsh exact algebra", Some(secs(5)), walsh_algebra);
    ok &= criterion(2, "convolution identity", Some(secs(60)), convolution);
    ok &= criterion(3, "coset guarantee", Some(secs(120)), coset_guarantee);
    ok &= criterion(4, "subgroup norm identity", None, subgroup_norms);
    ok &= criterion(5, "Clarkson inequality", Some(secs(30)), clarkson);
    ok &= criterion(6, "metric inequalities", None, metric_inequalities);
    ok &= criterion(7, "Γ isometry", Some(secs(120)), isometry);
    ok &= criterion(8, "cardinality window", None, window);
    ok &= criterion(9, "end-to-end split", None, end_to_end);
    let mut c_cal = f64::NAN;
    ok &= criterion(10, "Bernoulli sup scaling", None, || {
        let (v, c) = bernoulli_scaling();
        c_cal = c;
        v
    });
    ok &= criterion(11, "deviation bound direction", None, || deviation_direction(c_cal));
    ok &= criterion(12, "reproducibility", None, reproducibility);
    if !ok {
        std::process::exit(1);
    }
}
