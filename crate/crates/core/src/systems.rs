//! Bounded orthonormal systems tabulated on a finite grid with uniform weights.
//!
//! A system is `n` functions `φ_j` on `m0` points; the inner product is
//! `⟨f, g⟩ = (1/m0) Σ_x conj(f(x)) g(x)`. Walsh and Fourier systems are exact
//! on their natural grids and are evaluated through fast transforms rather
//! than a stored table, so `n = 2^20` is usable without an `n × m0` matrix.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::fwht::fwht;
use crate::par;

pub type C64 = Complex64;

pub const MAX_WALSH_BITS: u32 = 20;
pub const MAX_FOURIER_LEN: usize = 1 << 20;
/// Largest `n · m0` for which [`OrthonormalSystem::values`] materializes a table.
pub const MAX_TABLE_ENTRIES: usize = 1 << 24;

/// Textual system selector used on the command line: `walsh:N` or `fourier:n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemSpec {
    Walsh { bits: u32 },
    Fourier { n: usize },
}

impl SystemSpec {
    pub fn build(&self) -> Result<OrthonormalSystem> {
        match *self {
            SystemSpec::Walsh { bits } => gen_walsh(bits),
            SystemSpec::Fourier { n } => gen_fourier(n),
        }
    }
}

impl FromStr for SystemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("system `{s}`: expected walsh:N or fourier:n")))?;
        let value: usize = arg
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("system `{s}`: `{arg}` is not an integer")))?;
        match kind.trim() {
            "walsh" => Ok(SystemSpec::Walsh { bits: value as u32 }),
            "fourier" => Ok(SystemSpec::Fourier { n: value }),
            other => Err(Error::Parse(format!("unknown system kind `{other}`"))),
        }
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Walsh { bits } => write!(f, "walsh:{bits}"),
            SystemSpec::Fourier { n } => write!(f, "fourier:{n}"),
        }
    }
}

#[derive(Clone)]
enum Kind {
    Walsh {
        bits: u32,
    },
    Fourier {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    /// Row-major `n × m0`.
    Table(Arc<Vec<C64>>),
}

#[derive(Clone)]
pub struct OrthonormalSystem {
    kind: Kind,
    n: usize,
    m0: usize,
    linf_bound: f64,
}

impl fmt::Debug for OrthonormalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Walsh { bits } => format!("Walsh({bits})"),
            Kind::Fourier { .. } => "Fourier".to_string(),
            Kind::Table(_) => "Table".to_string(),
        };
        f.debug_struct("OrthonormalSystem")
            .field("kind", &kind)
            .field("n", &self.n)
            .field("m0", &self.m0)
            .field("linf_bound", &self.linf_bound)
            .finish()
    }
}

/// The first `2^bits` Walsh functions in Hadamard order:
/// `φ_j(x) = (−1)^{popcount(j & x)}` on `x ∈ {0, …, 2^bits − 1}`.
pub fn gen_walsh(bits: u32) -> Result<OrthonormalSystem> {
    if !(1..=MAX_WALSH_BITS).contains(&bits) {
        return Err(out_of_range("N", format!("need 1 ≤ N ≤ {MAX_WALSH_BITS}, got {bits}")));
    }
    let n = 1usize << bits;
    Ok(OrthonormalSystem {
        kind: Kind::Walsh { bits },
        n,
        m0: n,
        linf_bound: 1.0,
    })
}

/// Characters of `Z/n`: `φ_j(t) = exp(2πi·j·t/n)`.
pub fn gen_fourier(n: usize) -> Result<OrthonormalSystem> {
    if !(2..=MAX_FOURIER_LEN).contains(&n) {
        return Err(out_of_range("n", format!("need 2 ≤ n ≤ {MAX_FOURIER_LEN}, got {n}")));
    }
    let mut planner = FftPlanner::new();
    Ok(OrthonormalSystem {
        kind: Kind::Fourier {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        },
        n,
        m0: n,
        linf_bound: 1.0,
    })
}

impl OrthonormalSystem {
    /// Arbitrary tabulated system. No orthonormality is enforced here; use
    /// [`validate`] for that. The sup bound is the largest tabulated modulus.
    pub fn from_table(n: usize, m0: usize, values: Vec<C64>) -> Result<Self> {
        if n == 0 || m0 == 0 {
            return Err(Error::Empty("system table"));
        }
        if values.len() != n * m0 {
            return Err(Error::Shape {
                expected: n * m0,
                got: values.len(),
            });
        }
        let linf_bound = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(OrthonormalSystem {
            kind: Kind::Table(Arc::new(values)),
            n,
            m0,
            linf_bound,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn linf_bound(&self) -> f64 {
        self.linf_bound
    }

    /// Uniform grid weight `1/m0`.
    pub fn weight(&self) -> f64 {
        1.0 / self.m0 as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.m0]
    }

    pub fn is_walsh(&self) -> bool {
        matches!(self.kind, Kind::Walsh { .. })
    }

    pub fn walsh_bits(&self) -> Option<u32> {
        match self.kind {
            Kind::Walsh { bits } => Some(bits),
            _ => None,
        }
    }

    /// Whether the span is all of `C^{m0}`.
    pub fn spans_grid(&self) -> bool {
        match self.kind {
            Kind::Walsh { .. } | Kind::Fourier { .. } => true,
            Kind::Table(_) => false,
        }
    }

    pub fn value(&self, j: usize, x: usize) -> C64 {
        match &self.kind {
            Kind::Walsh { .. } => {
                if (j & x).count_ones().is_multiple_of(2) {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(-1.0, 0.0)
                }
            }
            Kind::Fourier { .. } => {
                let t = ((j as u128 * x as u128) % self.n as u128) as f64;
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * t / self.n as f64)
            }
            Kind::Table(v) => v[j * self.m0 + x],
        }
    }

    pub fn row(&self, j: usize) -> Vec<C64> {
        (0..self.m0).map(|x| self.value(j, x)).collect()
    }

    /// The full `n × m0` table, refused above [`MAX_TABLE_ENTRIES`].
    pub fn values(&self) -> Result<Vec<Vec<C64>>> {
        if self.n.saturating_mul(self.m0) > MAX_TABLE_ENTRIES {
            return Err(out_of_range(
                "system",
                format!("{}×{} table exceeds {MAX_TABLE_ENTRIES} entries", self.n, self.m0),
            ));
        }
        Ok((0..self.n).map(|j| self.row(j)).collect())
    }

    /// Grid values of `Σ_j a_j φ_j`.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.n, "coefficient length");
        match &self.kind {
            Kind::Walsh { .. } => {
                let mut f = coeffs.to_vec();
                fwht(&mut f);
                f
            }
            Kind::Fourier { inverse, .. } => {
                let mut f = coeffs.to_vec();
                inverse.process(&mut f);
                f
            }
            Kind::Table(v) => {
                let mut f = vec![C64::new(0.0, 0.0); self.m0];
                for (j, a) in coeffs.iter().enumerate() {
                    if *a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let row = &v[j * self.m0..(j + 1) * self.m0];
                    for (fx, r) in f.iter_mut().zip(row) {
                        *fx += a * r;
                    }
                }
                f
            }
        }
    }

    /// Coefficients `⟨φ_j, f⟩` of a grid function.
    pub fn analyze(&self, f: &[C64]) -> Vec<C64> {
        assert_eq!(f.len(), self.m0, "grid length");
        let scale = self.weight();
        match &self.kind {
            Kind::Walsh { .. } => {
                let mut a = f.to_vec();
                fwht(&mut a);
                a.iter_mut().for_each(|v| *v *= scale);
                a
            }
            Kind::Fourier { forward, .. } => {
                let mut a = f.to_vec();
                forward.process(&mut a);
                a.iter_mut().for_each(|v| *v *= scale);
                a
            }
            Kind::Table(v) => (0..self.n)
                .map(|j| {
                    let row = &v[j * self.m0..(j + 1) * self.m0];
                    row.iter().zip(f).map(|(r, fx)| r.conj() * fx).sum::<C64>() * scale
                })
                .collect(),
        }
    }

    /// Weighted inner product `⟨f, g⟩` of two grid functions.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        f.iter().zip(g).map(|(a, b)| a.conj() * b).sum::<C64>() * self.weight()
    }

    /// Write as CSV: a `n,m0,L` header line, its values, then one line per
    /// function holding `re,im` pairs for each grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        writeln!(w, "n,m0,L").map_err(io)?;
        writeln!(w, "{},{},{}", self.n, self.m0, self.linf_bound).map_err(io)?;
        for j in 0..self.n {
            let line: Vec<String> = self
                .row(j)
                .iter()
                .map(|v| format!("{},{}", v.re, v.im))
                .collect();
            writeln!(w, "{}", line.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of system table".into()))?
                .map_err(|e| Error::Parse(e.to_string()))
        };
        if next()?.trim() != "n,m0,L" {
            return Err(Error::Parse("missing `n,m0,L` header".into()));
        }
        let header = next()?;
        let fields: Vec<&str> = header.trim().split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("bad header line `{header}`")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad integer `{s}`")));
        let (n, m0) = (parse_usize(fields[0])?, parse_usize(fields[1])?);
        let mut values = Vec::with_capacity(n * m0);
        for j in 0..n {
            let line = next()?;
            let nums: Vec<f64> = line
                .trim()
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("row {j}: bad number `{s}`"))))
                .collect::<Result<_>>()?;
            if nums.len() != 2 * m0 {
                return Err(Error::Shape {
                    expected: 2 * m0,
                    got: nums.len(),
                });
            }
            values.extend(nums.chunks_exact(2).map(|c| C64::new(c[0], c[1])));
        }
        Self::from_table(n, m0, values)
    }
}

/// Coefficient vector of an element of `span{φ_i : i ∈ support}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanElement {
    coefficients: Vec<C64>,
    support: Vec<usize>,
}

impl SpanElement {
    /// Element with `values[t]` on `support[t]` and zero elsewhere.
    pub fn new(n: usize, support: &[usize], values: &[C64]) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Shape {
                expected: support.len(),
                got: values.len(),
            });
        }
        let mut coefficients = vec![C64::new(0.0, 0.0); n];
        let mut sorted: Vec<usize> = support.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::Parse("support has repeated indices".into()));
        }
        for (&i, &v) in support.iter().zip(values) {
            if i >= n {
                return Err(out_of_range("support", format!("index {i} ≥ n = {n}")));
            }
            coefficients[i] = v;
        }
        Ok(SpanElement {
            coefficients,
            support: sorted,
        })
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn synthesize(&self, sys: &OrthonormalSystem) -> Vec<C64> {
        sys.synthesize(&self.coefficients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol: f64,
    /// `max_{j,k} |Gram_{jk} − δ_{jk}|`.
    pub max_gram_deviation: f64,
    pub max_abs_value: f64,
    pub linf_bound: f64,
    pub orthonormal: bool,
    pub bounded: bool,
    pub passed: bool,
}

/// Check orthonormality and the sup bound by direct computation of the Gram
/// matrix from the tabulated rows.
pub fn validate(sys: &OrthonormalSystem, tol: f64) -> ValidationReport {
    let rows = match sys.values() {
        Ok(rows) => rows,
        Err(_) => {
            return ValidationReport {
                tol,
                max_gram_deviation: f64::INFINITY,
                max_abs_value: f64::NAN,
                linf_bound: sys.linf_bound(),
                orthonormal: false,
                bounded: false,
                passed: false,
            }
        }
    };
    let n = rows.len();
    let per_row = par::map_indexed(n, |j| {
        let mut worst = 0.0f64;
        for k in j..n {
            let g = sys.inner(&rows[j], &rows[k]);
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
        let max_abs = rows[j].iter().map(|v| v.norm()).fold(0.0, f64::max);
        (worst, max_abs)
    });
    let max_gram_deviation = per_row.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_abs_value = per_row.iter().map(|r| r.1).fold(0.0, f64::max);
    let orthonormal = max_gram_deviation <= tol;
    let bounded = max_abs_value <= sys.linf_bound() * (1.0 + 1e-12);
    ValidationReport {
        tol,
        max_gram_deviation,
        max_abs_value,
        linf_bound: sys.linf_bound(),
        orthonormal,
        bounded,
        passed: orthonormal && bounded,
    }
}

/// Exact integer checks on the Walsh group.
///
/// Each row is packed as sign bits (`bit x` set iff `φ_j(x) = −1`), so the
/// pointwise product of two rows is the XOR of their bit rows and the integer
/// dot product is `m0 − 2·popcount(r_j ⊕ r_k)`.
pub mod walsh_exact {
    use crate::error::{out_of_range, Result};

    pub fn sign_bits(bits: u32, j: usize) -> Vec<u64> {
        let n = 1usize << bits;
        let mut words = vec![0u64; n.div_ceil(64)];
        for x in 0..n {
            if (j & x).count_ones() % 2 == 1 {
                words[x / 64] |= 1 << (x % 64);
            }
        }
        words
    }

    fn table(bits: u32) -> Result<Vec<Vec<u64>>> {
        if !(1..=14).contains(&bits) {
            return Err(out_of_range("N", format!("exact Walsh checks need 1 ≤ N ≤ 14, got {bits}")));
        }
        Ok((0..1usize << bits).map(|j| sign_bits(bits, j)).collect())
    }

    fn dot(n: usize, a: &[u64], b: &[u64]) -> i64 {
        let flips: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
        n as i64 - 2 * flips as i64
    }

    /// Unnormalized integer Gram matrix `Σ_x φ_j(x) φ_k(x)`, row-major.
    pub fn gram(bits: u32) -> Result<Vec<i64>> {
        let rows = table(bits)?;
        let n = rows.len();
        let mut g = vec![0i64; n * n];
        for j in 0..n {
            for k in 0..n {
                g[j * n + k] = dot(n, &rows[j], &rows[k]);
            }
        }
        Ok(g)
    }

    /// `φ_j · φ_k = φ_{j⊕k}` for every pair.
    pub fn product_law_holds(bits: u32) -> Result<bool> {
        let rows = table(bits)?;
        let n = rows.len();
        for j in 0..n {
            for k in 0..n {
                let target = &rows[j ^ k];
                if rows[j].iter().zip(&rows[k]).zip(target).any(|((a, b), t)| a ^ b != *t) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}
