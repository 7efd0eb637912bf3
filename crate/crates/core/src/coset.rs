//! Affine subcubes inside dense subsets of `{0,1}^N`.
//!
//! Group elements are `N`-bit words under XOR, identified with Walsh
//! characters in Hadamard order. All counting is exact integer arithmetic.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::fwht::{fwht, xor_autocorrelation};
use crate::rng::{substream, Purpose};

/// Largest cube dimension handled here.
pub const MAX_BITS: u32 = 20;

/// A subset `Λ ⊆ {0,1}^N` as an indicator table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeSet {
    bits: u32,
    members: Vec<bool>,
}

fn check_bits(bits: u32) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(out_of_range("N", format!("need 1 ≤ N ≤ {MAX_BITS}, got {bits}")));
    }
    Ok(())
}

impl CubeSet {
    pub fn empty(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(CubeSet {
            bits,
            members: vec![false; 1 << bits],
        })
    }

    pub fn full(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(CubeSet {
            bits,
            members: vec![true; 1 << bits],
        })
    }

    pub fn from_indices(bits: u32, indices: &[usize]) -> Result<Self> {
        let mut s = Self::empty(bits)?;
        for &i in indices {
            if i >= s.members.len() {
                return Err(out_of_range("index", format!("{i} ≥ 2^{bits}")));
            }
            s.members[i] = true;
        }
        Ok(s)
    }

    /// Exactly `round(density·2^N)` elements chosen uniformly.
    pub fn random(bits: u32, density: f64, seed: u64) -> Result<Self> {
        check_bits(bits)?;
        if !(0.0..=1.0).contains(&density) {
            return Err(out_of_range("density", format!("need 0 ≤ c ≤ 1, got {density}")));
        }
        let n = 1usize << bits;
        let size = (density * n as f64).round() as usize;
        let mut rng = substream(seed, Purpose::Subset, 0);
        let mut s = Self::empty(bits)?;
        index::sample(&mut rng, n, size).into_iter().for_each(|i| s.members[i] = true);
        Ok(s)
    }

    /// Newline-separated hexadecimal words; blank lines and `#` comments skipped.
    pub fn parse_hex(bits: u32, text: &str) -> Result<Self> {
        let mut s = Self::empty(bits)?;
        for (line_no, line) in text.lines().enumerate() {
            let word = line.split('#').next().unwrap_or("").trim();
            if word.is_empty() {
                continue;
            }
            let digits = word.trim_start_matches("0x").trim_start_matches("0X");
            let v = usize::from_str_radix(digits, 16)
                .map_err(|e| Error::Parse(format!("line {}: `{word}`: {e}", line_no + 1)))?;
            if v >= s.members.len() {
                return Err(Error::Parse(format!("line {}: {word} does not fit in {bits} bits", line_no + 1)));
            }
            s.members[v] = true;
        }
        Ok(s)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn universe(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.get(x).copied().unwrap_or(false)
    }

    pub fn indicator(&self) -> &[bool] {
        &self.members
    }

    pub fn elements(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&x| self.members[x]).collect()
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / self.universe() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    /// `Σ_g |(g+Λ)∩Λ|`.
    pub lhs: u128,
    /// `|Λ|²`.
    pub rhs: u128,
    pub holds: bool,
}

/// `Σ_g |(g+Λ)∩Λ| = |Λ|²`, with the left side from the XOR autocorrelation.
pub fn convolution_identity(set: &CubeSet) -> ConvolutionCheck {
    let lhs: u128 = xor_autocorrelation(&set.members).iter().map(|&v| v as u128).sum();
    let rhs = (set.len() as u128).pow(2);
    ConvolutionCheck { lhs, rhs, holds: lhs == rhs }
}

/// Every XOR combination of `generators`, in Gray-code order from 0.
pub fn subgroup(generators: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &g in generators {
        let doubled: Vec<usize> = out.iter().rev().map(|&x| x ^ g).collect();
        out.extend(doubled);
    }
    out
}

/// GF(2) rank of a list of words.
pub fn gf2_rank(words: &[usize]) -> usize {
    let mut basis: Vec<usize> = Vec::new();
    for &w in words {
        let mut v = w;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetStep {
    pub j: usize,
    pub gamma: usize,
    /// `|Λ_{j−1}|`.
    pub before: usize,
    /// `|Λ_j| = |(γ_j + Λ_{j−1}) ∩ Λ_{j−1}|`.
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosetCertificate {
    pub bits: u32,
    pub b: usize,
    pub generators: Vec<usize>,
    pub subgroup_size: u64,
    pub density_c: f64,
    /// `N log 2 / (3 log(1/c))`; infinite at `c = 1`.
    pub guarantee: f64,
    /// `log(1/c) ≥ 2^{−N/2}`, the regime where the guarantee is proved.
    pub guarantee_applies: bool,
    /// Smallest `p` with `2^p ≥ guarantee` (capped at `N`).
    pub target_p: usize,
    /// `2^p ≥ min(guarantee, 2^N)`.
    pub meets_guarantee: bool,
    pub trace: Vec<CosetStep>,
}

impl CosetCertificate {
    pub fn p(&self) -> usize {
        self.generators.len()
    }

    /// The coset `b ⊕ gr{γ}`.
    pub fn elements(&self) -> Vec<usize> {
        subgroup(&self.generators).into_iter().map(|g| g ^ self.b).collect()
    }
}

/// `N log 2 / (3 log(1/c))`.
pub fn coset_guarantee(bits: u32, c: f64) -> f64 {
    let l = (1.0 / c).ln();
    if l <= 0.0 {
        f64::INFINITY
    } else {
        f64::from(bits) * std::f64::consts::LN_2 / (3.0 * l)
    }
}

/// Greedy coset extraction: at step `j` pick `γ_j ∉ gr{γ_1..γ_{j−1}}`
/// maximizing `|(γ_j + Λ_{j−1}) ∩ Λ_{j−1}|` (smallest word on ties), set
/// `Λ_j` to that intersection, and continue while it is nonempty.
pub fn find_coset(set: &CubeSet, c: f64) -> Result<CosetCertificate> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(out_of_range("c", format!("need 0 < c ≤ 1, got {c}")));
    }
    let n = set.universe();
    let size = set.len();
    if (size as f64) < c * n as f64 || size == 0 {
        return Err(out_of_range("c", format!("|Λ| = {size} < c·2^N = {}", c * n as f64)));
    }
    let bits = set.bits;
    let guarantee = coset_guarantee(bits, c);
    let target_p = (0..=bits as usize)
        .find(|&p| (1u64 << p) as f64 >= guarantee)
        .unwrap_or(bits as usize);

    let mut current = set.members.clone();
    let mut in_group = vec![false; n];
    in_group[0] = true;
    let mut generators = Vec::new();
    let mut trace = Vec::new();
    let mut current_size = size;
    while generators.len() < bits as usize {
        let auto = xor_autocorrelation(&current);
        let best = (0..n)
            .filter(|&g| !in_group[g])
            .fold(None::<(usize, i64)>, |acc, g| match acc {
                Some((_, v)) if v >= auto[g] => acc,
                _ => Some((g, auto[g])),
            });
        let Some((gamma, count)) = best else { break };
        if count <= 0 {
            break;
        }
        let next: Vec<bool> = (0..n).map(|x| current[x] && current[x ^ gamma]).collect();
        let after = next.iter().filter(|&&b| b).count();
        if after as i64 != count {
            return Err(Error::Verification(format!("step {}: autocorrelation {count} ≠ |Λ_j| {after}", generators.len() + 1)));
        }
        for h in subgroup(&generators) {
            in_group[h ^ gamma] = true;
        }
        trace.push(CosetStep {
            j: generators.len() + 1,
            gamma,
            before: current_size,
            after,
        });
        generators.push(gamma);
        current = next;
        current_size = after;
    }
    let b = (0..n)
        .find(|&x| current[x])
        .ok_or_else(|| Error::Verification("final Λ_p is empty".into()))?;
    if let Some(bad) = subgroup(&generators).into_iter().map(|g| g ^ b).find(|&x| !set.members[x]) {
        return Err(Error::Verification(format!("coset element {bad:#x} not in Λ")));
    }
    if gf2_rank(&generators) != generators.len() {
        return Err(Error::Verification("generators are dependent".into()));
    }
    let subgroup_size = 1u64 << generators.len();
    Ok(CosetCertificate {
        bits,
        b,
        subgroup_size,
        density_c: c,
        guarantee,
        guarantee_applies: (1.0 / c).ln() >= 2f64.powf(-f64::from(bits) / 2.0),
        target_p,
        meets_guarantee: subgroup_size as f64 >= guarantee.min(n as f64),
        generators,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub holds: bool,
    /// Steps `j` where `|Λ_j|(n − 2^{j−1}) < |Λ_{j−1}|(|Λ_{j−1}| − 2^{j−1})`.
    pub violations: Vec<usize>,
}

/// Check `|Λ_j| ≥ |Λ_{j−1}|(|Λ_{j−1}| − 2^{j−1})/(n − 2^{j−1})` on every step.
pub fn step_cardinality_audit(trace: &[CosetStep], n: usize) -> AuditReport {
    let violations: Vec<usize> = trace
        .iter()
        .filter(|s| {
            let h = 1i128 << (s.j - 1);
            let (before, after, n) = (s.before as i128, s.after as i128, n as i128);
            after * (n - h) < before * (before - h)
        })
        .map(|s| s.j)
        .collect();
    AuditReport {
        holds: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupNorms {
    pub l1: f64,
    pub l2: f64,
    pub subgroup_size: u64,
}

/// `L1` and `L2` norms of `Σ_{γ∈Γ} φ_γ` on `{0,1}^N`, from exact integer sums.
pub fn subgroup_sum_norms(generators: &[usize], bits: u32) -> Result<SubgroupNorms> {
    check_bits(bits)?;
    let n = 1usize << bits;
    if let Some(&g) = generators.iter().find(|&&g| g >= n) {
        return Err(out_of_range("generator", format!("{g:#x} does not fit in {bits} bits")));
    }
    if gf2_rank(generators) != generators.len() {
        return Err(Error::DependentGenerators);
    }
    // f(x) = Σ_γ (−1)^{γ·x} is the Walsh transform of 1_Γ
    let mut f = vec![0i64; n];
    subgroup(generators).into_iter().for_each(|g| f[g] = 1);
    fwht(&mut f);
    let abs_sum: u128 = f.iter().map(|v| v.unsigned_abs() as u128).sum();
    let sq_sum: u128 = f.iter().map(|v| (v.unsigned_abs() as u128).pow(2)).sum();
    Ok(SubgroupNorms {
        l1: abs_sum as f64 / n as f64,
        l2: (sq_sum as f64 / n as f64).sqrt(),
        subgroup_size: 1 << generators.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub coset: CosetCertificate,
    /// `‖f‖₂/‖f‖₁ = √|Γ|` for `f = φ_b Σ_{γ∈Γ} φ_γ`.
    pub ratio: f64,
    /// `√(n log n / (20k))`.
    pub comparison: f64,
    pub exceeds_comparison: bool,
    /// Indices `b ⊕ γ` carrying the witness (all in `I`).
    pub witness_support: Vec<usize>,
}

/// Coset witness showing that `span{φ_i : i ∈ I}` has `L2/L1` ratio at least `√|Γ|`.
pub fn optimality_certificate(bits: u32, subset: &[usize], k: usize) -> Result<OptimalityReport> {
    check_bits(bits)?;
    let n = 1usize << bits;
    let set = CubeSet::from_indices(bits, subset)?;
    if set.len() + k != n {
        return Err(out_of_range("k", format!("need |I| = n − k, got |I| = {} and k = {k}", set.len())));
    }
    if (k as f64) < (n as f64).sqrt() {
        return Err(out_of_range("k", format!("need k ≥ √n = {}", (n as f64).sqrt())));
    }
    let c = set.len() as f64 / n as f64;
    let coset = find_coset(&set, c)?;
    let norms = subgroup_sum_norms(&coset.generators, bits)?;
    let ratio = norms.l2 / norms.l1;
    let comparison = (n as f64 * (n as f64).ln() / (20.0 * k as f64)).sqrt();
    let mut witness_support = coset.elements();
    witness_support.sort_unstable();
    Ok(OptimalityReport {
        ratio,
        comparison,
        exceeds_comparison: ratio >= comparison,
        witness_support,
        coset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn naive_lhs(set: &CubeSet) -> u128 {
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

    #[test]
    fn convolution_examples() {
        let e = CubeSet::empty(4).unwrap();
        assert_eq!(convolution_identity(&e), ConvolutionCheck { lhs: 0, rhs: 0, holds: true });
        let z = CubeSet::from_indices(4, &[0]).unwrap();
        assert_eq!(convolution_identity(&z).lhs, 1);
        let r = CubeSet::random(7, 0.3, 5).unwrap();
        let c = convolution_identity(&r);
        assert!(c.holds);
        assert_eq!(c.lhs, naive_lhs(&r));
    }

    #[test]
    fn full_set_and_subgroups() {
        let full = CubeSet::full(6).unwrap();
        let cert = find_coset(&full, 1.0 - 1.0 / 64.0).unwrap();
        assert_eq!(cert.subgroup_size, 64);
        assert!(cert.meets_guarantee);
        assert!(!cert.guarantee_applies);

        let gens = [0b000011usize, 0b010100, 0b100000];
        let sg = CubeSet::from_indices(6, &subgroup(&gens)).unwrap();
        let cert = find_coset(&sg, 8.0 / 64.0).unwrap();
        assert!(sg.contains(cert.b));
        assert!(cert.subgroup_size >= 8u64.min(cert.guarantee.ceil() as u64));
        assert!(cert.elements().iter().all(|&x| sg.contains(x)));
    }

    #[test]
    fn density_half_guarantee() {
        for seed in 0..5 {
            let set = CubeSet::random(12, 0.5, seed).unwrap();
            let cert = find_coset(&set, 0.5).unwrap();
            assert!((cert.guarantee - 4.0).abs() < 1e-12);
            assert!(cert.subgroup_size >= 4, "{}", cert.subgroup_size);
            assert!(cert.meets_guarantee && cert.guarantee_applies);
            assert!(cert.elements().iter().all(|&x| set.contains(x)));
            assert!(step_cardinality_audit(&cert.trace, 4096).holds);
        }
    }

    #[test]
    fn find_coset_rejects_bad_density() {
        let set = CubeSet::random(6, 0.25, 1).unwrap();
        assert!(find_coset(&set, 0.5).is_err());
        assert!(find_coset(&set, 0.0).is_err());
        assert!(find_coset(&CubeSet::empty(4).unwrap(), 0.1).is_err());
    }

    #[test]
    fn audit_examples() {
        // Λ₀ = G: |Λ₁| must be n
        let ok = [CosetStep { j: 1, gamma: 1, before: 16, after: 16 }];
        assert!(step_cardinality_audit(&ok, 16).holds);
        let bad = [CosetStep { j: 1, gamma: 1, before: 16, after: 15 }];
        assert_eq!(step_cardinality_audit(&bad, 16).violations, vec![1]);
    }

    #[test]
    fn subgroup_norm_examples() {
        let r = subgroup_sum_norms(&[], 5).unwrap();
        assert_eq!((r.l1, r.l2), (1.0, 1.0));
        let full: Vec<usize> = (0..5).map(|i| 1 << i).collect();
        let r = subgroup_sum_norms(&full, 5).unwrap();
        assert_eq!(r.l1, 1.0);
        assert!((r.l2 - 32f64.sqrt()).abs() < 1e-12);
        let r = subgroup_sum_norms(&[0b000111, 0b011000, 0b100001], 6).unwrap();
        assert_eq!(r.l1, 1.0);
        assert!((r.l2 - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(subgroup_sum_norms(&[3, 5, 6], 4).unwrap_err(), Error::DependentGenerators);
    }

    #[test]
    fn optimality_examples() {
        let n = 1024usize;
        assert!(optimality_certificate(10, &(1..n).collect::<Vec<_>>(), 1).is_err());
        let set = CubeSet::random(10, 0.5, 3).unwrap();
        let r = optimality_certificate(10, &set.elements(), n / 2).unwrap();
        assert!(r.ratio >= (10f64 / 3.0).sqrt());
        assert!((r.ratio - (r.coset.subgroup_size as f64).sqrt()).abs() < 1e-12);
        assert!(r.witness_support.iter().all(|&i| set.contains(i)));
    }

    #[test]
    fn hex_parsing() {
        let s = CubeSet::parse_hex(8, "0x1f\n# comment\n\nA0\n  03  # trailing\n").unwrap();
        assert_eq!(s.elements(), vec![0x03, 0x1f, 0xa0]);
        assert!(CubeSet::parse_hex(4, "1f").is_err());
        assert!(CubeSet::parse_hex(4, "zz").is_err());
    }

    #[test]
    fn rank_and_subgroup() {
        assert_eq!(gf2_rank(&[1, 2, 3]), 2);
        assert_eq!(gf2_rank(&[0b1100, 0b0110, 0b0011]), 3);
        let mut g = subgroup(&[1, 6]);
        g.sort_unstable();
        assert_eq!(g, vec![0, 1, 6, 7]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn certificates_are_exact(seed in 0u64..10_000, bits in 4u32..10, density in 0.3f64..0.9) {
            let set = CubeSet::random(bits, density, seed).unwrap();
            let c = set.density();
            let cert = find_coset(&set, c).unwrap();
            prop_assert!(cert.elements().iter().all(|&x| set.contains(x)));
            prop_assert_eq!(gf2_rank(&cert.generators), cert.p());
            prop_assert!(step_cardinality_audit(&cert.trace, set.universe()).holds);
            if cert.guarantee_applies {
                prop_assert!(cert.meets_guarantee);
            }
        }

        #[test]
        fn norms_match_subgroup_size(seed in 0u64..10_000, bits in 2u32..10) {
            let mut rng = substream(seed, Purpose::Instance, 0);
            let mut gens: Vec<usize> = Vec::new();
            let p = rng.random_range(0..=bits as usize);
            while gens.len() < p {
                let g = rng.random_range(1..1usize << bits);
                if gf2_rank(&[gens.clone(), vec![g]].concat()) > gens.len() {
                    gens.push(g);
                }
            }
            let r = subgroup_sum_norms(&gens, bits).unwrap();
            prop_assert_eq!(r.l1, 1.0);
            prop_assert!((r.l2 - ((1u64 << p) as f64).sqrt()).abs() <= 1e-12);
        }
    }
}
