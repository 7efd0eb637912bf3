//! In-place fast Walsh–Hadamard transform in natural (Hadamard) order.
//!
//! `out[s] = Σ_x (−1)^{popcount(s & x)} in[x]`, unnormalized; applying it
//! twice multiplies by the length.

use std::ops::{Add, Sub};

/// Transform `data` in place. Length must be a power of two.
pub fn fwht<T>(data: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = data.len();
    assert!(n.is_power_of_two(), "fwht length {n} is not a power of two");
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        half <<= 1;
    }
}

/// XOR autocorrelation of an indicator: `out[g] = |(g ⊕ S) ∩ S|`.
pub fn xor_autocorrelation(indicator: &[bool]) -> Vec<i64> {
    let n = indicator.len() as i64;
    let mut h: Vec<i64> = indicator.iter().map(|&b| b as i64).collect();
    fwht(&mut h);
    for v in h.iter_mut() {
        *v *= *v;
    }
    fwht(&mut h);
    for v in h.iter_mut() {
        debug_assert_eq!(*v % n, 0);
        *v /= n;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(data: &[i64]) -> Vec<i64> {
        let n = data.len();
        (0..n)
            .map(|s| {
                (0..n)
                    .map(|x| if (s & x).count_ones() % 2 == 0 { data[x] } else { -data[x] })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bits in 0..8 {
            let data: Vec<i64> = (0..1usize << bits).map(|_| rng.random_range(-50..50)).collect();
            let mut fast = data.clone();
            fwht(&mut fast);
            assert_eq!(fast, naive(&data));
        }
    }

    #[test]
    fn involution_up_to_scale() {
        let data: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut t = data.clone();
        fwht(&mut t);
        fwht(&mut t);
        for (a, b) in t.iter().zip(&data) {
            assert!((a / 64.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn autocorrelation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ind: Vec<bool> = (0..128).map(|_| rng.random_bool(0.4)).collect();
        let fast = xor_autocorrelation(&ind);
        for g in 0..128usize {
            let slow = (0..128usize).filter(|&x| ind[x] && ind[x ^ g]).count() as i64;
            assert_eq!(fast[g], slow);
        }
    }
}
