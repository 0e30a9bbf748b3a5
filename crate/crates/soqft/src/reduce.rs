//! Reductions whose summation tree depends only on the input length, so the
//! result is bit-identical for any number of worker threads.

use num_complex::Complex64;
use std::ops::Add;

const LEAF: usize = 2048;

/// Elementwise kernels split work into chunks of this many amplitudes.
pub const CHUNK: usize = 4096;

fn tree<T, F>(lo: usize, hi: usize, zero: T, f: &F) -> T
where
    T: Copy + Send + Sync + Add<Output = T>,
    F: Fn(usize) -> T + Sync,
{
    if hi - lo <= LEAF {
        let mut acc = zero;
        for i in lo..hi {
            acc = acc + f(i);
        }
        return acc;
    }
    let blocks = (hi - lo).div_ceil(LEAF);
    let mid = lo + (blocks / 2) * LEAF;
    let (a, b) = rayon::join(|| tree(lo, mid, zero, f), || tree(mid, hi, zero, f));
    a + b
}

/// Sum of `f(i)` for `i` in `0..n` over a fixed pairwise tree.
pub fn pairwise_sum<T, F>(n: usize, zero: T, f: F) -> T
where
    T: Copy + Send + Sync + Add<Output = T>,
    F: Fn(usize) -> T + Sync,
{
    if n == 0 {
        return zero;
    }
    tree(0, n, zero, &f)
}

pub fn norm_sqr(amps: &[Complex64]) -> f64 {
    pairwise_sum(amps.len(), 0.0, |i| amps[i].norm_sqr())
}

/// `Σ conj(a_i) b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum(a.len(), Complex64::new(0.0, 0.0), |i| a[i].conj() * b[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_change_bits() {
        let v: Vec<Complex64> = (0..100_003)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.1).cos() / 3.0))
            .collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(7).build().unwrap();
        let a = one.install(|| inner(&v, &v));
        let b = many.install(|| inner(&v, &v));
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
    }

    #[test]
    fn empty_and_small() {
        assert_eq!(pairwise_sum(0, 0.0, |_| 1.0), 0.0);
        assert_eq!(pairwise_sum(5, 0.0, |i| i as f64), 10.0);
    }
}
