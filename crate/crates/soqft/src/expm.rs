//! `exp(−iHt)·v` by Chebyshev expansion, for Hamiltonians available only as
//! a matrix-vector action with known spectral bounds.

use crate::state::C64;

/// Bessel functions `J_0(x) … J_n(x)` by Miller's backward recurrence.
pub fn bessel_j(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = (n.max(ax as usize) + 30 + (ax.sqrt() * 10.0) as usize) | 1;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut norm = 0.0;
    let mut vals = vec![0.0; start + 1];
    vals[start] = j;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / ax * j - jp1;
        jp1 = j;
        j = jm1;
        vals[k - 1] = j;
        if j.abs() > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    for (k, v) in vals.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for k in 0..=n {
        let mut v = vals[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        out[k] = v;
    }
    out
}

/// Applies `exp(−iHt)` to `v` given `apply(v) = H·v` and a spectrum inside
/// `[lo, hi]`.
pub fn chebyshev_expm<F>(apply: F, bounds: (f64, f64), t: f64, v: &[C64]) -> Vec<C64>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let (lo, hi) = bounds;
    let pad = 1e-6 * (hi - lo).abs().max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let c = 0.5 * (hi + lo);
    let r = 0.5 * (hi - lo);
    let z = r * t;
    let terms = (z.abs() * 1.5) as usize + 40;
    let j = bessel_j(terms, z);
    let scaled = |x: &[C64]| -> Vec<C64> {
        let mut y = apply(x);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (*yi - xi * c) / r;
        }
        y
    };
    let mut acc: Vec<C64> = v.iter().map(|x| x * j[0]).collect();
    let mut prev: Vec<C64> = v.to_vec();
    let mut cur = scaled(v);
    let mut phase = C64::new(0.0, -1.0);
    for (k, &jk) in j.iter().enumerate().skip(1) {
        let w = phase * (2.0 * jk);
        for (a, x) in acc.iter_mut().zip(&cur) {
            *a += x * w;
        }
        if k + 1 < j.len() {
            if jk.abs() < 1e-18 && k as f64 > z.abs() {
                break;
            }
            let mut next = scaled(&cur);
            for (nx, p) in next.iter_mut().zip(&prev) {
                *nx = *nx * 2.0 - p;
            }
            prev = std::mem::replace(&mut cur, next);
        }
        phase *= C64::new(0.0, -1.0);
    }
    let g = C64::from_polar(1.0, -c * t);
    acc.iter_mut().for_each(|a| *a *= g);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        let j = bessel_j(3, 1.0);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((j[3] - 0.019_563_353_982_668_4).abs() < 1e-14);
        let j = bessel_j(2, 25.0);
        assert!((j[0] - 0.096_266_783_275_958_2).abs() < 1e-13);
    }

    #[test]
    fn diagonal_exponential() {
        let d = [0.3, -1.2, 4.0, 7.5];
        let v: Vec<C64> = (0..4).map(|i| C64::new(1.0, i as f64)).collect();
        let out = chebyshev_expm(
            |x| x.iter().zip(&d).map(|(a, &e)| a * e).collect(),
            (-1.2, 7.5),
            0.9,
            &v,
        );
        for i in 0..4 {
            let e = v[i] * C64::from_polar(1.0, -d[i] * 0.9);
            assert!((out[i] - e).norm() < 1e-13);
        }
    }
}
