use soqft::grid::{discretize, hydrogen2d_eigenstate, AnalyticState, SimulationBox};
use soqft::{Convention, C64};
use std::f64::consts::PI;

fn ground(x: f64, y: f64) -> f64 {
    (8.0 / PI).sqrt() * (-2.0 * x.hypot(y)).exp()
}

/// Overlap of the discretised 2D ground state, read as a sum of pixel
/// functions and zero outside the box, with the continuum state. The box
/// Fourier coefficients come from a midpoint rule with `s` points per pixel.
fn continuum_fidelity(l: f64, n_r: usize, offset: f64, s: usize) -> f64 {
    let n = 1usize << n_r;
    let rho = (n / 2) as i64;
    let dr = l / n as f64;
    let m = n * s;
    let h = l / m as f64;
    let lo = (offset - 0.5 - rho as f64) * dr;
    let xs: Vec<f64> = (0..m).map(|j| lo + (j as f64 + 0.5) * h).collect();
    let wave = |k: i64, x: f64| C64::from_polar(1.0, 2.0 * PI * k as f64 * x / l);
    let fwd: Vec<Vec<C64>> = (-rho..rho).map(|k| xs.iter().map(|&x| wave(-k, x)).collect()).collect();
    let mut partial = vec![vec![C64::new(0.0, 0.0); n]; m];
    for (j, g) in partial.iter_mut().enumerate() {
        let row: Vec<f64> = xs.iter().map(|&y| ground(xs[j], y)).collect();
        for (k, e) in fwd.iter().enumerate() {
            g[k] = row.iter().zip(e).map(|(&v, &w)| w * v).sum();
        }
    }
    let mut hat = vec![vec![C64::new(0.0, 0.0); n]; n];
    for (k1, e) in fwd.iter().enumerate() {
        for k2 in 0..n {
            hat[k1][k2] = (0..m).map(|j| e[j] * partial[j][k2]).sum::<C64>() * (h * h);
        }
    }
    let bx = SimulationBox::new(2, l, n_r, offset).unwrap();
    let a = discretize(&AnalyticState::Hydrogen2D { n: 0, m: 0 }, &bx, Convention::TwosComplement)
        .unwrap()
        .amplitudes;
    let centres: Vec<f64> = (-rho..rho).map(|v| (v as f64 + offset) * dr).collect();
    let back: Vec<Vec<C64>> = (-rho..rho).map(|k| centres.iter().map(|&x| wave(k, x)).collect()).collect();
    let mut ov = C64::new(0.0, 0.0);
    for i1 in 0..n {
        for i2 in 0..n {
            let mut c = C64::new(0.0, 0.0);
            for k1 in 0..n {
                let t: C64 = (0..n).map(|k2| back[k2][i2] * hat[k1][k2]).sum();
                c += back[k1][i1] * t;
            }
            c /= n as f64 * l;
            let raw = |i: usize| (i as i64 - rho).rem_euclid(n as i64) as usize;
            ov += a[raw(i1) | (raw(i2) << n_r)].conj() * c;
        }
    }
    ov.norm_sqr()
}

#[test]
fn ground_state_formula_agrees() {
    for &(x, y) in &[(0.0, 0.0), (0.3, -0.4), (1.5, 2.0)] {
        let r: f64 = f64::hypot(x, y);
        let v = hydrogen2d_eigenstate(0, 0, r, y.atan2(x)).unwrap();
        assert!((v.norm() - ground(x, y)).abs() < 1e-12);
    }
}

#[test]
fn continuum_fidelity_at_six_qubits() {
    // Origin on a pixel, L = 10: frozen at 0.999451 (S = 16), 0.999452 (S = 32).
    let f = continuum_fidelity(10.0, 6, 0.0, 16);
    assert!((f - 0.99946).abs() < 2e-5, "{f}");
    assert!((f - 0.999451).abs() < 2e-6, "{f}");
    // Straddling the cusp is kinder; wider boxes are coarser.
    assert!(continuum_fidelity(10.0, 6, 0.5, 8) > f);
    assert!(continuum_fidelity(14.0, 6, 0.0, 8) < f);
}
