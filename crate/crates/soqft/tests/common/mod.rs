#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soqft::grid::SimulationBox;
use soqft::hamiltonian::{HamiltonianSpec, Nucleus, ParticleSpec};
use std::f64::consts::PI;

pub fn random_state(dim: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let n: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= n);
    v
}

pub fn signed(raw: usize, w: usize) -> i64 {
    let h = 1i64 << (w - 1);
    let v = raw as i64;
    if v >= h {
        v - 2 * h
    } else {
        v
    }
}

/// Unitary DFT matrix: `F[n][k] = e^{iπnk/ρ}/√(2ρ)` over signed labels.
pub fn dft(w: usize) -> DMatrix<C64> {
    let n = 1usize << w;
    let rho = (n / 2) as f64;
    DMatrix::from_fn(n, n, |r, c| {
        C64::from_polar(1.0 / (n as f64).sqrt(), PI * (signed(r, w) * signed(c, w)) as f64 / rho)
    })
}

/// `F ⊗ … ⊗ F` with the first factor acting on the lowest bits.
pub fn dft_all(w: usize, registers: usize) -> DMatrix<C64> {
    let f = dft(w);
    let mut m = DMatrix::<C64>::identity(1, 1);
    for _ in 0..registers {
        m = f.kronecker(&m);
    }
    m
}

pub fn diag_phase(energies: &[f64], dt: f64) -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        energies.len(),
        energies.iter().map(|&e| C64::from_polar(1.0, -e * dt)),
    ))
}

pub fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn dense_step(kin: &[f64], pot: &[f64], w: usize, regs: usize, dt: f64) -> DMatrix<C64> {
    let f = dft_all(w, regs);
    diag_phase(pot, dt) * &f * diag_phase(kin, dt) * f.adjoint()
}

pub fn one_particle_2d(n_r: usize, l: f64) -> (SimulationBox, HamiltonianSpec, Vec<f64>, Vec<f64>) {
    let bx = SimulationBox::new(2, l, n_r, 0.5).unwrap();
    let mut spec = HamiltonianSpec::hydrogenic(2, 1.0);
    spec.field = vec![0.05, -0.02];
    let dr = l / (1 << n_r) as f64;
    let n = 1usize << n_r;
    let c = 2.0 * PI * PI / (l * l);
    let mask = n - 1;
    let mut kin = Vec::new();
    let mut pot = Vec::new();
    for i in 0..n * n {
        let (a, b) = (signed(i & mask, n_r), signed(i >> n_r, n_r));
        kin.push(c * ((a * a + b * b) as f64));
        let (x, y) = ((a as f64 + 0.5) * dr, (b as f64 + 0.5) * dr);
        pot.push(-1.0 / x.hypot(y) + (x * 0.05 - y * 0.02));
    }
    (bx, spec, kin, pot)
}

pub fn two_particles_1d(n_r: usize, l: f64) -> (SimulationBox, HamiltonianSpec, Vec<f64>, Vec<f64>) {
    let bx = SimulationBox::new(1, l, n_r, 0.5).unwrap();
    let spec = HamiltonianSpec {
        particles: vec![ParticleSpec::electron(), ParticleSpec { mass: 2.0, charge: -1.0 }],
        nuclei: vec![Nucleus { position: vec![0.0], charge: 2.0 }],
        pair_couplings: None,
        field: vec![],
        attenuation: None,
        singularity: Default::default(),
    };
    let n = 1usize << n_r;
    let dr = l / n as f64;
    let c = 2.0 * PI * PI / (l * l);
    let mut kin = Vec::new();
    let mut pot = Vec::new();
    for i in 0..n * n {
        let (a, b) = (signed(i & (n - 1), n_r), signed(i >> n_r, n_r));
        kin.push(c * (a * a) as f64 + c / 2.0 * (b * b) as f64);
        let xa = (a as f64 + 0.5) * dr;
        let xb = (b as f64 + 0.5) * dr;
        let mut d = (a - b).rem_euclid(n as i64);
        if d >= n as i64 / 2 {
            d -= n as i64;
        }
        let pair = if d == 0 { 1.0 / dr } else { 1.0 / (d.abs() as f64 * dr) };
        pot.push(-2.0 / xa.abs() - 2.0 / xb.abs() + pair);
    }
    (bx, spec, kin, pot)
}

/// Real symmetric one-dimensional kinetic matrix `F·diag(c·k²)·F†` summed
/// directly over signed momenta.
pub fn kinetic_matrix_1d(w: usize, c: f64) -> DMatrix<f64> {
    let n = 1usize << w;
    let rho = (n / 2) as f64;
    DMatrix::from_fn(n, n, |a, b| {
        let d = (signed(a, w) - signed(b, w)) as f64;
        (0..n)
            .map(|k| {
                let k = signed(k, w) as f64;
                c * k * k * (PI * k * d / rho).cos()
            })
            .sum::<f64>()
            / n as f64
    })
}

/// Hydrogenic 2D pixel potential at unit charge with the nucleus at the origin.
pub fn coulomb_2d(w: usize, l: f64, offset: f64) -> Vec<f64> {
    let n = 1usize << w;
    let dr = l / n as f64;
    (0..n * n)
        .map(|i| {
            let x = (signed(i & (n - 1), w) as f64 + offset) * dr;
            let y = (signed(i >> w, w) as f64 + offset) * dr;
            let r = x.hypot(y);
            if r == 0.0 {
                0.0
            } else {
                -1.0 / r
            }
        })
        .collect()
}

/// Dense 2D single-particle pixel Hamiltonian, dimension 0 on the low bits.
pub fn dense_hamiltonian_2d(w: usize, l: f64, offset: f64) -> DMatrix<f64> {
    let n = 1usize << w;
    let t = kinetic_matrix_1d(w, 2.0 * PI * PI / (l * l));
    let v = coulomb_2d(w, l, offset);
    DMatrix::from_fn(n * n, n * n, |i, j| {
        let (a, b) = (i & (n - 1), i >> w);
        let (c, d) = (j & (n - 1), j >> w);
        let mut h = 0.0;
        if b == d {
            h += t[(a, c)];
        }
        if a == c {
            h += t[(b, d)];
        }
        if i == j {
            h += v[i];
        }
        h
    })
}

/// Matrix-free 2D pixel Hamiltonian using the dense 1D kinetic matrix on
/// each axis.
pub struct KronHamiltonian2d {
    t: DMatrix<f64>,
    v: Vec<f64>,
    n: usize,
}

impl KronHamiltonian2d {
    pub fn new(w: usize, l: f64, offset: f64) -> Self {
        KronHamiltonian2d {
            t: kinetic_matrix_1d(w, 2.0 * PI * PI / (l * l)),
            v: coulomb_2d(w, l, offset),
            n: 1 << w,
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        let re = DMatrix::from_fn(n, n, |a, b| x[a + n * b].re);
        let im = DMatrix::from_fn(n, n, |a, b| x[a + n * b].im);
        let hr = &self.t * &re + &re * &self.t;
        let hi = &self.t * &im + &im * &self.t;
        (0..n * n)
            .map(|i| C64::new(hr[(i % n, i / n)], hi[(i % n, i / n)]) + x[i] * self.v[i])
            .collect()
    }
}

/// Ritz pairs `(value, weight of the start vector, vector)` from `m` Lanczos
/// steps with full reorthogonalisation, sorted by decreasing weight.
pub fn lanczos<F: Fn(&[C64]) -> Vec<C64>>(apply: F, start: &[C64], m: usize) -> Vec<(f64, f64, Vec<C64>)> {
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let nrm = |a: &[C64]| dot(a, a).re.sqrt();
    let s0 = nrm(start);
    let mut q: Vec<Vec<C64>> = vec![start.iter().map(|a| a / s0).collect()];
    let (mut al, mut be) = (Vec::new(), Vec::new());
    for j in 0..m {
        let mut w = apply(&q[j]);
        al.push(dot(&q[j], &w).re);
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &w);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = nrm(&w);
        if j + 1 == m || b < 1e-12 {
            break;
        }
        be.push(b);
        q.push(w.iter().map(|x| x / b).collect());
    }
    let k = al.len();
    let t = DMatrix::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            al[i]
        } else if i + 1 == j {
            be[i]
        } else if j + 1 == i {
            be[j]
        } else {
            0.0
        }
    });
    let e = t.symmetric_eigen();
    let mut out: Vec<(f64, f64, Vec<C64>)> = (0..k)
        .map(|c| {
            let mut v = vec![C64::new(0.0, 0.0); start.len()];
            for (i, qi) in q.iter().enumerate() {
                let s = e.eigenvectors[(i, c)];
                v.iter_mut().zip(qi).for_each(|(x, y)| *x += y * s);
            }
            (e.eigenvalues[c], e.eigenvectors[(0, c)].powi(2), v)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}
