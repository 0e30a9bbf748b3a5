//! Pixel grids, analytic wavefunctions and their discretisation.

use crate::error::{Error, Result};
use crate::layout::{Convention, RegisterLayout};
use crate::phase::SpanKey;
use crate::reduce::{self, CHUNK};
use crate::state::{StateVector, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Box of width `L_d` per dimension sampled by `2^{n_r}` pixels each.
///
/// Pixel `n` sits at `(n + origin_offset)·δr` relative to the potential
/// origin, so an offset of one half puts the origin between pixels −1 and 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationBox {
    pub widths: Vec<f64>,
    pub n_r: usize,
    pub origin_offset: f64,
}

impl SimulationBox {
    pub fn new(dims: usize, width: f64, n_r: usize, origin_offset: f64) -> Result<Self> {
        SimulationBox::with_widths(vec![width; dims], n_r, origin_offset)
    }

    pub fn with_widths(widths: Vec<f64>, n_r: usize, origin_offset: f64) -> Result<Self> {
        if widths.is_empty() || widths.len() > 3 {
            return Err(Error::InvalidParameter(format!("{} dimensions", widths.len())));
        }
        if widths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("box widths must be positive".into()));
        }
        if n_r == 0 || n_r > 20 {
            return Err(Error::InvalidParameter(format!("n_r = {n_r}")));
        }
        if !(0.0..1.0).contains(&origin_offset) {
            return Err(Error::InvalidParameter(format!(
                "origin offset {origin_offset} outside [0, 1)"
            )));
        }
        Ok(SimulationBox {
            widths,
            n_r,
            origin_offset,
        })
    }

    pub fn dims(&self) -> usize {
        self.widths.len()
    }

    pub fn pixels(&self) -> usize {
        1 << self.n_r
    }

    pub fn dr(&self, d: usize) -> f64 {
        self.widths[d] / self.pixels() as f64
    }

    /// Volume element `Π_d δr_d`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|d| self.dr(d)).product()
    }

    pub fn coordinate(&self, d: usize, n: i64) -> f64 {
        (n as f64 + self.origin_offset) * self.dr(d)
    }

    pub fn value_range(&self) -> std::ops::Range<i64> {
        let half = 1i64 << (self.n_r - 1);
        -half..half
    }

    /// Same δr with `extra` more qubits per sub-register.
    pub fn enlarged(&self, extra: usize) -> SimulationBox {
        let f = (1u64 << extra) as f64;
        SimulationBox {
            widths: self.widths.iter().map(|l| l * f).collect(),
            n_r: self.n_r + extra,
            origin_offset: self.origin_offset,
        }
    }

    /// Checks that `layout` holds particles shaped like this box.
    pub fn check_layout(&self, layout: &RegisterLayout) -> Result<()> {
        for (p, reg) in layout.particles().iter().enumerate() {
            if reg.dims.len() != self.dims() || reg.n_r() != self.n_r {
                return Err(Error::Layout(format!(
                    "particle {p} has {} sub-registers of {} qubits, box expects {} of {}",
                    reg.dims.len(),
                    reg.n_r(),
                    self.dims(),
                    self.n_r
                )));
            }
        }
        Ok(())
    }
}

/// The grid-frame basis function represented by register value `n`, with
/// its peak at `n·δr`.
pub fn pixel_function(n: i64, n_r: usize, l: f64, x: f64) -> C64 {
    let rho = (1u64 << (n_r - 1)) as f64;
    let dr = l / (2.0 * rho);
    let xp = x - n as f64 * dr;
    let mut s = 0.0;
    for j in 1..=(rho as u64) {
        s += (PI * (2 * j - 1) as f64 * xp / l).cos();
    }
    C64::from_polar((2.0 / (rho * l)).sqrt() * s, -PI * xp / l)
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Generalised Laguerre polynomial `L_k^α(x)` by upward recurrence.
pub fn laguerre(k: u32, alpha: f64, x: f64) -> f64 {
    let mut l0 = 1.0;
    if k == 0 {
        return l0;
    }
    let mut l1 = 1.0 + alpha - x;
    for j in 1..k {
        let j = j as f64;
        let l2 = ((2.0 * j + 1.0 + alpha - x) * l1 - (j + alpha) * l0) / (j + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Associated Legendre function with the Condon–Shortley phase, `m ≥ 0`.
fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    let mut pmm = 1.0;
    if m > 0 {
        let s = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut f = 1.0;
        for _ in 0..m {
            pmm *= -f * s;
            f += 2.0;
        }
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut out = 0.0;
    for ll in (m + 2)..=l {
        out = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = out;
    }
    out
}

/// Spherical harmonic `Y_l^m(θ, φ)`, Condon–Shortley convention.
pub fn spherical_harmonic(l: u32, m: i32, theta: f64, phi: f64) -> C64 {
    let am = m.unsigned_abs();
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let y = C64::from_polar(norm * assoc_legendre(l, am, theta.cos()), am as f64 * phi);
    if m >= 0 {
        y
    } else if am.is_multiple_of(2) {
        y.conj()
    } else {
        -y.conj()
    }
}

pub fn hydrogen2d_energy(n: u32) -> f64 {
    let h = n as f64 + 0.5;
    -1.0 / (2.0 * h * h)
}

pub fn hydrogen2d_eigenstate(n: u32, m: i32, r: f64, theta: f64) -> Result<C64> {
    let am = m.unsigned_abs();
    if am > n {
        return Err(Error::QuantumNumbers(format!("2D hydrogen needs |m| ≤ n, got n={n} m={m}")));
    }
    if r < 0.0 {
        return Err(Error::InvalidParameter(format!("negative radius {r}")));
    }
    let q0 = 1.0 / (n as f64 + 0.5);
    let norm = (q0.powi(3) * factorial(n - am) / (PI * factorial(n + am))).sqrt();
    let x = 2.0 * q0 * r;
    let radial = norm * x.powi(am as i32) * (-q0 * r).exp() * laguerre(n - am, 2.0 * am as f64, x);
    Ok(C64::from_polar(radial, m as f64 * theta))
}

pub fn hydrogen3d_energy(n: u32, z: f64) -> f64 {
    -z * z / (2.0 * (n * n) as f64)
}

pub fn hydrogen3d_eigenstate(n: u32, l: u32, m: i32, z: f64, r: f64, theta: f64, phi: f64) -> Result<C64> {
    if n == 0 || l >= n || m.unsigned_abs() > l {
        return Err(Error::QuantumNumbers(format!(
            "3D hydrogen needs l < n and |m| ≤ l, got n={n} l={l} m={m}"
        )));
    }
    if z <= 0.0 {
        return Err(Error::QuantumNumbers(format!("nuclear charge {z} must be positive")));
    }
    let nf = n as f64;
    let norm = ((2.0 * z / nf).powi(3) * factorial(n - l - 1) / (2.0 * nf * factorial(n + l))).sqrt();
    let x = 2.0 * z * r / nf;
    let radial = norm * x.powi(l as i32) * (-z * r / nf).exp() * laguerre(n - l - 1, (2 * l + 1) as f64, x);
    Ok(spherical_harmonic(l, m, theta, phi) * radial)
}

/// One-dimensional Gaussian packet, unit-normalised on the real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian1D {
    pub x_c: f64,
    pub p_c: f64,
    pub alpha: C64,
    pub gamma: C64,
}

pub fn gaussian_wavepacket(x: f64, x_c: f64, p_c: f64, alpha: C64, gamma: C64) -> C64 {
    let dx = x - x_c;
    let pre = gamma.im.exp() * (2.0 * alpha.re / PI).powf(0.25);
    let arg = -alpha * dx * dx + C64::new(0.0, p_c * dx) + C64::i() * gamma;
    pre * arg.exp()
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticState {
    Hydrogen2D { n: u32, m: i32 },
    Hydrogen3D { n: u32, l: u32, m: i32, z: f64 },
    /// Product of one packet per dimension.
    Gaussian(Vec<Gaussian1D>),
    Superposition(Vec<(C64, AnalyticState)>),
}

impl AnalyticState {
    pub fn validate(&self, dims: usize) -> Result<()> {
        match self {
            AnalyticState::Hydrogen2D { n, m } => {
                if dims != 2 {
                    return Err(Error::InvalidParameter("2D hydrogen needs 2 dimensions".into()));
                }
                hydrogen2d_eigenstate(*n, *m, 0.0, 0.0).map(|_| ())
            }
            AnalyticState::Hydrogen3D { n, l, m, z } => {
                if dims != 3 {
                    return Err(Error::InvalidParameter("3D hydrogen needs 3 dimensions".into()));
                }
                hydrogen3d_eigenstate(*n, *l, *m, *z, 0.0, 0.0, 0.0).map(|_| ())
            }
            AnalyticState::Gaussian(g) => {
                if g.len() != dims {
                    return Err(Error::InvalidParameter(format!(
                        "{} Gaussian factors for {dims} dimensions",
                        g.len()
                    )));
                }
                if g.iter().any(|p| !(p.alpha.re > 0.0)) {
                    return Err(Error::InvalidParameter("Gaussian needs Re(α) > 0".into()));
                }
                Ok(())
            }
            AnalyticState::Superposition(terms) => {
                if terms.is_empty() {
                    return Err(Error::InvalidParameter("empty superposition".into()));
                }
                terms.iter().try_for_each(|(_, s)| s.validate(dims))
            }
        }
    }

    /// Value at Cartesian coordinates `x` (one entry per dimension).
    pub fn eval(&self, x: &[f64]) -> C64 {
        match self {
            AnalyticState::Hydrogen2D { n, m } => {
                let r = x[0].hypot(x[1]);
                hydrogen2d_eigenstate(*n, *m, r, x[1].atan2(x[0])).unwrap_or_default()
            }
            AnalyticState::Hydrogen3D { n, l, m, z } => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let theta = if r > 0.0 { (x[2] / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
                hydrogen3d_eigenstate(*n, *l, *m, *z, r, theta, x[1].atan2(x[0])).unwrap_or_default()
            }
            AnalyticState::Gaussian(g) => g
                .iter()
                .zip(x)
                .map(|(p, &xi)| gaussian_wavepacket(xi, p.x_c, p.p_c, p.alpha, p.gamma))
                .product(),
            AnalyticState::Superposition(terms) => terms.iter().map(|(w, s)| w * s.eval(x)).sum(),
        }
    }

    /// Smallest Gaussian width `1/√Re α` over all packets, if any.
    fn narrowest_gaussian(&self) -> Option<f64> {
        match self {
            AnalyticState::Gaussian(g) => g
                .iter()
                .map(|p| 1.0 / p.alpha.re.sqrt())
                .min_by(|a, b| a.total_cmp(b)),
            AnalyticState::Superposition(t) => t
                .iter()
                .filter_map(|(_, s)| s.narrowest_gaussian())
                .min_by(|a, b| a.total_cmp(b)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResolutionWarning {
    /// The raw sampled norm was far from one.
    Normalisation { c: f64 },
    /// A Gaussian is narrower than two pixels.
    UnderResolved { width: f64, dr: f64 },
}

/// Sampled single-particle amplitudes, indexed with dimension 0 lowest.
#[derive(Clone, Debug)]
pub struct Discretized {
    pub amplitudes: Vec<C64>,
    /// Factor applied to `√(δr^d)·Ψ(x_n)` to reach unit norm.
    pub c: f64,
    pub warnings: Vec<ResolutionWarning>,
}

/// Coordinates of single-particle pixel `index` (dimension 0 in the lowest bits).
pub fn pixel_coordinates(bx: &SimulationBox, conv: Convention, index: usize, out: &mut [f64]) {
    let mask = (1u64 << bx.n_r) - 1;
    for (d, o) in out.iter_mut().enumerate().take(bx.dims()) {
        let raw = ((index as u64) >> (d * bx.n_r)) & mask;
        *o = bx.coordinate(d, conv.decode(raw, bx.n_r));
    }
}

pub fn discretize(state: &AnalyticState, bx: &SimulationBox, conv: Convention) -> Result<Discretized> {
    state.validate(bx.dims())?;
    let dims = bx.dims();
    let size = 1usize << (dims * bx.n_r);
    let scale = bx.cell_volume().sqrt();
    let mut amps: Vec<C64> = (0..size)
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|i| {
            let mut x = [0.0; 3];
            pixel_coordinates(bx, conv, i, &mut x);
            state.eval(&x[..dims]) * scale
        })
        .collect();
    let raw = reduce::norm_sqr(&amps).sqrt();
    if !(raw > 0.0) || !raw.is_finite() {
        return Err(Error::DegenerateState("all sampled amplitudes vanish".into()));
    }
    let c = 1.0 / raw;
    amps.iter_mut().for_each(|a| *a *= c);
    let mut warnings = Vec::new();
    if (c - 1.0).abs() > 1e-3 {
        log::warn!("sampled norm constant C = {c:.6} deviates from unity");
        warnings.push(ResolutionWarning::Normalisation { c });
    }
    if let Some(width) = state.narrowest_gaussian() {
        let dr = (0..dims).map(|d| bx.dr(d)).fold(0.0, f64::max);
        if width < 2.0 * dr {
            log::warn!("Gaussian width {width:.4} is below two pixels (δr = {dr:.4})");
            warnings.push(ResolutionWarning::UnderResolved { width, dr });
        }
    }
    Ok(Discretized {
        amplitudes: amps,
        c,
        warnings,
    })
}

/// Local single-particle index of every particle in basis `index`.
fn particle_keys(layout: &RegisterLayout) -> Result<Vec<SpanKey>> {
    layout
        .particles()
        .iter()
        .map(|p| SpanKey::new(&p.dims))
        .collect()
}

/// `⊗_p ψ_p` on `layout`, with all ancillas in |0⟩.
pub fn product_state(layout: Arc<RegisterLayout>, factors: &[Vec<C64>]) -> Result<StateVector> {
    if factors.len() != layout.num_particles() {
        return Err(Error::DimensionMismatch {
            left: factors.len(),
            right: layout.num_particles(),
        });
    }
    let keys = particle_keys(&layout)?;
    for (k, f) in keys.iter().zip(factors) {
        if f.len() != k.len() {
            return Err(Error::DimensionMismatch {
                left: f.len(),
                right: k.len(),
            });
        }
    }
    let sys = keys.iter().map(|k| k.reach()).max().unwrap_or(0);
    let sys_mask = (1usize << sys) - 1;
    let amps = (0..layout.dim())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|i| {
            if i & !sys_mask != 0 {
                return C64::new(0.0, 0.0);
            }
            keys.iter()
                .zip(factors)
                .map(|(k, f)| f[k.key(i)])
                .product()
        })
        .collect();
    StateVector::from_amplitudes(layout, amps)
}

/// `ψ_a(r1)ψ_b(r2) ∓ ψ_b(r1)ψ_a(r2)`, renormalised. Returns the norm found
/// before renormalisation alongside the state.
pub fn antisymmetrize_direct(
    layout: Arc<RegisterLayout>,
    psi_a: &[C64],
    psi_b: &[C64],
    symmetric: bool,
) -> Result<(StateVector, f64)> {
    if layout.num_particles() != 2 {
        return Err(Error::Layout("exchange needs exactly two particles".into()));
    }
    let p = layout.particles();
    if p[0].dims.len() != p[1].dims.len() || p[0].n_r() != p[1].n_r() {
        return Err(Error::Layout("particle registers differ in shape".into()));
    }
    let ab = product_state(layout.clone(), &[psi_a.to_vec(), psi_b.to_vec()])?;
    let ba = product_state(layout.clone(), &[psi_b.to_vec(), psi_a.to_vec()])?;
    let sign = if symmetric { 1.0 } else { -1.0 };
    let amps: Vec<C64> = ab
        .amplitudes()
        .par_iter()
        .zip(ba.amplitudes())
        .map(|(x, y)| x + sign * y)
        .collect();
    let mut s = StateVector::from_amplitudes(layout, amps)?;
    let norm = s.norm_sqr().sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateState("exchange combination has zero norm".into()));
    }
    s.normalize()?;
    Ok((s, norm))
}

/// Swaps two equal-shape particle registers.
pub fn swap_particles(state: &StateVector, a: usize, b: usize) -> Result<StateVector> {
    let layout = state.layout();
    let pa = layout.particle(a)?.dims.clone();
    let pb = layout.particle(b)?.dims.clone();
    if pa.len() != pb.len() || pa.iter().zip(&pb).any(|(x, y)| x.width != y.width) {
        return Err(Error::Layout("particle registers differ in shape".into()));
    }
    let src = state.amplitudes();
    let amps = (0..src.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|j| {
            let mut i = j;
            for (sa, sb) in pa.iter().zip(&pb) {
                i = sa.with_raw(i, sb.raw(j));
                i = sb.with_raw(i, sa.raw(j));
            }
            src[i]
        })
        .collect();
    StateVector::from_amplitudes(state.layout_arc(), amps)
}

pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for d in [p, q] {
        if let Some(v) = d.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("distribution entry {v}")));
        }
        let s = reduce::pairwise_sum(d.len(), 0.0, |i| d[i]);
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("distribution sums to {s}")));
        }
    }
    Ok(reduce::pairwise_sum(p.len(), 0.0, |i| (p[i] * q[i]).sqrt()).min(1.0))
}
