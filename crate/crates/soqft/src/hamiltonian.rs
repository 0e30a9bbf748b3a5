//! Particles, nuclei, couplings and the diagonal energy terms of the pixel
//! Hamiltonian.

use crate::error::{Error, Result};
use crate::grid::SimulationBox;
use crate::layout::{Convention, RegisterLayout, Span};
use crate::phase::{self, Overrides, SpanKey};
use crate::qft::{qft_slice, Direction};
use crate::reduce::CHUNK;
use crate::state::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub mass: f64,
    pub charge: f64,
}

impl ParticleSpec {
    pub fn electron() -> Self {
        ParticleSpec {
            mass: 1.0,
            charge: -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub position: Vec<f64>,
    pub charge: f64,
}

/// What to do when a pixel coincides exactly with a nucleus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityPolicy {
    #[default]
    ZeroPhase,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttenuationRegion {
    /// Strength `v` over the outer `2^{-m}` fraction of every dimension.
    Uniform { m: u32, strength: f64 },
    /// Per-pixel strengths keyed by the particle's coordinate values.
    Pixels { pixels: Vec<(Vec<i64>, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSpec {
    pub region: AttenuationRegion,
    /// Particles subject to attenuation; all when absent.
    #[serde(default)]
    pub particles: Option<Vec<usize>>,
}

/// `θ = arccos(exp(−V·δt))`.
pub fn attenuation_angle(v: f64, dt: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("attenuation strength {v}")));
    }
    let theta = (-v * dt).exp().acos();
    if !(0.0..PI / 2.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("attenuation angle {theta} out of range")));
    }
    Ok(theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub particles: Vec<ParticleSpec>,
    #[serde(default)]
    pub nuclei: Vec<Nucleus>,
    /// Symmetric pair couplings; defaults to `Q_p·Q_q`.
    #[serde(default)]
    pub pair_couplings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub field: Vec<f64>,
    #[serde(default)]
    pub attenuation: Option<AttenuationSpec>,
    #[serde(default)]
    pub singularity: SingularityPolicy,
}

impl HamiltonianSpec {
    /// One electron bound to a nucleus of charge `z` at the origin.
    pub fn hydrogenic(dims: usize, z: f64) -> Self {
        HamiltonianSpec {
            particles: vec![ParticleSpec::electron()],
            nuclei: vec![Nucleus {
                position: vec![0.0; dims],
                charge: z,
            }],
            pair_couplings: None,
            field: Vec::new(),
            attenuation: None,
            singularity: SingularityPolicy::ZeroPhase,
        }
    }

    pub fn free(num_particles: usize) -> Self {
        HamiltonianSpec {
            particles: vec![ParticleSpec::electron(); num_particles],
            nuclei: Vec::new(),
            pair_couplings: None,
            field: Vec::new(),
            attenuation: None,
            singularity: SingularityPolicy::ZeroPhase,
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.particles.is_empty() {
            return Err(Error::InvalidParameter("no particles".into()));
        }
        for (p, s) in self.particles.iter().enumerate() {
            if !(s.mass > 0.0 && s.mass.is_finite()) {
                return Err(Error::InvalidParameter(format!("particle {p} mass {}", s.mass)));
            }
            if !s.charge.is_finite() {
                return Err(Error::InvalidParameter(format!("particle {p} charge")));
            }
        }
        for (m, n) in self.nuclei.iter().enumerate() {
            if n.position.len() != dims || !n.charge.is_finite() {
                return Err(Error::InvalidParameter(format!("nucleus {m} malformed")));
            }
        }
        if !self.field.is_empty() && self.field.len() != dims {
            return Err(Error::InvalidParameter(format!(
                "field has {} components for {dims} dimensions",
                self.field.len()
            )));
        }
        if let Some(q) = &self.pair_couplings {
            let n = self.particles.len();
            if q.len() != n || q.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidParameter("pair coupling matrix has wrong shape".into()));
            }
            for i in 0..n {
                if q[i][i] != 0.0 {
                    return Err(Error::InvalidParameter("pair coupling diagonal must be zero".into()));
                }
                for j in 0..n {
                    if q[i][j] != q[j][i] {
                        return Err(Error::InvalidParameter("pair couplings must be symmetric".into()));
                    }
                }
            }
        }
        if let Some(a) = &self.attenuation {
            if let AttenuationRegion::Uniform { m, strength } = &a.region {
                if *m == 0 {
                    return Err(Error::InvalidParameter("uniform attenuation needs m ≥ 1".into()));
                }
                attenuation_angle(*strength, 0.0)?;
            }
            if let Some(ps) = &a.particles {
                if ps.iter().any(|&p| p >= self.particles.len()) {
                    return Err(Error::InvalidParameter("attenuation names a missing particle".into()));
                }
            }
        }
        Ok(())
    }

    pub fn coupling(&self, p: usize, q: usize) -> f64 {
        match &self.pair_couplings {
            Some(m) => m[p][q],
            None => self.particles[p].charge * self.particles[q].charge,
        }
    }

    /// `C = 2π²/(L²m)`, so the kinetic energy of momentum index `k` is `C·k²`.
    pub fn kinetic_constant(&self, p: usize, width: f64) -> f64 {
        2.0 * PI * PI / (width * width * self.particles[p].mass)
    }

    /// Nuclear attraction plus field energy of particle `p` at `x`.
    pub fn interaction_potential(&self, p: usize, x: &[f64]) -> f64 {
        let q = self.particles[p].charge;
        let mut v = 0.0;
        for n in &self.nuclei {
            let r2: f64 = x.iter().zip(&n.position).map(|(a, b)| (a - b) * (a - b)).sum();
            v += q * n.charge / r2.sqrt();
        }
        for (xi, e) in x.iter().zip(&self.field) {
            v -= q * xi * e;
        }
        v
    }

    pub fn has_pairs(&self) -> bool {
        let n = self.particles.len();
        (0..n).any(|p| (p + 1..n).any(|q| self.coupling(p, q) != 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermKind {
    /// Diagonal in momentum space.
    Kinetic,
    /// Single-particle real-space potential.
    Interaction,
    /// Two-body term keyed by relative coordinates held in particle `a`'s
    /// registers after `a ← a − b`.
    Pair { a: usize, b: usize },
}

/// A real diagonal energy table over the value tuples of `key`.
#[derive(Clone, Debug)]
pub struct DiagonalTerm {
    pub kind: TermKind,
    pub key: SpanKey,
    pub energies: Vec<f64>,
}

impl DiagonalTerm {
    pub fn min_max(&self) -> (f64, f64) {
        self.energies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)))
    }

    /// Pair spans `(a_d, b_d)` for pair terms.
    pub fn pair_spans(&self, layout: &RegisterLayout) -> Vec<(Span, Span)> {
        match self.kind {
            TermKind::Pair { a, b } => layout.particles()[a]
                .dims
                .iter()
                .copied()
                .zip(layout.particles()[b].dims.iter().copied())
                .collect(),
            _ => Vec::new(),
        }
    }
}

fn tabulate_policy<F>(spans: &[Span], conv: Convention, policy: SingularityPolicy, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[i64]) -> f64 + Sync,
{
    let mut overrides = Overrides::new();
    loop {
        match phase::tabulate(spans, conv, &f, &overrides) {
            Ok(t) => return Ok(t),
            Err(Error::Singularity { values }) if policy == SingularityPolicy::ZeroPhase => {
                log::debug!("overriding singular potential at {values:?}");
                overrides.insert(values, 0.0);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Every diagonal piece of the pixel Hamiltonian for `layout`.
#[derive(Clone, Debug)]
pub struct DiagonalTerms {
    pub terms: Vec<DiagonalTerm>,
    pub convention: Convention,
    pub system_qubits: usize,
}

impl DiagonalTerms {
    pub fn build(bx: &SimulationBox, spec: &HamiltonianSpec, layout: &RegisterLayout) -> Result<Self> {
        bx.check_layout(layout)?;
        spec.validate(bx.dims())?;
        if spec.particles.len() != layout.num_particles() {
            return Err(Error::DimensionMismatch {
                left: spec.particles.len(),
                right: layout.num_particles(),
            });
        }
        let conv = layout.convention();
        let system_qubits = layout.system_qubits()?;
        let dims = bx.dims();
        let mut terms = Vec::new();
        for (p, reg) in layout.particles().iter().enumerate() {
            for (d, &span) in reg.dims.iter().enumerate() {
                let c = spec.kinetic_constant(p, bx.widths[d]);
                let energies = phase::tabulate(&[span], conv, |v| c * (v[0] * v[0]) as f64, &Overrides::new())?;
                terms.push(DiagonalTerm {
                    kind: TermKind::Kinetic,
                    key: SpanKey::new(&[span])?,
                    energies,
                });
            }
        }
        let has_field = spec.field.iter().any(|&e| e != 0.0);
        for (p, reg) in layout.particles().iter().enumerate() {
            let nuclear = !spec.nuclei.is_empty() && spec.particles[p].charge != 0.0;
            if !nuclear && !has_field {
                continue;
            }
            let energies = tabulate_policy(&reg.dims, conv, spec.singularity, |v| {
                let mut x = [0.0; 3];
                for d in 0..dims {
                    x[d] = bx.coordinate(d, v[d]);
                }
                spec.interaction_potential(p, &x[..dims])
            })?;
            terms.push(DiagonalTerm {
                kind: TermKind::Interaction,
                key: SpanKey::new(&reg.dims)?,
                energies,
            });
        }
        let n = layout.num_particles();
        for a in 0..n {
            for b in a + 1..n {
                let q = spec.coupling(a, b);
                if q == 0.0 {
                    continue;
                }
                let spans = &layout.particles()[a].dims;
                let dr: Vec<f64> = (0..dims).map(|d| bx.dr(d)).collect();
                let capped = q / dr[0];
                let mut ov = Overrides::new();
                ov.insert(vec![0; dims], capped);
                let energies = phase::tabulate(
                    spans,
                    conv,
                    |v| {
                        let r2: f64 = v.iter().zip(&dr).map(|(&k, h)| (k as f64 * h).powi(2)).sum();
                        q / r2.sqrt()
                    },
                    &ov,
                )?;
                terms.push(DiagonalTerm {
                    kind: TermKind::Pair { a, b },
                    key: SpanKey::new(spans)?,
                    energies,
                });
            }
        }
        Ok(DiagonalTerms {
            terms,
            convention: conv,
            system_qubits,
        })
    }

    pub fn kinetic(&self) -> impl Iterator<Item = &DiagonalTerm> {
        self.terms.iter().filter(|t| t.kind == TermKind::Kinetic)
    }

    pub fn potential(&self) -> impl Iterator<Item = &DiagonalTerm> {
        self.terms.iter().filter(|t| t.kind != TermKind::Kinetic)
    }

    fn pair_index(&self, t: &DiagonalTerm, layout: &RegisterLayout, i: usize) -> usize {
        let mut k = 0usize;
        let mut off = 0;
        for (sa, sb) in t.pair_spans(layout) {
            let w = sa.width;
            let r = self.convention.encode(
                self.convention.decode(sa.raw(i), w) - self.convention.decode(sb.raw(i), w),
                w,
            );
            k |= (r as usize) << off;
            off += w;
        }
        k
    }

    /// Full real-space potential diagonal over the system block.
    pub fn potential_diagonal(&self, layout: &RegisterLayout) -> Vec<f64> {
        let dim = 1usize << self.system_qubits;
        (0..dim)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                let mut v = 0.0;
                for t in self.potential() {
                    let k = match t.kind {
                        TermKind::Pair { .. } => self.pair_index(t, layout, i),
                        _ => t.key.key(i),
                    };
                    v += t.energies[k];
                }
                v
            })
            .collect()
    }

    /// Full momentum-space kinetic diagonal over the system block.
    pub fn kinetic_diagonal(&self) -> Vec<f64> {
        let dim = 1usize << self.system_qubits;
        (0..dim)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| self.kinetic().map(|t| t.energies[t.key.key(i)]).sum())
            .collect()
    }

    /// Lower and upper bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0, 0.0);
        for t in &self.terms {
            let (a, b) = t.min_max();
            lo += a;
            hi += b;
        }
        (lo, hi)
    }
}

/// The pixel Hamiltonian acting on system-block vectors through the FFT.
#[derive(Clone, Debug)]
pub struct PixelHamiltonian {
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    spans: Vec<Span>,
    convention: Convention,
    bounds: (f64, f64),
}

impl PixelHamiltonian {
    pub fn new(bx: &SimulationBox, spec: &HamiltonianSpec, layout: &RegisterLayout) -> Result<Self> {
        let terms = DiagonalTerms::build(bx, spec, layout)?;
        let spans = layout.particles().iter().flat_map(|p| p.dims.iter().copied()).collect();
        Ok(PixelHamiltonian {
            kinetic: terms.kinetic_diagonal(),
            potential: terms.potential_diagonal(layout),
            spans,
            convention: terms.convention,
            bounds: terms.spectral_bounds(),
        })
    }

    pub fn dim(&self) -> usize {
        self.kinetic.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn kinetic(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Momentum-space amplitudes of a real-space vector.
    pub fn to_momentum(&self, v: &mut [C64]) {
        for &s in &self.spans {
            qft_slice(v, s, self.convention, Direction::Inverse).expect("span fits system block");
        }
    }

    pub fn to_position(&self, v: &mut [C64]) {
        for &s in &self.spans {
            qft_slice(v, s, self.convention, Direction::Forward).expect("span fits system block");
        }
    }

    /// `H·v` for a real-space vector `v`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut k = v.to_vec();
        self.to_momentum(&mut k);
        k.par_iter_mut()
            .with_min_len(CHUNK)
            .zip(&self.kinetic)
            .for_each(|(a, &t)| *a *= t);
        self.to_position(&mut k);
        k.par_iter_mut()
            .with_min_len(CHUNK)
            .zip(v.par_iter())
            .zip(&self.potential)
            .for_each(|((a, &x), &u)| *a += x * u);
        k
    }

    /// Lowest eigenpair by Lanczos with full reorthogonalisation, started
    /// from `guess`. Stops early once the Krylov space is exhausted.
    pub fn lowest_eigenpair(&self, guess: &[C64], krylov: usize) -> Result<(f64, Vec<C64>)> {
        use crate::reduce::{inner, norm_sqr};
        let n0 = norm_sqr(guess).sqrt();
        if guess.len() != self.dim() || n0 == 0.0 {
            return Err(Error::Config("eigensolver needs a non-zero guess of system size".into()));
        }
        let mut basis: Vec<Vec<C64>> = vec![guess.iter().map(|a| a / n0).collect()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for j in 0..krylov.max(1) {
            let mut w = self.apply(&basis[j]);
            alpha.push(inner(&basis[j], &w).re);
            for _ in 0..2 {
                for q in &basis {
                    let c = inner(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = norm_sqr(&w).sqrt();
            if j + 1 == krylov || b < 1e-12 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| match i as isize - j as isize {
            0 => alpha[i],
            1 => beta[j],
            -1 => beta[i],
            _ => 0.0,
        });
        let eig = t.symmetric_eigen();
        let (col, e0) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, e)| if e < acc.1 { (i, e) } else { acc });
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        for (i, q) in basis.iter().enumerate().take(k) {
            let c = eig.eigenvectors[(i, col)];
            v.iter_mut().zip(q).for_each(|(x, y)| *x += y * c);
        }
        let nv = norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        Ok((e0, v))
    }

    /// `⟨v|H|v⟩ / ⟨v|v⟩`.
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let hv = self.apply(v);
        let num = crate::reduce::inner(v, &hv).re;
        num / crate::reduce::norm_sqr(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_constant_value() {
        let s = HamiltonianSpec::free(1);
        assert!((s.kinetic_constant(0, 10.0) - 0.197392088).abs() < 1e-8);
    }

    #[test]
    fn field_energy_sign() {
        let mut s = HamiltonianSpec::free(1);
        s.field = vec![0.1];
        let v = s.interaction_potential(0, &[2.0]);
        assert!((v * 0.01 - 0.002).abs() < 1e-15);
    }

    #[test]
    fn attenuation_angle_value() {
        let theta = attenuation_angle(1.0, 0.01).unwrap();
        assert!((theta.cos() - (-0.01f64).exp()).abs() < 1e-15);
        assert!((theta - 0.141186).abs() < 1e-6);
    }

    #[test]
    fn rejects_asymmetric_couplings() {
        let mut s = HamiltonianSpec::free(2);
        s.pair_couplings = Some(vec![vec![0.0, 1.0], vec![0.5, 0.0]]);
        assert!(s.validate(1).is_err());
    }

    #[test]
    fn singular_pixel_policy() {
        let bx = SimulationBox::new(1, 8.0, 3, 0.0).unwrap();
        let l = RegisterLayout::grid(1, 1, 3).unwrap();
        let mut spec = HamiltonianSpec::hydrogenic(1, 1.0);
        let t = DiagonalTerms::build(&bx, &spec, &l).unwrap();
        let inter = t.potential().next().unwrap();
        assert_eq!(inter.energies[0], 0.0);
        spec.singularity = SingularityPolicy::Error;
        assert!(matches!(
            DiagonalTerms::build(&bx, &spec, &l),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn half_pixel_offset_geometry() {
        let bx = SimulationBox::new(2, 8.0, 3, 0.5).unwrap();
        let l = RegisterLayout::grid(1, 2, 3).unwrap();
        let t = DiagonalTerms::build(&bx, &HamiltonianSpec::hydrogenic(2, 1.0), &l).unwrap();
        let inter = t.potential().next().unwrap();
        let dr = 1.0;
        assert!((inter.energies[0] + 1.0 / (dr * 0.5f64.hypot(0.5))).abs() < 1e-14);
    }

    #[test]
    fn pair_energy_at_fixed_pixels() {
        let bx = SimulationBox::new(1, 16.0, 4, 0.5).unwrap();
        let l = RegisterLayout::grid(2, 1, 4).unwrap();
        let spec = HamiltonianSpec::free(2);
        let t = DiagonalTerms::build(&bx, &spec, &l).unwrap();
        let v = t.potential_diagonal(&l);
        let idx = 3 | (5 << 4);
        assert!((v[idx] * 0.1 - 0.05).abs() < 1e-15);
        let same = 3 | (3 << 4);
        assert!((v[same] - 1.0).abs() < 1e-15);
    }
}
