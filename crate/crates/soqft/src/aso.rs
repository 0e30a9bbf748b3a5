//! Augmented split-operator correction: a dense unitary on a small pixel
//! patch around the Coulomb singularity, derived for one δt.

use crate::arith;
use crate::error::{Error, Result};
use crate::expm::chebyshev_expm;
use crate::grid::SimulationBox;
use crate::hamiltonian::{HamiltonianSpec, PixelHamiltonian};
use crate::layout::{Convention, RegisterLayout, Span};
use crate::propagator::{Propagator, SoStepPlan};
use crate::state::{StateVector, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

/// Largest system block for which dense step matrices are built.
pub const DENSE_THRESHOLD: usize = 4096;

/// Singular values below this mark the patch block as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// A `2^{n_l}`-per-side pixel patch on one particle, covering register values
/// `−G … G−1` with `G = 2^{n_l−1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorePatch {
    pub n_l: usize,
    pub particle: usize,
}

impl CorePatch {
    pub fn new(n_l: usize, particle: usize) -> Result<Self> {
        if n_l == 0 {
            return Err(Error::InvalidParameter("patch needs n_l ≥ 1".into()));
        }
        Ok(CorePatch { n_l, particle })
    }

    pub fn shift(&self) -> i64 {
        1i64 << (self.n_l - 1)
    }

    /// Patch pixel count `Q` for `dims` dimensions.
    pub fn size(&self, dims: usize) -> usize {
        1usize << (self.n_l * dims)
    }

    /// Register values of block entry `b`.
    pub fn values(&self, b: usize, dims: usize) -> Vec<i64> {
        let mask = (1usize << self.n_l) - 1;
        (0..dims)
            .map(|d| ((b >> (d * self.n_l)) & mask) as i64 - self.shift())
            .collect()
    }

    /// Offsets (relative to a base index with the particle's registers at
    /// raw zero) of each patch pixel, in block order.
    fn offsets(&self, spans: &[Span], conv: Convention) -> Vec<usize> {
        let dims = spans.len();
        (0..self.size(dims))
            .map(|b| {
                let v = self.values(b, dims);
                spans
                    .iter()
                    .zip(&v)
                    .fold(0usize, |i, (s, &x)| s.with_raw(i, conv.encode(x, s.width)))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AsoAugmentation {
    pub patch: CorePatch,
    pub dims: usize,
    pub n_r: usize,
    pub u_core: DMatrix<C64>,
    pub dt: f64,
    pub singular_values: Vec<f64>,
    pub rank_deficient: bool,
}

impl AsoAugmentation {
    /// An augmentation that does nothing.
    pub fn identity(patch: CorePatch, dims: usize, n_r: usize, dt: f64) -> Self {
        let q = patch.size(dims);
        AsoAugmentation {
            patch,
            dims,
            n_r,
            u_core: DMatrix::identity(q, q),
            dt,
            singular_values: vec![1.0; q],
            rank_deficient: false,
        }
    }

    pub fn unitarity_residual(&self) -> f64 {
        let q = self.u_core.nrows();
        let p = self.u_core.adjoint() * &self.u_core - DMatrix::<C64>::identity(q, q);
        p.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Refuses a layout or δt other than the one this was derived for.
    pub fn check(&self, dt: f64, layout: &RegisterLayout) -> Result<()> {
        if dt != self.dt {
            return Err(Error::Config(format!(
                "augmentation derived for δt = {} cannot be used at δt = {dt}",
                self.dt
            )));
        }
        let reg = layout.particle(self.patch.particle)?;
        if reg.dims.len() != self.dims || reg.n_r() != self.n_r || self.n_r < self.patch.n_l {
            return Err(Error::Config("augmentation does not match the register layout".into()));
        }
        Ok(())
    }

    /// Applies `U_core` (or its adjoint) as a block on the patch pixels of
    /// every configuration of the remaining qubits.
    pub fn apply_slice(&self, amps: &mut [C64], layout: &RegisterLayout, adjoint: bool) -> Result<()> {
        let spans = layout.particle(self.patch.particle)?.dims.clone();
        let conv = layout.convention();
        let offsets = self.patch.offsets(&spans, conv);
        let pmask = spans.iter().fold(0usize, |m, s| m | ((s.mask() as usize) << s.start));
        let u = if adjoint {
            self.u_core.adjoint()
        } else {
            self.u_core.clone()
        };
        let q = offsets.len();
        let bases: Vec<usize> = (0..amps.len()).filter(|i| i & pmask == 0).collect();
        let updates: Vec<(usize, Vec<C64>)> = bases
            .par_iter()
            .map(|&base| {
                let x: Vec<C64> = offsets.iter().map(|&o| amps[base | o]).collect();
                let y = (0..q)
                    .map(|r| (0..q).map(|c| u[(r, c)] * x[c]).sum())
                    .collect();
                (base, y)
            })
            .collect();
        for (base, y) in updates {
            for (&o, v) in offsets.iter().zip(y) {
                amps[base | o] = v;
            }
        }
        Ok(())
    }
}

/// State-level application via the explicit shift `A`: add `G` to each
/// coordinate of the patch particle, act on the subspace whose shifted values
/// fit in `n_l` bits, then shift back.
pub fn apply_aso(state: &mut StateVector, aug: &AsoAugmentation, plan_dt: f64) -> Result<()> {
    aug.check(plan_dt, state.layout())?;
    let layout = state.layout_arc();
    let conv = layout.convention();
    let spans = layout.particle(aug.patch.particle)?.dims.clone();
    let g = aug.patch.shift();
    let shifts = vec![g; spans.len()];
    arith::add_constant_slice(state.amplitudes_mut(), &spans, &shifts, conv)?;
    let n_l = aug.patch.n_l;
    let pmask = spans.iter().fold(0usize, |m, s| m | ((s.mask() as usize) << s.start));
    let shifted_block = |i: usize| -> Option<usize> {
        let mut b = 0usize;
        for (d, s) in spans.iter().enumerate() {
            let v = conv.decode(s.raw(i), s.width);
            if v < 0 || v >= (1i64 << n_l) {
                return None;
            }
            b |= (v as usize) << (d * n_l);
        }
        Some(b)
    };
    let q = aug.patch.size(spans.len());
    let amps = state.amplitudes_mut();
    let mut members = vec![0usize; q];
    for base in (0..amps.len()).filter(|i| i & pmask == 0) {
        for (b, m) in members.iter_mut().enumerate() {
            let v: Vec<i64> = (0..spans.len()).map(|d| ((b >> (d * n_l)) & ((1 << n_l) - 1)) as i64).collect();
            *m = spans
                .iter()
                .zip(&v)
                .fold(base, |i, (s, &x)| s.with_raw(i, conv.encode(x, s.width)));
            debug_assert_eq!(shifted_block(*m), Some(b));
        }
        let x: Vec<C64> = members.iter().map(|&m| amps[m]).collect();
        for (r, &m) in members.iter().enumerate() {
            amps[m] = (0..q).map(|c| aug.u_core[(r, c)] * x[c]).sum();
        }
    }
    let back: Vec<i64> = shifts.iter().map(|s| -s).collect();
    arith::add_constant_slice(state.amplitudes_mut(), &spans, &back, conv)
}

/// Dense `U_ideal = exp(−iHδt)` and `U_SO` (the unitary cycle actually
/// applied) for a system with no ancillas.
pub fn build_dense_step_matrices(
    bx: &SimulationBox,
    spec: &HamiltonianSpec,
    dt: f64,
    threshold: usize,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let layout = Arc::new(RegisterLayout::grid(spec.particles.len(), bx.dims(), bx.n_r)?);
    let dim = layout.dim();
    if dim > threshold.min(DENSE_THRESHOLD) {
        return Err(Error::DenseThreshold {
            dim,
            threshold: threshold.min(DENSE_THRESHOLD),
        });
    }
    let prop = Propagator::new(bx.clone(), spec.clone(), layout.clone(), SoStepPlan::new(dt))?;
    let ham = PixelHamiltonian::new(bx, spec, &layout)?;
    let cols: Vec<(Vec<C64>, Vec<C64>)> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[j] = C64::new(1.0, 0.0);
            let ideal = chebyshev_expm(|v| ham.apply(v), ham.bounds(), dt, &e);
            let mut so = e;
            prop.unitary_step_slice(&mut so).expect("system block");
            (ideal, so)
        })
        .collect();
    let mut u_ideal = DMatrix::<C64>::zeros(dim, dim);
    let mut u_so = DMatrix::<C64>::zeros(dim, dim);
    for (j, (a, b)) in cols.into_iter().enumerate() {
        u_ideal.set_column(j, &nalgebra::DVector::from_vec(a));
        u_so.set_column(j, &nalgebra::DVector::from_vec(b));
    }
    Ok((u_ideal, u_so))
}

/// System indices of the patch pixels in block order.
pub fn patch_indices(layout: &RegisterLayout, patch: CorePatch) -> Result<Vec<usize>> {
    let spans = layout.particle(patch.particle)?.dims.clone();
    Ok(patch.offsets(&spans, layout.convention()))
}

fn from_block(m: DMatrix<C64>, patch: CorePatch, dims: usize, n_r: usize, dt: f64) -> AsoAugmentation {
    let svd = m.svd(true, true);
    let u = svd.u.expect("left singular vectors");
    let v_t = svd.v_t.expect("right singular vectors");
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smallest = singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_deficient = smallest < RANK_TOLERANCE;
    if rank_deficient {
        log::warn!("patch repair block is rank deficient (smallest singular value {smallest:e})");
    }
    AsoAugmentation {
        patch,
        dims,
        n_r,
        u_core: u * v_t,
        dt,
        singular_values,
        rank_deficient,
    }
}

/// `U_core = u·v†` from the SVD of the patch block of `U_ideal·U_SO†`.
pub fn derive_aso(
    u_ideal: &DMatrix<C64>,
    u_so: &DMatrix<C64>,
    layout: &RegisterLayout,
    patch: CorePatch,
    dt: f64,
) -> Result<AsoAugmentation> {
    if u_ideal.shape() != u_so.shape() || u_ideal.nrows() != layout.dim() {
        return Err(Error::DimensionMismatch {
            left: u_ideal.nrows(),
            right: layout.dim(),
        });
    }
    let idx = patch_indices(layout, patch)?;
    let q = idx.len();
    let n = u_ideal.ncols();
    let mut m = DMatrix::<C64>::zeros(q, q);
    for (i, &pi) in idx.iter().enumerate() {
        for (j, &pj) in idx.iter().enumerate() {
            m[(i, j)] = (0..n).map(|k| u_ideal[(pi, k)] * u_so[(pj, k)].conj()).sum();
        }
    }
    let reg = layout.particle(patch.particle)?;
    Ok(from_block(m, patch, reg.dims.len(), reg.n_r(), dt))
}

/// The same augmentation as [`derive_aso`] without dense matrices: column `j`
/// of the patch block is `U_ideal·U_SO†·e_{p_j}` restricted to the patch.
pub fn derive_aso_restricted(
    bx: &SimulationBox,
    spec: &HamiltonianSpec,
    dt: f64,
    patch: CorePatch,
) -> Result<AsoAugmentation> {
    let layout = Arc::new(RegisterLayout::grid(spec.particles.len(), bx.dims(), bx.n_r)?);
    let prop = Propagator::new(bx.clone(), spec.clone(), layout.clone(), SoStepPlan::new(dt))?;
    let ham = PixelHamiltonian::new(bx, spec, &layout)?;
    let idx = patch_indices(&layout, patch)?;
    let q = idx.len();
    let dim = layout.dim();
    let cols: Vec<Vec<C64>> = idx
        .par_iter()
        .map(|&pj| {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[pj] = C64::new(1.0, 0.0);
            prop.inverse_step_slice(&mut e).expect("system block");
            chebyshev_expm(|v| ham.apply(v), ham.bounds(), dt, &e)
        })
        .collect();
    let mut m = DMatrix::<C64>::zeros(q, q);
    for (j, c) in cols.iter().enumerate() {
        for (i, &pi) in idx.iter().enumerate() {
            m[(i, j)] = c[pi];
        }
    }
    Ok(from_block(m, patch, bx.dims(), bx.n_r, dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_patch_mapping() {
        let p = CorePatch::new(1, 0).unwrap();
        let vals: Vec<Vec<i64>> = (0..4).map(|b| p.values(b, 2)).collect();
        assert_eq!(vals, vec![vec![-1, -1], vec![0, -1], vec![-1, 0], vec![0, 0]]);
        let shifted: Vec<Vec<i64>> = vals.iter().map(|v| v.iter().map(|x| x + p.shift()).collect()).collect();
        assert_eq!(shifted, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn identical_matrices_give_identity_core() {
        let bx = SimulationBox::new(1, 8.0, 3, 0.5).unwrap();
        let spec = HamiltonianSpec::hydrogenic(1, 1.0);
        let (_, u_so) = build_dense_step_matrices(&bx, &spec, 0.01, 64).unwrap();
        let l = RegisterLayout::grid(1, 1, 3).unwrap();
        let aug = derive_aso(&u_so, &u_so, &l, CorePatch::new(2, 0).unwrap(), 0.01).unwrap();
        let id = DMatrix::<C64>::identity(4, 4);
        assert!((aug.u_core - id).norm() < 1e-12);
    }

    #[test]
    fn threshold_is_enforced() {
        let bx = SimulationBox::new(2, 8.0, 4, 0.5).unwrap();
        let spec = HamiltonianSpec::hydrogenic(2, 1.0);
        assert!(matches!(
            build_dense_step_matrices(&bx, &spec, 0.01, 100),
            Err(Error::DenseThreshold { .. })
        ));
    }
}
