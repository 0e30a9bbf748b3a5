use crate::error::{Error, Result};
use crate::layout::{RegisterLayout, Span};
use crate::reduce;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

pub type C64 = Complex64;

pub(crate) const IMPOSSIBLE: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub qubit: usize,
    pub basis: Basis,
    /// 0/1 in the Z basis, 0 for `+` and 1 for `-` in the X basis.
    pub outcome: u8,
    pub probability: f64,
    pub post_selected: bool,
}

#[derive(Clone, Debug)]
pub struct StateVector {
    amps: Vec<C64>,
    layout: Arc<RegisterLayout>,
}

impl StateVector {
    /// The all-zero basis state.
    pub fn zero(layout: Arc<RegisterLayout>) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[0] = C64::new(1.0, 0.0);
        StateVector { amps, layout }
    }

    pub fn basis(layout: Arc<RegisterLayout>, index: usize) -> Result<Self> {
        if index >= layout.dim() {
            return Err(Error::Layout(format!("basis index {index} out of range")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[index] = C64::new(1.0, 0.0);
        Ok(StateVector { amps, layout })
    }

    pub fn from_amplitudes(layout: Arc<RegisterLayout>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                left: amps.len(),
                right: layout.dim(),
            });
        }
        Ok(StateVector { amps, layout })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> Arc<RegisterLayout> {
        self.layout.clone()
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.num_qubits()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        reduce::norm_sqr(&self.amps)
    }

    /// Rescales to unit norm and returns the norm found beforehand.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateState("zero or non-finite norm".into()));
        }
        let s = 1.0 / n;
        self.amps.par_iter_mut().with_min_len(reduce::CHUNK).for_each(|a| *a *= s);
        Ok(n)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(reduce::inner(&self.amps, &other.amps))
    }

    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Signed value of `span` in basis state `index`, under the layout convention.
    pub fn reg_val(&self, index: usize, span: Span) -> i64 {
        self.layout.convention().decode(span.raw(index), span.width)
    }

    /// Applies the 2×2 matrix `m` (row-major) to `qubit`.
    pub fn apply_single_qubit(&mut self, qubit: usize, m: [[C64; 2]; 2]) -> Result<()> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let block = bit << 1;
        let chunk_len = block.max(reduce::CHUNK).min(self.amps.len());
        self.amps.par_chunks_mut(chunk_len).for_each(|chunk| {
            for base in (0..chunk.len()).step_by(block) {
                for i in base..base + bit {
                    let a0 = chunk[i];
                    let a1 = chunk[i + bit];
                    chunk[i] = m[0][0] * a0 + m[0][1] * a1;
                    chunk[i + bit] = m[1][0] * a0 + m[1][1] * a1;
                }
            }
        });
        Ok(())
    }

    pub fn hadamard(&mut self, qubit: usize) -> Result<()> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = C64::new(h, 0.0);
        self.apply_single_qubit(qubit, [[c, c], [c, -c]])
    }

    /// Probability that `qubit` reads 1 in the Z basis.
    pub fn probability_one(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let amps = &self.amps;
        Ok(reduce::pairwise_sum(amps.len(), 0.0, |i| {
            if i & bit != 0 {
                amps[i].norm_sqr()
            } else {
                0.0
            }
        }))
    }

    /// Probability of outcome `+` when `qubit` is measured in the X basis.
    pub fn probability_plus(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let amps = &self.amps;
        let cross = reduce::pairwise_sum(amps.len(), 0.0, |i| {
            if i & bit == 0 {
                (amps[i].conj() * amps[i | bit]).re
            } else {
                0.0
            }
        });
        let total = self.norm_sqr();
        Ok(0.5 * total + cross)
    }

    fn outcome_probability(&self, qubit: usize, basis: Basis, outcome: u8) -> Result<f64> {
        let total = self.norm_sqr();
        let p = match basis {
            Basis::Z => {
                let p1 = self.probability_one(qubit)? / total;
                if outcome == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            }
            Basis::X => {
                let pp = self.probability_plus(qubit)? / total;
                if outcome == 0 {
                    pp
                } else {
                    1.0 - pp
                }
            }
        };
        Ok(p.clamp(0.0, 1.0))
    }

    fn collapse(&mut self, qubit: usize, basis: Basis, outcome: u8, probability: f64) -> Result<()> {
        if probability < IMPOSSIBLE {
            return Err(Error::ImpossiblePostSelection { qubit, probability });
        }
        if basis == Basis::X {
            self.hadamard(qubit)?;
        }
        let bit = 1usize << qubit;
        let keep = if outcome == 1 { bit } else { 0 };
        self.amps
            .par_iter_mut()
            .with_min_len(reduce::CHUNK)
            .enumerate()
            .for_each(|(i, a)| {
                if i & bit != keep {
                    *a = C64::new(0.0, 0.0);
                }
            });
        if basis == Basis::X {
            self.hadamard(qubit)?;
        }
        self.normalize()?;
        Ok(())
    }

    /// Post-selects `outcome` on `qubit` and renormalises.
    pub fn measure_forced(&mut self, qubit: usize, basis: Basis, outcome: u8) -> Result<MeasurementRecord> {
        if outcome > 1 {
            return Err(Error::InvalidParameter(format!("outcome {outcome}")));
        }
        let probability = self.outcome_probability(qubit, basis, outcome)?;
        self.collapse(qubit, basis, outcome, probability)?;
        Ok(MeasurementRecord {
            qubit,
            basis,
            outcome,
            probability,
            post_selected: true,
        })
    }

    /// Measures `qubit`, drawing the outcome from `rng`.
    pub fn measure_sampled<R: Rng + ?Sized>(
        &mut self,
        qubit: usize,
        basis: Basis,
        rng: &mut R,
    ) -> Result<MeasurementRecord> {
        let p0 = self.outcome_probability(qubit, basis, 0)?;
        let draw: f64 = rng.random();
        let outcome = if draw < p0 { 0 } else { 1 };
        let probability = if outcome == 0 { p0 } else { 1.0 - p0 };
        self.collapse(qubit, basis, outcome, probability)?;
        Ok(MeasurementRecord {
            qubit,
            basis,
            outcome,
            probability,
            post_selected: false,
        })
    }

    /// Applies `op` on the subspace where `control` is 1. The operation sees a
    /// state whose layout omits the control qubit.
    pub fn controlled_apply<F>(&mut self, control: usize, op: F) -> Result<()>
    where
        F: FnOnce(&mut StateVector) -> Result<()>,
    {
        self.conditioned_apply(control, 1, op)
    }

    /// Applies `op` on the subspace where `control` reads `value`.
    pub fn conditioned_apply<F>(&mut self, control: usize, value: u8, op: F) -> Result<()>
    where
        F: FnOnce(&mut StateVector) -> Result<()>,
    {
        let reduced = Arc::new(self.layout.without_qubit(control)?);
        let bit = 1usize << control;
        let keep = if value == 1 { bit } else { 0 };
        if control + 1 == self.num_qubits() {
            let range = if value == 1 { bit..2 * bit } else { 0..bit };
            let part: Vec<C64> = self.amps[range.clone()].to_vec();
            let mut sub = StateVector {
                amps: part,
                layout: reduced,
            };
            let r = op(&mut sub);
            self.amps[range].copy_from_slice(&sub.amps);
            return r;
        }
        let low = bit - 1;
        let half = self.amps.len() / 2;
        let src = &self.amps;
        let gathered: Vec<C64> = (0..half)
            .into_par_iter()
            .with_min_len(reduce::CHUNK)
            .map(|j| src[((j & !low) << 1) | keep | (j & low)])
            .collect();
        let mut sub = StateVector {
            amps: gathered,
            layout: reduced,
        };
        let r = op(&mut sub);
        let g = &sub.amps;
        self.amps
            .par_iter_mut()
            .with_min_len(reduce::CHUNK)
            .enumerate()
            .for_each(|(i, a)| {
                if i & bit == keep {
                    let j = ((i >> 1) & !low) | (i & low);
                    *a = g[j];
                }
            });
        r
    }

    /// Applies X rotation `exp(iθσ_x)` on `target` wherever every
    /// `(qubit, bit)` control condition holds.
    pub fn multi_controlled_x_rotation(
        &mut self,
        controls: &[(usize, u8)],
        target: usize,
        theta: f64,
    ) -> Result<()> {
        self.check_qubit(target)?;
        let mut mask = 0usize;
        let mut value = 0usize;
        for &(q, b) in controls {
            self.check_qubit(q)?;
            if q == target {
                return Err(Error::Layout("control coincides with target".into()));
            }
            mask |= 1 << q;
            if b == 1 {
                value |= 1 << q;
            }
        }
        let (s, c) = theta.sin_cos();
        let is = C64::new(0.0, s);
        let tbit = 1usize << target;
        let n = self.amps.len();
        let block = (tbit << 1).max(reduce::CHUNK).min(n);
        self.amps.par_chunks_mut(block).enumerate().for_each(|(k, chunk)| {
            let offset = k * block;
            for j in 0..chunk.len() {
                let i = offset + j;
                if i & tbit != 0 || i & mask != value {
                    continue;
                }
                let a0 = chunk[j];
                let a1 = chunk[j + tbit];
                chunk[j] = a0 * c + is * a1;
                chunk[j + tbit] = is * a0 + a1 * c;
            }
        });
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits() {
            return Err(Error::Layout(format!(
                "qubit {qubit} out of range for {} qubits",
                self.num_qubits()
            )));
        }
        Ok(())
    }

    /// Tensor product `self ⊗ |0⟩` onto a layout that extends this one with
    /// extra high qubits (e.g. an appended ancilla).
    pub fn extend_to(&self, layout: Arc<RegisterLayout>) -> Result<StateVector> {
        if layout.num_qubits() < self.num_qubits() {
            return Err(Error::Layout("target layout is smaller".into()));
        }
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[..self.amps.len()].copy_from_slice(&self.amps);
        Ok(StateVector { amps, layout })
    }

    /// Drops every qubit above the first `2^k` amplitudes, assuming they hold |0⟩.
    pub fn truncate_to(&self, layout: Arc<RegisterLayout>) -> Result<StateVector> {
        let d = layout.dim();
        if d > self.amps.len() {
            return Err(Error::Layout("target layout is larger".into()));
        }
        Ok(StateVector {
            amps: self.amps[..d].to_vec(),
            layout,
        })
    }
}

/// `⟨a|b⟩` over raw amplitude slices.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    a.inner(b)
}

pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    a.fidelity(b)
}
