//! Register arithmetic as basis permutations: relative coordinates, constant
//! shifts and sign-extending register enlargement.

use crate::error::{Error, Result};
use crate::layout::{Convention, RegisterLayout, Span};
use crate::reduce::CHUNK;
use crate::state::{StateVector, C64};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddSubMode {
    /// `a ← a − b`
    Subtract,
    /// `a ← a + b`
    Add,
}

impl AddSubMode {
    pub fn inverse(self) -> Self {
        match self {
            AddSubMode::Subtract => AddSubMode::Add,
            AddSubMode::Add => AddSubMode::Subtract,
        }
    }
}

/// `out[j] = amps[source(j)]`, written back into `amps`.
pub fn permute<F>(amps: &mut [C64], source: F)
where
    F: Fn(usize) -> usize + Sync,
{
    let src: Vec<C64> = amps.to_vec();
    amps.par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(j, a)| *a = src[source(j)]);
}

fn check_pair(a: Span, b: Span) -> Result<()> {
    if a.width != b.width {
        return Err(Error::Layout(format!("spans {a:?} and {b:?} differ in width")));
    }
    if a.overlaps(&b) {
        return Err(Error::Layout(format!("spans {a:?} and {b:?} overlap")));
    }
    Ok(())
}

#[inline]
fn combine(conv: Convention, ra: u64, rb: u64, w: usize, mode: AddSubMode) -> u64 {
    let a = conv.decode(ra, w);
    let b = conv.decode(rb, w);
    let v = match mode {
        AddSubMode::Subtract => a - b,
        AddSubMode::Add => a + b,
    };
    conv.encode(v, w)
}

/// Slice-level form of [`register_add_sub`] over several span pairs at once.
pub fn add_sub_slice(
    amps: &mut [C64],
    pairs: &[(Span, Span)],
    conv: Convention,
    mode: AddSubMode,
) -> Result<()> {
    for &(a, b) in pairs {
        check_pair(a, b)?;
        if (amps.len() as u64) < (1u64 << a.end().max(b.end())) {
            return Err(Error::Layout(format!("spans {a:?}, {b:?} outside the slice")));
        }
    }
    let inv = mode.inverse();
    permute(amps, |j| {
        let mut i = j;
        for &(a, b) in pairs {
            let r = combine(conv, a.raw(j), b.raw(j), a.width, inv);
            i = a.with_raw(i, r);
        }
        i
    });
    Ok(())
}

/// `|a⟩|b⟩ → |a ∓ b mod 2^{n_r}⟩|b⟩`.
pub fn register_add_sub(state: &mut StateVector, a: Span, b: Span, mode: AddSubMode) -> Result<()> {
    let conv = state.layout().convention();
    add_sub_slice(state.amplitudes_mut(), &[(a, b)], conv, mode)
}

/// `|v⟩ → |v + c mod 2^w⟩` on every listed span.
pub fn add_constant_slice(amps: &mut [C64], spans: &[Span], shifts: &[i64], conv: Convention) -> Result<()> {
    if spans.len() != shifts.len() {
        return Err(Error::DimensionMismatch {
            left: spans.len(),
            right: shifts.len(),
        });
    }
    permute(amps, |j| {
        let mut i = j;
        for (s, &c) in spans.iter().zip(shifts) {
            let v = conv.decode(s.raw(j), s.width) - c;
            i = s.with_raw(i, conv.encode(v, s.width));
        }
        i
    });
    Ok(())
}

pub fn add_constant(state: &mut StateVector, span: Span, c: i64) -> Result<()> {
    let conv = state.layout().convention();
    add_constant_slice(state.amplitudes_mut(), &[span], &[c], conv)
}

/// Widens every sub-register of `particle` by `extra` high qubits, copying the
/// sign so each represented coordinate keeps its value.
pub fn enlarge_subregister(state: &StateVector, particle: usize, extra: usize) -> Result<StateVector> {
    let old = state.layout();
    let new = Arc::new(old.with_enlarged_particle(particle, extra)?);
    let amps = relabel(state.amplitudes(), old, &new, particle)?;
    StateVector::from_amplitudes(new, amps)
}

fn relabel(src: &[C64], old: &RegisterLayout, new: &RegisterLayout, grown: usize) -> Result<Vec<C64>> {
    let conv = old.convention();
    let mut pairs: Vec<(Span, Span, bool)> = Vec::new();
    for (p, (po, pn)) in old.particles().iter().zip(new.particles()).enumerate() {
        for (&so, &sn) in po.dims.iter().zip(&pn.dims) {
            pairs.push((so, sn, p == grown));
        }
    }
    let anc: Vec<(Span, Span)> = old
        .ancillas()
        .iter()
        .zip(new.ancillas())
        .map(|(a, b)| (a.span, b.span))
        .collect();
    let out = (0..new.dim())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|j| {
            let mut i = 0usize;
            for &(so, sn, g) in &pairs {
                let v = conv.decode(sn.raw(j), sn.width);
                if g {
                    let half = 1i64 << (so.width - 1);
                    if v < -half || v >= half {
                        return C64::new(0.0, 0.0);
                    }
                }
                i = so.with_raw(i, conv.encode(v, so.width));
            }
            for &(ao, an) in &anc {
                i = ao.with_raw(i, an.raw(j));
            }
            src[i]
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_layout(n_r: usize) -> Arc<RegisterLayout> {
        Arc::new(RegisterLayout::grid(2, 1, n_r).unwrap())
    }

    fn encode(l: &RegisterLayout, a: i64, b: i64) -> usize {
        let n = l.n_r().unwrap();
        let c = l.convention();
        (c.encode(a, n) | (c.encode(b, n) << n)) as usize
    }

    #[test]
    fn subtract_examples() {
        let l = pair_layout(4);
        let mut s = StateVector::basis(l.clone(), encode(&l, 3, 5)).unwrap();
        register_add_sub(&mut s, Span::new(0, 4), Span::new(4, 4), AddSubMode::Subtract).unwrap();
        assert_eq!(s.amplitudes()[encode(&l, -2, 5)], C64::new(1.0, 0.0));
        let l3 = pair_layout(3);
        let mut w = StateVector::basis(l3.clone(), encode(&l3, -4, 1)).unwrap();
        register_add_sub(&mut w, Span::new(0, 3), Span::new(3, 3), AddSubMode::Subtract).unwrap();
        assert_eq!(w.amplitudes()[encode(&l3, 3, 1)], C64::new(1.0, 0.0));
    }

    #[test]
    fn add_constant_wraps() {
        let l = Arc::new(RegisterLayout::grid(1, 1, 3).unwrap());
        let mut s = StateVector::basis(l.clone(), 3).unwrap();
        add_constant(&mut s, Span::new(0, 3), 1).unwrap();
        assert_eq!(s.amplitudes()[4], C64::new(1.0, 0.0));
    }

    #[test]
    fn enlarge_keeps_values() {
        let l = Arc::new(RegisterLayout::grid(1, 1, 3).unwrap().with_ancilla("a", 1).unwrap());
        let s = StateVector::basis(l.clone(), 0b1_111).unwrap();
        let e = enlarge_subregister(&s, 0, 1).unwrap();
        assert_eq!(e.num_qubits(), 5);
        assert_eq!(e.amplitudes()[0b1_1111], C64::new(1.0, 0.0));
        let t = StateVector::basis(l, 0b011).unwrap();
        let e = enlarge_subregister(&t, 0, 1).unwrap();
        assert_eq!(e.amplitudes()[0b0011], C64::new(1.0, 0.0));
    }

    #[test]
    fn unsigned_shift_arithmetic() {
        let l = Arc::new(
            RegisterLayout::grid(2, 1, 3)
                .unwrap()
                .with_convention(Convention::UnsignedShift),
        );
        let mut s = StateVector::basis(l.clone(), encode(&l, -4, 1)).unwrap();
        register_add_sub(&mut s, Span::new(0, 3), Span::new(3, 3), AddSubMode::Subtract).unwrap();
        assert_eq!(s.amplitudes()[encode(&l, 3, 1)], C64::new(1.0, 0.0));
    }
}
