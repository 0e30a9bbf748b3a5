//! Gate-level reference paths: a textbook QFT circuit and the controlled-phase
//! ladder for quadratic kinetic phases. Both are slow and meant for cross-checks
//! on small registers.

use crate::error::{Error, Result};
use crate::layout::{Convention, Span};
use crate::reduce::CHUNK;
use crate::state::{StateVector, C64};
use rayon::prelude::*;
use std::f64::consts::PI;

fn check(state: &StateVector, qs: &[usize]) -> Result<()> {
    for (i, &q) in qs.iter().enumerate() {
        if q >= state.num_qubits() {
            return Err(Error::Layout(format!("qubit {q} out of range")));
        }
        if qs[i + 1..].contains(&q) {
            return Err(Error::Layout(format!("qubit {q} repeated")));
        }
    }
    Ok(())
}

/// `|1⟩ → e^{iφ}|1⟩` on `q`.
pub fn phase(state: &mut StateVector, q: usize, phi: f64) -> Result<()> {
    controlled_phase_mask(state, &[q], phi)
}

/// Phase `e^{iφ}` on the `|11⟩` component of `(a, b)`.
pub fn controlled_phase(state: &mut StateVector, a: usize, b: usize, phi: f64) -> Result<()> {
    controlled_phase_mask(state, &[a, b], phi)
}

fn controlled_phase_mask(state: &mut StateVector, qs: &[usize], phi: f64) -> Result<()> {
    check(state, qs)?;
    let mask = qs.iter().fold(0usize, |m, &q| m | (1 << q));
    let f = C64::from_polar(1.0, phi);
    state
        .amplitudes_mut()
        .par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(i, x)| {
            if i & mask == mask {
                *x *= f;
            }
        });
    Ok(())
}

pub fn swap(state: &mut StateVector, a: usize, b: usize) -> Result<()> {
    check(state, &[a, b])?;
    let (ba, bb) = (1usize << a, 1usize << b);
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & ba != 0 && i & bb == 0 {
            amps.swap(i, (i & !ba) | bb);
        }
    }
    Ok(())
}

/// Hadamards, controlled rotations and the final bit reversal.
pub fn gate_qft(state: &mut StateVector, span: Span) -> Result<()> {
    if state.layout().convention() != Convention::TwosComplement {
        return Err(Error::Layout("gate QFT assumes two's complement".into()));
    }
    let q = |j: usize| span.start + j;
    for j in (0..span.width).rev() {
        state.hadamard(q(j))?;
        for i in (0..j).rev() {
            controlled_phase(state, q(i), q(j), PI / (1u64 << (j - i)) as f64)?;
        }
    }
    for i in 0..span.width / 2 {
        swap(state, q(i), q(span.width - 1 - i))?;
    }
    Ok(())
}

/// Applies `exp(−iθk²)` to the signed value `k` of `span` with one
/// single-qubit phase per bit and one controlled phase per bit pair.
pub fn kinetic_ladder(state: &mut StateVector, span: Span, theta: f64) -> Result<()> {
    if state.layout().convention() != Convention::TwosComplement {
        return Err(Error::Layout("phase ladder assumes two's complement".into()));
    }
    let w = span.width;
    let c = |j: usize| -> f64 {
        let v = (1u64 << j) as f64;
        if j + 1 == w {
            -v
        } else {
            v
        }
    };
    for j in 0..w {
        phase(state, span.start + j, -theta * c(j) * c(j))?;
    }
    for j in 0..w {
        for i in 0..j {
            controlled_phase(state, span.start + i, span.start + j, -2.0 * theta * c(i) * c(j))?;
        }
    }
    Ok(())
}
