//! Quantum Fourier transform on a sub-register.
//!
//! `QFT|k⟩ = (2ρ)^{-1/2} Σ_n exp(iπnk/ρ)|n⟩` with `2ρ = 2^w`, so applying it maps
//! momentum-space amplitudes `a_k` to real-space amplitudes `b_n`.

use crate::error::{Error, Result};
use crate::layout::{Convention, Span};
use crate::reduce::CHUNK;
use crate::state::{StateVector, C64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Momentum space to real space.
    Forward,
    /// Real space to momentum space.
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut p = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner poisoned");
    match dir {
        Direction::Forward => p.plan_fft_inverse(n),
        Direction::Inverse => p.plan_fft_forward(n),
    }
}

fn transform_lines(lines: &mut [C64], n: usize, fft: &Arc<dyn Fft<f64>>, sign: bool, global: f64) {
    let scale = global / (n as f64).sqrt();
    let group = (CHUNK / n).max(1) * n;
    lines.par_chunks_mut(group).for_each(|g| {
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if sign {
            flip_odd(g, n);
        }
        fft.process_with_scratch(g, &mut scratch);
        for a in g.iter_mut() {
            *a *= scale;
        }
        if sign {
            flip_odd(g, n);
        }
    });
}

fn flip_odd(g: &mut [C64], n: usize) {
    for line in g.chunks_mut(n) {
        for a in line.iter_mut().skip(1).step_by(2) {
            *a = -*a;
        }
    }
}

/// Applies the transform to `span` of every basis index in `amps`. The slice
/// length must be a multiple of `2^span.end()`.
pub fn qft_slice(amps: &mut [C64], span: Span, convention: Convention, dir: Direction) -> Result<()> {
    let n = 1usize << span.width;
    let stride = 1usize << span.start;
    let block = n * stride;
    if !amps.len().is_multiple_of(block) {
        return Err(Error::Layout(format!(
            "span {span:?} does not fit an amplitude slice of length {}",
            amps.len()
        )));
    }
    let fft = plan(n, dir);
    let shifted = convention == Convention::UnsignedShift;
    // The unsigned-shift labelling multiplies the kernel by (−1)^{r+r'+ρ}.
    let global = if shifted && (n / 2) % 2 == 1 { -1.0 } else { 1.0 };
    if stride == 1 {
        transform_lines(amps, n, &fft, shifted, global);
        return Ok(());
    }
    if block <= CHUNK {
        let group = (CHUNK / block).max(1) * block;
        let scale = global / (n as f64).sqrt();
        amps.par_chunks_mut(group).for_each(|g| {
            let mut buf = vec![C64::new(0.0, 0.0); block];
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for blk in g.chunks_mut(block) {
                for (lo, line) in buf.chunks_mut(n).enumerate() {
                    for (k, b) in line.iter_mut().enumerate() {
                        *b = blk[k * stride + lo];
                    }
                }
                if shifted {
                    flip_odd(&mut buf, n);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                if shifted {
                    flip_odd(&mut buf, n);
                }
                for (lo, line) in buf.chunks(n).enumerate() {
                    for (k, &b) in line.iter().enumerate() {
                        blk[k * stride + lo] = b * scale;
                    }
                }
            }
        });
        return Ok(());
    }
    let mut buf = vec![C64::new(0.0, 0.0); block];
    for blk in amps.chunks_mut(block) {
        {
            let src: &[C64] = blk;
            buf.par_chunks_mut(n).enumerate().for_each(|(lo, line)| {
                for (k, b) in line.iter_mut().enumerate() {
                    *b = src[k * stride + lo];
                }
            });
        }
        transform_lines(&mut buf, n, &fft, shifted, global);
        let t: &[C64] = &buf;
        blk.par_chunks_mut(stride).enumerate().for_each(|(k, row)| {
            for (lo, a) in row.iter_mut().enumerate() {
                *a = t[lo * n + k];
            }
        });
    }
    Ok(())
}

fn check(state: &StateVector, span: Span) -> Result<()> {
    if span.width == 0 || span.end() > state.num_qubits() {
        return Err(Error::Layout(format!("span {span:?} outside the state")));
    }
    Ok(())
}

pub fn apply_qft(state: &mut StateVector, span: Span) -> Result<()> {
    check(state, span)?;
    let conv = state.layout().convention();
    qft_slice(state.amplitudes_mut(), span, conv, Direction::Forward)
}

pub fn apply_inverse_qft(state: &mut StateVector, span: Span) -> Result<()> {
    check(state, span)?;
    let conv = state.layout().convention();
    qft_slice(state.amplitudes_mut(), span, conv, Direction::Inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::RegisterLayout;
    use std::f64::consts::PI;

    fn random_amps(n: usize, seed: u64) -> Vec<C64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                C64::new(a, b)
            })
            .collect()
    }

    fn dense(conv: Convention, w: usize, amps: &[C64], span: Span) -> Vec<C64> {
        let n = 1usize << w;
        let rho = (n / 2) as f64;
        let mut out = vec![C64::new(0.0, 0.0); amps.len()];
        for (i, &a) in amps.iter().enumerate() {
            let k = conv.decode(span.raw(i), w) as f64;
            for r in 0..n {
                let nv = conv.decode(r as u64, w) as f64;
                let j = span.with_raw(i, r as u64);
                out[j] += C64::from_polar(1.0, PI * nv * k / rho) * a / (n as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn zero_goes_to_uniform() {
        let l = std::sync::Arc::new(RegisterLayout::grid(1, 1, 3).unwrap());
        let mut s = StateVector::zero(l);
        apply_qft(&mut s, Span::new(0, 3)).unwrap();
        for a in s.amplitudes() {
            assert!((a - C64::new(8f64.sqrt().recip(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_matrix_both_conventions() {
        for conv in [Convention::TwosComplement, Convention::UnsignedShift] {
            for (w, start) in [(3, 0), (3, 2), (2, 3), (1, 1)] {
                let span = Span::new(start, w);
                let amps = random_amps(64, (w * 10 + start) as u64);
                let expect = dense(conv, w, &amps, span);
                let mut got = amps.clone();
                qft_slice(&mut got, span, conv, Direction::Forward).unwrap();
                for (g, e) in got.iter().zip(&expect) {
                    assert!((g - e).norm() < 1e-12, "{conv:?} w={w} start={start}");
                }
                qft_slice(&mut got, span, conv, Direction::Inverse).unwrap();
                for (g, e) in got.iter().zip(&amps) {
                    assert!((g - e).norm() < 1e-12);
                }
            }
        }
    }
}
