//! Diagonal phase kernel. A phase is tabulated once over every value tuple of
//! the chosen spans, then each amplitude is looked up by its span bits.

use crate::error::{Error, Result};
use crate::layout::{Convention, Span};
use crate::reduce::CHUNK;
use crate::state::{StateVector, C64};
use rayon::prelude::*;
use std::collections::HashMap;

/// Largest table a phase function may be tabulated over (in bits).
pub const MAX_TABLE_BITS: usize = 26;

/// Explicit phases for designated value tuples, used in place of the phase
/// function (e.g. at a Coulomb singularity).
pub type Overrides = HashMap<Vec<i64>, f64>;

/// Maps a basis index to the concatenated raw bits of a list of spans.
#[derive(Clone, Debug)]
pub struct SpanKey {
    spans: Vec<Span>,
    offsets: Vec<usize>,
    bits: usize,
    contiguous: Option<(usize, u64)>,
}

impl SpanKey {
    pub fn new(spans: &[Span]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(spans.len());
        let mut bits = 0;
        for (i, s) in spans.iter().enumerate() {
            if s.width == 0 {
                return Err(Error::Layout("zero-width span".into()));
            }
            for t in &spans[i + 1..] {
                if s.overlaps(t) {
                    return Err(Error::Layout(format!("spans {s:?} and {t:?} overlap")));
                }
            }
            offsets.push(bits);
            bits += s.width;
        }
        if bits > MAX_TABLE_BITS {
            return Err(Error::Layout(format!(
                "phase domain of {bits} bits exceeds {MAX_TABLE_BITS}"
            )));
        }
        let adjacent = spans.windows(2).all(|w| w[0].end() == w[1].start);
        let contiguous = (adjacent && !spans.is_empty())
            .then(|| (spans[0].start, (1u64 << bits) - 1));
        Ok(SpanKey {
            spans: spans.to_vec(),
            offsets,
            bits,
            contiguous,
        })
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Number of distinct keys.
    pub fn len(&self) -> usize {
        1usize << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Highest qubit touched plus one.
    pub fn reach(&self) -> usize {
        self.spans.iter().map(|s| s.end()).max().unwrap_or(0)
    }

    #[inline]
    pub fn key(&self, index: usize) -> usize {
        if let Some((start, mask)) = self.contiguous {
            return (((index as u64) >> start) & mask) as usize;
        }
        let mut k = 0u64;
        for (s, &o) in self.spans.iter().zip(&self.offsets) {
            k |= s.raw(index) << o;
        }
        k as usize
    }

    /// Signed value tuple for `key`.
    pub fn values(&self, key: usize, convention: Convention, out: &mut Vec<i64>) {
        out.clear();
        for (s, &o) in self.spans.iter().zip(&self.offsets) {
            let raw = ((key as u64) >> o) & s.mask();
            out.push(convention.decode(raw, s.width));
        }
    }
}

/// `exp(−iθ)` tabulated over a span domain.
#[derive(Clone, Debug)]
pub struct PhaseTable {
    key: SpanKey,
    factors: Vec<C64>,
}

impl PhaseTable {
    /// Tabulates `phase_fn`, failing with the offending tuple if it is not
    /// finite anywhere outside `overrides`.
    pub fn build<F>(
        spans: &[Span],
        convention: Convention,
        phase_fn: F,
        overrides: &Overrides,
    ) -> Result<Self>
    where
        F: Fn(&[i64]) -> f64 + Sync,
    {
        let thetas = tabulate(spans, convention, phase_fn, overrides)?;
        let key = SpanKey::new(spans)?;
        let factors = thetas
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|t| C64::from_polar(1.0, -t))
            .collect();
        Ok(PhaseTable { key, factors })
    }

    /// Table that multiplies by `factor[key]` directly.
    pub fn from_factors(spans: &[Span], factors: Vec<C64>) -> Result<Self> {
        let key = SpanKey::new(spans)?;
        if factors.len() != key.len() {
            return Err(Error::DimensionMismatch {
                left: factors.len(),
                right: key.len(),
            });
        }
        Ok(PhaseTable { key, factors })
    }

    pub fn key(&self) -> &SpanKey {
        &self.key
    }

    pub fn factors(&self) -> &[C64] {
        &self.factors
    }

    /// Multiplies every amplitude of `amps` by its tabulated factor.
    pub fn apply(&self, amps: &mut [C64]) {
        let key = &self.key;
        let f = &self.factors;
        amps.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (j, a) in chunk.iter_mut().enumerate() {
                *a *= f[key.key(base + j)];
            }
        });
    }

    /// Multiplies by the conjugate factors, undoing [`PhaseTable::apply`].
    pub fn apply_conj(&self, amps: &mut [C64]) {
        let key = &self.key;
        let f = &self.factors;
        amps.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (j, a) in chunk.iter_mut().enumerate() {
                *a *= f[key.key(base + j)].conj();
            }
        });
    }
}

/// Evaluates a real function on every value tuple of `spans`, honouring
/// overrides and rejecting non-finite values.
pub fn tabulate<F>(
    spans: &[Span],
    convention: Convention,
    f: F,
    overrides: &Overrides,
) -> Result<Vec<f64>>
where
    F: Fn(&[i64]) -> f64 + Sync,
{
    let key = SpanKey::new(spans)?;
    let vals: Vec<std::result::Result<f64, Vec<i64>>> = (0..key.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map_init(Vec::new, |buf, k| {
            key.values(k, convention, buf);
            if let Some(&t) = overrides.get(buf.as_slice()) {
                return Ok(t);
            }
            let t = f(buf);
            if t.is_finite() {
                Ok(t)
            } else {
                Err(buf.clone())
            }
        })
        .collect();
    let mut out = Vec::with_capacity(vals.len());
    for v in vals {
        match v {
            Ok(t) => out.push(t),
            Err(values) => return Err(Error::Singularity { values }),
        }
    }
    Ok(out)
}

/// Multiplies amplitude `i` by `exp(−iθ(values(i)))`. The state is left
/// untouched if tabulation fails.
pub fn apply_diagonal_phase<F>(
    state: &mut StateVector,
    spans: &[Span],
    phase_fn: F,
    overrides: &Overrides,
) -> Result<()>
where
    F: Fn(&[i64]) -> f64 + Sync,
{
    if let Some(s) = spans.iter().find(|s| s.end() > state.num_qubits()) {
        return Err(Error::Layout(format!("span {s:?} outside the state")));
    }
    let conv = state.layout().convention();
    let table = PhaseTable::build(spans, conv, phase_fn, overrides)?;
    table.apply(state.amplitudes_mut());
    Ok(())
}
