//! Binary statevector and density dumps, greymap renderings and CSV series.

use crate::error::{Error, Result};
use crate::grid::SimulationBox;
use crate::layout::Convention;
use crate::observables::TimeSeries;
use crate::state::{StateVector, C64};
use std::path::Path;

pub const GWSV_MAGIC: &[u8; 4] = b"GWSV";
pub const GWSV_VERSION: u32 = 1;
pub const GWDG_MAGIC: &[u8; 4] = b"GWDG";

fn malformed(path: &str, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(malformed(self.path, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn encode_gwsv(state: &StateVector) -> Vec<u8> {
    encode_gwsv_raw(state.num_qubits(), state.amplitudes())
}

/// Dump of the first `2^qubits` amplitudes of `amps`.
pub fn encode_gwsv_raw(qubits: usize, amps: &[C64]) -> Vec<u8> {
    let amps = &amps[..1usize << qubits];
    let mut out = Vec::with_capacity(16 + 16 * amps.len());
    out.extend_from_slice(GWSV_MAGIC);
    out.extend_from_slice(&GWSV_VERSION.to_le_bytes());
    out.extend_from_slice(&(qubits as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for a in amps {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    out
}

/// Returns the qubit count and amplitudes of a statevector dump.
pub fn decode_gwsv(bytes: &[u8], path: &str) -> Result<(usize, Vec<C64>)> {
    let mut r = Reader { buf: bytes, pos: 0, path };
    if r.take(4)? != GWSV_MAGIC {
        return Err(malformed(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != GWSV_VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    let q = r.u32()? as usize;
    r.u32()?;
    if q > 40 {
        return Err(malformed(path, format!("{q} qubits")));
    }
    let n = 1usize << q;
    if bytes.len() != 16 + 16 * n {
        return Err(malformed(path, format!("expected {} bytes, found {}", 16 + 16 * n, bytes.len())));
    }
    let mut amps = Vec::with_capacity(n);
    for _ in 0..n {
        let re = r.f64()?;
        let im = r.f64()?;
        amps.push(C64::new(re, im));
    }
    Ok((q, amps))
}

pub fn write_gwsv(path: &Path, state: &StateVector) -> Result<()> {
    std::fs::write(path, encode_gwsv(state))?;
    Ok(())
}

pub fn read_gwsv(path: &Path) -> Result<(usize, Vec<C64>)> {
    let bytes = std::fs::read(path)?;
    decode_gwsv(&bytes, &path.display().to_string())
}

/// Density on a particle's grid, stored row-major with dimension 0 slowest
/// and each axis ordered by increasing coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub n_r: Vec<u32>,
    pub widths: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityGrid {
    /// Reorders a density indexed by local key (dimension 0 in the low bits).
    pub fn from_local(bx: &SimulationBox, conv: Convention, local: &[f64]) -> Result<Self> {
        let d = bx.dims();
        let n_r = bx.n_r;
        let side = 1usize << n_r;
        if local.len() != side.pow(d as u32) {
            return Err(Error::DimensionMismatch {
                left: local.len(),
                right: side.pow(d as u32),
            });
        }
        // Axis position of each raw register value when sorted by coordinate.
        let mut order: Vec<u64> = (0..side as u64).collect();
        order.sort_by_key(|&raw| conv.decode(raw, n_r));
        let mut rank = vec![0usize; side];
        for (pos, &raw) in order.iter().enumerate() {
            rank[raw as usize] = pos;
        }
        let mut values = vec![0.0; local.len()];
        for (key, &p) in local.iter().enumerate() {
            let mut idx = 0;
            for dim in 0..d {
                let raw = (key >> (dim * n_r)) & (side - 1);
                idx = idx * side + rank[raw];
            }
            values[idx] = p;
        }
        Ok(DensityGrid {
            n_r: vec![n_r as u32; d],
            widths: bx.widths.clone(),
            values,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GWDG_MAGIC);
        out.extend_from_slice(&(self.n_r.len() as u32).to_le_bytes());
        for n in &self.n_r {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for w in &self.widths {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0, path };
        if r.take(4)? != GWDG_MAGIC {
            return Err(malformed(path, "bad magic"));
        }
        let d = r.u32()? as usize;
        if d == 0 || d > 3 {
            return Err(malformed(path, format!("{d} dimensions")));
        }
        let n_r: Vec<u32> = (0..d).map(|_| r.u32()).collect::<Result<_>>()?;
        if n_r.iter().any(|&n| n == 0 || n > 26) {
            return Err(malformed(path, "register width out of range"));
        }
        let widths: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_>>()?;
        let total: usize = n_r.iter().map(|&n| 1usize << n).product();
        if bytes.len() != r.pos + 8 * total {
            return Err(malformed(path, "payload length does not match header"));
        }
        let values = (0..total).map(|_| r.f64()).collect::<Result<_>>()?;
        Ok(DensityGrid { n_r, widths, values })
    }

    fn sides(&self) -> Vec<usize> {
        self.n_r.iter().map(|&n| 1usize << n).collect()
    }

    /// Binary greymap scaled to the maximum. 1D grids give one row, 3D grids
    /// the plane through the middle of dimension 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let s = self.sides();
        let (w, h, plane): (usize, usize, Vec<f64>) = match s.len() {
            1 => (s[0], 1, self.values.clone()),
            2 => (s[1], s[0], self.values.clone()),
            _ => {
                let mid = s[0] / 2;
                let sz = s[1] * s[2];
                (s[2], s[1], self.values[mid * sz..(mid + 1) * sz].to_vec())
            }
        };
        let max = plane.iter().cloned().fold(0.0, f64::max);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for v in plane {
            let g = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
            out.push(g.clamp(0.0, 255.0) as u8);
        }
        out
    }
}

/// Parses the CSV written by [`TimeSeries::to_csv`].
pub fn parse_time_series(text: &str, label: &str, path: &str) -> Result<TimeSeries> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    let complex = match header.trim() {
        "time,value_re" => false,
        "time,value_re,value_im" => true,
        h => return Err(malformed(path, format!("unexpected header {h:?}"))),
    };
    let mut ts = TimeSeries::new(label, complex);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| malformed(path, format!("line {}: {e}", i + 2)))?;
        let want = if complex { 3 } else { 2 };
        if f.len() != want {
            return Err(malformed(path, format!("line {}: {} fields", i + 2, f.len())));
        }
        let im = if complex { f[2] } else { 0.0 };
        ts.push(f[0], C64::new(f[1], im))
            .map_err(|e| malformed(path, format!("line {}: {e}", i + 2)))?;
    }
    Ok(ts)
}
