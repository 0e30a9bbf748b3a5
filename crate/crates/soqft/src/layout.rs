//! Qubit bookkeeping: which qubits hold which particle coordinate or ancilla.
//!
//! Qubit `q` is bit `q` of the basis index. Particle registers are packed from
//! qubit 0 upwards (dimension 0 lowest within each particle), ancillas above.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub width: usize,
}

impl Span {
    pub fn new(start: usize, width: usize) -> Self {
        Span { start, width }
    }

    pub fn end(&self) -> usize {
        self.start + self.width
    }

    pub fn mask(&self) -> u64 {
        if self.width >= 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }

    pub fn contains(&self, qubit: usize) -> bool {
        qubit >= self.start && qubit < self.end()
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end() && other.start < self.end()
    }

    /// Raw (unsigned) bits of this span inside a basis index.
    #[inline]
    pub fn raw(&self, index: usize) -> u64 {
        ((index as u64) >> self.start) & self.mask()
    }

    #[inline]
    pub fn with_raw(&self, index: usize, raw: u64) -> usize {
        let cleared = (index as u64) & !(self.mask() << self.start);
        (cleared | ((raw & self.mask()) << self.start)) as usize
    }
}

/// How a register's raw bits map to a signed coordinate index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    #[default]
    TwosComplement,
    /// Raw value `r` stands for `r - 2^(w-1)`.
    UnsignedShift,
}

impl Convention {
    #[inline]
    pub fn decode(self, raw: u64, width: usize) -> i64 {
        let half = 1i64 << (width - 1);
        match self {
            Convention::TwosComplement => {
                let v = raw as i64;
                if v >= half {
                    v - 2 * half
                } else {
                    v
                }
            }
            Convention::UnsignedShift => raw as i64 - half,
        }
    }

    /// Encodes `value`, wrapping modulo `2^width` into the representable range.
    #[inline]
    pub fn encode(self, value: i64, width: usize) -> u64 {
        let modulus = 1i64 << width;
        let half = modulus / 2;
        let shifted = match self {
            Convention::TwosComplement => value,
            Convention::UnsignedShift => value + half,
        };
        shifted.rem_euclid(modulus) as u64
    }

    #[inline]
    pub fn wrap(value: i64, width: usize) -> i64 {
        let modulus = 1i64 << width;
        let half = modulus / 2;
        (value + half).rem_euclid(modulus) - half
    }
}

/// Returns the two's-complement value held in `n_r` bits starting at `start_qubit`.
pub fn get_reg_val(basis_index: u64, start_qubit: usize, n_r: usize) -> i64 {
    let mut val: i64 = 0;
    for j in 0..n_r {
        if (basis_index >> (start_qubit + j)) & 1 == 1 {
            val += 1 << j;
        }
    }
    if (basis_index >> (start_qubit + n_r - 1)) & 1 == 1 {
        val -= 1 << n_r;
    }
    val
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleRegister {
    pub dims: Vec<Span>,
}

impl ParticleRegister {
    pub fn n_r(&self) -> usize {
        self.dims[0].width
    }

    /// The contiguous qubit range covering all dimensions.
    pub fn span(&self) -> Span {
        let start = self.dims.iter().map(|s| s.start).min().unwrap();
        let end = self.dims.iter().map(|s| s.end()).max().unwrap();
        Span::new(start, end - start)
    }

    pub fn is_contiguous(&self) -> bool {
        self.dims
            .windows(2)
            .all(|w| w[1].start == w[0].end())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ancilla {
    pub name: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    particles: Vec<ParticleRegister>,
    ancillas: Vec<Ancilla>,
    convention: Convention,
    num_qubits: usize,
}

impl RegisterLayout {
    pub fn new(
        particles: Vec<ParticleRegister>,
        ancillas: Vec<Ancilla>,
        convention: Convention,
        num_qubits: usize,
    ) -> Result<Self> {
        let mut spans: Vec<Span> = Vec::new();
        for (p, reg) in particles.iter().enumerate() {
            if reg.dims.is_empty() {
                return Err(Error::Layout(format!("particle {p} has no sub-registers")));
            }
            let w = reg.dims[0].width;
            if w == 0 {
                return Err(Error::Layout(format!("particle {p} has zero-width sub-register")));
            }
            if reg.dims.iter().any(|s| s.width != w) {
                return Err(Error::Layout(format!(
                    "particle {p} has sub-registers of unequal width"
                )));
            }
            spans.extend(reg.dims.iter().copied());
        }
        for a in &ancillas {
            if a.span.width == 0 {
                return Err(Error::Layout(format!("ancilla {} has zero width", a.name)));
            }
            spans.push(a.span);
        }
        for (i, s) in spans.iter().enumerate() {
            if s.end() > num_qubits {
                return Err(Error::Layout(format!(
                    "span {s:?} exceeds {num_qubits} qubits"
                )));
            }
            for t in &spans[i + 1..] {
                if s.overlaps(t) {
                    return Err(Error::Layout(format!("spans {s:?} and {t:?} overlap")));
                }
            }
        }
        if num_qubits > 40 {
            return Err(Error::Layout(format!("{num_qubits} qubits cannot be stored")));
        }
        Ok(RegisterLayout {
            particles,
            ancillas,
            convention,
            num_qubits,
        })
    }

    /// `num_particles` particles with `dims` sub-registers of `n_r` qubits each.
    pub fn grid(num_particles: usize, dims: usize, n_r: usize) -> Result<Self> {
        let mut particles = Vec::with_capacity(num_particles);
        let mut q = 0;
        for _ in 0..num_particles {
            let mut d = Vec::with_capacity(dims);
            for _ in 0..dims {
                d.push(Span::new(q, n_r));
                q += n_r;
            }
            particles.push(ParticleRegister { dims: d });
        }
        RegisterLayout::new(particles, Vec::new(), Convention::TwosComplement, q)
    }

    /// Appends an ancilla of `width` qubits above every existing qubit.
    pub fn with_ancilla(mut self, name: &str, width: usize) -> Result<Self> {
        if self.ancilla(name).is_some() {
            return Err(Error::Layout(format!("ancilla {name} already present")));
        }
        self.ancillas.push(Ancilla {
            name: name.to_string(),
            span: Span::new(self.num_qubits, width),
        });
        let n = self.num_qubits + width;
        RegisterLayout::new(self.particles, self.ancillas, self.convention, n)
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1usize << self.num_qubits
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn particles(&self) -> &[ParticleRegister] {
        &self.particles
    }

    pub fn num_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn particle(&self, p: usize) -> Result<&ParticleRegister> {
        self.particles
            .get(p)
            .ok_or_else(|| Error::Layout(format!("no particle {p}")))
    }

    pub fn ancillas(&self) -> &[Ancilla] {
        &self.ancillas
    }

    pub fn ancilla(&self, name: &str) -> Option<&Ancilla> {
        self.ancillas.iter().find(|a| a.name == name)
    }

    pub fn ancilla_span(&self, name: &str) -> Result<Span> {
        self.ancilla(name)
            .map(|a| a.span)
            .ok_or_else(|| Error::Layout(format!("no ancilla named {name}")))
    }

    /// Spatial dimensions per particle (all particles must agree).
    pub fn dims(&self) -> usize {
        self.particles.first().map_or(0, |p| p.dims.len())
    }

    /// Common sub-register width, if every particle has the same one.
    pub fn n_r(&self) -> Option<usize> {
        let w = self.particles.first()?.n_r();
        self.particles.iter().all(|p| p.n_r() == w).then_some(w)
    }

    /// Number of low qubits occupied by particle registers when they are
    /// packed contiguously from qubit 0.
    pub fn system_qubits(&self) -> Result<usize> {
        let mut q = 0;
        for (p, reg) in self.particles.iter().enumerate() {
            for s in &reg.dims {
                if s.start != q {
                    return Err(Error::Layout(format!(
                        "particle {p} is not packed contiguously from qubit 0"
                    )));
                }
                q = s.end();
            }
        }
        Ok(q)
    }

    /// True if `qubit` belongs to some particle register.
    pub fn is_particle_qubit(&self, qubit: usize) -> bool {
        self.particles
            .iter()
            .any(|p| p.dims.iter().any(|s| s.contains(qubit)))
    }

    /// The layout seen by an operation that excludes `qubit` (used for controls).
    pub fn without_qubit(&self, qubit: usize) -> Result<RegisterLayout> {
        if qubit >= self.num_qubits {
            return Err(Error::Layout(format!("qubit {qubit} out of range")));
        }
        if self.is_particle_qubit(qubit) {
            return Err(Error::Layout(format!(
                "qubit {qubit} lies inside a particle register"
            )));
        }
        let shift = |s: Span| -> Span {
            if s.start > qubit {
                Span::new(s.start - 1, s.width)
            } else {
                s
            }
        };
        let particles = self
            .particles
            .iter()
            .map(|p| ParticleRegister {
                dims: p.dims.iter().map(|&s| shift(s)).collect(),
            })
            .collect();
        let mut ancillas = Vec::new();
        for a in &self.ancillas {
            if a.span.contains(qubit) {
                if a.span.width > 1 {
                    ancillas.push(Ancilla {
                        name: a.name.clone(),
                        span: Span::new(a.span.start, a.span.width - 1),
                    });
                }
            } else {
                ancillas.push(Ancilla {
                    name: a.name.clone(),
                    span: shift(a.span),
                });
            }
        }
        RegisterLayout::new(particles, ancillas, self.convention, self.num_qubits - 1)
    }

    /// Layout with every sub-register of `particle` widened by `extra` qubits;
    /// all higher spans move up accordingly.
    pub fn with_enlarged_particle(&self, particle: usize, extra: usize) -> Result<RegisterLayout> {
        self.particle(particle)?;
        let mut bumps: Vec<(usize, usize)> = Vec::new();
        for s in &self.particles[particle].dims {
            bumps.push((s.end(), extra));
        }
        let moved = |q: usize| -> usize {
            q + bumps.iter().filter(|(at, _)| *at <= q).map(|(_, e)| e).sum::<usize>()
        };
        let particles = self
            .particles
            .iter()
            .enumerate()
            .map(|(p, reg)| ParticleRegister {
                dims: reg
                    .dims
                    .iter()
                    .map(|s| {
                        let start = moved(s.start);
                        let width = if p == particle { s.width + extra } else { s.width };
                        Span::new(start, width)
                    })
                    .collect(),
            })
            .collect();
        let ancillas = self
            .ancillas
            .iter()
            .map(|a| Ancilla {
                name: a.name.clone(),
                span: Span::new(moved(a.span.start), a.span.width),
            })
            .collect();
        let added = extra * self.particles[particle].dims.len();
        RegisterLayout::new(particles, ancillas, self.convention, self.num_qubits + added)
    }
}
