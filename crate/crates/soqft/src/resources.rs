//! Closed-form qubit and gate-depth estimates for molecular targets.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Cycles for a fast event such as ionisation.
pub const FAST_CYCLES: u64 = 1_000;
/// Cycles for slow dynamics following a fast event.
pub const SLOW_CYCLES: u64 = 100_000;
/// Gate depth of one parallelised sub-step, in units of `n_r²`.
pub const SUBSTEP_GATES_PER_NR2: u64 = 10;
/// Sub-steps per electron pairing stage.
pub const SUBSTEPS_PER_STAGE: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub name: String,
    /// Electrons plus explicitly simulated nuclei.
    pub particles: u64,
    pub electrons: u64,
    pub z_max: u64,
    pub c3: f64,
    #[serde(default)]
    pub n_r_override: Option<u64>,
}

impl MoleculeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.z_max == 0 {
            return Err(Error::InvalidParameter("need P ≥ 1 and Z_max ≥ 1".into()));
        }
        if self.electrons > self.particles {
            return Err(Error::InvalidParameter("more electrons than particles".into()));
        }
        if !self.c3.is_finite() {
            return Err(Error::InvalidParameter(format!("C3 = {}", self.c3)));
        }
        Ok(())
    }

    pub fn ammonia() -> Self {
        MoleculeSpec {
            name: "NH3".into(),
            particles: 14,
            electrons: 10,
            z_max: 7,
            c3: 6.0,
            n_r_override: None,
        }
    }

    pub fn hexafluoroethane() -> Self {
        MoleculeSpec {
            name: "C2F6".into(),
            particles: 74,
            electrons: 66,
            z_max: 9,
            c3: 5.0,
            n_r_override: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nh3" | "ammonia" => Some(Self::ammonia()),
            "c2f6" | "hexafluoroethane" => Some(Self::hexafluoroethane()),
            _ => None,
        }
    }
}

/// `n_r = round(C3 + log2 Z_max + log2(P)/3)` unless overridden. Returns
/// `(n_r, 3·P·n_r)`.
pub fn qubits_required(spec: &MoleculeSpec) -> Result<(u64, u64)> {
    spec.validate()?;
    let n_r = match spec.n_r_override {
        Some(n) => n,
        None => {
            let raw = spec.c3 + (spec.z_max as f64).log2() + (spec.particles as f64).log2() / 3.0;
            if raw < 0.5 {
                return Err(Error::InvalidParameter(format!("n_r evaluates to {raw}")));
            }
            raw.round() as u64
        }
    };
    Ok((n_r, 3 * spec.particles * n_r))
}

/// Depth of one cycle: `P_e − 1` pairing stages of `4` sub-steps, each costing
/// `10·n_r²`.
pub fn cycle_depth(n_r: u64, electrons: u64) -> u64 {
    let stages = electrons.saturating_sub(1).max(1);
    SUBSTEPS_PER_STAGE * stages * SUBSTEP_GATES_PER_NR2 * n_r * n_r
}

pub fn gate_depth_estimate(n_r: u64, electrons: u64, cycles: u64) -> u64 {
    cycles * cycle_depth(n_r, electrons)
}

/// Smallest power of ten not below `x`.
pub fn order_of_magnitude(x: f64) -> i32 {
    if x <= 0.0 {
        return 0;
    }
    x.log10().ceil() as i32
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResourceReport {
    pub molecule: String,
    pub particles: u64,
    pub z_max: u64,
    pub n_r: u64,
    pub qubits: u64,
    pub depth_per_cycle: u64,
    pub depth_fast: u64,
    pub depth_slow: u64,
}

impl ResourceReport {
    pub fn new(spec: &MoleculeSpec) -> Result<Self> {
        let (n_r, qubits) = qubits_required(spec)?;
        let per = cycle_depth(n_r, spec.electrons.max(1));
        Ok(ResourceReport {
            molecule: spec.name.clone(),
            particles: spec.particles,
            z_max: spec.z_max,
            n_r,
            qubits,
            depth_per_cycle: per,
            depth_fast: per * FAST_CYCLES,
            depth_slow: per * SLOW_CYCLES,
        })
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}: P = {}, Z_max = {}", self.molecule, self.particles, self.z_max);
        let _ = writeln!(s, "  n_r = {}, computational qubits = {}", self.n_r, self.qubits);
        let _ = writeln!(
            s,
            "  depth per cycle = {:.2e} (at most 1e{})",
            self.depth_per_cycle as f64,
            order_of_magnitude(self.depth_per_cycle as f64)
        );
        let _ = writeln!(
            s,
            "  fast event ({FAST_CYCLES} cycles) = {:.2e}",
            self.depth_fast as f64
        );
        let _ = writeln!(
            s,
            "  slow event ({SLOW_CYCLES} cycles) = {:.2e}",
            self.depth_slow as f64
        );
        s
    }
}

pub const CSV_HEADER: &str = "molecule,P,Z_max,n_r,qubits,depth_fast,depth_slow";

pub fn reports_csv(reports: &[ResourceReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.molecule, r.particles, r.z_max, r.n_r, r.qubits, r.depth_fast, r.depth_slow
        );
    }
    s
}

/// One atom's outermost occupied hydrogen-like shell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellAtom {
    pub position: [f64; 3],
    /// Principal quantum number of the outer shell.
    pub n: u32,
    /// Effective (shielded) charge seen by that shell.
    pub z_eff: f64,
    /// Electrons in the shell.
    pub occupancy: f64,
}

impl ShellAtom {
    /// Density of a nodeless `l = n − 1` shell at distance `r`.
    pub fn density(&self, r: f64) -> f64 {
        let n = self.n as f64;
        let a = 2.0 * self.z_eff / n;
        let fact: f64 = (1..=2 * self.n).map(|k| k as f64).product();
        self.occupancy * a.powf(2.0 * n + 1.0) * r.powf(2.0 * n - 2.0) * (-a * r).exp() / (fact * 4.0 * PI)
    }
}

/// Largest summed shell density found on the faces of a cube of side `l`
/// centred on the origin, sampled on `samples × samples` points per face.
/// Heuristic: shells are treated independently.
pub fn max_surface_density(atoms: &[ShellAtom], l: f64, samples: usize) -> f64 {
    let h = l / 2.0;
    let samples = samples.max(2);
    let mut best = 0.0f64;
    for face in 0..6 {
        let axis = face / 2;
        let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
        for i in 0..samples {
            for j in 0..samples {
                let u = -h + l * i as f64 / (samples - 1) as f64;
                let v = -h + l * j as f64 / (samples - 1) as f64;
                let mut p = [0.0; 3];
                p[axis] = sign * h;
                p[(axis + 1) % 3] = u;
                p[(axis + 2) % 3] = v;
                let rho: f64 = atoms
                    .iter()
                    .map(|a| {
                        let d = ((p[0] - a.position[0]).powi(2)
                            + (p[1] - a.position[1]).powi(2)
                            + (p[2] - a.position[2]).powi(2))
                        .sqrt();
                        a.density(d)
                    })
                    .sum();
                best = best.max(rho);
            }
        }
    }
    best
}

/// Reference threshold: two `n = 2` electrons around a bare `Z = 2` nucleus
/// in a box of side 25.
pub fn helium_reference_density() -> f64 {
    let he = ShellAtom {
        position: [0.0; 3],
        n: 2,
        z_eff: 2.0,
        occupancy: 2.0,
    };
    max_surface_density(&[he], 25.0, 41)
}

/// Smallest box side whose surface density does not exceed `rho0`.
pub fn box_side_for(atoms: &[ShellAtom], rho0: f64) -> Result<f64> {
    if atoms.is_empty() || !(rho0 > 0.0) {
        return Err(Error::InvalidParameter("need atoms and a positive threshold".into()));
    }
    let f = |l: f64| max_surface_density(atoms, l, 41) - rho0;
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Unresolvable("no box side meets the threshold".into()));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `n_r` from a reference resolution: the grid must grow by `Z_max` times the
/// box-side ratio, rounded up to a power of two.
pub fn n_r_from_box(reference_n_r: u64, z_max: u64, side_ratio: f64) -> u64 {
    let factor = side_ratio * z_max as f64;
    reference_n_r + factor.log2().ceil().max(0.0) as u64
}
