//! Declarative scenarios: TOML configuration, the prep → propagate →
//! observe pipeline, output artifacts and run manifests.
//!
//! A scenario file has top-level `name`, `description`, `seed` and
//! `extended` keys and the sections `[box]`, `[[particles]]`,
//! `[hamiltonian]`, `[initial]`, `[plan]`, `[observables]`, `[prep]` and
//! `[sweep]`. See the bundled files under `scenarios/` for complete examples.

use crate::aso::{derive_aso_restricted, CorePatch};
use crate::error::{Error, Result};
use crate::grid::{self, discretize, AnalyticState, Gaussian1D, SimulationBox};
use crate::hamiltonian::{AttenuationSpec, HamiltonianSpec, Nucleus, ParticleSpec, PixelHamiltonian, SingularityPolicy};
use crate::io::{self, DensityGrid};
use crate::layout::{Convention, RegisterLayout};
use crate::observables::{self, EnergyEstimate, FitOptions, IpeTracker, TimeSeries};
use crate::prep::{self, PiteParams, SynthSpectrum};
use crate::propagator::{MeasurementMode, PlanChange, Propagator, SoStepPlan, CAP_ANCILLA};
use crate::state::{StateVector, C64};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable overriding the emulation ceiling.
pub const CEILING_VAR: &str = "SOQFT_MAX_QUBITS";
pub const DEFAULT_CEILING: usize = 26;

pub fn qubit_ceiling() -> usize {
    std::env::var(CEILING_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_CEILING)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub extended: bool,
    #[serde(rename = "box")]
    pub sim_box: BoxConfig,
    pub particles: Vec<ParticleSpec>,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub dims: usize,
    pub width: f64,
    pub n_r: usize,
    #[serde(default = "half")]
    pub origin_offset: f64,
    #[serde(default)]
    pub convention: Convention,
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default)]
    pub nuclei: Vec<Nucleus>,
    #[serde(default)]
    pub pair_couplings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub field: Vec<f64>,
    #[serde(default)]
    pub attenuation: Option<AttenuationSpec>,
    #[serde(default)]
    pub singularity: SingularityPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateConfig {
    Hydrogen2d { n: u32, m: i32 },
    Hydrogen3d { n: u32, l: u32, m: i32, z: f64 },
    Gaussian { packets: Vec<PacketConfig> },
    Superposition { terms: Vec<TermConfig> },
    /// A single grid pixel, by signed register value per dimension.
    Pixel { values: Vec<i64> },
    /// A discrete plane wave, by signed momentum index per dimension.
    PlaneWave { k: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    #[serde(default)]
    pub x_c: f64,
    #[serde(default)]
    pub p_c: f64,
    pub alpha: [f64; 2],
    #[serde(default)]
    pub gamma: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub weight: [f64; 2],
    pub state: StateConfig,
}

impl StateConfig {
    pub fn analytic(&self) -> Option<AnalyticState> {
        Some(match self {
            StateConfig::Hydrogen2d { n, m } => AnalyticState::Hydrogen2D { n: *n, m: *m },
            StateConfig::Hydrogen3d { n, l, m, z } => AnalyticState::Hydrogen3D {
                n: *n,
                l: *l,
                m: *m,
                z: *z,
            },
            StateConfig::Gaussian { packets } => AnalyticState::Gaussian(
                packets
                    .iter()
                    .map(|p| Gaussian1D {
                        x_c: p.x_c,
                        p_c: p.p_c,
                        alpha: C64::new(p.alpha[0], p.alpha[1]),
                        gamma: C64::new(p.gamma[0], p.gamma[1]),
                    })
                    .collect(),
            ),
            StateConfig::Superposition { terms } => {
                let mut out = Vec::with_capacity(terms.len());
                for t in terms {
                    out.push((C64::new(t.weight[0], t.weight[1]), t.state.analytic()?));
                }
                AnalyticState::Superposition(out)
            }
            StateConfig::Pixel { .. } | StateConfig::PlaneWave { .. } => return None,
        })
    }

    /// Unit-norm single-particle amplitudes in local key order.
    pub fn amplitudes(&self, bx: &SimulationBox, conv: Convention) -> Result<Vec<C64>> {
        let d = bx.dims();
        let side = 1usize << bx.n_r;
        let size = side.pow(d as u32);
        let check = |v: &[i64]| -> Result<()> {
            let range = bx.value_range();
            if v.len() != d || v.iter().any(|x| !range.contains(x)) {
                return Err(Error::Config(format!("register values {v:?} outside the box")));
            }
            Ok(())
        };
        match self {
            StateConfig::Pixel { values } => {
                check(values)?;
                let mut a = vec![C64::new(0.0, 0.0); size];
                let key = values
                    .iter()
                    .enumerate()
                    .fold(0usize, |k, (dim, &v)| k | ((conv.encode(v, bx.n_r) as usize) << (dim * bx.n_r)));
                a[key] = C64::new(1.0, 0.0);
                Ok(a)
            }
            StateConfig::PlaneWave { k } => {
                check(k)?;
                let rho = (side / 2) as f64;
                let norm = 1.0 / (size as f64).sqrt();
                Ok((0..size)
                    .map(|key| {
                        let phase: f64 = (0..d)
                            .map(|dim| {
                                let raw = ((key >> (dim * bx.n_r)) & (side - 1)) as u64;
                                let n = conv.decode(raw, bx.n_r) as f64;
                                std::f64::consts::PI * n * k[dim] as f64 / rho
                            })
                            .sum();
                        C64::from_polar(norm, phase)
                    })
                    .collect())
            }
            _ => {
                let a = self.analytic().expect("analytic variant");
                let disc = discretize(&a, bx, conv)?;
                for w in &disc.warnings {
                    log::warn!("initial state: {w:?}");
                }
                Ok(disc.amplitudes)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exchange {
    #[default]
    Product,
    Antisymmetric,
    Symmetric,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub states: Vec<StateConfig>,
    #[serde(default)]
    pub exchange: Exchange,
    /// Statevector dump to load instead of `states`.
    #[serde(default)]
    pub file: Option<String>,
    /// Replace the prepared state by the lowest pixel-Hamiltonian
    /// eigenvector, using it as the Lanczos start.
    #[serde(default)]
    pub pixel_ground: bool,
    #[serde(default = "krylov")]
    pub krylov: usize,
    /// Project every single-particle state onto an eigenspace of its own
    /// unitary cycle before building the many-particle state.
    #[serde(default)]
    pub stationary: bool,
}

fn krylov() -> usize {
    400
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub steps: usize,
    #[serde(default)]
    pub attenuation: bool,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub aso: Option<AsoConfig>,
    #[serde(default)]
    pub changes: Vec<ChangeConfig>,
}

fn default_dt() -> f64 {
    1e-3
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            dt: default_dt(),
            steps: 0,
            attenuation: false,
            measurement: MeasurementConfig::Forced,
            aso: None,
            changes: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementConfig {
    #[default]
    Forced,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsoConfig {
    pub n_l: usize,
    #[serde(default)]
    pub particle: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeConfig {
    /// Applied before this (zero-based) step.
    pub step: usize,
    #[serde(flatten)]
    pub action: ChangeAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum ChangeAction {
    SetDt { dt: f64 },
    DetachAso,
    DropPairs { particle: usize },
    Enlarge { extra: usize },
}

impl ChangeAction {
    fn to_change(&self) -> PlanChange {
        match self {
            ChangeAction::SetDt { dt } => PlanChange::SetDt(*dt),
            ChangeAction::DetachAso => PlanChange::DetachAso,
            ChangeAction::DropPairs { particle } => PlanChange::DropPairs { particle: *particle },
            ChangeAction::Enlarge { extra } => PlanChange::Enlarge { extra: *extra },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    /// Autocorrelation cadence in steps; 0 disables.
    #[serde(default)]
    pub autocorrelation_every: usize,
    /// IPE sampling cadence in steps; 0 disables.
    #[serde(default)]
    pub ipe_every: usize,
    /// Shots per IPE point; 0 records the exact probability.
    #[serde(default)]
    pub ipe_shots: usize,
    #[serde(default)]
    pub fit_energy: bool,
    /// Number of Fourier peaks to extract from the IPE signal.
    #[serde(default)]
    pub fourier_peaks: usize,
    /// Steps at which particle densities are dumped (step 0 is always written).
    #[serde(default)]
    pub density_steps: Vec<usize>,
    #[serde(default = "yes")]
    pub pgm: bool,
    #[serde(default)]
    pub escape: bool,
    #[serde(default)]
    pub sampled_energy_every: usize,
    /// Shots for the sampled energy; 0 records the exact expectation.
    #[serde(default)]
    pub sampled_energy_shots: usize,
    /// Cadence for the Bhattacharyya coefficient of particle 0 against its
    /// initial density; 0 disables.
    #[serde(default)]
    pub bhattacharyya_every: usize,
    /// Write the particle registers of the final state to `final_state.gwsv`.
    #[serde(default)]
    pub final_state: bool,
}

fn yes() -> bool {
    true
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            autocorrelation_every: 0,
            ipe_every: 0,
            ipe_shots: 0,
            fit_energy: false,
            fourier_peaks: 0,
            density_steps: Vec::new(),
            pgm: true,
            escape: false,
            sampled_energy_every: 0,
            sampled_energy_shots: 0,
            bhattacharyya_every: 0,
            final_state: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrepConfig {
    #[default]
    None,
    StateEdit {
        energy: f64,
    },
    Pite {
        m0: f64,
        steps: usize,
        #[serde(default = "one")]
        cadence: usize,
        #[serde(default)]
        references: Vec<StateConfig>,
        /// Also track the overlap with the pixel-Hamiltonian ground state.
        #[serde(default)]
        ground_reference: bool,
    },
    Antisymmetrize {
        energies: Vec<f64>,
        tag_width: usize,
        #[serde(default)]
        symmetric: bool,
    },
}

fn one() -> usize {
    1
}

/// One swept parameter; each value gives a separate variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub n_r: Option<Vec<usize>>,
    #[serde(default)]
    pub dt: Option<Vec<f64>>,
    #[serde(default)]
    pub origin_offset: Option<Vec<f64>>,
    #[serde(default)]
    pub width: Option<Vec<f64>>,
    /// Patch sizes for augmentation; 0 runs without.
    #[serde(default)]
    pub aso_n_l: Option<Vec<usize>>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialisation with the seed cleared.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.seed = 0;
        Ok(hex(&Sha256::digest(c.to_toml()?.as_bytes())))
    }

    /// The concrete runs this configuration expands to, labelled.
    pub fn variants(&self) -> Result<Vec<(String, ScenarioConfig)>> {
        let Some(sw) = &self.sweep else {
            return Ok(vec![(String::new(), self.clone())]);
        };
        let set = [
            sw.n_r.is_some(),
            sw.dt.is_some(),
            sw.origin_offset.is_some(),
            sw.width.is_some(),
            sw.aso_n_l.is_some(),
        ];
        if set.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::Config("sweep: set exactly one parameter".into()));
        }
        let mut out = Vec::new();
        let base = |f: &dyn Fn(&mut ScenarioConfig)| {
            let mut c = self.clone();
            c.sweep = None;
            f(&mut c);
            c
        };
        if let Some(v) = &sw.n_r {
            for &n in v {
                out.push((format!("n_r={n}"), base(&|c| c.sim_box.n_r = n)));
            }
        }
        if let Some(v) = &sw.dt {
            for &dt in v {
                let steps = self.plan.steps as f64 * self.plan.dt / dt;
                out.push((
                    format!("dt={dt}"),
                    base(&|c| {
                        c.plan.dt = dt;
                        c.plan.steps = steps.round() as usize;
                        let scale = self.plan.dt / dt;
                        c.observables.ipe_every = scaled(self.observables.ipe_every, scale);
                        c.observables.autocorrelation_every = scaled(self.observables.autocorrelation_every, scale);
                        c.observables.sampled_energy_every = scaled(self.observables.sampled_energy_every, scale);
                    }),
                ));
            }
        }
        if let Some(v) = &sw.origin_offset {
            for &o in v {
                out.push((format!("origin_offset={o}"), base(&|c| c.sim_box.origin_offset = o)));
            }
        }
        if let Some(v) = &sw.width {
            for &w in v {
                out.push((format!("width={w}"), base(&|c| c.sim_box.width = w)));
            }
        }
        if let Some(v) = &sw.aso_n_l {
            for &n in v {
                out.push((
                    format!("aso_n_l={n}"),
                    base(&|c| {
                        c.plan.aso = (n > 0).then_some(AsoConfig { n_l: n, particle: 0 });
                    }),
                ));
            }
        }
        Ok(out)
    }

    pub fn simulation_box(&self) -> Result<SimulationBox> {
        let b = &self.sim_box;
        SimulationBox::new(b.dims, b.width, b.n_r, b.origin_offset)
    }

    pub fn hamiltonian(&self) -> HamiltonianSpec {
        let h = &self.hamiltonian;
        HamiltonianSpec {
            particles: self.particles.clone(),
            nuclei: h.nuclei.clone(),
            pair_couplings: h.pair_couplings.clone(),
            field: h.field.clone(),
            attenuation: h.attenuation.clone(),
            singularity: h.singularity,
        }
    }

    pub fn system_layout(&self) -> Result<RegisterLayout> {
        Ok(RegisterLayout::grid(self.particles.len(), self.sim_box.dims, self.sim_box.n_r)?
            .with_convention(self.sim_box.convention))
    }

    /// Largest number of qubits held at once by any stage.
    pub fn peak_qubits(&self) -> usize {
        let sys = self.particles.len() * self.sim_box.dims * self.sim_box.n_r;
        let mut peak = sys + usize::from(self.plan.attenuation);
        if self.observables.ipe_every > 0 {
            peak = peak.max(sys + 1);
        }
        let prep = match &self.prep {
            PrepConfig::None => 0,
            PrepConfig::StateEdit { .. } | PrepConfig::Pite { .. } => 1,
            PrepConfig::Antisymmetrize { tag_width, .. } => self.particles.len() * tag_width,
        };
        peak.max(sys + prep)
    }

    /// Field-level validation of every variant. The qubit ceiling is only
    /// enforced for non-extended scenarios; `run` always enforces it.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut notes = Vec::new();
        for (label, v) in self.variants()? {
            let ctx = |e: Error| Error::Config(format!("{}{}: {e}", self.name, tag(&label)));
            v.validate_single().map_err(ctx)?;
            let q = v.peak_qubits();
            let ceiling = qubit_ceiling();
            if q > ceiling {
                if self.extended {
                    notes.push(format!("{}{}: needs {q} qubits (ceiling {ceiling})", self.name, tag(&label)));
                } else {
                    return Err(ctx(Error::Ceiling { qubits: q, ceiling }));
                }
            }
        }
        Ok(notes)
    }

    fn validate_single(&self) -> Result<()> {
        let bx = self.simulation_box()?;
        let spec = self.hamiltonian();
        spec.validate(bx.dims())?;
        let p = self.particles.len();
        if !(self.plan.dt > 0.0 && self.plan.dt.is_finite()) {
            return Err(Error::Config(format!("plan.dt = {}", self.plan.dt)));
        }
        if self.plan.attenuation && spec.attenuation.is_none() {
            return Err(Error::Config("plan.attenuation needs hamiltonian.attenuation".into()));
        }
        match (&self.initial.file, self.initial.states.len()) {
            (Some(_), 0) => {}
            (Some(_), _) => return Err(Error::Config("initial: give either file or states".into())),
            (None, n) if n != p => {
                return Err(Error::Config(format!("initial.states: {n} states for {p} particles")));
            }
            _ => {}
        }
        for s in &self.initial.states {
            if let Some(a) = s.analytic() {
                a.validate(bx.dims())?;
            }
        }
        if self.initial.exchange != Exchange::Product && p != 2 {
            return Err(Error::Config("initial.exchange needs exactly two particles".into()));
        }
        if let Some(a) = &self.plan.aso {
            CorePatch::new(a.n_l, a.particle)?;
            if a.particle >= p || a.n_l > self.sim_box.n_r {
                return Err(Error::Config("plan.aso patch does not fit".into()));
            }
        }
        if self.observables.ipe_every > 0 && (self.plan.attenuation || !self.plan.changes.is_empty()) {
            return Err(Error::Config("IPE needs a unitary plan without changes".into()));
        }
        if self.observables.fit_energy && self.observables.ipe_every == 0 {
            return Err(Error::Config("fit_energy needs ipe_every > 0".into()));
        }
        match &self.prep {
            PrepConfig::None => {}
            PrepConfig::StateEdit { energy } => {
                if *energy == 0.0 {
                    return Err(Error::Config("prep.energy must be nonzero".into()));
                }
            }
            PrepConfig::Pite { m0, references, .. } => {
                PiteParams::new(*m0, self.plan.dt)?;
                for r in references {
                    if let Some(a) = r.analytic() {
                        a.validate(bx.dims())?;
                    }
                }
            }
            PrepConfig::Antisymmetrize { energies, tag_width, .. } => {
                if energies.len() != p {
                    return Err(Error::Config("prep.energies must list one energy per particle".into()));
                }
                if *tag_width == 0 {
                    return Err(Error::Config("prep.tag_width must be positive".into()));
                }
                if self.initial.file.is_some() {
                    return Err(Error::Config("tagged antisymmetrisation needs initial.states".into()));
                }
            }
        }
        Ok(())
    }
}

fn scaled(every: usize, factor: f64) -> usize {
    if every == 0 {
        0
    } else {
        ((every as f64 * factor).round() as usize).max(1)
    }
}

fn tag(label: &str) -> String {
    if label.is_empty() {
        String::new()
    } else {
        format!(" [{label}]")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

const BUNDLED: &[(&str, &str)] = &[
    ("psi11_stability", include_str!("../scenarios/psi11_stability.toml")),
    ("psi11_resolution", include_str!("../scenarios/psi11_resolution.toml")),
    ("origin_offsets", include_str!("../scenarios/origin_offsets.toml")),
    ("bad_observable", include_str!("../scenarios/bad_observable.toml")),
    ("aso_core", include_str!("../scenarios/aso_core.toml")),
    ("state_edit", include_str!("../scenarios/state_edit.toml")),
    ("pite_ground", include_str!("../scenarios/pite_ground.toml")),
    ("antisymmetrize_p3", include_str!("../scenarios/antisymmetrize_p3.toml")),
    ("attenuation_1d", include_str!("../scenarios/attenuation_1d.toml")),
    ("field_ionisation", include_str!("../scenarios/field_ionisation.toml")),
    ("scattering_reduced", include_str!("../scenarios/scattering_reduced.toml")),
    ("scattering_full", include_str!("../scenarios/scattering_full.toml")),
    ("helium_reduced", include_str!("../scenarios/helium_reduced.toml")),
    ("helium_reduced_ee", include_str!("../scenarios/helium_reduced_ee.toml")),
    ("helium_full", include_str!("../scenarios/helium_full.toml")),
    ("empty_plan", include_str!("../scenarios/empty_plan.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioInfo {
    pub name: String,
    pub description: String,
    pub extended: bool,
}

pub fn list_scenarios() -> Result<Vec<ScenarioInfo>> {
    BUNDLED
        .iter()
        .map(|(_, text)| {
            let c = ScenarioConfig::from_toml(text)?;
            Ok(ScenarioInfo {
                name: c.name,
                description: c.description,
                extended: c.extended,
            })
        })
        .collect()
}

/// Loads a bundled scenario by name, or a file by path.
pub fn load(name_or_path: &str) -> Result<ScenarioConfig> {
    if let Some(t) = bundled(name_or_path) {
        return ScenarioConfig::from_toml(t);
    }
    let text = std::fs::read_to_string(name_or_path)?;
    ScenarioConfig::from_toml(&text)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub extended: bool,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    /// Whether the content depends on the seed.
    pub sampled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub variant: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str, path: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Malformed {
            path: path.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Differences between two manifests, ignoring seeds, and ignoring
/// seed-dependent artifacts when `ignore_sampled` is set.
pub fn diff_manifests(a: &Manifest, b: &Manifest, ignore_sampled: bool) -> Vec<String> {
    let mut out = Vec::new();
    for (what, x, y) in [
        ("name", &a.name, &b.name),
        ("variant", &a.variant, &b.variant),
        ("config_sha256", &a.config_sha256, &b.config_sha256),
        ("version", &a.version, &b.version),
    ] {
        if x != y {
            out.push(format!("{what}: {x} != {y}"));
        }
    }
    let ma: BTreeMap<&str, &Artifact> = a.artifacts.iter().map(|x| (x.file.as_str(), x)).collect();
    let mb: BTreeMap<&str, &Artifact> = b.artifacts.iter().map(|x| (x.file.as_str(), x)).collect();
    for (f, x) in &ma {
        match mb.get(f) {
            None => out.push(format!("{f}: only in first")),
            Some(y) => {
                if ignore_sampled && x.sampled && y.sampled {
                    continue;
                }
                if x.sha256 != y.sha256 {
                    out.push(format!("{f}: content differs"));
                }
            }
        }
    }
    for f in mb.keys() {
        if !ma.contains_key(f) {
            out.push(format!("{f}: only in second"));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub label: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub energies: Vec<EnergyEstimate>,
    pub final_autocorrelation: Option<C64>,
    pub prep_success: Option<f64>,
}

struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    fn write(&mut self, file: &str, bytes: &[u8], sampled: bool) -> Result<()> {
        std::fs::write(self.dir.join(file), bytes)?;
        self.artifacts.push(Artifact {
            file: file.to_string(),
            sha256: hex(&Sha256::digest(bytes)),
            sampled,
        });
        Ok(())
    }
}

/// Runs every variant of `cfg`, writing artifacts under `opts.out_dir`
/// (one subdirectory per variant when swept).
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<VariantOutcome>> {
    if cfg.extended && !opts.extended {
        return Err(Error::Config(format!(
            "scenario {} is extended; pass --extended to run it",
            cfg.name
        )));
    }
    cfg.validate()?;
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| run_variants(cfg, opts))
        }
        None => run_variants(cfg, opts),
    }
}

fn run_variants(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<VariantOutcome>> {
    let seed = opts.seed.unwrap_or(cfg.seed);
    let hash = cfg.hash()?;
    let mut out = Vec::new();
    for (label, v) in cfg.variants()? {
        let dir = if label.is_empty() {
            opts.out_dir.clone()
        } else {
            opts.out_dir.join(label.replace('=', "_"))
        };
        std::fs::create_dir_all(&dir)?;
        let q = v.peak_qubits();
        let ceiling = qubit_ceiling();
        if q > ceiling {
            return Err(Error::Ceiling { qubits: q, ceiling });
        }
        log::info!("running {}{}", cfg.name, tag(&label));
        out.push(run_variant(&v, &label, &dir, seed, &hash)?);
    }
    Ok(out)
}

const STATIONARY_MAX_DIM: usize = 4096;

fn load_initial(cfg: &ScenarioConfig, bx: &SimulationBox, layout: &Arc<RegisterLayout>) -> Result<(StateVector, Vec<Vec<C64>>)> {
    let conv = cfg.sim_box.convention;
    if let Some(f) = &cfg.initial.file {
        let (q, amps) = io::read_gwsv(Path::new(f))?;
        if q != layout.num_qubits() {
            return Err(Error::Config(format!("{f}: {q} qubits, system needs {}", layout.num_qubits())));
        }
        let mut s = StateVector::from_amplitudes(layout.clone(), amps)?;
        s.normalize()?;
        return Ok((s, Vec::new()));
    }
    let mut singles: Vec<Vec<C64>> = cfg
        .initial
        .states
        .iter()
        .map(|s| s.amplitudes(bx, conv))
        .collect::<Result<_>>()?;
    if cfg.initial.stationary {
        for (i, a) in singles.iter_mut().enumerate() {
            let mut spec = cfg.hamiltonian();
            spec.particles = vec![cfg.particles[i.min(cfg.particles.len() - 1)].clone()];
            spec.pair_couplings = None;
            spec.attenuation = None;
            let one = Arc::new(RegisterLayout::grid(1, bx.dims(), cfg.sim_box.n_r)?.with_convention(conv));
            let prop = Propagator::new(bx.clone(), spec, one, SoStepPlan::new(cfg.plan.dt))?;
            *a = prop.stationary_projection(a, STATIONARY_MAX_DIM)?;
        }
    }
    let mut state = match cfg.initial.exchange {
        Exchange::Product => grid::product_state(layout.clone(), &singles)?,
        Exchange::Antisymmetric | Exchange::Symmetric => {
            let sym = cfg.initial.exchange == Exchange::Symmetric;
            grid::antisymmetrize_direct(layout.clone(), &singles[0], &singles[1], sym)?.0
        }
    };
    if cfg.initial.pixel_ground {
        let ham = PixelHamiltonian::new(bx, &cfg.hamiltonian(), layout)?;
        let (e0, v) = ham.lowest_eigenpair(state.amplitudes(), cfg.initial.krylov)?;
        log::info!("pixel ground state energy {e0:.9}");
        state = StateVector::from_amplitudes(layout.clone(), v)?;
    }
    Ok((state, singles))
}

fn run_variant(cfg: &ScenarioConfig, label: &str, dir: &Path, seed: u64, hash: &str) -> Result<VariantOutcome> {
    let bx = cfg.simulation_box()?;
    let spec = cfg.hamiltonian();
    let sys_layout = Arc::new(cfg.system_layout()?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Outputs {
        dir: dir.to_path_buf(),
        artifacts: Vec::new(),
    };
    let (mut state, singles) = load_initial(cfg, &bx, &sys_layout)?;
    let mut unitary_spec = spec.clone();
    unitary_spec.attenuation = None;
    let sys_prop = Propagator::new(bx.clone(), unitary_spec.clone(), sys_layout.clone(), SoStepPlan::new(cfg.plan.dt))?;

    let mut prep_success = None;
    match &cfg.prep {
        PrepConfig::None => {}
        PrepConfig::StateEdit { energy } => {
            let r = prep::state_edit_remove(&sys_prop, &state, *energy)?;
            let csv = format!(
                "steps,success_probability,residual\n{},{:.16e},{:.16e}\n",
                r.steps, r.success_probability, r.residual
            );
            outs.write("prep.csv", csv.as_bytes(), false)?;
            prep_success = Some(r.success_probability);
            state = r.state;
        }
        PrepConfig::Pite {
            m0,
            steps,
            cadence,
            references,
            ground_reference,
        } => {
            let params = PiteParams::new(*m0, cfg.plan.dt)?;
            let mut refs: Vec<StateVector> = references
                .iter()
                .map(|r| {
                    let a = r.amplitudes(&bx, cfg.sim_box.convention)?;
                    let factors = vec![a; cfg.particles.len()];
                    grid::product_state(sys_layout.clone(), &factors)
                })
                .collect::<Result<_>>()?;
            if *ground_reference {
                let ham = PixelHamiltonian::new(&bx, &unitary_spec, &sys_layout)?;
                let (_, g) = ham.lowest_eigenpair(state.amplitudes(), cfg.initial.krylov)?;
                refs.push(StateVector::from_amplitudes(sys_layout.clone(), g)?);
            }
            let run = prep::pite_run(&sys_prop, &state, &params, *steps, &refs, *cadence)?;
            outs.write("prep.csv", run.to_csv().as_bytes(), false)?;
            prep_success = Some(run.cumulative_success());
            state = run.state;
        }
        PrepConfig::Antisymmetrize {
            energies,
            tag_width,
            symmetric,
        } => {
            let synth = SynthSpectrum::new(singles.clone(), energies.clone(), *tag_width)?;
            let r = prep::antisymmetrize_tagged(&synth, &sys_layout, *symmetric)?;
            let csv = format!("success_probability\n{:.16e}\n", r.success_probability);
            outs.write("prep.csv", csv.as_bytes(), false)?;
            prep_success = Some(r.success_probability);
            state = r.state;
        }
    }

    let mut layout = cfg.system_layout()?;
    if cfg.plan.attenuation {
        layout = layout.with_ancilla(CAP_ANCILLA, 1)?;
    }
    let layout = Arc::new(layout);
    let mut plan = SoStepPlan::new(cfg.plan.dt);
    plan.attenuation = cfg.plan.attenuation;
    plan.measurement = match cfg.plan.measurement {
        MeasurementConfig::Forced => MeasurementMode::Forced,
        MeasurementConfig::Sampled => MeasurementMode::Sampled,
    };
    let sampled = plan.attenuation && plan.measurement == MeasurementMode::Sampled;
    if let Some(a) = &cfg.plan.aso {
        let aug = derive_aso_restricted(&bx, &unitary_spec, cfg.plan.dt, CorePatch::new(a.n_l, a.particle)?)?;
        plan.aso = Some(Arc::new(aug));
    }
    let mut prop = Propagator::new(bx.clone(), spec.clone(), layout.clone(), plan)?;
    let mut main = state.extend_to(layout.clone())?;
    let initial = main.clone();
    let obs = &cfg.observables;
    let conv = cfg.sim_box.convention;

    let dump = |outs: &mut Outputs, st: &StateVector, step: usize, bx: &SimulationBox| -> Result<()> {
        for p in 0..cfg.particles.len() {
            let local = observables::probability_density(st, p)?;
            let g = DensityGrid::from_local(bx, conv, &local)?;
            let stem = format!("density_step{step:06}_p{p}");
            outs.write(&format!("{stem}.gwdg"), &g.encode(), sampled)?;
            if obs.pgm {
                outs.write(&format!("{stem}.pgm"), &g.to_pgm(), sampled)?;
            }
        }
        Ok(())
    };
    dump(&mut outs, &main, 0, &bx)?;

    let mut auto = TimeSeries::new("autocorrelation", true);
    let mut escape_t = Vec::new();
    let mut escape_p = Vec::new();
    let mut sampled_e = TimeSeries::new("sampled_energy", false);
    let mut bhat = TimeSeries::new("bhattacharyya", false);
    let density0 = if obs.bhattacharyya_every > 0 {
        Some(observables::probability_density(&main, 0)?)
    } else {
        None
    };
    let sys_q = sys_layout.num_qubits();
    let ham = if obs.sampled_energy_every > 0 {
        Some(PixelHamiltonian::new(&bx, &unitary_spec, &sys_layout)?)
    } else {
        None
    };
    let mut energy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e5e5);
    let sample_energy = |h: &PixelHamiltonian, amps: &[C64], rng: &mut ChaCha8Rng| -> Result<f64> {
        let sys = StateVector::from_amplitudes(sys_layout.clone(), amps[..1 << sys_q].to_vec())?;
        let e = if obs.sampled_energy_shots > 0 {
            observables::sampled_energy_expectation(h, &sys, Some((obs.sampled_energy_shots, rng)))?
        } else {
            observables::sampled_energy_expectation::<ChaCha8Rng>(h, &sys, None)?
        };
        Ok(e.energy)
    };
    if obs.autocorrelation_every > 0 {
        auto.push(0.0, C64::new(1.0, 0.0))?;
    }
    if let Some(h) = &ham {
        sampled_e.push_real(0.0, sample_energy(h, main.amplitudes(), &mut energy_rng)?)?;
    }
    if density0.is_some() {
        bhat.push_real(0.0, 1.0)?;
    }
    let changes: Vec<(usize, PlanChange)> = cfg.plan.changes.iter().map(|c| (c.step, c.action.to_change())).collect();
    let mut last_auto = None;
    {
        let rng_ref: &mut (dyn RngCore + 'static) = &mut rng;
        let mut pending: Vec<(usize, StateVector)> = Vec::new();
        prop.propagate(&mut main, cfg.plan.steps, &changes, Some(rng_ref), |view| {
            let k = view.step;
            if obs.autocorrelation_every > 0 && k % obs.autocorrelation_every == 0 && view.state.len() == initial.len() {
                let a = initial.inner(view.state)?;
                auto.push(view.time, a)?;
                last_auto = Some(a);
            }
            if obs.escape {
                escape_t.push(view.time);
                escape_p.push(view.report.escape_increment.clamp(0.0, 1.0));
            }
            if let Some(h) = &ham {
                if k % obs.sampled_energy_every == 0 {
                    sampled_e.push_real(view.time, sample_energy(h, view.state.amplitudes(), &mut energy_rng)?)?;
                }
            }
            if let Some(d0) = &density0 {
                if k % obs.bhattacharyya_every == 0 {
                    let d = observables::probability_density(view.state, 0)?;
                    if d.len() == d0.len() {
                        bhat.push_real(view.time, grid::bhattacharyya(d0, &d)?)?;
                    }
                }
            }
            if obs.density_steps.contains(&k) && k > 0 {
                pending.push((k, view.state.clone()));
            }
            Ok(())
        })?;
        for (k, st) in pending {
            let b = if st.layout().n_r() == Some(bx.n_r) {
                bx.clone()
            } else {
                prop.simulation_box().clone()
            };
            dump(&mut outs, &st, k, &b)?;
        }
    }
    if obs.autocorrelation_every > 0 {
        outs.write("autocorrelation.csv", auto.to_csv().as_bytes(), sampled)?;
    }
    if obs.escape {
        let ts = observables::escape_tracker(&escape_t, &escape_p)?;
        outs.write("escape.csv", ts.to_csv().as_bytes(), sampled)?;
    }
    if ham.is_some() {
        outs.write("sampled_energy.csv", sampled_e.to_csv().as_bytes(), obs.sampled_energy_shots > 0)?;
    }
    if density0.is_some() {
        outs.write("bhattacharyya.csv", bhat.to_csv().as_bytes(), sampled)?;
    }
    if obs.final_state {
        let q = main.layout().system_qubits()?;
        outs.write("final_state.gwsv", &io::encode_gwsv_raw(q, main.amplitudes()), sampled)?;
    }

    let mut energies = Vec::new();
    if obs.ipe_every > 0 && cfg.plan.steps > 0 {
        let mut ipe_prop = Propagator::new(bx.clone(), unitary_spec.clone(), sys_layout.clone(), SoStepPlan::new(cfg.plan.dt))?;
        if let Some(a) = prop.plan().aso.clone() {
            ipe_prop.attach_aso(a)?;
        }
        let mut tracker = IpeTracker::new(&ipe_prop, &state)?;
        let mut ipe = TimeSeries::new("ipe", false);
        ipe.push_real(0.0, 1.0)?;
        let mut ipe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1be_1be);
        while tracker.steps() + obs.ipe_every <= cfg.plan.steps {
            tracker.advance(obs.ipe_every)?;
            let p = if obs.ipe_shots > 0 {
                tracker.sample_p_plus(obs.ipe_shots, &mut ipe_rng)?
            } else {
                tracker.p_plus()?
            };
            ipe.push_real(tracker.time(), p)?;
        }
        outs.write("ipe.csv", ipe.to_csv().as_bytes(), obs.ipe_shots > 0)?;
        if obs.fit_energy {
            match observables::fit_energy_from_signal(&ipe, FitOptions::default()) {
                Ok(e) => energies.push(e),
                Err(e) => log::warn!("energy fit failed: {e}"),
            }
        }
        if obs.fourier_peaks > 0 {
            match observables::fourier_peaks(&ipe, obs.fourier_peaks, true) {
                Ok(p) => energies.extend(p),
                Err(e) => log::warn!("Fourier analysis failed: {e}"),
            }
        }
        if !energies.is_empty() {
            let mut csv = String::from("method,energy,uncertainty\n");
            for e in &energies {
                let _ = writeln!(csv, "{:?},{:.16e},{:.16e}", e.method, e.energy, e.uncertainty);
            }
            outs.write("energy.csv", csv.as_bytes(), obs.ipe_shots > 0)?;
        }
    }

    let manifest = Manifest {
        name: cfg.name.clone(),
        variant: label.to_string(),
        config_sha256: hash.to_string(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: outs.artifacts.clone(),
    };
    std::fs::write(dir.join("manifest.toml"), manifest.to_toml()?)?;
    Ok(VariantOutcome {
        label: label.to_string(),
        dir: dir.to_path_buf(),
        manifest,
        energies,
        final_autocorrelation: last_auto,
        prep_success,
    })
}
