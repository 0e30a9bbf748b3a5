//! The split-operator QFT cycle and its extras (attenuation, augmentation,
//! mid-run plan changes).

use crate::arith::{self, AddSubMode};
use crate::aso::AsoAugmentation;
use crate::error::{Error, Result};
use crate::grid::SimulationBox;
use crate::hamiltonian::{attenuation_angle, AttenuationRegion, DiagonalTerms, HamiltonianSpec, TermKind};
use crate::layout::{Convention, RegisterLayout, Span};
use crate::phase::{PhaseTable, SpanKey};
use crate::qft::{qft_slice, Direction};
use crate::state::{Basis, MeasurementRecord, StateVector, C64};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use std::sync::Arc;

/// Name of the ancilla used by attenuation.
pub const CAP_ANCILLA: &str = "cap";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MeasurementMode {
    /// Always post-select the no-detection outcome.
    #[default]
    Forced,
    /// Draw outcomes from the supplied generator.
    Sampled,
}

#[derive(Clone, Debug)]
pub struct SoStepPlan {
    pub dt: f64,
    pub aso: Option<Arc<AsoAugmentation>>,
    pub attenuation: bool,
    pub measurement: MeasurementMode,
}

impl SoStepPlan {
    pub fn new(dt: f64) -> Self {
        SoStepPlan {
            dt,
            aso: None,
            attenuation: false,
            measurement: MeasurementMode::Forced,
        }
    }
}

#[derive(Clone, Debug)]
enum CapRotation {
    /// Rotate wherever all `(qubit, bit)` controls hold.
    Pattern { controls: Vec<(usize, u8)>, theta: f64 },
    /// Per-pixel angles over one particle's sub-registers.
    Table { key: SpanKey, thetas: Vec<f64> },
}

#[derive(Clone, Debug)]
struct CapGroup {
    particle: usize,
    rotations: Vec<CapRotation>,
}

/// Outcome of one propagation step.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    /// Probability that attenuation detected the particle during this step.
    pub escape_increment: f64,
    /// Particles detected by sampled attenuation measurements.
    pub detected: Vec<usize>,
    pub records: Vec<MeasurementRecord>,
}

#[derive(Clone, Debug)]
pub struct Propagator {
    bx: SimulationBox,
    spec: HamiltonianSpec,
    layout: Arc<RegisterLayout>,
    plan: SoStepPlan,
    system_qubits: usize,
    spans: Vec<Span>,
    convention: Convention,
    kinetic: Vec<PhaseTable>,
    interaction: Vec<PhaseTable>,
    pairs: Vec<(PhaseTable, Vec<(Span, Span)>)>,
    cap: Vec<CapGroup>,
    cap_qubit: Option<usize>,
}

fn factors(energies: &[f64], dt: f64) -> Vec<C64> {
    energies.iter().map(|&e| C64::from_polar(1.0, -e * dt)).collect()
}

impl Propagator {
    pub fn new(bx: SimulationBox, spec: HamiltonianSpec, layout: Arc<RegisterLayout>, plan: SoStepPlan) -> Result<Self> {
        if !(plan.dt >= 0.0 && plan.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {}", plan.dt)));
        }
        let system_qubits = layout.system_qubits()?;
        let convention = layout.convention();
        let spans = layout.particles().iter().flat_map(|p| p.dims.iter().copied()).collect();
        let mut prop = Propagator {
            bx,
            spec,
            layout,
            plan,
            system_qubits,
            spans,
            convention,
            kinetic: Vec::new(),
            interaction: Vec::new(),
            pairs: Vec::new(),
            cap: Vec::new(),
            cap_qubit: None,
        };
        prop.rebuild()?;
        Ok(prop)
    }

    fn rebuild(&mut self) -> Result<()> {
        let dt = self.plan.dt;
        if let Some(a) = &self.plan.aso {
            a.check(dt, &self.layout)?;
        }
        let terms = DiagonalTerms::build(&self.bx, &self.spec, &self.layout)?;
        self.kinetic.clear();
        self.interaction.clear();
        self.pairs.clear();
        for reg in self.layout.particles() {
            let per_dim: Vec<&_> = terms
                .kinetic()
                .filter(|t| reg.dims.contains(&t.key.spans()[0]))
                .collect();
            let key = SpanKey::new(&reg.dims)?;
            let n_r = reg.n_r();
            let mask = (1usize << n_r) - 1;
            let f: Vec<C64> = (0..key.len())
                .map(|k| {
                    let e: f64 = per_dim
                        .iter()
                        .enumerate()
                        .map(|(d, t)| t.energies[(k >> (d * n_r)) & mask])
                        .sum();
                    C64::from_polar(1.0, -e * dt)
                })
                .collect();
            self.kinetic.push(PhaseTable::from_factors(&reg.dims, f)?);
        }
        for t in terms.potential() {
            match t.kind {
                TermKind::Interaction => self
                    .interaction
                    .push(PhaseTable::from_factors(t.key.spans(), factors(&t.energies, dt))?),
                TermKind::Pair { .. } => {
                    let table = PhaseTable::from_factors(t.key.spans(), factors(&t.energies, dt))?;
                    self.pairs.push((table, t.pair_spans(&self.layout)));
                }
                TermKind::Kinetic => {}
            }
        }
        self.build_cap()?;
        Ok(())
    }

    fn build_cap(&mut self) -> Result<()> {
        self.cap.clear();
        self.cap_qubit = None;
        let Some(att) = self.spec.attenuation.clone() else {
            return Ok(());
        };
        if !self.plan.attenuation {
            return Ok(());
        }
        let span = self.layout.ancilla_span(CAP_ANCILLA)?;
        self.cap_qubit = Some(span.start);
        let dt = self.plan.dt;
        let particles = att
            .particles
            .clone()
            .unwrap_or_else(|| (0..self.layout.num_particles()).collect());
        for &p in &particles {
            let reg = self.layout.particle(p)?.clone();
            match &att.region {
                AttenuationRegion::Uniform { m, strength } => {
                    let theta = attenuation_angle(*strength, dt)?;
                    let m = *m as usize;
                    let n_r = reg.n_r();
                    if m >= n_r {
                        return Err(Error::InvalidParameter(format!(
                            "uniform attenuation m = {m} needs more than {n_r} qubits"
                        )));
                    }
                    for s in &reg.dims {
                        let top = s.end() - 1;
                        let patterns: Vec<(u8, u8)> = match self.convention {
                            Convention::TwosComplement => vec![(0, 1), (1, 0)],
                            Convention::UnsignedShift => vec![(1, 1), (0, 0)],
                        };
                        let rotations = patterns
                            .into_iter()
                            .map(|(sign, rest)| {
                                let mut controls = vec![(top, sign)];
                                for j in 1..=m {
                                    controls.push((top - j, rest));
                                }
                                CapRotation::Pattern { controls, theta }
                            })
                            .collect();
                        self.cap.push(CapGroup { particle: p, rotations });
                    }
                }
                AttenuationRegion::Pixels { pixels } => {
                    let key = SpanKey::new(&reg.dims)?;
                    let mut thetas = vec![0.0; key.len()];
                    for (vals, v) in pixels {
                        if vals.len() != reg.dims.len() {
                            return Err(Error::InvalidParameter(format!(
                                "attenuated pixel {vals:?} has the wrong dimension"
                            )));
                        }
                        let mut k = 0usize;
                        for (d, (&val, s)) in vals.iter().zip(&reg.dims).enumerate() {
                            let half = 1i64 << (s.width - 1);
                            if val < -half || val >= half {
                                return Err(Error::InvalidParameter(format!("pixel {vals:?} outside the box")));
                            }
                            k |= (self.convention.encode(val, s.width) as usize) << (d * s.width);
                        }
                        thetas[k] = attenuation_angle(*v, dt)?;
                    }
                    self.cap.push(CapGroup {
                        particle: p,
                        rotations: vec![CapRotation::Table { key, thetas }],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.plan.dt
    }

    pub fn plan(&self) -> &SoStepPlan {
        &self.plan
    }

    pub fn simulation_box(&self) -> &SimulationBox {
        &self.bx
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<RegisterLayout> {
        &self.layout
    }

    pub fn system_qubits(&self) -> usize {
        self.system_qubits
    }

    /// Changes δt. An attached augmentation derived for another δt is refused.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if let Some(a) = &self.plan.aso {
            if a.dt != dt {
                return Err(Error::Config(format!(
                    "augmentation was derived for δt = {} but δt = {dt} was requested; detach it first",
                    a.dt
                )));
            }
        }
        self.plan.dt = dt;
        self.rebuild()
    }

    pub fn attach_aso(&mut self, aug: Arc<AsoAugmentation>) -> Result<()> {
        aug.check(self.plan.dt, &self.layout)?;
        self.plan.aso = Some(aug);
        Ok(())
    }

    pub fn detach_aso(&mut self) {
        self.plan.aso = None;
    }

    pub fn set_spec(&mut self, spec: HamiltonianSpec) -> Result<()> {
        self.spec = spec;
        self.rebuild()
    }

    /// Removes every pair coupling involving `particle`.
    pub fn drop_pairs(&mut self, particle: usize) -> Result<()> {
        let n = self.spec.particles.len();
        if particle >= n {
            return Err(Error::InvalidParameter(format!("particle {particle} out of range")));
        }
        let mut q: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| self.spec.coupling(a, b)).collect()).collect();
        for j in 0..n {
            q[particle][j] = 0.0;
            q[j][particle] = 0.0;
        }
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        let mut spec = self.spec.clone();
        spec.pair_couplings = Some(q);
        self.set_spec(spec)
    }

    /// Sign-extends every particle register by `extra` qubits, doubling the
    /// box width per qubit at fixed δr. Returns the relabelled state.
    pub fn enlarge(&mut self, state: &StateVector, extra: usize) -> Result<StateVector> {
        if self.plan.aso.is_some() {
            return Err(Error::Config("detach the augmentation before enlarging the box".into()));
        }
        let mut s = state.clone();
        for p in 0..self.layout.num_particles() {
            s = arith::enlarge_subregister(&s, p, extra)?;
        }
        self.bx = self.bx.enlarged(extra);
        self.layout = s.layout_arc();
        self.system_qubits = self.layout.system_qubits()?;
        self.spans = self.layout.particles().iter().flat_map(|p| p.dims.iter().copied()).collect();
        self.rebuild()?;
        Ok(s)
    }

    fn check_slice(&self, amps: &[C64]) -> Result<()> {
        let block = 1usize << self.system_qubits;
        if !amps.len().is_multiple_of(block) || amps.is_empty() {
            return Err(Error::DimensionMismatch {
                left: amps.len(),
                right: block,
            });
        }
        Ok(())
    }

    fn to_momentum(&self, amps: &mut [C64]) -> Result<()> {
        for &s in &self.spans {
            qft_slice(amps, s, self.convention, Direction::Inverse)?;
        }
        Ok(())
    }

    fn to_position(&self, amps: &mut [C64]) -> Result<()> {
        for &s in &self.spans {
            qft_slice(amps, s, self.convention, Direction::Forward)?;
        }
        Ok(())
    }

    fn kinetic_step(&self, amps: &mut [C64], adjoint: bool) -> Result<()> {
        self.to_momentum(amps)?;
        for t in &self.kinetic {
            if adjoint {
                t.apply_conj(amps);
            } else {
                t.apply(amps);
            }
        }
        self.to_position(amps)
    }

    fn potential_step(&self, amps: &mut [C64], adjoint: bool) -> Result<()> {
        for t in &self.interaction {
            if adjoint {
                t.apply_conj(amps);
            } else {
                t.apply(amps);
            }
        }
        for (t, pairs) in &self.pairs {
            arith::add_sub_slice(amps, pairs, self.convention, AddSubMode::Subtract)?;
            if adjoint {
                t.apply_conj(amps);
            } else {
                t.apply(amps);
            }
            arith::add_sub_slice(amps, pairs, self.convention, AddSubMode::Add)?;
        }
        Ok(())
    }

    /// The unitary part of one cycle on any slice made of whole system blocks.
    pub fn unitary_step_slice(&self, amps: &mut [C64]) -> Result<()> {
        self.check_slice(amps)?;
        self.kinetic_step(amps, false)?;
        self.potential_step(amps, false)?;
        if let Some(a) = &self.plan.aso {
            a.apply_slice(amps, &self.layout, false)?;
        }
        Ok(())
    }

    /// Projects `guess` onto the eigenspace of one unitary cycle that holds
    /// most of its weight, so the result only picks up a global phase per
    /// step. Builds the cycle densely; `max_dim` bounds the system size.
    pub fn stationary_projection(&self, guess: &[C64], max_dim: usize) -> Result<Vec<C64>> {
        let dim = 1usize << self.system_qubits;
        if guess.len() != dim {
            return Err(Error::Layout(format!("guess has {} amplitudes, system has {dim}", guess.len())));
        }
        if dim > max_dim {
            return Err(Error::Config(format!("stationary projection limited to {max_dim} amplitudes, system has {dim}")));
        }
        let mut u = DMatrix::<C64>::zeros(dim, dim);
        let mut col = vec![C64::new(0.0, 0.0); dim];
        for j in 0..dim {
            col.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
            col[j] = C64::new(1.0, 0.0);
            self.unitary_step_slice(&mut col)?;
            u.set_column(j, &DVector::from_column_slice(&col));
        }
        // sin φ is injective while every eigenphase stays inside (−π/2, π/2).
        let h = (&u - u.adjoint()) * C64::new(0.0, -0.5);
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let g = DVector::from_column_slice(guess);
        let mut best = (0.0, Vec::new());
        let mut i = 0;
        while i < dim {
            let mut j = i + 1;
            while j < dim && eig.eigenvalues[order[j]] - eig.eigenvalues[order[j - 1]] < 1e-9 {
                j += 1;
            }
            let cluster = &order[i..j];
            let w: f64 = cluster.iter().map(|&c| eig.eigenvectors.column(c).dotc(&g).norm_sqr()).sum();
            if w > best.0 {
                best = (w, cluster.to_vec());
            }
            i = j;
        }
        let mut p = DVector::<C64>::zeros(dim);
        for &c in &best.1 {
            let v = eig.eigenvectors.column(c);
            p += v * v.dotc(&g);
        }
        let n = p.norm();
        if n < 1e-12 {
            return Err(Error::DegenerateState("guess has no weight on any cycle eigenspace".into()));
        }
        p /= C64::new(n, 0.0);
        let up = &u * &p;
        let lambda = p.dotc(&up);
        let residual = (up - &p * lambda).norm();
        if (lambda.norm() - 1.0).abs() > 1e-9 || residual > 1e-8 || lambda.re <= 0.0 {
            return Err(Error::Unresolvable(format!("cycle eigenphases not resolved (residual {residual:.1e})")));
        }
        Ok(p.iter().copied().collect())
    }

    /// Exact inverse of [`Propagator::unitary_step_slice`].
    pub fn inverse_step_slice(&self, amps: &mut [C64]) -> Result<()> {
        self.check_slice(amps)?;
        if let Some(a) = &self.plan.aso {
            a.apply_slice(amps, &self.layout, true)?;
        }
        self.potential_step(amps, true)?;
        self.kinetic_step(amps, true)
    }

    /// One full cycle including attenuation, using forced post-selection.
    pub fn so_step(&self, state: &mut StateVector) -> Result<StepReport> {
        self.so_step_with(state, None)
    }

    /// One full cycle; sampled attenuation draws from `rng`.
    pub fn so_step_with(&self, state: &mut StateVector, rng: Option<&mut (dyn RngCore + 'static)>) -> Result<StepReport> {
        self.check_slice(state.amplitudes())?;
        let aso = self.plan.aso.clone();
        self.kinetic_step(state.amplitudes_mut(), false)?;
        self.potential_step(state.amplitudes_mut(), false)?;
        let report = self.attenuation_step(state, rng)?;
        if let Some(a) = aso {
            a.apply_slice(state.amplitudes_mut(), &self.layout, false)?;
        }
        Ok(report)
    }

    pub fn so_step_inverse(&self, state: &mut StateVector) -> Result<()> {
        if !self.cap.is_empty() {
            return Err(Error::Config("attenuation has no inverse".into()));
        }
        self.inverse_step_slice(state.amplitudes_mut())
    }

    /// Attenuation on its own: rotations onto the cap ancilla per
    /// sub-register, each followed by a cap measurement.
    pub fn attenuation_step(&self, state: &mut StateVector, mut rng: Option<&mut (dyn RngCore + 'static)>) -> Result<StepReport> {
        let mut report = StepReport::default();
        let Some(cap) = self.cap_qubit else {
            return Ok(report);
        };
        if state.layout() != self.layout.as_ref() {
            return Err(Error::Layout("attenuation needs the full propagator layout".into()));
        }
        let mut survive = 1.0;
        for g in &self.cap {
            for r in &g.rotations {
                match r {
                    CapRotation::Pattern { controls, theta } => {
                        state.multi_controlled_x_rotation(controls, cap, *theta)?;
                    }
                    CapRotation::Table { key, thetas } => table_rotation(state, key, thetas, cap),
                }
            }
            let p1 = state.probability_one(cap)? / state.norm_sqr();
            if p1 <= 0.0 {
                continue;
            }
            let rec = match (self.plan.measurement, rng.as_deref_mut()) {
                (MeasurementMode::Sampled, Some(r)) => state.measure_sampled(cap, Basis::Z, r)?,
                (MeasurementMode::Sampled, None) => {
                    return Err(Error::Config("sampled attenuation needs a random generator".into()))
                }
                (MeasurementMode::Forced, _) => state.measure_forced(cap, Basis::Z, 0)?,
            };
            survive *= 1.0 - p1;
            if rec.outcome == 1 {
                report.detected.push(g.particle);
                reset_qubit(state, cap);
            }
            report.records.push(rec);
        }
        report.escape_increment = 1.0 - survive;
        Ok(report)
    }

    /// `count` unitary cycles conditioned on `control` reading `value`.
    pub fn conditioned_steps(
        &self,
        state: &mut StateVector,
        control: usize,
        value: u8,
        count: usize,
        inverse: bool,
    ) -> Result<()> {
        state.conditioned_apply(control, value, |sub| {
            for _ in 0..count {
                if inverse {
                    self.inverse_step_slice(sub.amplitudes_mut())?;
                } else {
                    self.unitary_step_slice(sub.amplitudes_mut())?;
                }
            }
            Ok(())
        })
    }

    pub fn controlled_steps(&self, state: &mut StateVector, control: usize, count: usize) -> Result<()> {
        self.conditioned_steps(state, control, 1, count, false)
    }

    /// Runs `steps` cycles, applying scheduled plan changes and handing each
    /// step to `callback`.
    pub fn propagate<F>(
        &mut self,
        state: &mut StateVector,
        steps: usize,
        changes: &[(usize, PlanChange)],
        mut rng: Option<&mut (dyn RngCore + 'static)>,
        mut callback: F,
    ) -> Result<f64>
    where
        F: FnMut(&StepView) -> Result<()>,
    {
        let mut time = 0.0;
        for step in 0..steps {
            for (at, change) in changes {
                if *at == step {
                    self.apply_change(state, change)?;
                }
            }
            let report = self.so_step_with(state, rng.as_deref_mut())?;
            time += self.plan.dt;
            callback(&StepView {
                step: step + 1,
                time,
                state,
                report: &report,
            })?;
        }
        Ok(time)
    }

    pub fn apply_change(&mut self, state: &mut StateVector, change: &PlanChange) -> Result<()> {
        match change {
            PlanChange::SetDt(dt) => self.set_dt(*dt),
            PlanChange::DetachAso => {
                self.detach_aso();
                Ok(())
            }
            PlanChange::DropPairs { particle } => self.drop_pairs(*particle),
            PlanChange::Enlarge { extra } => {
                *state = self.enlarge(state, *extra)?;
                Ok(())
            }
        }
    }
}

fn table_rotation(state: &mut StateVector, key: &SpanKey, thetas: &[f64], cap: usize) {
    let bit = 1usize << cap;
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & bit != 0 {
            continue;
        }
        let t = thetas[key.key(i)];
        if t == 0.0 {
            continue;
        }
        let (s, c) = t.sin_cos();
        let a0 = amps[i];
        let a1 = amps[i | bit];
        amps[i] = a0 * c + C64::new(0.0, s) * a1;
        amps[i | bit] = C64::new(0.0, s) * a0 + a1 * c;
    }
}

/// Moves the `|1⟩` branch of `qubit` onto `|0⟩` (valid after a measurement).
fn reset_qubit(state: &mut StateVector, qubit: usize) {
    let bit = 1usize << qubit;
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & bit != 0 {
            let v = amps[i];
            amps[i] = C64::new(0.0, 0.0);
            amps[i & !bit] += v;
        }
    }
}

/// A scheduled change to the plan, applied before the given step.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanChange {
    SetDt(f64),
    DetachAso,
    DropPairs { particle: usize },
    Enlarge { extra: usize },
}

/// Read-only view handed to propagation callbacks.
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub state: &'a StateVector,
    pub report: &'a StepReport,
}
