//! State preparation: IPE state editing, probabilistic imaginary-time
//! evolution and tag-register antisymmetrisation.

use crate::error::{Error, Result};
use crate::layout::{Convention, RegisterLayout, Span};
use crate::observables::{IpeTracker, TimeSeries};
use crate::phase::SpanKey;
use crate::propagator::Propagator;
use crate::qft::{qft_slice, Direction};
use crate::reduce;
use crate::state::{Basis, StateVector, C64};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::sync::Arc;

/// Name of the PITE ancilla.
pub const PITE_ANCILLA: &str = "pite";

#[derive(Clone, Debug)]
pub struct EditResult {
    pub state: StateVector,
    pub success_probability: f64,
    /// Controlled cycles used, `round(π/|E_κ|/δt)`.
    pub steps: usize,
    /// `cos²(E_κ·N·δt/2)`: what survives of the targeted component.
    pub residual: f64,
}

/// Removes the component at energy `e_kappa` by controlled evolution for
/// `T = π/|E_κ|` and post-selecting the ancilla on `|+⟩`.
pub fn state_edit_remove(prop: &Propagator, system: &StateVector, e_kappa: f64) -> Result<EditResult> {
    if e_kappa == 0.0 || !e_kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("cannot target energy {e_kappa}")));
    }
    let exact = PI / e_kappa.abs() / prop.dt();
    let steps = exact.round() as usize;
    if steps == 0 {
        return Err(Error::Precondition(format!(
            "period π/|E| = {} is shorter than one step",
            PI / e_kappa.abs()
        )));
    }
    if (steps as f64 - exact).abs() > 0.25 {
        log::warn!("editing period snapped from {exact:.3} to {steps} steps");
    }
    let mut tracker = IpeTracker::new(prop, system)?;
    tracker.advance(steps)?;
    let ancilla = prop.system_qubits();
    let mut st = tracker.state().clone();
    let rec = st.measure_forced(ancilla, Basis::X, 0)?;
    let mut out = collapse_plus(&st, ancilla, system.layout_arc())?;
    out.normalize()?;
    let residual = (e_kappa * steps as f64 * prop.dt() / 2.0).cos().powi(2);
    Ok(EditResult {
        state: out,
        success_probability: rec.probability,
        steps,
        residual,
    })
}

fn collapse_plus(st: &StateVector, ancilla: usize, layout: Arc<RegisterLayout>) -> Result<StateVector> {
    let half = 1usize << ancilla;
    let amps: Vec<C64> = st.amplitudes()[..half].iter().map(|a| a * 2f64.sqrt()).collect();
    StateVector::from_amplitudes(layout, amps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiteParams {
    pub m0: f64,
    pub dt: f64,
}

impl PiteParams {
    pub fn new(m0: f64, dt: f64) -> Result<Self> {
        if !(m0 > 0.0 && m0 < 1.0) || (m0 - FRAC_1_SQRT_2).abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!("m0 = {m0}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt}")));
        }
        Ok(PiteParams { m0, dt })
    }

    /// Time rescaling factor `m0/√(1−m0²)`.
    pub fn s(&self) -> f64 {
        self.m0 / (1.0 - self.m0 * self.m0).sqrt()
    }

    pub fn kappa(&self) -> f64 {
        (self.m0 - FRAC_1_SQRT_2).signum()
    }

    /// `κ·arccos((m0 + √(1−m0²))/√2)`.
    pub fn theta(&self) -> f64 {
        let arg = (self.m0 + (1.0 - self.m0 * self.m0).sqrt()) / 2f64.sqrt();
        self.kappa() * arg.clamp(-1.0, 1.0).acos()
    }

    /// Ancilla phase `θ0 = π/4 − θ`, which satisfies `cos θ0 = m0`.
    pub fn theta0(&self) -> f64 {
        FRAC_PI_4 - self.theta()
    }

    /// Imaginary time advanced by one step, `δt/s`.
    pub fn dtau(&self) -> f64 {
        self.dt / self.s()
    }
}

/// One PITE cycle. The ancilla in `|+⟩` selects forward (`|1⟩`) or backward
/// (`|0⟩`) evolution, picks up `e^{∓iθ0}`, and is post-selected on `|+⟩`,
/// leaving `cos(θ0 + H·δt) ≈ m0·e^{−H·δτ}` applied to the register.
pub fn pite_step(prop: &Propagator, system: &StateVector, params: &PiteParams) -> Result<(StateVector, f64)> {
    if (prop.dt() - params.dt).abs() > 1e-15 * params.dt.max(1.0) {
        return Err(Error::Config(format!(
            "propagator step {} differs from PITE step {}",
            prop.dt(),
            params.dt
        )));
    }
    let sysq = prop.system_qubits();
    if system.num_qubits() != sysq {
        return Err(Error::Precondition("PITE needs a state holding only the system registers".into()));
    }
    let layout = Arc::new(system.layout().clone().with_ancilla(PITE_ANCILLA, 1)?);
    let mut st = system.extend_to(layout)?;
    st.hadamard(sysq)?;
    prop.conditioned_steps(&mut st, sysq, 1, 1, false)?;
    prop.conditioned_steps(&mut st, sysq, 0, 1, true)?;
    let t0 = params.theta0();
    let z = C64::new(0.0, 0.0);
    st.apply_single_qubit(sysq, [[C64::from_polar(1.0, t0), z], [z, C64::from_polar(1.0, -t0)]])?;
    let norm_in = system.norm_sqr();
    let probability = st.probability_plus(sysq)? / st.norm_sqr();
    st.measure_forced(sysq, Basis::X, 0)?;
    let mut out = collapse_plus(&st, sysq, system.layout_arc())?;
    let n = out.norm_sqr();
    if n > 0.0 && norm_in > 0.0 {
        out.amplitudes_mut().iter_mut().for_each(|a| *a /= (n / norm_in).sqrt());
    }
    out.normalize()?;
    Ok((out, probability))
}

#[derive(Clone, Debug)]
pub struct PiteRun {
    pub state: StateVector,
    /// `|⟨ref_j|ψ⟩|²` against imaginary time, one series per reference.
    pub overlaps: Vec<TimeSeries>,
    /// Success probability of each step.
    pub step_success: Vec<f64>,
    /// Natural log of the cumulative success probability.
    pub log_success: f64,
    pub dt: f64,
    pub dtau: f64,
}

impl PiteRun {
    pub fn cumulative_success(&self) -> f64 {
        self.log_success.exp()
    }

    /// CSV with `step,dt,dtau,success` followed by one overlap column per reference.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,dt,dtau,success");
        for j in 0..self.overlaps.len() {
            s.push_str(&format!(",overlap_{j}"));
        }
        s.push('\n');
        let rows = self.overlaps.first().map(|o| o.len()).unwrap_or(0);
        for r in 0..rows {
            let step = (self.overlaps[0].times[r] / self.dtau).round() as usize;
            let p = if step == 0 { 1.0 } else { self.step_success[step - 1] };
            s.push_str(&format!("{step},{:.16e},{:.16e},{p:.16e}", self.dt, self.dtau));
            for o in &self.overlaps {
                s.push_str(&format!(",{:.16e}", o.values[r].re));
            }
            s.push('\n');
        }
        s
    }
}

/// Repeats [`pite_step`] `steps` times, sampling overlaps with `references`
/// every `cadence` steps (and at the start).
pub fn pite_run(
    prop: &Propagator,
    initial: &StateVector,
    params: &PiteParams,
    steps: usize,
    references: &[StateVector],
    cadence: usize,
) -> Result<PiteRun> {
    let cadence = cadence.max(1);
    let mut overlaps: Vec<TimeSeries> = (0..references.len())
        .map(|j| TimeSeries::new(&format!("overlap_{j}"), false))
        .collect();
    let record = |st: &StateVector, t: f64, ov: &mut Vec<TimeSeries>| -> Result<()> {
        for (r, series) in references.iter().zip(ov.iter_mut()) {
            series.push_real(t, r.fidelity(st)?)?;
        }
        Ok(())
    };
    let mut st = initial.clone();
    st.normalize()?;
    record(&st, 0.0, &mut overlaps)?;
    let mut step_success = Vec::with_capacity(steps);
    let mut log_success = 0.0;
    for k in 1..=steps {
        let (next, p) = pite_step(prop, &st, params)?;
        st = next;
        step_success.push(p);
        log_success += p.ln();
        if k % cadence == 0 || k == steps {
            record(&st, k as f64 * params.dtau(), &mut overlaps)?;
        }
    }
    Ok(PiteRun {
        state: st,
        overlaps,
        step_success,
        log_success,
        dt: params.dt,
        dtau: params.dtau(),
    })
}

/// Single-particle states with the energies of a synthetic Hamiltonian.
#[derive(Clone, Debug)]
pub struct SynthSpectrum {
    /// Amplitudes over one particle register, in local key order.
    pub states: Vec<Vec<C64>>,
    pub energies: Vec<f64>,
    pub tag_width: usize,
}

impl SynthSpectrum {
    pub fn new(states: Vec<Vec<C64>>, energies: Vec<f64>, tag_width: usize) -> Result<Self> {
        let s = SynthSpectrum {
            states,
            energies,
            tag_width,
        };
        s.validate()?;
        Ok(s)
    }

    /// Affine map sending the lowest energy to 0 and the highest to `2^t − 1`.
    pub fn aligned(states: Vec<Vec<C64>>, raw: &[f64], tag_width: usize) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::InvalidParameter("alignment needs at least two energies".into()));
        }
        let lo = raw[0];
        let hi = raw[raw.len() - 1];
        let top = ((1u64 << tag_width) - 1) as f64;
        let energies = raw.iter().map(|e| (e - lo) / (hi - lo) * top).collect();
        Self::new(states, energies, tag_width)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Nearest integers `E'_i` written into the tags.
    pub fn tags(&self) -> Vec<u64> {
        self.energies.iter().map(|e| e.round() as u64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.states.len();
        if p == 0 || p != self.energies.len() {
            return Err(Error::InvalidParameter("states and energies must pair up".into()));
        }
        if self.tag_width == 0 || self.tag_width > 16 {
            return Err(Error::InvalidParameter(format!("tag width {}", self.tag_width)));
        }
        if self.energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("energies must increase strictly".into()));
        }
        let top = ((1u64 << self.tag_width) - 1) as f64;
        if self.energies[0] < -0.5 || self.energies[p - 1] > top + 0.5 {
            return Err(Error::InvalidParameter(format!(
                "energies must round into [0, {top}]"
            )));
        }
        let tags = self.tags();
        if tags.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("two energies round to the same tag".into()));
        }
        let n = self.states[0].len();
        for (i, a) in self.states.iter().enumerate() {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    left: a.len(),
                    right: n,
                });
            }
            for (j, b) in self.states.iter().enumerate().skip(i) {
                let g = reduce::inner(a, b);
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).norm() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "states {i} and {j} are not orthonormal (overlap {g})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(1 + Σ_i (e^{iφ E_i} − 1)|ψ_i⟩⟨ψ_i|) v`.
    fn apply_exp(&self, phi: f64, v: &mut [C64]) {
        let one = C64::new(1.0, 0.0);
        let coeffs: Vec<C64> = self
            .states
            .iter()
            .zip(&self.energies)
            .map(|(s, &e)| (C64::from_polar(1.0, phi * e) - one) * reduce::inner(s, v))
            .collect();
        for (s, c) in self.states.iter().zip(coeffs) {
            for (x, y) in v.iter_mut().zip(s) {
                *x += c * y;
            }
        }
    }
}

fn permutations(p: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; p], &mut out);
    out.into_iter()
        .map(|perm| {
            let mut inv = 0;
            for i in 0..p {
                for j in i + 1..p {
                    if perm[i] > perm[j] {
                        inv += 1;
                    }
                }
            }
            let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
            (perm, sign)
        })
        .collect()
}

/// Scattered full-state offsets of each local value of a register, plus its mask.
fn register_offsets(key: &SpanKey, spans: &[Span]) -> (Vec<usize>, usize) {
    let mask = spans.iter().fold(0usize, |m, s| m | ((s.mask() as usize) << s.start));
    let mut offs = vec![0usize; key.len()];
    let mut sub = mask;
    loop {
        offs[key.key(sub)] = sub;
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
    (offs, mask)
}

#[derive(Clone, Debug)]
pub struct TaggedResult {
    pub state: StateVector,
    pub success_probability: f64,
}

/// Antisymmetrises (or, with `symmetric`, symmetrises) the listed states over
/// the particle registers of `layout`, using one `t`-qubit tag per particle
/// that is erased by phase estimation against the synthetic spectrum. The
/// permuted tagged state is written directly; QFT, controlled synthetic
/// evolution and tag measurement are carried out explicitly.
pub fn antisymmetrize_tagged(spec: &SynthSpectrum, layout: &RegisterLayout, symmetric: bool) -> Result<TaggedResult> {
    spec.validate()?;
    let p = layout.num_particles();
    if p != spec.len() {
        return Err(Error::DimensionMismatch {
            left: spec.len(),
            right: p,
        });
    }
    if !layout.ancillas().is_empty() {
        return Err(Error::Layout("antisymmetrisation expects a layout without ancillas".into()));
    }
    let t = spec.tag_width;
    let mut full = layout.clone();
    for r in 0..p {
        full = full.with_ancilla(&format!("tag{r}"), t)?;
    }
    let full = Arc::new(full);
    let mut regs = Vec::with_capacity(p);
    for r in 0..p {
        let spans = full.particle(r)?.dims.clone();
        let key = SpanKey::new(&spans)?;
        if key.len() != spec.states[0].len() {
            return Err(Error::DimensionMismatch {
                left: spec.states[0].len(),
                right: key.len(),
            });
        }
        let (offs, mask) = register_offsets(&key, &spans);
        regs.push((key, offs, mask));
    }
    let tag_spans: Vec<Span> = (0..p)
        .map(|r| full.ancilla_span(&format!("tag{r}")))
        .collect::<Result<_>>()?;
    let sysq = layout.num_qubits();
    let sys_dim = 1usize << sysq;
    let tags = spec.tags();
    let perms = permutations(p);
    let norm = 1.0 / (perms.len() as f64).sqrt();
    let mut amps = vec![C64::new(0.0, 0.0); full.dim()];
    for (perm, sign) in &perms {
        let tag_base: usize = perm
            .iter()
            .zip(&tag_spans)
            .map(|(&i, s)| (tags[i] as usize) << s.start)
            .sum();
        for i in 0..sys_dim {
            let mut a = C64::new(sign * norm, 0.0);
            if symmetric {
                a = C64::new(norm, 0.0);
            }
            for (r, &src) in perm.iter().enumerate() {
                a *= spec.states[src][regs[r].0.key(i)];
            }
            amps[tag_base | i] = a;
        }
    }
    let mut st = StateVector::from_amplitudes(full.clone(), amps)?;
    for s in &tag_spans {
        qft_slice(st.amplitudes_mut(), *s, Convention::TwosComplement, Direction::Forward)?;
    }
    let m = (1u64 << t) as f64;
    for (r, s) in tag_spans.iter().enumerate() {
        let (_, offs, mask) = &regs[r];
        for j in 0..t {
            let control = 1usize << (s.start + j);
            let phi = -2.0 * PI * (1u64 << j) as f64 / m;
            apply_controlled_register(st.amplitudes_mut(), control, offs, *mask, |v| spec.apply_exp(phi, v));
        }
    }
    let mut success = 1.0;
    for s in &tag_spans {
        for j in 0..t {
            success *= st.measure_forced(s.start + j, Basis::X, 0)?.probability;
        }
    }
    let scale = (2f64.powi((p * t) as i32)).sqrt();
    let sys_amps: Vec<C64> = st.amplitudes()[..sys_dim].iter().map(|a| a * scale).collect();
    let mut out = StateVector::from_amplitudes(Arc::new(layout.clone()), sys_amps)?;
    out.normalize()?;
    Ok(TaggedResult {
        state: out,
        success_probability: success,
    })
}

fn apply_controlled_register<F: Fn(&mut [C64])>(amps: &mut [C64], control: usize, offs: &[usize], mask: usize, op: F) {
    let mut tmp = vec![C64::new(0.0, 0.0); offs.len()];
    for base in 0..amps.len() {
        if base & mask != 0 || base & control == 0 {
            continue;
        }
        for (t, &o) in tmp.iter_mut().zip(offs) {
            *t = amps[base | o];
        }
        op(&mut tmp);
        for (t, &o) in tmp.iter().zip(offs) {
            amps[base | o] = *t;
        }
    }
}
