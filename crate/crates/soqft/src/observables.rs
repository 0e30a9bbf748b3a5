//! Autocorrelation, phase estimation, energy extraction, densities and
//! escape statistics.

use crate::error::{Error, Result};
use crate::hamiltonian::PixelHamiltonian;
use crate::layout::{Convention, RegisterLayout};
use crate::phase::SpanKey;
use crate::propagator::Propagator;
use crate::qft::{qft_slice, Direction};
use crate::reduce;
use crate::state::{StateVector, C64};
use rand::Rng;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

/// Name of the single phase-estimation ancilla.
pub const IPE_ANCILLA: &str = "ipe";
/// Name of the multi-qubit phase-estimation register.
pub const PE_REGISTER: &str = "pe";

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    /// Whether the imaginary part is meaningful (and written out).
    pub complex: bool,
}

impl TimeSeries {
    pub fn new(label: &str, complex: bool) -> Self {
        TimeSeries {
            label: label.to_string(),
            times: Vec::new(),
            values: Vec::new(),
            complex,
        }
    }

    pub fn push(&mut self, t: f64, v: C64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidParameter(format!(
                    "time {t} does not follow {last} in series {}",
                    self.label
                )));
            }
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn push_real(&mut self, t: f64, v: f64) -> Result<()> {
        self.push(t, C64::new(v, 0.0))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// CSV with 17 significant digits: `time,value_re[,value_im]`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(if self.complex {
            "time,value_re,value_im\n"
        } else {
            "time,value_re\n"
        });
        for (t, v) in self.times.iter().zip(&self.values) {
            if self.complex {
                let _ = writeln!(s, "{t:.16e},{:.16e},{:.16e}", v.re, v.im);
            } else {
                let _ = writeln!(s, "{t:.16e},{:.16e}", v.re);
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyMethod {
    IpeFit,
    FourierPeak,
    MultiQubitPe,
    SampledExpectation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEstimate {
    pub energy: f64,
    pub method: EnergyMethod,
    pub uncertainty: f64,
}

/// `⟨Ψ(0)|Ψ(t)⟩`, which is `e^{−iEt}` for an eigenstate of energy `E`.
pub fn autocorrelation(initial: &StateVector, current: &StateVector) -> Result<C64> {
    initial.inner(current)
}

/// Single-ancilla phase estimation: the ancilla starts in `|+⟩` and controls
/// the evolution, which can be extended step by step while the exact `⟨+|`
/// probability is read off without collapsing.
pub struct IpeTracker<'a> {
    prop: &'a Propagator,
    state: StateVector,
    ancilla: usize,
    steps: usize,
}

impl<'a> IpeTracker<'a> {
    /// `system` must carry exactly the propagator's system registers.
    pub fn new(prop: &'a Propagator, system: &StateVector) -> Result<Self> {
        let sysq = prop.system_qubits();
        if system.num_qubits() != sysq {
            return Err(Error::Precondition(
                "phase estimation needs a state holding only the system registers".into(),
            ));
        }
        let layout = Arc::new(system.layout().clone().with_ancilla(IPE_ANCILLA, 1)?);
        let mut state = system.extend_to(layout)?;
        state.hadamard(sysq)?;
        Ok(IpeTracker {
            prop,
            state,
            ancilla: sysq,
            steps: 0,
        })
    }

    /// Wraps a state that already holds the ancilla on top, checking that it
    /// is unentangled and in `|+⟩`.
    pub fn from_prepared(prop: &'a Propagator, state: StateVector) -> Result<Self> {
        let ancilla = prop.system_qubits();
        if state.num_qubits() != ancilla + 1 {
            return Err(Error::Precondition("state must hold the system plus one ancilla".into()));
        }
        let half = state.len() / 2;
        let (lo, hi) = state.amplitudes().split_at(half);
        let d = lo.iter().zip(hi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if d > 1e-10 {
            return Err(Error::Precondition("ancilla is not in |+⟩ or is entangled".into()));
        }
        Ok(IpeTracker {
            prop,
            state,
            ancilla,
            steps: 0,
        })
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        self.prop.controlled_steps(&mut self.state, self.ancilla, steps)?;
        self.steps += steps;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.prop.dt()
    }

    /// Exact `⟨+|` outcome probability of the ancilla.
    pub fn p_plus(&self) -> Result<f64> {
        Ok(self.state.probability_plus(self.ancilla)? / self.state.norm_sqr())
    }

    /// `⟨Ψ(0)|Ψ(t)⟩` recovered from the two ancilla branches.
    pub fn autocorrelation(&self) -> C64 {
        let half = self.state.len() / 2;
        let (lo, hi) = self.state.amplitudes().split_at(half);
        reduce::inner(lo, hi) * 2.0
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    /// Bernoulli estimate of `⟨+|` from `shots` simulated measurements.
    pub fn sample_p_plus<R: Rng + ?Sized>(&self, shots: usize, rng: &mut R) -> Result<f64> {
        let p = self.p_plus()?;
        Ok(sample_bernoulli(p, shots, rng))
    }
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, shots: usize, rng: &mut R) -> f64 {
    if shots == 0 {
        return p;
    }
    let hits = (0..shots).filter(|_| rng.random::<f64>() < p).count();
    hits as f64 / shots as f64
}

/// Exact `⟨+|` probability after `steps` controlled cycles on `system`.
pub fn ipe_probability(prop: &Propagator, system: &StateVector, steps: usize) -> Result<f64> {
    let mut t = IpeTracker::new(prop, system)?;
    t.advance(steps)?;
    t.p_plus()
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Sign attached to the fitted frequency (the fit itself sees only |E|).
    pub negative: bool,
    /// Largest |E| scanned; defaults to the sampling Nyquist limit.
    pub max_energy: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            negative: true,
            max_energy: None,
        }
    }
}

fn fit_residual(t: &[f64], y: &[f64], e: f64) -> (f64, f64) {
    let mut sc = 0.0;
    let mut cc = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let c = (e * ti).cos();
        sc += (yi - 0.5) * c;
        cc += c * c;
    }
    let amp = if cc > 0.0 { sc / cc } else { 0.0 };
    let res: f64 = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - 0.5 - amp * (e * ti).cos()).powi(2))
        .sum();
    (res, 2.0 * amp)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Least-squares fit of `a(t) = ½(1 + r·cos(Et))` to an IPE signal.
pub fn fit_energy_from_signal(series: &TimeSeries, opts: FitOptions) -> Result<EnergyEstimate> {
    let n = series.len();
    if n < 8 {
        return Err(Error::Precondition(format!("{n} samples, at least 8 needed")));
    }
    let t = &series.times;
    let y = series.real();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var < 1e-28 {
        return Err(Error::Unresolvable("flat signal".into()));
    }
    let span = t[n - 1] - t[0];
    let min_dt = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let e_max = opts.max_energy.unwrap_or(PI / min_dt);
    let grid = ((e_max * span.max(min_dt) / (2.0 * PI)) * 40.0).ceil() as usize + 400;
    let de = e_max / grid as f64;
    let (mut best, mut best_r) = (0usize, f64::INFINITY);
    for k in 1..=grid {
        let (r, _) = fit_residual(t, &y, k as f64 * de);
        if r < best_r {
            best_r = r;
            best = k;
        }
    }
    let lo = (best as f64 - 1.0).max(1e-12) * de;
    let hi = (best as f64 + 1.0) * de;
    let e = golden_min(|e| fit_residual(t, &y, e).0, lo, hi, 1e-14);
    let (res, amp) = fit_residual(t, &y, e);
    if amp.abs() < 1e-12 {
        return Err(Error::Unresolvable("no oscillating component".into()));
    }
    let h = (e.abs() * 1e-4).max(1e-8);
    let curv = (fit_residual(t, &y, e + h).0 - 2.0 * res + fit_residual(t, &y, e - h).0) / (h * h);
    let sigma2 = res / (n as f64 - 2.0).max(1.0);
    let uncertainty = if curv > 0.0 { (2.0 * sigma2 / curv).sqrt() } else { f64::INFINITY };
    Ok(EnergyEstimate {
        energy: if opts.negative { -e } else { e },
        method: EnergyMethod::IpeFit,
        uncertainty,
    })
}

/// Energies of the strongest components of a uniformly sampled signal, from
/// Hann-windowed, zero-padded DFT peaks with parabolic interpolation. The
/// reported uncertainty is the resolution `2π/(M·Δt)`.
pub fn fourier_peaks(series: &TimeSeries, count: usize, negative: bool) -> Result<Vec<EnergyEstimate>> {
    let n = series.len();
    if n < 8 {
        return Err(Error::Precondition(format!("{n} samples, at least 8 needed")));
    }
    let dt = (series.times[n - 1] - series.times[0]) / (n - 1) as f64;
    let y = series.real();
    let mean = y.iter().sum::<f64>() / n as f64;
    if y.iter().all(|v| (v - mean).abs() < 1e-14) {
        return Err(Error::Unresolvable("flat signal".into()));
    }
    let m = (n.next_power_of_two()) * 16;
    let mut buf: Vec<C64> = (0..m)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
                C64::new((y[i] - mean) * w, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|z| z.norm()).collect();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for k in 1..mag.len() - 1 {
        if mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] {
            let (a, b, c) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
            let den = a - 2.0 * b + c;
            let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            peaks.push((mag[k], (k as f64 + off) / (m as f64 * dt)));
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let res = 2.0 * PI / (n as f64 * dt);
    Ok(peaks
        .into_iter()
        .take(count)
        .map(|(_, f)| {
            let e = 2.0 * PI * f;
            EnergyEstimate {
                energy: if negative { -e } else { e },
                method: EnergyMethod::FourierPeak,
                uncertainty: res,
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct PhaseEstimation {
    /// Probability of each raw readout `k` of the ancilla register.
    pub distribution: Vec<f64>,
    /// Most likely (or sampled) readout.
    pub readout: usize,
    pub estimate: EnergyEstimate,
}

/// Maps raw readout `k` of an `s`-qubit register to an energy for base
/// evolution time `tau`.
pub fn decode_readout(k: usize, s: usize, tau: f64) -> f64 {
    let signed = Convention::TwosComplement.decode(k as u64, s);
    -2.0 * PI * signed as f64 / ((1usize << s) as f64 * tau)
}

/// `S`-ancilla phase estimation: ancilla bit `j` controls `2^j·N` cycles,
/// followed by an inverse QFT on the register. Without `rng` the most likely
/// readout is reported.
pub fn multi_qubit_phase_estimation<R: Rng + ?Sized>(
    prop: &Propagator,
    system: &StateVector,
    s: usize,
    n: usize,
    rng: Option<&mut R>,
) -> Result<PhaseEstimation> {
    if s == 0 {
        return Err(Error::InvalidParameter("phase estimation needs at least one ancilla".into()));
    }
    let sysq = prop.system_qubits();
    if system.num_qubits() != sysq {
        return Err(Error::Precondition("state must hold only the system registers".into()));
    }
    let layout = Arc::new(system.layout().clone().with_ancilla(PE_REGISTER, s)?);
    let mut st = system.extend_to(layout.clone())?;
    for j in 0..s {
        st.hadamard(sysq + j)?;
    }
    for j in 0..s {
        prop.controlled_steps(&mut st, sysq + j, n << j)?;
    }
    let span = layout.ancilla_span(PE_REGISTER)?;
    qft_slice(st.amplitudes_mut(), span, Convention::TwosComplement, Direction::Inverse)?;
    let m = 1usize << s;
    let block = 1usize << sysq;
    let mut distribution = vec![0.0; m];
    for (k, d) in distribution.iter_mut().enumerate() {
        *d = reduce::norm_sqr(&st.amplitudes()[k * block..(k + 1) * block]);
    }
    let readout = match rng {
        Some(r) => {
            let u: f64 = r.random();
            let mut acc = 0.0;
            let mut pick = m - 1;
            for (k, &p) in distribution.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        }
        None => (0..m).max_by(|&a, &b| distribution[a].total_cmp(&distribution[b])).unwrap_or(0),
    };
    let tau = n as f64 * prop.dt();
    Ok(PhaseEstimation {
        estimate: EnergyEstimate {
            energy: decode_readout(readout, s, tau),
            method: EnergyMethod::MultiQubitPe,
            uncertainty: PI / (m as f64 * tau),
        },
        readout,
        distribution,
    })
}

/// Probability of readout `k` for eigen-energy `e`, register size `s` and base
/// time `tau`.
pub fn pe_kernel(e: f64, k: usize, s: usize, tau: f64) -> f64 {
    let m = (1usize << s) as f64;
    let x = e * tau + 2.0 * PI * k as f64 / m;
    let den = (x / 2.0).sin();
    if den.abs() < 1e-12 {
        return 1.0;
    }
    ((m * x / 2.0).sin() / (m * den)).powi(2)
}

/// `⟨H_kin⟩` from momentum-space and `⟨V⟩` from real-space probabilities.
/// With `shots`, each part is estimated from that many simulated samples.
pub fn sampled_energy_expectation<R: Rng + ?Sized>(
    ham: &PixelHamiltonian,
    system: &StateVector,
    shots: Option<(usize, &mut R)>,
) -> Result<EnergyEstimate> {
    let amps = system.amplitudes();
    if amps.len() != ham.dim() {
        return Err(Error::DimensionMismatch {
            left: amps.len(),
            right: ham.dim(),
        });
    }
    let norm = reduce::norm_sqr(amps);
    let mut k = amps.to_vec();
    ham.to_momentum(&mut k);
    let pk: Vec<f64> = k.iter().map(|a| a.norm_sqr() / norm).collect();
    let pr: Vec<f64> = amps.iter().map(|a| a.norm_sqr() / norm).collect();
    match shots {
        None => {
            let kin = reduce::pairwise_sum(pk.len(), 0.0, |i| pk[i] * ham.kinetic()[i]);
            let pot = reduce::pairwise_sum(pr.len(), 0.0, |i| pr[i] * ham.potential()[i]);
            Ok(EnergyEstimate {
                energy: kin + pot,
                method: EnergyMethod::SampledExpectation,
                uncertainty: 0.0,
            })
        }
        Some((n, rng)) => {
            let (kin, vk) = sample_mean(&pk, ham.kinetic(), n, rng);
            let (pot, vp) = sample_mean(&pr, ham.potential(), n, rng);
            Ok(EnergyEstimate {
                energy: kin + pot,
                method: EnergyMethod::SampledExpectation,
                uncertainty: ((vk + vp) / n.max(1) as f64).sqrt(),
            })
        }
    }
}

fn sample_mean<R: Rng + ?Sized>(p: &[f64], values: &[f64], n: usize, rng: &mut R) -> (f64, f64) {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &x in p {
        acc += x;
        cdf.push(acc);
    }
    let mut s = 0.0;
    let mut s2 = 0.0;
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let i = cdf.partition_point(|&c| c < u).min(p.len() - 1);
        s += values[i];
        s2 += values[i] * values[i];
    }
    let mean = s / n.max(1) as f64;
    (mean, (s2 / n.max(1) as f64 - mean * mean).max(0.0))
}

/// Marginal `|ψ|²` of one particle, indexed by its local pixel index
/// (dimension 0 in the lowest bits). Sums to one.
pub fn probability_density(state: &StateVector, particle: usize) -> Result<Vec<f64>> {
    let layout: &RegisterLayout = state.layout();
    let key = SpanKey::new(&layout.particle(particle)?.dims)?;
    let mut out = vec![0.0; key.len()];
    for (i, a) in state.amplitudes().iter().enumerate() {
        out[key.key(i)] += a.norm_sqr();
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|p| *p /= total);
    }
    Ok(out)
}

/// Cumulative escape probability `1 − Π(1 − p_i)` from per-step increments.
pub fn escape_tracker(times: &[f64], increments: &[f64]) -> Result<TimeSeries> {
    if times.len() != increments.len() {
        return Err(Error::DimensionMismatch {
            left: times.len(),
            right: increments.len(),
        });
    }
    let mut ts = TimeSeries::new("escape", false);
    let mut survive = 1.0;
    for (&t, &p) in times.iter().zip(increments) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("escape increment {p}")));
        }
        survive *= 1.0 - p;
        ts.push_real(t, 1.0 - survive)?;
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(es: &[(f64, f64)], n: usize, span: f64) -> TimeSeries {
        let mut ts = TimeSeries::new("a", false);
        for i in 0..n {
            let t = span * i as f64 / (n - 1) as f64;
            let v: f64 = es.iter().map(|&(w, e)| w * (e * t / 2.0).cos().powi(2)).sum();
            ts.push_real(t, v).unwrap();
        }
        ts
    }

    #[test]
    fn fit_recovers_generator() {
        let ts = signal(&[(1.0, -2.0)], 64, 3.0);
        let e = fit_energy_from_signal(&ts, FitOptions::default()).unwrap();
        assert!((e.energy + 2.0).abs() < 1e-9, "{}", e.energy);
    }

    #[test]
    fn flat_signal_is_unresolvable() {
        let mut ts = TimeSeries::new("a", false);
        for i in 0..10 {
            ts.push_real(i as f64, 1.0).unwrap();
        }
        assert!(matches!(
            fit_energy_from_signal(&ts, FitOptions::default()),
            Err(Error::Unresolvable(_))
        ));
    }

    #[test]
    fn two_component_peaks() {
        let ts = signal(&[(0.5, -2.0), (0.5, -0.7)], 512, 200.0);
        let p = fourier_peaks(&ts, 2, true).unwrap();
        let mut es: Vec<f64> = p.iter().map(|e| e.energy).collect();
        es.sort_by(f64::total_cmp);
        assert!((es[0] + 2.0).abs() < p[0].uncertainty);
        assert!((es[1] + 0.7).abs() < p[0].uncertainty);
    }

    #[test]
    fn escape_accumulates() {
        let ts = escape_tracker(&[1.0, 2.0, 3.0], &[0.5, 0.5, 1.0]).unwrap();
        assert_eq!(ts.real(), vec![0.5, 0.75, 1.0]);
        let z = escape_tracker(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(z.real(), vec![0.0, 0.0]);
    }

    #[test]
    fn series_times_must_increase() {
        let mut ts = TimeSeries::new("a", true);
        ts.push_real(1.0, 0.0).unwrap();
        assert!(ts.push_real(1.0, 0.0).is_err());
        assert_eq!(ts.to_csv().lines().next(), Some("time,value_re,value_im"));
    }

    #[test]
    fn kernel_sums_to_one() {
        let s = 4;
        let total: f64 = (0..16).map(|k| pe_kernel(-1.37, k, s, 0.8)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
