mod common;

use common::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soqft::grid::SimulationBox;
use soqft::hamiltonian::{HamiltonianSpec, PixelHamiltonian};
use soqft::layout::{Convention, RegisterLayout};
use soqft::observables::{
    decode_readout, fit_energy_from_signal, fourier_peaks, multi_qubit_phase_estimation, pe_kernel,
    sampled_energy_expectation, FitOptions, IpeTracker, TimeSeries,
};
use soqft::propagator::{Propagator, SoStepPlan};
use soqft::scenario::StateConfig;
use soqft::state::StateVector;
use std::f64::consts::PI;
use std::sync::Arc;

fn hydrogen_1d(n_r: usize, dt: f64) -> (Propagator, Arc<RegisterLayout>) {
    let bx = SimulationBox::new(1, 12.0, n_r, 0.5).unwrap();
    let layout = Arc::new(RegisterLayout::grid(1, 1, n_r).unwrap());
    let prop = Propagator::new(bx, HamiltonianSpec::hydrogenic(1, 1.0), layout.clone(), SoStepPlan::new(dt)).unwrap();
    (prop, layout)
}

fn free_plane_wave(n_r: usize, l: f64, k: i64, dt: f64) -> (Propagator, StateVector, f64) {
    let bx = SimulationBox::new(1, l, n_r, 0.5).unwrap();
    let layout = Arc::new(RegisterLayout::grid(1, 1, n_r).unwrap());
    let a = StateConfig::PlaneWave { k: vec![k] }.amplitudes(&bx, Convention::TwosComplement).unwrap();
    let st = StateVector::from_amplitudes(layout.clone(), a).unwrap();
    let prop = Propagator::new(bx, HamiltonianSpec::free(1), layout, SoStepPlan::new(dt)).unwrap();
    let e = 2.0 * PI * PI / (l * l) * (k * k) as f64;
    (prop, st, e)
}

#[test]
fn plane_wave_phase_estimation_matches_kernel() {
    let (prop, st, e) = free_plane_wave(4, 10.0, 3, 0.05);
    for s in [3usize, 4] {
        let n = 7;
        let pe = multi_qubit_phase_estimation::<ChaCha8Rng>(&prop, &st, s, n, None).unwrap();
        let tau = n as f64 * prop.dt();
        let total: f64 = pe.distribution.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (k, &p) in pe.distribution.iter().enumerate() {
            assert!((p - pe_kernel(e, k, s, tau)).abs() < 1e-12, "s={s} k={k}");
        }
        let m = (1usize << s) as f64;
        assert!((pe.estimate.energy - e).abs() <= 2.0 * PI / (m * tau));
    }
}

#[test]
fn readout_decoding_is_signed() {
    let tau = 0.5;
    assert_eq!(decode_readout(0, 3, tau), 0.0);
    assert!((decode_readout(1, 3, tau) + 2.0 * PI / (8.0 * tau)).abs() < 1e-15);
    assert!((decode_readout(7, 3, tau) - 2.0 * PI / (8.0 * tau)).abs() < 1e-15);
}

#[test]
fn exact_sampled_energy_is_the_expectation() {
    let (prop, layout) = hydrogen_1d(5, 0.01);
    let ham = PixelHamiltonian::new(prop.simulation_box(), prop.spec(), &layout).unwrap();
    let v = random_state(layout.dim(), 11);
    let st = StateVector::from_amplitudes(layout, v.clone()).unwrap();
    let e = sampled_energy_expectation::<ChaCha8Rng>(&ham, &st, None).unwrap();
    assert!((e.energy - ham.expectation(&v)).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noisy = sampled_energy_expectation(&ham, &st, Some((200_000, &mut rng))).unwrap();
    assert!((noisy.energy - e.energy).abs() < 10.0 * noisy.uncertainty.max(1e-3));
}

#[test]
fn fourier_peaks_find_two_lines() {
    let mut ts = TimeSeries::new("p", false);
    for i in 0..2000 {
        let t = i as f64 * 0.05;
        ts.push_real(t, 0.5 + 0.3 * (1.3 * t).cos() + 0.2 * (3.1 * t).cos()).unwrap();
    }
    let mut found: Vec<f64> = fourier_peaks(&ts, 2, false).unwrap().iter().map(|e| e.energy).collect();
    found.sort_by(f64::total_cmp);
    assert!((found[0] - 1.3).abs() < 0.01 && (found[1] - 3.1).abs() < 0.01, "{found:?}");
}

#[test]
fn fit_rejects_flat_and_short_signals() {
    let mut ts = TimeSeries::new("p", false);
    for i in 0..7 {
        ts.push_real(i as f64, 0.5).unwrap();
    }
    assert!(fit_energy_from_signal(&ts, FitOptions::default()).is_err());
    ts.push_real(7.0, 0.5).unwrap();
    assert!(fit_energy_from_signal(&ts, FitOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ipe_probability_tracks_autocorrelation(seed in 0u64..500, steps in 1usize..40) {
        let (prop, layout) = hydrogen_1d(4, 0.02);
        let v = random_state(layout.dim(), seed);
        let st = StateVector::from_amplitudes(layout, v).unwrap();
        let mut plain = st.clone();
        for _ in 0..steps {
            prop.so_step(&mut plain).unwrap();
        }
        let a = st.inner(&plain).unwrap();
        let mut tr = IpeTracker::new(&prop, &st).unwrap();
        tr.advance(steps).unwrap();
        let p = tr.p_plus().unwrap();
        prop_assert!((p - 0.5 * (1.0 + a.re)).abs() < 1e-12);
        prop_assert!((tr.autocorrelation() - a).norm() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_energy(e in 0.05f64..3.0, r in 0.3f64..1.0) {
        let mut ts = TimeSeries::new("p", false);
        for i in 0..200 {
            let t = i as f64 * 0.05;
            ts.push(t, C64::new(0.5 * (1.0 + r * (e * t).cos()), 0.0)).unwrap();
        }
        let fit = fit_energy_from_signal(&ts, FitOptions::default()).unwrap();
        prop_assert!((fit.energy + e).abs() < 1e-6, "fit {} for {}", fit.energy, e);
    }
}
