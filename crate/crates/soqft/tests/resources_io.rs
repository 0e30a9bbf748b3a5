mod common;

use common::*;
use proptest::prelude::*;
use soqft::grid::SimulationBox;
use soqft::io::{decode_gwsv, encode_gwsv, parse_time_series, DensityGrid};
use soqft::layout::{Convention, RegisterLayout};
use soqft::observables::TimeSeries;
use soqft::resources::{
    box_side_for, cycle_depth, helium_reference_density, n_r_from_box, qubits_required, reports_csv, MoleculeSpec,
    ResourceReport, ShellAtom,
};
use soqft::state::StateVector;
use std::sync::Arc;

fn molecule(particles: u64, z_max: u64) -> MoleculeSpec {
    MoleculeSpec {
        name: "m".into(),
        particles,
        electrons: particles,
        z_max,
        c3: 5.0,
        n_r_override: None,
    }
}

#[test]
fn helium_reference_gives_its_own_box() {
    let he = ShellAtom {
        position: [0.0; 3],
        n: 2,
        z_eff: 2.0,
        occupancy: 2.0,
    };
    let rho0 = helium_reference_density();
    let l = box_side_for(&[he], rho0).unwrap();
    assert!((l - 25.0).abs() < 1e-3, "{l}");
    assert_eq!(n_r_from_box(7, 9, 0.85), 10);
}

#[test]
fn report_csv_has_one_row_per_molecule() {
    let reports: Vec<ResourceReport> = [MoleculeSpec::ammonia(), MoleculeSpec::hexafluoroethane()]
        .iter()
        .map(|m| ResourceReport::new(m).unwrap())
        .collect();
    let text = reports_csv(&reports);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("C2F6,74,9,10,2220,"));
}

#[test]
fn invalid_molecules_are_rejected() {
    assert!(qubits_required(&molecule(0, 1)).is_err());
    let mut m = molecule(4, 1);
    m.electrons = 5;
    assert!(qubits_required(&m).is_err());
}

#[test]
fn density_grid_orders_axes_by_coordinate() {
    let bx = SimulationBox::new(1, 4.0, 2, 0.5).unwrap();
    // raw values 0,1,2,3 are coordinates 0,1,-2,-1
    let g = DensityGrid::from_local(&bx, Convention::TwosComplement, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(g.values, vec![0.3, 0.4, 0.1, 0.2]);
    let back = DensityGrid::decode(&g.encode(), "mem").unwrap();
    assert_eq!(back, g);
    assert!(DensityGrid::decode(&g.encode()[..10], "mem").is_err());
    assert!(g.to_pgm().starts_with(b"P5\n4 1\n255\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qubit_count_is_monotone(p in 1u64..200, z in 1u64..60) {
        let (n, q) = qubits_required(&molecule(p, z)).unwrap();
        let (n2, q2) = qubits_required(&molecule(p + 1, z)).unwrap();
        let (n3, _) = qubits_required(&molecule(p, z + 1)).unwrap();
        prop_assert!(n2 >= n && q2 > q && n3 >= n);
        prop_assert_eq!(q, 3 * p * n);
        prop_assert!(cycle_depth(n, p + 1) >= cycle_depth(n, p));
    }

    #[test]
    fn statevector_dump_round_trips(seed in 0u64..1000, n in 1usize..6) {
        let layout = Arc::new(RegisterLayout::grid(1, 1, n).unwrap());
        let st = StateVector::from_amplitudes(layout, random_state(1 << n, seed)).unwrap();
        let bytes = encode_gwsv(&st);
        let (q, amps) = decode_gwsv(&bytes, "mem").unwrap();
        prop_assert_eq!(q, n);
        prop_assert_eq!(amps.as_slice(), st.amplitudes());
        prop_assert!(decode_gwsv(&bytes[..bytes.len() - 1], "mem").is_err());
    }

    #[test]
    fn time_series_csv_round_trips(vals in proptest::collection::vec(-1e3f64..1e3, 1..20), complex in any::<bool>()) {
        let mut ts = TimeSeries::new("x", complex);
        for (i, &v) in vals.iter().enumerate() {
            ts.push(i as f64 * 0.1, num_complex::Complex64::new(v, if complex { -v } else { 0.0 })).unwrap();
        }
        let back = parse_time_series(&ts.to_csv(), "x", "mem").unwrap();
        prop_assert_eq!(back.times, ts.times);
        prop_assert_eq!(back.values, ts.values);
        prop_assert_eq!(back.complex, complex);
    }
}
