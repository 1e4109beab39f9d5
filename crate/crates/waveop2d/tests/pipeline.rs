use std::sync::Arc;

use waveop2d::birman_schwinger::TOL_SING;
use waveop2d::free_ops::{f0_fibered, EnergyGrid};
use waveop2d::grid::{make_grid, make_packet, WavePacketSpec};
use waveop2d::potential::{support_for, Potential};
use waveop2d::smatrix::s_curve;
use waveop2d::theorem_lab::{packet_f0, EscapingFamily, StationaryEngine};

fn engine(n_lambda: usize) -> StationaryEngine {
    let grid = make_grid(128, 16.0).unwrap();
    let q = Arc::new(support_for(&Potential::gaussian(1.0), &grid, 1e-3, 4000).unwrap());
    let eg = Arc::new(EnergyGrid::log(1e-4, 100.0, n_lambda).unwrap());
    StationaryEngine::new(q, eg, 64).unwrap()
}

#[test]
fn wplus_routes_agree_on_escaping_packets() {
    let eng = engine(277);
    let fam = EscapingFamily {
        distances: vec![4.0, 6.0, 8.0],
        ..EscapingFamily::default()
    };
    let phis = fam.fibered(&eng.egrid, eng.n_omega).unwrap();
    let sw = eng.sweep(&phis, true).unwrap();
    for j in 0..phis.len() {
        let (a, b) = eng.wplus_paths_from(&sw, j).unwrap();
        let d = a.sub(&b).norm() / phis[j].norm();
        assert!(d < 1e-2, "member {j}: routes differ by {d:e}");
    }
}

#[test]
fn packet_through_the_pipeline() {
    // numerical F₀ of a packet on the grid agrees with the closed form on the engine grid,
    // and the S-matrix on that grid is unitary
    let grid = make_grid(128, 16.0).unwrap();
    let spec = WavePacketSpec::new([1.0, -0.5], [1.5, 0.5], 1.2);
    let eg = Arc::new(EnergyGrid::log(1e-3, 40.0, 64).unwrap());
    let num = f0_fibered(&make_packet(&grid, &spec).unwrap(), &eg, 32).unwrap();
    let closed = packet_f0(&spec, 0.0, &eg, 32).unwrap();
    assert!(num.sub(&closed).norm() < 1e-6);

    let q = Arc::new(support_for(&Potential::gaussian(1.0), &grid, 1e-3, 4000).unwrap());
    let curve = s_curve(&EnergyGrid::log(0.05, 20.0, 6).unwrap(), &q, 32, TOL_SING).unwrap();
    assert!(curve.iter().all(|f| f.unitarity_defect < 1e-6));
}
