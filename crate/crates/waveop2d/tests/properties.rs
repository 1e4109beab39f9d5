//! Property tests for the invariants of each module.

use std::sync::Arc;

use proptest::prelude::*;
use waveop2d::birman_schwinger::{assemble_m0, invert_m0, TOL_SING};
use waveop2d::dilation::{apply_symbol_aplus, dilate, theta, LogGridConfig, MellinSymbol};
use waveop2d::free_ops::{
    apply_minus_laplacian, apply_r0, f0_adjoint_at, f0_at, AngularFunction, EnergyGrid,
    FiberedFunction,
};
use waveop2d::grid::{
    fourier, inner_product, make_grid, make_packet, Direction, Field2D, WavePacketSpec,
};
use waveop2d::potential::{
    build_support, factorize, sample_potential, support_for, Potential, Shape,
};
use waveop2d::propagation::{free_evolve, Propagator};
use waveop2d::smatrix::{reciprocity_defect, solve_fiber, TOL_UNIT};
use waveop2d::theorem_lab::{bound_states, packet_f0, EscapingFamily, StationaryEngine};
use waveop2d::C64;

fn field(n: usize, vals: &[(f64, f64)]) -> Field2D {
    let g = make_grid(n, 4.0).unwrap();
    Field2D::from_values(g, vals.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
}

fn packet_spec() -> impl Strategy<Value = WavePacketSpec> {
    (
        -1.5f64..1.5,
        -1.5f64..1.5,
        -1.5f64..1.5,
        -1.5f64..1.5,
        0.8f64..1.4,
    )
        .prop_map(|(x, y, p, q, w)| WavePacketSpec::new([x, y], [p, q], w))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn fourier_is_unitary(v in values(16)) {
        let f = field(16, &v);
        let ff = fourier(&f, Direction::Forward);
        prop_assert!((ff.norm() - f.norm()).abs() < 1e-10 * f.norm());
        let back = fourier(&ff, Direction::Inverse);
        prop_assert!(back.sub(&f).unwrap().norm() < 1e-10 * f.norm());
    }

    #[test]
    fn inner_product_positive_definite(v in values(8)) {
        let f = field(8, &v);
        prop_assume!(f.norm() > 0.0);
        let ip = inner_product(&f, &f).unwrap();
        prop_assert!(ip.re > 0.0 && ip.im.abs() <= 1e-14 * ip.re);
    }

    #[test]
    fn factorization_reproduces_potential(g in -5.0f64..5.0, w in 0.5f64..2.0) {
        let grid = make_grid(32, 6.0).unwrap();
        let p = Potential::new(Shape::Gaussian { width: w }, g, 20.0).unwrap();
        let vf = sample_potential(&p, &grid).unwrap();
        let fac = factorize(&vf);
        for (i, z) in vf.values().iter().enumerate() {
            let back = fac.v[i] * fac.u[i] * fac.v[i];
            // sqrt then square: at most one rounding step apart
            prop_assert!((back - z.re).abs() <= 4.0 * f64::EPSILON * z.re.abs());
        }
    }

    #[test]
    fn support_scales_with_coupling(g in 0.1f64..4.0) {
        let grid = make_grid(32, 6.0).unwrap();
        let base = factorize(&sample_potential(&Potential::gaussian(1.0), &grid).unwrap());
        let scaled = factorize(&sample_potential(&Potential::gaussian(g), &grid).unwrap());
        for i in 0..base.v.len() {
            prop_assert!((scaled.v[i] - g.sqrt() * base.v[i]).abs() <= 1e-14 * scaled.v[i].max(1e-300));
            if base.v[i] > 0.0 {
                prop_assert_eq!(scaled.u[i], base.u[i]);
            }
        }
        let a = build_support(&scaled, 1e-3, 4000).unwrap();
        let b = build_support(&scaled, 1e-3, 4000).unwrap();
        prop_assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn f0_is_linear_and_adjoint_pairs(s1 in packet_spec(), s2 in packet_spec(), c in (-2.0f64..2.0, -2.0f64..2.0), lam in 0.2f64..6.0) {
        let grid = make_grid(128, 12.0).unwrap();
        let c = C64::new(c.0, c.1);
        let (f, g) = (make_packet(&grid, &s1).unwrap(), make_packet(&grid, &s2).unwrap());
        let lhs = f0_at(lam, &f.add(&g.scale(c)).unwrap(), 32).unwrap();
        let (a, b) = (f0_at(lam, &f, 32).unwrap(), f0_at(lam, &g, 32).unwrap());
        for m in 0..32 {
            let want = a.values()[m] + c * b.values()[m];
            prop_assert!((lhs.values()[m] - want).norm() < 1e-12);
        }
        // ⟨F₀f, h⟩_{L²(S)} = ⟨f, F₀*h⟩_grid
        let h = AngularFunction::from_fn(32, |t| C64::new((2.0 * t).cos(), t.sin())).unwrap();
        let nodes: Vec<[f64; 2]> = grid.nodes().collect();
        let adj = f0_adjoint_at(lam, &h, &nodes).unwrap();
        let right: C64 = f.values().iter().zip(&adj).map(|(x, y)| x.conj() * y).sum::<C64>() * grid.cell_area();
        let left = a.inner(&h);
        prop_assert!((left - right).norm() < 1e-8);
    }

    #[test]
    fn resolvent_equation(s in packet_spec(), re in -2.0f64..4.0, im in 0.05f64..2.0) {
        let grid = make_grid(128, 12.0).unwrap();
        let f = make_packet(&grid, &s).unwrap();
        let z = C64::new(re, im);
        let u = apply_r0(&f, z).unwrap();
        let back = apply_minus_laplacian(&u).sub(&u.scale(z)).unwrap();
        prop_assert!(back.sub(&f).unwrap().norm() < 1e-8 * f.norm());
    }

    #[test]
    fn theta_shape(nu in -6.0f64..6.0, d in 1e-3f64..1.0) {
        prop_assert!(theta(nu) >= theta(nu + d));
        if nu.abs() < 3.0 {
            prop_assert!(theta(nu) > theta(nu + d));
        }
        prop_assert!((theta(nu) + theta(-nu) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn propagators_preserve_norm(s in packet_spec(), t in 0.05f64..0.5) {
        let grid = make_grid(128, 12.0).unwrap();
        let f = make_packet(&grid, &s).unwrap();
        prop_assert!((free_evolve(&f, t).unwrap().norm() - 1.0).abs() < 1e-12);
        let v = sample_potential(&Potential::gaussian(1.0), &grid).unwrap();
        let mut prop = Propagator::new(&v);
        prop_assert!((prop.evolve(&f, t, 0.001).unwrap().norm() - 1.0).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn inverse_residual_and_repulsive_never_singular(g in -3.0f64..3.0, lam in 0.05f64..20.0) {
        prop_assume!(g.abs() > 1e-3);
        let grid = make_grid(32, 8.0).unwrap();
        let q = Arc::new(support_for(&Potential::gaussian(g), &grid, 1e-2, 4000).unwrap());
        let m = assemble_m0(lam, &q).unwrap();
        match invert_m0(&m, TOL_SING) {
            Ok(inv) => prop_assert!(inv.residual < 1e-8),
            Err(e) => prop_assert!(g > 0.0, "repulsive potential reported {e}"),
        }
    }

    #[test]
    fn reciprocity_and_coupling_continuity(g in 0.2f64..2.0, lam in 0.3f64..8.0) {
        let grid = make_grid(32, 8.0).unwrap();
        let p = |g: f64| Potential::new(Shape::AnisotropicGaussian { width_x: 1.0, width_y: 0.6 }, g, 20.0).unwrap();
        let q = Arc::new(support_for(&p(g), &grid, 1e-3, 4000).unwrap());
        let s = solve_fiber(lam, &q, 32, TOL_SING).unwrap();
        prop_assert!(reciprocity_defect(&s.s) < 10.0 * TOL_UNIT);
        // same nodes with g(1+δ): ‖δS‖ = O(δ)
        let mut dists = Vec::new();
        for d in [1e-3f64, 2e-3] {
            let mut q2 = (*q).clone();
            q2.v.iter_mut().for_each(|v| *v *= (1.0 + d).sqrt());
            let s2 = solve_fiber(lam, &Arc::new(q2), 32, TOL_SING).unwrap();
            let diff = &s2.s.matrix - &s.s.matrix;
            dists.push(diff.norm_l2());
        }
        let r = dists[1] / dists[0];
        prop_assert!(r > 1.8 && r < 2.2, "{dists:?}");
    }

    #[test]
    fn symbol_calculus(a in -1.0f64..1.0, tau in -1.0f64..1.0) {
        let eg = Arc::new(EnergyGrid::log((-16f64).exp(), 16f64.exp(), 641).unwrap());
        let data = eg.lambdas().iter().map(|l| {
            let s = l.ln();
            let psi = (-(s + 3.0).powi(2) / 2.0).exp() * (-s / 2.0).exp();
            (0..16).map(|m| C64::new(psi, 0.2 * psi * m as f64)).collect()
        }).collect();
        let phi = FiberedFunction::new(eg.clone(), 16, data).unwrap();
        let cfg = LogGridConfig::default();
        let f = MellinSymbol::theta();
        let g = MellinSymbol::r().product(&MellinSymbol::group(a));
        let fg = apply_symbol_aplus(&apply_symbol_aplus(&phi, &g, &cfg).unwrap(), &f, &cfg).unwrap();
        let direct = apply_symbol_aplus(&phi, &f.product(&g), &cfg).unwrap();
        prop_assert!(fg.sub(&direct).norm() < 1e-6 * phi.norm(), "{}", fg.sub(&direct).norm() / phi.norm());
        let a1 = dilate(&apply_symbol_aplus(&phi, &f, &cfg).unwrap(), tau, &cfg).unwrap();
        let a2 = apply_symbol_aplus(&dilate(&phi, tau, &cfg).unwrap(), &f, &cfg).unwrap();
        prop_assert!(a1.sub(&a2).norm() < 1e-4 * phi.norm());
    }

    #[test]
    fn bound_states_are_negative(g in 0.0f64..6.0) {
        let grid = make_grid(64, 8.0).unwrap();
        let v = sample_potential(&Potential::gaussian(g), &grid).unwrap();
        let set = bound_states(&grid, &v, 3).unwrap();
        prop_assert!(set.energies.iter().all(|e| *e < 0.0));
        prop_assert!(set.residuals.iter().all(|r| *r < 1e-6));
    }
}

fn small_engine(g: f64) -> StationaryEngine {
    let grid = make_grid(16, 4.0).unwrap();
    let q = Arc::new(support_for(&Potential::gaussian(g), &grid, 1e-2, 4000).unwrap());
    let eg = Arc::new(EnergyGrid::log(1e-3, 25.0, 60).unwrap());
    StationaryEngine::new(q, eg, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn remainder_is_linear(c in (-2.0f64..2.0, -2.0f64..2.0), a in 0.0f64..6.28) {
        let e = small_engine(1.0);
        let c = C64::new(c.0, c.1);
        let fam = EscapingFamily { speed_momentum: 1.2, width: 1.5, distances: vec![1.0, 2.0], first_angle: a };
        let phis = fam.fibered(&e.egrid, 16).unwrap();
        let combo = phis[0].add(&phis[1].scale(c));
        let sw = e.sweep(&[phis[0].clone(), phis[1].clone(), combo], false).unwrap();
        let k: Vec<_> = sw.b.iter().map(|b| e.remainder_from_b(b).unwrap()).collect();
        let err = k[2].sub(&k[0].add(&k[1].scale(c))).norm();
        prop_assert!(err < 1e-10 * (k[0].norm() + k[1].norm() * c.norm()));
    }

    #[test]
    fn closed_form_packet_has_unit_norm(s in packet_spec(), t in 0.0f64..2.0) {
        let eg = Arc::new(EnergyGrid::log(1e-5, 60.0, 400).unwrap());
        let phi = packet_f0(&s, t, &eg, 64).unwrap();
        prop_assert!((phi.norm() - 1.0).abs() < 1e-4);
    }
}
