use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::ValueEnum;
use faer::Mat;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use waveop2d::birman_schwinger::{zero_energy_diagnostic, RESONANCE_DROP};
use waveop2d::grid::make_packet;
use waveop2d::potential::{sample_potential, SupportQuadrature};
use waveop2d::propagation::{wave_operator_ladder, Channel};
use waveop2d::smatrix::{
    det_phase_curve, reciprocity_defect, solve_fiber, write_csv, FiberOperator, TOL_UNIT,
};
use waveop2d::theorem_lab::{
    bound_states_with, check_family, commutator_compactness_probe, levinson_check, phase_curve,
    radial_shooting_oracle, stationary_cross_check, StationaryEngine, TimeDomainSetup,
    VerificationReport, LEVINSON_TOL,
};

use crate::cache::{self, Cache, VERSION_TAG};
use crate::config::{Invalid, RunConfig};
use crate::output::{Plot, Summary, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Cmd {
    Smatrix,
    BoundStates,
    ZeroEnergy,
    WaveOp,
    Verify,
    Levinson,
    Report,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::Smatrix => "smatrix",
            Cmd::BoundStates => "bound-states",
            Cmd::ZeroEnergy => "zero-energy",
            Cmd::WaveOp => "wave-op",
            Cmd::Verify => "verify",
            Cmd::Levinson => "levinson",
            Cmd::Report => "report",
        }
    }

    const COMPUTE: [Cmd; 6] = [
        Cmd::Smatrix,
        Cmd::BoundStates,
        Cmd::ZeroEnergy,
        Cmd::WaveOp,
        Cmd::Verify,
        Cmd::Levinson,
    ];
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub cache: Cache,
    pub out: PathBuf,
}

impl Ctx {
    /// The config sections a subcommand's result depends on.
    fn inputs(&self, cmd: Cmd) -> serde_json::Value {
        let c = &self.cfg;
        match cmd {
            Cmd::Smatrix => json!({"grid": c.grid, "potential": c.potential, "energy": c.energy}),
            Cmd::BoundStates => {
                json!({"grid": c.grid, "potential": c.potential, "bound_states": c.bound_states})
            }
            Cmd::ZeroEnergy => {
                json!({"grid": c.grid, "potential": c.potential, "ladder": c.energy.zero_energy_ladder})
            }
            Cmd::WaveOp => json!({"potential": c.potential, "propagation": c.propagation}),
            Cmd::Verify => json!({
                "grid": c.grid, "potential": c.potential, "energy": c.energy, "dilation": c.dilation,
                "propagation": c.propagation, "verify": c.verify,
            }),
            Cmd::Levinson => {
                json!({"grid": c.grid, "potential": c.potential, "levinson": c.levinson, "bound_states": c.bound_states})
            }
            Cmd::Report => json!({}),
        }
    }

    fn summary_key(&self, cmd: Cmd) -> String {
        cache::key(&format!("summary/{}", cmd.name()), &self.inputs(cmd))
    }

    fn summary(
        &self,
        cmd: Cmd,
        report: VerificationReport,
        data: impl Serialize,
        tables: Vec<Table>,
        plots: Vec<Plot>,
    ) -> Result<Summary> {
        Ok(Summary {
            subcommand: cmd.name().into(),
            version: VERSION_TAG.into(),
            report,
            data: serde_json::to_value(data)?,
            tables,
            plots,
        })
    }
}

/// Runs one subcommand, writes its artifacts and returns whether every check passed.
pub fn run(cmd: Cmd, ctx: &Ctx) -> Result<bool> {
    let summary = match cmd {
        Cmd::Report => report(ctx)?,
        Cmd::Smatrix => {
            let s = smatrix(ctx)?;
            ctx.cache.put_json(&ctx.summary_key(cmd), &s)?;
            s
        }
        _ => {
            let key = ctx.summary_key(cmd);
            match ctx.cache.get_json::<Summary>(&key) {
                Some(s) => {
                    info!("{}: cached result {key}", cmd.name());
                    s
                }
                None => {
                    let s = match cmd {
                        Cmd::BoundStates => bound_states(ctx)?,
                        Cmd::ZeroEnergy => zero_energy(ctx)?,
                        Cmd::WaveOp => wave_op(ctx)?,
                        Cmd::Verify => verify(ctx)?,
                        Cmd::Levinson => levinson(ctx)?,
                        Cmd::Smatrix | Cmd::Report => unreachable!(),
                    };
                    ctx.cache.put_json(&key, &s)?;
                    s
                }
            }
        }
    };
    summary.emit(&ctx.out)?;
    for c in &summary.report.checks {
        info!(
            "{:?} {}: {:.3e} (threshold {:.3e})",
            c.verdict, c.name, c.defect, c.threshold
        );
    }
    Ok(summary.report.all_pass())
}

fn fiber_s(ctx: &Ctx, quad: &Arc<SupportQuadrature>, lambda: f64) -> Result<FiberOperator> {
    let c = &ctx.cfg;
    let no = c.energy.n_omega;
    let key = cache::key(
        "smatrix-fiber",
        &json!({"grid": c.grid, "potential": c.potential, "n_omega": no, "tol_sing": c.energy.tol_sing, "lambda": lambda}),
    );
    let (vals, hit) = ctx.cache.complex(&key, &[no, no], || {
        let fs = solve_fiber(lambda, quad, no, c.energy.tol_sing)
            .with_context(|| format!("S({lambda:e})"))?;
        Ok((0..no)
            .flat_map(|i| (0..no).map(move |j| (i, j)))
            .map(|(i, j)| fs.s.matrix[(i, j)])
            .collect())
    })?;
    info!(
        "lambda = {lambda:.6e}: {}",
        if hit { "cached S" } else { "M0 inverted" }
    );
    Ok(FiberOperator::new(
        lambda,
        Mat::from_fn(no, no, |i, j| vals[i * no + j]),
    ))
}

fn smatrix(ctx: &Ctx) -> Result<Summary> {
    let egrid = ctx.cfg.energy_grid()?;
    let quad = ctx.cfg.quadrature()?;
    let fibers = egrid
        .lambdas()
        .par_iter()
        .map(|&l| fiber_s(ctx, &quad, l))
        .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = egrid.lambdas().to_vec();
    let unit: Vec<f64> = fibers.iter().map(|f| f.unitarity_defect).collect();
    let recip: Vec<f64> = fibers.iter().map(reciprocity_defect).collect();
    let dist: Vec<f64> = fibers.iter().map(|f| f.distance_from_identity()).collect();
    let phase = match det_phase_curve(&fibers, TOL_UNIT) {
        Ok(p) => p,
        Err(e) => {
            warn!("no det S phase curve: {e}");
            vec![f64::NAN; fibers.len()]
        }
    };
    let mut w = fs::File::create(ctx.out_file("smatrix.csv")?)?;
    write_csv(&mut w, &fibers)?;

    let mut rep = VerificationReport::new(&ctx.hash);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    rep.below(
        "unitarity",
        max(&unit),
        TOL_UNIT,
        vec![
            ("lambda".into(), lambdas.clone()),
            ("defect".into(), unit.clone()),
        ],
    );
    rep.below(
        "reciprocity",
        max(&recip),
        TOL_UNIT,
        vec![("defect".into(), recip.clone())],
    );
    let mut t = Table::new(
        "unitarity",
        &[
            "lambda",
            "unitarity_defect",
            "reciprocity_defect",
            "distance_from_identity",
            "det_phase",
        ],
    );
    for i in 0..lambdas.len() {
        t.push(vec![lambdas[i], unit[i], recip[i], dist[i], phase[i]]);
    }
    let plots = vec![
        Plot::new("S(λ) unitarity defect", "λ", "‖S*S−1‖", true, true).with(
            "defect",
            lambdas.clone(),
            unit.clone(),
        ),
        Plot::new("arg det S(λ)", "λ", "phase", true, false).with(
            "arg det S",
            lambdas.clone(),
            phase.clone(),
        ),
    ];
    let n_s = quad.len();
    let data = json!({"n_s": n_s, "n_omega": ctx.cfg.energy.n_omega, "lambda": lambdas, "unitarity": unit, "det_phase": phase});
    ctx.summary(Cmd::Smatrix, rep, data, vec![t], plots)
}

impl Ctx {
    fn out_file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

fn bound_states(ctx: &Ctx) -> Result<Summary> {
    let c = &ctx.cfg;
    let grid = c.grid()?;
    let p = c.potential()?;
    let vfield = sample_potential(&p, &grid)?;
    let vmax = vfield
        .values()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.re.abs()));
    let h = grid.spacing();
    if h * h * vmax >= 0.5 {
        return Err(Invalid(format!(
            "grid too coarse for bound states: h^2 max|V| = {:.3} >= 0.5",
            h * h * vmax
        ))
        .into());
    }
    let bs = &c.bound_states;
    let set = bound_states_with(&grid, &vfield, bs.k_max, &bs.solver)?;
    if set.saturated {
        warn!(
            "all {} slots came back bound; raise bound_states.k_max to be sure of the count",
            bs.k_max
        );
    }
    let mut rep = VerificationReport::new(&ctx.hash);
    let max_res = set.residuals.iter().cloned().fold(0.0, f64::max);
    rep.below(
        "residual",
        max_res,
        1e-6,
        vec![("residual".into(), set.residuals.clone())],
    );
    rep.below("orthonormality", set.orthonormality, 1e-8, vec![]);
    let oracle = if p.is_radial() {
        Some(radial_shooting_oracle(&p, bs.ell_max)?)
    } else {
        None
    };
    if let Some(o) = &oracle {
        if !set.saturated {
            let diff = (set.count() as f64 - o.count as f64).abs();
            rep.below(
                "oracle_count",
                diff,
                0.5,
                vec![
                    ("grid".into(), set.energies.clone()),
                    ("oracle".into(), o.energies()),
                ],
            );
        }
    }
    let mut t = Table::new("bound_states", &["k", "energy", "residual"]);
    for (k, (e, r)) in set.energies.iter().zip(&set.residuals).enumerate() {
        t.push(vec![k as f64, *e, *r]);
    }
    let data = json!({"states": set, "oracle": oracle});
    ctx.summary(Cmd::BoundStates, rep, data, vec![t], vec![])
}

fn zero_energy(ctx: &Ctx) -> Result<Summary> {
    let quad = ctx.cfg.quadrature()?;
    let ladder = &ctx.cfg.energy.zero_energy_ladder;
    let mut rep = VerificationReport::new(&ctx.hash);
    if quad.is_empty() {
        // M₀ = u on an empty support: nothing can degenerate
        rep.below("sigma_min_drop", 0.0, RESONANCE_DROP, vec![]);
        return ctx.summary(Cmd::ZeroEnergy, rep, json!({"n_s": 0}), vec![], vec![]);
    }
    let z = zero_energy_diagnostic(&quad, ladder)?;
    rep.below(
        "sigma_min_drop",
        z.drop,
        RESONANCE_DROP,
        vec![
            ("lambda".into(), z.lambdas.clone()),
            ("sigma_min".into(), z.sigma_min.clone()),
        ],
    );
    let mut t = Table::new("zero_energy", &["lambda", "sigma_min", "condition"]);
    for i in 0..z.lambdas.len() {
        t.push(vec![z.lambdas[i], z.sigma_min[i], z.condition[i]]);
    }
    let plot = Plot::new("σ_min(M₀(λ+i0)) ladder", "λ", "σ_min", true, true).with(
        "σ_min",
        z.lambdas.clone(),
        z.sigma_min.clone(),
    );
    ctx.summary(Cmd::ZeroEnergy, rep, &z, vec![t], vec![plot])
}

fn wave_op(ctx: &Ctx) -> Result<Summary> {
    let pr = &ctx.cfg.propagation;
    let grid = ctx.cfg.propagation_grid()?;
    let vfield = sample_potential(&ctx.cfg.potential()?, &grid)?;
    let f = make_packet(&grid, &pr.packet.spec())?;
    let mut rep = VerificationReport::new(&ctx.hash);
    let mut t = Table::new("wave_op", &["channel", "time", "norm", "increment"]);
    let mut plot = Plot::new(
        "Cook increments ‖Ω(T_{k+1})−Ω(T_k)‖",
        "T",
        "increment",
        true,
        true,
    );
    let mut records = Vec::new();
    for (ch, sign, name) in [(Channel::Minus, -1.0, "W-"), (Channel::Plus, 1.0, "W+")] {
        let (_, rec) = wave_operator_ladder(&f, &vfield, ch, &pr.ladder, pr.dt, pr.tol)?;
        let last = rec.increments.last().copied().unwrap_or(0.0) / f.norm();
        rep.below(
            &format!("cauchy_{name}"),
            last,
            pr.tol,
            vec![("increments".into(), rec.increments.clone())],
        );
        for (k, tm) in rec.times.iter().enumerate() {
            let inc = if k == 0 {
                f64::NAN
            } else {
                rec.increments[k - 1]
            };
            t.push(vec![sign, *tm, rec.norms[k], inc]);
        }
        plot = plot.with(name, rec.times[1..].to_vec(), rec.increments.clone());
        records.push(rec);
    }
    ctx.summary(Cmd::WaveOp, rep, &records, vec![t], vec![plot])
}

// r_last/r_first, with an identically vanishing sequence counted as fully decayed
fn decay_ratio(v: &[f64]) -> f64 {
    match (v.first(), v.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => 0.0,
    }
}

// (max − min)/max; flat (or vanishing) controls give 0
fn variation(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

fn verify(ctx: &Ctx) -> Result<Summary> {
    let c = &ctx.cfg;
    let v = &c.verify;
    let quad = c.quadrature()?;
    let egrid = c.energy_grid()?;
    let mut engine = StationaryEngine::new(quad.clone(), egrid.clone(), c.energy.n_omega)?;
    engine.log_cfg = c.dilation.clone();
    let family = v.family.family();
    let phis = family.fibered(&egrid, c.energy.n_omega)?;
    let overlap = check_family(&phis, |a, b| a.inner(b), |a| a.norm())?;
    let free = c.is_free() || quad.is_empty();

    let mut rep = VerificationReport::new(&ctx.hash);
    let mut tables = Vec::new();

    // ⟨g,(W₋−1)f⟩, stationary against time-dependent
    let mut cross = None;
    if v.cross_check {
        let f = c.propagation.packet.spec();
        let gs: Vec<_> = v.pairs.iter().map(|p| p.spec()).collect();
        let (rel, rows): (Vec<f64>, Vec<Vec<f64>>) = if free {
            // H = H₀: both sides vanish identically
            (
                vec![0.0; gs.len()],
                (0..gs.len())
                    .map(|k| vec![k as f64, 0.0, 0.0, 0.0, 0.0, 0.0])
                    .collect(),
            )
        } else {
            let pr = &c.propagation;
            let td = TimeDomainSetup {
                n: pr.n,
                half_width: pr.half_width,
                dt: pr.dt,
                ladder: pr.ladder.clone(),
                tol: pr.tol,
            };
            let cc = stationary_cross_check(&engine, &c.potential()?, &f, &gs, &td)?;
            let rows = cc
                .pairs
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    vec![
                        k as f64,
                        p.stationary[0],
                        p.stationary[1],
                        p.time_domain[0],
                        p.time_domain[1],
                        p.relative,
                    ]
                })
                .collect();
            let rel = cc.pairs.iter().map(|p| p.relative).collect();
            cross = Some(cc);
            (rel, rows)
        };
        let worst = rel.iter().cloned().fold(0.0, f64::max);
        rep.below(
            "wminus_cross_check",
            worst,
            v.cross_check_tol,
            vec![("relative".into(), rel)],
        );
        let mut t = Table::new(
            "cross_check",
            &[
                "pair",
                "stationary_re",
                "stationary_im",
                "time_re",
                "time_im",
                "relative",
            ],
        );
        rows.into_iter().for_each(|r| t.push(r));
        tables.push(t);
    }

    // one sweep gives K, the (S−1) control and both W₊ routes
    let (mut remainder, mut control, mut wplus) = (
        vec![0.0; phis.len()],
        vec![0.0; phis.len()],
        vec![0.0; phis.len()],
    );
    if !free {
        let sw = engine.sweep(&phis, true)?;
        for (j, phi) in phis.iter().enumerate() {
            remainder[j] = engine.remainder_from_b(&sw.b[j])?.norm();
            control[j] = engine.s_minus_1_from_b(&sw.b[j])?.norm();
            let (a, b) = engine.wplus_paths_from(&sw, j)?;
            wplus[j] = a.sub(&b).norm() / phi.norm();
        }
    }
    let comm = commutator_compactness_probe(&phis, &quad, &c.dilation)?;
    let (commutator, identity) = (comm.decay.values.clone(), comm.decay.controls.clone());

    let dist = family.distances.clone();
    let ev = |name: &str, v: &[f64]| {
        vec![
            ("distance".to_string(), dist.clone()),
            (name.to_string(), v.to_vec()),
        ]
    };
    rep.below(
        "remainder_decay",
        decay_ratio(&remainder),
        1.0 / v.decay_factor,
        ev("norm_K_phi", &remainder),
    );
    rep.below(
        "remainder_control_variation",
        variation(&control),
        1.0 - 1.0 / v.control_spread,
        ev("norm_S_minus_1_phi", &control),
    );
    rep.below(
        "commutator_decay",
        decay_ratio(&commutator),
        1.0 / v.decay_factor,
        ev("norm_D_xi", &commutator),
    );
    rep.below(
        "commutator_control_variation",
        variation(&identity),
        1.0 - 1.0 / v.control_spread,
        ev("norm_xi", &identity),
    );
    rep.below(
        "constant_symbol_commutator",
        comm.constant_symbol_defect,
        v.constant_symbol_tol,
        vec![],
    );
    // the first member still sits on the potential; the routes differ by K′ there
    let wmax = wplus.iter().skip(1).cloned().fold(0.0, f64::max);
    rep.below(
        "wplus_routes",
        wmax,
        v.wplus_tol,
        ev("relative_difference", &wplus),
    );

    let mut t = Table::new(
        "family",
        &[
            "distance",
            "norm_K_phi",
            "norm_S_minus_1_phi",
            "norm_D_xi",
            "norm_xi",
            "wplus_difference",
        ],
    );
    for j in 0..phis.len() {
        t.push(vec![
            dist[j],
            remainder[j],
            control[j],
            commutator[j],
            identity[j],
            wplus[j],
        ]);
    }
    tables.push(t);
    let plots = vec![
        Plot::new(
            "Remainder and commutator along the escaping family",
            "|x₀|",
            "norm",
            false,
            true,
        )
        .with("‖Kφ_n‖", dist.clone(), remainder.clone())
        .with("‖Dξ_n‖", dist.clone(), commutator.clone()),
        Plot::new("Controls", "|x₀|", "norm", false, true)
            .with("‖(S−1)φ_n‖", dist.clone(), control.clone())
            .with("‖ξ_n‖", dist.clone(), identity.clone()),
    ];
    let data =
        json!({"max_overlap": overlap, "n_s": quad.len(), "cross_check": cross, "family": family});
    ctx.summary(Cmd::Verify, rep, data, tables, plots)
}

fn levinson(ctx: &Ctx) -> Result<Summary> {
    let c = &ctx.cfg;
    let p = c.potential()?;
    let quad = c.quadrature()?;
    let n_bound = if p.is_radial() {
        radial_shooting_oracle(&p, c.bound_states.ell_max)?.count
    } else {
        let grid = c.grid()?;
        let set = bound_states_with(
            &grid,
            &sample_potential(&p, &grid)?,
            c.bound_states.k_max,
            &c.bound_states.solver,
        )?;
        if set.saturated {
            warn!(
                "bound-state count saturated at k_max = {}",
                c.bound_states.k_max
            );
        }
        set.count()
    };
    let curve = phase_curve(&quad, &c.levinson)?;
    let lev = levinson_check(&curve, n_bound)?;
    let mut rep = VerificationReport::new(&ctx.hash);
    rep.below(
        "winding_distance",
        lev.distance,
        LEVINSON_TOL,
        vec![("winding".into(), vec![lev.winding])],
    );
    rep.below(
        "winding_count",
        (lev.nearest.unsigned_abs() as f64 - n_bound as f64).abs(),
        0.5,
        vec![
            ("nearest".into(), vec![lev.nearest as f64]),
            ("n_bound".into(), vec![n_bound as f64]),
        ],
    );
    let mut t = Table::new("phase_curve", &["lambda", "phase"]);
    for (l, ph) in curve.lambdas.iter().zip(&curve.phase) {
        t.push(vec![*l, *ph]);
    }
    let plot = Plot::new("arg det S(λ), unwrapped", "λ", "phase", true, false).with(
        "arg det S",
        curve.lambdas.clone(),
        curve.phase.clone(),
    );
    ctx.summary(Cmd::Levinson, rep, &lev, vec![t], vec![plot])
}

fn report(ctx: &Ctx) -> Result<Summary> {
    let mut merged = VerificationReport::new(&ctx.hash);
    let mut found = serde_json::Map::new();
    let mut missing = Vec::new();
    let mut plots = Vec::new();
    for cmd in Cmd::COMPUTE {
        match ctx.cache.get_json::<Summary>(&ctx.summary_key(cmd)) {
            Some(s) => {
                for mut check in s.report.checks.clone() {
                    check.name = format!("{}/{}", cmd.name(), check.name);
                    merged.checks.push(check);
                }
                plots.extend(s.plots.iter().cloned().map(|mut p| {
                    p.title = format!("{}: {}", cmd.name(), p.title);
                    p
                }));
                found.insert(
                    cmd.name().into(),
                    json!({"report": s.report, "data": s.data}),
                );
            }
            None => missing.push(cmd.name()),
        }
    }
    if found.is_empty() {
        warn!("no cached results for this configuration; run a subcommand first");
    }
    let data = json!({"results": found, "missing": missing});
    ctx.summary(Cmd::Report, merged, data, vec![], plots)
}
