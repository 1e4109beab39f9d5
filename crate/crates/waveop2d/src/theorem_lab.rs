//! Assembly and verification of the wave-operator identities.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birman_schwinger::{assemble_m0, b_fiber_kernel, invert_m0_fast, TOL_SING};
use crate::dilation::{apply_symbol_aplus, apply_symbol_aplus_nodal, LogGridConfig, MellinSymbol};
use crate::fft::Fft2;
use crate::free_ops::{
    angles, apply_n, f0_adjoint_fibered, f0_adjoint_matrix, f0_fibered, f0_matrix, EnergyGrid,
    FiberedFunction, NodalFibers,
};
use crate::grid::{Field2D, Grid2D, WavePacketSpec};
use crate::potential::{Potential, SupportQuadrature};
use crate::propagation::k2_table;
use crate::smatrix::{unwrap_phase, wrap};
use crate::{Error, Result, C64, I};

// ---------------------------------------------------------------------------
// Radial shooting oracle

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialLevel {
    pub ell: u32,
    pub energy: f64,
    /// 1 for ℓ = 0, 2 for ℓ ≥ 1 (the ±ℓ pair).
    pub degeneracy: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSpectrum {
    /// Sorted by energy.
    pub levels: Vec<RadialLevel>,
    /// Total count in 2D, with the ±ℓ degeneracy.
    pub count: usize,
    /// Highest channel that was searched.
    pub ell_max: u32,
}

impl OracleSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        let mut e = Vec::new();
        for l in &self.levels {
            for _ in 0..l.degeneracy {
                e.push(l.energy);
            }
        }
        e
    }
}

/// Energies above this are not reported as bound.
pub const EPS_FLOOR: f64 = 1e-6;

struct RadialProblem<'a> {
    v: &'a dyn Fn(f64) -> f64,
    r_v: f64,
    v_min: f64,
}

impl RadialProblem<'_> {
    /// Zeros of the regular solution of R'' + R'/r = (ℓ²/r² + V − E)R on (0, r_max), with
    /// r_max far enough into the forbidden region that the Dirichlet cut is invisible.
    fn nodes(&self, ell: u32, e: f64) -> usize {
        let l2 = (ell * ell) as f64;
        let kappa = (-e).sqrt();
        let r_max = self.r_v + 40.0 / kappa;
        let mut r = 1e-4 * self.r_v.min(1.0);
        // R = r^ℓ(1 + ...) with the r^ℓ factor dropped: y = R/r^ℓ would be nicer, but
        // starting at small r0 with the leading behaviour is accurate enough.
        let mut y = [
            1.0,
            if ell == 0 {
                ((self.v)(0.0) - e) * r / 2.0
            } else {
                ell as f64 / r
            },
        ];
        let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] {
            [y[1], -y[1] / r + (l2 / (r * r) + (self.v)(r) - e) * y[0]]
        };
        let mut count = 0;
        while r < r_max {
            let local = ((self.v)(r) - e).abs() + l2 / (r * r) + 1.0;
            let mut h = (0.02 * r).min(0.05 / local.sqrt());
            if r > self.r_v {
                h = h.max((0.1 / kappa).min(0.05 * r));
            }
            h = h.min(r_max - r);
            let k1 = rhs(r, y);
            let k2 = rhs(
                r + h / 2.0,
                [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
            );
            let k3 = rhs(
                r + h / 2.0,
                [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
            );
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            let next = [
                y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            if next[0] == 0.0 || (next[0] < 0.0) != (y[0] < 0.0) {
                count += 1;
            }
            y = next;
            let s = y[0].abs().max(y[1].abs());
            if s > 1e100 {
                y = [y[0] / s, y[1] / s];
            }
            r += h;
        }
        count
    }
}

/// Bound states of a radial potential by shooting in each channel ℓ ≤ ℓ_max.
///
/// Levels are bracketed by the Sturm node count and bisected to relative width 1e-10.
pub fn radial_shooting_oracle(p: &Potential, ell_max: u32) -> Result<OracleSpectrum> {
    if !p.is_radial() {
        return Err(Error::InvalidParameter(format!(
            "{} is not radially symmetric",
            p.tag()
        )));
    }
    let v = |r: f64| p.radial(r);
    let samples: Vec<f64> = (0..=4000).map(|i| v(i as f64 * 0.05)).collect();
    let v_max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if v_max == 0.0 {
        return Ok(OracleSpectrum {
            levels: vec![],
            count: 0,
            ell_max,
        });
    }
    let v_min = samples.iter().cloned().fold(0.0, f64::min);
    let last = samples
        .iter()
        .rposition(|x| x.abs() > 1e-14 * v_max)
        .unwrap_or(0);
    if last == samples.len() - 1 {
        return Err(Error::InvalidParameter(
            "potential does not decay below 1e-14 of its peak by r = 200".into(),
        ));
    }
    let prob = RadialProblem {
        v: &v,
        r_v: (last as f64 + 1.0) * 0.05,
        v_min,
    };
    if v_min >= 0.0 {
        return Ok(OracleSpectrum {
            levels: vec![],
            count: 0,
            ell_max,
        });
    }
    let mut levels = Vec::new();
    for ell in 0..=ell_max {
        let n = prob.nodes(ell, -EPS_FLOOR);
        if n == 0 {
            break;
        }
        let floor = prob.v_min * (1.0 + 1e-9);
        if prob.nodes(ell, floor) != 0 {
            return Err(Error::Bracket(format!(
                "solution already oscillates below min V in channel {ell}"
            )));
        }
        for j in 0..n {
            let (mut lo, mut hi) = (floor, -EPS_FLOOR);
            while hi - lo > 1e-10 * hi.abs().max(1e-3) {
                let mid = 0.5 * (lo + hi);
                if prob.nodes(ell, mid) > j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            levels.push(RadialLevel {
                ell,
                energy: 0.5 * (lo + hi),
                degeneracy: if ell == 0 { 1 } else { 2 },
            });
        }
    }
    levels.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
    let count = levels.iter().map(|l| l.degeneracy).sum();
    Ok(OracleSpectrum {
        levels,
        count,
        ell_max,
    })
}

// ---------------------------------------------------------------------------
// Bound states of the discrete H on the grid

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BoundStateSet {
    /// Sorted ascending, all below −ε_floor.
    pub energies: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Field2D>,
    /// ‖(H − E_k)f_k‖/‖f_k‖.
    pub residuals: Vec<f64>,
    /// max |⟨f_j, f_k⟩ − δ_jk|.
    pub orthonormality: f64,
    /// True if every requested slot came back bound; more states may exist.
    pub saturated: bool,
    pub iterations: usize,
}

impl BoundStateSet {
    pub fn count(&self) -> usize {
        self.energies.len()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundStateOptions {
    pub eps_floor: f64,
    /// Residual target for bound Ritz pairs (unit vectors).
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns beyond k_max.
    pub guard: usize,
}

impl Default for BoundStateOptions {
    fn default() -> Self {
        Self {
            eps_floor: EPS_FLOOR,
            tol: 1e-9,
            max_iter: 1500,
            guard: 3,
        }
    }
}

struct GridHamiltonian {
    n: usize,
    k2: Vec<f64>,
    v: Vec<f64>,
    fft: Fft2,
}

impl GridHamiltonian {
    fn apply(&mut self, x: &[C64]) -> Vec<C64> {
        let c = 1.0 / (self.n * self.n) as f64;
        let mut y = x.to_vec();
        self.fft.forward(&mut y);
        for (z, k) in y.iter_mut().zip(&self.k2) {
            *z *= k * c;
        }
        self.fft.inverse(&mut y);
        for ((z, xv), v) in y.iter_mut().zip(x).zip(&self.v) {
            *z += xv * v;
        }
        y
    }

    /// (H₀ + s)⁻¹x.
    fn precondition(&mut self, x: &[C64], s: f64) -> Vec<C64> {
        let c = 1.0 / (self.n * self.n) as f64;
        let mut y = x.to_vec();
        self.fft.forward(&mut y);
        for (z, k) in y.iter_mut().zip(&self.k2) {
            *z *= c / (k + s);
        }
        self.fft.inverse(&mut y);
        y
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (u, v) in y.iter_mut().zip(x) {
        *u += a * v;
    }
}

fn combine(
    basis: &[Vec<C64>],
    coef: &Mat<C64>,
    col: usize,
    rows: std::ops::Range<usize>,
) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); basis[0].len()];
    for r in rows {
        axpy(&mut out, coef[(r, col)], &basis[r]);
    }
    out
}

/// Modified Gram–Schmidt (two passes) applied to `s`, with the same operations on `hs`.
/// Columns that lose more than 1 − 1e-10 of their norm are dropped.
fn orthonormalize(s: &mut Vec<Vec<C64>>, hs: &mut Vec<Vec<C64>>) {
    let mut keep_s: Vec<Vec<C64>> = Vec::new();
    let mut keep_h: Vec<Vec<C64>> = Vec::new();
    for (mut v, mut hv) in s.drain(..).zip(hs.drain(..)) {
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (q, hq) in keep_s.iter().zip(&keep_h) {
                let c = dot(q, &v);
                axpy(&mut v, -c, q);
                axpy(&mut hv, -c, hq);
            }
        }
        let nv = norm(&v);
        if nv < 1e-10 * n0 {
            continue;
        }
        let inv = C64::new(1.0 / nv, 0.0);
        v.iter_mut().for_each(|z| *z *= inv);
        hv.iter_mut().for_each(|z| *z *= inv);
        keep_s.push(v);
        keep_h.push(hv);
    }
    *s = keep_s;
    *hs = keep_h;
}

/// Lowest Ritz pairs of the Hermitian matrix S*HS.
fn rayleigh_ritz(s: &[Vec<C64>], hs: &[Vec<C64>]) -> Result<(Vec<f64>, Mat<C64>)> {
    let d = s.len();
    let mut a = Mat::<C64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let z = 0.5 * (dot(&s[i], &hs[j]) + dot(&hs[i], &s[j]));
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    let eig = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vals: Vec<f64> = (0..d).map(|i| eig.S().column_vector()[i].re).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let u = eig.U();
    let c = Mat::from_fn(d, d, |r, k| u[(r, order[k])]);
    Ok((order.iter().map(|&i| vals[i]).collect(), c))
}

/// Lowest `k_max` eigenpairs of the discrete H = −Δ + V (spectral Laplacian on the
/// periodic grid) with E < −ε_floor, by block LOBPCG preconditioned with (H₀ + |θ|)⁻¹.
pub fn bound_states(grid: &Grid2D, vfield: &Field2D, k_max: usize) -> Result<BoundStateSet> {
    bound_states_with(grid, vfield, k_max, &BoundStateOptions::default())
}

pub fn bound_states_with(
    grid: &Grid2D,
    vfield: &Field2D,
    k_max: usize,
    opts: &BoundStateOptions,
) -> Result<BoundStateSet> {
    if vfield.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let v: Vec<f64> = vfield.values().iter().map(|z| z.re).collect();
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let h = grid.spacing();
    if h * h * vmax >= 0.5 {
        return Err(Error::InvalidParameter(format!(
            "grid does not resolve the well: h^2 max|V| = {:.3} >= 0.5",
            h * h * vmax
        )));
    }
    if k_max == 0 || v.iter().all(|x| *x >= 0.0) {
        // H ≥ H₀ ≥ 0: nothing below zero
        return Ok(BoundStateSet {
            orthonormality: 0.0,
            ..Default::default()
        });
    }
    let n = grid.n();
    let mut ham = GridHamiltonian {
        n,
        k2: k2_table(grid),
        v,
        fft: Fft2::new(n),
    };
    let m = k_max + opts.guard;

    // deterministic start: pseudo-random values under a wide envelope, plus the well itself
    let mut seed: u64 = 0x2545_F491_4F6C_DD1D;
    let mut rnd = move || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let l = grid.half_width();
    let mut x: Vec<Vec<C64>> = (0..m)
        .map(|c| {
            grid.nodes()
                .zip(&ham.v)
                .map(|(p, vv)| {
                    let env = (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * (l / 3.0).powi(2))).exp();
                    if c == 0 {
                        C64::new(vv.min(0.0).abs().sqrt() + 1e-3 * env, 0.0)
                    } else {
                        C64::new(rnd() * env, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mut hx: Vec<Vec<C64>> = x.iter().map(|c| ham.apply(c)).collect();
    orthonormalize(&mut x, &mut hx);
    let (mut theta, c) = rayleigh_ritz(&x, &hx)?;
    let d = x.len();
    x = (0..d).map(|k| combine(&x, &c, k, 0..d)).collect();
    hx = (0..d).map(|k| combine(&hx, &c, k, 0..d)).collect();
    let mut p: Vec<Vec<C64>> = Vec::new();
    let mut hp: Vec<Vec<C64>> = Vec::new();
    let mut iterations = 0;
    let loose = 1e-5;
    loop {
        let res: Vec<Vec<C64>> = (0..x.len())
            .map(|k| {
                let mut r = hx[k].clone();
                axpy(&mut r, C64::new(-theta[k], 0.0), &x[k]);
                r
            })
            .collect();
        let rn: Vec<f64> = res.iter().map(|r| norm(r)).collect();
        let done = (0..k_max.min(x.len())).all(|k| {
            rn[k]
                < if theta[k] < -opts.eps_floor {
                    opts.tol
                } else {
                    loose
                }
        });
        if done {
            break;
        }
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(Error::Eigensolver(format!(
                "no convergence after {} iterations; residuals {:?}",
                opts.max_iter,
                &rn[..k_max.min(rn.len())]
            )));
        }
        let mut w: Vec<Vec<C64>> = Vec::new();
        for k in 0..x.len() {
            if rn[k] > 0.1 * opts.tol {
                w.push(ham.precondition(&res[k], (-theta[k]).max(0.0) + 1e-2));
            }
        }
        let hw: Vec<Vec<C64>> = w.iter().map(|c| ham.apply(c)).collect();
        let nx = x.len();
        let mut s: Vec<Vec<C64>> = x.iter().chain(&p).chain(&w).cloned().collect();
        let mut hs: Vec<Vec<C64>> = hx.iter().chain(&hp).chain(&hw).cloned().collect();
        orthonormalize(&mut s, &mut hs);
        if iterations % 25 == 0 {
            hs = s.iter().map(|c| ham.apply(c)).collect();
        }
        let (vals, c) = rayleigh_ritz(&s, &hs)?;
        let d = s.len();
        let keep = m.min(d);
        let xs: Vec<Vec<C64>> = (0..keep).map(|k| combine(&s, &c, k, 0..d)).collect();
        let hxs: Vec<Vec<C64>> = (0..keep).map(|k| combine(&hs, &c, k, 0..d)).collect();
        let base = nx.min(d);
        p = (0..keep).map(|k| combine(&s, &c, k, base..d)).collect();
        hp = (0..keep).map(|k| combine(&hs, &c, k, base..d)).collect();
        x = xs;
        hx = hxs;
        theta = vals[..keep].to_vec();
    }

    // fresh residuals on grid-normalized fields
    let cell = grid.cell_area();
    let mut out = BoundStateSet {
        iterations,
        ..Default::default()
    };
    for k in 0..k_max.min(x.len()) {
        if theta[k] >= -opts.eps_floor {
            break;
        }
        let nrm = (norm(&x[k]).powi(2) * cell).sqrt();
        let vals: Vec<C64> = x[k].iter().map(|z| z / nrm).collect();
        let hf = ham.apply(&vals);
        let mut r = hf;
        axpy(&mut r, C64::new(-theta[k], 0.0), &vals);
        let resid = norm(&r) * cell.sqrt();
        if !(resid < 1e-6) {
            return Err(Error::Eigensolver(format!(
                "residual {resid:e} for E = {} exceeds 1e-6",
                theta[k]
            )));
        }
        out.energies.push(theta[k]);
        out.residuals.push(resid);
        out.states.push(Field2D::from_values(*grid, vals)?);
    }
    out.saturated = out.energies.len() == k_max;
    let mut worst: f64 = 0.0;
    for i in 0..out.states.len() {
        for j in 0..out.states.len() {
            let ip = crate::grid::inner_product(&out.states[i], &out.states[j])?;
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ip - want).norm());
        }
    }
    out.orthonormality = worst;
    if !(worst < 1e-8) {
        return Err(Error::Eigensolver(format!(
            "eigenfields not orthonormal: defect {worst:e}"
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Levinson winding

/// −2 arg det M₀(λ+i0), wrapped to (−π, π]; equals arg det S(λ) when Im G = πvF₀*F₀v.
pub fn det_m0_phase(lambda: f64, quad: &Arc<SupportQuadrature>) -> Result<f64> {
    if quad.is_empty() {
        return Ok(0.0);
    }
    let m = assemble_m0(lambda, quad)?;
    let lu = m.m.partial_piv_lu();
    let u = lu.U();
    let mut arg = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == C64::new(0.0, 0.0) {
            return Err(Error::NearSingular {
                lambda,
                sigma_min: 0.0,
            });
        }
        arg += d.arg();
    }
    // permutation parity by cycle count
    let fwd = lu.P().arrays().0;
    let mut seen = vec![false; fwd.len()];
    let mut cycles = 0;
    for s in 0..fwd.len() {
        if !seen[s] {
            cycles += 1;
            let mut j = s;
            while !seen[j] {
                seen[j] = true;
                j = fwd[j];
            }
        }
    }
    if (fwd.len() - cycles) % 2 == 1 {
        arg += PI;
    }
    Ok(wrap(-2.0 * wrap(arg)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseCurve {
    pub lambdas: Vec<f64>,
    /// Unwrapped arg det S, branch fixed at the top energy (nearest to φ_∞).
    pub phase: Vec<f64>,
    /// High-energy limit −½∫V = −½Σ V_p h².
    pub phi_inf: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseCurveConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub per_decade: usize,
    /// Largest accepted phase step between neighbours before bisecting (radians).
    pub max_step: f64,
    pub max_points: usize,
}

impl Default for PhaseCurveConfig {
    fn default() -> Self {
        Self {
            lambda_min: 1e-60,
            lambda_max: 64.0,
            per_decade: 2,
            max_step: 0.25,
            max_points: 600,
        }
    }
}

/// arg det S(λ) from −2 arg det M₀ on a log ladder, refined where the phase moves fast.
pub fn phase_curve(quad: &Arc<SupportQuadrature>, cfg: &PhaseCurveConfig) -> Result<PhaseCurve> {
    if !(cfg.lambda_min > 0.0 && cfg.lambda_max > cfg.lambda_min) || cfg.per_decade == 0 {
        return Err(Error::InvalidParameter(
            "phase curve needs 0 < lambda_min < lambda_max".into(),
        ));
    }
    crate::free_ops::check_energy(cfg.lambda_max, &quad.grid)?;
    let decades = (cfg.lambda_max / cfg.lambda_min).log10();
    let n0 = (decades * cfg.per_decade as f64).ceil() as usize + 1;
    let (a, b) = (cfg.lambda_min.ln(), cfg.lambda_max.ln());
    let mut pts: Vec<(f64, f64)> = (0..n0)
        .into_par_iter()
        .map(|i| {
            let l = (a + (b - a) * i as f64 / (n0 - 1) as f64).exp();
            det_m0_phase(l, quad).map(|p| (l, p))
        })
        .collect::<Result<_>>()?;
    loop {
        let bad: Vec<usize> = (0..pts.len() - 1)
            .filter(|&i| wrap(pts[i + 1].1 - pts[i].1).abs() > cfg.max_step)
            .collect();
        if bad.is_empty() {
            break;
        }
        if pts.len() + bad.len() > cfg.max_points {
            let i = bad[0];
            return Err(Error::PhaseJump {
                lo: pts[i].0,
                hi: pts[i + 1].0,
                jump: wrap(pts[i + 1].1 - pts[i].1).abs(),
            });
        }
        let new: Vec<(f64, f64)> = bad
            .par_iter()
            .map(|&i| {
                let l = (pts[i].0 * pts[i + 1].0).sqrt();
                det_m0_phase(l, quad).map(|p| (l, p))
            })
            .collect::<Result<_>>()?;
        pts.extend(new);
        pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    }
    let phi_inf = -0.5 * quad.integral();
    // unwrap from the top down, starting on the branch nearest φ_∞
    let lambdas: Vec<f64> = pts.iter().rev().map(|p| p.0).collect();
    let mut raw: Vec<f64> = pts.iter().rev().map(|p| p.1).collect();
    raw[0] = phi_inf + wrap(raw[0] - phi_inf);
    let mut phase = unwrap_phase(&lambdas, &raw)?;
    phase.reverse();
    let mut lambdas = lambdas;
    lambdas.reverse();
    Ok(PhaseCurve {
        lambdas,
        phase,
        phi_inf,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevinsonReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    /// [arg det S]_{λ_min}^{Λ_max}/2π.
    pub raw_winding: f64,
    /// (φ_∞ − φ(Λ_max))/2π.
    pub high_energy_correction: f64,
    /// φ_∞/2π = −∫V/4π: in 2D arg det S tends to this constant, not to 0.
    pub born_offset: f64,
    /// raw_winding + high_energy_correction − born_offset, i.e. [arg det S]_{0}^{∞}/2π
    /// measured from the Born limit.
    pub winding: f64,
    pub nearest: i64,
    pub distance: f64,
    pub n_bound: usize,
    /// Sign of the nearest integer (recorded, not asserted).
    pub sign: i64,
    /// Phase still missing below λ_min, from a linear fit in 1/|ln λ| over the bottom ten decades (/2π).
    pub low_energy_uncertainty: f64,
    /// Phase movement over the top decade (/2π).
    pub high_energy_uncertainty: f64,
    pub verdict: Verdict,
}

pub const LEVINSON_TOL: f64 = 0.05;

pub fn levinson_check(curve: &PhaseCurve, n_bound: usize) -> Result<LevinsonReport> {
    let n = curve.lambdas.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "phase curve needs at least two energies".into(),
        ));
    }
    let two_pi = 2.0 * PI;
    let (lo, hi) = (curve.phase[0], curve.phase[n - 1]);
    let raw_winding = (hi - lo) / two_pi;
    let high_energy_correction = (curve.phi_inf - hi) / two_pi;
    let born_offset = curve.phi_inf / two_pi;
    let winding = raw_winding + high_energy_correction - born_offset;
    let nearest = winding.round() as i64;
    let distance = (winding - nearest as f64).abs();

    let lmin = curve.lambdas[0];
    let lmax = curve.lambdas[n - 1];
    let i10 = crate::birman_schwinger::nearest_index(&curve.lambdas, lmax / 10.0);
    let high_energy_uncertainty = (hi - curve.phase[i10]).abs() / two_pi;
    let j = crate::birman_schwinger::nearest_index(&curve.lambdas, lmin * 1e10);
    let low_energy_uncertainty = if j > 0 && curve.lambdas[j] < 1.0 {
        let (t1, t2) = (
            1.0 / curve.lambdas[0].ln().abs(),
            1.0 / curve.lambdas[j].ln().abs(),
        );
        let slope = (curve.phase[j] - lo) / (t2 - t1);
        (slope * t1).abs() / two_pi
    } else {
        f64::NAN
    };
    let pass = distance < LEVINSON_TOL && nearest.unsigned_abs() as usize == n_bound;
    Ok(LevinsonReport {
        lambda_min: lmin,
        lambda_max: lmax,
        points: n,
        raw_winding,
        high_energy_correction,
        born_offset,
        winding,
        nearest,
        distance,
        n_bound,
        sign: nearest.signum(),
        low_energy_uncertainty,
        high_energy_uncertainty,
        verdict: Verdict::from_bool(pass),
    })
}

// ---------------------------------------------------------------------------
// Stationary pipeline

/// Closed-form F₀ of a Gaussian packet after free flight for a time `flight`:
/// F₀(e^{−itH₀}g)(λ,ω) = e^{−itλ} 2^{−1/2} w² e^{−i(kω−q)·x₀} e^{−w²|kω−q|²/2}.
pub fn packet_f0(
    spec: &WavePacketSpec,
    flight: f64,
    egrid: &Arc<EnergyGrid>,
    n_omega: usize,
) -> Result<FiberedFunction> {
    if !(spec.width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "packet width {}",
            spec.width
        )));
    }
    let w = spec.width;
    let scale = if spec.normalize {
        1.0 / (PI.sqrt() * w)
    } else {
        1.0
    };
    let dirs: Vec<(f64, f64)> = angles(n_omega).iter().map(|t| (t.cos(), t.sin())).collect();
    let [q0, q1] = spec.momentum;
    let [c0, c1] = spec.center;
    let data = egrid
        .lambdas()
        .iter()
        .map(|&l| {
            let k = l.sqrt();
            dirs.iter()
                .map(|&(ox, oy)| {
                    let (d0, d1) = (k * ox - q0, k * oy - q1);
                    let amp = scale * w * w / SQRT_2 * (-0.5 * w * w * (d0 * d0 + d1 * d1)).exp();
                    C64::from_polar(amp, -(d0 * c0 + d1 * c1) - flight * l)
                })
                .collect()
        })
        .collect();
    FiberedFunction::new(egrid.clone(), n_omega, data)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    pub sigma_min: f64,
    pub lambda_at_min: f64,
    pub max_residual: f64,
    pub fibers: usize,
}

/// Per-input output of one sweep over the energy grid.
#[derive(Clone, Debug)]
pub struct SweepOutput {
    /// (Bφ)(λ) on the support nodes.
    pub b: Vec<NodalFibers>,
    /// (S* − 1)φ, only when requested.
    pub s_adj_minus_1: Vec<FiberedFunction>,
    /// B(S*φ), only when requested.
    pub b_s_adj: Vec<NodalFibers>,
    pub diagnostics: SweepDiagnostics,
}

/// Energy-representation machinery for one potential. M₀(λ+i0) is factorized once per
/// fiber and applied to every input; the Y(λ) kernels are not retained.
#[derive(Clone, Debug)]
pub struct StationaryEngine {
    pub quad: Arc<SupportQuadrature>,
    pub egrid: Arc<EnergyGrid>,
    pub n_omega: usize,
    pub log_cfg: LogGridConfig,
}

struct FiberResult {
    b: Vec<Vec<C64>>,
    s_adj: Vec<Vec<C64>>,
    b_s_adj: Vec<Vec<C64>>,
    sigma_min: f64,
    residual: f64,
}

impl StationaryEngine {
    pub fn new(
        quad: Arc<SupportQuadrature>,
        egrid: Arc<EnergyGrid>,
        n_omega: usize,
    ) -> Result<Self> {
        egrid.check_nyquist(&quad.grid)?;
        if n_omega < 4 {
            return Err(Error::InvalidParameter(format!("N_omega = {n_omega}")));
        }
        Ok(Self {
            quad,
            egrid,
            n_omega,
            log_cfg: LogGridConfig::default(),
        })
    }

    fn nodes(&self) -> Arc<Vec<[f64; 2]>> {
        Arc::new(self.quad.nodes.clone())
    }

    fn check_input(&self, phi: &FiberedFunction) -> Result<()> {
        let same_grid =
            Arc::ptr_eq(phi.egrid(), &self.egrid) || phi.egrid().lambdas() == self.egrid.lambdas();
        if phi.n_omega() != self.n_omega || !same_grid {
            return Err(Error::InvalidParameter(
                "fibered input does not live on the engine's energy/angle grid".into(),
            ));
        }
        Ok(())
    }

    /// One pass over the energy grid computing Bφ for every input, and optionally
    /// (S*−1)φ and B(S*φ).
    pub fn sweep(&self, inputs: &[FiberedFunction], adjoint: bool) -> Result<SweepOutput> {
        for phi in inputs {
            self.check_input(phi)?;
        }
        let ns = self.quad.len();
        let no = self.n_omega;
        let per_fiber: Vec<FiberResult> = self
            .egrid
            .lambdas()
            .par_iter()
            .enumerate()
            .map(|(i, &l)| -> Result<FiberResult> {
                let m = assemble_m0(l, &self.quad)?;
                let inv = invert_m0_fast(&m, TOL_SING)?;
                let y = b_fiber_kernel(&inv, no);
                let apply_y = |phi: &[C64]| -> Vec<C64> {
                    (0..ns)
                        .map(|p| (0..no).map(|m| y[(p, m)] * phi[m]).sum())
                        .collect()
                };
                let mut out = FiberResult {
                    b: Vec::with_capacity(inputs.len()),
                    s_adj: Vec::new(),
                    b_s_adj: Vec::new(),
                    sigma_min: inv.sigma_min,
                    residual: inv.residual,
                };
                let f = if adjoint {
                    Some(f0_matrix(l, &self.quad.nodes, self.quad.weight, no))
                } else {
                    None
                };
                for phi in inputs {
                    let phi = phi.fiber(i);
                    out.b.push(apply_y(phi));
                    if let Some(f) = &f {
                        // (S*−1)φ = 2πi Y*F*φ
                        let c: Vec<C64> = (0..ns)
                            .map(|p| (0..no).map(|m| f[(m, p)].conj() * phi[m]).sum())
                            .collect();
                        let d: Vec<C64> = (0..no)
                            .map(|m| {
                                2.0 * PI * I * (0..ns).map(|p| y[(p, m)].conj() * c[p]).sum::<C64>()
                            })
                            .collect();
                        let sphi: Vec<C64> = phi.iter().zip(&d).map(|(a, b)| a + b).collect();
                        out.b_s_adj.push(apply_y(&sphi));
                        out.s_adj.push(d);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut diag = SweepDiagnostics {
            sigma_min: f64::INFINITY,
            fibers: per_fiber.len(),
            ..Default::default()
        };
        for (r, &l) in per_fiber.iter().zip(self.egrid.lambdas()) {
            if r.sigma_min < diag.sigma_min {
                diag.sigma_min = r.sigma_min;
                diag.lambda_at_min = l;
            }
            diag.max_residual = diag.max_residual.max(r.residual);
        }
        let nodes = self.nodes();
        let collect_nodal = |pick: &dyn Fn(&FiberResult) -> &Vec<Vec<C64>>, j: usize| NodalFibers {
            egrid: self.egrid.clone(),
            nodes: nodes.clone(),
            weight: self.quad.weight,
            data: per_fiber.iter().map(|r| pick(r)[j].clone()).collect(),
        };
        let b = (0..inputs.len())
            .map(|j| collect_nodal(&|r| &r.b, j))
            .collect();
        let (s_adj_minus_1, b_s_adj) = if adjoint {
            let s = (0..inputs.len())
                .map(|j| {
                    FiberedFunction::new(
                        self.egrid.clone(),
                        no,
                        per_fiber.iter().map(|r| r.s_adj[j].clone()).collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let bs = (0..inputs.len())
                .map(|j| collect_nodal(&|r| &r.b_s_adj, j))
                .collect();
            (s, bs)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(SweepOutput {
            b,
            s_adj_minus_1,
            b_s_adj,
            diagnostics: diag,
        })
    }

    /// −2πi N{ϑ(A₊)⊗1}b for b = Bφ.
    pub fn wminus_from_b(&self, b: &NodalFibers) -> Result<FiberedFunction> {
        let tb = apply_symbol_aplus_nodal(b, &MellinSymbol::theta(), &self.log_cfg)?;
        Ok(apply_n(&tb, self.n_omega)?.scale(-2.0 * PI * I))
    }

    /// (S−1)φ = −2πi N b for b = Bφ.
    pub fn s_minus_1_from_b(&self, b: &NodalFibers) -> Result<FiberedFunction> {
        Ok(apply_n(b, self.n_omega)?.scale(-2.0 * PI * I))
    }

    /// {ϑ(A₊)⊗1}(S−1)φ for b = Bφ.
    pub fn r_s_minus_1_from_b(&self, b: &NodalFibers) -> Result<FiberedFunction> {
        apply_symbol_aplus(
            &self.s_minus_1_from_b(b)?,
            &MellinSymbol::theta(),
            &self.log_cfg,
        )
    }

    /// F₀Kφ = F₀(W₋−1)φ − ϑ(A₊)(S−1)φ for b = Bφ.
    pub fn remainder_from_b(&self, b: &NodalFibers) -> Result<FiberedFunction> {
        Ok(self.wminus_from_b(b)?.sub(&self.r_s_minus_1_from_b(b)?))
    }

    /// F₀(W₋−1)F₀* applied to φ.
    pub fn stationary_wminus_minus_1(&self, phi: &FiberedFunction) -> Result<FiberedFunction> {
        let sw = self.sweep(std::slice::from_ref(phi), false)?;
        self.wminus_from_b(&sw.b[0])
    }

    /// Kf = (W₋−1)f − R(A)(S−1)f, evaluated in the energy representation and pulled
    /// back to the grid of f.
    pub fn remainder_k(&self, f: &Field2D) -> Result<Field2D> {
        let phi = f0_fibered(f, &self.egrid, self.n_omega)?;
        let sw = self.sweep(std::slice::from_ref(&phi), false)?;
        let k = self.remainder_from_b(&sw.b[0])?;
        Ok(f0_adjoint_fibered(&k, f.grid()))
    }

    /// W₊−1 two ways on φ: (W₋−1)S*φ + (S*−1)φ, and {1−ϑ(A₊)}(S*−1)φ.
    pub fn wplus_paths(&self, phi: &FiberedFunction) -> Result<(FiberedFunction, FiberedFunction)> {
        let sw = self.sweep(std::slice::from_ref(phi), true)?;
        self.wplus_paths_from(&sw, 0)
    }

    /// [`Self::wplus_paths`] for input `j` of an adjoint sweep.
    pub fn wplus_paths_from(
        &self,
        sw: &SweepOutput,
        j: usize,
    ) -> Result<(FiberedFunction, FiberedFunction)> {
        if sw.s_adj_minus_1.len() <= j {
            return Err(Error::InvalidParameter(
                "sweep was run without the adjoint branch".into(),
            ));
        }
        let sa = &sw.s_adj_minus_1[j];
        let a = self.wminus_from_b(&sw.b_s_adj[j])?.add(sa);
        let t = apply_symbol_aplus(sa, &MellinSymbol::theta(), &self.log_cfg)?;
        Ok((a, sa.sub(&t)))
    }
}

/// {f(A₊)⊗1}Nξ − N{f(A₊)⊗1}ξ.
pub fn commutator_d(
    xi: &NodalFibers,
    symbol: &MellinSymbol,
    n_omega: usize,
    cfg: &LogGridConfig,
) -> Result<FiberedFunction> {
    let a = apply_symbol_aplus(&apply_n(xi, n_omega)?, symbol, cfg)?;
    let b = apply_n(&apply_symbol_aplus_nodal(xi, symbol, cfg)?, n_omega)?;
    Ok(a.sub(&b))
}

/// ξ(λ) = v·F₀(λ)*φ(λ) on the support nodes: the element of L²(ℝ₊; 𝓗_t^s) that
/// a fibered input induces after the weight v.
pub fn weighted_pullback(phi: &FiberedFunction, quad: &SupportQuadrature) -> NodalFibers {
    let data = phi
        .egrid()
        .lambdas()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let fa = f0_adjoint_matrix(l, &quad.nodes, phi.n_omega());
            let col = phi.fiber(i);
            (0..quad.len())
                .map(|p| quad.v[p] * (0..phi.n_omega()).map(|m| fa[(p, m)] * col[m]).sum::<C64>())
                .collect()
        })
        .collect();
    NodalFibers {
        egrid: phi.egrid().clone(),
        nodes: Arc::new(quad.nodes.clone()),
        weight: quad.weight,
        data,
    }
}

// ---------------------------------------------------------------------------
// Compactness probes

pub const FAMILY_OVERLAP_TOL: f64 = 1e-3;
pub const DECAY_FACTOR: f64 = 5.0;
pub const CONTROL_SPREAD: f64 = 2.0;
pub const MIN_MEMBERS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum ProbeVerdict {
    CompactConsistent,
    NotConsistent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayRecord {
    /// r_n = ‖op(φ_n)‖.
    pub values: Vec<f64>,
    /// Control operator on the same members.
    pub controls: Vec<f64>,
    pub max_overlap: f64,
    /// r_first / r_last.
    pub decay: f64,
    /// max/min of the controls.
    pub control_spread: f64,
    pub verdict: ProbeVerdict,
}

impl DecayRecord {
    pub fn new(values: Vec<f64>, controls: Vec<f64>, max_overlap: f64) -> Self {
        let decay = match (values.first(), values.last()) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            (Some(a), Some(_)) if *a > 0.0 => f64::INFINITY,
            _ => f64::NAN,
        };
        let (lo, hi) = controls
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), c| {
                (lo.min(*c), hi.max(*c))
            });
        let control_spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let ok = values.len() >= MIN_MEMBERS
            && decay >= DECAY_FACTOR
            && control_spread <= CONTROL_SPREAD;
        let verdict = if ok {
            ProbeVerdict::CompactConsistent
        } else {
            ProbeVerdict::NotConsistent
        };
        Self {
            values,
            controls,
            max_overlap,
            decay,
            control_spread,
            verdict,
        }
    }
}

/// Largest pairwise |⟨φ_i, φ_j⟩|; errors unless every member has unit norm and the
/// family is near-orthogonal.
pub fn check_family<T>(
    family: &[T],
    inner: impl Fn(&T, &T) -> C64,
    norm: impl Fn(&T) -> f64,
) -> Result<f64> {
    for (i, f) in family.iter().enumerate() {
        let n = norm(f);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "family member {i} has norm {n}, expected 1"
            )));
        }
    }
    let mut worst = 0.0f64;
    for i in 0..family.len() {
        for j in 0..i {
            let overlap = inner(&family[i], &family[j]).norm();
            if overlap >= FAMILY_OVERLAP_TOL {
                return Err(Error::FamilyOverlap {
                    i: j,
                    j: i,
                    overlap,
                });
            }
            worst = worst.max(overlap);
        }
    }
    Ok(worst)
}

/// r_n = ‖op(φ_n)‖ along a near-orthogonal family, against a control operator.
pub fn compactness_probe<T>(
    family: &[T],
    inner: impl Fn(&T, &T) -> C64,
    norm: impl Fn(&T) -> f64,
    op: impl Fn(&T) -> Result<f64>,
    control: impl Fn(&T) -> Result<f64>,
) -> Result<DecayRecord> {
    let max_overlap = check_family(family, &inner, &norm)?;
    let values = family.iter().map(&op).collect::<Result<Vec<_>>>()?;
    let controls = family.iter().map(&control).collect::<Result<Vec<_>>>()?;
    Ok(DecayRecord::new(values, controls, max_overlap))
}

fn fibered_family_overlap(family: &[FiberedFunction]) -> Result<f64> {
    check_family(family, |a, b| a.inner(b), |a| a.norm())
}

/// ‖Kφ_n‖ with the fiberwise (S−1) control, from one engine sweep over the family.
pub fn remainder_probe(
    engine: &StationaryEngine,
    family: &[FiberedFunction],
) -> Result<(DecayRecord, SweepDiagnostics)> {
    let max_overlap = fibered_family_overlap(family)?;
    let sw = engine.sweep(family, false)?;
    let mut values = Vec::with_capacity(family.len());
    let mut controls = Vec::with_capacity(family.len());
    for b in &sw.b {
        values.push(engine.remainder_from_b(b)?.norm());
        controls.push(engine.s_minus_1_from_b(b)?.norm());
    }
    Ok((
        DecayRecord::new(values, controls, max_overlap),
        sw.diagnostics,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutatorRecord {
    /// ‖Dξ_n‖ against the identity control ‖ξ_n‖.
    pub decay: DecayRecord,
    /// max_n ‖D_{f≡1} ξ_n‖.
    pub constant_symbol_defect: f64,
}

/// D = {ϑ(A₊)⊗1}N − N{ϑ(A₊)⊗1} on ξ_n = v·F₀*φ_n.
pub fn commutator_compactness_probe(
    family: &[FiberedFunction],
    quad: &SupportQuadrature,
    cfg: &LogGridConfig,
) -> Result<CommutatorRecord> {
    let max_overlap = fibered_family_overlap(family)?;
    let n_omega = family.first().map_or(0, |f| f.n_omega());
    let theta = MellinSymbol::theta();
    let one = MellinSymbol::constant(C64::new(1.0, 0.0));
    let rows = family
        .par_iter()
        .map(|phi| -> Result<(f64, f64, f64)> {
            let xi = weighted_pullback(phi, quad);
            let d = commutator_d(&xi, &theta, n_omega, cfg)?.norm();
            let d1 = commutator_d(&xi, &one, n_omega, cfg)?.norm();
            Ok((d, xi.norm(), d1))
        })
        .collect::<Result<Vec<_>>>()?;
    let constant_symbol_defect = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let decay = DecayRecord::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        max_overlap,
    );
    Ok(CommutatorRecord {
        decay,
        constant_symbol_defect,
    })
}

/// Packets launched from the origin with speed 2|q| along directions a quarter turn
/// apart, observed when their centres reach the given distances. Consecutive members
/// move in orthogonal directions; members sharing a direction are ≥ 4 widths apart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EscapingFamily {
    pub speed_momentum: f64,
    pub width: f64,
    pub distances: Vec<f64>,
    /// Direction of the first member (radians).
    pub first_angle: f64,
}

impl Default for EscapingFamily {
    fn default() -> Self {
        Self {
            speed_momentum: 4.0,
            width: 1.0,
            distances: (1..=6).map(|n| 2.0 * n as f64).collect(),
            first_angle: 0.0,
        }
    }
}

impl EscapingFamily {
    /// (packet at the origin, flight time) per member.
    pub fn members(&self) -> Vec<(WavePacketSpec, f64)> {
        self.distances
            .iter()
            .enumerate()
            .map(|(n, &d)| {
                let a = self.first_angle + n as f64 * PI / 2.0;
                let q = self.speed_momentum;
                (
                    WavePacketSpec::new([0.0, 0.0], [q * a.cos(), q * a.sin()], self.width),
                    d / (2.0 * q),
                )
            })
            .collect()
    }

    pub fn fibered(&self, egrid: &Arc<EnergyGrid>, n_omega: usize) -> Result<Vec<FiberedFunction>> {
        self.members()
            .iter()
            .map(|(s, t)| packet_f0(s, *t, egrid, n_omega))
            .collect()
    }

    /// Position-space members on `grid`.
    pub fn fields(&self, grid: &Grid2D) -> Result<Vec<Field2D>> {
        self.members()
            .iter()
            .map(|(s, t)| crate::propagation::free_evolve(&crate::grid::make_packet(grid, s)?, *t))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Stationary vs time-dependent cross-check

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairComparison {
    pub g: WavePacketSpec,
    pub stationary: [f64; 2],
    pub time_domain: [f64; 2],
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossCheck {
    pub f: WavePacketSpec,
    pub pairs: Vec<PairComparison>,
    pub ladder: crate::propagation::WaveOpRecord,
    pub max_relative: f64,
}

/// Time-dependent side of the cross-check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeDomainSetup {
    pub n: usize,
    pub half_width: f64,
    pub dt: f64,
    pub ladder: Vec<f64>,
    pub tol: f64,
}

/// ⟨F₀g, F₀(W₋−1)F₀*F₀f⟩ against ⟨g, (W₋−1)f⟩ from the time-dependent ladder.
pub fn stationary_cross_check(
    engine: &StationaryEngine,
    potential: &Potential,
    f: &WavePacketSpec,
    gs: &[WavePacketSpec],
    td: &TimeDomainSetup,
) -> Result<CrossCheck> {
    let (egrid, no) = (&engine.egrid, engine.n_omega);
    let phi = packet_f0(f, 0.0, egrid, no)?;
    let w = engine.stationary_wminus_minus_1(&phi)?;

    let grid = Grid2D::new(td.n, td.half_width)?;
    let vfield = crate::potential::sample_potential(potential, &grid)?;
    let ff = crate::grid::make_packet(&grid, f)?;
    let (wf, ladder) = crate::propagation::wave_operator_time(
        &ff,
        &vfield,
        crate::propagation::Channel::Minus,
        &td.ladder,
        td.dt,
        td.tol,
    )?;
    let diff = wf.sub(&ff)?;
    let mut pairs = Vec::new();
    for g in gs {
        let s = packet_f0(g, 0.0, egrid, no)?.inner(&w);
        let t = crate::grid::inner_product(&crate::grid::make_packet(&grid, g)?, &diff)?;
        pairs.push(PairComparison {
            g: *g,
            stationary: [s.re, s.im],
            time_domain: [t.re, t.im],
            relative: (s - t).norm() / t.norm(),
        });
    }
    let max_relative = pairs.iter().map(|p| p.relative).fold(0.0, f64::max);
    Ok(CrossCheck {
        f: *f,
        pairs,
        ladder,
        max_relative,
    })
}

// ---------------------------------------------------------------------------
// Report

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub defect: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Named numeric evidence behind the verdict.
    pub evidence: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config_hash: String,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            checks: Vec::new(),
        }
    }

    /// Records a check that passes when `defect < threshold`.
    pub fn below(
        &mut self,
        name: &str,
        defect: f64,
        threshold: f64,
        evidence: Vec<(String, Vec<f64>)>,
    ) {
        let verdict = Verdict::from_bool(defect < threshold);
        self.checks.push(CheckRecord {
            name: name.into(),
            defect,
            threshold,
            verdict,
            evidence,
        });
    }

    /// Records a check that passes when `value >= threshold`.
    pub fn at_least(
        &mut self,
        name: &str,
        value: f64,
        threshold: f64,
        evidence: Vec<(String, Vec<f64>)>,
    ) {
        let verdict = Verdict::from_bool(value >= threshold);
        self.checks.push(CheckRecord {
            name: name.into(),
            defect: value,
            threshold,
            verdict,
            evidence,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_packet};
    use crate::potential::{sample_potential, support_for};
    use crate::propagation::free_evolve;

    fn engine(
        p: &Potential,
        n: usize,
        l: f64,
        n_lambda: usize,
        n_omega: usize,
    ) -> StationaryEngine {
        let grid = make_grid(n, l).unwrap();
        let q = Arc::new(support_for(p, &grid, 1e-3, 4000).unwrap());
        let eg = Arc::new(EnergyGrid::log(1e-3, 25.0, n_lambda).unwrap());
        StationaryEngine::new(q, eg, n_omega).unwrap()
    }

    #[test]
    fn oracle_trivial_cases() {
        assert_eq!(
            radial_shooting_oracle(&Potential::zero(), 3).unwrap().count,
            0
        );
        let r = radial_shooting_oracle(&Potential::gaussian(0.5), 3).unwrap();
        assert_eq!(r.count, 1);
        assert_eq!(r.levels[0].ell, 0);
        assert!(r.levels[0].energy < 0.0);
        assert!(radial_shooting_oracle(&Potential::catalog()[1].1, 2).is_err());
    }

    #[test]
    fn oracle_counts_angular_degeneracy() {
        // deep enough for the ℓ=±1 pair
        let r = radial_shooting_oracle(&Potential::gaussian(12.0), 3).unwrap();
        let ells: Vec<u32> = r.levels.iter().map(|l| l.ell).collect();
        assert!(ells.contains(&1), "{r:?}");
        let e = r.energies();
        assert_eq!(e.len(), r.count);
        assert_eq!(
            r.count,
            r.levels.iter().map(|l| l.degeneracy).sum::<usize>()
        );
        let p = r.levels.iter().find(|l| l.ell == 1).unwrap();
        assert_eq!(p.degeneracy, 2);
        assert_eq!(e.iter().filter(|x| **x == p.energy).count(), 2);
    }

    #[test]
    fn grid_states_match_oracle() {
        let p = Potential::gaussian(3.0);
        let oracle = radial_shooting_oracle(&p, 3).unwrap();
        let grid = make_grid(128, 12.0).unwrap();
        let v = sample_potential(&p, &grid).unwrap();
        let set = bound_states(&grid, &v, 4).unwrap();
        assert_eq!(set.count(), oracle.count);
        for (a, b) in set.energies.iter().zip(oracle.energies()) {
            assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
        }
        assert!(set.energies.iter().all(|e| *e < 0.0));
        assert!(set.residuals.iter().all(|r| *r < 1e-6));
        assert!(set.orthonormality < 1e-8);
    }

    #[test]
    fn free_and_repulsive_have_no_states() {
        let grid = make_grid(64, 8.0).unwrap();
        let v = sample_potential(&Potential::zero(), &grid).unwrap();
        assert_eq!(bound_states(&grid, &v, 3).unwrap().count(), 0);
        let v = sample_potential(&Potential::gaussian(-2.0), &grid).unwrap();
        assert_eq!(bound_states(&grid, &v, 3).unwrap().count(), 0);
    }

    #[test]
    fn levinson_free_and_single_well() {
        let grid = make_grid(32, 8.0).unwrap();
        let empty = Arc::new(support_for(&Potential::zero(), &grid, 1e-3, 100).unwrap());
        let cfg = PhaseCurveConfig {
            lambda_max: 8.0,
            ..Default::default()
        };
        let rep = levinson_check(&phase_curve(&empty, &cfg).unwrap(), 0).unwrap();
        assert_eq!(rep.winding, 0.0);
        assert_eq!(rep.verdict, Verdict::Pass);

        let q = Arc::new(support_for(&Potential::gaussian(3.0), &grid, 1e-3, 4000).unwrap());
        let rep = levinson_check(&phase_curve(&q, &cfg).unwrap(), 1).unwrap();
        assert_eq!(rep.nearest.abs(), 1, "{rep:?}");
        assert!(rep.distance < LEVINSON_TOL, "{rep:?}");
    }

    #[test]
    fn closed_form_packet_matches_numerical_transform() {
        let grid = make_grid(128, 16.0).unwrap();
        let eg = Arc::new(EnergyGrid::log(0.5, 20.0, 12).unwrap());
        let spec = WavePacketSpec::new([1.0, -0.5], [1.5, 0.5], 1.2);
        let flight = 0.4;
        let f = free_evolve(&make_packet(&grid, &spec).unwrap(), flight).unwrap();
        let num = f0_fibered(&f, &eg, 32).unwrap();
        let exact = packet_f0(&spec, flight, &eg, 32).unwrap();
        let err = num.sub(&exact).norm() / exact.norm();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_potential_gives_zero_wave_operator_defect() {
        let e = engine(&Potential::zero(), 32, 8.0, 40, 16);
        assert!(e.quad.is_empty());
        let spec = WavePacketSpec::new([0.0, 0.0], [1.0, 0.0], 1.5);
        let phi = packet_f0(&spec, 0.0, &e.egrid, 16).unwrap();
        assert_eq!(e.stationary_wminus_minus_1(&phi).unwrap().norm(), 0.0);
        let grid = make_grid(64, 12.0).unwrap();
        let f = make_packet(&grid, &spec).unwrap();
        assert_eq!(e.remainder_k(&f).unwrap().norm(), 0.0);
    }

    #[test]
    fn engine_s_matches_fiber_solver() {
        let e = engine(&Potential::gaussian(1.0), 32, 8.0, 24, 32);
        let phi = packet_f0(
            &WavePacketSpec::new([0.5, 0.0], [1.0, 1.0], 1.0),
            0.0,
            &e.egrid,
            32,
        )
        .unwrap();
        let sw = e.sweep(std::slice::from_ref(&phi), true).unwrap();
        let sm1 = e.s_minus_1_from_b(&sw.b[0]).unwrap();
        let sa = &sw.s_adj_minus_1[0];
        let mut err: f64 = 0.0;
        let mut err_adj: f64 = 0.0;
        for (i, &l) in e.egrid.lambdas().iter().enumerate() {
            let fs = crate::smatrix::solve_fiber(l, &e.quad, 32, TOL_SING).unwrap();
            let s = fs.s.apply(phi.fiber(i));
            for m in 0..32 {
                err = err.max((s[m] - phi.fiber(i)[m] - sm1.fiber(i)[m]).norm());
            }
            let sh = fs.s.matrix.adjoint().to_owned();
            for m in 0..32 {
                let z: C64 = (0..32).map(|j| sh[(m, j)] * phi.fiber(i)[j]).sum();
                err_adj = err_adj.max((z - phi.fiber(i)[m] - sa.fiber(i)[m]).norm());
            }
        }
        assert!(err < 1e-12 && err_adj < 1e-12, "{err} {err_adj}");
    }

    #[test]
    fn remainder_is_linear_and_vanishes_with_coupling() {
        let fam = EscapingFamily {
            speed_momentum: 1.5,
            width: 1.5,
            ..Default::default()
        };
        let mut ratios = Vec::new();
        for g in [1e-2, 1e-3] {
            let e = engine(&Potential::gaussian(g), 32, 8.0, 48, 32);
            let phis = EscapingFamily {
                distances: vec![2.0, 4.0],
                ..fam.clone()
            }
            .fibered(&e.egrid, 32)
            .unwrap();
            let c = C64::new(0.3, -1.1);
            let combo = phis[0].add(&phis[1].scale(c));
            let sw = e
                .sweep(&[phis[0].clone(), phis[1].clone(), combo], false)
                .unwrap();
            let k: Vec<_> =
                sw.b.iter()
                    .map(|b| e.remainder_from_b(b).unwrap())
                    .collect();
            let lin = k[2].sub(&k[0].add(&k[1].scale(c))).norm();
            assert!(lin < 1e-10 * k[2].norm().max(1e-30) + 1e-15, "{lin}");
            ratios.push(k[0].norm() / g);
        }
        let r = ratios[0] / ratios[1];
        assert!(r > 0.5 && r < 2.0, "{ratios:?}");
    }

    #[test]
    fn probes_on_trivial_operators() {
        let eg = Arc::new(EnergyGrid::log(1e-2, 60.0, 200).unwrap());
        let fam = EscapingFamily::default().fibered(&eg, 64).unwrap();
        let norm = |f: &FiberedFunction| f.norm();
        let inner = |a: &FiberedFunction, b: &FiberedFunction| a.inner(b);
        let id = compactness_probe(&fam, inner, norm, |f| Ok(f.norm()), |f| Ok(f.norm())).unwrap();
        assert_eq!(id.verdict, ProbeVerdict::NotConsistent);
        assert!(id.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        let fixed = packet_f0(
            &WavePacketSpec::new([0.0, 0.0], [2.0, 2.0], 1.0),
            0.0,
            &eg,
            64,
        )
        .unwrap();
        let rank_one = compactness_probe(
            &fam,
            inner,
            norm,
            |f| Ok(fixed.inner(f).norm()),
            |f| Ok(f.norm()),
        )
        .unwrap();
        assert_eq!(
            rank_one.verdict,
            ProbeVerdict::CompactConsistent,
            "{rank_one:?}"
        );

        let mut bad = fam.clone();
        bad[3] = bad[1].clone();
        assert!(matches!(
            compactness_probe(&bad, inner, norm, |f| Ok(f.norm()), |f| Ok(f.norm())),
            Err(Error::FamilyOverlap { .. })
        ));
    }

    #[test]
    fn constant_symbol_commutes_with_n() {
        let e = engine(&Potential::gaussian(1.0), 32, 8.0, 48, 32);
        let fam = EscapingFamily {
            speed_momentum: 1.5,
            width: 1.5,
            distances: vec![2.0, 4.0],
            ..Default::default()
        };
        let fam = fam.fibered(&e.egrid, 32).unwrap();
        let xi = weighted_pullback(&fam[0], &e.quad);
        let d = commutator_d(
            &xi,
            &MellinSymbol::constant(C64::new(1.0, 0.0)),
            32,
            &e.log_cfg,
        )
        .unwrap();
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn report_verdicts_carry_numbers() {
        let mut r = VerificationReport::new("abc");
        r.below("a", 1e-3, 1e-2, vec![("x".into(), vec![1.0])]);
        r.at_least("b", 3.0, 5.0, vec![]);
        assert_eq!(r.checks[0].verdict, Verdict::Pass);
        assert_eq!(r.checks[1].verdict, Verdict::Fail);
        assert!(!r.all_pass());
        assert_eq!(r.checks[1].defect, 3.0);
    }
}
