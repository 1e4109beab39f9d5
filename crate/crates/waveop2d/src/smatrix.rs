use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birman_schwinger::{assemble_m0, b_fiber_kernel, invert_m0, nearest_index};
use crate::free_ops::{angles, f0_matrix, EnergyGrid, FiberedFunction, NodalFibers};
use crate::potential::SupportQuadrature;
use crate::{Error, Result, C64, I};

pub const TOL_UNIT: f64 = 1e-3;

/// N_ω×N_ω matrix acting on angular functions at a fixed energy.
#[derive(Clone, Debug)]
pub struct FiberOperator {
    pub lambda: f64,
    pub matrix: Mat<C64>,
    /// ‖S*S − 1‖ (spectral norm).
    pub unitarity_defect: f64,
}

impl FiberOperator {
    pub fn new(lambda: f64, matrix: Mat<C64>) -> Self {
        let n = matrix.nrows();
        let d = matrix.adjoint() * &matrix - Mat::<C64>::identity(n, n);
        Self {
            lambda,
            unitarity_defect: spectral_norm(&d),
            matrix,
        }
    }

    pub fn n_omega(&self) -> usize {
        self.matrix.nrows()
    }

    /// ‖S − 1‖.
    pub fn distance_from_identity(&self) -> f64 {
        let n = self.n_omega();
        spectral_norm(&(&self.matrix - Mat::<C64>::identity(n, n)))
    }

    pub fn apply(&self, g: &[C64]) -> Vec<C64> {
        (0..self.n_omega())
            .map(|m| (0..g.len()).map(|k| self.matrix[(m, k)] * g[k]).sum())
            .collect()
    }

    /// arg det S.
    pub fn det_phase(&self) -> f64 {
        self.matrix.determinant().arg()
    }
}

pub(crate) fn spectral_norm(m: &Mat<C64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.singular_values().map(|s| s[0]).unwrap_or(f64::NAN)
}

/// Per-energy solution data: σ_min and residual of M₀, the B kernel Y and S.
#[derive(Clone, Debug)]
pub struct FiberSolution {
    pub lambda: f64,
    pub sigma_min: f64,
    pub condition: f64,
    pub residual: f64,
    /// Y(λ) = vM₀(λ+i0)⁻¹vF₀(λ)*, n_s × N_ω.
    pub y: Mat<C64>,
    pub s: FiberOperator,
    /// -2 arg det M₀(λ+i0) mod 2π, an independent route to arg det S.
    pub m0_phase: f64,
}

/// S(λ) = 1 − 2πi F₀(λ) Y(λ).
pub fn build_s_from_kernel(lambda: f64, quad: &SupportQuadrature, y: &Mat<C64>) -> FiberOperator {
    let n_omega = y.ncols();
    let mut s = Mat::<C64>::identity(n_omega, n_omega);
    if !quad.is_empty() {
        let f = f0_matrix(lambda, &quad.nodes, quad.weight, n_omega);
        s -= (&f * y) * faer::Scale(I * (2.0 * PI));
    }
    FiberOperator::new(lambda, s)
}

pub fn solve_fiber(
    lambda: f64,
    quad: &Arc<SupportQuadrature>,
    n_omega: usize,
    tol_sing: f64,
) -> Result<FiberSolution> {
    crate::free_ops::check_energy(lambda, &quad.grid)?;
    let m = assemble_m0(lambda, quad)?;
    let m0_phase = if quad.is_empty() {
        0.0
    } else {
        wrap(-2.0 * m.m.determinant().arg())
    };
    let inv = invert_m0(&m, tol_sing)?;
    let y = if quad.is_empty() {
        Mat::zeros(0, n_omega)
    } else {
        b_fiber_kernel(&inv, n_omega)
    };
    let s = build_s_from_kernel(lambda, quad, &y);
    Ok(FiberSolution {
        lambda,
        sigma_min: inv.sigma_min,
        condition: inv.condition(),
        residual: inv.residual,
        y,
        s,
        m0_phase,
    })
}

/// `solve_fiber` on every energy, in parallel.
pub fn solve_fibers(
    lambdas: &[f64],
    quad: &Arc<SupportQuadrature>,
    n_omega: usize,
    tol_sing: f64,
) -> Result<Vec<FiberSolution>> {
    lambdas
        .par_iter()
        .map(|&l| solve_fiber(l, quad, n_omega, tol_sing))
        .collect()
}

/// (Bφ)(λ_i) = Y(λ_i)φ(λ_i) on the support nodes.
pub fn apply_b(
    phi: &FiberedFunction,
    quad: &SupportQuadrature,
    fibers: &[FiberSolution],
) -> Result<NodalFibers> {
    let egrid = phi.egrid().clone();
    let mut out = NodalFibers::zeros(egrid.clone(), Arc::new(quad.nodes.clone()), quad.weight);
    for (i, &l) in egrid.lambdas().iter().enumerate() {
        let fib = fibers
            .iter()
            .find(|f| (f.lambda - l).abs() <= 1e-12 * l)
            .ok_or(Error::MissingInverse(l))?;
        let g = phi.fiber(i);
        for (p, o) in out.data[i].iter_mut().enumerate() {
            *o = (0..g.len()).map(|m| fib.y[(p, m)] * g[m]).sum();
        }
    }
    Ok(out)
}

/// First Born approximation of S(λ) − 1 from an analytic V̂(ξ) = ∫e^{-iξ·x}V(x)dx:
/// entries −(i/4π)V̂(√λ(ω_m − ω_m'))Δω.
pub fn born_matrix(lambda: f64, n_omega: usize, vhat: impl Fn([f64; 2]) -> C64) -> Mat<C64> {
    let k = lambda.sqrt();
    let dirs: Vec<[f64; 2]> = angles(n_omega).iter().map(|t| [t.cos(), t.sin()]).collect();
    let dw = 2.0 * PI / n_omega as f64;
    Mat::from_fn(n_omega, n_omega, |m, mp| {
        let xi = [
            k * (dirs[m][0] - dirs[mp][0]),
            k * (dirs[m][1] - dirs[mp][1]),
        ];
        -I * vhat(xi) * (dw / (4.0 * PI))
    })
}

/// V̂ of the Gaussian well −g e^{−|x|²/a²}: −gπa² e^{−a²|ξ|²/4}.
pub fn gaussian_vhat(g: f64, a: f64) -> impl Fn([f64; 2]) -> C64 {
    move |xi| {
        C64::new(
            -g * PI * a * a * (-(a * a) * (xi[0] * xi[0] + xi[1] * xi[1]) / 4.0).exp(),
            0.0,
        )
    }
}

/// Unwrapped arg det S(λ_i) by nearest-neighbour continuation.
pub fn det_phase_curve(s: &[FiberOperator], tol_unit: f64) -> Result<Vec<f64>> {
    for f in s {
        if !(f.unitarity_defect < 10.0 * tol_unit) {
            return Err(Error::UnitarityDefect {
                lambda: f.lambda,
                defect: f.unitarity_defect,
                limit: 10.0 * tol_unit,
            });
        }
    }
    let raw: Vec<f64> = s.iter().map(FiberOperator::det_phase).collect();
    let lambdas: Vec<f64> = s.iter().map(|f| f.lambda).collect();
    unwrap_phase(&lambdas, &raw)
}

pub(crate) fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Continuation of wrapped phases; errors when the continued step reaches π.
pub fn unwrap_phase(lambdas: &[f64], raw: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(raw.len());
    for (i, &r) in raw.iter().enumerate() {
        if i == 0 {
            out.push(r);
            continue;
        }
        let prev = out[i - 1];
        let step = wrap(r - prev);
        if step.abs() >= PI * (1.0 - 1e-12) {
            return Err(Error::PhaseJump {
                lo: lambdas[i - 1],
                hi: lambdas[i],
                jump: step.abs(),
            });
        }
        out.push(prev + step);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SHighEnergyReport {
    pub lambda_max: f64,
    pub at_lambda_max: f64,
    pub lambda_decade: f64,
    pub at_decade: f64,
    pub pass: bool,
}

/// ‖S(Λ_max) − 1‖ against ‖S(Λ_max/10) − 1‖.
pub fn smatrix_high_energy(s: &[FiberOperator]) -> SHighEnergyReport {
    let lambdas: Vec<f64> = s.iter().map(|f| f.lambda).collect();
    let top = s.len() - 1;
    let lmax = lambdas[top];
    let i10 = nearest_index(&lambdas, lmax / 10.0);
    let a = s[top].distance_from_identity();
    let b = s[i10].distance_from_identity();
    SHighEnergyReport {
        lambda_max: lmax,
        at_lambda_max: a,
        lambda_decade: lambdas[i10],
        at_decade: b,
        pass: if b == 0.0 { a == 0.0 } else { a < b },
    }
}

/// max |S(ω_m, ω_m') − S(−ω_m', −ω_m)|.
pub fn reciprocity_defect(s: &FiberOperator) -> f64 {
    let n = s.n_omega();
    let h = n / 2;
    let mut d: f64 = 0.0;
    for m in 0..n {
        for mp in 0..n {
            d = d.max((s.matrix[(m, mp)] - s.matrix[((mp + h) % n, (m + h) % n)]).norm());
        }
    }
    d
}

/// CSV table with columns lambda,m,m_prime,re,im.
pub fn write_csv(out: &mut impl Write, s: &[FiberOperator]) -> std::io::Result<()> {
    writeln!(out, "lambda,m,m_prime,re,im")?;
    for f in s {
        for m in 0..f.n_omega() {
            for mp in 0..f.n_omega() {
                let z = f.matrix[(m, mp)];
                writeln!(
                    out,
                    "{:.17e},{},{},{:.17e},{:.17e}",
                    f.lambda, m, mp, z.re, z.im
                )?;
            }
        }
    }
    Ok(())
}

/// Energies of an [`EnergyGrid`] as fibers on demand.
pub fn s_curve(
    egrid: &EnergyGrid,
    quad: &Arc<SupportQuadrature>,
    n_omega: usize,
    tol_sing: f64,
) -> Result<Vec<FiberOperator>> {
    Ok(solve_fibers(egrid.lambdas(), quad, n_omega, tol_sing)?
        .into_iter()
        .map(|f| f.s)
        .collect())
}
