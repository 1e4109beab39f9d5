use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{fourier, Direction, Field2D, Grid2D};
use crate::potential::SupportQuadrature;
use crate::{Error, Result, C64};

/// 2^{-1/2}(2π)⁻¹, the constant in F₀(λ).
pub const F0_CONST: f64 = 1.0 / (SQRT_2 * 2.0 * PI);

pub fn angles(n_omega: usize) -> Vec<f64> {
    (0..n_omega)
        .map(|m| 2.0 * PI * m as f64 / n_omega as f64)
        .collect()
}

fn check_n_omega(n_omega: usize) -> Result<()> {
    if n_omega < 16 || n_omega % 2 == 1 {
        return Err(Error::InvalidParameter(format!(
            "N_omega must be even and >= 16, got {n_omega}"
        )));
    }
    Ok(())
}

/// Element of L²(𝕊) sampled at N_ω equispaced angles.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularFunction {
    values: Vec<C64>,
}

impl AngularFunction {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        check_n_omega(values.len())?;
        Ok(Self { values })
    }

    pub fn zeros(n_omega: usize) -> Self {
        Self {
            values: vec![C64::new(0.0, 0.0); n_omega],
        }
    }

    pub fn from_fn(n_omega: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::new(angles(n_omega).into_iter().map(f).collect())
    }

    pub fn n_omega(&self) -> usize {
        self.values.len()
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn inner(&self, other: &AngularFunction) -> C64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            * self.d_omega()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
    Custom,
}

/// Energies 0 < λ₁ < ... < λ_N = Λ_max with quadrature weights dλ_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
    spacing: Spacing,
}

impl EnergyGrid {
    /// Uniform in s = ln λ; trapezoid weights λ_i Δs.
    pub fn log(lambda_min: f64, lambda_max: f64, n: usize) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_max > lambda_min && n >= 2) {
            return Err(Error::InvalidParameter(format!(
                "log energy grid needs 0 < lambda_min < lambda_max and n >= 2 (got {lambda_min}, {lambda_max}, {n})"
            )));
        }
        let (s0, s1) = (lambda_min.ln(), lambda_max.ln());
        let ds = (s1 - s0) / (n - 1) as f64;
        let mut lambdas: Vec<f64> = (0..n).map(|i| (s0 + i as f64 * ds).exp()).collect();
        lambdas[n - 1] = lambda_max;
        let weights = lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 || i == n - 1 {
                    0.5 * l * ds
                } else {
                    l * ds
                }
            })
            .collect();
        Ok(Self {
            lambdas,
            weights,
            spacing: Spacing::Log,
        })
    }

    /// λ_i = iΛ/N; trapezoid weights with the λ = 0 endpoint folded into the first node.
    pub fn linear(lambda_max: f64, n: usize) -> Result<Self> {
        if !(lambda_max > 0.0 && n >= 2) {
            return Err(Error::InvalidParameter(format!(
                "linear energy grid needs lambda_max > 0, n >= 2"
            )));
        }
        let dl = lambda_max / n as f64;
        let lambdas = (1..=n).map(|i| i as f64 * dl).collect();
        let weights = (1..=n)
            .map(|i| {
                if i == 1 {
                    1.5 * dl
                } else if i == n {
                    0.5 * dl
                } else {
                    dl
                }
            })
            .collect();
        Ok(Self {
            lambdas,
            weights,
            spacing: Spacing::Linear,
        })
    }

    /// Arbitrary increasing energies with trapezoid weights in λ.
    pub fn custom(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.len() < 2 || lambdas[0] <= 0.0 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "custom energies must be positive and increasing".into(),
            ));
        }
        let n = lambdas.len();
        let weights = (0..n)
            .map(|i| {
                let lo = if i == 0 { lambdas[0] } else { lambdas[i - 1] };
                let hi = if i == n - 1 {
                    lambdas[n - 1]
                } else {
                    lambdas[i + 1]
                };
                0.5 * (hi - lo)
            })
            .collect();
        Ok(Self {
            lambdas,
            weights,
            spacing: Spacing::Custom,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().unwrap()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas[0]
    }

    /// Δs for log grids.
    pub fn log_step(&self) -> Option<f64> {
        match self.spacing {
            Spacing::Log => Some((self.lambdas[1] / self.lambdas[0]).ln()),
            _ => None,
        }
    }

    /// √Λ_max < 0.8 π/h.
    pub fn check_nyquist(&self, grid: &Grid2D) -> Result<()> {
        check_energy(self.lambda_max(), grid)
    }
}

/// Errors unless 0 < λ and √λ stays below 0.8 of the grid's Nyquist wavenumber.
pub fn check_energy(lambda: f64, grid: &Grid2D) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::Energy {
            lambda,
            reason: "must be positive".into(),
        });
    }
    let kmax = 0.8 * grid.xi_max();
    if lambda.sqrt() >= kmax {
        return Err(Error::Energy {
            lambda,
            reason: format!("sqrt(lambda) exceeds 0.8*pi/h = {kmax}"),
        });
    }
    Ok(())
}

/// Element of L²(ℝ₊; L²(𝕊)) on an [`EnergyGrid`].
#[derive(Clone, Debug)]
pub struct FiberedFunction {
    egrid: Arc<EnergyGrid>,
    n_omega: usize,
    /// `data[i][m]` = φ(λ_i, ω_m).
    data: Vec<Vec<C64>>,
}

impl FiberedFunction {
    pub fn new(egrid: Arc<EnergyGrid>, n_omega: usize, data: Vec<Vec<C64>>) -> Result<Self> {
        check_n_omega(n_omega)?;
        if data.len() != egrid.len() || data.iter().any(|f| f.len() != n_omega) {
            return Err(Error::InvalidParameter(
                "fibered data shape mismatch".into(),
            ));
        }
        Ok(Self {
            egrid,
            n_omega,
            data,
        })
    }

    pub fn zeros(egrid: Arc<EnergyGrid>, n_omega: usize) -> Self {
        let data = vec![vec![C64::new(0.0, 0.0); n_omega]; egrid.len()];
        Self {
            egrid,
            n_omega,
            data,
        }
    }

    pub fn egrid(&self) -> &Arc<EnergyGrid> {
        &self.egrid
    }

    pub fn n_omega(&self) -> usize {
        self.n_omega
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.n_omega as f64
    }

    pub fn fiber(&self, i: usize) -> &[C64] {
        &self.data[i]
    }

    pub fn fiber_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i]
    }

    pub fn data(&self) -> &[Vec<C64>] {
        &self.data
    }

    pub fn angular(&self, i: usize) -> AngularFunction {
        AngularFunction {
            values: self.data[i].clone(),
        }
    }

    pub fn inner(&self, other: &FiberedFunction) -> C64 {
        let dw = self.d_omega();
        self.data
            .iter()
            .zip(&other.data)
            .zip(self.egrid.weights())
            .map(|((a, b), w)| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * (w * dw))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn sub(&self, other: &FiberedFunction) -> FiberedFunction {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &FiberedFunction) -> FiberedFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: C64) -> FiberedFunction {
        let data = self
            .data
            .iter()
            .map(|f| f.iter().map(|z| z * c).collect())
            .collect();
        FiberedFunction {
            egrid: self.egrid.clone(),
            n_omega: self.n_omega,
            data,
        }
    }

    fn zip_with(&self, other: &FiberedFunction, op: impl Fn(C64, C64) -> C64) -> FiberedFunction {
        assert_eq!(self.n_omega, other.n_omega);
        assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| op(*x, *y)).collect())
            .collect();
        FiberedFunction {
            egrid: self.egrid.clone(),
            n_omega: self.n_omega,
            data,
        }
    }
}

/// Functions of λ with values at a finite node set (support quadrature or grid):
/// the discrete counterpart of L²(ℝ₊; 𝓗_t^s) on which B and N act.
#[derive(Clone, Debug)]
pub struct NodalFibers {
    pub egrid: Arc<EnergyGrid>,
    pub nodes: Arc<Vec<[f64; 2]>>,
    /// Area weight of each node (h²).
    pub weight: f64,
    /// `data[i][p]` = ξ(λ_i)(x_p).
    pub data: Vec<Vec<C64>>,
}

impl NodalFibers {
    pub fn zeros(egrid: Arc<EnergyGrid>, nodes: Arc<Vec<[f64; 2]>>, weight: f64) -> Self {
        let data = vec![vec![C64::new(0.0, 0.0); nodes.len()]; egrid.len()];
        Self {
            egrid,
            nodes,
            weight,
            data,
        }
    }

    /// ξ(λ) ≡ f on every fiber.
    pub fn constant(egrid: Arc<EnergyGrid>, f: &Field2D) -> Self {
        let nodes: Vec<[f64; 2]> = f.grid().nodes().collect();
        let data = vec![f.values().to_vec(); egrid.len()];
        Self {
            egrid,
            nodes: Arc::new(nodes),
            weight: f.grid().cell_area(),
            data,
        }
    }

    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .zip(self.egrid.weights())
            .map(|(f, w)| w * self.weight * f.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &NodalFibers) -> NodalFibers {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        NodalFibers {
            data,
            ..self.clone()
        }
    }
}

/// R₀(z)f = 𝓕⁻¹(|ξ|² - z)⁻¹𝓕f for Im z ≠ 0.
pub fn apply_r0(f: &Field2D, z: C64) -> Result<Field2D> {
    if z.im == 0.0 {
        return Err(Error::RealSpectralParameter(z.re));
    }
    let mut ff = fourier(f, Direction::Forward);
    let dual = *ff.grid();
    for (idx, v) in ff.values_mut().iter_mut().enumerate() {
        let k = dual.node(idx);
        *v /= C64::new(k[0] * k[0] + k[1] * k[1], 0.0) - z;
    }
    Ok(fourier(&ff, Direction::Inverse))
}

/// Discrete Laplacian -Δ as a Fourier multiplier.
pub fn apply_minus_laplacian(f: &Field2D) -> Field2D {
    let mut ff = fourier(f, Direction::Forward);
    let dual = *ff.grid();
    for (idx, v) in ff.values_mut().iter_mut().enumerate() {
        let k = dual.node(idx);
        *v *= k[0] * k[0] + k[1] * k[1];
    }
    fourier(&ff, Direction::Inverse)
}

/// (F₀(λ)f)(ω_m) = 2^{-1/2}(𝓕f)(√λ ω_m), with 𝓕f evaluated off-lattice as the
/// trigonometric interpolant of its lattice values (the discrete-time Fourier sum).
pub fn f0_at(lambda: f64, f: &Field2D, n_omega: usize) -> Result<AngularFunction> {
    check_n_omega(n_omega)?;
    let grid = f.grid();
    check_energy(lambda, grid)?;
    let k = lambda.sqrt();
    let n = grid.n();
    let coords: Vec<f64> = (0..n).map(|j| grid.coord(j)).collect();
    let c = F0_CONST * grid.cell_area();
    let vals = f.values();
    let mut out = Vec::with_capacity(n_omega);
    let mut e2 = vec![C64::new(0.0, 0.0); n];
    for theta in angles(n_omega) {
        let (s, co) = theta.sin_cos();
        let (k1, k2) = (k * co, k * s);
        for (j, x) in coords.iter().enumerate() {
            e2[j] = C64::from_polar(1.0, -k2 * x);
        }
        let mut total = C64::new(0.0, 0.0);
        for (i, x) in coords.iter().enumerate() {
            let row = &vals[i * n..(i + 1) * n];
            let inner: C64 = row.iter().zip(&e2).map(|(a, b)| a * b).sum();
            total += inner * C64::from_polar(1.0, -k1 * x);
        }
        out.push(total * c);
    }
    Ok(AngularFunction { values: out })
}

/// (F₀(λ)*g)(x) = 2^{-1/2}(2π)⁻¹ Δω Σ_m e^{i√λ ω_m·x} g(ω_m) at the target points.
pub fn f0_adjoint_at(lambda: f64, g: &AngularFunction, targets: &[[f64; 2]]) -> Result<Vec<C64>> {
    if !(lambda > 0.0) {
        return Err(Error::Energy {
            lambda,
            reason: "must be positive".into(),
        });
    }
    let k = lambda.sqrt();
    let dirs: Vec<(f64, f64)> = angles(g.n_omega())
        .iter()
        .map(|t| (t.cos(), t.sin()))
        .collect();
    let c = F0_CONST * g.d_omega();
    Ok(targets
        .iter()
        .map(|x| {
            dirs.iter()
                .zip(g.values())
                .map(|(d, gv)| C64::from_polar(1.0, k * (d.0 * x[0] + d.1 * x[1])) * gv)
                .sum::<C64>()
                * c
        })
        .collect())
}

/// Matrix of F₀(λ) restricted to nodes with area weight w: entry
/// 2^{-1/2}(2π)⁻¹ w e^{-i√λ ω_m·x_p}, shape N_ω × n_nodes.
pub fn f0_matrix(lambda: f64, nodes: &[[f64; 2]], weight: f64, n_omega: usize) -> Mat<C64> {
    let k = lambda.sqrt();
    let dirs: Vec<(f64, f64)> = angles(n_omega).iter().map(|t| (t.cos(), t.sin())).collect();
    let c = F0_CONST * weight;
    Mat::from_fn(n_omega, nodes.len(), |m, p| {
        let x = nodes[p];
        C64::from_polar(c, -k * (dirs[m].0 * x[0] + dirs[m].1 * x[1]))
    })
}

/// Matrix of F₀(λ)* from angles to nodes, shape n_nodes × N_ω.
pub fn f0_adjoint_matrix(lambda: f64, nodes: &[[f64; 2]], n_omega: usize) -> Mat<C64> {
    let k = lambda.sqrt();
    let dirs: Vec<(f64, f64)> = angles(n_omega).iter().map(|t| (t.cos(), t.sin())).collect();
    let c = F0_CONST * 2.0 * PI / n_omega as f64;
    Mat::from_fn(nodes.len(), n_omega, |p, m| {
        let x = nodes[p];
        C64::from_polar(c, k * (dirs[m].0 * x[0] + dirs[m].1 * x[1]))
    })
}

/// F₀f on every fiber of an energy grid.
pub fn f0_fibered(f: &Field2D, egrid: &Arc<EnergyGrid>, n_omega: usize) -> Result<FiberedFunction> {
    egrid.check_nyquist(f.grid())?;
    let data = egrid
        .lambdas()
        .par_iter()
        .map(|&l| f0_at(l, f, n_omega).map(|a| a.values))
        .collect::<Result<Vec<_>>>()?;
    FiberedFunction::new(egrid.clone(), n_omega, data)
}

/// F₀*ψ = ∫dλ F₀(λ)*ψ(λ) evaluated on the nodes of `grid`.
pub fn f0_adjoint_fibered(psi: &FiberedFunction, grid: &Grid2D) -> Field2D {
    let nodes: Vec<[f64; 2]> = grid.nodes().collect();
    let mut acc = vec![C64::new(0.0, 0.0); nodes.len()];
    for (i, (&l, &w)) in psi
        .egrid()
        .lambdas()
        .iter()
        .zip(psi.egrid().weights())
        .enumerate()
    {
        let k = l.sqrt();
        let c = F0_CONST * psi.d_omega() * w;
        for (theta, g) in angles(psi.n_omega()).iter().zip(psi.fiber(i)) {
            if *g == C64::new(0.0, 0.0) {
                continue;
            }
            let (s, co) = theta.sin_cos();
            let gc = g * c;
            for (a, x) in acc.iter_mut().zip(&nodes) {
                *a += gc * C64::from_polar(1.0, k * (co * x[0] + s * x[1]));
            }
        }
    }
    Field2D::from_values(*grid, acc).unwrap()
}

/// (Nξ)(λ) = F₀(λ)ξ(λ), fiberwise.
pub fn apply_n(xi: &NodalFibers, n_omega: usize) -> Result<FiberedFunction> {
    check_n_omega(n_omega)?;
    let data = xi
        .egrid
        .lambdas()
        .iter()
        .zip(&xi.data)
        .map(|(&l, col)| {
            let f = f0_matrix(l, &xi.nodes, xi.weight, n_omega);
            (0..n_omega)
                .map(|m| (0..col.len()).map(|p| f[(m, p)] * col[p]).sum())
                .collect()
        })
        .collect();
    FiberedFunction::new(xi.egrid.clone(), n_omega, data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaReport {
    pub t: f64,
    pub lambdas: Vec<f64>,
    /// ‖F₀(λ_i)⟨x⟩^{-t}‖ on the quadrature.
    pub norms: Vec<f64>,
    /// ⟨λ_i⟩^{1/4}·norm_i.
    pub weighted: Vec<f64>,
    pub sup_weighted: f64,
    /// max/min of the weighted norm over the top decade, minus one.
    pub top_decade_variation: f64,
    /// Largest relative neighbour change of norm_i.
    pub max_neighbor_jump: f64,
    pub norm_at_lambda_min: f64,
    pub norm_at_lambda_max: f64,
}

/// Finite-rank stand-in for the boundedness/limit statements on F₀(λ)⟨x⟩^{-t}.
pub fn lemma_diagnostics(
    quad: &SupportQuadrature,
    egrid: &EnergyGrid,
    t: f64,
    n_omega: usize,
) -> Result<LemmaReport> {
    if !(t > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weight exponent t must exceed 1, got {t}"
        )));
    }
    check_n_omega(n_omega)?;
    egrid.check_nyquist(&quad.grid)?;
    let h = quad.grid.spacing();
    let dw = 2.0 * PI / n_omega as f64;
    let weights: Vec<f64> = quad
        .nodes
        .iter()
        .map(|x| (1.0 + x[0] * x[0] + x[1] * x[1]).powf(-t / 2.0))
        .collect();
    let mut norms = Vec::with_capacity(egrid.len());
    for &l in egrid.lambdas() {
        let f = f0_matrix(l, &quad.nodes, quad.weight, n_omega);
        // Operator from (nodes, h²) to (angles, Δω): rescale to Euclidean norms.
        let a = Mat::from_fn(n_omega, quad.len(), |m, p| {
            f[(m, p)] * (weights[p] * dw.sqrt() / h)
        });
        let gram = &a * a.adjoint();
        let ev = gram
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        norms.push(ev.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt());
    }
    let weighted: Vec<f64> = egrid
        .lambdas()
        .iter()
        .zip(&norms)
        .map(|(l, n)| (1.0 + l * l).powf(0.125) * n)
        .collect();
    let lmax = egrid.lambda_max();
    let top: Vec<f64> = egrid
        .lambdas()
        .iter()
        .zip(&weighted)
        .filter(|(l, _)| **l >= lmax / 10.0)
        .map(|(_, w)| *w)
        .collect();
    let tmax = top.iter().cloned().fold(0.0, f64::max);
    let tmin = top.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_neighbor_jump = norms
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0].max(1e-300))
        .fold(0.0, f64::max);
    Ok(LemmaReport {
        t,
        lambdas: egrid.lambdas().to_vec(),
        sup_weighted: weighted.iter().cloned().fold(0.0, f64::max),
        top_decade_variation: tmax / tmin - 1.0,
        max_neighbor_jump,
        norm_at_lambda_min: norms[0],
        norm_at_lambda_max: *norms.last().unwrap(),
        norms,
        weighted,
    })
}
