use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::bessel::{hankel1_0, y0};
use crate::free_ops::f0_adjoint_matrix;
use crate::potential::SupportQuadrature;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result, C64, I};

pub const TOL_SING: f64 = 1e-10;
pub const DEFAULT_CAP: usize = 4000;

/// Outgoing free kernel (i/4)H₀⁽¹⁾(kr), r > 0.
pub fn resolvent_kernel(k: f64, r: f64) -> Result<C64> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(
            "r = 0 is singular; use diagonal_entry".into(),
        ));
    }
    Ok(I * hankel1_0(k * r) * 0.25)
}

/// Diagonal kernel entry for an h×h cell centred on the node.
///
/// The real part -Y₀(kr)/4 is averaged over the cell: Y₀(kr) = (2/π)ln r + Φ(r), the
/// log part has a closed-form average and Φ is smooth enough for polar Gauss-Legendre.
/// The imaginary part J₀(kr)/4 is taken at r = 0. With that choice Im(vR₀v) equals
/// π F₀*F₀ on the quadrature up to angular aliasing, which makes the discrete S(λ)
/// unitary to the same accuracy.
pub fn diagonal_entry(k: f64, h: f64) -> C64 {
    let a = h / 2.0;
    let log_mean = a.ln() + LN_2 / 2.0 - 1.5 + PI / 4.0;
    let (t, tw) = gauss_legendre(16);
    let mut phi_mean = 0.0;
    for (ti, twi) in t.iter().zip(&tw) {
        let theta = PI / 8.0 * (ti + 1.0);
        let rmax = a / theta.cos();
        let mut inner = 0.0;
        for (si, swi) in t.iter().zip(&tw) {
            let r = rmax / 2.0 * (si + 1.0);
            inner += swi * (y0(k * r) - 2.0 / PI * r.ln()) * r;
        }
        phi_mean += twi * inner * rmax / 2.0;
    }
    phi_mean *= PI / 8.0 * 2.0 / (a * a);
    let y_mean = 2.0 / PI * log_mean + phi_mean;
    C64::new(-y_mean / 4.0, 0.25)
}

/// Kernel values indexed by absolute lattice offset (|Δi|, |Δj|).
#[derive(Clone, Debug)]
pub struct KernelTable {
    span: usize,
    values: Vec<C64>,
}

impl KernelTable {
    pub fn new(k: f64, h: f64, span: usize) -> Self {
        let w = span + 1;
        let mut values = vec![C64::new(0.0, 0.0); w * w];
        for a in 0..w {
            for b in a..w {
                let val = if a == 0 && b == 0 {
                    diagonal_entry(k, h)
                } else {
                    I * hankel1_0(k * h * ((a * a + b * b) as f64).sqrt()) * 0.25
                };
                values[a * w + b] = val;
                values[b * w + a] = val;
            }
        }
        Self { span, values }
    }

    pub fn get(&self, da: i64, db: i64) -> C64 {
        self.values[da.unsigned_abs() as usize * (self.span + 1) + db.unsigned_abs() as usize]
    }
}

fn lattice_span(quad: &SupportQuadrature) -> usize {
    let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
    for p in 0..quad.len() {
        let (i, j) = quad.lattice(p);
        lo = (lo.0.min(i), lo.1.min(j));
        hi = (hi.0.max(i), hi.1.max(j));
    }
    if quad.is_empty() {
        0
    } else {
        (hi.0 - lo.0).max(hi.1 - lo.1) as usize
    }
}

/// M₀(λ+i0) on the support quadrature.
#[derive(Clone, Debug)]
pub struct BSMatrix {
    pub lambda: f64,
    pub m: Mat<C64>,
    pub quad: Arc<SupportQuadrature>,
}

/// G = vR₀(λ+i0)v on the quadrature (node weights included).
pub fn assemble_g(lambda: f64, quad: &SupportQuadrature) -> Result<Mat<C64>> {
    if !(lambda > 0.0) {
        return Err(Error::Energy {
            lambda,
            reason: "use zero_energy_diagnostic for lambda <= 0".into(),
        });
    }
    let k = lambda.sqrt();
    let table = KernelTable::new(k, quad.grid.spacing(), lattice_span(quad));
    let lat: Vec<(i64, i64)> = (0..quad.len()).map(|p| quad.lattice(p)).collect();
    let w = quad.weight;
    Ok(Mat::from_fn(quad.len(), quad.len(), |p, q| {
        table.get(lat[p].0 - lat[q].0, lat[p].1 - lat[q].1) * (quad.v[p] * quad.v[q] * w)
    }))
}

pub fn assemble_m0(lambda: f64, quad: &Arc<SupportQuadrature>) -> Result<BSMatrix> {
    let mut m = assemble_g(lambda, quad)?;
    for p in 0..quad.len() {
        m[(p, p)] += quad.u[p];
    }
    Ok(BSMatrix {
        lambda,
        m,
        quad: quad.clone(),
    })
}

/// LU factorization of M₀(λ+i0) with conditioning data.
pub struct BSInverse {
    pub lambda: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// ‖M·M⁻¹X − X‖/‖X‖ on probe vectors.
    pub residual: f64,
    pub quad: Arc<SupportQuadrature>,
    lu: Option<PartialPivLu<C64>>,
}

impl std::fmt::Debug for BSInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BSInverse")
            .field("lambda", &self.lambda)
            .field("sigma_min", &self.sigma_min)
            .field("sigma_max", &self.sigma_max)
            .field("residual", &self.residual)
            .finish()
    }
}

fn probe(n: usize, cols: usize, seed: u64) -> Mat<C64> {
    // cheap deterministic pseudo-random entries
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    Mat::from_fn(n, cols, |_, _| C64::new(next(), next()))
}

fn fro(m: faer::MatRef<'_, C64>) -> f64 {
    m.norm_l2()
}

impl BSInverse {
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }

    pub fn dim(&self) -> usize {
        self.quad.len()
    }

    /// M⁻¹X.
    pub fn solve(&self, x: faer::MatRef<'_, C64>) -> Mat<C64> {
        match &self.lu {
            Some(lu) => lu.solve(x),
            None => x.to_owned(),
        }
    }

    /// M⁻*X.
    pub fn solve_adjoint(&self, x: faer::MatRef<'_, C64>) -> Mat<C64> {
        let mut y = x.to_owned();
        if let Some(lu) = &self.lu {
            lu.solve_adjoint_in_place(y.as_mut());
        }
        y
    }

    /// Dense M⁻¹.
    pub fn dense(&self) -> Mat<C64> {
        self.solve(Mat::<C64>::identity(self.dim(), self.dim()).as_ref())
    }

    /// ‖M⁻¹ − diag(u)‖ (spectral norm, power iteration).
    pub fn defect_from_u(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let u = &self.quad.u;
        let apply = |x: &Mat<C64>| {
            let mut y = self.solve(x.as_ref());
            for p in 0..n {
                y[(p, 0)] -= x[(p, 0)] * u[p];
            }
            y
        };
        let apply_adj = |x: &Mat<C64>| {
            let mut y = self.solve_adjoint(x.as_ref());
            for p in 0..n {
                y[(p, 0)] -= x[(p, 0)] * u[p];
            }
            y
        };
        power_norm(n, 1e-9, apply, apply_adj)
    }
}

/// Largest singular value of a linear map given its action and adjoint action.
fn power_norm(
    n: usize,
    rtol: f64,
    a: impl Fn(&Mat<C64>) -> Mat<C64>,
    ah: impl Fn(&Mat<C64>) -> Mat<C64>,
) -> f64 {
    let mut x = probe(n, 1, 7);
    let mut est = 0.0;
    for it in 0..200 {
        let nx = fro(x.as_ref());
        if nx == 0.0 {
            return 0.0;
        }
        x = x * faer::Scale(C64::new(1.0 / nx, 0.0));
        let y = ah(&a(&x));
        let new = fro(y.as_ref()).sqrt();
        x = y;
        if it > 5 && (new - est).abs() <= rtol * new {
            return new;
        }
        est = new;
    }
    est
}

/// Exact SVD below this size, power iteration above.
const SVD_LIMIT: usize = 700;

/// Factorizes M₀(λ+i0); errors if σ_min ≤ tol_sing.
pub fn invert_m0(m: &BSMatrix, tol_sing: f64) -> Result<BSInverse> {
    invert_impl(m, tol_sing, m.m.nrows() <= SVD_LIMIT)
}

/// Same as [`invert_m0`] but σ_min always comes from power iteration through the LU.
/// Used in the per-energy sweeps, where a dense SVD per fiber dominates the cost.
pub fn invert_m0_fast(m: &BSMatrix, tol_sing: f64) -> Result<BSInverse> {
    invert_impl(m, tol_sing, false)
}

fn invert_impl(m: &BSMatrix, tol_sing: f64, exact_svd: bool) -> Result<BSInverse> {
    let n = m.m.nrows();
    if n == 0 {
        return Ok(BSInverse {
            lambda: m.lambda,
            sigma_min: 1.0,
            sigma_max: 1.0,
            residual: 0.0,
            quad: m.quad.clone(),
            lu: None,
        });
    }
    if m.m
        .as_ref()
        .col_iter()
        .any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
    {
        return Err(Error::LinearAlgebra(format!(
            "non-finite M0 entries at lambda = {}",
            m.lambda
        )));
    }
    let lu = m.m.partial_piv_lu();
    let mut inv = BSInverse {
        lambda: m.lambda,
        sigma_min: 0.0,
        sigma_max: 0.0,
        residual: 0.0,
        quad: m.quad.clone(),
        lu: Some(lu),
    };
    if exact_svd {
        let sv =
            m.m.singular_values()
                .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        inv.sigma_max = sv.iter().cloned().fold(0.0, f64::max);
        inv.sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    } else {
        // the sweep variant only needs σ_min as a diagnostic
        let rtol = if n <= SVD_LIMIT { 1e-6 } else { 1e-9 };
        inv.sigma_max = power_norm(n, rtol, |x| &m.m * x, |x| m.m.adjoint() * x);
        let inv_norm = power_norm(
            n,
            rtol,
            |x| inv.solve(x.as_ref()),
            |x| inv.solve_adjoint(x.as_ref()),
        );
        inv.sigma_min = 1.0 / inv_norm;
    }
    if !(inv.sigma_min > tol_sing) {
        return Err(Error::NearSingular {
            lambda: m.lambda,
            sigma_min: inv.sigma_min,
        });
    }
    let x = probe(n, 4, 3);
    let r = &m.m * inv.solve(x.as_ref()) - &x;
    inv.residual = fro(r.as_ref()) / fro(x.as_ref());
    if !(inv.residual < 1e-8) {
        return Err(Error::LinearAlgebra(format!(
            "inverse residual {:e} at lambda = {} exceeds 1e-8",
            inv.residual, m.lambda
        )));
    }
    Ok(inv)
}

/// Y(λ) = v M₀(λ+i0)⁻¹ v F₀(λ)*, shape n_s × N_ω: the kernel of φ(λ) ↦ (Bφ)(λ).
pub fn b_fiber_kernel(inv: &BSInverse, n_omega: usize) -> Mat<C64> {
    let quad = &inv.quad;
    let mut rhs = f0_adjoint_matrix(inv.lambda, &quad.nodes, n_omega);
    for p in 0..quad.len() {
        for m in 0..n_omega {
            rhs[(p, m)] *= quad.v[p];
        }
    }
    let mut y = inv.solve(rhs.as_ref());
    for p in 0..quad.len() {
        for m in 0..n_omega {
            y[(p, m)] *= quad.v[p];
        }
    }
    y
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HighEnergyReport {
    pub lambdas: Vec<f64>,
    /// ‖M₀(λ_i+i0)⁻¹ − u‖.
    pub defects: Vec<f64>,
    /// Defect at Λ_max and at the grid point nearest Λ_max/10.
    pub top: f64,
    pub top_decade_start: f64,
    pub pass: bool,
}

/// Tabulates ‖M₀(λ+i0)⁻¹ − u‖ on `lambdas`.
pub fn high_energy_check(
    quad: &Arc<SupportQuadrature>,
    lambdas: &[f64],
) -> Result<HighEnergyReport> {
    if lambdas.len() < 2 {
        return Err(Error::InvalidParameter("need at least two energies".into()));
    }
    let defects = lambdas
        .iter()
        .map(|&l| invert_m0(&assemble_m0(l, quad)?, TOL_SING).map(|inv| inv.defect_from_u()))
        .collect::<Result<Vec<_>>>()?;
    let lmax = *lambdas.last().unwrap();
    let i10 = nearest_index(lambdas, lmax / 10.0);
    let top = *defects.last().unwrap();
    let start = defects[i10];
    let pass = if quad.is_empty() {
        top == 0.0
    } else {
        top < start
    };
    Ok(HighEnergyReport {
        lambdas: lambdas.to_vec(),
        defects,
        top,
        top_decade_start: start,
        pass,
    })
}

pub(crate) fn nearest_index(xs: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if (v.ln() - x.ln()).abs() < (xs[best].ln() - x.ln()).abs() {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ZeroEnergyVerdict {
    Generic,
    ResonantSuspect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroEnergyReport {
    pub lambdas: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub condition: Vec<f64>,
    /// σ_min at the top rung divided by σ_min at the bottom rung.
    pub drop: f64,
    pub verdict: ZeroEnergyVerdict,
}

/// Drop factor along the ladder above which σ_min counts as collapsing.
pub const RESONANCE_DROP: f64 = 10.0;

/// σ_min(M₀(λ+i0)) down a decreasing ladder of energies.
pub fn zero_energy_diagnostic(
    quad: &Arc<SupportQuadrature>,
    ladder: &[f64],
) -> Result<ZeroEnergyReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "energy ladder must be strictly decreasing".into(),
        ));
    }
    if *ladder.last().unwrap() < 1e-6 {
        return Err(Error::InvalidParameter(
            "ladder goes below the 1e-6 floor".into(),
        ));
    }
    let mut sigma_min = Vec::new();
    let mut condition = Vec::new();
    for &l in ladder {
        let m = assemble_m0(l, quad)?;
        let (smin, smax) = match invert_m0(&m, 0.0) {
            Ok(inv) => (inv.sigma_min, inv.sigma_max),
            Err(Error::NearSingular { sigma_min, .. }) => (sigma_min, f64::INFINITY),
            Err(e) => return Err(e),
        };
        sigma_min.push(smin);
        condition.push(smax / smin);
    }
    let drop = sigma_min[0] / sigma_min.last().unwrap();
    let verdict = if drop > RESONANCE_DROP || *sigma_min.last().unwrap() < TOL_SING {
        ZeroEnergyVerdict::ResonantSuspect
    } else {
        ZeroEnergyVerdict::Generic
    };
    Ok(ZeroEnergyReport {
        lambdas: ladder.to_vec(),
        sigma_min,
        condition,
        drop,
        verdict,
    })
}

/// Smallest singular value of M₀(λ+i0).
pub fn sigma_min_at(lambda: f64, quad: &Arc<SupportQuadrature>) -> Result<f64> {
    let m = assemble_m0(lambda, quad)?;
    match invert_m0(&m, 0.0) {
        Ok(inv) => Ok(inv.sigma_min),
        Err(Error::NearSingular { sigma_min, .. }) => Ok(sigma_min),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceSearch {
    /// Coupling minimizing σ_min(M₀(λ_bottom+i0)).
    pub coupling: f64,
    pub sigma_min: f64,
    pub lambda_bottom: f64,
    /// (g, σ_min) for every evaluation, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Golden-section search for the coupling at which σ_min(M₀(λ_bottom+i0)) is smallest,
/// i.e. the discrete threshold resonance inside `bracket`. `family(g)` builds the
/// potential; the support is re-sampled for every g.
pub fn resonant_coupling_search(
    family: impl Fn(f64) -> Result<crate::potential::Potential>,
    grid: &crate::grid::Grid2D,
    v_cut: f64,
    bracket: (f64, f64),
    lambda_bottom: f64,
    g_tol: f64,
) -> Result<ResonanceSearch> {
    let (mut a, mut b) = bracket;
    if !(a < b) || !(g_tol > 0.0) || !(lambda_bottom > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bracket {bracket:?}, g_tol {g_tol}"
        )));
    }
    let mut evals = Vec::new();
    let mut eval = |g: f64| -> Result<f64> {
        let q = Arc::new(crate::potential::support_for(
            &family(g)?,
            grid,
            v_cut,
            DEFAULT_CAP,
        )?);
        let s = sigma_min_at(lambda_bottom, &q)?;
        evals.push((g, s));
        Ok(s)
    };
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while b - a > g_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = eval(d)?;
        }
    }
    let (coupling, sigma_min) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok(ResonanceSearch {
        coupling,
        sigma_min,
        lambda_bottom,
        evaluations: evals,
    })
}
