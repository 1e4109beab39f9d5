use std::f64::consts::{LN_10, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fft::{Fft1, Fft2};
use crate::free_ops::{f0_fibered, EnergyGrid, FiberedFunction, NodalFibers, Spacing};
use crate::grid::{fourier, Direction, Field2D, Grid2D, WavePacketSpec};
use crate::quadrature::CubicSpline;
use crate::{Error, Result, C64};

/// Bounded function of a dilation generator, given by its value at ν.
#[derive(Clone)]
pub struct MellinSymbol {
    tag: String,
    f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    sup: f64,
    constant: Option<C64>,
}

impl std::fmt::Debug for MellinSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MellinSymbol({}, sup={})", self.tag, self.sup)
    }
}

/// ϑ(ν) = ½(1 − tanh πν).
pub fn theta(nu: f64) -> f64 {
    0.5 * (1.0 - (PI * nu).tanh())
}

/// R(ν) = ½(1 + tanh(πν/2)).
pub fn r_symbol(nu: f64) -> f64 {
    0.5 * (1.0 + (PI * nu / 2.0).tanh())
}

impl MellinSymbol {
    /// `sup` must bound |f| on ℝ.
    pub fn custom(
        tag: &str,
        sup: f64,
        f: impl Fn(f64) -> C64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(sup.is_finite() && sup >= 0.0) {
            return Err(Error::InvalidParameter(
                "symbol needs a finite sup bound".into(),
            ));
        }
        Ok(Self {
            tag: tag.into(),
            f: Arc::new(f),
            sup,
            constant: None,
        })
    }

    pub fn theta() -> Self {
        Self {
            tag: "theta".into(),
            f: Arc::new(|nu| C64::new(theta(nu), 0.0)),
            sup: 1.0,
            constant: None,
        }
    }

    pub fn r() -> Self {
        Self {
            tag: "R".into(),
            f: Arc::new(|nu| C64::new(r_symbol(nu), 0.0)),
            sup: 1.0,
            constant: None,
        }
    }

    pub fn constant(c: C64) -> Self {
        Self {
            tag: format!("const({c})"),
            f: Arc::new(move |_| c),
            sup: c.norm(),
            constant: Some(c),
        }
    }

    /// e^{iτν}, the symbol of the dilation group U⁺_τ.
    pub fn group(tau: f64) -> Self {
        Self {
            tag: format!("exp(i*{tau}*nu)"),
            f: Arc::new(move |nu| C64::from_polar(1.0, tau * nu)),
            sup: 1.0,
            constant: if tau == 0.0 {
                Some(C64::new(1.0, 0.0))
            } else {
                None
            },
        }
    }

    /// ν ↦ f(−ν).
    pub fn reflected(&self) -> Self {
        let f = self.f.clone();
        Self {
            tag: format!("{}(-nu)", self.tag),
            f: Arc::new(move |nu| f(-nu)),
            sup: self.sup,
            constant: self.constant,
        }
    }

    /// ν ↦ 1 − f(ν).
    pub fn complement(&self) -> Self {
        let f = self.f.clone();
        Self {
            tag: format!("1-{}", self.tag),
            f: Arc::new(move |nu| C64::new(1.0, 0.0) - f(nu)),
            sup: 1.0 + self.sup,
            constant: self.constant.map(|c| C64::new(1.0, 0.0) - c),
        }
    }

    pub fn product(&self, other: &MellinSymbol) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        Self {
            tag: format!("{}*{}", self.tag, other.tag),
            f: Arc::new(move |nu| f(nu) * g(nu)),
            sup: self.sup * other.sup,
            constant: match (self.constant, other.constant) {
                (Some(a), Some(b)) => Some(a * b),
                _ => None,
            },
        }
    }

    /// ν ↦ f(cν).
    pub fn rescaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self {
            tag: format!("{}({c}nu)", self.tag),
            f: Arc::new(move |nu| f(c * nu)),
            sup: self.sup,
            constant: self.constant,
        }
    }

    pub fn eval(&self, nu: f64) -> C64 {
        (self.f)(nu)
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn as_constant(&self) -> Option<C64> {
        self.constant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogGridConfig {
    /// Margin below the smallest energy, in decades.
    pub margin_low: f64,
    /// Margin above the largest energy, in decades.
    pub margin_high: f64,
    /// Raised-cosine roll-off width at the lower edge, in decades.
    pub window: f64,
    /// Log-grid points per energy-grid step (log energy grids).
    pub refine: usize,
    /// |ψ| at Λ_max relative to the peak above which the fiber is rejected.
    pub underflow_tol: f64,
}

impl Default for LogGridConfig {
    fn default() -> Self {
        Self {
            margin_low: 6.0,
            margin_high: 6.0,
            window: 0.5,
            refine: 1,
            underflow_tol: 1e-4,
        }
    }
}

/// Uniform grid in s = ln λ covering an energy grid plus margins; N_s is a power of two.
#[derive(Clone, Debug)]
pub struct LogGrid {
    pub s_min: f64,
    pub ds: f64,
    pub n_s: usize,
    /// s-values of the energy grid.
    pub s_e: Vec<f64>,
    /// Log-grid index of λ_i when the grids are aligned.
    aligned: Option<Vec<usize>>,
    window_top: f64,
    underflow_tol: f64,
}

impl LogGrid {
    pub fn for_egrid(egrid: &EnergyGrid, cfg: &LogGridConfig) -> Result<Self> {
        if cfg.margin_low < 2.0 || cfg.margin_high < 2.0 {
            return Err(Error::InvalidParameter(
                "log-grid margins must be at least 2 decades".into(),
            ));
        }
        if cfg.refine == 0 || !(cfg.window > 0.0 && cfg.window < cfg.margin_low) {
            return Err(Error::InvalidParameter("bad log-grid refine/window".into()));
        }
        let s_e: Vec<f64> = egrid.lambdas().iter().map(|l| l.ln()).collect();
        let (s0, s1) = (s_e[0], *s_e.last().unwrap());
        let (ds, aligned_step) = match egrid.spacing() {
            Spacing::Log => (egrid.log_step().unwrap() / cfg.refine as f64, true),
            _ => {
                let min = s_e
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min);
                (min.max(1e-3), false)
            }
        };
        let lo = cfg.margin_low * LN_10;
        let hi = cfg.margin_high * LN_10;
        let k_lo = (lo / ds).ceil() as usize;
        let s_min = s0 - k_lo as f64 * ds;
        let need = ((s1 + hi - s_min) / ds).ceil() as usize + 1;
        let n_s = need.next_power_of_two();
        if n_s > 1 << 22 {
            return Err(Error::LogRange(format!("log grid would need {n_s} points")));
        }
        // with refine > 1 the in-between nodes come from the spline
        let aligned =
            (aligned_step && cfg.refine == 1).then(|| (0..s_e.len()).map(|i| k_lo + i).collect());
        Ok(Self {
            s_min,
            ds,
            n_s,
            s_e,
            aligned,
            window_top: s_min + cfg.window * LN_10,
            underflow_tol: cfg.underflow_tol,
        })
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s_min + j as f64 * self.ds
    }

    pub fn s_max(&self) -> f64 {
        self.s(self.n_s - 1)
    }

    /// Frequency of FFT bin k.
    pub fn nu(&self, k: usize) -> f64 {
        let kk = if k < self.n_s / 2 {
            k as f64
        } else {
            k as f64 - self.n_s as f64
        };
        2.0 * PI * kk / (self.n_s as f64 * self.ds)
    }

    fn window(&self, s: f64) -> f64 {
        if s >= self.window_top {
            1.0
        } else if s <= self.s_min {
            0.0
        } else {
            0.5 * (1.0 - (PI * (s - self.s_min) / (self.window_top - self.s_min)).cos())
        }
    }

    /// ψ(s_j) = e^{s/2}φ(e^s) on the log grid from the fiber values φ(λ_i).
    fn extend(&self, values: &[C64]) -> Vec<C64> {
        let s0 = self.s_e[0];
        let s1 = *self.s_e.last().unwrap();
        let psi_e: Vec<C64> = values
            .iter()
            .zip(&self.s_e)
            .map(|(v, s)| v * (s / 2.0).exp())
            .collect();
        let spline = if self.aligned.is_none() {
            Some(CubicSpline::new(self.s_e.clone(), psi_e.clone()))
        } else {
            None
        };
        let mut out = vec![C64::new(0.0, 0.0); self.n_s];
        for (j, o) in out.iter_mut().enumerate() {
            let s = self.s(j);
            if s < s0 - 1e-12 {
                *o = values[0] * ((s / 2.0).exp() * self.window(s));
            } else if s <= s1 + 1e-12 {
                if let Some(sp) = &spline {
                    *o = sp.eval(s);
                }
            }
        }
        if let Some(idx) = &self.aligned {
            for (i, &j) in idx.iter().enumerate() {
                out[j] = psi_e[i];
            }
        }
        out
    }

    /// φ(λ_i) = e^{-s_i/2}ψ(s_i).
    fn restrict(&self, psi: &[C64]) -> Vec<C64> {
        match &self.aligned {
            Some(idx) => idx
                .iter()
                .zip(&self.s_e)
                .map(|(&j, s)| psi[j] * (-s / 2.0).exp())
                .collect(),
            None => {
                let xs: Vec<f64> = (0..self.n_s).map(|j| self.s(j)).collect();
                let sp = CubicSpline::new(xs, psi.to_vec());
                self.s_e
                    .iter()
                    .map(|&s| sp.eval(s) * (-s / 2.0).exp())
                    .collect()
            }
        }
    }
}

/// Applies f(A₊) to each component (column) of fibered data `data[i][c]`.
fn apply_columns(data: &[Vec<C64>], lg: &LogGrid, symbol: &MellinSymbol) -> Result<Vec<Vec<C64>>> {
    if let Some(c) = symbol.as_constant() {
        return Ok(data
            .iter()
            .map(|row| row.iter().map(|z| z * c).collect())
            .collect());
    }
    let n_comp = data.first().map_or(0, |r| r.len());
    let fft = Fft1::new(lg.n_s);
    let mult: Vec<C64> = (0..lg.n_s)
        .map(|k| symbol.eval(lg.nu(k)) / lg.n_s as f64)
        .collect();
    let mut columns = Vec::with_capacity(n_comp);
    let mut peak: f64 = 0.0;
    let mut top: f64 = 0.0;
    for c in 0..n_comp {
        let col: Vec<C64> = data.iter().map(|row| row[c]).collect();
        let psi = lg.extend(&col);
        peak = psi.iter().fold(peak, |m, z| m.max(z.norm()));
        top = top.max((col.last().unwrap() * (lg.s_e.last().unwrap() / 2.0).exp()).norm());
        columns.push(psi);
    }
    if peak > 0.0 && top / peak > lg.underflow_tol {
        return Err(Error::WindowUnderflow(top / peak));
    }
    let mut out = vec![vec![C64::new(0.0, 0.0); n_comp]; data.len()];
    for (c, mut psi) in columns.into_iter().enumerate() {
        fft.forward(&mut psi);
        for (z, m) in psi.iter_mut().zip(&mult) {
            *z *= m;
        }
        fft.inverse(&mut psi);
        for (i, v) in lg.restrict(&psi).into_iter().enumerate() {
            out[i][c] = v;
        }
    }
    Ok(out)
}

/// (f(A₊)⊗1)φ on an L²(𝕊)-valued fibered function.
pub fn apply_symbol_aplus(
    phi: &FiberedFunction,
    symbol: &MellinSymbol,
    cfg: &LogGridConfig,
) -> Result<FiberedFunction> {
    let lg = LogGrid::for_egrid(phi.egrid(), cfg)?;
    let data = apply_columns(phi.data(), &lg, symbol)?;
    FiberedFunction::new(phi.egrid().clone(), phi.n_omega(), data)
}

/// (f(A₊)⊗1)ξ on node-valued fibers.
pub fn apply_symbol_aplus_nodal(
    xi: &NodalFibers,
    symbol: &MellinSymbol,
    cfg: &LogGridConfig,
) -> Result<NodalFibers> {
    let lg = LogGrid::for_egrid(&xi.egrid, cfg)?;
    let data = apply_columns(&xi.data, &lg, symbol)?;
    Ok(NodalFibers { data, ..xi.clone() })
}

/// Fraction of the log-grid spectral mass of ψ above half the Nyquist frequency.
pub fn band_limit_fraction(phi: &FiberedFunction, cfg: &LogGridConfig) -> Result<f64> {
    let lg = LogGrid::for_egrid(phi.egrid(), cfg)?;
    let fft = Fft1::new(lg.n_s);
    let nyq = PI / lg.ds;
    let (mut hi, mut all) = (0.0, 0.0);
    for c in 0..phi.n_omega() {
        let col: Vec<C64> = phi.data().iter().map(|row| row[c]).collect();
        let mut psi = lg.extend(&col);
        fft.forward(&mut psi);
        for (k, z) in psi.iter().enumerate() {
            all += z.norm_sqr();
            if lg.nu(k).abs() > nyq / 2.0 {
                hi += z.norm_sqr();
            }
        }
    }
    Ok(if all == 0.0 { 0.0 } else { hi / all })
}

/// (U⁺_τφ)(λ) = e^{τ/2}φ(e^τλ), by cubic-spline interpolation of ψ on the log grid.
pub fn dilate(phi: &FiberedFunction, tau: f64, cfg: &LogGridConfig) -> Result<FiberedFunction> {
    if tau == 0.0 {
        return Ok(phi.clone());
    }
    let lg = LogGrid::for_egrid(phi.egrid(), cfg)?;
    let (lo, hi) = (lg.s_e[0] + tau, lg.s_e.last().unwrap() + tau);
    if lo < lg.s_min || hi > lg.s_max() {
        return Err(Error::LogRange(format!(
            "dilation by tau = {tau} leaves the log grid"
        )));
    }
    let xs: Vec<f64> = (0..lg.n_s).map(|j| lg.s(j)).collect();
    let mut data = vec![vec![C64::new(0.0, 0.0); phi.n_omega()]; phi.egrid().len()];
    for c in 0..phi.n_omega() {
        let col: Vec<C64> = phi.data().iter().map(|row| row[c]).collect();
        let sp = CubicSpline::new(xs.clone(), lg.extend(&col));
        for (i, s) in lg.s_e.iter().enumerate() {
            data[i][c] = sp.eval(s + tau) * (-s / 2.0).exp();
        }
    }
    FiberedFunction::new(phi.egrid().clone(), phi.n_omega(), data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarConfig {
    pub n_theta: usize,
    pub n_sigma: usize,
    /// Cartesian upsampling factor before polar sampling.
    pub upsample: usize,
    /// Padding in σ = ln r beyond ln(h/4) and ln(√2 L).
    pub pad: f64,
}

impl Default for PolarConfig {
    fn default() -> Self {
        Self {
            n_theta: 128,
            n_sigma: 4096,
            upsample: 4,
            pad: 12.0,
        }
    }
}

/// Band-limited interpolation of a grid field by FFT zero padding.
struct Upsampled {
    m: usize,
    x0: f64,
    hu: f64,
    data: Vec<C64>,
}

impl Upsampled {
    fn new(f: &Field2D, factor: usize) -> Self {
        let grid = f.grid();
        let n = grid.n();
        let m = n * factor;
        let mut spec = f.values().to_vec();
        Fft2::new(n).forward(&mut spec);
        let mut big = vec![C64::new(0.0, 0.0); m * m];
        let signed = |k: usize| {
            if k < n / 2 {
                k as i64
            } else {
                k as i64 - n as i64
            }
        };
        let place = |k: i64| {
            if k >= 0 {
                k as usize
            } else {
                (m as i64 + k) as usize
            }
        };
        for a in 0..n {
            for b in 0..n {
                let (ka, kb) = (signed(a), signed(b));
                let val = spec[a * n + b];
                // split the Nyquist rows/columns symmetrically
                let ra: Vec<(i64, f64)> = if ka == -(n as i64) / 2 {
                    vec![(ka, 0.5), (-ka, 0.5)]
                } else {
                    vec![(ka, 1.0)]
                };
                let rb: Vec<(i64, f64)> = if kb == -(n as i64) / 2 {
                    vec![(kb, 0.5), (-kb, 0.5)]
                } else {
                    vec![(kb, 1.0)]
                };
                for &(pa, wa) in &ra {
                    for &(pb, wb) in &rb {
                        big[place(pa) * m + place(pb)] += val * (wa * wb);
                    }
                }
            }
        }
        Fft2::new(m).inverse(&mut big);
        let c = 1.0 / (n * n) as f64;
        for z in big.iter_mut() {
            *z *= c;
        }
        Self {
            m,
            x0: -grid.half_width(),
            hu: grid.spacing() / factor as f64,
            data: big,
        }
    }

    fn at(&self, i: i64, j: i64) -> C64 {
        if i < 0 || j < 0 || i >= self.m as i64 || j >= self.m as i64 {
            C64::new(0.0, 0.0)
        } else {
            self.data[i as usize * self.m + j as usize]
        }
    }

    /// Catmull-Rom bicubic sample at (x, y).
    fn sample(&self, x: f64, y: f64) -> C64 {
        let u = (x - self.x0) / self.hu;
        let v = (y - self.x0) / self.hu;
        if u < -1.0 || v < -1.0 || u > self.m as f64 || v > self.m as f64 {
            return C64::new(0.0, 0.0);
        }
        let (iu, iv) = (u.floor() as i64, v.floor() as i64);
        let wu = keys(u - iu as f64);
        let wv = keys(v - iv as f64);
        let mut acc = C64::new(0.0, 0.0);
        for (a, wa) in wu.iter().enumerate() {
            let mut row = C64::new(0.0, 0.0);
            for (b, wb) in wv.iter().enumerate() {
                row += self.at(iu + a as i64 - 1, iv + b as i64 - 1) * *wb;
            }
            acc += row * *wa;
        }
        acc
    }
}

fn keys(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Spectral mass fraction beyond half the grid Nyquist radius.
fn spectral_tail(f: &Field2D) -> f64 {
    let ff = fourier(f, Direction::Forward);
    let dual = *ff.grid();
    let kmax = dual.half_width();
    let (mut hi, mut all) = (0.0, 0.0);
    for (idx, z) in ff.values().iter().enumerate() {
        let k = dual.node(idx);
        all += z.norm_sqr();
        if k[0].abs().max(k[1].abs()) > kmax / 2.0 {
            hi += z.norm_sqr();
        }
    }
    if all == 0.0 {
        0.0
    } else {
        hi / all
    }
}

/// f(A) on a position field, A the generator of (U_τ f)(x) = e^τ f(e^τ x).
///
/// In polar coordinates g(σ, θ) = e^σ f(e^σ θ̂) turns U_τ into a translation in σ, so f(A)
/// is a Fourier multiplier in σ along each ray.
pub fn apply_symbol_position(
    f: &Field2D,
    symbol: &MellinSymbol,
    cfg: &PolarConfig,
) -> Result<Field2D> {
    if let Some(c) = symbol.as_constant() {
        return Ok(f.scale(c));
    }
    if cfg.n_theta < 8
        || cfg.n_theta % 2 == 1
        || !cfg.n_sigma.is_power_of_two()
        || cfg.upsample == 0
    {
        return Err(Error::InvalidParameter(
            "polar config: even n_theta >= 8, power-of-two n_sigma".into(),
        ));
    }
    let leak = f.boundary_ratio();
    if leak > 1e-6 {
        return Err(Error::BoundaryLeakage(leak));
    }
    let tail = spectral_tail(f);
    if tail > 1e-8 {
        return Err(Error::OriginResolution(format!(
            "spectral mass fraction {tail:e} beyond half the Nyquist radius; refine the grid"
        )));
    }
    let grid: Grid2D = *f.grid();
    let h = grid.spacing();
    let sigma_min = (h / 4.0).ln() - cfg.pad;
    let sigma_top = (grid.half_width() * 2f64.sqrt()).ln() + cfg.pad;
    let ds = (sigma_top - sigma_min) / cfg.n_sigma as f64;
    let nt = cfg.n_theta;
    let up = Upsampled::new(f, cfg.upsample);
    let thetas: Vec<(f64, f64)> = (0..nt)
        .map(|m| (2.0 * PI * m as f64 / nt as f64).sin_cos())
        .collect();

    // rows[j][m] = g(σ_j, θ_m)
    let ns = cfg.n_sigma;
    let mut rays = vec![vec![C64::new(0.0, 0.0); ns]; nt];
    for (m, (s, c)) in thetas.iter().enumerate() {
        for (j, z) in rays[m].iter_mut().enumerate() {
            let r = (sigma_min + j as f64 * ds).exp();
            *z = up.sample(r * c, r * s) * r;
        }
    }
    let fft = Fft1::new(ns);
    let mult: Vec<C64> = (0..ns)
        .map(|k| {
            let kk = if k < ns / 2 {
                k as f64
            } else {
                k as f64 - ns as f64
            };
            symbol.eval(2.0 * PI * kk / (ns as f64 * ds)) / ns as f64
        })
        .collect();
    for ray in rays.iter_mut() {
        fft.forward(ray);
        for (z, w) in ray.iter_mut().zip(&mult) {
            *z *= w;
        }
        fft.inverse(ray);
    }
    // angular Fourier coefficients per σ row
    let fth = Fft1::new(nt);
    let mut coef = vec![vec![C64::new(0.0, 0.0); nt]; ns];
    for (j, row) in coef.iter_mut().enumerate() {
        for m in 0..nt {
            row[m] = rays[m][j];
        }
        fth.forward(row);
        for z in row.iter_mut() {
            *z /= nt as f64;
        }
    }
    drop(rays);
    let eval = |r: f64, th: f64| -> C64 {
        let u = ((r.ln() - sigma_min) / ds).clamp(1.0, (ns - 3) as f64);
        let iu = u.floor() as usize;
        let w = keys(u - iu as f64);
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..nt {
            let c = coef[iu - 1][l] * w[0]
                + coef[iu][l] * w[1]
                + coef[iu + 1][l] * w[2]
                + coef[iu + 2][l] * w[3];
            let ell = if l < nt / 2 {
                l as f64
            } else {
                l as f64 - nt as f64
            };
            acc += if l == nt / 2 {
                c * (ell * th).cos()
            } else {
                c * C64::from_polar(1.0, ell * th)
            };
        }
        acc / r
    };
    let mut out = Field2D::zeros(grid);
    for (idx, o) in out.values_mut().iter_mut().enumerate() {
        let x = grid.node(idx);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        *o = if r < 1e-12 {
            // origin: angular mean at a small radius
            let r0 = h / 8.0;
            (0..8).map(|q| eval(r0, PI * q as f64 / 4.0)).sum::<C64>() / 8.0
        } else {
            eval(r, x[1].atan2(x[0]))
        };
    }
    Ok(out)
}

/// R(A)f.
pub fn apply_r_a_position(f: &Field2D, cfg: &PolarConfig) -> Result<Field2D> {
    apply_symbol_position(f, &MellinSymbol::r(), cfg)
}

/// (x·∇ + 2)g for a Gaussian packet g, unit-normalized. This is (up to a factor) the
/// dilation generator applied to g: mean zero and f(0) = 0 when the packet is centred
/// away from the origin, so R(A)f has no log singularity at the origin.
pub fn balanced_packet(grid: &Grid2D, spec: &WavePacketSpec) -> Result<Field2D> {
    spec.check(grid)?;
    let w2 = spec.width * spec.width;
    let f = Field2D::from_fn(*grid, |x| {
        let d = [x[0] - spec.center[0], x[1] - spec.center[1]];
        let qx = spec.momentum[0] * x[0] + spec.momentum[1] * x[1];
        spec.eval(x) * C64::new(2.0 - (x[0] * d[0] + x[1] * d[1]) / w2, qx)
    });
    let n = f.norm();
    Ok(f.scale(C64::new(1.0 / n, 0.0)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignAudit {
    /// ‖F₀R(A)f − ϑ(A₊)F₀f‖/‖f‖.
    pub error_nu: f64,
    /// ‖F₀R(A)f − ϑ(−A₊)F₀f‖/‖f‖.
    pub error_minus_nu: f64,
    /// +1 if ϑ(A₊) matches, −1 if ϑ(−A₊) does.
    pub sign: i32,
    pub tolerance: f64,
}

/// Fixes the orientation of F₀R(A)F₀* = ϑ(±A₊)⊗1 by comparing both candidates.
pub fn sign_audit(
    f: &Field2D,
    egrid: &Arc<EnergyGrid>,
    n_omega: usize,
    log_cfg: &LogGridConfig,
    polar_cfg: &PolarConfig,
    tolerance: f64,
) -> Result<SignAudit> {
    let ra = apply_r_a_position(f, polar_cfg)?;
    let lhs = f0_fibered(&ra, egrid, n_omega)?;
    let phi = f0_fibered(f, egrid, n_omega)?;
    let plus = apply_symbol_aplus(&phi, &MellinSymbol::theta(), log_cfg)?;
    let minus = apply_symbol_aplus(&phi, &MellinSymbol::theta().reflected(), log_cfg)?;
    let norm = f.norm();
    let error_nu = lhs.sub(&plus).norm() / norm;
    let error_minus_nu = lhs.sub(&minus).norm() / norm;
    let sign = if error_nu < tolerance && error_nu <= error_minus_nu {
        1
    } else if error_minus_nu < tolerance {
        -1
    } else {
        return Err(Error::InvalidParameter(format!(
            "sign audit failed: neither orientation matches (errors {error_nu:e}, {error_minus_nu:e})"
        )));
    };
    Ok(SignAudit {
        error_nu,
        error_minus_nu,
        sign,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_packet, WavePacketSpec};

    fn bump_fibers(eg: &Arc<EnergyGrid>, n_omega: usize) -> FiberedFunction {
        // ψ(s) a Gaussian in s with an angular profile
        let data = eg
            .lambdas()
            .iter()
            .map(|l| {
                let s = l.ln();
                let psi = (-(s + 3.0).powi(2) / 2.0).exp() * (-s / 2.0).exp();
                (0..n_omega)
                    .map(|m| C64::new(psi * (1.0 + 0.1 * m as f64), 0.3 * psi))
                    .collect()
            })
            .collect();
        FiberedFunction::new(eg.clone(), n_omega, data).unwrap()
    }

    fn egrid() -> Arc<EnergyGrid> {
        Arc::new(EnergyGrid::log((-16f64).exp(), 16f64.exp(), 641).unwrap())
    }

    #[test]
    fn symbol_shapes() {
        let mut prev = 2.0;
        for i in -40..=40 {
            let t = theta(i as f64 * 0.1);
            assert!(t < prev);
            prev = t;
        }
        assert_eq!(theta(0.0), 0.5);
        assert!(theta(-10.0) > 1.0 - 1e-12 && theta(10.0) < 1e-12);
        assert!((theta(0.7) + theta(-0.7) - 1.0).abs() < 1e-15);
        assert!((r_symbol(1.3) - theta(-0.65)).abs() < 1e-15);
        assert!(MellinSymbol::custom("bad", f64::INFINITY, |_| C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn constants_and_complements() {
        let eg = egrid();
        let phi = bump_fibers(&eg, 16);
        let cfg = LogGridConfig::default();
        let one =
            apply_symbol_aplus(&phi, &MellinSymbol::constant(C64::new(1.0, 0.0)), &cfg).unwrap();
        assert_eq!(one.sub(&phi).norm(), 0.0);
        let a = apply_symbol_aplus(&phi, &MellinSymbol::theta(), &cfg).unwrap();
        let b = apply_symbol_aplus(&phi, &MellinSymbol::theta().reflected(), &cfg).unwrap();
        assert!(a.add(&b).sub(&phi).norm() < 1e-8 * phi.norm());
        assert!(a.norm() <= phi.norm() * (1.0 + 1e-4));
    }

    #[test]
    fn symbol_composition() {
        let eg = egrid();
        let phi = bump_fibers(&eg, 16);
        let cfg = LogGridConfig::default();
        let f = MellinSymbol::theta();
        let g = MellinSymbol::r();
        let fg =
            apply_symbol_aplus(&apply_symbol_aplus(&phi, &g, &cfg).unwrap(), &f, &cfg).unwrap();
        let prod = apply_symbol_aplus(&phi, &f.product(&g), &cfg).unwrap();
        assert!(fg.sub(&prod).norm() < 1e-6 * phi.norm());
    }

    #[test]
    fn mellin_eigenfunction_against_direct_pairing() {
        let eg = egrid();
        let (nu0, w, s0) = (0.3, 2.0, 0.0);
        let psi = |s: f64| C64::from_polar((-(s - s0).powi(2) / (2.0 * w * w)).exp(), nu0 * s);
        let data = eg
            .lambdas()
            .iter()
            .map(|l| vec![psi(l.ln()) * (-l.ln() / 2.0).exp(); 16])
            .collect();
        let phi = FiberedFunction::new(eg.clone(), 16, data).unwrap();
        let out =
            apply_symbol_aplus(&phi, &MellinSymbol::theta(), &LogGridConfig::default()).unwrap();
        // oracle: (1/2π)∫ϑ(ν)ψ̂(ν)e^{iνs}dν with the analytic Gaussian transform
        let oracle = |s: f64| {
            let n = 4000;
            let (a, b) = (nu0 - 12.0 / w, nu0 + 12.0 / w);
            let dn = (b - a) / n as f64;
            (0..=n)
                .map(|k| {
                    let nu = a + k as f64 * dn;
                    let hat = C64::from_polar(
                        w * (2.0 * PI).sqrt() * (-(w * w) * (nu - nu0).powi(2) / 2.0).exp(),
                        -(nu - nu0) * s0,
                    );
                    let wt = if k == 0 || k == n { 0.5 } else { 1.0 };
                    hat * C64::from_polar(theta(nu), nu * s) * wt
                })
                .sum::<C64>()
                * dn
                / (2.0 * PI)
        };
        for (i, l) in eg.lambdas().iter().enumerate() {
            let s = l.ln();
            if (s - s0).abs() > 2.0 * w {
                continue;
            }
            let got = out.fiber(i)[3] * (s / 2.0).exp();
            let want = oracle(s);
            assert!(
                (got - want).norm() < 1e-3 * want.norm(),
                "s={s} {got} {want}"
            );
        }
    }

    #[test]
    fn dilation_group() {
        let eg = egrid();
        let phi = bump_fibers(&eg, 16);
        let cfg = LogGridConfig::default();
        assert_eq!(dilate(&phi, 0.0, &cfg).unwrap().sub(&phi).norm(), 0.0);
        let a = dilate(&phi, 0.7, &cfg).unwrap();
        assert!((a.norm() / phi.norm() - 1.0).abs() < 1e-6);
        let ab = dilate(&dilate(&phi, 0.7, &cfg).unwrap(), -1.9, &cfg).unwrap();
        let c = dilate(&phi, -1.2, &cfg).unwrap();
        assert!(ab.sub(&c).norm() < 1e-6 * phi.norm());
        // agrees with the multiplier e^{iτν}
        let via_symbol = apply_symbol_aplus(&phi, &MellinSymbol::group(0.7), &cfg).unwrap();
        assert!(via_symbol.sub(&a).norm() < 1e-6 * phi.norm());
        // commutes with functions of A₊
        let t = MellinSymbol::theta();
        let x = apply_symbol_aplus(&a, &t, &cfg).unwrap();
        let y = dilate(&apply_symbol_aplus(&phi, &t, &cfg).unwrap(), 0.7, &cfg).unwrap();
        assert!(
            x.sub(&y).norm() < 1e-4 * phi.norm(),
            "{}",
            x.sub(&y).norm() / phi.norm()
        );
        assert!(matches!(dilate(&phi, 80.0, &cfg), Err(Error::LogRange(_))));
    }

    #[test]
    fn underflow_is_reported() {
        let eg = Arc::new(EnergyGrid::log(1e-2, 10.0, 60).unwrap());
        let phi =
            FiberedFunction::new(eg.clone(), 16, vec![vec![C64::new(1.0, 0.0); 16]; 60]).unwrap();
        assert!(matches!(
            apply_symbol_aplus(&phi, &MellinSymbol::theta(), &LogGridConfig::default()),
            Err(Error::WindowUnderflow(_))
        ));
    }

    #[test]
    fn position_symbol_roundtrip() {
        let g = make_grid(128, 16.0).unwrap();
        let f = make_packet(&g, &WavePacketSpec::new([1.0, -0.5], [1.0, 0.5], 1.5)).unwrap();
        let cfg = PolarConfig::default();
        let r = apply_r_a_position(&f, &cfg).unwrap();
        let rc = apply_symbol_position(&f, &MellinSymbol::r().complement(), &cfg).unwrap();
        let sum = r.add(&rc).unwrap();
        assert!(
            sum.sub(&f).unwrap().norm() < 1e-3 * f.norm(),
            "{}",
            sum.sub(&f).unwrap().norm()
        );
        assert!(r.norm() <= f.norm() * (1.0 + 1e-3));
        let edge = make_packet(
            &make_grid(64, 8.0).unwrap(),
            &WavePacketSpec {
                normalize: true,
                ..WavePacketSpec::new([0.0, 0.0], [0.0, 0.0], 1.0)
            },
        )
        .unwrap()
        .mul_fn(|_| 1.0);
        let shifted = Field2D::from_fn(*edge.grid(), |x| {
            C64::new((-(x[0] - 7.0).powi(2)).exp(), 0.0)
        });
        assert!(matches!(
            apply_r_a_position(&shifted, &cfg),
            Err(Error::BoundaryLeakage(_))
        ));
    }
}
