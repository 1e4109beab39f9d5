use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fft::Fft2;
use crate::grid::{inner_product, Field2D, Grid2D};
use crate::{Error, Result, C64};

pub const TOL_W: f64 = 1e-3;

/// Packet extent from this many standard deviations must stay inside 0.8 L.
const STD_FACTOR: f64 = 4.0;

/// Squared wavenumbers in FFT order.
pub(crate) fn k2_table(grid: &Grid2D) -> Vec<f64> {
    let n = grid.n();
    let dk = 2.0 * PI / (n as f64 * grid.spacing());
    let k: Vec<f64> = (0..n).map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk).collect();
    let mut out = Vec::with_capacity(n * n);
    for a in &k {
        for b in &k {
            out.push(a * a + b * b);
        }
    }
    out
}

fn signed_k(grid: &Grid2D) -> Vec<f64> {
    let n = grid.n();
    let dk = 2.0 * PI / (n as f64 * grid.spacing());
    (0..n).map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk).collect()
}

/// Position and momentum moments of a field, per axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: [f64; 2],
    pub mean_xsq: [f64; 2],
    pub mean_k: [f64; 2],
    pub mean_ksq: [f64; 2],
    /// ⟨xξ + ξx⟩ per axis.
    pub sym_xk: [f64; 2],
}

pub fn moments(f: &Field2D) -> Moments {
    let grid = *f.grid();
    let n = grid.n();
    let norm = f.norm_sqr().max(1e-300) / grid.cell_area();
    let mut m = Moments {
        mean_x: [0.0; 2],
        mean_xsq: [0.0; 2],
        mean_k: [0.0; 2],
        mean_ksq: [0.0; 2],
        sym_xk: [0.0; 2],
    };
    for (idx, z) in f.values().iter().enumerate() {
        let x = grid.node(idx);
        let w = z.norm_sqr() / norm;
        for a in 0..2 {
            m.mean_x[a] += w * x[a];
            m.mean_xsq[a] += w * x[a] * x[a];
        }
    }
    let k = signed_k(&grid);
    let mut spec = f.values().to_vec();
    let mut fft = Fft2::new(n);
    fft.forward(&mut spec);
    let snorm: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1e-300);
    for i in 0..n {
        for j in 0..n {
            let w = spec[i * n + j].norm_sqr() / snorm;
            let kk = [k[i], k[j]];
            for a in 0..2 {
                m.mean_k[a] += w * kk[a];
                m.mean_ksq[a] += w * kk[a] * kk[a];
            }
        }
    }
    // ξ_a f by spectral differentiation, then ⟨xξ + ξx⟩ = 2 Re⟨f, x ξ f⟩.
    for a in 0..2 {
        let mut d = spec.clone();
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] *= if a == 0 { k[i] } else { k[j] };
            }
        }
        fft.inverse(&mut d);
        let c = 1.0 / (n * n) as f64;
        let mut s = C64::new(0.0, 0.0);
        for (idx, (z, dz)) in f.values().iter().zip(&d).enumerate() {
            s += z.conj() * dz * (grid.node(idx)[a] * c);
        }
        m.sym_xk[a] = 2.0 * s.re / norm;
    }
    m
}

/// Largest |⟨x_a⟩(s)| + 4 std_a(s) over s ∈ [0, t] for the free flow x(s) = x + 2sξ.
pub fn free_excursion(m: &Moments, t: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let steps = 64;
    for q in 0..=steps {
        let s = t * q as f64 / steps as f64;
        for a in 0..2 {
            let mean = m.mean_x[a] + 2.0 * s * m.mean_k[a];
            let sq = m.mean_xsq[a] + 2.0 * s * m.sym_xk[a] + 4.0 * s * s * m.mean_ksq[a];
            let std = (sq - mean * mean).max(0.0).sqrt();
            worst = worst.max(mean.abs() + STD_FACTOR * std);
        }
    }
    worst
}

/// Errors if free flight for time `t` carries the packet too close to the box edge.
pub fn check_box(f: &Field2D, t: f64) -> Result<()> {
    let l = f.grid().half_width();
    let ex = free_excursion(&moments(f), t);
    if ex >= 0.8 * l {
        return Err(Error::BoxExcursion(format!(
            "packet reaches {ex:.3} (mean + {STD_FACTOR} std) within time {t}, box allows {:.3}",
            0.8 * l
        )));
    }
    Ok(())
}

/// e^{−itH₀}f, exact in Fourier space.
pub fn free_evolve(f: &Field2D, t: f64) -> Result<Field2D> {
    if t == 0.0 {
        return Ok(f.clone());
    }
    check_box(f, t)?;
    let grid = *f.grid();
    let n = grid.n();
    let k2 = k2_table(&grid);
    let mut data = f.values().to_vec();
    let mut fft = Fft2::new(n);
    fft.forward(&mut data);
    let c = 1.0 / (n * n) as f64;
    for (z, k) in data.iter_mut().zip(&k2) {
        *z *= C64::from_polar(c, -k * t);
    }
    fft.inverse(&mut data);
    Field2D::from_values(grid, data)
}

/// Split-step propagator for H = −Δ + V on a fixed grid.
pub struct Propagator {
    grid: Grid2D,
    v: Vec<f64>,
    vmax: f64,
    k2: Vec<f64>,
    fft: Fft2,
}

impl Propagator {
    pub fn new(vfield: &Field2D) -> Self {
        let grid = *vfield.grid();
        let v: Vec<f64> = vfield.values().iter().map(|z| z.re).collect();
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Self {
            grid,
            k2: k2_table(&grid),
            fft: Fft2::new(grid.n()),
            v,
            vmax,
        }
    }

    pub fn max_stable_dt(&self) -> f64 {
        0.5 / (self.grid.xi_max().powi(2) + self.vmax)
    }

    /// e^{−itH}f by Strang splitting with steps no longer than `dt`.
    pub fn evolve(&mut self, f: &Field2D, t: f64, dt: f64) -> Result<Field2D> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        let product = dt * (self.grid.xi_max().powi(2) + self.vmax);
        if product >= 0.5 {
            return Err(Error::TimeStep { dt, product });
        }
        if t == 0.0 {
            return Ok(f.clone());
        }
        check_box(f, t)?;
        let steps = (t.abs() / dt).ceil() as usize;
        let h = t / steps as f64;
        let n = self.grid.n();
        let c = 1.0 / (n * n) as f64;
        let half: Vec<C64> = self
            .v
            .iter()
            .map(|v| C64::from_polar(1.0, -v * h / 2.0))
            .collect();
        let full: Vec<C64> = self
            .v
            .iter()
            .map(|v| C64::from_polar(1.0, -v * h))
            .collect();
        let kin: Vec<C64> = self.k2.iter().map(|k| C64::from_polar(c, -k * h)).collect();
        let mut data = f.values().to_vec();
        for (z, p) in data.iter_mut().zip(&half) {
            *z *= p;
        }
        for s in 0..steps {
            self.fft.forward(&mut data);
            for (z, p) in data.iter_mut().zip(&kin) {
                *z *= p;
            }
            self.fft.inverse(&mut data);
            let pot = if s + 1 == steps { &half } else { &full };
            for (z, p) in data.iter_mut().zip(pot) {
                *z *= p;
            }
        }
        Field2D::from_values(self.grid, data)
    }
}

/// e^{−itH}f.
pub fn evolve_h(f: &Field2D, vfield: &Field2D, t: f64, dt: f64) -> Result<Field2D> {
    Propagator::new(vfield).evolve(f, t, dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    /// W₋ = s-lim_{t→−∞} e^{itH}e^{−itH₀}.
    Minus,
    /// W₊ = s-lim_{t→+∞} e^{itH}e^{−itH₀}.
    Plus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveOpRecord {
    pub channel: Channel,
    pub times: Vec<f64>,
    /// ‖Ω(T_{k+1}) − Ω(T_k)‖.
    pub increments: Vec<f64>,
    pub norms: Vec<f64>,
    pub tol: f64,
    pub converged: bool,
}

/// Fraction of ‖f‖² carried by energies |ξ|² < lambda_cut.
pub fn low_energy_fraction(f: &Field2D, lambda_cut: f64) -> f64 {
    let grid = *f.grid();
    let mut spec = f.values().to_vec();
    Fft2::new(grid.n()).forward(&mut spec);
    let k2 = k2_table(&grid);
    let all: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    let low: f64 = spec
        .iter()
        .zip(&k2)
        .filter(|(_, k)| **k < lambda_cut)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    if all == 0.0 {
        0.0
    } else {
        low / all
    }
}

pub const LOW_ENERGY_CUT: f64 = 0.1;

/// Ω(T) = e^{∓iTH}e^{±iTH₀}f along a ladder of times, returning the last iterate.
/// Does not fail on a non-Cauchy ladder; see [`wave_operator_time`].
pub fn wave_operator_ladder(
    f: &Field2D,
    vfield: &Field2D,
    channel: Channel,
    ladder: &[f64],
    dt: f64,
    tol: f64,
) -> Result<(Field2D, WaveOpRecord)> {
    if ladder.is_empty()
        || ladder.iter().any(|t| !(*t > 0.0))
        || ladder.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidParameter(
            "time ladder must be positive and increasing".into(),
        ));
    }
    let tail = low_energy_fraction(f, LOW_ENERGY_CUT);
    if tail > 1e-6 {
        return Err(Error::LowEnergyTail(tail));
    }
    let tmax = *ladder.last().unwrap();
    // guard: the free backward/forward leg and the return leg both stay inside the box
    check_box(
        f,
        if channel == Channel::Minus {
            -tmax
        } else {
            tmax
        },
    )?;
    let mut prop = Propagator::new(vfield);
    let mut prev: Option<Field2D> = None;
    let mut increments = Vec::new();
    let mut norms = Vec::new();
    for &t in ladder {
        let omega = match channel {
            Channel::Minus => prop.evolve(&free_evolve(f, -t)?, t, dt)?,
            Channel::Plus => prop.evolve(&free_evolve(f, t)?, -t, dt)?,
        };
        norms.push(omega.norm());
        if let Some(p) = &prev {
            increments.push(omega.sub(p)?.norm());
        }
        prev = Some(omega);
    }
    let converged = increments
        .last()
        .map_or(true, |d| *d < tol * f.norm().max(1e-300));
    let rec = WaveOpRecord {
        channel,
        times: ladder.to_vec(),
        increments,
        norms,
        tol,
        converged,
    };
    Ok((prev.unwrap(), rec))
}

/// W₋f (or W₊f) by the time-dependent definition; errors on a non-Cauchy ladder.
pub fn wave_operator_time(
    f: &Field2D,
    vfield: &Field2D,
    channel: Channel,
    ladder: &[f64],
    dt: f64,
    tol: f64,
) -> Result<(Field2D, WaveOpRecord)> {
    let (w, rec) = wave_operator_ladder(f, vfield, channel, ladder, dt, tol)?;
    if !rec.converged {
        return Err(Error::NonCauchy {
            increments: rec.increments,
            tol,
        });
    }
    Ok((w, rec))
}

/// ⟨W₊g, W₋f⟩ = ⟨g, Sf⟩.
pub fn scattering_via_time(
    f: &Field2D,
    g: &Field2D,
    vfield: &Field2D,
    ladder: &[f64],
    dt: f64,
    tol: f64,
) -> Result<(C64, WaveOpRecord, WaveOpRecord)> {
    let (wm, rm) = wave_operator_time(f, vfield, Channel::Minus, ladder, dt, tol)?;
    let (wp, rp) = wave_operator_time(g, vfield, Channel::Plus, ladder, dt, tol)?;
    Ok((inner_product(&wp, &wm)?, rm, rp))
}
