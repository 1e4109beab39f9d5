use serde::{Deserialize, Serialize};

use crate::grid::{Field2D, Grid2D};
use crate::{Error, Result, C64};

/// Profile of a catalog potential; V(x) = coupling · profile(x).
///
/// Every profile is written as a well (negative near its centre) so that a
/// positive coupling is attractive and a negative coupling repulsive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Zero,
    /// -exp(-|x|²/a²)
    Gaussian {
        width: f64,
    },
    /// -exp(-(x₁²/a₁² + x₂²/a₂²))
    AnisotropicGaussian {
        width_x: f64,
        width_y: f64,
    },
    /// -exp(1 - 1/(1 - |x|²/R²)) inside the disc of radius R, zero outside.
    Bump {
        radius: f64,
    },
    /// -a₁exp(-|x-c₁|²/w₁²) - a₂exp(-|x-c₂|²/w₂²)
    TwoBump {
        centers: [[f64; 2]; 2],
        widths: [f64; 2],
        amplitudes: [f64; 2],
    },
    /// Concentric deep narrow core plus wide shallow halo.
    CoreHalo {
        core_depth: f64,
        core_width: f64,
        halo_depth: f64,
        halo_width: f64,
    },
    /// -(1+|x|)^{-p}
    PowerLaw {
        exponent: f64,
    },
}

impl Shape {
    pub fn tag(&self) -> &'static str {
        match self {
            Shape::Zero => "zero",
            Shape::Gaussian { .. } => "gaussian",
            Shape::AnisotropicGaussian { .. } => "anisotropic_gaussian",
            Shape::Bump { .. } => "bump",
            Shape::TwoBump { .. } => "two_bump",
            Shape::CoreHalo { .. } => "core_halo",
            Shape::PowerLaw { .. } => "power_law",
        }
    }

    pub fn profile(&self, x: [f64; 2]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match *self {
            Shape::Zero => 0.0,
            Shape::Gaussian { width } => -(-r2 / (width * width)).exp(),
            Shape::AnisotropicGaussian { width_x, width_y } => {
                -(-(x[0] * x[0]) / (width_x * width_x) - x[1] * x[1] / (width_y * width_y)).exp()
            }
            Shape::Bump { radius } => {
                let s = r2 / (radius * radius);
                if s >= 1.0 {
                    0.0
                } else {
                    -(1.0 - 1.0 / (1.0 - s)).exp()
                }
            }
            Shape::TwoBump {
                centers,
                widths,
                amplitudes,
            } => (0..2)
                .map(|k| {
                    let dx = x[0] - centers[k][0];
                    let dy = x[1] - centers[k][1];
                    -amplitudes[k] * (-(dx * dx + dy * dy) / (widths[k] * widths[k])).exp()
                })
                .sum(),
            Shape::CoreHalo {
                core_depth,
                core_width,
                halo_depth,
                halo_width,
            } => {
                -core_depth * (-r2 / (core_width * core_width)).exp()
                    - halo_depth * (-r2 / (halo_width * halo_width)).exp()
            }
            Shape::PowerLaw { exponent } => -(1.0 + r2.sqrt()).powf(-exponent),
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(
            self,
            Shape::AnisotropicGaussian { .. } | Shape::TwoBump { .. }
        )
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Shape::Zero => Ok(()),
            Shape::Gaussian { width } => positive("width", width),
            Shape::AnisotropicGaussian { width_x, width_y } => {
                positive("width_x", width_x)?;
                positive("width_y", width_y)
            }
            Shape::Bump { radius } => positive("radius", radius),
            Shape::TwoBump { widths, .. } => {
                positive("widths[0]", widths[0])?;
                positive("widths[1]", widths[1])
            }
            Shape::CoreHalo {
                core_width,
                halo_width,
                ..
            } => {
                positive("core_width", core_width)?;
                positive("halo_width", halo_width)
            }
            Shape::PowerLaw { exponent } => positive("exponent", exponent),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub shape: Shape,
    /// Coupling g.
    pub coupling: f64,
    /// Declared decay exponent σ in |V| ≤ C(1+|x|)^{-σ}.
    pub sigma: f64,
}

impl Potential {
    pub fn new(shape: Shape, coupling: f64, sigma: f64) -> Result<Self> {
        shape.validate()?;
        if !coupling.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidParameter(
                "coupling and sigma must be finite".into(),
            ));
        }
        Ok(Self {
            shape,
            coupling,
            sigma,
        })
    }

    pub fn zero() -> Self {
        Self {
            shape: Shape::Zero,
            coupling: 0.0,
            sigma: f64::INFINITY,
        }
    }

    /// V(x) = -g e^{-|x|²}.
    pub fn gaussian(g: f64) -> Self {
        Self {
            shape: Shape::Gaussian { width: 1.0 },
            coupling: g,
            sigma: 20.0,
        }
    }

    /// Radially symmetric well with exactly two (s-wave) bound states.
    pub fn two_state_well() -> Self {
        Self {
            shape: Shape::CoreHalo {
                core_depth: 30.0,
                core_width: 0.3,
                halo_depth: 1.0,
                halo_width: 2.5,
            },
            coupling: 1.0,
            sigma: 20.0,
        }
    }

    /// The catalog used by the high-energy and positivity sweeps.
    pub fn catalog() -> Vec<(String, Potential)> {
        vec![
            ("gaussian".into(), Potential::gaussian(1.0)),
            (
                "anisotropic_gaussian".into(),
                Potential {
                    shape: Shape::AnisotropicGaussian {
                        width_x: 1.0,
                        width_y: 0.5,
                    },
                    coupling: 1.0,
                    sigma: 20.0,
                },
            ),
            (
                "bump".into(),
                Potential {
                    shape: Shape::Bump { radius: 2.0 },
                    coupling: 1.0,
                    sigma: 20.0,
                },
            ),
            (
                "two_bump".into(),
                Potential {
                    shape: Shape::TwoBump {
                        centers: [[1.0, 0.0], [-0.8, 0.6]],
                        widths: [0.8, 0.6],
                        amplitudes: [1.0, -0.6],
                    },
                    coupling: 1.0,
                    sigma: 20.0,
                },
            ),
            ("core_halo".into(), Potential::two_state_well()),
        ]
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        if self.coupling == 0.0 {
            return 0.0;
        }
        self.coupling * self.shape.profile(x)
    }

    pub fn is_radial(&self) -> bool {
        self.shape.is_radial()
    }

    /// V along the positive x₁ axis; meaningful for radial shapes only.
    pub fn radial(&self, r: f64) -> f64 {
        self.eval([r, 0.0])
    }

    pub fn tag(&self) -> &'static str {
        self.shape.tag()
    }
}

pub fn sample_potential(p: &Potential, grid: &Grid2D) -> Result<Field2D> {
    let f = Field2D::from_fn(*grid, |x| C64::new(p.eval(x), 0.0));
    if let Some(index) = f.values().iter().position(|z| !z.re.is_finite()) {
        return Err(Error::NonFinitePotential { index });
    }
    Ok(f)
}

/// V = v·u·v with v = |V|^{1/2} and u = ±1 (u = +1 where V = 0).
#[derive(Clone, Debug)]
pub struct VUFactorization {
    pub grid: Grid2D,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn factorize(vfield: &Field2D) -> VUFactorization {
    let (v, u) = vfield
        .values()
        .iter()
        .map(|z| (z.re.abs().sqrt(), if z.re < 0.0 { -1.0 } else { 1.0 }))
        .unzip();
    VUFactorization {
        grid: *vfield.grid(),
        v,
        u,
    }
}

/// Grid nodes carrying the potential; the finite-dimensional home of vR₀v.
#[derive(Clone, Debug)]
pub struct SupportQuadrature {
    pub grid: Grid2D,
    /// Flat grid indices, row-major order.
    pub indices: Vec<usize>,
    pub nodes: Vec<[f64; 2]>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Cell area h².
    pub weight: f64,
}

impl SupportQuadrature {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Quadrature on an explicit node list (used for constructed test cases).
    pub fn from_indices(
        grid: Grid2D,
        indices: Vec<usize>,
        v: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self> {
        if v.len() != indices.len()
            || u.len() != indices.len()
            || indices.iter().any(|&i| i >= grid.len())
        {
            return Err(Error::InvalidParameter(
                "inconsistent quadrature arrays".into(),
            ));
        }
        let nodes = indices.iter().map(|&i| grid.node(i)).collect();
        Ok(Self {
            grid,
            indices,
            nodes,
            v,
            u,
            weight: grid.cell_area(),
        })
    }

    /// Integer lattice coordinates of node p.
    pub fn lattice(&self, p: usize) -> (i64, i64) {
        let n = self.grid.n();
        ((self.indices[p] / n) as i64, (self.indices[p] % n) as i64)
    }

    /// V at the nodes, v·u·v.
    pub fn potential(&self) -> Vec<f64> {
        self.v.iter().zip(&self.u).map(|(v, u)| v * u * v).collect()
    }

    /// Σ_p V_p h², the discrete ∫V.
    pub fn integral(&self) -> f64 {
        self.potential().iter().sum::<f64>() * self.weight
    }

    /// Embeds node values into a full grid field (zero elsewhere).
    pub fn embed(&self, values: &[C64]) -> Field2D {
        let mut f = Field2D::zeros(self.grid);
        for (p, &idx) in self.indices.iter().enumerate() {
            f.values_mut()[idx] = values[p];
        }
        f
    }

    pub fn restrict(&self, f: &Field2D) -> Vec<C64> {
        self.indices.iter().map(|&idx| f.values()[idx]).collect()
    }
}

pub fn build_support(fact: &VUFactorization, v_cut: f64, cap: usize) -> Result<SupportQuadrature> {
    if !(v_cut > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "v_cut must be positive, got {v_cut}"
        )));
    }
    let v_max = fact.v.iter().cloned().fold(0.0, f64::max);
    let indices: Vec<usize> = (0..fact.v.len()).filter(|&i| fact.v[i] > v_cut).collect();
    if indices.is_empty() && v_max > 0.0 {
        return Err(Error::EmptySupport { v_cut, v_max });
    }
    if indices.len() > cap {
        return Err(Error::SupportCap {
            size: indices.len(),
            cap,
        });
    }
    let v = indices.iter().map(|&i| fact.v[i]).collect();
    let u = indices.iter().map(|&i| fact.u[i]).collect();
    SupportQuadrature::from_indices(fact.grid, indices, v, u)
}

/// Convenience: sample, factorize and cut in one go.
pub fn support_for(
    p: &Potential,
    grid: &Grid2D,
    v_cut: f64,
    cap: usize,
) -> Result<SupportQuadrature> {
    let f = sample_potential(p, grid)?;
    build_support(&factorize(&f), v_cut, cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub sigma_declared: f64,
    /// Fitted exponent; infinite when the potential vanishes on the outer shells.
    pub sigma_fit: f64,
    pub verdict: Verdict,
    pub message: String,
}

/// Fits max|V| on radial shells in the outer half of the box to C(1+r)^{-σ}.
pub fn decay_check(p: &Potential, grid: &Grid2D) -> DecayReport {
    let l = grid.half_width();
    let shells = 24;
    let (r_lo, r_hi) = (0.5 * l, l);
    let dr = (r_hi - r_lo) / shells as f64;
    let mut best = vec![(0.0_f64, 0.0_f64); shells];
    for x in grid.nodes() {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r < r_lo || r >= r_hi {
            continue;
        }
        let k = (((r - r_lo) / dr) as usize).min(shells - 1);
        let a = p.eval(x).abs();
        if a > best[k].1 {
            best[k] = (r, a);
        }
    }
    let pts: Vec<(f64, f64)> = best
        .iter()
        .filter(|b| b.1 > 0.0)
        .map(|&(r, a)| ((1.0 + r).ln(), a.ln()))
        .collect();
    let sigma_fit = if pts.len() < shells || pts.iter().any(|p| !p.1.is_finite()) {
        f64::INFINITY
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    };
    let declared = p.sigma;
    let (verdict, message) = if sigma_fit < 0.98 * declared {
        (
            Verdict::Fail,
            format!("fitted decay {sigma_fit:.3} is slower than declared {declared}"),
        )
    } else if declared <= 11.0 {
        (
            Verdict::Warn,
            format!("declared decay {declared} is below the required sigma > 11"),
        )
    } else {
        (
            Verdict::Pass,
            format!("fitted decay {sigma_fit:.3} >= declared {declared}"),
        )
    };
    DecayReport {
        sigma_declared: declared,
        sigma_fit,
        verdict,
        message,
    }
}
