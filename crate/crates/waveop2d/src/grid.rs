use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fft::Fft2;
use crate::{Error, Result, C64};

/// Square periodic grid with nodes x_j = -L + j h, h = 2L/n, per axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
    half_width: f64,
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && (self.half_width - other.half_width).abs() <= 1e-12 * self.half_width.abs()
    }
}

impl Grid2D {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::GridSize(n));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box half-width {half_width}"
            )));
        }
        Ok(Self { n, half_width })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing().powi(2)
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Position of the node with flat index `idx` (row index = first coordinate).
    pub fn node(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    pub fn nodes(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |idx| self.node(idx))
    }

    /// Momentum lattice: spacing 2π/(nh), spanning [-π/h, π/h).
    pub fn dual(&self) -> Grid2D {
        Grid2D {
            n: self.n,
            half_width: PI / self.spacing(),
        }
    }

    /// Largest representable wavenumber π/h.
    pub fn xi_max(&self) -> f64 {
        PI / self.spacing()
    }
}

pub fn make_grid(n: usize, half_width: f64) -> Result<Grid2D> {
    Grid2D::new(n, half_width)
}

/// Complex samples on a [`Grid2D`], row-major.
#[derive(Clone, Debug)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<C64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn([f64; 2]) -> C64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.cell_area() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: C64) -> Field2D {
        Field2D {
            grid: self.grid,
            values: self.values.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product with a real function of position.
    pub fn mul_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Field2D {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, z)| z * f(self.grid.node(idx)))
            .collect();
        Field2D {
            grid: self.grid,
            values,
        }
    }

    fn zip_with(&self, other: &Field2D, op: impl Fn(C64, C64) -> C64) -> Result<Field2D> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Ok(Field2D {
            grid: self.grid,
            values,
        })
    }

    /// Largest |f| on the outermost ring of nodes relative to the peak.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n();
        let peak = self.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        for k in 0..n {
            for idx in [
                self.grid.index(0, k),
                self.grid.index(n - 1, k),
                self.grid.index(k, 0),
                self.grid.index(k, n - 1),
            ] {
                edge = edge.max(self.values[idx].norm());
            }
        }
        edge / peak
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary discrete Fourier transform. Forward maps a field on `grid` to one on
/// `grid.dual()`; inverse maps a momentum field back.
pub fn fourier(f: &Field2D, direction: Direction) -> Field2D {
    let grid = *f.grid();
    let mut data = f.values().to_vec();
    let mut fft = Fft2::new(grid.n());
    fourier_in_place(&mut fft, &mut data, grid, direction);
    Field2D {
        grid: grid.dual(),
        values: data,
    }
}

pub(crate) fn fourier_in_place(
    fft: &mut Fft2,
    data: &mut [C64],
    grid: Grid2D,
    direction: Direction,
) {
    let n = grid.n();
    let h = grid.spacing();
    checkerboard(data, n);
    match direction {
        Direction::Forward => fft.forward(data),
        Direction::Inverse => fft.inverse(data),
    }
    // (2π)⁻¹h² per 2D transform; the dual spacing of the dual grid is h again.
    let c = h * h / (2.0 * PI);
    checkerboard(data, n);
    for z in data.iter_mut() {
        *z *= c;
    }
}

fn checkerboard(data: &mut [C64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            if (i + j) % 2 == 1 {
                data[i * n + j] = -data[i * n + j];
            }
        }
    }
}

pub fn inner_product(f: &Field2D, g: &Field2D) -> Result<C64> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let s: C64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * f.grid().cell_area())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub center: [f64; 2],
    pub momentum: [f64; 2],
    pub width: f64,
    pub normalize: bool,
}

impl WavePacketSpec {
    pub fn new(center: [f64; 2], momentum: [f64; 2], width: f64) -> Self {
        Self {
            center,
            momentum,
            width,
            normalize: true,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> C64 {
        let dx = [x[0] - self.center[0], x[1] - self.center[1]];
        let phase = self.momentum[0] * x[0] + self.momentum[1] * x[1];
        let r2 = dx[0] * dx[0] + dx[1] * dx[1];
        C64::from_polar((-r2 / (2.0 * self.width * self.width)).exp(), phase)
    }

    /// Checks the Gaussian tails at the box edge and at the momentum cutoff.
    pub fn check(&self, grid: &Grid2D) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "packet width {}",
                self.width
            )));
        }
        let l = grid.half_width();
        let d = self
            .center
            .iter()
            .map(|c| l - c.abs())
            .fold(f64::INFINITY, f64::min);
        let tail = if d <= 0.0 {
            1.0
        } else {
            (-d * d / (2.0 * self.width * self.width)).exp()
        };
        if tail >= 1e-8 {
            return Err(Error::PacketOutsideBox(format!(
                "boundary tail {tail:e} for center {:?}, width {}",
                self.center, self.width
            )));
        }
        let kmax = grid.xi_max();
        let dk = self
            .momentum
            .iter()
            .map(|q| kmax - q.abs())
            .fold(f64::INFINITY, f64::min);
        let ktail = if dk <= 0.0 {
            1.0
        } else {
            (-dk * dk * self.width * self.width / 2.0).exp()
        };
        if ktail >= 1e-8 {
            return Err(Error::PacketOutsideBox(format!(
                "momentum tail {ktail:e} at the grid cutoff for momentum {:?}",
                self.momentum
            )));
        }
        Ok(())
    }
}

pub fn make_packet(grid: &Grid2D, spec: &WavePacketSpec) -> Result<Field2D> {
    spec.check(grid)?;
    let f = Field2D::from_fn(*grid, |x| spec.eval(x));
    if spec.normalize {
        let nrm = f.norm();
        Ok(f.scale(C64::new(1.0 / nrm, 0.0)))
    } else {
        Ok(f)
    }
}

/// ‖⟨x⟩^t f‖ with ⟨x⟩ = (1+|x|²)^{1/2}.
pub fn weight_norm(f: &Field2D, t: f64) -> f64 {
    let grid = f.grid();
    let s: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let x = grid.node(idx);
            (1.0 + x[0] * x[0] + x[1] * x[1]).powf(t) * z.norm_sqr()
        })
        .sum();
    (s * grid.cell_area()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let g = make_grid(8, 4.0).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.len(), 64);
        let g = make_grid(256, 20.0).unwrap();
        assert_eq!(g.spacing(), 0.15625);
        assert!(matches!(make_grid(12, 4.0), Err(Error::GridSize(12))));
        assert!(make_grid(4, 4.0).is_err());
    }

    #[test]
    fn dual_of_dual() {
        let g = make_grid(64, 7.3).unwrap();
        assert_eq!(g.dual().dual(), g);
        assert!((g.dual().spacing() - 2.0 * PI / (64.0 * g.spacing())).abs() < 1e-14);
    }

    #[test]
    fn gaussian_self_transform() {
        let g = make_grid(128, 12.0).unwrap();
        let f = Field2D::from_fn(g, |x| {
            C64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0)
        });
        let ff = fourier(&f, Direction::Forward);
        let err = ff
            .values()
            .iter()
            .enumerate()
            .map(|(idx, z)| {
                let k = ff.grid().node(idx);
                (z - (-(k[0] * k[0] + k[1] * k[1]) / 2.0).exp()).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn plane_wave_is_delta() {
        let g = make_grid(32, 5.0).unwrap();
        let dual = g.dual();
        let (k1, k2) = (20, 9);
        let xi = dual.node(dual.index(k1, k2));
        let f = Field2D::from_fn(g, |x| C64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1]));
        let ff = fourier(&f, Direction::Forward);
        let peak = ff.values()[dual.index(k1, k2)].norm();
        let rest: f64 = ff
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != dual.index(k1, k2))
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        assert!(peak > 1.0 && rest < 1e-12 * peak);
    }

    #[test]
    fn packet_checks() {
        let g = make_grid(64, 10.0).unwrap();
        let f = make_packet(&g, &WavePacketSpec::new([0.0, 0.0], [0.0, 0.0], 1.0)).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!(make_packet(&g, &WavePacketSpec::new([8.5, 0.0], [0.0, 0.0], 1.0)).is_err());
        let inner = inner_product(&f, &f).unwrap();
        assert!((inner.re - 1.0).abs() < 1e-10 && inner.im.abs() < 1e-15);
    }

    #[test]
    fn boosted_packet_peak() {
        let g = make_grid(128, 16.0).unwrap();
        let q = [1.5, -0.75];
        let f = make_packet(&g, &WavePacketSpec::new([1.0, 2.0], q, 1.5)).unwrap();
        let ff = fourier(&f, Direction::Forward);
        let (imax, _) = ff
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let k = ff.grid().node(imax);
        let dk = ff.grid().spacing();
        assert!((k[0] - q[0]).abs() <= dk && (k[1] - q[1]).abs() <= dk);
    }

    #[test]
    fn weight_norm_basics() {
        let g = make_grid(64, 12.0).unwrap();
        let f0 = make_packet(&g, &WavePacketSpec::new([0.0, 0.0], [0.0, 0.0], 1.0)).unwrap();
        let f5 = make_packet(&g, &WavePacketSpec::new([5.0, 0.0], [0.0, 0.0], 1.0)).unwrap();
        assert!((weight_norm(&f0, 0.0) - f0.norm()).abs() < 1e-14);
        assert!(weight_norm(&f5, 1.0) > weight_norm(&f0, 1.0));
    }
}
