use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Natural cubic spline through (x_i, y_i) with increasing x, complex values.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<crate::C64>,
    m: Vec<crate::C64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<crate::C64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let zero = crate::C64::new(0.0, 0.0);
        let mut m = vec![zero; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let mut c = vec![0.0; n];
            let mut d = vec![zero; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let cc = h1 / 6.0;
                let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c[i - 1];
                c[i] = cc / denom;
                d[i] = (rhs - d[i - 1] * a) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - m[i + 1] * c[i];
            }
        }
        Self { x, y, m }
    }

    pub fn eval(&self, t: f64) -> crate::C64 {
        let n = self.x.len();
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - t) / h;
        let b = (t - self.x[k]) / h;
        self.y[k] * a
            + self.y[k + 1] * b
            + (self.m[k] * (a * a * a - a) + self.m[k + 1] * (b * b * b - b)) * (h * h / 6.0)
    }
}
