//! Order-zero Bessel functions of real argument.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::C64;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// (J₀(x), Y₀(x)) for x > 0.
pub fn j0_y0(x: f64) -> (f64, f64) {
    assert!(x > 0.0, "j0_y0 needs x > 0, got {x}");
    if x < 2.0 {
        series(x)
    } else if x < 20.0 {
        miller(x)
    } else {
        asymptotic(x)
    }
}

pub fn j0(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        j0_y0(x.abs()).0
    }
}

pub fn y0(x: f64) -> f64 {
    j0_y0(x).1
}

/// H₀⁽¹⁾(x) = J₀(x) + iY₀(x).
pub fn hankel1_0(x: f64) -> C64 {
    let (j, y) = j0_y0(x);
    C64::new(j, y)
}

fn series(x: f64) -> (f64, f64) {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut j = 1.0;
    let mut harmonic = 0.0;
    let mut ysum = 0.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j += term;
        ysum -= harmonic * term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    let y = 2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j + ysum);
    (j, y)
}

fn miller(x: f64) -> (f64, f64) {
    let mut m = x as usize + 60;
    if m % 2 == 1 {
        m += 1;
    }
    let (mut jp1, mut jk) = (0.0_f64, 1e-30_f64);
    let mut norm = 0.0;
    let mut neumann = 0.0;
    let mut j0 = 0.0;
    for k in (1..=m).rev() {
        let jm1 = 2.0 * k as f64 / x * jk - jp1;
        jp1 = jk;
        jk = jm1;
        let idx = k - 1;
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * jk;
            let half = (idx / 2) as f64;
            let sign = if (idx / 2) % 2 == 0 { 1.0 } else { -1.0 };
            neumann += sign * jk / half;
        }
        if idx == 0 {
            j0 = jk;
        }
        if jk.abs() > 1e250 {
            jk *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            neumann *= 1e-250;
        }
    }
    norm += j0;
    let j = j0 / norm;
    let y = 2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j - 2.0 * neumann / norm);
    (j, y)
}

fn asymptotic(x: f64) -> (f64, f64) {
    // Hankel expansion, a_k = Π_{j≤k} -(2j-1)²/(8j).
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..200 {
        let term = a / x.powi(k);
        if term.abs() > prev || term.abs() < 1e-17 {
            break;
        }
        prev = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        let j = (k + 1) as f64;
        a *= -((2.0 * j - 1.0).powi(2)) / (8.0 * j);
    }
    let chi = x - FRAC_PI_4;
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    // J₀ via its integral representation, trapezoid on a periodic integrand.
    fn j0_integral(x: f64) -> f64 {
        let n = 400;
        (0..n)
            .map(|k| (x * (2.0 * PI * k as f64 / n as f64).sin()).cos())
            .sum::<f64>()
            / n as f64
    }

    fn y0_power_series(x: f64) -> f64 {
        let q = x * x / 4.0;
        let mut j = 0.0;
        let mut s = 0.0;
        let mut fact2 = 1.0;
        let mut h = 0.0;
        for k in 0..80 {
            if k > 0 {
                fact2 *= (k * k) as f64;
                h += 1.0 / k as f64;
            }
            let t = q.powi(k as i32) / fact2 * if k % 2 == 0 { 1.0 } else { -1.0 };
            j += t;
            s -= h * t;
        }
        2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j + s)
    }

    #[test]
    fn j0_matches_integral_representation() {
        for &x in &[
            1e-8, 0.3, 1.0, 1.99, 2.01, 5.5, 11.2, 19.9, 20.1, 33.0, 57.0,
        ] {
            assert!((j0(x) - j0_integral(x)).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn y0_matches_power_series() {
        for &x in &[2.01, 3.0, 4.5, 6.0, 7.5] {
            let r = y0_power_series(x);
            assert!((y0(x) - r).abs() < 1e-11, "x={x} {} {r}", y0(x));
        }
    }

    #[test]
    fn continuity_across_branches() {
        for (a, b) in [(series(2.0), miller(2.0)), (miller(20.0), asymptotic(20.0))] {
            assert!(
                (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14,
                "{a:?} {b:?}"
            );
        }
    }

    #[test]
    fn wronskian_with_numerical_derivative() {
        // W[J₀,Y₀] = J₀Y₀' - J₀'Y₀ = 2/(πx).
        for &x in &[0.7, 3.3, 12.0, 25.0, 60.0] {
            let d = 1e-5 * x;
            let (jp, yp) = j0_y0(x + d);
            let (jm, ym) = j0_y0(x - d);
            let (j, y) = j0_y0(x);
            let w = j * (yp - ym) / (2.0 * d) - y * (jp - jm) / (2.0 * d);
            assert!((w * PI * x / 2.0 - 1.0).abs() < 1e-7, "x={x} w={w}");
        }
    }
}
