//! Discrete stationary scattering theory for H = -Δ + V on ℝ².
//!
//! Conventions used throughout:
//! * Fourier transform (𝓕f)(ξ) = (2π)⁻¹∫e^{-iξ·x} f(x) dx, unitary on L²(ℝ²).
//! * Spectral transform (F₀(λ)f)(ω) = 2^{-1/2}(𝓕f)(√λ ω), unitary from L²(ℝ²) to L²(ℝ₊; L²(𝕊)).
//! * v = |V|^{1/2}, u = sign V with u = +1 on the zero set, M₀(z) = u + vR₀(z)v.
//! * S(λ) = 1 - 2πi F₀(λ) v M₀(λ+i0)⁻¹ v F₀(λ)*.
//! * A₊ = -i d/ds in s = ln λ after the half-density substitution ψ(s) = e^{s/2}φ(e^s).

pub mod bessel;
pub mod birman_schwinger;
pub mod dilation;
mod error;
mod fft;
pub mod free_ops;
pub mod grid;
pub mod potential;
pub mod propagation;
pub mod quadrature;
pub mod smatrix;
pub mod theorem_lab;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };
