//! Closed-form geometry of the standard collar around a short closed
//! geodesic of length `ℓ` on a hyperbolic surface, in coordinates
//! `(s, θ) ∈ (-Y(ℓ), Y(ℓ)) × S¹` with metric `ϱ(s)² (ds² + dθ²)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Upper end `2·arsinh(1)` of the admissible length interval.
pub fn max_collar_length() -> f64 {
    2.0 * 1f64.asinh()
}

fn check_length(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell < max_collar_length()) {
        return Err(Error::OutOfRange {
            name: "ell",
            value: ell,
            why: "collar length must lie in (0, 2 arsinh 1)",
        });
    }
    Ok(())
}

/// A collar of admissible core length `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Collar {
    ell: f64,
}

impl Collar {
    pub fn new(ell: f64) -> Result<Self> {
        check_length(ell)?;
        Ok(Self { ell })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn halfwidth(&self) -> f64 {
        (2.0 * PI / self.ell) * (0.5 * PI - (0.5 * self.ell).sinh().atan())
    }

    /// `ϱ(s)`; fails outside the collar.
    pub fn density(&self, s: f64) -> Result<f64> {
        let y = self.halfwidth();
        if !(s.abs() < y) {
            return Err(Error::OutOfRange {
                name: "s",
                value: s,
                why: "point lies outside the collar",
            });
        }
        Ok(self.density_unchecked(s))
    }

    fn density_unchecked(&self, s: f64) -> f64 {
        self.ell / (2.0 * PI * (self.ell * s / (2.0 * PI)).cos())
    }

    pub fn dz2_l1_norm(&self) -> f64 {
        8.0 * PI * self.halfwidth()
    }

    /// `∫∫ |dz²|_g dμ_g` over the collar by adaptive Simpson quadrature,
    /// with `|dz²|_g = 2/ϱ²` and `dμ_g = ϱ² ds dθ`.
    pub fn dz2_l1_norm_quadrature(&self, tol: f64) -> f64 {
        let y = self.halfwidth();
        let integrand = |s: f64, _theta: f64| {
            let r = self.density_unchecked(s);
            (2.0 / (r * r)) * (r * r)
        };
        let inner = |s: f64| adaptive_simpson(&|theta| integrand(s, theta), 0.0, 2.0 * PI, tol, 40);
        adaptive_simpson(&inner, -y, y, tol, 40)
    }
}

pub fn collar_density(ell: f64, s: f64) -> Result<f64> {
    Collar::new(ell)?.density(s)
}

/// `Y(ℓ) = (2π/ℓ)(π/2 - arctan(sinh(ℓ/2)))`.
pub fn collar_halfwidth(ell: f64) -> Result<f64> {
    Ok(Collar::new(ell)?.halfwidth())
}

pub fn dz2_l1_norm(ell: f64) -> Result<f64> {
    Ok(Collar::new(ell)?.dz2_l1_norm())
}

/// `dℓ/dt = -(2π²/ℓ) Re(b₀)`.
pub fn length_derivative(ell: f64, b0_real: f64) -> Result<f64> {
    if !(ell > 0.0) {
        return Err(Error::OutOfRange {
            name: "ell",
            value: ell,
            why: "geodesic length must be positive",
        });
    }
    Ok(-2.0 * PI * PI * b0_real / ell)
}

/// Grönwall lower bound `min(arsinh 1, inj₀)·exp(-C ∫‖Ψ‖_∞ dt)`.
pub fn inj_lower_bound(inj0: f64, c: f64, psi_linf_integral: f64) -> Result<f64> {
    if !(inj0 > 0.0) {
        return Err(Error::OutOfRange {
            name: "inj0",
            value: inj0,
            why: "initial injectivity radius must be positive",
        });
    }
    if !(c > 0.0) {
        return Err(Error::OutOfRange {
            name: "C",
            value: c,
            why: "constant must be positive",
        });
    }
    if !(psi_linf_integral >= 0.0) {
        return Err(Error::OutOfRange {
            name: "psi_linf_integral",
            value: psi_linf_integral,
            why: "time integral of a norm is nonnegative",
        });
    }
    Ok(inj0.min(1f64.asinh()) * (-c * psi_linf_integral).exp())
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        assert!((collar_density(1.0, 0.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        for s in [0.1, 0.7, 2.3] {
            assert_eq!(collar_density(0.8, s).unwrap(), collar_density(0.8, -s).unwrap());
        }
        let expected = 1.0 / (2.0 * PI * (1.0 / (2.0 * PI)).cos());
        assert!((collar_density(1.0, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn density_rejects_points_outside() {
        let y = collar_halfwidth(1.0).unwrap();
        assert!(collar_density(1.0, y).is_err());
        assert!(collar_density(1.0, -1.5 * y).is_err());
    }

    #[test]
    fn density_blows_up_at_the_boundary() {
        let ell = 1e-4;
        let y = collar_halfwidth(ell).unwrap();
        let centre = collar_density(ell, 0.0).unwrap();
        // as ℓ → 0 the ratio at s = λY tends to 1/sin(π(1-λ)/2)
        let near = collar_density(ell, 0.999 * y).unwrap();
        assert!(near > 600.0 * centre);
        let edge = collar_density(ell, 0.9999 * y).unwrap();
        assert!(edge > 1e3 * centre);
    }

    #[test]
    fn halfwidth_examples() {
        let ell = 1e-6;
        let ly = ell * collar_halfwidth(ell).unwrap();
        assert!((ly / (PI * PI) - 1.0).abs() < 1e-6);
        let y1 = collar_halfwidth(1.0).unwrap();
        assert!((y1 - 2.0 * PI * (0.5 * PI - 0.5f64.sinh().atan())).abs() < 1e-14);
        assert!(collar_halfwidth(0.5).unwrap() > y1);
        for ell in [0.01, 0.3, 1.0, 1.7] {
            assert!(collar_halfwidth(ell).unwrap() <= PI * PI / ell);
        }
    }

    #[test]
    fn length_range_is_enforced() {
        assert!(collar_halfwidth(0.0).is_err());
        assert!(collar_halfwidth(max_collar_length()).is_err());
        assert!(collar_halfwidth(f64::NAN).is_err());
        assert!(dz2_l1_norm(-1.0).is_err());
    }

    #[test]
    fn dz2_norm_matches_quadrature() {
        for ell in [0.1, 0.5, 1.0, 1.7] {
            let c = Collar::new(ell).unwrap();
            let q = c.dz2_l1_norm_quadrature(1e-12);
            assert!((c.dz2_l1_norm() / q - 1.0).abs() < 1e-10);
        }
        assert_eq!(dz2_l1_norm(1.0).unwrap(), 8.0 * PI * collar_halfwidth(1.0).unwrap());
        let ell = 1e-6;
        assert!((dz2_l1_norm(ell).unwrap() * ell / (8.0 * PI.powi(3)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn length_derivative_examples() {
        assert_eq!(length_derivative(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(length_derivative(0.7, 2.0).unwrap(), 2.0 * length_derivative(0.7, 1.0).unwrap());
        assert!((length_derivative(PI, 1.0).unwrap() + 2.0 * PI).abs() < 1e-14);
        assert!(length_derivative(0.0, 1.0).is_err());
    }

    #[test]
    fn inj_bound_examples() {
        assert_eq!(inj_lower_bound(0.3, 2.0, 0.0).unwrap(), 0.3);
        assert_eq!(inj_lower_bound(5.0, 2.0, 0.0).unwrap(), 1f64.asinh());
        assert!((inj_lower_bound(0.5, 1.0, 2f64.ln()).unwrap() - 0.25).abs() < 1e-15);
        let one = inj_lower_bound(0.5, 1.0, 0.4).unwrap() / 0.5;
        let two = inj_lower_bound(0.5, 1.0, 0.8).unwrap() / 0.5;
        assert!((two - one * one).abs() < 1e-15);
        assert!(inj_lower_bound(0.0, 1.0, 0.0).is_err());
        assert!(inj_lower_bound(1.0, 1.0, 10.0).unwrap() < 1f64.asinh());
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12, 40);
        assert!((v - 2.0).abs() < 1e-11);
    }
}
