//! Flat torus metrics `g₀` on `ℝ²/ℤ²`, the Gauss curvature of `e^{2u} g₀`,
//! and the injectivity radius of `g₀`.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Spectrum};

/// Constant symmetric positive-definite matrix `[[a, b], [b, c]]`.
///
/// Along the flow the determinant is kept at one (unit volume); the type
/// itself only enforces positive definiteness so that intermediate
/// Runge–Kutta stages can be represented.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatMetric {
    a: f64,
    b: f64,
    c: f64,
}

impl FlatMetric {
    pub const IDENTITY: FlatMetric = FlatMetric {
        a: 1.0,
        b: 0.0,
        c: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) || a <= 0.0 || a * c - b * b <= 0.0 {
            return Err(Error::NotPositiveDefinite { a, b, c });
        }
        Ok(Self { a, b, c })
    }

    /// Builds `[[a, b], [b, c]]` and rescales it to unit determinant.
    pub fn unimodular(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(a, b, c)?.renormalize_det()
    }

    pub fn entries(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    /// Entries `(g^{xx}, g^{xy}, g^{yy})` of the inverse matrix.
    pub fn inverse(&self) -> (f64, f64, f64) {
        let d = self.det();
        (self.c / d, -self.b / d, self.a / d)
    }

    /// `g₀^{ij} h_{ij}` for a symmetric `h = (h_xx, h_xy, h_yy)`.
    pub fn trace_of(&self, h: [f64; 3]) -> f64 {
        let (ia, ib, ic) = self.inverse();
        ia * h[0] + 2.0 * ib * h[1] + ic * h[2]
    }

    /// `vᵀ g₀ v`.
    pub fn norm_sq(&self, v: [f64; 2]) -> f64 {
        self.a * v[0] * v[0] + 2.0 * self.b * v[0] * v[1] + self.c * v[1] * v[1]
    }

    fn lattice_norm_sq(&self, v: [i64; 2]) -> f64 {
        self.norm_sq([v[0] as f64, v[1] as f64])
    }

    fn lattice_dot(&self, v: [i64; 2], w: [i64; 2]) -> f64 {
        let (v0, v1, w0, w1) = (v[0] as f64, v[1] as f64, w[0] as f64, w[1] as f64);
        self.a * v0 * w0 + self.b * (v0 * w1 + v1 * w0) + self.c * v1 * w1
    }

    /// Largest eigenvalue of `g₀⁻¹`.
    pub fn lambda_max_inverse(&self) -> f64 {
        let (ia, ib, ic) = self.inverse();
        let half_tr = 0.5 * (ia + ic);
        let disc = (0.25 * (ia - ic) * (ia - ic) + ib * ib).sqrt();
        half_tr + disc
    }

    /// `g₀ / √det g₀`.
    pub fn renormalize_det(&self) -> Result<Self> {
        let s = self.det().sqrt();
        Self::new(self.a / s, self.b / s, self.c / s)
    }

    /// `g₀ + s·h` for a symmetric `h = (h_xx, h_xy, h_yy)`.
    pub fn shifted(&self, h: [f64; 3], s: f64) -> Result<Self> {
        Self::new(self.a + s * h[0], self.b + s * h[1], self.c + s * h[2])
    }

    /// `Aᵀ g₀ A` for an integer matrix `A` (columns are the new basis).
    pub fn change_basis(&self, m: [[i64; 2]; 2]) -> Result<Self> {
        let col0 = [m[0][0], m[1][0]];
        let col1 = [m[0][1], m[1][1]];
        Self::new(
            self.lattice_norm_sq(col0),
            self.lattice_dot(col0, col1),
            self.lattice_norm_sq(col1),
        )
    }

    /// A shortest nonzero vector of `ℤ²` under `g₀` and its squared length,
    /// by Lagrange–Gauss reduction.
    pub fn shortest_lattice_vector(&self) -> ([i64; 2], f64) {
        let mut b1 = [1i64, 0];
        let mut b2 = [0i64, 1];
        if self.lattice_norm_sq(b2) < self.lattice_norm_sq(b1) {
            std::mem::swap(&mut b1, &mut b2);
        }
        loop {
            let mu = (self.lattice_dot(b1, b2) / self.lattice_norm_sq(b1)).round() as i64;
            b2 = [b2[0] - mu * b1[0], b2[1] - mu * b1[1]];
            if self.lattice_norm_sq(b2) >= self.lattice_norm_sq(b1) {
                break;
            }
            std::mem::swap(&mut b1, &mut b2);
        }
        // ties between equally short vectors are broken by the rounded values
        [b1, b2, [b1[0] + b2[0], b1[1] + b2[1]], [b1[0] - b2[0], b1[1] - b2[1]]]
            .into_iter()
            .map(|v| (v, self.lattice_norm_sq(v)))
            .fold(([0, 0], f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    pub fn injectivity_radius(&self) -> f64 {
        0.5 * self.shortest_lattice_vector().1.sqrt()
    }
}

/// Half the length of the shortest closed geodesic of `(ℝ²/ℤ², g₀)`.
pub fn injectivity_radius(g0: &FlatMetric) -> f64 {
    g0.injectivity_radius()
}

pub fn renormalize_det(g0: &FlatMetric) -> Result<FlatMetric> {
    g0.renormalize_det()
}

/// `e^{-2u}` with the two-thirds rule applied.
pub(crate) fn conformal_weight(u: &ScalarField) -> ScalarField {
    let mut w: Vec<f64> = u.values.iter().map(|&v| (-2.0 * v).exp()).collect();
    u.grid().dealias_values(&mut w);
    ScalarField::new(u.grid().clone(), w)
}

/// Gauss curvature of `g = e^{2u} g₀` on the torus: `K = -e^{-2u} Δ_{g₀} u`.
pub fn gauss_curvature(u: &ScalarField, g0: &FlatMetric) -> ScalarField {
    let grid: &Grid = u.grid();
    let lap: Spectrum = u.spectrum().laplacian(g0);
    let lap = grid.inverse(&lap);
    let w = conformal_weight(u);
    let mut k: Vec<f64> = w.values.iter().zip(&lap).map(|(w, l)| -w * l).collect();
    grid.dealias_values(&mut k);
    ScalarField::new(grid.clone(), k)
}
