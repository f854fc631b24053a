//! Splitting of the trace-free tensor `e^{-2u} T̊` into a conformal part
//! `ρ g₀`, a Lie derivative `L_X g₀`, and the horizontal velocity `∂_t g₀`.
//!
//! Conventions (constant `g₀`, lowered indices):
//!
//! * divergence `δ(S)_j = -g₀^{ik} ∂_i S_{kj}`,
//! * `(L_X g₀)_{ij} = g₀_{kj} ∂_i X^k + g₀_{ik} ∂_j X^k`, with `δ* X = -L_X g₀`,
//! * `δδ(S) = g₀^{ik} g₀^{jl} ∂_i ∂_j S_{kl}`.
//!
//! With these signs `ρ` solves `-Δρ = δδ(S)` and `X` solves
//! `δ(L_X g₀) = δ(S - ρ g₀)`, and `S = ρ g₀ + L_X g₀ + H` holds mode by mode
//! on the dealiased band. On the torus every nonzero Fourier mode of a
//! trace- and divergence-free tensor vanishes, so `H` is the constant part.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{conformal_weight, FlatMetric};
use crate::grid::{integrate, Axis, Grid, ScalarField, Spectrum};
use crate::target::{density_from_pullback, map_derivatives, pullback, MapField};

/// Tolerance on the zero Fourier mode of an elliptic right-hand side.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-8;

/// Symmetric 2-tensor field with components `(S_xx, S_xy, S_yy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl SymTensorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            xx: grid.zeros(),
            xy: grid.zeros(),
            yy: grid.zeros(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.xx.grid()
    }

    /// Tensor with every component multiplied by the scalar field `f`.
    pub fn scaled_by(&self, f: &ScalarField) -> Self {
        let mul = |c: &ScalarField| c.zip_map(f, |a, b| a * b);
        Self {
            xx: mul(&self.xx),
            xy: mul(&self.xy),
            yy: mul(&self.yy),
        }
    }

    /// `ρ g₀`.
    pub fn conformal(rho: &ScalarField, g0: &FlatMetric) -> Self {
        let [a, b, c] = g0.entries();
        Self {
            xx: rho.map(|v| a * v),
            xy: rho.map(|v| b * v),
            yy: rho.map(|v| c * v),
        }
    }

    /// The constant tensor `H`.
    pub fn constant(grid: &Grid, h: &HorizontalVelocity) -> Self {
        Self {
            xx: grid.constant(h.xx),
            xy: grid.constant(h.xy),
            yy: grid.constant(h.yy),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self {
            xx: self.xx.zip_map(&other.xx, f),
            xy: self.xy.zip_map(&other.xy, f),
            yy: self.yy.zip_map(&other.yy, f),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise `g₀^{ij} S_ij`.
    pub fn trace(&self, g0: &FlatMetric) -> ScalarField {
        let (ia, ib, ic) = g0.inverse();
        let v = (0..self.xx.values.len())
            .map(|i| ia * self.xx.values[i] + 2.0 * ib * self.xy.values[i] + ic * self.yy.values[i])
            .collect();
        ScalarField::new(self.grid().clone(), v)
    }

    /// Pointwise `|S|²_{g₀} = g₀^{ik} g₀^{jl} S_ij S_kl`.
    pub fn norm_sq_pointwise(&self, g0: &FlatMetric) -> ScalarField {
        let v = (0..self.xx.values.len())
            .map(|i| {
                let s = [self.xx.values[i], self.xy.values[i], self.yy.values[i]];
                contract(g0, s, s)
            })
            .collect();
        ScalarField::new(self.grid().clone(), v)
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.max_abs().max(self.xy.max_abs()).max(self.yy.max_abs())
    }

    fn spectra(&self) -> [Spectrum; 3] {
        let grid = self.grid();
        let (xx, yy) = grid.forward_pair(&self.xx.values, &self.yy.values);
        [xx, self.xy.spectrum(), yy]
    }
}

/// `g₀^{ik} g₀^{jl} A_ij B_kl` for symmetric `A`, `B` given as `(xx, xy, yy)`.
fn contract(g0: &FlatMetric, a: [f64; 3], b: [f64; 3]) -> f64 {
    let (p, q, r) = g0.inverse();
    // (G⁻¹ A G⁻¹)_{kl} B_kl
    let m = [[a[0], a[1]], [a[1], a[2]]];
    let gi = [[p, q], [q, r]];
    let mut t = [[0.0; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    t[k][l] += gi[k][i] * m[i][j] * gi[j][l];
                }
            }
        }
    }
    t[0][0] * b[0] + 2.0 * t[0][1] * b[1] + t[1][1] * b[2]
}

/// `⟨A, B⟩_{L²(g₀)} = ∫ g₀^{ik} g₀^{jl} A_ij B_kl dμ_{g₀}`.
pub fn tensor_inner(a: &SymTensorField, b: &SymTensorField, g0: &FlatMetric) -> f64 {
    let n = a.xx.values.len();
    let sum: f64 = (0..n)
        .map(|i| {
            contract(
                g0,
                [a.xx.values[i], a.xy.values[i], a.yy.values[i]],
                [b.xx.values[i], b.xy.values[i], b.yy.values[i]],
            )
        })
        .sum();
    sum / n as f64 * g0.det().sqrt()
}

pub fn tensor_norm(a: &SymTensorField, g0: &FlatMetric) -> f64 {
    tensor_inner(a, a, g0).max(0.0).sqrt()
}

/// Velocity of the horizontal curve: a constant `g₀`-trace-free symmetric
/// matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HorizontalVelocity {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl HorizontalVelocity {
    pub fn entries(&self) -> [f64; 3] {
        [self.xx, self.xy, self.yy]
    }

    pub fn trace(&self, g0: &FlatMetric) -> f64 {
        g0.trace_of(self.entries())
    }

    /// `|H|_{g₀}`.
    pub fn norm(&self, g0: &FlatMetric) -> f64 {
        let h = self.entries();
        contract(g0, h, h).max(0.0).sqrt()
    }

    /// Removes the `g₀`-trace part.
    pub fn trace_free(&self, g0: &FlatMetric) -> Self {
        let t = 0.5 * self.trace(g0);
        let [a, b, c] = g0.entries();
        Self {
            xx: self.xx - t * a,
            xy: self.xy - t * b,
            yy: self.yy - t * c,
        }
    }
}

/// Vector field `(X^x, X^y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            x: grid.zeros(),
            y: grid.zeros(),
        }
    }

    /// `max_x |X(x)|_{g₀}`.
    pub fn max_norm(&self, g0: &FlatMetric) -> f64 {
        self.x
            .values
            .iter()
            .zip(&self.y.values)
            .map(|(&a, &b)| g0.norm_sq([a, b]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// `S = 2α e^{-2u} (dφ⊗dφ - e(φ,g₀) g₀)`, i.e. `e^{-2u} T̊(φ, g)`, dealiased.
pub fn tracefree_tensor(
    phi: &MapField,
    u: &ScalarField,
    g0: &FlatMetric,
    alpha: f64,
) -> SymTensorField {
    let grid = phi.grid();
    let d = map_derivatives(grid, &phi.components, g0);
    let p = pullback(&d, grid.len());
    let e = density_from_pullback(&p, g0);
    let w = conformal_weight(u);
    let [xx, xy, yy] = weighted_tracefree(grid, &p, &e, &w.values, g0, alpha);
    SymTensorField {
        xx: ScalarField::new(grid.clone(), xx),
        xy: ScalarField::new(grid.clone(), xy),
        yy: ScalarField::new(grid.clone(), yy),
    }
}

/// Pointwise `2α w (P_ij - e g₀_ij)`, dealiased.
pub(crate) fn weighted_tracefree(
    grid: &Grid,
    p: &[Vec<f64>; 3],
    e: &[f64],
    w: &[f64],
    g0: &FlatMetric,
    alpha: f64,
) -> [Vec<f64>; 3] {
    let g = g0.entries();
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|c| {
        (0..e.len())
            .map(|i| 2.0 * alpha * w[i] * (p[c][i] - e[i] * g[c]))
            .collect()
    });
    let [xx, xy, yy] = &mut out;
    grid.dealias_pair(xx, yy);
    grid.dealias_values(xy);
    out
}

/// `L²(g₀)`-orthogonal projection onto constant `g₀`-trace-free tensors.
pub fn project_horizontal(s: &SymTensorField, g0: &FlatMetric) -> HorizontalVelocity {
    HorizontalVelocity {
        xx: s.xx.mean(),
        xy: s.xy.mean(),
        yy: s.yy.mean(),
    }
    .trace_free(g0)
}

/// Raised wave vector `q = g₀⁻¹ k` and `|k|²_{g₀}` for mode `(a, b)`.
fn mode_vectors(grid: &Grid, g0: &FlatMetric, a: usize, b: usize) -> ([f64; 2], [f64; 2], f64) {
    let (ia, ib, ic) = g0.inverse();
    let k = [grid.wave(a), grid.wave(b)];
    let q = [ia * k[0] + ib * k[1], ib * k[0] + ic * k[1]];
    (k, q, k[0] * q[0] + k[1] * q[1])
}

fn check_zero_mode(value: Complex64, scale: f64) -> Result<()> {
    if value.norm() > ZERO_MODE_TOLERANCE * scale.max(1.0) {
        return Err(Error::NonzeroMean(value.norm()));
    }
    Ok(())
}

fn max_abs_spectrum(spec: &Spectrum) -> f64 {
    // max |f| ≥ |f̂(k)|/n², a cheap scale for the zero-mode test
    let n2 = spec.grid().len() as f64;
    spec.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm())) / n2
}

/// Solves `-Δ_{g₀} ρ = f` with `∫ρ = 0` on the dealiased band (spectral input).
pub(crate) fn poisson_spectral(rhs: &Spectrum, g0: &FlatMetric) -> Result<Spectrum> {
    let grid = rhs.grid();
    let n2 = grid.len() as f64;
    check_zero_mode(rhs.coeffs[0] / n2, max_abs_spectrum(rhs))?;
    Ok(rhs.map_modes(|a, b, c| {
        if (a, b) == (0, 0) || !grid.in_band(a, b) {
            return Complex64::default();
        }
        let (_, _, ksq) = mode_vectors(grid, g0, a, b);
        c / ksq
    }))
}

/// Solves `-Δ_{g₀} ρ = f` with zero mean. Fails when `f` has nonzero mean.
pub fn solve_poisson(rhs: &ScalarField, g0: &FlatMetric) -> Result<ScalarField> {
    Ok(poisson_spectral(&rhs.spectrum(), g0)?.to_field())
}

/// Spectrum of `δδ(S)`.
fn double_divergence_spectral(s: &[Spectrum; 3], g0: &FlatMetric) -> Spectrum {
    let grid = s[0].grid();
    let n = grid.n();
    let mut out = Spectrum::zeros(grid);
    for (idx, z) in out.coeffs.iter_mut().enumerate() {
        let (a, b) = (idx / n, idx % n);
        let (_, q, _) = mode_vectors(grid, g0, a, b);
        // (i q_k)(i q_l) S_kl
        *z = -(s[0].coeffs[idx] * (q[0] * q[0])
            + s[1].coeffs[idx] * (2.0 * q[0] * q[1])
            + s[2].coeffs[idx] * (q[1] * q[1]));
    }
    out
}

/// Spectrum of the one-form `δ(S)_j = -g₀^{ik} ∂_i S_kj`.
fn divergence_spectral(s: &[Spectrum; 3], g0: &FlatMetric) -> [Spectrum; 2] {
    let grid = s[0].grid();
    let n = grid.n();
    let mut x = Spectrum::zeros(grid);
    let mut y = Spectrum::zeros(grid);
    let minus_i = Complex64::new(0.0, -1.0);
    for idx in 0..grid.len() {
        let (_, q, _) = mode_vectors(grid, g0, idx / n, idx % n);
        x.coeffs[idx] = minus_i * (s[0].coeffs[idx] * q[0] + s[1].coeffs[idx] * q[1]);
        y.coeffs[idx] = minus_i * (s[1].coeffs[idx] * q[0] + s[2].coeffs[idx] * q[1]);
    }
    [x, y]
}

/// Solves `δ(L_X g₀) = ω` for `X` with zero mean, per Fourier mode, where
/// `ω` is a one-form given spectrally. Returns the spectra of `(X^x, X^y)`.
pub(crate) fn lie_system_spectral(omega: &[Spectrum; 2], g0: &FlatMetric) -> Result<[Spectrum; 2]> {
    let grid = omega[0].grid();
    let n = grid.n();
    let n2 = grid.len() as f64;
    let scale = max_abs_spectrum(&omega[0]).max(max_abs_spectrum(&omega[1]));
    check_zero_mode(omega[0].coeffs[0] / n2, scale)?;
    check_zero_mode(omega[1].coeffs[0] / n2, scale)?;
    let (ia, ib, ic) = g0.inverse();
    let mut xs = Spectrum::zeros(grid);
    let mut ys = Spectrum::zeros(grid);
    for idx in 1..grid.len() {
        let (a, b) = (idx / n, idx % n);
        if !grid.in_band(a, b) {
            continue;
        }
        let (k, q, ksq) = mode_vectors(grid, g0, a, b);
        // M = |k|² I + k qᵀ acting on the lowered vector
        let m = [[ksq + k[0] * q[0], k[0] * q[1]], [k[1] * q[0], ksq + k[1] * q[1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() <= f64::EPSILON * ksq * ksq {
            return Err(Error::SingularMode { kx: k[0], ky: k[1] });
        }
        let (r0, r1) = (omega[0].coeffs[idx], omega[1].coeffs[idx]);
        let l0 = (r0 * m[1][1] - r1 * m[0][1]) / det;
        let l1 = (r1 * m[0][0] - r0 * m[1][0]) / det;
        xs.coeffs[idx] = l0 * ia + l1 * ib;
        ys.coeffs[idx] = l0 * ib + l1 * ic;
    }
    Ok([xs, ys])
}

/// `ρ` and `X` from the dealiased spectra of `S`, fusing the double
/// divergence, the Poisson solve and the per-mode Lie system in one pass.
pub(crate) fn gauge_spectral(
    s: &[Spectrum; 3],
    g0: &FlatMetric,
) -> Result<(Spectrum, [Spectrum; 2])> {
    let grid = s[0].grid();
    let n = grid.n();
    let (ia, ib, ic) = g0.inverse();
    let [ga, gb, gc] = g0.entries();
    let mut rho = Spectrum::zeros(grid);
    let mut xs = Spectrum::zeros(grid);
    let mut ys = Spectrum::zeros(grid);
    let minus_i = Complex64::new(0.0, -1.0);
    for a in 0..n {
        for b in 0..n {
            let idx = a * n + b;
            if idx == 0 || !grid.in_band(a, b) {
                continue;
            }
            let k = [grid.wave(a), grid.wave(b)];
            let q = [ia * k[0] + ib * k[1], ib * k[0] + ic * k[1]];
            let ksq = k[0] * q[0] + k[1] * q[1];
            let (s0, s1, s2) = (s[0].coeffs[idx], s[1].coeffs[idx], s[2].coeffs[idx]);
            let r = -(s0 * (q[0] * q[0]) + s1 * (2.0 * q[0] * q[1]) + s2 * (q[1] * q[1])) / ksq;
            let (w0, w1, w2) = (s0 - r * ga, s1 - r * gb, s2 - r * gc);
            let r0 = minus_i * (w0 * q[0] + w1 * q[1]);
            let r1 = minus_i * (w1 * q[0] + w2 * q[1]);
            let m = [[ksq + k[0] * q[0], k[0] * q[1]], [k[1] * q[0], ksq + k[1] * q[1]]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() <= f64::EPSILON * ksq * ksq {
                return Err(Error::SingularMode { kx: k[0], ky: k[1] });
            }
            let l0 = (r0 * m[1][1] - r1 * m[0][1]) / det;
            let l1 = (r1 * m[0][0] - r0 * m[1][0]) / det;
            rho.coeffs[idx] = r;
            xs.coeffs[idx] = l0 * ia + l1 * ib;
            ys.coeffs[idx] = l0 * ib + l1 * ic;
        }
    }
    Ok((rho, [xs, ys]))
}

fn band_limited(s: &SymTensorField) -> [Spectrum; 3] {
    let mut spectra = s.spectra();
    for sp in spectra.iter_mut() {
        sp.dealias();
    }
    spectra
}

/// `ρ` solving `-Δ_{g₀} ρ = δδ(S)`, `∫ρ dμ_{g₀} = 0`.
pub fn solve_rho(s: &SymTensorField, g0: &FlatMetric) -> Result<ScalarField> {
    let spectra = band_limited(s);
    Ok(poisson_spectral(&double_divergence_spectral(&spectra, g0), g0)?.to_field())
}

/// `X` solving `δ δ* X = -δ(S - ρ g₀)`, normalized to zero mean.
pub fn solve_x(s: &SymTensorField, rho: &ScalarField, g0: &FlatMetric) -> Result<VectorField> {
    let w = band_limited(&s.sub(&SymTensorField::conformal(rho, g0)));
    let [xs, ys] = lie_system_spectral(&divergence_spectral(&w, g0), g0)?;
    let (x, y) = s.grid().inverse_pair(&xs, &ys);
    Ok(VectorField {
        x: ScalarField::new(s.grid().clone(), x),
        y: ScalarField::new(s.grid().clone(), y),
    })
}

/// Solves `δ(L_X g₀) = ω` for a one-form `ω = (ω_x, ω_y)`.
pub fn solve_lie_system(
    omega_x: &ScalarField,
    omega_y: &ScalarField,
    g0: &FlatMetric,
) -> Result<VectorField> {
    let grid = omega_x.grid();
    let (a, b) = grid.forward_pair(&omega_x.values, &omega_y.values);
    let [xs, ys] = lie_system_spectral(&[a, b], g0)?;
    let (x, y) = grid.inverse_pair(&xs, &ys);
    Ok(VectorField {
        x: ScalarField::new(grid.clone(), x),
        y: ScalarField::new(grid.clone(), y),
    })
}

/// `L_X g₀`.
pub fn lie_derivative(x: &VectorField, g0: &FlatMetric) -> SymTensorField {
    let grid = x.x.grid();
    let [a, b, c] = g0.entries();
    // lowered components X_j = g₀_{jk} X^k
    let lx = x.x.zip_map(&x.y, |p, q| a * p + b * q);
    let ly = x.x.zip_map(&x.y, |p, q| b * p + c * q);
    let (sx, sy) = grid.forward_pair(&lx.values, &ly.values);
    let (dxx, dyy) = grid.inverse_pair(&sx.derivative(Axis::X), &sy.derivative(Axis::Y));
    let (dxy, dyx) = grid.inverse_pair(&sy.derivative(Axis::X), &sx.derivative(Axis::Y));
    SymTensorField {
        xx: ScalarField::new(grid.clone(), dxx.iter().map(|v| 2.0 * v).collect()),
        xy: ScalarField::new(grid.clone(), dxy.iter().zip(&dyx).map(|(p, q)| p + q).collect()),
        yy: ScalarField::new(grid.clone(), dyy.iter().map(|v| 2.0 * v).collect()),
    }
}

/// The one-form `δ(S)_j = -g₀^{ik} ∂_i S_kj` as `(x, y)` components.
pub fn divergence(s: &SymTensorField, g0: &FlatMetric) -> (ScalarField, ScalarField) {
    let [x, y] = divergence_spectral(&s.spectra(), g0);
    let (x, y) = s.grid().inverse_pair(&x, &y);
    (ScalarField::new(s.grid().clone(), x), ScalarField::new(s.grid().clone(), y))
}

/// `δδ(S) = g₀^{ik} g₀^{jl} ∂_i ∂_j S_kl`.
pub fn double_divergence(s: &SymTensorField, g0: &FlatMetric) -> ScalarField {
    double_divergence_spectral(&s.spectra(), g0).to_field()
}

/// `div X = ∂_i X^i`.
pub fn vector_divergence(x: &VectorField) -> ScalarField {
    let grid = x.x.grid();
    let (sx, sy) = grid.forward_pair(&x.x.values, &x.y.values);
    let (dx, dy) = grid.inverse_pair(&sx.derivative(Axis::X), &sy.derivative(Axis::Y));
    ScalarField::new(grid.clone(), dx.iter().zip(&dy).map(|(a, b)| a + b).collect())
}

/// The three parts of `S = e^{-2u} T̊` plus `S` itself.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub horizontal: HorizontalVelocity,
    pub rho: ScalarField,
    pub x: VectorField,
    pub source: SymTensorField,
}

impl Decomposition {
    /// `ρ g₀ + L_X g₀ + H`.
    pub fn reconstruct(&self, g0: &FlatMetric) -> SymTensorField {
        SymTensorField::conformal(&self.rho, g0)
            .add(&lie_derivative(&self.x, g0))
            .add(&SymTensorField::constant(self.rho.grid(), &self.horizontal))
    }

    /// `‖ρ g₀ + L_X g₀ + H - S‖_{L²(g₀)}`.
    pub fn residual(&self, g0: &FlatMetric) -> f64 {
        tensor_norm(&self.reconstruct(g0).sub(&self.source), g0)
    }
}

/// Splits `e^{-2u} T̊(φ, g)` into conformal, Lie-derivative and horizontal parts.
pub fn decompose(
    phi: &MapField,
    u: &ScalarField,
    g0: &FlatMetric,
    alpha: f64,
) -> Result<Decomposition> {
    let source = tracefree_tensor(phi, u, g0, alpha);
    let horizontal = project_horizontal(&source, g0);
    let spectra = band_limited(&source);
    let (rho, [xs, ys]) = gauge_spectral(&spectra, g0)?;
    let grid = phi.grid();
    let (x, y) = grid.inverse_pair(&xs, &ys);
    Ok(Decomposition {
        horizontal,
        rho: rho.to_field(),
        x: VectorField {
            x: ScalarField::new(grid.clone(), x),
            y: ScalarField::new(grid.clone(), y),
        },
        source,
    })
}

/// `∫ ρ² dμ_{g₀}` helper used by monitors.
pub fn l2_norm(f: &ScalarField, g0: &FlatMetric) -> f64 {
    integrate(&f.map(|v| v * v), g0).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::Target;
    use std::f64::consts::PI;

    fn sphere() -> Target {
        Target::sphere(2, 1.0).unwrap()
    }

    fn smooth_map(grid: &Grid, seed: f64) -> MapField {
        let comps = vec![
            grid.sample(|x, y| 0.4 * (2.0 * PI * (x + seed * y)).sin() + 0.1 * (2.0 * PI * 2.0 * y).cos()).values,
            grid.sample(|x, y| 0.3 * (2.0 * PI * (2.0 * x - y)).cos() + 0.2 * seed).values,
            grid.sample(|x, _| 1.0 + 0.1 * (2.0 * PI * x).cos()).values,
        ];
        let mut phi = MapField::new(grid.clone(), sphere(), comps);
        phi.project_onto_target().unwrap();
        phi
    }

    fn smooth_u(grid: &Grid) -> ScalarField {
        grid.sample(|x, y| 0.2 * (2.0 * PI * (x - y)).sin() + 0.1 * (2.0 * PI * 2.0 * x).cos())
    }

    #[test]
    fn constant_map_gives_zero_tensor() {
        let grid = Grid::new(16).unwrap();
        let phi = MapField::constant(&grid, sphere(), &[0.0, 0.0, 1.0]).unwrap();
        let s = tracefree_tensor(&phi, &smooth_u(&grid), &FlatMetric::IDENTITY, 2.0);
        assert!(s.max_abs() < 1e-12);
        let d = decompose(&phi, &grid.zeros(), &FlatMetric::IDENTITY, 1.0).unwrap();
        assert_eq!(d.horizontal, HorizontalVelocity::default().trace_free(&FlatMetric::IDENTITY));
        assert!(d.rho.max_abs() < 1e-12 && d.x.max_norm(&FlatMetric::IDENTITY) < 1e-12);
    }

    #[test]
    fn equator_wrap_tensor() {
        let grid = Grid::new(32).unwrap();
        let phi = MapField::equator_wrap(&grid, sphere(), 1, 0);
        let s = tracefree_tensor(&phi, &grid.zeros(), &FlatMetric::IDENTITY, 1.0);
        let c = 4.0 * PI * PI;
        assert!(s.xx.values.iter().all(|v| (v - c).abs() < 1e-9));
        assert!(s.yy.values.iter().all(|v| (v + c).abs() < 1e-9));
        assert!(s.xy.max_abs() < 1e-9);

        let d = decompose(&phi, &grid.zeros(), &FlatMetric::IDENTITY, 1.0).unwrap();
        assert!(d.rho.max_abs() < 1e-9);
        assert!(d.x.max_norm(&FlatMetric::IDENTITY) < 1e-9);
        assert!((d.horizontal.xx - c).abs() < 1e-9 && (d.horizontal.yy + c).abs() < 1e-9);
    }

    #[test]
    fn conformal_map_has_no_hopf_differential() {
        // Identity-like covering of a flat torus target: φ(x, y) = (x, y) up to
        // periodic wrapping is conformal for g₀ = I; use the circle product
        // S¹ × S¹ ⊂ ℝ⁴ with equal radii, which is conformal.
        let grid = Grid::new(32).unwrap();
        let t = Target::flat(3).unwrap();
        let r = 1.0 / (2.0 * PI);
        let comps = vec![
            grid.sample(|x, _| r * (2.0 * PI * x).cos()).values,
            grid.sample(|x, _| r * (2.0 * PI * x).sin()).values,
            grid.sample(|_, y| r * (2.0 * PI * y).cos()).values,
            grid.sample(|_, y| r * (2.0 * PI * y).sin()).values,
        ];
        let phi = MapField::new(grid.clone(), t, comps);
        let s = tracefree_tensor(&phi, &smooth_u(&grid), &FlatMetric::IDENTITY, 3.0);
        assert!(s.max_abs() < 1e-12, "{}", s.max_abs());
    }

    #[test]
    fn tracefree_tensor_is_tracefree() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::unimodular(1.4, -0.3, 0.8).unwrap();
        let s = tracefree_tensor(&smooth_map(&grid, 1.0), &smooth_u(&grid), &g0, 2.5);
        assert!(s.trace(&g0).max_abs() < 1e-8 * s.max_abs());
    }

    #[test]
    fn horizontal_projection_examples() {
        let grid = Grid::new(16).unwrap();
        let g0 = FlatMetric::unimodular(2.0, 0.5, 1.0).unwrap();
        assert_eq!(project_horizontal(&SymTensorField::zeros(&grid), &g0).entries(), [0.0; 3]);

        let h = HorizontalVelocity { xx: 1.0, xy: 0.3, yy: -0.2 }.trace_free(&g0);
        let p = project_horizontal(&SymTensorField::constant(&grid, &h), &g0);
        for (a, b) in p.entries().iter().zip(h.entries()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(p.trace(&g0).abs() < 1e-14);

        let wave = grid.sample(|x, _| (2.0 * PI * x).sin());
        let s = SymTensorField::constant(&grid, &h).scaled_by(&wave);
        assert!(project_horizontal(&s, &g0).entries().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rho_for_single_mode() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::IDENTITY;
        let f = grid.sample(|x, _| (2.0 * PI * x).sin());
        let s = SymTensorField { xx: f.clone(), xy: grid.zeros(), yy: f.map(|v| -v) };
        let rho = solve_rho(&s, &g0).unwrap();
        // δδS = ∂xx S_xx = -4π² sin(2πx) and -Δρ = 4π² ρ, so ρ = -sin(2πx).
        for (a, b) in rho.values.iter().zip(&f.values) {
            assert!((a + b).abs() < 1e-12);
        }
        let resid = crate::grid::laplacian(&rho, &g0).zip_map(&double_divergence(&s, &g0), |l, d| -l - d);
        assert!(resid.max_abs() < 1e-10);
    }

    #[test]
    fn trivial_gauge_solves() {
        let grid = Grid::new(16).unwrap();
        let g0 = FlatMetric::unimodular(1.2, 0.4, 1.1).unwrap();
        let zero = SymTensorField::zeros(&grid);
        assert!(solve_rho(&zero, &g0).unwrap().max_abs() == 0.0);
        let h = HorizontalVelocity { xx: 0.7, xy: -0.2, yy: 0.1 };
        let s = SymTensorField::constant(&grid, &h);
        let rho = solve_rho(&s, &g0).unwrap();
        assert!(rho.max_abs() < 1e-14);
        let x = solve_x(&s, &rho, &g0).unwrap();
        assert!(x.max_norm(&g0) < 1e-14);
    }

    #[test]
    fn x_solve_residual_single_mode() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::unimodular(1.5, 0.3, 0.9).unwrap();
        let f = grid.sample(|x, y| (2.0 * PI * (x + 2.0 * y)).cos());
        let s = SymTensorField { xx: f.map(|v| 0.5 * v), xy: f.map(|v| -0.2 * v), yy: f.map(|v| 0.1 * v) };
        let rho = solve_rho(&s, &g0).unwrap();
        let x = solve_x(&s, &rho, &g0).unwrap();
        let (lx, ly) = divergence(&lie_derivative(&x, &g0), &g0);
        let (rx, ry) = divergence(&s.sub(&SymTensorField::conformal(&rho, &g0)), &g0);
        let scale = rx.max_abs().max(ry.max_abs());
        assert!(lx.zip_map(&rx, |a, b| a - b).max_abs() < 1e-8 * scale);
        assert!(ly.zip_map(&ry, |a, b| a - b).max_abs() < 1e-8 * scale);
        assert!(x.x.mean().abs() < 1e-12 && x.y.mean().abs() < 1e-12);
    }

    #[test]
    fn nonzero_mean_rhs_is_rejected() {
        let grid = Grid::new(16).unwrap();
        let g0 = FlatMetric::IDENTITY;
        assert!(matches!(solve_poisson(&grid.constant(1.0), &g0), Err(Error::NonzeroMean(_))));
        let c = grid.constant(0.5);
        assert!(matches!(solve_lie_system(&c, &grid.zeros(), &g0), Err(Error::NonzeroMean(_))));
        let ok = grid.sample(|x, _| (2.0 * PI * x).cos());
        assert!(solve_poisson(&ok, &g0).is_ok());
    }

    #[test]
    fn splitting_reconstructs_and_is_orthogonal() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::unimodular(1.3, 0.25, 0.85).unwrap();
        let phi = smooth_map(&grid, 2.0);
        let d = decompose(&phi, &smooth_u(&grid), &g0, 1.5).unwrap();
        let s_norm = tensor_norm(&d.source, &g0);
        assert!(d.residual(&g0) <= 1e-6 * (1.0 + s_norm), "{}", d.residual(&g0));
        assert!(d.rho.max_abs() > 1e-3, "non-trivial gauge expected");

        let h = SymTensorField::constant(&grid, &d.horizontal);
        let lie = lie_derivative(&d.x, &g0);
        let conf = SymTensorField::conformal(&d.rho, &g0);
        let rel = |a: &SymTensorField, b: &SymTensorField| {
            tensor_inner(a, b, &g0).abs() / (tensor_norm(a, &g0) * tensor_norm(b, &g0) + 1e-300)
        };
        assert!(rel(&h, &lie) < 1e-6);
        assert!(rel(&h, &conf) < 1e-6);
        assert!(rel(&conf, &d.source) < 1e-6);
        // ρ = -div X: the conformal and Lie parts combine to a trace-free tensor
        let div = vector_divergence(&d.x);
        assert!(div.zip_map(&d.rho, |a, b| a + b).max_abs() < 1e-8 * d.rho.max_abs());
    }

    #[test]
    fn gauge_solves_are_linear() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::unimodular(0.9, -0.1, 1.2).unwrap();
        let s1 = tracefree_tensor(&smooth_map(&grid, 1.0), &smooth_u(&grid), &g0, 1.0);
        let s2 = tracefree_tensor(&smooth_map(&grid, -1.0), &grid.zeros(), &g0, 2.0);
        let sum = s1.add(&s2);
        let (r1, r2, r12) = (solve_rho(&s1, &g0).unwrap(), solve_rho(&s2, &g0).unwrap(), solve_rho(&sum, &g0).unwrap());
        let diff = r12.zip_map(&r1.zip_map(&r2, |a, b| a + b), |a, b| a - b).max_abs();
        assert!(diff < 1e-10 * r12.max_abs());
        let x1 = solve_x(&s1, &r1, &g0).unwrap();
        let x2 = solve_x(&s2, &r2, &g0).unwrap();
        let x12 = solve_x(&sum, &r12, &g0).unwrap();
        let dx = x12.x.zip_map(&x1.x.zip_map(&x2.x, |a, b| a + b), |a, b| a - b).max_abs();
        assert!(dx < 1e-10 * x12.x.max_abs());
    }

    #[test]
    fn fused_gauge_pass_matches_separate_solves() {
        let grid = Grid::new(32).unwrap();
        let g0 = FlatMetric::unimodular(1.4, 0.35, 0.8).unwrap();
        let phi = smooth_map(&grid, 3.0);
        let u = smooth_u(&grid);
        let d = decompose(&phi, &u, &g0, 2.0).unwrap();
        let rho = solve_rho(&d.source, &g0).unwrap();
        let x = solve_x(&d.source, &rho, &g0).unwrap();
        let scale = d.rho.max_abs();
        assert!(rho.zip_map(&d.rho, |a, b| a - b).max_abs() < 1e-12 * scale);
        assert!(x.x.zip_map(&d.x.x, |a, b| a - b).max_abs() < 1e-12 * d.x.x.max_abs());
        assert!(x.y.zip_map(&d.x.y, |a, b| a - b).max_abs() < 1e-12 * d.x.y.max_abs());
    }
}
