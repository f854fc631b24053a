//! Target manifolds: round spheres `S^m(r) ⊂ ℝ^{m+1}` and the flat
//! `ℝ^{m+1}` mode, with the tension field and energy of maps into them.

use crate::error::{Error, Result};
use crate::geometry::FlatMetric;
use crate::grid::{integrate, Grid, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// Round sphere of dimension `dim` and radius `radius` in `ℝ^{dim+1}`.
    Sphere { dim: usize, radius: f64 },
    /// `ℝ^{dim+1}` with zero second fundamental form.
    Flat { dim: usize },
}

impl Target {
    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTarget("sphere dimension must be at least 1".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidTarget(format!("sphere radius {radius} must be positive")));
        }
        Ok(Target::Sphere { dim, radius })
    }

    pub fn flat(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTarget("flat target dimension must be at least 1".into()));
        }
        Ok(Target::Flat { dim })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Target::Sphere { dim, .. } | Target::Flat { dim } => dim,
        }
    }

    /// Number of ambient components, `m + 1`.
    pub fn components(&self) -> usize {
        self.dim() + 1
    }

    /// Radius of the sphere; `None` for the flat target.
    pub fn radius(&self) -> Option<f64> {
        match *self {
            Target::Sphere { radius, .. } => Some(radius),
            Target::Flat { .. } => None,
        }
    }

    /// `C_K = 2·max K(σ)`: `2/r²` for the sphere, `0` for the flat target.
    pub fn curvature_constant(&self) -> f64 {
        match *self {
            Target::Sphere { radius, .. } => 2.0 / (radius * radius),
            Target::Flat { .. } => 0.0,
        }
    }

    /// Coefficient `κ` in `A(dφ, dφ) = κ |dφ|² φ`.
    pub(crate) fn second_form_coefficient(&self) -> f64 {
        match *self {
            Target::Sphere { radius, .. } => 1.0 / (radius * radius),
            Target::Flat { .. } => 0.0,
        }
    }

    /// Nearest-point projection onto the target (identity for flat targets).
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Target::Sphere { radius, .. } => {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::ZeroVector);
                }
                Ok(p.iter().map(|v| radius * v / norm).collect())
            }
            Target::Flat { .. } => Ok(p.to_vec()),
        }
    }
}

/// Radial projection `r·p/|p|` onto the target.
pub fn project(p: &[f64], target: &Target) -> Result<Vec<f64>> {
    target.project(p)
}

/// A map from the torus grid into the target, stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    grid: Grid,
    target: Target,
    pub components: Vec<Vec<f64>>,
}

impl MapField {
    pub fn new(grid: Grid, target: Target, components: Vec<Vec<f64>>) -> Self {
        assert_eq!(components.len(), target.components(), "component count mismatch");
        assert!(components.iter().all(|c| c.len() == grid.len()), "component size mismatch");
        Self {
            grid,
            target,
            components,
        }
    }

    /// Constant map to `point`.
    pub fn constant(grid: &Grid, target: Target, point: &[f64]) -> Result<Self> {
        let p = target.project(point)?;
        let components = p.iter().map(|&v| vec![v; grid.len()]).collect();
        Ok(Self::new(grid.clone(), target, components))
    }

    /// `r·(cos 2π(px+qy), sin 2π(px+qy), 0, …)`, harmonic for `g₀ = I`.
    pub fn equator_wrap(grid: &Grid, target: Target, p: i64, q: i64) -> Self {
        let r = target.radius().unwrap_or(1.0);
        let mut components = vec![vec![0.0; grid.len()]; target.components()];
        for idx in 0..grid.len() {
            let (x, y) = grid.point(idx);
            let theta = 2.0 * std::f64::consts::PI * (p as f64 * x + q as f64 * y);
            components[0][idx] = r * theta.cos();
            components[1][idx] = r * theta.sin();
        }
        Self::new(grid.clone(), target, components)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[idx]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest `| |φ| - r |` over the grid; zero for flat targets.
    pub fn max_constraint_violation(&self) -> f64 {
        match self.target.radius() {
            Some(r) => (0..self.grid.len())
                .map(|idx| {
                    let n2: f64 = self.components.iter().map(|c| c[idx] * c[idx]).sum();
                    (n2.sqrt() - r).abs()
                })
                .fold(0.0, f64::max),
            None => 0.0,
        }
    }

    /// Projects every grid point onto the target; returns the largest
    /// displacement.
    pub fn project_onto_target(&mut self) -> Result<f64> {
        let Some(r) = self.target.radius() else {
            return Ok(0.0);
        };
        let mut shift = 0.0f64;
        for idx in 0..self.grid.len() {
            let norm = self.components.iter().map(|c| c[idx] * c[idx]).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroVector);
            }
            let scale = r / norm;
            for c in self.components.iter_mut() {
                let new = c[idx] * scale;
                shift = shift.max((new - c[idx]).abs());
                c[idx] = new;
            }
        }
        Ok(shift)
    }
}

/// First and second derivatives of every component of a map.
pub(crate) struct MapDerivatives {
    pub dx: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub lap: Vec<Vec<f64>>,
}

pub(crate) fn map_derivatives(
    grid: &Grid,
    comps: &[Vec<f64>],
    g0: &FlatMetric,
) -> MapDerivatives {
    use crate::grid::Axis;
    let m = comps.len();
    let mut spectra = Vec::with_capacity(m);
    for pair in comps.chunks(2) {
        if pair.len() == 2 {
            let (a, b) = grid.forward_pair(&pair[0], &pair[1]);
            spectra.push(a);
            spectra.push(b);
        } else {
            spectra.push(grid.forward(&pair[0]));
        }
    }
    let mut out = MapDerivatives {
        dx: Vec::with_capacity(m),
        dy: Vec::with_capacity(m),
        lap: Vec::with_capacity(m),
    };
    for s in &spectra {
        let (dx, dy) = grid.inverse_pair(&s.derivative(Axis::X), &s.derivative(Axis::Y));
        out.dx.push(dx);
        out.dy.push(dy);
    }
    for pair in spectra.chunks(2) {
        if pair.len() == 2 {
            let (a, b) = grid.inverse_pair(&pair[0].laplacian(g0), &pair[1].laplacian(g0));
            out.lap.push(a);
            out.lap.push(b);
        } else {
            out.lap.push(grid.inverse(&pair[0].laplacian(g0)));
        }
    }
    out
}

/// Pullback `⟨∂_iφ, ∂_jφ⟩` as `(xx, xy, yy)` pointwise.
pub(crate) fn pullback(d: &MapDerivatives, len: usize) -> [Vec<f64>; 3] {
    let mut pxx = vec![0.0; len];
    let mut pxy = vec![0.0; len];
    let mut pyy = vec![0.0; len];
    for (dx, dy) in d.dx.iter().zip(&d.dy) {
        for i in 0..len {
            pxx[i] += dx[i] * dx[i];
            pxy[i] += dx[i] * dy[i];
            pyy[i] += dy[i] * dy[i];
        }
    }
    [pxx, pxy, pyy]
}

/// `½ g₀^{ij} P_ij` pointwise.
pub(crate) fn density_from_pullback(p: &[Vec<f64>; 3], g0: &FlatMetric) -> Vec<f64> {
    let (ia, ib, ic) = g0.inverse();
    (0..p[0].len())
        .map(|i| 0.5 * (ia * p[0][i] + 2.0 * ib * p[1][i] + ic * p[2][i]))
        .collect()
}

/// Tension `τ_{g₀}(φ) = Δ_{g₀}φ + κ|dφ|²_{g₀} φ`, dealiased per component.
pub(crate) fn tension_from(
    grid: &Grid,
    comps: &[Vec<f64>],
    d: &MapDerivatives,
    density: &[f64],
    target: &Target,
) -> Vec<Vec<f64>> {
    let kappa = target.second_form_coefficient();
    let mut out: Vec<Vec<f64>> = comps
        .iter()
        .zip(&d.lap)
        .map(|(phi, lap)| {
            lap.iter()
                .zip(phi)
                .zip(density)
                .map(|((l, p), e)| l + kappa * 2.0 * e * p)
                .collect()
        })
        .collect();
    dealias_all(grid, &mut out);
    out
}

pub(crate) fn dealias_all(grid: &Grid, fields: &mut [Vec<f64>]) {
    for pair in fields.chunks_mut(2) {
        match pair {
            [a, b] => grid.dealias_pair(a, b),
            [a] => grid.dealias_values(a),
            _ => unreachable!(),
        }
    }
}

/// Tension field of `φ` with respect to `g₀`, one array per ambient component.
pub fn tension_g0(phi: &MapField, g0: &FlatMetric) -> Vec<Vec<f64>> {
    let grid = phi.grid();
    let d = map_derivatives(grid, &phi.components, g0);
    let p = pullback(&d, grid.len());
    let mut e = density_from_pullback(&p, g0);
    grid.dealias_values(&mut e);
    tension_from(grid, &phi.components, &d, &e, phi.target())
}

/// `e(φ, g₀) = ½ g₀^{ij} ⟨∂_iφ, ∂_jφ⟩`, dealiased.
pub fn energy_density_g0(phi: &MapField, g0: &FlatMetric) -> ScalarField {
    let grid = phi.grid();
    let d = map_derivatives(grid, &phi.components, g0);
    let p = pullback(&d, grid.len());
    let mut e = density_from_pullback(&p, g0);
    grid.dealias_values(&mut e);
    ScalarField::new(grid.clone(), e)
}

/// `E(φ, g) = ∫ e(φ, g₀) dμ_{g₀}`; independent of the conformal factor.
pub fn dirichlet_energy(phi: &MapField, g0: &FlatMetric) -> f64 {
    integrate(&energy_density_g0(phi, g0), g0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sphere() -> Target {
        Target::sphere(2, 1.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let t = sphere();
        assert_eq!(project(&[0.0, 0.0, 1.0], &t).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(project(&[2.0, 0.0, 0.0], &t).unwrap(), vec![1.0, 0.0, 0.0]);
        let p = project(&[3.0, 4.0, 0.0], &t).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15 && p[2] == 0.0);
        assert!(matches!(project(&[0.0, 0.0, 0.0], &t), Err(Error::ZeroVector)));
    }

    #[test]
    fn curvature_constant() {
        assert_eq!(sphere().curvature_constant(), 2.0);
        assert_eq!(Target::sphere(3, 2.0).unwrap().curvature_constant(), 0.5);
        assert_eq!(Target::flat(2).unwrap().curvature_constant(), 0.0);
        assert!(Target::sphere(2, 0.0).is_err());
        assert!(Target::sphere(0, 1.0).is_err());
    }

    #[test]
    fn constant_map_is_harmonic_with_zero_energy() {
        let grid = Grid::new(16).unwrap();
        let phi = MapField::constant(&grid, sphere(), &[0.3, -0.2, 0.9]).unwrap();
        let g0 = FlatMetric::unimodular(1.5, 0.3, 0.8).unwrap();
        assert!(tension_g0(&phi, &g0).iter().flatten().all(|v| v.abs() < 1e-13));
        assert!(energy_density_g0(&phi, &g0).max_abs() < 1e-13);
        assert!(dirichlet_energy(&phi, &g0).abs() < 1e-13);
    }

    #[test]
    fn equator_wrap_is_harmonic() {
        let grid = Grid::new(32).unwrap();
        for (p, q) in [(1, 0), (1, 1), (2, -1)] {
            let phi = MapField::equator_wrap(&grid, sphere(), p, q);
            let tau = tension_g0(&phi, &FlatMetric::IDENTITY);
            let max = tau.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max < 1e-9, "({p},{q}): {max}");
        }
    }

    #[test]
    fn equator_wrap_energy() {
        let grid = Grid::new(32).unwrap();
        let phi = MapField::equator_wrap(&grid, sphere(), 1, 0);
        let e = energy_density_g0(&phi, &FlatMetric::IDENTITY);
        assert!(e.values.iter().all(|v| (v - 2.0 * PI * PI).abs() < 1e-10));
        assert!((dirichlet_energy(&phi, &FlatMetric::IDENTITY) - 2.0 * PI * PI).abs() < 1e-10);

        let g0 = FlatMetric::new(2.0, 0.0, 0.5).unwrap();
        let e = energy_density_g0(&phi, &g0);
        assert!(e.values.iter().all(|v| (v - PI * PI).abs() < 1e-10));
    }

    #[test]
    fn tension_is_tangent() {
        let grid = Grid::new(64).unwrap();
        let t = sphere();
        let mut comps = vec![
            grid.sample(|x, y| 0.3 * (2.0 * PI * x).sin() + 0.1 * (2.0 * PI * (x - y)).cos()).values,
            grid.sample(|x, y| 0.2 * (2.0 * PI * y).cos() - 0.1 * (4.0 * PI * x).sin()).values,
            grid.constant(1.0).values,
        ];
        let mut phi = MapField::new(grid.clone(), t, std::mem::take(&mut comps));
        phi.project_onto_target().unwrap();
        let g0 = FlatMetric::unimodular(1.2, 0.1, 0.9).unwrap();
        let tau = tension_g0(&phi, &g0);
        let max_tau = tau.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_dot = (0..grid.len())
            .map(|i| (0..3).map(|c| tau[c][i] * phi.components[c][i]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!(max_dot < 1e-6 * max_tau, "{max_dot} vs {max_tau}");
    }

    #[test]
    fn tension_linearizes_around_constant_map() {
        // φ = project(N + εv): to first order τ = εΔv (tangential part), so
        // τ/ε converges to Δv_tan at rate O(ε).
        let grid = Grid::new(32).unwrap();
        let t = sphere();
        let v = grid.sample(|x, y| (2.0 * PI * (x + 2.0 * y)).sin());
        let lap_v = crate::grid::laplacian(&v, &FlatMetric::IDENTITY);
        let err = |eps: f64| {
            let comps = vec![v.values.iter().map(|a| eps * a).collect(), vec![0.0; grid.len()], vec![1.0; grid.len()]];
            let mut phi = MapField::new(grid.clone(), t, comps);
            phi.project_onto_target().unwrap();
            let tau = tension_g0(&phi, &FlatMetric::IDENTITY);
            tau[0]
                .iter()
                .zip(&lap_v.values)
                .fold(0.0f64, |m, (a, b)| m.max((a / eps - b).abs()))
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 < 1e-3 * lap_v.max_abs() * 10.0);
        assert!(e1 / e2 > 3.0, "expected O(ε²) residual in τ: {e1} {e2}");
    }

    #[test]
    fn flat_target_tension_is_laplacian() {
        let grid = Grid::new(16).unwrap();
        let t = Target::flat(1).unwrap();
        let f = grid.sample(|x, y| (2.0 * PI * (x - y)).sin());
        let phi = MapField::new(grid.clone(), t, vec![f.values.clone(), f.values.clone()]);
        let tau = tension_g0(&phi, &FlatMetric::IDENTITY);
        let lap = crate::grid::laplacian(&f, &FlatMetric::IDENTITY);
        for (a, b) in tau[0].iter().zip(&lap.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in -5.0f64..5.0, y in -5.0f64..5.0, z in 0.1f64..5.0, r in 0.2f64..3.0) {
            let t = Target::sphere(2, r).unwrap();
            let p = t.project(&[x, y, z]).unwrap();
            let q = t.project(&p).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-14 * r.max(1.0));
            }
        }
    }
}
