//! Diagnostics along a run: energies, curvature, volume, gauge sizes and
//! the a-priori bound on the energy density for large coupling.

use std::fmt::Write as _;

use crate::error::Result;
use crate::flow::FlowState;
use crate::geometry::{gauss_curvature, FlatMetric};
use crate::grid::{integrate, ScalarField};
use crate::splitting::{decompose, l2_norm};
use crate::target::{map_derivatives, pullback, tension_g0, MapField};

/// Column order of the CSV time series.
pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "E",
    "dE_dt_rate",
    "E_L",
    "max_e_density",
    "max_abs_K",
    "int_K_sq",
    "vol",
    "inj_g0",
    "mean_u",
    "rho_l2",
    "x_linf",
    "bochner_bound",
];

/// One sample of the monitored quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    /// Dirichlet energy `E(φ, g)`.
    pub energy: f64,
    /// `-‖τ_g(φ)‖² - (1/4α)‖T̊‖²` in `L²(g)`.
    pub energy_rate: f64,
    pub liouville: f64,
    /// `max e(φ, g) = max e^{-2u} e(φ, g₀)`.
    pub max_e_density: f64,
    pub max_abs_k: f64,
    /// `∫ K_g² dμ_g`.
    pub int_k_sq: f64,
    pub volume: f64,
    pub inj_g0: f64,
    pub mean_u: f64,
    pub rho_l2: f64,
    pub x_linf: f64,
    pub bochner_bound: Option<f64>,
    /// Not part of the CSV: `det g₀` and `∫ K_g dμ_g`.
    pub det_g0: f64,
    pub gauss_bonnet: f64,
}

impl MonitorRow {
    pub fn compute(state: &FlowState, bochner: Option<f64>) -> Result<Self> {
        let g0 = &state.g0;
        let u = &state.u;
        let alpha = state.alpha_now();
        let d = decompose(&state.phi, u, g0, alpha)?;
        let (max_abs_k, int_k_sq) = curvature_stats(u, g0);
        let k = gauss_curvature(u, g0);
        let gauss_bonnet = integrate(&k.zip_map(u, |k, u| k * (2.0 * u).exp()), g0);
        Ok(Self {
            t: state.t,
            energy: crate::target::dirichlet_energy(&state.phi, g0),
            energy_rate: energy_decay_rate(state),
            liouville: liouville_energy(u, g0),
            max_e_density: max_energy_density(&state.phi, u, g0),
            max_abs_k,
            int_k_sq,
            volume: state.volume(),
            inj_g0: g0.injectivity_radius(),
            mean_u: jensen_check(u, g0),
            rho_l2: l2_norm(&d.rho, g0),
            x_linf: d.x.max_norm(g0),
            bochner_bound: bochner,
            det_g0: g0.det(),
            gauss_bonnet,
        })
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Values in [`CSV_COLUMNS`] order; an inapplicable bound is an empty cell.
    pub fn csv_line(&self) -> String {
        let mut line = String::new();
        for v in [
            self.t,
            self.energy,
            self.energy_rate,
            self.liouville,
            self.max_e_density,
            self.max_abs_k,
            self.int_k_sq,
            self.volume,
            self.inj_g0,
            self.mean_u,
            self.rho_l2,
            self.x_linf,
        ] {
            write!(line, "{v:e},").expect("writing to a String");
        }
        if let Some(b) = self.bochner_bound {
            write!(line, "{b:e}").expect("writing to a String");
        }
        line
    }
}

/// `E_L = ½ ∫ |du|²_{g₀} dμ_{g₀}` (the `K̄` term vanishes on the torus).
pub fn liouville_energy(u: &ScalarField, g0: &FlatMetric) -> f64 {
    let grid = u.grid();
    let spec = u.spectrum();
    let n = grid.n();
    let (ia, ib, ic) = g0.inverse();
    let norm = (grid.len() as f64).powi(2);
    // Parseval with the odd-order wave numbers used by first derivatives
    let sum: f64 = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let (kx, ky) = (grid.wave_odd(s / n), grid.wave_odd(s % n));
            (ia * kx * kx + 2.0 * ib * kx * ky + ic * ky * ky) * c.norm_sqr()
        })
        .sum();
    0.5 * sum / norm * g0.det().sqrt()
}

/// `dE/dt = -∫ e^{-2u}|τ_{g₀}(φ)|² dμ_{g₀} - (1/4α) ∫ e^{-2u}|T̊|²_{g₀} dμ_{g₀}`.
pub fn energy_decay_rate(state: &FlowState) -> f64 {
    let grid = state.grid();
    let g0 = &state.g0;
    let alpha = state.alpha_now();
    let phi = &state.phi;
    let tau = tension_g0(phi, g0);
    let d = map_derivatives(grid, &phi.components, g0);
    let p = pullback(&d, grid.len());
    let (ia, ib, ic) = g0.inverse();
    let [a, b, c] = g0.entries();
    let mut tension = 0.0;
    let mut tracefree = 0.0;
    for i in 0..grid.len() {
        let w = (-2.0 * state.u.values[i]).exp();
        tension += w * tau.iter().map(|t| t[i] * t[i]).sum::<f64>();
        let e = 0.5 * (ia * p[0][i] + 2.0 * ib * p[1][i] + ic * p[2][i]);
        let t = [
            2.0 * alpha * (p[0][i] - e * a),
            2.0 * alpha * (p[1][i] - e * b),
            2.0 * alpha * (p[2][i] - e * c),
        ];
        // |T|² = tr(G⁻¹ T G⁻¹ T)
        let m00 = ia * t[0] + ib * t[1];
        let m01 = ia * t[1] + ib * t[2];
        let m10 = ib * t[0] + ic * t[1];
        let m11 = ib * t[1] + ic * t[2];
        tracefree += w * (m00 * m00 + 2.0 * m01 * m10 + m11 * m11);
    }
    let scale = g0.det().sqrt() / grid.len() as f64;
    -(tension + tracefree / (4.0 * alpha)) * scale
}

/// `max_x e^{-2u} e(φ, g₀)`.
pub fn max_energy_density(phi: &MapField, u: &ScalarField, g0: &FlatMetric) -> f64 {
    let e = crate::target::energy_density_g0(phi, g0);
    e.values
        .iter()
        .zip(&u.values)
        .map(|(e, u)| e * (-2.0 * u).exp())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bound `max{max|dφ₀|²_{g(0)}, 2(α_hi Ē(0) + 1)/(α_lo - C_K)}` on the energy
/// density, available only when `α_lo > C_K`.
pub fn bochner_bound(initial: &FlowState, alpha_lo: f64, alpha_hi: f64) -> Option<f64> {
    let ck = initial.target().curvature_constant();
    if !(alpha_lo > ck) {
        return None;
    }
    let grad_sq = 2.0 * max_energy_density(&initial.phi, &initial.u, &initial.g0);
    let mean_energy = crate::target::dirichlet_energy(&initial.phi, &initial.g0) / initial.volume();
    Some(grad_sq.max(2.0 * (alpha_hi * mean_energy + 1.0) / (alpha_lo - ck)))
}

/// `mean_{g₀}(u)`, which Jensen's inequality keeps nonpositive at unit volume.
pub fn jensen_check(u: &ScalarField, g0: &FlatMetric) -> f64 {
    integrate(u, g0) / g0.det().sqrt()
}

/// `(max |K_g|, ∫ K_g² dμ_g)`.
pub fn curvature_stats(u: &ScalarField, g0: &FlatMetric) -> (f64, f64) {
    let k = gauss_curvature(u, g0);
    let sq = k.zip_map(u, |k, u| k * k * (2.0 * u).exp());
    (k.max_abs(), integrate(&sq, g0))
}

/// Outcome of one invariant check on a state.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Conservation checks on a single state: finiteness, `det g₀ = 1`, unit
/// volume, the target constraint, `mean_{g₀}(u) ≤ 0`, Gauss–Bonnet and the
/// sign of the energy rate.
pub fn check_invariants(state: &FlowState) -> Vec<InvariantCheck> {
    let check = |name, value: f64, tolerance: f64| InvariantCheck {
        name,
        value,
        tolerance,
        pass: value.is_finite() && value <= tolerance,
    };
    if !state.is_finite() {
        return vec![check("finite", f64::NAN, 0.0)];
    }
    let u = &state.u;
    let g0 = &state.g0;
    let k = gauss_curvature(u, g0);
    let gauss_bonnet = integrate(&k.zip_map(u, |k, u| k * (2.0 * u).exp()), g0);
    vec![
        check("finite", 0.0, 0.0),
        check("det_g0", (g0.det() - 1.0).abs(), 1e-8),
        check("volume", (state.volume() - 1.0).abs(), 1e-6),
        check("target_constraint", state.phi.max_constraint_violation(), 1e-8),
        check("mean_u", jensen_check(u, g0), 1e-8),
        check("gauss_bonnet", gauss_bonnet.abs(), 1e-8),
        check("energy_rate", energy_decay_rate(state), 0.0),
    ]
}

/// Writes a header and one line per row.
pub fn write_csv(rows: &[MonitorRow], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "{}", MonitorRow::csv_header())?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::AlphaSchedule;
    use crate::grid::Grid;
    use crate::target::Target;
    use std::f64::consts::PI;

    fn state(phi: MapField, u: ScalarField, alpha: f64) -> FlowState {
        FlowState::new(FlatMetric::IDENTITY, u, phi, AlphaSchedule::constant(alpha).unwrap()).unwrap()
    }

    #[test]
    fn liouville_examples() {
        let grid = Grid::new(32).unwrap();
        assert!(liouville_energy(&grid.constant(2.0), &FlatMetric::IDENTITY).abs() < 1e-14);
        let u = grid.sample(|x, _| (2.0 * PI * x).sin());
        assert!((liouville_energy(&u, &FlatMetric::IDENTITY) - PI * PI).abs() < 1e-11);
        let g = FlatMetric::new(2.0, 0.0, 0.5).unwrap();
        assert!((liouville_energy(&u, &g) - PI * PI / 2.0).abs() < 1e-11);
    }

    #[test]
    fn decay_rate_examples() {
        let grid = Grid::new(32).unwrap();
        let sphere = Target::sphere(2, 1.0).unwrap();
        let c = MapField::constant(&grid, sphere, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(energy_decay_rate(&state(c, grid.zeros(), 1.0)), 0.0);

        // T̊ = diag(4π²α, -4π²α), so (1/4α)∫|T̊|² = 8π⁴α
        let alpha = 3.0;
        let wrap = MapField::equator_wrap(&grid, sphere, 1, 0);
        let rate = energy_decay_rate(&state(wrap, grid.zeros(), alpha));
        assert!((rate + 8.0 * PI.powi(4) * alpha).abs() < 1e-8 * rate.abs());
    }

    #[test]
    fn bochner_examples() {
        let grid = Grid::new(32).unwrap();
        let flat = Target::flat(2).unwrap();
        let c = MapField::constant(&grid, flat, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(bochner_bound(&state(c, grid.zeros(), 1.0), 1.0, 1.0), Some(2.0));

        let sphere = Target::sphere(2, 1.0).unwrap();
        let wrap = MapField::equator_wrap(&grid, sphere, 1, 0);
        let s = state(wrap, grid.zeros(), 2.0);
        assert_eq!(bochner_bound(&s, 2.0, 2.0), None);
        let b = bochner_bound(&s, 5.0, 5.0).unwrap();
        let expected = (4.0 * PI * PI).max(2.0 * (10.0 * PI * PI + 1.0) / 3.0);
        assert!((b - expected).abs() < 1e-9);
    }

    #[test]
    fn jensen_examples() {
        let grid = Grid::new(32).unwrap();
        let g = FlatMetric::IDENTITY;
        assert_eq!(jensen_check(&grid.zeros(), &g), 0.0);
        let normalize = |u: ScalarField| {
            let vol = integrate(&u.map(|v| (2.0 * v).exp()), &g);
            u.map(|v| v - 0.5 * vol.ln())
        };
        assert!(jensen_check(&normalize(grid.sample(|x, _| (2.0 * PI * x).sin())), &g) < -0.1);
        assert!(jensen_check(&normalize(grid.constant(0.7)), &g).abs() < 1e-14);
    }

    #[test]
    fn curvature_stats_examples() {
        let grid = Grid::new(64).unwrap();
        let g = FlatMetric::IDENTITY;
        assert_eq!(curvature_stats(&grid.zeros(), &g), (0.0, 0.0));
        let u = grid.sample(|x, _| 0.1 * (2.0 * PI * x).sin());
        let (max_k, int_sq) = curvature_stats(&u, &g);
        // quadrature of the closed form K = e^{-2u}·0.4π² sin(2πx) with dμ_g = e^{2u} dx
        let m = 4000;
        let mut q = 0.0;
        let mut kmax = 0.0f64;
        for i in 0..m {
            let x = (i as f64 + 0.5) / m as f64;
            let s = (2.0 * PI * x).sin();
            let k = (-0.2 * s).exp() * 0.4 * PI * PI * s;
            kmax = kmax.max(k.abs());
            q += k * k * (0.2 * s).exp() / m as f64;
        }
        assert!((int_sq - q).abs() < 1e-8 * q);
        assert!((max_k - kmax).abs() < 1e-3 * kmax);
    }

    #[test]
    fn csv_line_has_all_columns() {
        let grid = Grid::new(16).unwrap();
        let sphere = Target::sphere(2, 1.0).unwrap();
        let c = MapField::constant(&grid, sphere, &[0.0, 0.0, 1.0]).unwrap();
        let s = state(c, grid.zeros(), 1.0);
        let row = MonitorRow::compute(&s, None).unwrap();
        assert_eq!(row.csv_line().split(',').count(), CSV_COLUMNS.len());
        assert!(row.csv_line().ends_with(','));
        let row = MonitorRow::compute(&s, Some(2.5)).unwrap();
        assert!(row.csv_line().ends_with("2.5e0"));
    }

    #[test]
    fn invariants_hold_for_valid_state_and_fail_otherwise() {
        let grid = Grid::new(16).unwrap();
        let phi = MapField::equator_wrap(&grid, Target::sphere(2, 1.0).unwrap(), 1, 0);
        let mut s = state(phi, grid.sample(|x, _| 0.2 * (2.0 * PI * x).sin()), 2.0);
        s.renormalize().unwrap();
        assert!(check_invariants(&s).iter().all(|c| c.pass));
        s.u.values[0] = f64::NAN;
        assert!(!check_invariants(&s)[0].pass);
        let mut s2 = state(MapField::equator_wrap(&grid, Target::sphere(2, 1.0).unwrap(), 1, 0), grid.zeros(), 2.0);
        s2.phi.components[0][3] *= 1.1;
        assert!(check_invariants(&s2).iter().any(|c| c.name == "target_constraint" && !c.pass));
    }
}
