use std::f64::consts::PI;

use hrflow::flow::AlphaSchedule;
use hrflow::snapshot::{decode, encode};
use hrflow::splitting::{
    lie_derivative, project_horizontal, solve_rho, solve_x, tensor_norm, SymTensorField,
};
use hrflow::{FlatMetric, FlowState, Grid, MapField, ScalarField, Target};
use proptest::prelude::*;

/// Sum of a few Fourier modes with the given coefficients.
fn modes(grid: &Grid, coeffs: &[f64]) -> ScalarField {
    grid.sample(|x, y| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let (p, q) = ((k % 3) as f64, (k / 3) as f64 - 1.0);
                c * (2.0 * PI * (p * x + q * y) + k as f64).cos()
            })
            .sum()
    })
}

fn metric(la: f64, b: f64) -> FlatMetric {
    let a = la.exp();
    FlatMetric::unimodular(a, b, (1.0 + b * b) / a).unwrap()
}

/// A band-limited `g₀`-trace-free tensor.
fn tracefree(grid: &Grid, g0: &FlatMetric, cxx: &[f64], cxy: &[f64]) -> SymTensorField {
    let (ia, ib, ic) = g0.inverse();
    let xx = modes(grid, cxx);
    let xy = modes(grid, cxy);
    let yy = xx.zip_map(&xy, |a, b| -(ia * a + 2.0 * ib * b) / ic);
    SymTensorField { xx, xy, yy }
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn band_limited_tensor_is_reconstructed(
        la in -0.7f64..0.7, b in -0.5f64..0.5, cxx in coeffs(), cxy in coeffs(),
    ) {
        let grid = Grid::new(16).unwrap();
        let g0 = metric(la, b);
        let s = tracefree(&grid, &g0, &cxx, &cxy);
        let rho = solve_rho(&s, &g0).unwrap();
        let x = solve_x(&s, &rho, &g0).unwrap();
        let h = project_horizontal(&s, &g0);
        let rebuilt = SymTensorField::conformal(&rho, &g0)
            .add(&lie_derivative(&x, &g0))
            .add(&SymTensorField::constant(&grid, &h));
        let err = tensor_norm(&rebuilt.sub(&s), &g0);
        prop_assert!(err <= 1e-10 * (1.0 + tensor_norm(&s, &g0)), "{}", err);
        prop_assert!(h.trace(&g0).abs() < 1e-12);
    }

    #[test]
    fn gauge_solve_is_linear(
        la in -0.7f64..0.7, b in -0.5f64..0.5,
        c1 in coeffs(), c2 in coeffs(), c3 in coeffs(), c4 in coeffs(), k in -3.0f64..3.0,
    ) {
        let grid = Grid::new(16).unwrap();
        let g0 = metric(la, b);
        let s1 = tracefree(&grid, &g0, &c1, &c2);
        let s2 = tracefree(&grid, &g0, &c3, &c4);
        let scale = ScalarField::new(grid.clone(), vec![k; grid.len()]);
        let combined = s1.add(&s2.scaled_by(&scale));
        let r1 = solve_rho(&s1, &g0).unwrap();
        let r2 = solve_rho(&s2, &g0).unwrap();
        let r = solve_rho(&combined, &g0).unwrap();
        for i in 0..grid.len() {
            let expected = r1.values[i] + k * r2.values[i];
            prop_assert!((r.values[i] - expected).abs() < 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn renormalized_state_satisfies_constraints(
        la in -0.7f64..0.7, b in -0.5f64..0.5, cu in coeffs(), cp in coeffs(), shift in -0.5f64..0.5,
        radius in 0.5f64..2.0,
    ) {
        let grid = Grid::new(16).unwrap();
        let g0 = FlatMetric::new(1.7 * la.exp(), b, 1.3).unwrap();
        let u = modes(&grid, &cu).map(|v| 0.2 * v + shift);
        let comps = vec![
            modes(&grid, &cp).values,
            modes(&grid, &cp[3..]).values,
            grid.constant(2.0).values,
        ];
        let phi = MapField::new(grid.clone(), Target::sphere(2, radius).unwrap(), comps);
        let mut state = FlowState::new(g0, u, phi, AlphaSchedule::constant(3.0).unwrap()).unwrap();
        state.renormalize().unwrap();
        prop_assert!((state.g0.det() - 1.0).abs() < 1e-12);
        prop_assert!((state.volume() - 1.0).abs() < 1e-12);
        prop_assert!(state.phi.max_constraint_violation() < 1e-12 * radius);
        state.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trip(
        cu in coeffs(), t in 0.0f64..10.0, alpha in 0.1f64..10.0, flat in any::<bool>(), la in -0.7f64..0.7,
    ) {
        let grid = Grid::new(8).unwrap();
        let target = if flat { Target::flat(1).unwrap() } else { Target::sphere(1, 1.5).unwrap() };
        let comps = vec![modes(&grid, &cu).values, grid.constant(1.5).values];
        let mut phi = MapField::new(grid.clone(), target, comps);
        phi.project_onto_target().unwrap();
        let mut s = FlowState::new(metric(la, 0.1), modes(&grid, &cu[1..]), phi, AlphaSchedule::constant(alpha).unwrap()).unwrap();
        s.t = t;
        let bytes = encode(&s);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
        prop_assert_eq!(&back.u.values, &s.u.values);
        prop_assert_eq!(&back.phi.components, &s.phi.components);
        prop_assert_eq!(back.g0.entries(), s.g0.entries());
        prop_assert_eq!(encode(&back), bytes);
    }
}
