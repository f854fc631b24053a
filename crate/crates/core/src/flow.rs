//! Right-hand sides of the gauge-fixed split system and explicit time
//! stepping with renormalization.
//!
//! With `K̄ = 0` on the torus and `w = e^{-2u}`:
//!
//! * `∂_t g₀ = P^H(w T̊)`,
//! * `∂_t u = w Δ_{g₀} u + α (e(φ, g₀) w - Ē) + ½ρ - du(X)`,
//! * `∂_t φ = w τ_{g₀}(φ) - dφ(X)`,
//!
//! where `ρ` and `X` are recomputed from the current fields at every stage.

use crate::error::{Error, Result};
use crate::geometry::{conformal_weight, FlatMetric};
use crate::grid::{Grid, ScalarField, Spectrum};
use crate::monitor::{bochner_bound, MonitorRow};
use crate::splitting::{gauge_spectral, HorizontalVelocity, VectorField};
use crate::target::{dealias_all, MapField, Target};

/// Extent of the stability region of classical RK4 on the negative real axis.
pub const RK4_REAL_AXIS_LIMIT: f64 = 2.785_293_563_405_282;

/// Tolerances of the state invariants.
pub const DET_TOLERANCE: f64 = 1e-8;
pub const VOLUME_TOLERANCE: f64 = 1e-6;
pub const SPHERE_TOLERANCE: f64 = 1e-8;

/// Coupling `α(t)`, constant or piecewise linear and clamped outside the knots.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl AlphaSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Constant(alpha))
    }

    /// Knots `(t, α)` with strictly increasing `t`.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::OutOfRange {
                name: "alpha",
                value: f64::NAN,
                why: "schedule needs at least one knot",
            });
        }
        for (i, &(t, a)) in knots.iter().enumerate() {
            check_alpha(a)?;
            if !t.is_finite() || (i > 0 && t <= knots[i - 1].0) {
                return Err(Error::OutOfRange {
                    name: "alpha knot time",
                    value: t,
                    why: "knot times must be finite and strictly increasing",
                });
            }
        }
        Ok(Self::PiecewiseLinear(knots))
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant(a) => *a,
            Self::PiecewiseLinear(k) => {
                if t <= k[0].0 {
                    return k[0].1;
                }
                for w in k.windows(2) {
                    let ((t0, a0), (t1, a1)) = (w[0], w[1]);
                    if t <= t1 {
                        return a0 + (a1 - a0) * (t - t0) / (t1 - t0);
                    }
                }
                k[k.len() - 1].1
            }
        }
    }

    /// `(α_lo, α_hi)` over all times.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Constant(a) => (*a, *a),
            Self::PiecewiseLinear(k) => k
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| (lo.min(a), hi.max(a))),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            why: "coupling must be bounded away from zero",
        });
    }
    Ok(())
}

/// The evolving object `(t, g₀, u, φ, α)`.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub g0: FlatMetric,
    pub u: ScalarField,
    pub phi: MapField,
    pub alpha: AlphaSchedule,
}

impl FlowState {
    pub fn new(g0: FlatMetric, u: ScalarField, phi: MapField, alpha: AlphaSchedule) -> Result<Self> {
        if u.grid() != phi.grid() {
            return Err(Error::InvalidTarget("u and phi live on different grids".into()));
        }
        Ok(Self { t: 0.0, g0, u, phi, alpha })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn target(&self) -> &Target {
        self.phi.target()
    }

    pub fn alpha_now(&self) -> f64 {
        self.alpha.at(self.t)
    }

    /// `∫ e^{2u} dμ_{g₀}`.
    pub fn volume(&self) -> f64 {
        volume(&self.u.values, &self.g0)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.phi.is_finite() && self.g0.entries().iter().all(|v| v.is_finite())
    }

    /// Checks unit determinant, unit volume and the sphere constraint.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Abort { t: self.t, reason });
        if !self.is_finite() {
            return fail("non-finite state".into());
        }
        if (self.g0.det() - 1.0).abs() >= DET_TOLERANCE {
            return fail(format!("det g0 = {} differs from 1", self.g0.det()));
        }
        if (self.volume() - 1.0).abs() >= VOLUME_TOLERANCE {
            return fail(format!("volume {} differs from 1", self.volume()));
        }
        let v = self.phi.max_constraint_violation();
        if v >= SPHERE_TOLERANCE {
            return fail(format!("map leaves the target by {v:e}"));
        }
        Ok(())
    }

    /// Projects `φ`, restores unit volume and unit determinant, in that order.
    pub fn renormalize(&mut self) -> Result<Shifts> {
        let sphere = self.phi.project_onto_target()?;
        // Volume is measured against the unit-determinant metric the next
        // step restores. expm1/ln_1p keep the shift accurate for u near zero.
        let len = self.u.values.len() as f64;
        let excess = self.u.values.iter().map(|v| (2.0 * v).exp_m1()).sum::<f64>() / len;
        let half_log = 0.5 * excess.ln_1p();
        for v in self.u.values.iter_mut() {
            *v -= half_log;
        }
        let root = self.g0.det().sqrt();
        self.g0 = self.g0.renormalize_det()?;
        Ok(Shifts {
            sphere,
            volume: half_log.abs(),
            det: (root - 1.0).abs(),
        })
    }
}

fn volume(u: &[f64], g0: &FlatMetric) -> f64 {
    u.iter().map(|v| (2.0 * v).exp()).sum::<f64>() / u.len() as f64 * g0.det().sqrt()
}

/// Sizes of the corrections applied by [`FlowState::renormalize`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Shifts {
    /// `max |φ - π(φ)|`.
    pub sphere: f64,
    /// `|½ log Vol|`.
    pub volume: f64,
    /// `|√det g₀ - 1|`.
    pub det: f64,
}

impl Shifts {
    pub fn max(&self) -> f64 {
        self.sphere.max(self.volume).max(self.det)
    }
}

/// Time derivatives and gauge fields at one state.
#[derive(Clone, Debug)]
pub struct Rhs {
    pub du: ScalarField,
    pub dphi: Vec<Vec<f64>>,
    pub dg0: HorizontalVelocity,
    pub rho: ScalarField,
    pub x: VectorField,
}

impl Rhs {
    pub fn norms(&self) -> RhsNorms {
        RhsNorms {
            du: self.du.max_abs(),
            dphi: self.dphi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())),
            dg0: self.dg0.entries().iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }
}

/// Max norms of the right-hand sides.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RhsNorms {
    pub du: f64,
    pub dphi: f64,
    pub dg0: f64,
}

struct RawRhs {
    du: Vec<f64>,
    dphi: Vec<Vec<f64>>,
    dg0: HorizontalVelocity,
    rho: Vec<f64>,
    x: [Vec<f64>; 2],
}

fn evaluate(
    grid: &Grid,
    target: &Target,
    g0: &FlatMetric,
    u: &[f64],
    phi: &[Vec<f64>],
    alpha: f64,
) -> Result<RawRhs> {
    let len = grid.len();
    let m = phi.len();
    let inputs: Vec<&[f64]> = phi.iter().map(Vec::as_slice).chain([u]).collect();
    let spectra = grid.forward_all(&inputs);

    let mut firsts = Vec::with_capacity(2 * (m + 1));
    for s in &spectra {
        let (dx, dy) = grid.gradient(s);
        firsts.push(dx);
        firsts.push(dy);
    }
    let mut laps = Vec::with_capacity(m + 1);
    for pair in spectra.chunks(2) {
        let (a, b) = grid.laplacian_pair(&pair[0], pair.get(1).unwrap_or(&pair[0]), g0);
        laps.push(a);
        if pair.len() == 2 {
            laps.push(b);
        }
    }
    let (ux, uy, lap_u) = (&firsts[2 * m], &firsts[2 * m + 1], &laps[m]);

    let mut p = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
    for c in 0..m {
        let (dx, dy) = (&firsts[2 * c], &firsts[2 * c + 1]);
        for i in 0..len {
            p[0][i] += dx[i] * dx[i];
            p[1][i] += dx[i] * dy[i];
            p[2][i] += dy[i] * dy[i];
        }
    }
    let (ia, ib, ic) = g0.inverse();
    let e: Vec<f64> = (0..len)
        .map(|i| 0.5 * (ia * p[0][i] + 2.0 * ib * p[1][i] + ic * p[2][i]))
        .collect();
    let mut w: Vec<f64> = u.iter().map(|v| (-2.0 * v).exp()).collect();
    let sqrt_det = g0.det().sqrt();
    let density: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
    let vol = density.iter().sum::<f64>() / len as f64 * sqrt_det;
    grid.dealias_values(&mut w);

    let energy = e.iter().sum::<f64>() / len as f64 * sqrt_det;
    let mean_energy = energy / vol;

    let g = g0.entries();
    let s_raw: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..len).map(|i| 2.0 * alpha * w[i] * (p[c][i] - e[i] * g[c])).collect())
        .collect();
    let mut s_spec = grid.forward_all(&[&s_raw[0], &s_raw[2], &s_raw[1]]);
    for s in s_spec.iter_mut() {
        s.dealias();
    }
    let [sxx, syy, sxy]: [Spectrum; 3] = s_spec.try_into().expect("three components");
    let dg0 = HorizontalVelocity {
        xx: sxx.mean(),
        xy: sxy.mean(),
        yy: syy.mean(),
    }
    .trace_free(g0);
    let (rho_s, [xs, ys]) = gauge_spectral(&[sxx, sxy, syy], g0)?;
    let mut back = grid.inverse_all(&[&xs, &ys, &rho_s]);
    let rho = back.pop().expect("rho");
    let xy_ = back.pop().expect("X^y");
    let xx_ = back.pop().expect("X^x");

    let kappa = target.second_form_coefficient();
    let (w_, e_, xs_, ys_) = (&w[..len], &e[..len], &xx_[..len], &xy_[..len]);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for c in 0..m {
        let (dx, dy, lap) = (&firsts[2 * c], &firsts[2 * c + 1], &laps[c]);
        let comp = &phi[c][..len];
        let (dx, dy, lap) = (&dx[..len], &dy[..len], &lap[..len]);
        outputs.push(
            (0..len)
                .map(|i| {
                    w_[i] * (lap[i] + kappa * 2.0 * e_[i] * comp[i]) - (xs_[i] * dx[i] + ys_[i] * dy[i])
                })
                .collect(),
        );
    }
    let (ux, uy, lap_u, rho_) = (&ux[..len], &uy[..len], &lap_u[..len], &rho[..len]);
    outputs.push(
        (0..len)
            .map(|i| {
                w_[i] * lap_u[i] + alpha * (e_[i] * w_[i] - mean_energy) + 0.5 * rho_[i]
                    - (xs_[i] * ux[i] + ys_[i] * uy[i])
            })
            .collect(),
    );
    dealias_all(grid, &mut outputs);
    let mut du = outputs.pop().expect("du");
    tangential_part(&mut du, &density, &mut outputs, phi, kappa);
    Ok(RawRhs {
        du,
        dphi: outputs,
        dg0,
        rho,
        x: [xx_, xy_],
    })
}

/// Removes the components of the discrete vector field that leave the
/// constraint set: the drift of `∫ e^{2u}` from `du`, and the part of `dφ`
/// normal to the sphere through `φ`. Both vanish for the continuous flow;
/// aliasing makes them small but nonzero, and projecting only after each
/// step would then cost a full order of accuracy.
fn tangential_part(du: &mut [f64], density: &[f64], dphi: &mut [Vec<f64>], phi: &[Vec<f64>], kappa: f64) {
    let drift = du.iter().zip(density).map(|(d, r)| d * r).sum::<f64>() / density.iter().sum::<f64>();
    du.iter_mut().for_each(|d| *d -= drift);
    if kappa == 0.0 {
        return;
    }
    for i in 0..du.len() {
        let normal = kappa * phi.iter().zip(dphi.iter()).map(|(p, d)| p[i] * d[i]).sum::<f64>();
        for (p, d) in phi.iter().zip(dphi.iter_mut()) {
            d[i] -= normal * p[i];
        }
    }
}

/// Right-hand sides of the split system at `state`.
pub fn rhs(state: &FlowState) -> Result<Rhs> {
    let grid = state.grid();
    let raw = evaluate(
        grid,
        state.target(),
        &state.g0,
        &state.u.values,
        &state.phi.components,
        state.alpha_now(),
    )?;
    let [x, y] = raw.x;
    Ok(Rhs {
        du: ScalarField::new(grid.clone(), raw.du),
        dphi: raw.dphi,
        dg0: raw.dg0,
        rho: ScalarField::new(grid.clone(), raw.rho),
        x: VectorField {
            x: ScalarField::new(grid.clone(), x),
            y: ScalarField::new(grid.clone(), y),
        },
    })
}

/// Largest stable RK4 step for the conformal heat operator `e^{-2u}Δ_{g₀}`,
/// scaled by `cfl`: `cfl·2.785/(max e^{-2u} · max_band |k|²_{g₀})`.
pub fn stability_bound(state: &FlowState, cfl: f64) -> f64 {
    let w_max = conformal_weight(&state.u).max();
    cfl * RK4_REAL_AXIS_LIMIT / (w_max * state.grid().max_band_symbol(&state.g0))
}

/// Outcome of one accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub rhs_norms: RhsNorms,
    pub shifts: Shifts,
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(p, q)| p + a * q).collect()
}

fn abort(t: f64, reason: impl Into<String>) -> Error {
    Error::Abort {
        t,
        reason: reason.into(),
    }
}

/// One classical RK4 step followed by sphere, volume and determinant
/// renormalization.
pub fn step(state: &FlowState, dt: f64) -> Result<(FlowState, StepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            why: "time step must be positive and finite",
        });
    }
    let grid = state.grid();
    let target = state.target();
    let t = state.t;
    let stage = |g0: &FlatMetric, u: &[f64], phi: &[Vec<f64>], ts: f64| {
        evaluate(grid, target, g0, u, phi, state.alpha.at(ts))
    };
    let shift_metric = |k: &HorizontalVelocity, s: f64| {
        state
            .g0
            .shifted(k.entries(), s)
            .map_err(|_| abort(t, "metric stage lost positive definiteness"))
    };
    let advance = |k: &RawRhs, s: f64| -> (Vec<f64>, Vec<Vec<f64>>) {
        let u = axpy(&state.u.values, s, &k.du);
        let phi = state
            .phi
            .components
            .iter()
            .zip(&k.dphi)
            .map(|(c, d)| axpy(c, s, d))
            .collect();
        (u, phi)
    };

    let k1 = stage(&state.g0, &state.u.values, &state.phi.components, t)?;
    let (u2, p2) = advance(&k1, 0.5 * dt);
    let k2 = stage(&shift_metric(&k1.dg0, 0.5 * dt)?, &u2, &p2, t + 0.5 * dt)?;
    let (u3, p3) = advance(&k2, 0.5 * dt);
    let k3 = stage(&shift_metric(&k2.dg0, 0.5 * dt)?, &u3, &p3, t + 0.5 * dt)?;
    let (u4, p4) = advance(&k3, dt);
    let k4 = stage(&shift_metric(&k3.dg0, dt)?, &u4, &p4, t + dt)?;

    let c = dt / 6.0;
    let combine = |a: &[f64], b1: &[f64], b2: &[f64], b3: &[f64], b4: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|i| a[i] + c * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]))
            .collect()
    };
    let u = combine(&state.u.values, &k1.du, &k2.du, &k3.du, &k4.du);
    let phi: Vec<Vec<f64>> = (0..state.phi.components.len())
        .map(|j| {
            combine(
                &state.phi.components[j],
                &k1.dphi[j],
                &k2.dphi[j],
                &k3.dphi[j],
                &k4.dphi[j],
            )
        })
        .collect();
    let h: [f64; 3] = std::array::from_fn(|i| {
        let e = |k: &RawRhs| k.dg0.entries()[i];
        (e(&k1) + 2.0 * e(&k2) + 2.0 * e(&k3) + e(&k4)) / 6.0
    });

    let finite = u.iter().chain(phi.iter().flatten()).all(|v| v.is_finite())
        && h.iter().all(|v| v.is_finite());
    if !finite {
        return Err(abort(t + dt, "non-finite values after step"));
    }
    let g0 = state
        .g0
        .shifted(h, dt)
        .map_err(|_| abort(t + dt, "metric lost positive definiteness"))?;
    let mut next = FlowState {
        t: t + dt,
        g0,
        u: ScalarField::new(grid.clone(), u),
        phi: MapField::new(grid.clone(), *target, phi),
        alpha: state.alpha.clone(),
    };
    let shifts = next
        .renormalize()
        .map_err(|e| abort(t + dt, format!("renormalization failed: {e}")))?;
    if !next.is_finite() {
        return Err(abort(t + dt, "non-finite values after renormalization"));
    }
    let norms = RhsNorms {
        du: k1.du.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        dphi: k1.dphi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())),
        dg0: k1.dg0.entries().iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    Ok((
        next,
        StepReport {
            dt,
            rhs_norms: norms,
            shifts,
        },
    ))
}

/// Parameters of [`run`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    pub sample_dt: f64,
    pub cfl: f64,
    /// Fixed step size; when absent the step follows [`stability_bound`].
    pub dt: Option<f64>,
    pub snapshot_times: Vec<f64>,
    /// Step-halving retries before a renormalization overflow aborts the run.
    pub max_halvings: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            sample_dt: 0.01,
            cfl: 0.4,
            dt: None,
            snapshot_times: Vec::new(),
            max_halvings: 4,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, ok: bool, why: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange { name, value: v, why })
            }
        };
        check("t_end", self.t_end, self.t_end.is_finite() && self.t_end >= 0.0, "must be finite and nonnegative")?;
        check("sample_dt", self.sample_dt, self.sample_dt.is_finite() && self.sample_dt > 0.0, "must be positive")?;
        check("cfl", self.cfl, self.cfl.is_finite() && self.cfl > 0.0, "must be positive")?;
        if let Some(dt) = self.dt {
            check("dt", dt, dt.is_finite() && dt > 0.0, "must be positive")?;
        }
        for &s in &self.snapshot_times {
            check("snapshot time", s, s.is_finite() && s >= 0.0, "must be finite and nonnegative")?;
        }
        Ok(())
    }

    /// Sample, snapshot and end times in increasing order, each tagged with
    /// whether it emits a monitor row and whether it stores a snapshot.
    fn events(&self) -> Vec<(f64, bool, bool)> {
        let mut events: Vec<(f64, bool, bool)> = Vec::new();
        let count = (self.t_end / self.sample_dt + 1e-9).floor() as usize;
        for k in 0..=count {
            events.push(((k as f64 * self.sample_dt).min(self.t_end), true, false));
        }
        events.push((self.t_end, true, false));
        for &s in &self.snapshot_times {
            if s <= self.t_end {
                events.push((s, false, true));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, bool, bool)> = Vec::new();
        for e in events {
            match merged.last_mut() {
                Some(last) if (e.0 - last.0).abs() <= 1e-12 * (1.0 + e.0.abs()) => {
                    last.1 |= e.1;
                    last.2 |= e.2;
                }
                _ => merged.push(e),
            }
        }
        merged
    }
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct RunAbort {
    pub t: f64,
    pub reason: String,
}

/// Result of [`run`]. On abort `final_state` is the last valid state.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<MonitorRow>,
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    pub abort: Option<RunAbort>,
    pub steps: usize,
    /// Calibrated constant `C` of the shift bound `shift ≤ 10·C·dt²`.
    pub shift_constant: f64,
    /// Largest observed `shift/dt²`.
    pub max_shift_ratio: f64,
}

/// Floor of the calibrated shift constant.
const MIN_SHIFT_CONSTANT: f64 = 1.0;

/// Advances `initial` to `config.t_end`, emitting a monitor row at every
/// sample time and storing the state at every snapshot time.
pub fn run(initial: FlowState, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (alpha_lo, alpha_hi) = initial.alpha.bounds();
    let bound = bochner_bound(&initial, alpha_lo, alpha_hi);
    let mut outcome = RunOutcome {
        rows: Vec::new(),
        snapshots: Vec::new(),
        final_state: initial.clone(),
        abort: None,
        steps: 0,
        shift_constant: MIN_SHIFT_CONSTANT,
        max_shift_ratio: 0.0,
    };

    // calibration probe at the stability bound
    let probe_dt = stability_bound(&initial, config.cfl);
    match step(&initial, probe_dt) {
        Ok((_, report)) => {
            outcome.shift_constant = (report.shifts.max() / (probe_dt * probe_dt)).max(MIN_SHIFT_CONSTANT)
        }
        Err(e) => {
            outcome.abort = Some(RunAbort {
                t: initial.t,
                reason: format!("calibration step failed: {e}"),
            });
            return Ok(outcome);
        }
    }

    let mut state = initial;
    for (t_event, sample, snapshot) in config.events() {
        while state.t < t_event {
            let remaining = t_event - state.t;
            let dt_max = config.dt.unwrap_or_else(|| stability_bound(&state, config.cfl));
            let m = ((remaining / dt_max) - 1e-9).ceil().max(1.0);
            let mut dt = remaining / m;
            let mut attempt = 0;
            let result = loop {
                match step(&state, dt) {
                    Ok((next, report)) => {
                        let ratio = report.shifts.max() / (dt * dt);
                        if ratio <= 10.0 * outcome.shift_constant {
                            break Ok((next, ratio, dt == remaining));
                        }
                        if attempt >= config.max_halvings {
                            break Err(format!(
                                "renormalization shift {:e} exceeds 10·C·dt² = {:e}",
                                report.shifts.max(),
                                10.0 * outcome.shift_constant * dt * dt
                            ));
                        }
                    }
                    Err(Error::Abort { reason, .. }) => break Err(reason),
                    Err(e) => break Err(e.to_string()),
                }
                attempt += 1;
                dt *= 0.5;
            };
            match result {
                Ok((mut next, ratio, last)) => {
                    if last {
                        next.t = t_event;
                    }
                    outcome.max_shift_ratio = outcome.max_shift_ratio.max(ratio);
                    outcome.steps += 1;
                    state = next;
                }
                Err(reason) => {
                    outcome.abort = Some(RunAbort {
                        t: state.t + dt,
                        reason,
                    });
                    outcome.final_state = state;
                    return Ok(outcome);
                }
            }
        }
        if sample {
            match MonitorRow::compute(&state, bound) {
                Ok(row) => outcome.rows.push(row),
                Err(e) => {
                    outcome.abort = Some(RunAbort {
                        t: state.t,
                        reason: format!("monitor failed: {e}"),
                    });
                    outcome.final_state = state;
                    return Ok(outcome);
                }
            }
        }
        if snapshot {
            outcome.snapshots.push(state.clone());
        }
    }
    outcome.final_state = state;
    Ok(outcome)
}
