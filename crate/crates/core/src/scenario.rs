//! Scenario configuration (TOML) and construction of initial data.
//!
//! ```toml
//! n = 64                 # even, ≥ 8
//! t_end = 1.0            # required
//! sample_dt = 0.01
//! cfl = 0.4
//! dt = 1e-5              # optional fixed step
//! snapshot_times = [0.5]
//! alpha = 5.0            # or [[t0, a0], [t1, a1], ...]
//!
//! [target]
//! kind = "sphere"        # or "flat"
//! m = 2
//! r = 1.0                # sphere only
//!
//! [g0]
//! entries = [1.0, 0.0, 1.0]
//!
//! [u]
//! preset = "zero"        # "sine" (amplitude, wave) or "random_smooth" (amplitude, seed, modes)
//!
//! [phi]
//! preset = "constant"    # (point), "equator_wrap" (wrap) or "random_smooth" (amplitude, seed, modes)
//!
//! [output]
//! csv = "run.csv"
//! snapshot_dir = "snapshots"
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::flow::{AlphaSchedule, FlowState, RunConfig};
use crate::geometry::FlatMetric;
use crate::grid::{Grid, ScalarField};
use crate::target::{MapField, Target};

#[derive(Clone, Debug, PartialEq)]
pub enum TargetConfig {
    Sphere { m: usize, r: f64 },
    Flat { m: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum UPreset {
    Zero,
    Sine { amplitude: f64, wave: [i64; 2] },
    RandomSmooth { amplitude: f64, seed: u64, modes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhiPreset {
    /// Constant map; defaults to the last coordinate axis.
    Constant { point: Option<Vec<f64>> },
    EquatorWrap { wrap: [i64; 2] },
    RandomSmooth { amplitude: f64, seed: u64, modes: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub target: TargetConfig,
    pub alpha: AlphaSchedule,
    pub u: UPreset,
    pub phi: PhiPreset,
    pub g0: [f64; 3],
    pub t_end: f64,
    pub sample_dt: f64,
    pub cfl: f64,
    pub dt: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            t_end: self.t_end,
            sample_dt: self.sample_dt,
            cfl: self.cfl,
            dt: self.dt,
            snapshot_times: self.snapshot_times.clone(),
            ..RunConfig::default()
        }
    }
}

/// A table whose keys must all be consumed.
struct Section<'a> {
    path: String,
    table: &'a Table,
    seen: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table) -> Self {
        Self {
            path: path.to_string(),
            table,
            seen: Vec::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn get(&mut self, k: &'static str) -> Option<&'a Value> {
        self.seen.push(k);
        self.table.get(k)
    }

    fn real(&mut self, k: &'static str, default: Option<f64>) -> Result<f64> {
        let v = match self.get(k) {
            None => default.ok_or_else(|| Error::config(self.key(k), "missing required key"))?,
            Some(v) => as_real(v).ok_or_else(|| Error::config(self.key(k), "expected a number"))?,
        };
        if !v.is_finite() {
            return Err(Error::config(self.key(k), "must be finite"));
        }
        Ok(v)
    }

    fn opt_real(&mut self, k: &'static str) -> Result<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(_) => self.real(k, None).map(Some),
        }
    }

    fn integer(&mut self, k: &'static str, default: i64) -> Result<i64> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Integer(i)) => Ok(*i),
            Some(_) => Err(Error::config(self.key(k), "expected an integer")),
        }
    }

    fn text(&mut self, k: &'static str, default: &str) -> Result<String> {
        match self.get(k) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::config(self.key(k), "expected a string")),
        }
    }

    fn reals(&mut self, k: &'static str) -> Result<Option<Vec<f64>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| as_real(v).filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .map(Some)
                .ok_or_else(|| Error::config(self.key(k), "expected an array of finite numbers")),
            Some(_) => Err(Error::config(self.key(k), "expected an array")),
        }
    }

    fn int_pair(&mut self, k: &'static str, default: [i64; 2]) -> Result<[i64; 2]> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Array(a)) => match a.as_slice() {
                [Value::Integer(p), Value::Integer(q)] => Ok([*p, *q]),
                _ => Err(Error::config(self.key(k), "expected two integers")),
            },
            Some(_) => Err(Error::config(self.key(k), "expected two integers")),
        }
    }

    fn table(&mut self, k: &'static str) -> Result<Option<&'a Table>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(Error::config(self.key(k), "expected a table")),
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.table.keys() {
            if !self.seen.contains(&k.as_str()) {
                return Err(Error::config(self.key(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn as_real(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn nonnegative_int(value: i64, key: String, min: i64) -> Result<usize> {
    if value < min {
        return Err(Error::config(key, format!("must be at least {min}")));
    }
    usize::try_from(value).map_err(|_| Error::config(key, "out of range"))
}

fn parse_alpha(v: Option<&Value>) -> Result<AlphaSchedule> {
    let bad = |msg: &str| Error::config("alpha", msg);
    let check = |a: f64| {
        if a.is_finite() && a > 0.0 {
            Ok(a)
        } else {
            Err(bad("coupling must be bounded away from zero (alpha > 0)"))
        }
    };
    match v {
        None => Err(bad("missing required key")),
        Some(Value::Array(items)) => {
            let mut knots = Vec::with_capacity(items.len());
            for item in items {
                match item.as_array().map(Vec::as_slice) {
                    Some([t, a]) => {
                        let t = as_real(t).filter(|t| t.is_finite()).ok_or_else(|| bad("knot time must be a number"))?;
                        let a = as_real(a).ok_or_else(|| bad("knot value must be a number"))?;
                        knots.push((t, check(a)?));
                    }
                    _ => return Err(bad("schedule entries must be [t, alpha] pairs")),
                }
            }
            AlphaSchedule::piecewise_linear(knots).map_err(|e| bad(&e.to_string()))
        }
        Some(v) => {
            let a = as_real(v).ok_or_else(|| bad("expected a number or a list of [t, alpha] pairs"))?;
            AlphaSchedule::constant(check(a)?).map_err(|e| bad(&e.to_string()))
        }
    }
}

fn parse_random(s: &mut Section, default_amplitude: f64) -> Result<(f64, u64, usize)> {
    let amplitude = s.real("amplitude", Some(default_amplitude))?;
    let seed = s.integer("seed", 0)?;
    let seed = u64::try_from(seed).map_err(|_| Error::config(s.key("seed"), "must be nonnegative"))?;
    let modes = nonnegative_int(s.integer("modes", 3)?, s.key("modes"), 1)?;
    Ok((amplitude, seed, modes))
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
    from_table(&table)
}

/// Parses a scenario and then applies `key=value` overrides, where the key is
/// a dotted path and the value is a TOML value.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    from_table(&table)
}

fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must have the form key=value"))?;
    let key = key.trim();
    let value: Table = format!("v = {}", raw.trim())
        .parse()
        .or_else(|_| format!("v = {:?}", raw.trim()).parse())
        .map_err(|_| Error::config(key, "cannot parse override value"))?;
    let value = value.get("v").cloned().expect("parsed above");
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty path segment"));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn from_table(table: &Table) -> Result<ScenarioConfig> {
    let mut root = Section::new("", table);
    let n = root.integer("n", 64)?;
    if n < 8 || n % 2 != 0 {
        return Err(Error::config("n", format!("grid size {n} must be even and at least 8")));
    }
    let t_end = root.real("t_end", None)?;
    if t_end < 0.0 {
        return Err(Error::config("t_end", "must be nonnegative"));
    }
    let sample_dt = root.real("sample_dt", Some(0.01))?;
    if sample_dt <= 0.0 {
        return Err(Error::config("sample_dt", "must be positive"));
    }
    let cfl = root.real("cfl", Some(0.4))?;
    if cfl <= 0.0 {
        return Err(Error::config("cfl", "must be positive"));
    }
    let dt = root.opt_real("dt")?;
    if dt.is_some_and(|d| d <= 0.0) {
        return Err(Error::config("dt", "must be positive"));
    }
    let snapshot_times = root.reals("snapshot_times")?.unwrap_or_default();
    if snapshot_times.iter().any(|&s| s < 0.0) {
        return Err(Error::config("snapshot_times", "times must be nonnegative"));
    }
    let alpha = parse_alpha(root.get("alpha"))?;

    let target = match root.table("target")? {
        None => TargetConfig::Sphere { m: 2, r: 1.0 },
        Some(t) => {
            let mut s = Section::new("target", t);
            let kind = s.text("kind", "sphere")?;
            let m = nonnegative_int(s.integer("m", 2)?, s.key("m"), 1)?;
            let cfg = match kind.as_str() {
                "sphere" => {
                    let r = s.real("r", Some(1.0))?;
                    if r <= 0.0 {
                        return Err(Error::config("target.r", "radius must be positive"));
                    }
                    TargetConfig::Sphere { m, r }
                }
                "flat" => TargetConfig::Flat { m },
                other => return Err(Error::config("target.kind", format!("unknown target `{other}`"))),
            };
            s.finish()?;
            cfg
        }
    };

    let g0 = match root.table("g0")? {
        None => [1.0, 0.0, 1.0],
        Some(t) => {
            let mut s = Section::new("g0", t);
            let e = s.reals("entries")?.unwrap_or_else(|| vec![1.0, 0.0, 1.0]);
            s.finish()?;
            let e: [f64; 3] = e
                .try_into()
                .map_err(|_| Error::config("g0.entries", "expected [a, b, c]"))?;
            FlatMetric::new(e[0], e[1], e[2]).map_err(|err| Error::config("g0.entries", err.to_string()))?;
            e
        }
    };

    let u = match root.table("u")? {
        None => UPreset::Zero,
        Some(t) => {
            let mut s = Section::new("u", t);
            let preset = s.text("preset", "zero")?;
            let p = match preset.as_str() {
                "zero" => UPreset::Zero,
                "sine" => UPreset::Sine {
                    amplitude: s.real("amplitude", Some(0.1))?,
                    wave: s.int_pair("wave", [1, 0])?,
                },
                "random_smooth" => {
                    let (amplitude, seed, modes) = parse_random(&mut s, 0.1)?;
                    UPreset::RandomSmooth { amplitude, seed, modes }
                }
                other => return Err(Error::config("u.preset", format!("unknown preset `{other}`"))),
            };
            s.finish()?;
            p
        }
    };

    let components = match &target {
        TargetConfig::Sphere { m, .. } | TargetConfig::Flat { m } => m + 1,
    };
    let phi = match root.table("phi")? {
        None => PhiPreset::Constant { point: None },
        Some(t) => {
            let mut s = Section::new("phi", t);
            let preset = s.text("preset", "constant")?;
            let p = match preset.as_str() {
                "constant" => {
                    let point = s.reals("point")?;
                    if point.as_ref().is_some_and(|p| p.len() != components) {
                        return Err(Error::config("phi.point", format!("expected {components} coordinates")));
                    }
                    PhiPreset::Constant { point }
                }
                "equator_wrap" => PhiPreset::EquatorWrap {
                    wrap: s.int_pair("wrap", [1, 0])?,
                },
                "random_smooth" => {
                    let (amplitude, seed, modes) = parse_random(&mut s, 0.2)?;
                    PhiPreset::RandomSmooth { amplitude, seed, modes }
                }
                other => return Err(Error::config("phi.preset", format!("unknown preset `{other}`"))),
            };
            s.finish()?;
            p
        }
    };

    let output = match root.table("output")? {
        None => OutputConfig::default(),
        Some(t) => {
            let mut s = Section::new("output", t);
            let csv = s.get("csv").map(|v| v.as_str().map(PathBuf::from));
            let dir = s.get("snapshot_dir").map(|v| v.as_str().map(PathBuf::from));
            s.finish()?;
            OutputConfig {
                csv: csv.map(|c| c.ok_or_else(|| Error::config("output.csv", "expected a path string"))).transpose()?,
                snapshot_dir: dir
                    .map(|d| d.ok_or_else(|| Error::config("output.snapshot_dir", "expected a path string")))
                    .transpose()?,
            }
        }
    };
    root.finish()?;

    Ok(ScenarioConfig {
        n: n as usize,
        target,
        alpha,
        u,
        phi,
        g0,
        t_end,
        sample_dt,
        cfl,
        dt,
        snapshot_times,
        output,
    })
}

/// Random band-limited field `Σ (a cos + b sin)(2π(px + qy))/(p² + q²)` over
/// `0 < max(|p|, |q|) ≤ modes`, scaled to `max |f| = amplitude`.
pub fn random_smooth_field(grid: &Grid, amplitude: f64, rng: &mut ChaCha8Rng, modes: usize) -> ScalarField {
    let k = modes as i64;
    let mut terms = Vec::new();
    for p in -k..=k {
        for q in 0..=k {
            // one representative of each ±(p, q) pair
            if q == 0 && p <= 0 {
                continue;
            }
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let weight = 1.0 / (p * p + q * q) as f64;
            terms.push((p as f64, q as f64, a * weight, b * weight));
        }
    }
    let f = grid.sample(|x, y| {
        terms
            .iter()
            .map(|&(p, q, a, b)| {
                let arg = 2.0 * PI * (p * x + q * y);
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    });
    let max = f.max_abs();
    if max == 0.0 {
        return f;
    }
    f.map(|v| amplitude * v / max)
}

/// Builds the initial state and applies the sphere, volume and determinant
/// normalizations.
pub fn build_initial(config: &ScenarioConfig) -> Result<FlowState> {
    let grid = Grid::new(config.n)?;
    let target = match config.target {
        TargetConfig::Sphere { m, r } => Target::sphere(m, r)?,
        TargetConfig::Flat { m } => Target::flat(m)?,
    };
    let [a, b, c] = config.g0;
    let g0 = FlatMetric::unimodular(a, b, c)?;
    let u = match &config.u {
        UPreset::Zero => grid.zeros(),
        UPreset::Sine { amplitude, wave } => {
            let (p, q) = (wave[0] as f64, wave[1] as f64);
            grid.sample(|x, y| amplitude * (2.0 * PI * (p * x + q * y)).sin())
        }
        UPreset::RandomSmooth { amplitude, seed, modes } => {
            random_smooth_field(&grid, *amplitude, &mut ChaCha8Rng::seed_from_u64(*seed), *modes)
        }
    };
    let comps = target.components();
    let phi = match &config.phi {
        PhiPreset::Constant { point } => {
            let p = point.clone().unwrap_or_else(|| {
                let mut p = vec![0.0; comps];
                p[comps - 1] = target.radius().unwrap_or(0.0);
                p
            });
            MapField::constant(&grid, target, &p)?
        }
        PhiPreset::EquatorWrap { wrap } => {
            if target.radius().is_none() {
                return Err(Error::config("phi.preset", "equator_wrap needs a sphere target"));
            }
            MapField::equator_wrap(&grid, target, wrap[0], wrap[1])
        }
        PhiPreset::RandomSmooth { amplitude, seed, modes } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let scale = target.radius().unwrap_or(1.0);
            let mut components: Vec<Vec<f64>> = (0..comps)
                .map(|_| random_smooth_field(&grid, amplitude * scale, &mut rng, *modes).values)
                .collect();
            if let Some(r) = target.radius() {
                // perturbation of the constant map at the last axis
                for v in components[comps - 1].iter_mut() {
                    *v += r;
                }
            }
            let mut phi = MapField::new(grid.clone(), target, components);
            phi.project_onto_target()
                .map_err(|_| Error::config("phi.amplitude", "perturbation reaches the origin; reduce the amplitude"))?;
            phi
        }
    };
    let mut state = FlowState::new(g0, u, phi, config.alpha.clone())?;
    state.renormalize()?;
    Ok(state)
}
