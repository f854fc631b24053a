//! Self-describing binary snapshot of a [`FlowState`].
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "HRFSNAP\0"
//! version  u32
//! records  u32
//! record*  key_len u16 | key utf-8 | tag u8 | count u64 | payload
//! ```
//!
//! Tags: `0` = `count` f64 values, `1` = `count` u64 values, `2` = `count`
//! bytes of utf-8 text. Keys: `t`, `g0`, `u`, `phi`, `alpha`, `alpha_knots`,
//! `n`, `m`, `target` and, for sphere targets, `r`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{AlphaSchedule, FlowState};
use crate::geometry::FlatMetric;
use crate::grid::{Grid, ScalarField};
use crate::target::{MapField, Target};

pub const MAGIC: &[u8; 8] = b"HRFSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
enum Value {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Text(String),
}

fn push_record(out: &mut Vec<u8>, key: &str, value: &Value) {
    out.extend_from_slice(&(key.len() as u16).to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    match value {
        Value::F64(v) => {
            out.push(0);
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Value::U64(v) => {
            out.push(1);
            out.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Value::Text(s) => {
            out.push(2);
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
}

pub fn encode(state: &FlowState) -> Vec<u8> {
    let knots: Vec<f64> = match &state.alpha {
        AlphaSchedule::Constant(a) => vec![0.0, *a],
        AlphaSchedule::PiecewiseLinear(k) => k.iter().flat_map(|&(t, a)| [t, a]).collect(),
    };
    let target = state.target();
    let mut records = vec![
        ("t", Value::F64(vec![state.t])),
        ("g0", Value::F64(state.g0.entries().to_vec())),
        ("n", Value::U64(vec![state.grid().n() as u64])),
        ("m", Value::U64(vec![target.dim() as u64])),
        (
            "target",
            Value::Text(match target {
                Target::Sphere { .. } => "sphere".into(),
                Target::Flat { .. } => "flat".into(),
            }),
        ),
        ("alpha", Value::F64(vec![state.alpha_now()])),
        ("alpha_knots", Value::F64(knots)),
        ("u", Value::F64(state.u.values.clone())),
        ("phi", Value::F64(state.phi.components.concat())),
    ];
    if let Some(r) = target.radius() {
        records.push(("r", Value::F64(vec![r])));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (k, v) in &records {
        push_record(&mut out, k, v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Snapshot("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn count(&mut self, width: usize) -> Result<usize> {
        let c = u64::from_le_bytes(self.array()?);
        let c = usize::try_from(c).map_err(|_| Error::Snapshot("record too large".into()))?;
        if c.saturating_mul(width) > self.bytes.len() - self.pos {
            return Err(Error::Snapshot("record length exceeds data".into()));
        }
        Ok(c)
    }
}

fn parse_records(bytes: &[u8]) -> Result<BTreeMap<String, Value>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(r.array()?);
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let klen = u16::from_le_bytes(r.array()?) as usize;
        let key = std::str::from_utf8(r.take(klen)?)
            .map_err(|_| Error::Snapshot("key is not utf-8".into()))?
            .to_string();
        let tag = r.array::<1>()?[0];
        let value = match tag {
            0 => {
                let c = r.count(8)?;
                Value::F64((0..c).map(|_| r.array().map(f64::from_le_bytes)).collect::<Result<_>>()?)
            }
            1 => {
                let c = r.count(8)?;
                Value::U64((0..c).map(|_| r.array().map(u64::from_le_bytes)).collect::<Result<_>>()?)
            }
            2 => {
                let c = r.count(1)?;
                Value::Text(
                    String::from_utf8(r.take(c)?.to_vec())
                        .map_err(|_| Error::Snapshot("text is not utf-8".into()))?,
                )
            }
            t => return Err(Error::Snapshot(format!("unknown type tag {t}"))),
        };
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Snapshot(format!("duplicate key `{key}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    Ok(map)
}

fn reals<'a>(map: &'a BTreeMap<String, Value>, key: &str, len: Option<usize>) -> Result<&'a [f64]> {
    match map.get(key) {
        Some(Value::F64(v)) if len.is_none_or(|l| l == v.len()) => Ok(v),
        Some(_) => Err(Error::Snapshot(format!("key `{key}` has the wrong type or length"))),
        None => Err(Error::Snapshot(format!("missing key `{key}`"))),
    }
}

fn integer(map: &BTreeMap<String, Value>, key: &str) -> Result<usize> {
    match map.get(key) {
        Some(Value::U64(v)) if v.len() == 1 => {
            usize::try_from(v[0]).map_err(|_| Error::Snapshot(format!("key `{key}` too large")))
        }
        Some(_) => Err(Error::Snapshot(format!("key `{key}` has the wrong type or length"))),
        None => Err(Error::Snapshot(format!("missing key `{key}`"))),
    }
}

pub fn decode(bytes: &[u8]) -> Result<FlowState> {
    let map = parse_records(bytes)?;
    let n = integer(&map, "n")?;
    let m = integer(&map, "m")?;
    let grid = Grid::new(n)?;
    let target = match map.get("target") {
        Some(Value::Text(s)) if s == "sphere" => Target::sphere(m, reals(&map, "r", Some(1))?[0])?,
        Some(Value::Text(s)) if s == "flat" => Target::flat(m)?,
        _ => return Err(Error::Snapshot("missing or unknown `target`".into())),
    };
    let t = reals(&map, "t", Some(1))?[0];
    let g = reals(&map, "g0", Some(3))?;
    let g0 = FlatMetric::new(g[0], g[1], g[2])?;
    let u = reals(&map, "u", Some(grid.len()))?.to_vec();
    let phi = reals(&map, "phi", Some(grid.len() * (m + 1)))?;
    let components = phi.chunks(grid.len()).map(<[f64]>::to_vec).collect();
    let knots = reals(&map, "alpha_knots", None)?;
    if knots.is_empty() || knots.len() % 2 != 0 {
        return Err(Error::Snapshot("`alpha_knots` must hold (t, alpha) pairs".into()));
    }
    let alpha = if knots.len() == 2 {
        AlphaSchedule::constant(knots[1])?
    } else {
        AlphaSchedule::piecewise_linear(knots.chunks(2).map(|p| (p[0], p[1])).collect())?
    };
    let mut state = FlowState::new(
        g0,
        ScalarField::new(grid.clone(), u),
        MapField::new(grid, target, components),
        alpha,
    )?;
    state.t = t;
    Ok(state)
}

pub fn write_snapshot(path: &Path, state: &FlowState) -> Result<()> {
    std::fs::write(path, encode(state))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<FlowState> {
    decode(&std::fs::read(path)?)
}
