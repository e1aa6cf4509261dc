//! One-parameter sweeps over a scenario.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::par;
use crate::sim::{run_scenario, RunMetrics, RunStatus, ScenarioConfig};
use crate::SimError;

/// `path=lo:hi:n`, with `path` a dotted key into the scenario config
/// (array elements by index, e.g. `initial_state.omega.2`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarySpec {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl VarySpec {
    pub fn parse(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidConfig(format!("expected param=lo:hi:n, got `{s}`"));
        let (path, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 || path.trim().is_empty() {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(Self {
            path: path.trim().to_string(),
            lo,
            hi,
            n,
        })
    }

    /// Evenly spaced values from `lo` to `hi` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lo + step * i as f64).collect()
    }
}

/// Copy of `cfg` with the value at `path` replaced.
pub fn with_override(cfg: &ScenarioConfig, path: &str, value: f64) -> Result<ScenarioConfig, SimError> {
    let mut tree = serde_json::to_value(cfg).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut node = &mut tree;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| SimError::InvalidConfig(format!("unknown config key `{path}`")))?;
    }
    if !node.is_number() {
        return Err(SimError::InvalidConfig(format!("`{path}` is not a numeric field")));
    }
    *node = if node.is_u64() || node.is_i64() {
        if value.fract() != 0.0 {
            return Err(SimError::InvalidConfig(format!("`{path}` takes whole numbers")));
        }
        Value::from(value as i64)
    } else {
        Value::from(value)
    };
    let out: ScenarioConfig =
        serde_json::from_value(tree).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub metrics: RunMetrics,
}

/// Build every variant first so a bad path fails before any run starts.
pub fn sweep_configs(cfg: &ScenarioConfig, vary: &VarySpec) -> Result<Vec<(f64, ScenarioConfig)>, SimError> {
    vary.values()
        .into_iter()
        .map(|v| with_override(cfg, &vary.path, v).map(|c| (v, c)))
        .collect()
}

pub fn run_sweep(cfg: &ScenarioConfig, vary: &VarySpec) -> Result<Vec<SweepPoint>, SimError> {
    let configs = sweep_configs(cfg, vary)?;
    par::map(&configs, |(value, c)| {
        run_scenario(c).map(|out| SweepPoint {
            value: *value,
            status: out.status,
            metrics: out.metrics,
        })
    })
    .into_iter()
    .collect()
}

/// `sweep.csv` (one row per value) and `sweep.json`.
pub fn write_sweep(dir: &Path, vary: &VarySpec, points: &[SweepPoint]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = io::BufWriter::new(fs::File::create(dir.join("sweep.csv"))?);
    writeln!(
        w,
        "{},status,settle_time_psi,settle_time_ex,sup_psi,final_ex_norm,tail_max_ex_norm,max_thrust,saturation_fraction,v1_monotone_fraction",
        vary.path
    )?;
    let opt = |o: Option<f64>| o.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
    for p in points {
        let status = match &p.status {
            RunStatus::Completed => "completed",
            RunStatus::Diverged { .. } => "diverged",
            RunStatus::DegenerateThrust { .. } => "degenerate_thrust",
        };
        let m = &p.metrics;
        writeln!(
            w,
            "{},{status},{},{},{},{},{},{},{},{}",
            p.value,
            opt(m.settle_time_psi),
            opt(m.settle_time_ex),
            m.sup_psi,
            m.final_ex_norm,
            m.tail_max_ex_norm,
            m.max_thrust,
            m.saturation_fraction,
            m.v1_monotone_fraction
        )?;
    }
    w.flush()?;
    let json = serde_json::json!({ "vary": vary, "points": points });
    fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&json)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_values() {
        let v = VarySpec::parse("attitude_gains.alpha=10:30:3").unwrap();
        assert_eq!(v.path, "attitude_gains.alpha");
        assert_eq!(v.values(), vec![10.0, 20.0, 30.0]);
        assert!(VarySpec::parse("alpha=1:2").is_err());
        assert!(VarySpec::parse("alpha").is_err());
        assert!(VarySpec::parse("alpha=1:2:0").is_err());
        assert_eq!(VarySpec::parse("a=3:9:1").unwrap().values(), vec![3.0]);
    }

    #[test]
    fn override_reaches_nested_fields() {
        let cfg = ScenarioConfig::scenario_vp();
        let c = with_override(&cfg, "attitude_gains.alpha", 55.0).unwrap();
        assert_eq!(c.attitude_gains.alpha, 55.0);
        let c = with_override(&cfg, "initial_state.omega.2", 6.0).unwrap();
        assert_eq!(c.initial_state.omega.z, 6.0);
        let c = with_override(&cfg, "position_gains.sigma2.b", 9.5).unwrap();
        assert_eq!(c.position_gains.sigma2.b(), 9.5);
        let c = with_override(&cfg, "seed", 7.0).unwrap();
        assert_eq!(c.seed, 7);
        assert!(with_override(&cfg, "attitude_gains.nope", 1.0).is_err());
        assert!(with_override(&cfg, "duration", -1.0).is_err());
        assert!(with_override(&cfg, "name", 1.0).is_err());
    }
}
