use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveSpec;
use crate::optimizers::{HyperParams, Method, Schedule, ScheduleContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    pub cluster: ClusterConfig,
    pub method: Method,
    pub hyperparams: HyperParams,
    /// Constant `hyperparams.lr_gamma` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(rename = "total_steps_T")]
    pub total_steps_t: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub record_virtual_sequence: bool,
    /// Probe the smoothness every this many steps; 0 disables.
    #[serde(default)]
    pub record_smoothness_every: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Samples (or directions) used when estimating L and σ².
    #[serde(default = "default_probe_budget")]
    pub probe_budget: usize,
}

fn one() -> usize {
    1
}

fn default_probe_budget() -> usize {
    64
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate().map_err(|e| e.within("objective"))?;
        self.cluster
            .validate(self.objective.sample_count)
            .map_err(|e| e.within("cluster"))?;
        self.hyperparams.validate().map_err(|e| e.within("hyperparams"))?;
        self.method.validate().map_err(|e| e.within("method"))?;
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| e.within("schedule"))?;
        }
        if self.total_steps_t == 0 {
            return Err(Error::config("total_steps_T", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        if self.probe_budget == 0 {
            return Err(Error::config("probe_budget", "must be at least 1"));
        }
        if self.record_virtual_sequence {
            if !self.method.has_virtual_sequence() {
                return Err(Error::config(
                    "record_virtual_sequence",
                    format!("{} has no virtual sequence", self.method.name()),
                ));
            }
            if self.schedule.as_ref().is_some_and(|s| !s.is_constant()) {
                return Err(Error::config(
                    "schedule",
                    "theory checks require a constant learning rate",
                ));
            }
        }
        Ok(())
    }

    pub fn schedule_context(&self) -> ScheduleContext {
        ScheduleContext {
            workers_k: self.cluster.workers_k,
            local_batch_b: self.cluster.local_batch_b,
            sample_count: self.objective.sample_count,
            total_steps: self.total_steps_t,
        }
    }

    pub fn lr_at(&self, t: usize) -> f64 {
        match &self.schedule {
            Some(s) => s.lr_at(t, &self.schedule_context()),
            None => self.hyperparams.lr_gamma,
        }
    }

    /// Hyperparameters with `lr_gamma` set to the rate actually in force,
    /// for theory checks under a constant schedule.
    pub fn effective_hyperparams(&self) -> HyperParams {
        let mut hp = self.hyperparams.clone();
        hp.lr_gamma = self.lr_at(0);
        hp
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(s).map_err(|e| Error::config("config", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Parses `path`, applies `key=value` overrides, then validates.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::config("config", e.to_string()))?;
        apply_overrides(&mut value, overrides)?;
        let cfg = Self::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits `key=value`. The value is read as JSON when it parses, otherwise
/// as a string.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| Error::config(raw, "override must look like KEY=VALUE"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(raw, "empty override key"));
    }
    let value = serde_json::from_str(val.trim()).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.to_string(), value))
}

/// Sets the dotted `path` inside `root`, creating missing object keys.
/// Numeric segments index arrays.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::config(path, format!("'{seg}' is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(path, format!("index {idx} out of range for length {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::config(
                    path,
                    format!("'{}' is not an object", segments[..i].join(".")),
                ))
            }
        };
    }
    Ok(())
}

pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<()> {
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        set_path(root, &key, value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_and_replace() {
        let mut v = json!({"hyperparams": {"lr_gamma": 0.1}, "xs": [1, 2]});
        apply_overrides(
            &mut v,
            &[
                "hyperparams.lr_gamma=0.2".into(),
                "hyperparams.inner_lr_gamma_hat=0.01".into(),
                "xs.1=5".into(),
                "name=abc".into(),
            ],
        )
        .unwrap();
        assert_eq!(
            v,
            json!({"hyperparams": {"lr_gamma": 0.2, "inner_lr_gamma_hat": 0.01}, "xs": [1, 5], "name": "abc"})
        );
    }

    #[test]
    fn override_through_scalar_fails() {
        let mut v = json!({"a": 1});
        assert!(apply_overrides(&mut v, &["a.b=2".into()]).is_err());
        assert!(apply_overrides(&mut v, &["novalue".into()]).is_err());
    }
}
