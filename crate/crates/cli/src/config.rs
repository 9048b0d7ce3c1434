//! Run configuration files: TOML with `[env]`, `[bgps]`, `[ppo]` sections.
//! Every key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linkswim::env::EnvConfig;
use linkswim::fsio::write_atomic;
use linkswim::rl::{BgpsConfig, PpoConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::exit::UsageError;

pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Run directory; defaults to a name derived from the settings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub bgps: BgpsConfig,
    pub ppo: PpoConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| UsageError(format!("[env] {e}")))?;
        self.bgps.validate().map_err(|e| UsageError(format!("[bgps] {e}")))?;
        self.ppo.validate().map_err(|e| UsageError(format!("[ppo] {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serialises to TOML")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(RESOLVED_CONFIG_FILE), self.to_toml().as_bytes())?;
        Ok(())
    }
}

/// Reads a TOML table from `path` (or starts empty) and applies
/// `section.key=value` overrides before deserialising into `T`.
pub fn load_with_overrides<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            text.parse::<toml::Table>().map_err(|e| UsageError(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let what = path.map_or_else(|| "configuration".to_string(), |p| p.display().to_string());
    T::deserialize(toml::Value::Table(table)).map_err(|e| UsageError(format!("{what}: {e}")).into())
}

/// `a.b.c=value`, where `value` is parsed as a TOML value and falls back to a
/// plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!(UsageError(format!("override '{spec}' is not of the form key=value")));
    };
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!(UsageError(format!("override '{spec}' has an empty key")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| UsageError(format!("override '{spec}': '{part}' is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c: RunConfig = load_with_overrides(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c: RunConfig = load_with_overrides(
            None,
            &["env.swimmer=high-re".into(), "bgps.action_range=0.3".into(), "ppo.hidden=[32, 32]".into()],
        )
        .unwrap();
        assert_eq!(c.env.swimmer, linkswim::swimmer::SwimmerKind::HighRe);
        assert_eq!(c.bgps.action_range, 0.3);
        assert_eq!(c.ppo.hidden, vec![32, 32]);
        let err = load_with_overrides::<RunConfig>(None, &["ppo.learnin_rate=0.1".into()]).unwrap_err();
        assert!(err.to_string().contains("learnin_rate"), "{err}");
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.env.dt = 0.05;
        c.ppo.seed = 7;
        c.env.low_re.lateral_ratio = 3.0;
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
