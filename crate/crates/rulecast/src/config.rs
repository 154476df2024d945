//! Run configuration: defaults, a key=value config file, and flag overrides
//! (flags win). Every report echoes the effective configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::eval::TiePolicy;
use crate::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Interpret dataset tokens as dense integer ids instead of labels.
    pub id_mode: bool,
    /// Time window W for frequency features and example collection.
    pub window: u32,
    /// Smoothing constant 𝒫 added to confidence denominators.
    pub psmooth: f64,
    /// Number of top confidences entering the noisy-or aggregation.
    pub top_h: usize,
    /// Decay applied to the i-th best confidence as decay^i.
    pub decay: f64,
    /// How many frequent constants feed c-rule enumeration.
    pub top_constants: usize,
    /// Minimum example count for xy/c candidate admission.
    pub min_support: u64,
    /// Peak-confidence floor below which rules are dropped.
    pub floor: f64,
    pub tie_policy: TiePolicy,
    /// 0 = use all cores.
    pub threads: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: PathBuf::new(),
            valid: PathBuf::new(),
            test: PathBuf::new(),
            id_mode: false,
            window: 50,
            psmooth: 10.0,
            top_h: 5,
            decay: 0.9,
            top_constants: 100,
            min_support: 5,
            floor: 0.001,
            tie_policy: TiePolicy::Average,
            threads: 0,
            seed: 0,
        }
    }
}

impl Config {
    /// Applies one `key = value` pair; file parsing and flag overrides both
    /// funnel through here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let bad = |what: &str| Error::Config(format!("invalid value `{value}` for {what}"));
        match key {
            "train" => self.train = PathBuf::from(value),
            "valid" => self.valid = PathBuf::from(value),
            "test" => self.test = PathBuf::from(value),
            "id_mode" => self.id_mode = value.parse().map_err(|_| bad("id_mode"))?,
            "window" => self.window = value.parse().map_err(|_| bad("window"))?,
            "psmooth" => self.psmooth = value.parse().map_err(|_| bad("psmooth"))?,
            "top_h" => self.top_h = value.parse().map_err(|_| bad("top_h"))?,
            "decay" => self.decay = value.parse().map_err(|_| bad("decay"))?,
            "top_constants" => {
                self.top_constants = value.parse().map_err(|_| bad("top_constants"))?
            }
            "min_support" => self.min_support = value.parse().map_err(|_| bad("min_support"))?,
            "floor" => self.floor = value.parse().map_err(|_| bad("floor"))?,
            "tie_policy" => self.tie_policy = value.parse()?,
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a `key = value` config file; `#` starts a comment.
    pub fn apply_file(&mut self, contents: &str) -> Result<(), Error> {
        for (lineno, raw) in contents.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.psmooth < 0.0 {
            return Err(Error::Config("psmooth must be >= 0".into()));
        }
        if self.top_h < 1 {
            return Err(Error::Config("top_h must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::Config("decay must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// The effective configuration as a flat map, for report echoing.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn as_key_values(&self) -> BTreeMap<String, String> {
        match self.echo() {
            serde_json::Value::Object(map) => map
                .into_iter()
                .map(|(k, v)| (k, v.to_string().trim_matches('"').to_string()))
                .collect(),
            _ => BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_override() {
        let mut c = Config::default();
        c.apply_file("window = 30\npsmooth = 5 # comment\n\n")
            .unwrap();
        assert_eq!(c.window, 30);
        assert_eq!(c.psmooth, 5.0);
        c.set("window", "100").unwrap();
        assert_eq!(c.window, 100);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Config::default();
        assert!(c.set("decay", "1.5").is_ok());
        assert!(c.validate().is_err());
        assert!(c.set("window", "abc").is_err());
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.apply_file("no equals sign").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        assert!(Config::default().validate().is_ok());
    }
}
