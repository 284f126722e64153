//! Run manifests: configuration snapshot, seed, version, timing and metrics.
//!
//! A manifest is itself a valid config file; metadata keys are skipped when
//! it is parsed back as one.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::parse_key_values;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub kind: String,
    pub version: String,
    pub seed: u64,
    /// Configuration keys (excluding `seed`), in emission order.
    pub config: Vec<(String, String)>,
    pub wall_time_s: f64,
    pub metrics: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(kind: &str, seed: u64, config: Vec<(String, String)>) -> Self {
        Self {
            kind: kind.to_string(),
            version: crate::VERSION.to_string(),
            seed,
            config: config.into_iter().filter(|(k, _)| k != "seed").collect(),
            wall_time_s: 0.0,
            metrics: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: impl ToString) {
        self.metrics.push((name.to_string(), value.to_string()));
    }

    pub fn get_metric(&self, name: &str) -> Option<&str> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = format!("kind = {}\nversion = {}\nseed = {}\n", self.kind, self.version, self.seed);
        for (k, v) in &self.config {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("wall_time_s = {}\n", self.wall_time_s));
        for (k, v) in &self.metrics {
            out.push_str(&format!("metric.{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = parse_key_values(text)?;
        let mut take = |k: &str| map.remove(k).ok_or_else(|| Error::Config(format!("manifest lacks '{k}'")));
        let kind = take("kind")?;
        let version = take("version")?;
        let seed = take("seed")?
            .parse()
            .map_err(|_| Error::Config("manifest seed is not a u64".into()))?;
        let wall_time_s = take("wall_time_s")?
            .parse()
            .map_err(|_| Error::Config("bad wall_time_s".into()))?;
        // Keep the emission order of the original text.
        let order: Vec<String> = text
            .lines()
            .filter_map(|l| l.split('#').next()?.split_once('=').map(|(k, _)| k.trim().to_string()))
            .collect();
        let mut config = Vec::new();
        let mut metrics = Vec::new();
        for k in order {
            if let Some(v) = map.remove(&k) {
                match k.strip_prefix("metric.") {
                    Some(m) => metrics.push((m.to_string(), v)),
                    None => config.push((k, v)),
                }
            }
        }
        Ok(Self {
            kind,
            version,
            seed,
            config,
            wall_time_s,
            metrics,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    /// The configuration part as `key = value` text, seed included.
    pub fn config_text(&self) -> String {
        let mut out = format!("seed = {}\n", self.seed);
        for (k, v) in &self.config {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = RunManifest::new(
            "shapes-train",
            9,
            vec![("loss".into(), "mse".into()), ("seed".into(), "9".into()), ("lr".into(), "0.001".into())],
        );
        m.wall_time_s = 1.25;
        m.metric("final_quality", 5.5);
        let back = RunManifest::parse(&m.render()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get_metric("final_quality"), Some("5.5"));
        assert_eq!(back.config_text(), "seed = 9\nloss = mse\nlr = 0.001\n");
        assert!(RunManifest::parse("kind = x\n").is_err());
    }
}
