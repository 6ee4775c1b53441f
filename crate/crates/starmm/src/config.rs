//! Flat `key = value` configuration files and the experiment spec they
//! describe. The schema is documented in `docs/config.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use starmm_core::estimator::{EstimatorConfig, JStarRule};
use starmm_core::expfam::FamilyKind;
use starmm_core::tree::PathCheck;

use crate::error::{Error, Result};
use crate::sets::SetKind;

/// Parsed `key = value` pairs, remembering the line of each key.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    source: String,
}

impl KeyValues {
    /// `#` starts a comment line; blank lines are ignored; keys may not repeat.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "{source}:{}: expected key=value, found {line:?}",
                    i + 1
                ))
            })?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::config(format!("{source}:{}: empty key", i + 1)));
            }
            if entries
                .insert(k.clone(), (v.trim().to_string(), i + 1))
                .is_some()
            {
                return Err(Error::config(format!(
                    "{source}:{}: duplicate key {k}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    /// Missing files are config errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn where_(&self, line: usize) -> String {
        if line == 0 {
            "command line".to_string()
        } else {
            format!("{}:{line}", self.source)
        }
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                Error::config(format!(
                    "{}: invalid value {v:?} for {key}",
                    self.where_(line)
                ))
            }),
        }
    }

    fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(Error::config(format!(
                "{}: unknown key {k}",
                self.where_(*line)
            ))),
        }
    }
}

/// Truth vectors for the Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    /// `θ₀·1`.
    Constant(f64),
    /// A fresh random member per replicate.
    Random,
    /// Rows of a CSV file; the row of length `n` is used for dimension `n`.
    Csv(PathBuf),
}

/// Which local entropy feeds `J*` and the tree's cardinality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyChoice {
    Analytic,
    Estimated,
}

/// A Monte Carlo risk experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub family: FamilyKind,
    pub m: f64,
    pub set: SetKind,
    /// Strictly increasing dimensions.
    pub ns: Vec<usize>,
    pub truth: Truth,
    pub replicates: usize,
    /// Base seed: the cloud and tree use it directly, replicate `i` uses
    /// `seed + i`.
    pub seed: u64,
    pub estimator: EstimatorConfig,
    pub entropy: EntropyChoice,
    /// Worker threads, `0` for all cores. Never changes results.
    pub threads: usize,
    pub out: Option<PathBuf>,
    /// `false` writes zero runtimes so output files are byte-reproducible.
    pub timing: bool,
}

/// `off`, `exhaustive` or `sampled:N`.
pub fn parse_verify(s: &str) -> Option<Option<PathCheck>> {
    match s {
        "off" | "none" => Some(None),
        "exhaustive" => Some(Some(PathCheck::Exhaustive)),
        _ => s
            .strip_prefix("sampled:")
            .and_then(|n| n.parse().ok())
            .map(|n| Some(PathCheck::Sampled(n))),
    }
}

pub fn verify_name(v: Option<PathCheck>) -> String {
    match v {
        None => "off".into(),
        Some(PathCheck::Exhaustive) => "exhaustive".into(),
        Some(PathCheck::Sampled(n)) => format!("sampled:{n}"),
    }
}

fn parse_on_off(key: &str, s: &str) -> Result<bool> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::config(format!("{key} must be on or off, got {s:?}"))),
    }
}

impl ExperimentSpec {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self> {
        let family_tag: String = kv.take_or("family", "bernoulli".to_string())?;
        let family = FamilyKind::parse(&family_tag)
            .ok_or_else(|| Error::config(format!("unknown family {family_tag:?}")))?;
        let m: f64 = kv.take_or("M", 1.0)?;
        let set_tag: String = kv.take_or("set", "monotone".to_string())?;
        let q: usize = kv.take_or("q", 1)?;
        let resolution: f64 = kv.take_or("segment_resolution", 1e-3)?;
        let set = SetKind::parse(&set_tag, q, resolution)?;
        let ns_text: String = kv
            .take("n")
            .map(|v| v.0)
            .ok_or_else(|| Error::config("missing required key n"))?;
        let ns = ns_text
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| {
                Error::config(format!(
                    "n must be a comma-separated list of integers, got {ns_text:?}"
                ))
            })?;
        let truth_tag: String = kv.take_or("truth", "random".to_string())?;
        let truth_value: Option<f64> = kv.take_parsed("truth_value")?;
        let truth_file: Option<String> = kv.take_parsed("truth_file")?;
        let truth = match truth_tag.as_str() {
            "random" => Truth::Random,
            "constant" => Truth::Constant(truth_value.unwrap_or(0.0)),
            "csv" => Truth::Csv(
                truth_file
                    .ok_or_else(|| Error::config("truth=csv needs truth_file"))?
                    .into(),
            ),
            other => return Err(Error::config(format!("unknown truth {other:?}"))),
        };
        let replicates = kv.take_or("replicates", 200)?;
        let seed = kv.take_or("seed", 0u64)?;

        let mut est = EstimatorConfig {
            seed,
            budget: 1000,
            verify: None,
            ..EstimatorConfig::default()
        };
        est.big_c = kv.take_or("C", est.big_c)?;
        est.c = kv.take_parsed("c")?;
        est.kappa = kv.take_parsed("kappa")?;
        est.jstar_override = kv.take_parsed("jstar")?;
        est.steps = kv.take_parsed("steps")?;
        est.extra_steps = kv.take_or("extra_steps", 0)?;
        let rule: String = kv.take_or("rule", "2c".to_string())?;
        est.rule = JStarRule::parse(&rule)
            .ok_or_else(|| Error::config(format!("unknown rule {rule:?}")))?;
        est.budget = kv.take_or("budget", est.budget)?;
        est.node_cap = kv.take_or("node_cap", est.node_cap)?;
        est.probes = kv.take_or("probes", est.probes)?;
        est.grid_size = kv.take_or("grid_size", est.grid_size)?;
        if let Some(v) = kv.take("verify") {
            est.verify = parse_verify(&v.0).ok_or_else(|| {
                Error::config(format!(
                    "verify must be off, exhaustive or sampled:N, got {:?}",
                    v.0
                ))
            })?;
        }
        let entropy = match kv.take("entropy").map(|v| v.0).as_deref() {
            None | Some("analytic") => EntropyChoice::Analytic,
            Some("estimated") => EntropyChoice::Estimated,
            Some(other) => return Err(Error::config(format!("unknown entropy {other:?}"))),
        };
        let threads = kv.take_or("threads", 0)?;
        let out = kv.take_parsed::<String>("out")?.map(PathBuf::from);
        let timing = match kv.take("timing") {
            Some(v) => parse_on_off("timing", &v.0)?,
            None => true,
        };
        kv.finish()?;
        let spec = Self {
            family,
            m,
            set,
            ns,
            truth,
            replicates,
            seed,
            estimator: est,
            entropy,
            threads,
            out,
            timing,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(Error::config("n list is empty"));
        }
        if self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n list must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::config("M must be positive"));
        }
        self.estimator
            .validate()
            .map_err(|e| Error::config(e.to_string()))
    }

    /// Canonical `key=value` lines of the fully resolved spec, sorted by key.
    pub fn to_key_values(&self) -> String {
        let e = &self.estimator;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "default".into());
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("family", self.family.name().into());
        kv.insert("M", self.m.to_string());
        kv.insert("set", self.set.tag().into());
        match self.set {
            SetKind::Monotone { q } => {
                kv.insert("q", q.to_string());
            }
            SetKind::Segment { resolution } => {
                kv.insert("segment_resolution", resolution.to_string());
            }
            SetKind::Singleton => {}
        }
        kv.insert(
            "n",
            self.ns
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        match &self.truth {
            Truth::Random => {
                kv.insert("truth", "random".into());
            }
            Truth::Constant(v) => {
                kv.insert("truth", "constant".into());
                kv.insert("truth_value", v.to_string());
            }
            Truth::Csv(p) => {
                kv.insert("truth", "csv".into());
                kv.insert("truth_file", p.display().to_string());
            }
        }
        kv.insert("replicates", self.replicates.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("C", e.big_c.to_string());
        kv.insert("c", opt(e.c.map(|c| c.to_string())));
        kv.insert("kappa", opt(e.kappa.map(|k| k.to_string())));
        kv.insert("jstar", opt(e.jstar_override.map(|j| j.to_string())));
        kv.insert("steps", opt(e.steps.map(|s| s.to_string())));
        kv.insert("extra_steps", e.extra_steps.to_string());
        kv.insert("rule", e.rule.name().into());
        kv.insert("budget", e.budget.to_string());
        kv.insert("node_cap", e.node_cap.to_string());
        kv.insert("probes", e.probes.to_string());
        kv.insert("grid_size", e.grid_size.to_string());
        kv.insert("verify", verify_name(e.verify));
        kv.insert(
            "entropy",
            match self.entropy {
                EntropyChoice::Analytic => "analytic",
                EntropyChoice::Estimated => "estimated",
            }
            .into(),
        );
        kv.insert("timing", if self.timing { "on" } else { "off" }.into());
        kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<ExperimentSpec> {
        ExperimentSpec::from_key_values(KeyValues::parse(text, "t")?)
    }

    #[test]
    fn defaults_and_overrides() {
        let s = spec("n = 16, 32,64,128\n# comment\nseed=5\nextra_steps=2\ntiming=off\n").unwrap();
        assert_eq!(s.ns, vec![16, 32, 64, 128]);
        assert_eq!(s.set, SetKind::Monotone { q: 1 });
        assert_eq!(s.family, FamilyKind::Bernoulli);
        assert_eq!((s.seed, s.estimator.seed), (5, 5));
        assert_eq!(s.estimator.extra_steps, 2);
        assert_eq!(s.estimator.c(), 16.0);
        assert!(!s.timing);
        assert_eq!(s.truth, Truth::Random);
    }

    #[test]
    fn resolved_config_reparses_to_the_same_spec() {
        let s = spec("n=4,9\nset=monotone\nq=2\nkappa=0.5\nverify=exhaustive\ntruth=constant\ntruth_value=0.25\n").unwrap();
        let text: String = s
            .to_key_values()
            .lines()
            .filter(|l| !l.ends_with("=default"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(spec(&text).unwrap(), s);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for bad in [
            "n=32,16",
            "n=16\nreplicates=0",
            "seed=1",
            "n=16\nfoo=1",
            "n=16\nn=32",
            "n=16\nC=2",
            "n=16\nverify=maybe",
            "n=16\ntruth=csv",
            "n=16\nfamily=poisson",
            "just words",
        ] {
            let e = spec(bad).unwrap_err();
            assert_eq!(e.code(), "E_CONFIG", "{bad}");
        }
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let e = ExperimentSpec::load(Path::new("/nonexistent/missing-file.cfg")).unwrap_err();
        assert_eq!(e.code(), "E_CONFIG");
        assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG);
    }
}
