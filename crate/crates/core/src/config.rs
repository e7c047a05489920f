//! Flat `key = value` run configuration.
//!
//! Lists are comma-separated reals; `#` starts a comment. Every key in
//! [`KEYS`] may also be passed on the command line as `--key value`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{ExtendedField, Nonlinearity};
use crate::periodic::{HumpString, SearchOptions, SeedSweep};
use crate::weights::WeightSpec;

/// Recognised keys, in the order they are documented.
pub const KEYS: &[&str] = &[
    "weight.kind",
    "weight.period",
    "weight.mu",
    "weight.freq",
    "weight.points",
    "nonlinearity.kind",
    "nonlinearity.params",
    "k",
    "friction",
    "integration_tol",
    "newton_tol",
    "dedup_tol",
    "band",
    "max_iter",
    "seed.amplitudes",
    "seed.ratios",
    "seed.nodes_per_hump",
    "strings",
    "r",
    "big_r",
    "csv_stride",
    "output_dir",
    "workers",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    /// `sin` or `table`.
    pub kind: String,
    pub period: f64,
    pub mu: f64,
    pub freq: f64,
    /// Flattened `(t, a)` breakpoints for `table`.
    pub points: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityConfig {
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub weight: WeightConfig,
    pub nonlinearity: NonlinearityConfig,
    pub k: u32,
    pub friction: f64,
    pub integration_tol: f64,
    pub newton_tol: f64,
    pub dedup_tol: f64,
    pub band: f64,
    pub max_iter: usize,
    pub amplitudes: Vec<f64>,
    pub ratios: Vec<f64>,
    pub nodes_per_hump: usize,
    /// Target strings; all nonzero ones when empty.
    pub strings: Vec<String>,
    pub r: Option<f64>,
    pub big_r: Option<f64>,
    /// CSV sample spacing; `kT / 2000` when unset.
    pub csv_stride: Option<f64>,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses the default pool. Does not affect results.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweep = SeedSweep::default();
        Self {
            weight: WeightConfig { kind: "sin".into(), period: 1.0, mu: 10.0, freq: 1.0, points: Vec::new() },
            nonlinearity: NonlinearityConfig { kind: "power".into(), params: vec![3.0] },
            k: 1,
            friction: 0.0,
            integration_tol: 1e-10,
            newton_tol: 1e-9,
            dedup_tol: 1e-6,
            band: 0.05,
            max_iter: 40,
            amplitudes: sweep.amplitudes,
            ratios: sweep.ratios,
            nodes_per_hump: sweep.nodes_per_hump,
            strings: Vec::new(),
            r: None,
            big_r: None,
            csv_stride: None,
            output_dir: None,
            workers: 0,
        }
    }
}

/// Parses `key = value` lines into a map, rejecting unknown keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", no + 1)));
        }
        let value = value.trim().trim_matches('"');
        out.insert(key.to_string(), value.to_string());
    }
    Ok(out)
}

fn real(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: '{v}' is not a nonnegative integer")))
}

fn reals(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| real(key, s)).collect()
}

fn optional(key: &str, v: &str) -> Result<Option<f64>> {
    match v.trim() {
        "" | "auto" => Ok(None),
        s => real(key, s).map(Some),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "weight.kind" => self.weight.kind = v.trim().to_string(),
            "weight.period" => self.weight.period = real(key, v)?,
            "weight.mu" => self.weight.mu = real(key, v)?,
            "weight.freq" => self.weight.freq = real(key, v)?,
            "weight.points" => self.weight.points = reals(key, v)?,
            "nonlinearity.kind" => self.nonlinearity.kind = v.trim().to_string(),
            "nonlinearity.params" => self.nonlinearity.params = reals(key, v)?,
            "k" => self.k = int(key, v)?,
            "friction" => self.friction = real(key, v)?,
            "integration_tol" => self.integration_tol = real(key, v)?,
            "newton_tol" => self.newton_tol = real(key, v)?,
            "dedup_tol" => self.dedup_tol = real(key, v)?,
            "band" => self.band = real(key, v)?,
            "max_iter" => self.max_iter = int(key, v)?,
            "seed.amplitudes" => self.amplitudes = reals(key, v)?,
            "seed.ratios" => self.ratios = reals(key, v)?,
            "seed.nodes_per_hump" => self.nodes_per_hump = int(key, v)?,
            "strings" => {
                self.strings = v.split_whitespace().map(str::to_string).collect();
            }
            "r" => self.r = optional(key, v)?,
            "big_r" => self.big_r = optional(key, v)?,
            "csv_stride" => self.csv_stride = optional(key, v)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(v.trim())),
            "workers" => self.workers = int(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Defaults overlaid with `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply(&parse_pairs(text)?)?;
        Ok(c)
    }

    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// The `key = value` rendering that [`RunConfig::parse`] reads back.
    pub fn render(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:?}"));
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("weight.kind", self.weight.kind.clone());
        line("weight.period", format!("{:?}", self.weight.period));
        line("weight.mu", format!("{:?}", self.weight.mu));
        line("weight.freq", format!("{:?}", self.weight.freq));
        line("weight.points", list(&self.weight.points));
        line("nonlinearity.kind", self.nonlinearity.kind.clone());
        line("nonlinearity.params", list(&self.nonlinearity.params));
        line("k", self.k.to_string());
        line("friction", format!("{:?}", self.friction));
        line("integration_tol", format!("{:?}", self.integration_tol));
        line("newton_tol", format!("{:?}", self.newton_tol));
        line("dedup_tol", format!("{:?}", self.dedup_tol));
        line("band", format!("{:?}", self.band));
        line("max_iter", self.max_iter.to_string());
        line("seed.amplitudes", list(&self.amplitudes));
        line("seed.ratios", list(&self.ratios));
        line("seed.nodes_per_hump", self.nodes_per_hump.to_string());
        line("strings", self.strings.join(" "));
        line("r", opt(self.r));
        line("big_r", opt(self.big_r));
        line("csv_stride", opt(self.csv_stride));
        if let Some(d) = &self.output_dir {
            line("output_dir", d.display().to_string());
        }
        line("workers", self.workers.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("integration_tol", self.integration_tol),
            ("newton_tol", self.newton_tol),
            ("dedup_tol", self.dedup_tol),
            ("band", self.band),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.weight.mu > 0.0) {
            return bad(format!("weight.mu must be positive, got {}", self.weight.mu));
        }
        if !(self.friction >= 0.0) || !self.friction.is_finite() {
            return bad(format!("friction must be nonnegative, got {}", self.friction));
        }
        if self.max_iter == 0 || self.nodes_per_hump < 8 {
            return bad("max_iter must be positive and seed.nodes_per_hump at least 8".into());
        }
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|a| !(*a > 0.0)) {
            return bad("seed.amplitudes must be a nonempty list of positive reals".into());
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("seed.ratios must lie in (0, 1)".into());
        }
        for (name, v) in [("r", self.r), ("big_r", self.big_r), ("csv_stride", self.csv_stride)] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    return bad(format!("{name} must be positive, got {x}"));
                }
            }
        }
        if let (Some(r), Some(big)) = (self.r, self.big_r) {
            if !(big > r) {
                return bad(format!("big_r = {big} must exceed r = {r}"));
            }
        }
        self.weight_spec()?;
        self.nonlinearity()?;
        self.target_strings()?;
        Ok(())
    }

    pub fn weight_spec(&self) -> Result<WeightSpec> {
        let w = &self.weight;
        match w.kind.as_str() {
            "sin" => WeightSpec::sin(w.period, w.freq, w.mu),
            "table" => {
                if w.points.len() % 2 != 0 {
                    return Err(Error::Config("weight.points must hold (t, a) pairs".into()));
                }
                WeightSpec::table(w.period, w.points.chunks(2).map(|c| (c[0], c[1])).collect(), w.mu)
            }
            other => Err(Error::Config(format!("unknown weight.kind '{other}' (expected sin or table)"))),
        }
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Nonlinearity::from_params(&self.nonlinearity.kind, &self.nonlinearity.params)
    }

    pub fn field(&self) -> Result<ExtendedField> {
        Ok(ExtendedField::new(self.nonlinearity()?, self.weight_spec()?).with_friction(self.friction))
    }

    fn target_strings(&self) -> Result<Vec<HumpString>> {
        self.strings
            .iter()
            .map(|s| HumpString::parse(s).ok_or_else(|| Error::Config(format!("strings: cannot parse '{s}'"))))
            .collect()
    }

    pub fn search_options(&self) -> Result<SearchOptions> {
        Ok(SearchOptions {
            k: self.k,
            integration_tol: self.integration_tol,
            newton_tol: self.newton_tol,
            max_iter: self.max_iter,
            dedup_tol: self.dedup_tol,
            band: self.band,
            r_override: self.r,
            big_r_override: self.big_r,
            sweep: SeedSweep {
                amplitudes: self.amplitudes.clone(),
                ratios: self.ratios.clone(),
                nodes_per_hump: self.nodes_per_hump,
            },
            strings: self.target_strings()?,
        })
    }

    pub fn csv_stride(&self) -> f64 {
        self.csv_stride.unwrap_or(self.k as f64 * self.weight.period / 2000.0)
    }

    /// `a(t) = sin(6πt)`, `T = 1`, `μ = 10`, `g(s) = 400 s atan s`, `k = 1`.
    pub fn fig1() -> Self {
        Self {
            weight: WeightConfig { kind: "sin".into(), period: 1.0, mu: 10.0, freq: 3.0, points: Vec::new() },
            nonlinearity: NonlinearityConfig { kind: "atan".into(), params: vec![400.0] },
            k: 1,
            ..Self::default()
        }
    }

    /// `a(t) = sin t`, `T = 2π`, `μ = 6`, `g(s) = 100(s² + s³)`, `k = 2`.
    pub fn fig2() -> Self {
        Self {
            weight: WeightConfig {
                kind: "sin".into(),
                period: 2.0 * std::f64::consts::PI,
                mu: 6.0,
                freq: 1.0,
                points: Vec::new(),
            },
            nonlinearity: NonlinearityConfig { kind: "polymix".into(), params: vec![100.0, 100.0] },
            k: 2,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::fig1()),
            "fig2" => Ok(Self::fig2()),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected fig1 or fig2)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        for c in [RunConfig::fig1(), RunConfig::fig2()] {
            assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
        }
    }

    #[test]
    fn parses_lists_and_comments() {
        let c = RunConfig::parse("k = 2 # order\nnonlinearity.kind = polymix\nnonlinearity.params = 1, 2.5\nr = auto\n").unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.nonlinearity.params, vec![1.0, 2.5]);
        assert_eq!(c.r, None);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("colour = red"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("k = two"), Err(Error::Config(_))));
        assert!(RunConfig::parse("k = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("newton_tol = -1").unwrap().validate().is_err());
        assert!(RunConfig::parse("weight.mu = 0").unwrap().validate().is_err());
        assert!(RunConfig::parse("weight.kind = cos").unwrap().validate().is_err());
    }
}
