use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraShape;
use crate::error::{Result, UlamError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftPath {
    Farah,
    Stone,
}

impl fmt::Display for LiftPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LiftPath::Farah => "farah",
            LiftPath::Stone => "stone",
        })
    }
}

impl FromStr for LiftPath {
    type Err = UlamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "farah" => Ok(LiftPath::Farah),
            "stone" => Ok(LiftPath::Stone),
            _ => Err(UlamError::Config(format!(
                "path must be farah or stone, got {s:?}"
            ))),
        }
    }
}

/// Pipeline and experiment settings; read from `key = value` files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub probes: usize,
    pub width: usize,
    pub max_levels: usize,
    pub max_evals: usize,
    pub probe_pairs: usize,
    pub tol: f64,
    pub grid: f64,
    pub admissible: f64,
    pub farah_constant: f64,
    pub generators: usize,
    pub path: LiftPath,
    /// `None` derives `L` from the budget.
    pub l: Option<f64>,

    pub shape: String,
    pub multiplicities: Vec<usize>,
    pub padding: usize,
    pub eta: f64,
    pub repeats: usize,
    pub kk_tolerance: f64,
    pub tower: String,
    pub tower_matrices: Option<String>,
    pub tower_slack: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            probes: 200,
            width: 256,
            max_levels: 3,
            max_evals: 4096,
            probe_pairs: 16,
            tol: 1e-8,
            grid: 2f64.powi(-32),
            admissible: 0.1,
            farah_constant: 50.0,
            generators: 4,
            path: LiftPath::Farah,
            l: None,
            shape: "2".into(),
            multiplicities: vec![3],
            padding: 0,
            eta: 1e-3,
            repeats: 5,
            kk_tolerance: 0.1,
            tower: "2;4;8".into(),
            tower_matrices: None,
            tower_slack: 3.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| UlamError::Config(format!("bad value {v:?} for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "probes" => self.probes = parse(key, v)?,
            "width" | "M" => self.width = parse(key, v)?,
            "max_levels" => self.max_levels = parse(key, v)?,
            "max_evals" => self.max_evals = parse(key, v)?,
            "probe_pairs" => self.probe_pairs = parse(key, v)?,
            "tol" => self.tol = parse(key, v)?,
            "grid" => self.grid = parse(key, v)?,
            "admissible" => self.admissible = parse(key, v)?,
            "farah_constant" | "K" => self.farah_constant = parse(key, v)?,
            "generators" => self.generators = parse(key, v)?,
            "path" => self.path = v.parse()?,
            "L" | "l" => {
                self.l = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "shape" => {
                AlgebraShape::parse(v)?;
                self.shape = v.into()
            }
            "multiplicities" => self.multiplicities = parse_list(key, v)?,
            "padding" => self.padding = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "kk_tolerance" => self.kk_tolerance = parse(key, v)?,
            "tower" => self.tower = v.into(),
            "tower_matrices" => self.tower_matrices = Some(v.into()),
            "tower_slack" => self.tower_slack = parse(key, v)?,
            _ => return Err(UlamError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                UlamError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| UlamError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(UlamError::Config(m.into()));
        if self.probes == 0 || self.probe_pairs == 0 {
            return bad("probes and probe_pairs must be positive");
        }
        if self.width < 8 {
            return bad("width must be at least 8");
        }
        if !(self.tol > 0.0 && self.grid > 0.0 && self.farah_constant > 0.0) {
            return bad("tol, grid and farah_constant must be positive");
        }
        if !(self.admissible > 0.0 && self.admissible <= 0.1) {
            return bad("admissible must lie in (0, 0.1]");
        }
        if self.generators == 0 {
            return bad("generators must be positive");
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1)");
        }
        if self.l.is_some_and(|l| l <= 0.0) {
            return bad("L must be positive");
        }
        Ok(())
    }

    pub fn algebra_shape(&self) -> Result<AlgebraShape> {
        AlgebraShape::parse(&self.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_file() {
        let c = PipelineConfig::from_text(
            "# comment\nseed = 7\nwidth=64 # inline\npath = stone\nL = 3.5\nshape = 1,2\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.width, 64);
        assert_eq!(c.path, LiftPath::Stone);
        assert_eq!(c.l, Some(3.5));
        assert_eq!(c.algebra_shape().unwrap().blocks(), &[1, 2]);
    }

    #[test]
    fn unknown_key_is_error() {
        let e = PipelineConfig::from_text("widht = 3").unwrap_err();
        assert!(e.to_string().contains("widht"));
        assert!(PipelineConfig::from_text("width").is_err());
        assert!(PipelineConfig::from_text("width = abc").is_err());
        assert!(PipelineConfig::from_text("admissible = 0.5").is_err());
    }
}
