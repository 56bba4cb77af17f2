//! Run configuration: a flat `key = value` file plus overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{ProgramParams, SimConfig, DEFAULT_EPSILON};
use crate::costmodel::CostParams;
use crate::crossbar::{AdcModel, AdcResolution};
use crate::engine::EngineOptions;
use crate::program::Program;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{key}: {reason}")]
    Value { key: String, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub program: Program,
    pub dataset: Option<PathBuf>,
    /// Tiling shape; `None` takes the value from a preprocessed input, or
    /// the default (8, 32, 64, single block).
    pub c: Option<usize>,
    pub n: Option<usize>,
    pub g: Option<usize>,
    pub b: Option<usize>,
    pub damping: f64,
    pub epsilon: f64,
    /// `None` means the program default (100 for PageRank, one pass for
    /// SpMV, V + 1 for BFS/SSSP).
    pub max_iter: Option<u64>,
    pub source: u32,
    pub workers: usize,
    pub skip_empty: bool,
    /// Seed for generated inputs (the SpMV vector).
    pub seed: u64,
    pub scale_by_outdegree: bool,
    /// ADC output bits; `None` is an exact converter.
    pub adc_bits: Option<u8>,
    pub cost: CostParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            program: Program::PageRank,
            dataset: None,
            c: None,
            n: None,
            g: None,
            b: None,
            damping: 0.85,
            epsilon: DEFAULT_EPSILON,
            max_iter: None,
            source: 0,
            workers: 1,
            skip_empty: true,
            seed: 0,
            scale_by_outdegree: true,
            adc_bits: None,
            cost: CostParams::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match value {
        "auto" | "none" | "" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

impl RunConfig {
    /// Apply one `key = value` setting. Cost constants may be given bare or
    /// with a `cost.` prefix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "program" => self.program = parse_value(key, value)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "C" | "c" => self.c = parse_opt(key, value)?,
            "N" | "n" => self.n = parse_opt(key, value)?,
            "G" | "g" => self.g = parse_opt(key, value)?,
            "B" | "b" => self.b = parse_opt(key, value)?,
            "r" | "damping" => self.damping = parse_value(key, value)?,
            "eps" | "epsilon" => self.epsilon = parse_value(key, value)?,
            "max_iter" => self.max_iter = parse_opt(key, value)?,
            "src" | "source" => self.source = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            "skip_empty" => self.skip_empty = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "scale_by_outdegree" => self.scale_by_outdegree = parse_value(key, value)?,
            "adc_bits" => self.adc_bits = parse_opt(key, value)?,
            other => {
                let name = other.strip_prefix("cost.").unwrap_or(other);
                if !CostParams::KEYS.contains(&name) {
                    return Err(ConfigError::UnknownKey(other.to_string()));
                }
                self.cost.set(name, value).map_err(|reason| ConfigError::Value {
                    key: other.to_string(),
                    reason,
                })?;
            }
        }
        Ok(())
    }

    /// Apply every setting of a `key = value` text. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| ConfigError::Syntax {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [("C", self.c), ("N", self.n), ("G", self.g), ("B", self.b)] {
            if v == Some(0) {
                return invalid(format!("{name} must be positive"));
            }
        }
        if self.program == Program::PageRank && !(self.damping > 0.0 && self.damping < 1.0) {
            return invalid(format!("damping {} must lie in (0, 1)", self.damping));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return invalid(format!("epsilon {} must be non-negative", self.epsilon));
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1".into());
        }
        if let Some(bits) = self.adc_bits {
            if !(1..=32).contains(&bits) {
                return invalid(format!("adc_bits {bits} must be in 1..=32"));
            }
        }
        self.cost.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            workers: self.workers,
            skip_empty: self.skip_empty,
            adc: AdcModel {
                resolution: self.adc_bits.map_or(AdcResolution::Exact, AdcResolution::Bits),
                rate_gsps: self.cost.adc_rate_gsps,
            },
        }
    }

    /// Hardware shape with unset fields filled from `fallback`.
    pub fn sim_config(&self, fallback: Option<(usize, usize, usize, usize)>) -> SimConfig {
        let d = SimConfig::default();
        let (fc, fn_, fg, fb) = match fallback {
            Some((c, n, g, b)) => (c, n, g, Some(b)),
            None => (d.c, d.n, d.g, None),
        };
        SimConfig {
            c: self.c.unwrap_or(fc),
            n: self.n.unwrap_or(fn_),
            g: self.g.unwrap_or(fg),
            b: self.b.or(fb),
            engine: self.engine_options(),
        }
    }

    pub fn program_params(&self) -> ProgramParams {
        let mut p = ProgramParams::new(self.program);
        p.damping = self.damping;
        p.epsilon = self.epsilon;
        if let Some(m) = self.max_iter {
            p.max_iter = m;
        }
        p.source = self.source;
        p.scale_by_outdegree = self.scale_by_outdegree;
        p
    }

    /// Every setting as `key = value` lines, defaults included.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "program = {}", self.program);
        if let Some(d) = &self.dataset {
            let _ = writeln!(s, "dataset = {}", d.display());
        }
        let _ = writeln!(s, "C = {}", opt(self.c));
        let _ = writeln!(s, "N = {}", opt(self.n));
        let _ = writeln!(s, "G = {}", opt(self.g));
        let _ = writeln!(s, "B = {}", opt(self.b));
        let _ = writeln!(s, "damping = {}", self.damping);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "max_iter = {}", self.max_iter.map_or("auto".into(), |m| m.to_string()));
        let _ = writeln!(s, "source = {}", self.source);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "skip_empty = {}", self.skip_empty);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "scale_by_outdegree = {}", self.scale_by_outdegree);
        let _ = writeln!(s, "adc_bits = {}", self.adc_bits.map_or("auto".into(), |b| b.to_string()));
        let c = &self.cost;
        for (k, v) in [
            ("t_read_ns", c.t_read_ns),
            ("t_write_ns", c.t_write_ns),
            ("e_read_pj", c.e_read_pj),
            ("e_write_pj", c.e_write_pj),
            ("t_ge_cycle_ns", c.t_ge_cycle_ns),
            ("adc_rate_gsps", c.adc_rate_gsps),
            ("e_adc_pj", c.e_adc_pj),
            ("e_reg_pj", c.e_reg_pj),
            ("e_salu_pj", c.e_salu_pj),
            ("t_writeback_ns", c.t_writeback_ns),
        ] {
            let _ = writeln!(s, "cost.{k} = {v}");
        }
        let _ = writeln!(
            s,
            "cost.adcs_per_ge = {}",
            c.adcs_per_ge.map_or("auto".into(), |a| a.to_string())
        );
        let _ = writeln!(s, "cost.overlap_programming = {}", c.overlap_programming);
        let _ = writeln!(s, "cost.slices_serialized = {}", c.slices_serialized);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_str("# demo\nprogram = sssp\nC=4\nN = 2 \nsrc = 3\ncost.e_adc_pj = 4\nt_write_ns = 10 # inline\n")
            .unwrap();
        assert_eq!(cfg.program, Program::Sssp);
        assert_eq!((cfg.c, cfg.n, cfg.g), (Some(4), Some(2), None));
        assert_eq!(cfg.source, 3);
        assert_eq!(cfg.cost.e_adc_pj, 4.0);
        assert_eq!(cfg.cost.t_write_ns, 10.0);
        cfg.set("C", "8").unwrap();
        assert_eq!(cfg.c, Some(8));
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        let e = cfg.apply_str("C = 4\nbogus\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e}");
        let e = cfg.apply_str("colour = red").unwrap_err();
        assert!(e.to_string().contains("colour"));
        assert!(cfg.apply_str("workers = many").is_err());
    }

    #[test]
    fn validation() {
        let cfg = RunConfig {
            damping: 1.5,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig {
            workers: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.workers = 2;
        cfg.c = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_str("program = bfs\nB = 64\nmax_iter = 9\nadc_bits = 12\ncost.adcs_per_ge = 2\n")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_str(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }
}
