//! Flat `key = value` run configuration with dotted section names.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use scalarfield::iterate::IterationSettings;
use scalarfield::{GridSpec, Measure};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

const KNOWN_KEYS: &[&str] = &[
    "problem.N",
    "problem.p",
    "problem.kappa",
    "problem.q",
    "measure.type",
    "measure.mass",
    "measure.radius",
    "measure.r_in",
    "measure.r_out",
    "numerics.n",
    "numerics.r_max",
    "numerics.r_min",
    "numerics.tol",
    "numerics.j_max",
    "numerics.blowup",
    "numerics.rel_tol",
    "output.dir",
    "sweep.kappa_min",
    "sweep.kappa_max",
    "sweep.points",
    "sweep.spacing",
];

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", lineno + 1)))?;
            raw.set(key.trim(), value.trim()).map_err(|e| ConfigError(format!("line {}: {}", lineno + 1, e.0)))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError(format!("empty value for `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override `{item}` must look like key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kappa_min: Option<f64>,
    pub kappa_max: Option<f64>,
    pub points: usize,
    pub spacing: Spacing,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: u32,
    pub p: f64,
    pub kappa: Option<f64>,
    pub q: Option<f64>,
    pub measure: Measure,
    pub grid: GridSpec,
    pub iteration: IterationSettings,
    pub rel_tol: f64,
    pub out: PathBuf,
    pub sweep: SweepConfig,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError(format!("`{key}` must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let dim: u32 = raw.get_or("problem.N", 3)?;
        if dim < 2 {
            return Err(ConfigError(format!("problem.N must be at least 2, got {dim}")));
        }
        let p: f64 = raw.get_or("problem.p", 2.0)?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(ConfigError(format!("problem.p must exceed 1, got {p}")));
        }
        let kappa = raw.get::<f64>("problem.kappa")?.map(|k| positive("problem.kappa", k)).transpose()?;
        let q = raw.get::<f64>("problem.q")?.map(|k| positive("problem.q", k)).transpose()?;

        let mass = positive("measure.mass", raw.get_or("measure.mass", 1.0)?)?;
        let kind: String = raw.get_or("measure.type", "ball".to_string())?;
        let measure = match kind.as_str() {
            "dirac" => Measure::DiracOrigin { mass },
            "ball" => {
                Measure::UniformBall { radius: positive("measure.radius", raw.get_or("measure.radius", 1.0)?)?, mass }
            }
            "annulus" => {
                let r_in = positive(
                    "measure.r_in",
                    raw.get("measure.r_in")?.ok_or_else(|| ConfigError("annulus needs measure.r_in".into()))?,
                )?;
                let r_out = positive(
                    "measure.r_out",
                    raw.get("measure.r_out")?.ok_or_else(|| ConfigError("annulus needs measure.r_out".into()))?,
                )?;
                if r_out <= r_in {
                    return Err(ConfigError("measure.r_out must exceed measure.r_in".into()));
                }
                Measure::Annulus { r_in, r_out, mass }
            }
            other => return Err(ConfigError(format!("measure.type must be dirac, ball or annulus, got `{other}`"))),
        };

        let defaults = GridSpec::default();
        let grid = GridSpec {
            nodes: raw.get_or("numerics.n", defaults.nodes)?,
            r_max: positive("numerics.r_max", raw.get_or("numerics.r_max", defaults.r_max)?)?,
            r_min: positive("numerics.r_min", raw.get_or("numerics.r_min", defaults.r_min)?)?,
        };
        grid.validate().map_err(|e| ConfigError(e.to_string()))?;
        if measure.support_radius() >= grid.r_max / 2.0 {
            return Err(ConfigError("measure support must lie well inside numerics.r_max".into()));
        }
        let it = IterationSettings::default();
        let iteration = IterationSettings {
            tol: positive("numerics.tol", raw.get_or("numerics.tol", it.tol)?)?,
            j_max: raw.get_or("numerics.j_max", it.j_max)?,
            blowup: positive("numerics.blowup", raw.get_or("numerics.blowup", it.blowup)?)?,
            ..it
        };
        if iteration.j_max == 0 {
            return Err(ConfigError("numerics.j_max must be positive".into()));
        }
        let rel_tol: f64 = raw.get_or("numerics.rel_tol", 1e-2)?;
        if !(rel_tol > 1e-4 && rel_tol < 0.5) {
            return Err(ConfigError(format!("numerics.rel_tol must lie in (1e-4, 0.5), got {rel_tol}")));
        }
        let out = PathBuf::from(raw.get_or("output.dir", "out".to_string())?);

        let spacing = match raw.get_or("sweep.spacing", "geometric".to_string())?.as_str() {
            "geometric" => Spacing::Geometric,
            "linear" => Spacing::Linear,
            other => return Err(ConfigError(format!("sweep.spacing must be geometric or linear, got `{other}`"))),
        };
        let sweep = SweepConfig {
            kappa_min: raw.get::<f64>("sweep.kappa_min")?.map(|k| positive("sweep.kappa_min", k)).transpose()?,
            kappa_max: raw.get::<f64>("sweep.kappa_max")?.map(|k| positive("sweep.kappa_max", k)).transpose()?,
            points: raw.get_or("sweep.points", 12)?,
            spacing,
        };
        if sweep.points < 2 {
            return Err(ConfigError("sweep.points must be at least 2".into()));
        }
        if let (Some(lo), Some(hi)) = (sweep.kappa_min, sweep.kappa_max) {
            if lo >= hi {
                return Err(ConfigError("sweep.kappa_min must be below sweep.kappa_max".into()));
            }
        }
        Ok(Self { dim, p, kappa, q, measure, grid, iteration, rel_tol, out, sweep })
    }

    pub fn measure_label(&self) -> &'static str {
        match self.measure {
            Measure::DiracOrigin { .. } => "dirac",
            Measure::UniformBall { .. } => "ball",
            Measure::Annulus { .. } => "annulus",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_overrides() {
        let mut raw =
            RawConfig::parse("# reference\nproblem.N = 4\nproblem.p = 1.5 # subcritical\n\nmeasure.type = dirac\n")
                .unwrap();
        raw.apply_overrides(&["numerics.n=512".to_string()]).unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.dim, 4);
        assert_eq!(cfg.p, 1.5);
        assert_eq!(cfg.grid.nodes, 512);
        assert!(matches!(cfg.measure, Measure::DiracOrigin { mass } if mass == 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RawConfig::parse("problem.N 3").is_err());
        assert!(RawConfig::parse("problem.dimension = 3").is_err());
        for text in [
            "problem.p = 1",
            "problem.N = x",
            "measure.type = cube",
            "measure.type = annulus\nmeasure.r_in = 1\nmeasure.r_out = 0.5",
            "numerics.n = 8",
        ] {
            let raw = RawConfig::parse(text).unwrap();
            assert!(RunConfig::from_raw(&raw).is_err(), "{text}");
        }
    }
}
