//! Run configuration, read from TOML. Every field has a default, so an empty
//! file is a valid configuration; `nlsw --print-config` shows them all.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nonlinearity::NonlinearityModel;
use crate::regularize::RegularizeConfig;
use crate::variational::MinimizeConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; `0` uses the `NLSW_THREADS` variable or all cores.
    pub threads: usize,
    /// Seed of the random test fields in `verify`.
    pub seed: u64,
    /// Speed `c`; when absent, `c_over_vs · v_s`.
    pub c: Option<f64>,
    pub c_over_vs: f64,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub ansatz: AnsatzConfig,
    pub minimize: MinimizeConfig,
    pub regularize: RegularizeSection,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            seed: 20_240_601,
            c: None,
            c_over_vs: 0.5,
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            ansatz: AnsatzConfig::default(),
            minimize: MinimizeConfig::default(),
            regularize: RegularizeSection::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gp,
    CubicQuintic,
    Tabulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub nonlinearity: ModelKind,
    pub alpha1: f64,
    pub alpha3: f64,
    pub alpha5: f64,
    /// CSV of `s,F(s)` rows for the tabulated model.
    pub table: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { nonlinearity: ModelKind::Gp, alpha1: 1.0, alpha3: 3.0, alpha5: 2.0, table: None }
    }
}

impl ModelConfig {
    pub fn build(&self, base: &Path) -> Result<NonlinearityModel> {
        match self.nonlinearity {
            ModelKind::Gp => Ok(NonlinearityModel::gross_pitaevskii()),
            ModelKind::CubicQuintic => NonlinearityModel::cubic_quintic(self.alpha1, self.alpha3, self.alpha5),
            ModelKind::Tabulated => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("tabulated model needs `table`".into()))?;
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                NonlinearityModel::tabulated(&parse_table(&text)?)
            }
        }
    }
}

/// Parses `s,F(s)` rows; blank lines, `#` comments and a non-numeric header
/// row are skipped.
pub fn parse_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(Error::Config(format!("table line {}: expected two columns", n + 1)));
        }
        match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
            (Ok(s), Ok(f)) => out.push((s, f)),
            _ if out.is_empty() => continue,
            _ => return Err(Error::Config(format!("table line {}: not numeric", n + 1))),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Points per axis.
    pub sizes: Vec<usize>,
    /// Outermost node coordinate per axis; ignored when `spacing` is set.
    pub half_width: Vec<f64>,
    pub spacing: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 3, sizes: vec![64], half_width: vec![12.0], spacing: None }
    }
}

impl GridConfig {
    /// Single-entry lists apply to every axis.
    pub fn build(&self) -> Result<Grid> {
        let d = self.dim;
        let expand = |v: &[f64], what: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; d]),
                n if n == d => Ok(v.to_vec()),
                _ => Err(Error::Config(format!("grid.{what} needs 1 or {d} entries"))),
            }
        };
        let sizes: Vec<usize> = match self.sizes.len() {
            1 => vec![self.sizes[0]; d],
            n if n == d => self.sizes.clone(),
            _ => return Err(Error::Config(format!("grid.sizes needs 1 or {d} entries"))),
        };
        let spacing = match &self.spacing {
            Some(s) => expand(s, "spacing")?,
            None => expand(&self.half_width, "half_width")?
                .iter()
                .zip(&sizes)
                .map(|(w, &n)| 2.0 * w / (n.max(2) - 1) as f64)
                .collect(),
        };
        Grid::new(sizes, spacing).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub r: f64,
    pub eps: f64,
    /// Cone parameter; defaults to `r`.
    pub a: Option<f64>,
    /// The bounds sweep runs over `sweep_r × sweep_eps`.
    pub sweep_r: Vec<f64>,
    pub sweep_eps: Vec<f64>,
    /// Grid spacing of the sweep.
    pub sweep_spacing: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            r: 6.0,
            eps: 1.0,
            a: None,
            sweep_r: vec![4.0, 6.0, 8.0, 12.0],
            sweep_eps: vec![0.5, 1.0],
            sweep_spacing: 0.25,
        }
    }
}

impl AnsatzConfig {
    pub fn sweep(&self) -> Vec<(f64, f64)> {
        self.sweep_r.iter().flat_map(|&r| self.sweep_eps.iter().map(move |&e| (r, e))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeSection {
    #[serde(flatten)]
    pub run: RegularizeConfig,
    /// Penalty scales of the sweep in `verify`.
    pub sweep: Vec<f64>,
}

impl Default for RegularizeSection {
    fn default() -> Self {
        Self { run: RegularizeConfig::default(), sweep: vec![0.4, 0.2, 0.1] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Points per axis of the random-field checks.
    pub n: usize,
    /// Random `(u, w)` pairs per model in the gradient check.
    pub pairs: usize,
    /// Points per axis of the ansatz-based checks.
    pub ansatz_n: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { n: 32, pairs: 6, ansatz_n: 64 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.dim < 3 {
            return Err(Error::Config("grid.dim must be at least 3".into()));
        }
        if !(self.c_over_vs > 0.0 && self.c_over_vs < 1.0) {
            return Err(Error::Config("c_over_vs must lie in (0, 1)".into()));
        }
        if !(self.ansatz.sweep_spacing > 0.0) {
            return Err(Error::Config("ansatz.sweep_spacing must be positive".into()));
        }
        Ok(())
    }

    /// The speed, checked against the subsonic range of `model`.
    pub fn speed(&self, model: &NonlinearityModel) -> Result<f64> {
        let c = self.c.unwrap_or(self.c_over_vs * model.v_s());
        if !(c > 0.0 && c < model.v_s()) {
            return Err(Error::Config(format!(
                "speed c = {c} must be subsonic: 0 < c < v_s = {}",
                model.v_s()
            )));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[grid]\ndim = 2").is_err());
        assert!(RunConfig::from_toml("c_over_vs = 1.2").is_err());
    }

    #[test]
    fn speed_must_be_subsonic() {
        let m = NonlinearityModel::gross_pitaevskii();
        let mut cfg = RunConfig::default();
        assert!((cfg.speed(&m).unwrap() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        cfg.c = Some(1.5);
        assert!(cfg.speed(&m).is_err());
    }

    #[test]
    fn grid_expansion() {
        let g = GridConfig { dim: 3, sizes: vec![9], half_width: vec![4.0], spacing: None }.build().unwrap();
        assert_eq!(g.sizes(), &[9, 9, 9]);
        assert_eq!(g.spacing(), &[1.0, 1.0, 1.0]);
        let bad = GridConfig { dim: 3, sizes: vec![9, 9], ..Default::default() };
        assert!(bad.build().is_err());
    }

    #[test]
    fn table_parsing() {
        let t = parse_table("s,F\n# comment\n0,1\n1, 0\n\n2,-1\n").unwrap();
        assert_eq!(t, vec![(0.0, 1.0), (1.0, 0.0), (2.0, -1.0)]);
        assert!(parse_table("0,1\nx,y\n").is_err());
    }
}
