//! Run configuration read from JSON, and its fully resolved form.

use std::path::Path;

use mixchart::chart::suggest_grid;
use mixchart::moments::default_k_max;
use mixchart::{
    ChartParams, CostSpec, IntervalCostInput, MixtureShiftSpec, ProcessSpec, SearchSpace, ShiftModel,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Start distance `j` and length `h` of a single sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub h: f64,
    #[serde(default)]
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Grid steps used when the grid is sized automatically.
    #[serde(default = "defaults::levels")]
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default = "defaults::n_quad")]
    pub n_quad: usize,
    #[serde(default = "defaults::tolerance")]
    pub tolerance: f64,
    #[serde(default = "defaults::n_paths")]
    pub n_paths: usize,
    #[serde(default = "defaults::n_intervals")]
    pub n_intervals: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Largest accepted |z| between a simulation and the closed form.
    #[serde(default = "defaults::z_limit")]
    pub z_limit: f64,
}

mod defaults {
    pub fn levels() -> usize {
        400
    }
    pub fn n_quad() -> usize {
        64
    }
    pub fn tolerance() -> f64 {
        1e-8
    }
    pub fn n_paths() -> usize {
        100_000
    }
    pub fn n_intervals() -> usize {
        200_000
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn z_limit() -> f64 {
        4.0
    }
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            grid_spacing: None,
            v_max: None,
            levels: defaults::levels(),
            k_max: None,
            n_quad: defaults::n_quad(),
            tolerance: defaults::tolerance(),
            n_paths: defaults::n_paths(),
            n_intervals: defaults::n_intervals(),
            seed: defaults::seed(),
            z_limit: defaults::z_limit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSpec,
    pub shift: ShiftModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpace>,
    #[serde(default)]
    pub numerics: Numerics,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
    }

    pub fn mixture(&self) -> Result<MixtureShiftSpec, CliError> {
        match self.shift {
            ShiftModel::Mixture(m) => Ok(m),
            ShiftModel::Generic(_) => Err(CliError::Config(
                "this command needs a `mixture` shift; `generic` only supports interval moments".into(),
            )),
        }
    }

    pub fn costs(&self) -> Result<CostSpec, CliError> {
        self.costs.ok_or_else(|| missing("costs"))
    }

    pub fn interval(&self) -> Result<IntervalCostInput, CliError> {
        let i = self.interval.ok_or_else(|| missing("interval"))?;
        Ok(IntervalCostInput::new(i.h, i.j, self.process.s, self.shift)?)
    }

    pub fn chart(&self) -> Result<ChartParams, CliError> {
        self.chart.ok_or_else(|| missing("chart"))
    }

    pub fn search(&self) -> Result<SearchSpace, CliError> {
        self.search.ok_or_else(|| missing("search"))
    }

    pub fn grid(&self) -> Result<(f64, f64), CliError> {
        match (self.numerics.grid_spacing, self.numerics.v_max) {
            (Some(spacing), Some(v_max)) => Ok((spacing, v_max)),
            _ => Err(missing("numerics.grid_spacing / numerics.v_max")),
        }
    }

    /// Fill every derived default so that the returned config reproduces the
    /// run exactly when fed back in.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Result<Self, CliError> {
        if let Some(seed) = seed_override {
            self.numerics.seed = seed;
        }
        if let (Some(_), None) = (self.interval, self.numerics.k_max) {
            self.numerics.k_max = Some(default_k_max(&self.interval()?));
        }
        let design: Vec<(f64, f64)> = self
            .chart
            .iter()
            .map(|c| (c.h, c.k))
            .chain(self.search.iter().map(|s| (s.h.max, s.k.max)))
            .collect();
        let needs_grid = self.numerics.grid_spacing.is_none() || self.numerics.v_max.is_none();
        if needs_grid && !design.is_empty() {
            let spec = self.mixture()?;
            let h_max = design.iter().map(|d| d.0).fold(f64::MIN, f64::max);
            let k_max = design.iter().map(|d| d.1).fold(f64::MIN, f64::max);
            let levels = self.numerics.levels;
            let (spacing, v_max) = match (self.numerics.grid_spacing, self.numerics.v_max) {
                (None, Some(v_max)) => (v_max / levels as f64, v_max),
                (Some(spacing), None) => {
                    let (_, reach) = suggest_grid(&spec, &self.process, h_max, k_max, levels)?;
                    (spacing, spacing * (reach / spacing).ceil())
                }
                _ => suggest_grid(&spec, &self.process, h_max, k_max, levels)?,
            };
            self.numerics.grid_spacing = Some(spacing);
            self.numerics.v_max = Some(v_max);
        }
        Ok(self)
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("config has no `{section}` section, which this command requires"))
}
