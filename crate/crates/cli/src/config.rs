//! Experiment configuration: one self-describing JSON document per run.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use boundarylab_core::rational::Place;
use boundarylab_core::walk::{AtomConfig, MeasureConfig, StepMeasure};
use boundarylab_core::{Error, Result};

/// Full experiment description. Fields are optional so that commands can
/// validate exactly what they need; unknown fields are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dimension: Option<usize>,
    pub atoms: Option<Vec<AtomConfig>>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<usize>,
    pub places: Option<PlacesSpec>,
    pub output_dir: Option<String>,
    pub options: Options,
    pub acceptance: Acceptance,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PlacesSpec {
    Keyword(String),
    List(Vec<String>),
}

/// Command-specific tuning knobs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// Step counts for the statistics commands.
    pub n_list: Option<Vec<usize>>,
    /// Gauge radii for the growth report.
    pub gauge_ks: Option<Vec<f64>>,
    /// Exact scalar-ball radius `k = ln N` for the scalar count check.
    pub scalar_ball_n: Option<u64>,
    pub entropy_n_max: Option<usize>,
    pub support_guard: Option<usize>,
    pub minor_identity_trials: Option<usize>,
    pub product_formula_trials: Option<usize>,
    pub weyl_trials: Option<usize>,
    pub factorization_trials: Option<usize>,
}

/// Optional acceptance gates; a violated gate makes the run exit with
/// status 2.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Acceptance {
    pub qni_decreasing: Option<bool>,
    pub estimgauge_q90: Option<f64>,
    pub estimgauge_means_non_increasing: Option<bool>,
    pub require_certified: Option<bool>,
    pub rate_tolerance: Option<f64>,
    pub min_passing_seeds: Option<usize>,
    pub increments_non_increasing: Option<bool>,
    pub cardinality_bound: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Precondition(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Precondition(format!("invalid config: {e}")))
    }

    /// The step measure, required by every walk-driven command.
    pub fn measure(&self) -> Result<StepMeasure> {
        let dimension = self
            .dimension
            .ok_or_else(|| Error::Precondition("config needs \"dimension\"".into()))?;
        let atoms = self
            .atoms
            .as_ref()
            .ok_or_else(|| Error::Precondition("config needs \"atoms\"".into()))?;
        MeasureConfig {
            dimension,
            atoms: atoms
                .iter()
                .map(|a| AtomConfig {
                    matrix: a.matrix.clone(),
                    weight: a.weight.clone(),
                })
                .collect(),
        }
        .build()
    }

    pub fn seeds(&self) -> Vec<u64> {
        if let Some(seeds) = &self.seeds {
            seeds.clone()
        } else if let Some(seed) = self.seed {
            vec![seed]
        } else {
            (0..20).collect()
        }
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(200)
    }

    /// Resolves the place list: the keyword "auto" (or nothing) means every
    /// relevant place of the measure.
    pub fn places(&self, measure: &StepMeasure) -> Result<BTreeSet<Place>> {
        match &self.places {
            None => measure.relevant_places(),
            Some(PlacesSpec::Keyword(word)) if word == "auto" => measure.relevant_places(),
            Some(PlacesSpec::Keyword(word)) => Err(Error::Precondition(format!(
                "unknown places keyword {word:?}; use \"auto\" or a list"
            ))),
            Some(PlacesSpec::List(items)) => {
                let mut out = BTreeSet::new();
                for item in items {
                    out.insert(item.parse::<Place>()?);
                }
                Ok(out)
            }
        }
    }
}
