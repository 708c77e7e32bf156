//! Run configuration for the `collect` subcommand.

use serde::{Deserialize, Serialize};

use crate::jsonio::{nested_to_matrix, PlantJson};
use crate::CliError;
use niosyn_core::augmentation::{default_artificial, ArtificialStyle, ArtificialSystem};
use niosyn_core::experiment::ExperimentPlan;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    /// One of the built-in demo plants.
    Named { demo: String },
    /// Explicit matrices.
    Explicit(PlantJson),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EllSpec {
    Auto(String),
    Given(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// "plain-ones" or "random-contractive".
    pub style: Option<String>,
    pub seed: Option<u64>,
    /// Explicit artificial matrices override the style.
    pub a_a: Option<Vec<Vec<f64>>>,
    pub b_a: Option<Vec<Vec<f64>>>,
    pub c_a: Option<Vec<Vec<f64>>>,
    /// When the requested artificial system leaves the augmented data below
    /// the richness condition, retry with fresh contractive draws this many
    /// times before giving up.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub plant: PlantSpec,
    /// Window length; "auto" derives it from the plant.
    pub ell: EllSpec,
    pub num_experiments: usize,
    pub samples_per_experiment: usize,
    pub input_amplitude: f64,
    pub du_bar: f64,
    pub dy_bar: f64,
    #[serde(default = "default_x0_amplitude")]
    pub x0_amplitude: f64,
    pub seed: u64,
    #[serde(default)]
    pub augment: Option<AugmentationSpec>,
}

fn default_x0_amplitude() -> f64 {
    1.0
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.input_amplitude < 0.0
            || self.du_bar < 0.0
            || self.dy_bar < 0.0
            || self.x0_amplitude < 0.0
        {
            return Err(CliError::schema("amplitudes must be nonnegative"));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<niosyn_core::StateSpaceModel, CliError> {
        match &self.plant {
            PlantSpec::Explicit(p) => p.to_model(),
            PlantSpec::Named { demo } => match demo.as_str() {
                "batch-reactor" => Ok(niosyn_core::plants::batch_reactor()),
                "augmented" => Ok(niosyn_core::plants::oscillator_integrator()),
                other => Err(CliError::schema(format!("unknown demo plant '{other}'"))),
            },
        }
    }

    pub fn resolve_ell(&self, model: &niosyn_core::StateSpaceModel) -> Result<usize, CliError> {
        match &self.ell {
            EllSpec::Given(ell) => Ok(*ell),
            EllSpec::Auto(word) if word == "auto" => {
                niosyn_core::lti::observability_index(model.a(), model.c(), 1e-12)
                    .map_err(|e| CliError::schema(e.to_string()))
            }
            EllSpec::Auto(other) => Err(CliError::schema(format!(
                "ell must be a number or \"auto\", got \"{other}\""
            ))),
        }
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan::new(self.num_experiments, self.samples_per_experiment)
            .with_input_amplitude(self.input_amplitude)
            .with_noise(self.du_bar, self.dy_bar)
            .with_x0_amplitude(self.x0_amplitude)
    }

    pub fn artificial(
        &self,
        model: &niosyn_core::StateSpaceModel,
        ell: usize,
    ) -> Result<Option<ArtificialSystem>, CliError> {
        let Some(spec) = &self.augment else {
            return Ok(None);
        };
        if let (Some(a), Some(b), Some(c)) = (&spec.a_a, &spec.b_a, &spec.c_a) {
            let art = ArtificialSystem::new(
                nested_to_matrix(a, "a_a")?,
                nested_to_matrix(b, "b_a")?,
                nested_to_matrix(c, "c_a")?,
            )
            .map_err(|e| CliError::schema(e.to_string()))?;
            return Ok(Some(art));
        }
        let style = match spec.style.as_deref() {
            None | Some("plain-ones") => ArtificialStyle::PlainOnes,
            Some("random-contractive") => ArtificialStyle::RandomContractive {
                seed: spec.seed.unwrap_or(self.seed),
            },
            Some(other) => {
                return Err(CliError::schema(format!("unknown artificial style '{other}'")))
            }
        };
        default_artificial(model.n(), model.p(), model.m(), ell, style)
            .map(Some)
            .map_err(|e| CliError::schema(e.to_string()))
    }
}
