use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tod_core::controller::ControllerConfig;
use tod_core::delay::IntersectionConfig;
use tod_core::flowdata::{SplitSpec, Weekday};
use tod_core::pls::DEFAULT_COMPONENTS;
use tod_core::segmentation::FitConfig;
use tod_core::synth::SynthConfig;
use tod_core::{Error, Result};

/// Everything a run depends on besides its input files. Every field has a
/// default, so `{}` is a valid config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    /// Interval length assumed for CSV inputs that come without a metadata
    /// sidecar.
    pub interval_minutes: u32,
    /// Keep only these days of the week; `null` keeps every day.
    pub weekdays: Option<Vec<Weekday>>,
    pub split: SplitSpec,
    pub pca_components: usize,
    /// Cosmetic factor applied to exported PCA components.
    pub component_scale: f64,
    pub pls_components: usize,
    pub n_periods: usize,
    pub fit: FitConfig,
    pub controller: ControllerConfig,
    /// Phase layout and signal timing; `null` derives four phases from the
    /// movement labels.
    pub intersection: Option<IntersectionConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            interval_minutes: 15,
            weekdays: None,
            // 15-minute measurements up to 10:00, hourly predictions after
            split: SplitSpec {
                cutoff: 40,
                predict_from: 41,
                predict_to: 96,
                predictor_stride: 1,
                predicted_stride: 4,
            },
            pca_components: 4,
            component_scale: 1.0,
            pls_components: DEFAULT_COMPONENTS,
            n_periods: 7,
            fit: FitConfig::default(),
            controller: ControllerConfig::default(),
            intersection: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
