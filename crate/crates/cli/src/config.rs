//! Experiment config file. Every key is optional; command-line flags win.
//!
//! ```toml
//! seed = 7
//! kernel = "w3.kernel"        # or a [model] table
//!
//! [model]
//! kind = "logistic_bd"
//! n = 3
//! params = { birth = 0.4 }
//!
//! [sweep]
//! x0 = 0
//! f = [0.0, 0.0, 1.0]
//! n_list = "100,1000,10000"
//! replications = 32
//! ```

use std::path::{Path, PathBuf};

use qsd_core::io::toml_error;
use qsd_core::ModelSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub kernel: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub condition: ConditionSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub ergodic: ErgodicSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub converse: ConverseSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSection {
    pub t0_max: Option<usize>,
    pub sizes: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub t0: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub t_grid: Option<String>,
    pub t_max: Option<usize>,
    pub gap_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicSection {
    pub f: Option<Vec<f64>>,
    pub horizon_grid: Option<String>,
    pub fit_horizon: Option<usize>,
    pub validation_horizon: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub x0: Option<usize>,
    pub f: Option<Vec<f64>>,
    pub trajectories: Option<usize>,
    pub horizon: Option<usize>,
    pub plan: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub x0: Option<usize>,
    pub f: Option<Vec<f64>>,
    pub n_list: Option<String>,
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseSection {
    pub max_t1: Option<usize>,
    pub max_horizon: Option<usize>,
    pub t_grid: Option<String>,
    pub horizon_grid: Option<String>,
}

/// A parsed config with the text it came from and its directory, against
/// which relative paths resolve.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let config = toml::from_str(text).map_err(|e| toml_error(text, &e).to_string())?;
        Ok(LoadedConfig { config, text: text.to_string(), base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let text = r#"
seed = 3
kernel = "k.txt"

[model]
kind = "birth_death"
n = 4
params = { birth = 0.2 }

[sweep]
f = [0.0, 1.0]
n_list = "100,1000"
"#;
        let c = LoadedConfig::parse(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.config.seed, Some(3));
        assert_eq!(c.config.model.as_ref().unwrap().n, 4);
        assert_eq!(c.config.sweep.f, Some(vec![0.0, 1.0]));
        assert_eq!(c.resolve(Path::new("k.txt")), Path::new("/tmp/x/k.txt"));
    }

    #[test]
    fn errors_name_the_line() {
        let e = LoadedConfig::parse("seed = 1\n\n[sweep]\nreplication = 3\n", Path::new(".")).unwrap_err();
        assert!(e.starts_with("line 4:"), "{e}");
        let e = LoadedConfig::parse("seed = \"x\"\n", Path::new(".")).unwrap_err();
        assert!(e.starts_with("line 1:"), "{e}");
    }
}
