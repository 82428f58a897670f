use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Architecture, TrainingConfig};
use crate::recovery::{GeneratorConfig, GeneratorFamily, ParamRange};

/// How the systems' recovery functions relate within one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All systems share one recovery function.
    Identical,
    /// Each system draws its own function.
    Disparate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Identical => "identical",
            Mode::Disparate => "disparate",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identical" => Ok(Mode::Identical),
            "disparate" => Ok(Mode::Disparate),
            other => Err(Error::Config(format!("unknown experiment mode {other:?}"))),
        }
    }
}

/// Where the SoS curve is observed for the trunk network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputTimes {
    /// The same uniform grid for every sample.
    SharedGrid,
    /// `t = 0` plus uniformly drawn times, per sample.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n_systems: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Sensor count per system.
    pub m_sensors: usize,
    /// Horizon; derived from the generator when absent.
    pub t_end: Option<f64>,
    /// Level the slowest possible recovery function must reach by the
    /// derived horizon.
    pub horizon_quantile: f64,
    pub output_times: OutputTimes,
    pub n_output_times: usize,
    pub mc_realizations: usize,
    pub generator: GeneratorFamily,
    pub network: Architecture,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Identical,
            n_systems: 4,
            n_train: 20,
            n_test: 200,
            m_sensors: 50,
            t_end: None,
            horizon_quantile: 0.999,
            output_times: OutputTimes::SharedGrid,
            n_output_times: 100,
            mc_realizations: 10_000,
            generator: GeneratorFamily::Lognormal {
                median: ParamRange::new(1.0, 3.0),
                dispersion: ParamRange::new(0.3, 0.6),
            },
            network: Architecture::default(),
            training: TrainingConfig::default(),
            seed: 2022,
        }
    }
}

impl ExperimentConfig {
    /// Four systems sharing one recovery function; 20 training and 200 test
    /// samples.
    pub fn identical() -> Self {
        Self::default()
    }

    /// Four systems with independent recovery functions; 20 training and 20
    /// test samples.
    pub fn disparate() -> Self {
        Self {
            mode: Mode::Disparate,
            n_test: 20,
            ..Self::default()
        }
    }

    pub fn preset(mode: Mode) -> Self {
        match mode {
            Mode::Identical => Self::identical(),
            Mode::Disparate => Self::disparate(),
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            family: self.generator.clone(),
            identical: self.mode == Mode::Identical,
        }
    }

    pub fn horizon(&self) -> Result<f64> {
        match self.t_end {
            Some(t) => Ok(t),
            None => self.generator_config().slowest_quantile(self.horizon_quantile),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_systems == 0 || self.n_systems > crate::sos::MAX_SYSTEMS {
            return Err(Error::Config(format!("n_systems = {} is out of range", self.n_systems)));
        }
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be at least 1".into()));
        }
        if self.m_sensors < 2 {
            return Err(Error::Config("m_sensors must be at least 2".into()));
        }
        if self.n_output_times < 2 {
            return Err(Error::Config("n_output_times must be at least 2".into()));
        }
        if self.mc_realizations == 0 {
            return Err(Error::Config("mc_realizations must be at least 1".into()));
        }
        if !(self.horizon_quantile > 0.0 && self.horizon_quantile < 1.0) {
            return Err(Error::Config("horizon_quantile must lie in (0, 1)".into()));
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("t_end must be positive, got {t}")));
            }
        }
        self.generator_config().validate()?;
        if self.network.p == 0 || self.network.branch_hidden.contains(&0) || self.network.trunk_hidden.contains(&0) {
            return Err(Error::Config("network layers must be nonempty".into()));
        }
        self.training.validate()?;
        let t_end = self.horizon()?;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("derived horizon {t_end} is not usable")));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let a = ExperimentConfig::identical();
        assert_eq!((a.n_train, a.n_test, a.n_systems), (20, 200, 4));
        assert!(a.generator_config().identical);
        let b = ExperimentConfig::disparate();
        assert_eq!((b.n_train, b.n_test), (20, 20));
        assert!(!b.generator_config().identical);
        a.validate().unwrap();
        b.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let cfg = ExperimentConfig::disparate();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);

        let partial = "mode = \"disparate\"\nn_test = 5\n[training]\niterations = 10\n";
        let p = ExperimentConfig::from_toml_str(partial).unwrap();
        assert_eq!(p.mode, Mode::Disparate);
        assert_eq!(p.training.iterations, 10);
        assert_eq!(p.training.learning_rate, 1e-3);
        assert_eq!(p.m_sensors, 50);
    }

    #[test]
    fn invalid_configs() {
        assert!(ExperimentConfig::from_toml_str("n_train = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("m_sensors = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str(
            "[generator]\nfamily = \"lognormal\"\nmedian = { min = 3.0, max = 1.0 }\ndispersion = { min = 0.3, max = 0.6 }\n"
        )
        .is_err());
    }

    #[test]
    fn derived_horizon_covers_slowest_function() {
        let cfg = ExperimentConfig::identical();
        let t = cfg.horizon().unwrap();
        let slow = crate::recovery::RecoveryFunction::lognormal(3.0, 0.6).unwrap();
        assert!(slow.cdf(t) >= 0.999 - 1e-12);
    }
}
