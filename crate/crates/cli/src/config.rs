//! Experiment configuration: the method/profile/knockoff enums, the full
//! nested config document, the three named training presets, and loading
//! from TOML or JSON files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use grip_core::baselines::{LassoPathConfig, MaldConfig};
use grip_core::datagen::{InjectionSpec, SyntheticSpec};
use grip_core::grip::{BssConfig, RegularizationPrior, Schedule};
use grip_core::nn::{Activation, LossKind, NetConfig};

use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grip2,
    Grip1,
    Grip1a,
    Gr,
    Lapa,
    Mald,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Grip2 => "grip2",
            Method::Grip1 => "grip1",
            Method::Grip1a => "grip1a",
            Method::Gr => "gr",
            Method::Lapa => "lapa",
            Method::Mald => "mald",
        }
    }

    /// Block schedule for the persistence-trained methods; `None` for the
    /// non-neural or gradient baselines.
    pub fn schedule(&self) -> Option<Schedule> {
        match self {
            Method::Grip2 => Some(Schedule::TwoDBlock),
            Method::Grip1 => Some(Schedule::OneDBlockLambda),
            Method::Grip1a => Some(Schedule::OneDBlockA),
            Method::Gr => Some(Schedule::Fixed),
            Method::Lapa | Method::Mald => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KnockoffKind {
    Gaussian,
    Copula,
    Fixedx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Synthetic,
    Semireal,
    Real,
}

/// File inputs for profiles that consume prepared CSVs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataPaths {
    pub x_csv: Option<PathBuf>,
    pub y_csv: Option<PathBuf>,
    /// Column to read from `y_csv` when it has several.
    pub y_column: Option<String>,
    /// Optional ground-truth file (one 1-based feature index per line) for
    /// power/FDP evaluation on real data.
    pub truth_csv: Option<PathBuf>,
    /// Extra missing-value sentinel beyond empty cells.
    pub missing_sentinel: String,
}

/// Full experiment document. Field names are the canonical config keys for
/// the TOML/JSON file formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub method: Method,
    pub knockoff_kind: KnockoffKind,
    /// Ascending target FDR levels; one aggregate row per entry.
    pub q_grid: Vec<f64>,
    /// 0 selects the plain knockoff threshold, 1 the knockoff+ variant.
    pub offset: u8,
    pub trials: usize,
    pub base_seed: u64,
    pub synthetic: SyntheticSpec,
    pub injection: InjectionSpec,
    #[serde(default)]
    pub data: DataPaths,
    pub bss: BssConfig,
    pub lasso: LassoPathConfig,
    pub mald: MaldConfig,
    /// Training steps for the gradient-sensitivity baseline.
    pub mald_train_steps: usize,
    /// When set, the lambda range is re-derived per trial from gradient
    /// ratios instead of taking `bss.prior` bounds as given.
    pub calibrate_lambda: bool,
    pub calibration_r_min: f64,
    pub calibration_r_max: f64,
    /// Additional covariance shrinkage for copula/gaussian estimation.
    pub extra_shrink: f64,
    /// Log-transform the response before standardizing (real profile).
    pub log_response: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.q_grid.is_empty()
            || self.q_grid.windows(2).any(|w| w[0] >= w[1])
            || self.q_grid.iter().any(|&q| !(q > 0.0 && q <= 1.0))
        {
            return Err(PipelineError::Config(
                "q_grid must be nonempty, ascending, in (0, 1]".into(),
            ));
        }
        if self.trials == 0 {
            return Err(PipelineError::Config("trials must be at least 1".into()));
        }
        if self.offset > 1 {
            return Err(PipelineError::Config("offset must be 0 or 1".into()));
        }
        self.bss
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Stable digest of the canonical JSON rendering.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false)
            || text.trim_start().starts_with('{');
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("bad JSON config: {e}")))
        } else {
            toml::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("bad TOML config: {e}")))
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn base_net(input_dim: usize, depth: usize, width: usize, deep_l2: f64, clip: Option<f64>) -> NetConfig {
    NetConfig {
        input_dim,
        depth,
        width,
        activation: Activation::Relu,
        loss_kind: LossKind::SquaredError,
        learning_rate: 1e-3,
        deep_l2,
        smoothing_eps: 1e-8,
        clip_max_norm: clip,
    }
}

/// Synthetic preset: AR(1) design at n = 20000, p = 500, a depth-3
/// width-512 net trained 5000 steps with blocks of 25 and lambda log-uniform
/// on [1e-4, 1e-1].
pub fn synthetic_profile() -> ExperimentConfig {
    let p = 500;
    ExperimentConfig {
        profile: Profile::Synthetic,
        method: Method::Grip2,
        knockoff_kind: KnockoffKind::Gaussian,
        q_grid: vec![0.05, 0.1, 0.2],
        offset: 1,
        trials: 50,
        base_seed: 0,
        synthetic: SyntheticSpec {
            n: 20_000,
            p,
            rho: 0.8,
            support_spacing: 5,
            snr: 0.2,
            beta_seed: 0,
            noise_seed: 0,
            design_seed: 0,
        },
        injection: InjectionSpec::default(),
        data: DataPaths::default(),
        bss: BssConfig {
            total_steps: 5000,
            block_size: 25,
            warmup_steps: 200,
            batch_size: 256,
            prior: RegularizationPrior {
                lambda_min: 1e-4,
                lambda_max: 1e-1,
                a_min: 0.1,
                schedule: Schedule::TwoDBlock,
            },
            net: base_net(2 * p, 3, 512, 1e-7, None),
            ensemble_k: 1,
        },
        lasso: LassoPathConfig::default(),
        mald: MaldConfig::default(),
        mald_train_steps: 5000,
        calibrate_lambda: false,
        calibration_r_min: 0.01,
        calibration_r_max: 0.20,
        extra_shrink: 0.1,
        log_response: false,
    }
}

/// Semi-real preset: copula knockoffs over preprocessed tabular covariates,
/// 10000 steps, lambda on [1, 100], deep l2 1e-7, blocks of 25.
pub fn semireal_profile() -> ExperimentConfig {
    let mut cfg = synthetic_profile();
    cfg.profile = Profile::Semireal;
    cfg.knockoff_kind = KnockoffKind::Copula;
    cfg.bss.total_steps = 10_000;
    cfg.bss.prior.lambda_min = 1.0;
    cfg.bss.prior.lambda_max = 100.0;
    cfg.bss.net.clip_max_norm = Some(1.0);
    cfg.mald_train_steps = 10_000;
    cfg
}

/// Real-data preset: fixed-X knockoffs, a depth-1 width-1 net trained
/// full-batch, deep l2 1e-2, lambda on [1e-3, 4e-2], blocks of 50.
pub fn real_profile() -> ExperimentConfig {
    let mut cfg = synthetic_profile();
    cfg.profile = Profile::Real;
    cfg.knockoff_kind = KnockoffKind::Fixedx;
    cfg.q_grid = vec![0.05];
    cfg.log_response = true;
    cfg.bss = BssConfig {
        total_steps: 5000,
        block_size: 50,
        warmup_steps: 200,
        // Any batch size at or above n trains full-batch.
        batch_size: 1_000_000_000,
        prior: RegularizationPrior {
            lambda_min: 1e-3,
            lambda_max: 4e-2,
            a_min: 0.1,
            schedule: Schedule::TwoDBlock,
        },
        net: base_net(2, 1, 1, 1e-2, Some(1.0)),
        ensemble_k: 1,
    };
    cfg.mald_train_steps = 5000;
    cfg
}

/// The three named presets keyed by profile name.
pub fn default_profiles() -> BTreeMap<&'static str, ExperimentConfig> {
    let mut map = BTreeMap::new();
    map.insert("synthetic", synthetic_profile());
    map.insert("semireal", semireal_profile());
    map.insert("real", real_profile());
    map
}

pub fn profile_config(profile: Profile) -> ExperimentConfig {
    match profile {
        Profile::Synthetic => synthetic_profile(),
        Profile::Semireal => semireal_profile(),
        Profile::Real => real_profile(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_match_training_configurations() {
        let syn = synthetic_profile();
        assert_eq!(syn.bss.total_steps / syn.bss.block_size, 200);
        assert_eq!(syn.bss.net.depth, 3);
        assert_eq!(syn.bss.net.width, 512);
        assert_abs_diff_eq!(syn.bss.prior.lambda_min, 1e-4);
        assert_abs_diff_eq!(syn.bss.prior.lambda_max, 1e-1);
        assert_abs_diff_eq!(syn.bss.net.learning_rate, 1e-3);

        let semi = semireal_profile();
        assert_abs_diff_eq!(semi.bss.net.deep_l2, 1e-7);
        assert_eq!(semi.bss.total_steps, 10_000);
        assert_eq!(semi.bss.block_size, 25);

        let real = real_profile();
        assert_eq!(real.bss.net.depth, 1);
        assert_eq!(real.bss.net.width, 1);
        assert_eq!(real.bss.block_size, 50);
        assert_abs_diff_eq!(real.bss.net.deep_l2, 1e-2);
        let lam_fix = real.bss.prior.lambda_fix();
        assert_abs_diff_eq!(lam_fix, 6.32e-3, epsilon = 1e-4);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = synthetic_profile();
        let b = synthetic_profile();
        assert_eq!(a.digest(), b.digest());
        let mut c = synthetic_profile();
        c.base_seed = 7;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn toml_and_json_roundtrip() {
        let cfg = real_profile();
        let toml_text = cfg.to_toml_string();
        let dir = std::env::temp_dir();
        let tpath = dir.join("grip_cfg_test.toml");
        std::fs::write(&tpath, &toml_text).unwrap();
        let back = ExperimentConfig::from_file(&tpath).unwrap();
        assert_eq!(back.digest(), cfg.digest());

        let jpath = dir.join("grip_cfg_test.json");
        std::fs::write(&jpath, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let back = ExperimentConfig::from_file(&jpath).unwrap();
        assert_eq!(back.digest(), cfg.digest());
        std::fs::remove_file(&tpath).ok();
        std::fs::remove_file(&jpath).ok();
    }

    #[test]
    fn validation_rejects_bad_grids() {
        let mut cfg = synthetic_profile();
        cfg.q_grid = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        cfg.q_grid = vec![];
        assert!(cfg.validate().is_err());
        cfg.q_grid = vec![0.05];
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }
}
