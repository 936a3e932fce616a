//! Run configuration: the filter tuning plus experiment metadata, parsed
//! from JSON with unknown keys rejected.

use serde::{Deserialize, Serialize};

use mavbe::{FilterConfig, InnovationForm, SoftIronParams, StateVector, Vec3};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnovationFormName {
    Residual,
    Linearized,
}

/// Configuration file contents. Every field has a default, so `{}` is a
/// valid config; unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Estimator step (s).
    pub tau: f64,
    pub q_diag: [f64; 15],
    pub r_diag: [f64; 4],
    pub sigma0_diag: [f64; 15],
    /// Initial hard-iron estimate (G).
    pub m_b0: [f64; 3],
    /// Initial soft-iron parameters (a, b, c, d, e, f).
    pub t_p0: [f64; 6],
    /// Initial rate-bias estimate (rad/s).
    pub w_b0: [f64; 3],
    /// Known squared field magnitude (G^2); 1.0 normalizes.
    pub field_mag_sq: f64,
    /// Local magnetic declination (rad), subtracted from magnetic heading.
    pub declination_rad: f64,
    pub innovation_form: InnovationFormName,
    /// Seed echoed into simulator runs.
    pub rng_seed: u64,
    /// Scenario preset name, when the run came from the simulator.
    pub preset: Option<String>,
    /// Input log path, when the run consumed a log.
    pub log: Option<String>,
    /// Output directory of the run.
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reference = FilterConfig::<f64>::new(1.0);
        let mut q_diag = [0.0; 15];
        let mut sigma0_diag = [0.0; 15];
        for i in 0..15 {
            q_diag[i] = reference.q_diag[i];
            sigma0_diag[i] = reference.sigma0[(i, i)];
        }
        Self {
            tau: reference.tau,
            q_diag,
            r_diag: [4e-8; 4],
            sigma0_diag,
            m_b0: [0.0; 3],
            t_p0: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            w_b0: [0.0; 3],
            field_mag_sq: 1.0,
            declination_rad: 0.0,
            innovation_form: InnovationFormName::Residual,
            rng_seed: 42,
            preset: None,
            log: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn to_filter_config(&self) -> Result<FilterConfig<f64>, CliError> {
        let mut cfg = FilterConfig::new(self.field_mag_sq);
        cfg.tau = self.tau;
        cfg.q_diag = mavbe::StateVec::from_row_slice(&self.q_diag);
        cfg.r_diag = mavbe::MeasVec::from_row_slice(&self.r_diag);
        cfg.sigma0 =
            mavbe::StateMat::from_diagonal(&mavbe::StateVec::from_row_slice(&self.sigma0_diag));
        cfg.phi0 = StateVector::new(
            Vec3::zeros(),
            Vec3::from_row_slice(&self.m_b0),
            SoftIronParams::from(self.t_p0),
            Vec3::from_row_slice(&self.w_b0),
        );
        cfg.innovation_form = match self.innovation_form {
            InnovationFormName::Residual => InnovationForm::Residual,
            InnovationFormName::Linearized => InnovationForm::Linearized,
        };
        cfg.validate()
            .map_err(|e| CliError::Data(e.to_string()))?;
        Ok(cfg)
    }
}
