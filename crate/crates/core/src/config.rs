//! Parameter file handling. The file speaks the market's native quoting
//! units (€/MWh, €/kW, €/(kW·year)); loading converts to the canonical
//! (GW, Year, M€) system. Unknown keys are hard errors and every violated
//! invariant is reported with its key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::units;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeParams {
    pub capacity: CapacitySection,
    pub demand: DemandSection,
    pub spot: SpotSection,
    pub costs: CostsSection,
    pub preferences: PreferencesSection,
    pub contract: ContractSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub x0_gw: f64,
    pub sigma_per_sqrt_year: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    pub x0_gw: f64,
    pub mu_per_year: f64,
    /// Long-term demand level (the exponential of the log-mean).
    pub mean_level_gw: f64,
    pub sigma_per_sqrt_year: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotSection {
    pub beta0_eur_per_mwh: f64,
    pub beta1_per_gw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub kappa1_eur_per_kw: f64,
    /// Quadratic build penalty as a multiple of the linear build cost.
    /// Mutually exclusive with `kappa2_meur_year_per_gw2`.
    #[serde(default)]
    pub kappa2_factor_of_kappa1: Option<f64>,
    #[serde(default)]
    pub kappa2_meur_year_per_gw2: Option<f64>,
    pub a_eur_per_kw_year: f64,
    pub b_eur_per_mwh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesSection {
    pub theta_eur_per_mwh: f64,
    pub k_eur_per_mwh: f64,
    pub eta_a_per_meur: f64,
    pub eta_p_per_meur: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSection {
    pub horizon_years: f64,
    /// Pins the participation constraint instead of solving for it.
    #[serde(default)]
    pub reservation_meur: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Truncation ceiling; defaults to the capacity grid ceiling.
    #[serde(default)]
    pub x_inf_gw: Option<f64>,
    #[serde(default)]
    pub alpha_min_per_year: Option<f64>,
    #[serde(default)]
    pub alpha_max_per_year: Option<f64>,
}

impl NativeParams {
    /// The French-system calibration in native units.
    pub fn default_french() -> Self {
        NativeParams {
            capacity: CapacitySection { x0_gw: 90.0, sigma_per_sqrt_year: 0.1 },
            demand: DemandSection {
                x0_gw: 60.0,
                mu_per_year: 61.92,
                mean_level_gw: 60.0,
                sigma_per_sqrt_year: 0.86,
            },
            spot: SpotSection { beta0_eur_per_mwh: 102.8, beta1_per_gw: 335.3e-4 },
            costs: CostsSection {
                kappa1_eur_per_kw: 122.13,
                kappa2_factor_of_kappa1: Some(2.0),
                kappa2_meur_year_per_gw2: None,
                a_eur_per_kw_year: 75.35,
                b_eur_per_mwh: 17.6,
            },
            preferences: PreferencesSection {
                theta_eur_per_mwh: 20_000.0,
                k_eur_per_mwh: 200_000.0,
                eta_a_per_meur: 0.852e-4,
                eta_p_per_meur: 0.8094e-5,
            },
            contract: ContractSection { horizon_years: 5.0, reservation_meur: None },
            bounds: BoundsSection::default(),
        }
    }

    /// Convert to canonical units. `default_x_inf` is used when the file
    /// does not pin the truncation ceiling (callers pass the capacity grid
    /// ceiling).
    pub fn to_model(&self, default_x_inf: f64) -> Result<ModelParams> {
        let mut violations = Vec::new();
        let kappa1 = units::eur_per_kw_to_meur_per_gw(self.kappa1_checked(&mut violations));
        let kappa2 = match (self.costs.kappa2_factor_of_kappa1, self.costs.kappa2_meur_year_per_gw2) {
            (Some(f), None) => f * kappa1,
            (None, Some(v)) => v,
            (None, None) => {
                violations.push(
                    "costs: one of kappa2_factor_of_kappa1 or kappa2_meur_year_per_gw2 is required"
                        .to_string(),
                );
                f64::NAN
            }
            (Some(_), Some(_)) => {
                violations.push(
                    "costs: kappa2_factor_of_kappa1 and kappa2_meur_year_per_gw2 are mutually exclusive"
                        .to_string(),
                );
                f64::NAN
            }
        };
        if !(self.demand.mean_level_gw > 0.0) {
            violations.push(format!(
                "demand.mean_level_gw: must be strictly positive, got {}",
                self.demand.mean_level_gw
            ));
        }
        let params = ModelParams {
            x0_c: self.capacity.x0_gw,
            x0_d: self.demand.x0_gw,
            sigma_c: self.capacity.sigma_per_sqrt_year,
            sigma_d: self.demand.sigma_per_sqrt_year,
            mu_d: self.demand.mu_per_year,
            m_d: self.demand.mean_level_gw.max(f64::MIN_POSITIVE).ln(),
            beta0: self.spot.beta0_eur_per_mwh,
            beta1: self.spot.beta1_per_gw,
            kappa1,
            kappa2,
            a: self.costs.a_eur_per_kw_year * units::MEUR_PER_GW_YEAR_PER_EUR_KW_YEAR,
            b: units::eur_per_mwh_to_flow(self.costs.b_eur_per_mwh),
            theta: units::eur_per_mwh_to_flow(self.preferences.theta_eur_per_mwh),
            k: units::eur_per_mwh_to_flow(self.preferences.k_eur_per_mwh),
            eta_a: self.preferences.eta_a_per_meur,
            eta_p: self.preferences.eta_p_per_meur,
            reservation: self.contract.reservation_meur.unwrap_or(0.0),
            horizon: self.contract.horizon_years,
            x_inf: self.bounds.x_inf_gw.unwrap_or(default_x_inf),
            alpha_min: self.bounds.alpha_min_per_year.unwrap_or(-3.0),
            alpha_max: self.bounds.alpha_max_per_year.unwrap_or(3.0),
        };
        violations.extend(params.violations());
        if violations.is_empty() {
            Ok(params)
        } else {
            Err(Error::Config(violations))
        }
    }

    fn kappa1_checked(&self, violations: &mut Vec<String>) -> f64 {
        if !(self.costs.kappa1_eur_per_kw > 0.0) {
            violations.push(format!(
                "costs.kappa1_eur_per_kw: must be strictly positive, got {}",
                self.costs.kappa1_eur_per_kw
            ));
        }
        self.costs.kappa1_eur_per_kw
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("native params always serialize")
    }
}

/// Parse a native-unit parameter file. Unknown keys are errors.
pub fn parse_native(text: &str) -> Result<NativeParams> {
    toml::from_str(text).map_err(|e| Error::Config(vec![format!("parameter file: {e}")]))
}

/// Load and convert a parameter file; also returns the SHA-256 of the raw
/// bytes for the run manifest.
pub fn load_params(path: &Path, default_x_inf: f64) -> Result<(ModelParams, NativeParams, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("parameter file {}: {e}", path.display())))?;
    let native = parse_native(&text)?;
    let model = native.to_model(default_x_inf)?;
    let digest = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        hex_string(&h.finalize())
    };
    Ok((model, native, digest))
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
