//! Parameter estimation from deseasonalized daily market data: a
//! mean-reversion fit on log-demand returns and a log-linear fit of the
//! spot price against the capacity margin. The capacity volatility is a
//! pass-through (it is chosen by trajectory comparison, not regression).

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Daily observations at the demand-peak hour.
#[derive(Debug, Clone)]
pub struct MarketSeries {
    pub capacity_gw: Vec<f64>,
    pub demand_gw: Vec<f64>,
    pub price_eur_mwh: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct MarketRow {
    #[allow(dead_code)]
    date: String,
    capacity_gw: f64,
    demand_gw: f64,
    price_eur_mwh: f64,
}

pub const MIN_ROWS: usize = 30;

pub fn read_market_csv(path: &Path) -> Result<MarketSeries> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::MissingInput(format!("market data {}: {e}", path.display())))?;
    let mut series = MarketSeries { capacity_gw: Vec::new(), demand_gw: Vec::new(), price_eur_mwh: Vec::new() };
    for row in reader.deserialize::<MarketRow>() {
        let row = row?;
        for (name, v) in [
            ("capacity_gw", row.capacity_gw),
            ("demand_gw", row.demand_gw),
            ("price_eur_mwh", row.price_eur_mwh),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite {name} in {}", path.display())));
            }
        }
        series.capacity_gw.push(row.capacity_gw);
        series.demand_gw.push(row.demand_gw);
        series.price_eur_mwh.push(row.price_eur_mwh);
    }
    if series.demand_gw.len() < MIN_ROWS {
        return Err(Error::invalid(format!(
            "need at least {MIN_ROWS} rows, got {}",
            series.demand_gw.len()
        )));
    }
    Ok(series)
}

struct Ols {
    slope: f64,
    intercept: f64,
    se_slope: f64,
    se_intercept: f64,
    cov_slope_intercept: f64,
    residual_sd: f64,
    max_abs_residual: f64,
}

fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::invalid(
            "regressor has (numerically) zero variance; parameter unidentifiable",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut max_abs = 0.0f64;
    for (a, b) in x.iter().zip(y) {
        let r = b - intercept - slope * a;
        ss_res += r * r;
        max_abs = max_abs.max(r.abs());
    }
    let dof = (x.len().saturating_sub(2)).max(1) as f64;
    let s2 = ss_res / dof;
    Ok(Ols {
        slope,
        intercept,
        se_slope: (s2 / sxx).sqrt(),
        se_intercept: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        cov_slope_intercept: -mx * s2 / sxx,
        residual_sd: s2.sqrt(),
        max_abs_residual: max_abs,
    })
}

/// Mean-reversion fit of log demand.
#[derive(Debug, Clone)]
pub struct DemandFit {
    pub mu_per_year: f64,
    pub mean_level_gw: f64,
    pub sigma_per_sqrt_year: f64,
    pub se_mu: f64,
    pub se_mean_level_log: f64,
    pub se_sigma: f64,
}

/// Regress one-step log-demand returns on the log level:
/// `dy = mu (m - y) dt + sigma dW` gives slope `-mu dt` and intercept
/// `mu m dt`.
pub fn fit_demand(demand_gw: &[f64], dt_years: f64) -> Result<DemandFit> {
    if demand_gw.len() < MIN_ROWS {
        return Err(Error::invalid(format!("need at least {MIN_ROWS} observations")));
    }
    if !(dt_years > 0.0) {
        return Err(Error::invalid("sampling step must be positive"));
    }
    if demand_gw.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("demand observations must be strictly positive"));
    }
    let y: Vec<f64> = demand_gw.iter().map(|d| d.ln()).collect();
    let levels = &y[..y.len() - 1];
    let returns: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let fit = ols(levels, &returns)?;
    if !(fit.slope < 0.0) {
        return Err(Error::invalid(format!(
            "log-demand returns do not mean-revert (slope {} >= 0)",
            fit.slope
        )));
    }
    let mu = -fit.slope / dt_years;
    let m = -fit.intercept / fit.slope;
    // Delta method for m = -intercept/slope.
    let dm_da = -1.0 / fit.slope;
    let dm_db = fit.intercept / (fit.slope * fit.slope);
    let var_m = dm_da * dm_da * fit.se_intercept * fit.se_intercept
        + dm_db * dm_db * fit.se_slope * fit.se_slope
        + 2.0 * dm_da * dm_db * fit.cov_slope_intercept;
    let sigma = fit.residual_sd / dt_years.sqrt();
    let n = returns.len() as f64;
    Ok(DemandFit {
        mu_per_year: mu,
        mean_level_gw: m.exp(),
        sigma_per_sqrt_year: sigma,
        se_mu: fit.se_slope / dt_years,
        se_mean_level_log: var_m.max(0.0).sqrt(),
        se_sigma: sigma / (2.0 * n).sqrt(),
    })
}

/// Log-linear spot fit against the capacity margin.
#[derive(Debug, Clone)]
pub struct SpotFit {
    pub beta0_eur_per_mwh: f64,
    pub beta1_per_gw: f64,
    pub se_beta1: f64,
    pub max_abs_residual: f64,
}

pub fn fit_spot(capacity_gw: &[f64], demand_gw: &[f64], price_eur_mwh: &[f64]) -> Result<SpotFit> {
    if capacity_gw.len() != demand_gw.len() || capacity_gw.len() != price_eur_mwh.len() {
        return Err(Error::invalid("capacity, demand and price series must have equal length"));
    }
    if price_eur_mwh.len() < MIN_ROWS {
        return Err(Error::invalid(format!("need at least {MIN_ROWS} observations")));
    }
    if price_eur_mwh.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::invalid("prices must be strictly positive for the log fit"));
    }
    let margin: Vec<f64> = capacity_gw.iter().zip(demand_gw).map(|(c, d)| c - d).collect();
    let log_price: Vec<f64> = price_eur_mwh.iter().map(|p| p.ln()).collect();
    let fit = ols(&margin, &log_price)?;
    Ok(SpotFit {
        beta0_eur_per_mwh: fit.intercept.exp(),
        beta1_per_gw: -fit.slope,
        se_beta1: fit.se_slope,
        max_abs_residual: fit.max_abs_residual,
    })
}

/// Parameter-file fragment carrying the fitted values, ready to splice into
/// a full configuration. The capacity volatility is user-supplied.
pub fn params_fragment_toml(demand: &DemandFit, spot: &SpotFit, sigma_c: Option<f64>) -> String {
    let mut out = String::new();
    out.push_str("[demand]\n");
    out.push_str(&format!("mu_per_year = {}\n", demand.mu_per_year));
    out.push_str(&format!("mean_level_gw = {}\n", demand.mean_level_gw));
    out.push_str(&format!("sigma_per_sqrt_year = {}\n", demand.sigma_per_sqrt_year));
    out.push_str("\n[spot]\n");
    out.push_str(&format!("beta0_eur_per_mwh = {}\n", spot.beta0_eur_per_mwh));
    out.push_str(&format!("beta1_per_gw = {}\n", spot.beta1_per_gw));
    if let Some(s) = sigma_c {
        out.push_str("\n[capacity]\n");
        out.push_str(&format!("sigma_per_sqrt_year = {s}\n"));
    }
    out
}
