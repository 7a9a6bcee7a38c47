//! Instantaneous model functions: state dynamics coefficients, spot price,
//! payment flow, producer cost and consumer flow.
//!
//! All flows are M€/Year on the canonical (GW, Year, M€) system; the spot
//! *price* is €/MWh. Functions that the economics defines on the truncated
//! state truncate internally; the SDE coefficients use the raw state.

use crate::error::{Error, Result};
use crate::params::{ModelParams, Pair};
use crate::units;

/// Drift of (capacity, demand) under build rate `alpha` [GW/Year].
///
/// The demand component carries the usual `sigma_d^2/2` correction from
/// writing the log-mean-reverting dynamics on the level.
pub fn drift_mu(p: &ModelParams, x: Pair, alpha: f64) -> Result<Pair> {
    if !(x.c > 0.0 && x.d > 0.0) {
        return Err(Error::invalid(format!(
            "drift requires a positive state, got ({}, {})",
            x.c, x.d
        )));
    }
    Ok(Pair::new(alpha * x.c, demand_drift(p, x.d)))
}

/// Demand drift component [GW/Year]; separated out because the solver and
/// simulator evaluate it without the capacity part.
#[inline]
pub fn demand_drift(p: &ModelParams, x_d: f64) -> f64 {
    (p.mu_d * (p.m_d - x_d.ln()) + 0.5 * p.sigma_d * p.sigma_d) * x_d
}

/// Diagonal of the volatility matrix [GW/Year^1/2]. Off-diagonal entries are
/// identically zero.
pub fn vol_sigma(p: &ModelParams, x: Pair) -> Result<Pair> {
    if !(x.c > 0.0 && x.d > 0.0) {
        return Err(Error::invalid(format!(
            "volatility requires a positive state, got ({}, {})",
            x.c, x.d
        )));
    }
    Ok(Pair::new(p.sigma_c * x.c, p.sigma_d * x.d))
}

/// Spot price as a function of the capacity margin [€/MWh]. Callers pass the
/// truncated state where the economics requires it.
#[inline]
pub fn spot_price(p: &ModelParams, x: Pair) -> f64 {
    p.beta0 * (-p.beta1 * (x.c - x.d)).exp()
}

/// Spot market reward per unit of time [M€/Year]: price times delivered
/// power, on the truncated state.
#[inline]
pub fn spot_flow(p: &ModelParams, x: Pair) -> f64 {
    let t = p.truncate(x);
    units::eur_per_mwh_to_flow(spot_price(p, t)) * t.min_component()
}

/// Maintenance plus production cost [M€/Year] (the effort-independent part).
#[inline]
pub fn producer_cost_base(p: &ModelParams, x: Pair) -> f64 {
    let t = p.truncate(x);
    p.a * t.c + p.b * t.min_component()
}

/// Build/dismantle cost for rate `alpha` on truncated capacity `xbar_c`
/// [M€/Year].
#[inline]
pub fn build_cost(p: &ModelParams, xbar_c: f64, alpha: f64) -> f64 {
    let rate = alpha * xbar_c;
    p.kappa1 * rate + 0.5 * p.kappa2 * rate * rate
}

/// Full producer cost [M€/Year].
pub fn producer_cost(p: &ModelParams, x: Pair, alpha: f64) -> Result<f64> {
    if !(p.alpha_min..=p.alpha_max).contains(&alpha) {
        return Err(Error::invalid(format!(
            "effort {alpha} outside [{}, {}]",
            p.alpha_min, p.alpha_max
        )));
    }
    Ok(producer_cost_unchecked(p, x, alpha))
}

#[inline]
pub(crate) fn producer_cost_unchecked(p: &ModelParams, x: Pair, alpha: f64) -> f64 {
    producer_cost_base(p, x) + build_cost(p, x.c.min(p.x_inf), alpha)
}

/// Consumer flow [M€/Year]: consumption value minus shortage disutility.
#[inline]
pub fn consumer_flow(p: &ModelParams, x: Pair) -> f64 {
    let t = p.truncate(x);
    p.theta * t.min_component() - p.k * (t.d - t.c).max(0.0)
}

/// Equivalent annual cost of an asset: `n·r·C / (1 - (1+r)^-lifetime)`,
/// in the same unit as `total_cost` (€/kW for a turbine quote).
pub fn equivalent_annual_cost(total_cost: f64, rate: f64, lifetime: f64, n_annuities: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::invalid(format!("discount rate must be positive, got {rate}")));
    }
    if !(lifetime > 0.0) {
        return Err(Error::invalid(format!("lifetime must be positive, got {lifetime}")));
    }
    Ok(n_annuities * rate * total_cost / (1.0 - (1.0 + rate).powf(-lifetime)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams::default_french()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn drift_at_mean_demand_leaves_only_the_ito_term() {
        // At x_d = exp(m_d) = 60 the mean-reversion term vanishes.
        let d = drift_mu(&p(), Pair::new(90.0, 60.0), 0.0).unwrap();
        assert_eq!(d.c, 0.0);
        assert!(rel_err(d.d, 0.5 * 0.86 * 0.86 * 60.0) < 1e-12, "got {}", d.d);
        assert!((d.d - 22.188).abs() < 1e-9);
    }

    #[test]
    fn drift_capacity_component_is_alpha_times_capacity() {
        let d = drift_mu(&p(), Pair::new(90.0, 60.0), 0.1).unwrap();
        assert!((d.c - 9.0).abs() < 1e-12);
    }

    #[test]
    fn drift_one_log_unit_above_mean() {
        let x_d = 60.0 * std::f64::consts::E;
        let d = drift_mu(&p(), Pair::new(90.0, x_d), 0.0).unwrap();
        let expect = (-61.92 + 0.5 * 0.86 * 0.86) * x_d;
        assert!(rel_err(d.d, expect) < 1e-12);
    }

    #[test]
    fn drift_rejects_nonpositive_state() {
        assert!(drift_mu(&p(), Pair::new(0.0, 60.0), 0.0).is_err());
        assert!(vol_sigma(&p(), Pair::new(90.0, -1.0)).is_err());
    }

    #[test]
    fn volatility_diagonal() {
        let v = vol_sigma(&p(), Pair::new(90.0, 60.0)).unwrap();
        assert!((v.c - 9.0).abs() < 1e-12);
        assert!((v.d - 51.6).abs() < 1e-12);
    }

    #[test]
    fn spot_price_values() {
        let params = p();
        // Zero margin: price equals the level parameter.
        assert!(rel_err(spot_price(&params, Pair::new(60.0, 60.0)), 102.8) < 1e-12);
        let price = spot_price(&params, Pair::new(90.0, 60.0));
        assert!((price - 37.59).abs() < 5e-3, "got {price}");
        assert!(rel_err(price, 102.8 * (-335.3e-4 * 30.0f64).exp()) < 1e-12);
    }

    #[test]
    fn spot_price_margin_scaling() {
        let params = p();
        let p0 = spot_price(&params, Pair::new(90.0, 60.0));
        let p1 = spot_price(&params, Pair::new(91.0, 60.0));
        assert!(rel_err(p1, p0 * (-params.beta1).exp()) < 1e-12);
    }

    #[test]
    fn spot_flow_composition() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let expect = spot_price(&params, x) * 8.76 * 60.0;
        assert!(rel_err(spot_flow(&params, x), expect) < 1e-12);
        assert!((spot_flow(&params, x) - 19_757.0).abs() / 19_757.0 < 1e-3);
        // No delivered energy, no reward.
        assert_eq!(spot_flow(&params, Pair::new(0.0, 60.0)), 0.0);
        // Only the min enters, whichever side binds.
        let short = spot_flow(&params, Pair::new(50.0, 60.0));
        assert!(rel_err(short, spot_price(&params, Pair::new(50.0, 60.0)) * 8.76 * 50.0) < 1e-12);
    }

    #[test]
    fn producer_cost_components() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let c0 = producer_cost(&params, x, 0.0).unwrap();
        assert!(rel_err(c0, params.a * 90.0 + params.b * 60.0) < 1e-12);
        // Unit build rate adds kappa1 + kappa2/2.
        let alpha = 1.0 / 90.0;
        let c1 = producer_cost(&params, x, alpha).unwrap();
        assert!(rel_err(c1 - c0, params.kappa1 + 0.5 * params.kappa2) < 1e-9);
        assert!(producer_cost(&params, x, 4.0).is_err());
    }

    #[test]
    fn build_cost_minimum_matches_quadratic_vertex() {
        let params = p();
        let xbar = 90.0;
        // Brute-force scan over the build rate.
        let mut best = (f64::INFINITY, 0.0);
        let n = 200_001;
        for i in 0..n {
            let alpha = params.alpha_min + (params.alpha_max - params.alpha_min) * i as f64 / (n - 1) as f64;
            let v = build_cost(&params, xbar, alpha);
            if v < best.0 {
                best = (v, alpha);
            }
        }
        let vertex_rate = -params.kappa1 / params.kappa2;
        let vertex_value = -params.kappa1 * params.kappa1 / (2.0 * params.kappa2);
        assert!((best.1 * xbar - vertex_rate).abs() < 2.0 * xbar * 6.0 / (n - 1) as f64);
        assert!((best.0 - vertex_value).abs() / vertex_value.abs() < 1e-6);
    }

    #[test]
    fn consumer_flow_branches_and_continuity() {
        let params = p();
        assert!(rel_err(consumer_flow(&params, Pair::new(90.0, 60.0)), params.theta * 60.0) < 1e-12);
        let short = consumer_flow(&params, Pair::new(50.0, 60.0));
        assert!(rel_err(short, params.theta * 50.0 - params.k * 10.0) < 1e-12);
        // Piecewise join at x_c = x_d.
        let a = consumer_flow(&params, Pair::new(60.0, 60.0));
        assert!(rel_err(a, params.theta * 60.0) < 1e-12);
    }

    #[test]
    fn consumer_flow_bounded_by_reservation_value() {
        let params = p();
        for i in 0..50 {
            for j in 0..50 {
                let x = Pair::new(5.0 + 4.0 * i as f64, 5.0 + 4.0 * j as f64);
                let t = params.truncate(x);
                let flow = consumer_flow(&params, x);
                assert!(flow <= params.theta * t.d + 1e-9);
                if t.c >= t.d {
                    assert!(rel_err(flow, params.theta * t.d) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flows_invariant_under_higher_ceiling_when_inactive() {
        let mut lo = p();
        lo.x_inf = 150.0;
        let mut hi = p();
        hi.x_inf = 1500.0;
        for x in [Pair::new(90.0, 60.0), Pair::new(140.0, 149.0), Pair::new(10.0, 149.0)] {
            assert_eq!(spot_flow(&lo, x), spot_flow(&hi, x));
            assert_eq!(consumer_flow(&lo, x), consumer_flow(&hi, x));
            assert_eq!(
                producer_cost(&lo, x, 0.5).unwrap(),
                producer_cost(&hi, x, 0.5).unwrap()
            );
        }
    }

    #[test]
    fn log_spot_price_is_affine_in_margin() {
        // Regress log price on margin over exact samples; the slope must be
        // -beta1 with negligible residual.
        let params = p();
        let mut pts = Vec::new();
        for i in 0..60 {
            let margin = -20.0 + i as f64;
            let price = spot_price(&params, Pair::new(60.0 + margin, 60.0));
            pts.push((margin, price.ln()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        assert!((slope + params.beta1).abs() < 1e-12);
        for (x, y) in pts {
            assert!((intercept + slope * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn equivalent_annual_cost_reference_values() {
        let v = equivalent_annual_cost(550.0, 0.08, 30.0, 2.5).unwrap();
        assert!((v - 122.13).abs() < 0.01, "got {v}");
        let single = equivalent_annual_cost(550.0, 0.08, 30.0, 1.0).unwrap();
        assert!((single - 48.85).abs() < 0.005, "got {single}");
        assert!(rel_err(2.5 * single, v) < 1e-12);
        // Perpetuity limit: n = 1, long lifetime -> r * C.
        let perp = equivalent_annual_cost(550.0, 0.08, 1e7, 1.0).unwrap();
        assert!(rel_err(perp, 0.08 * 550.0) < 1e-9);
        assert!(equivalent_annual_cost(550.0, 0.0, 30.0, 1.0).is_err());
    }
}
