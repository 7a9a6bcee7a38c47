use serde::{Deserialize, Serialize};

/// A point in the (capacity, demand) plane, also used for gradients and
/// contract sensitivities. Units depend on context; state is in GW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub c: f64,
    pub d: f64,
}

impl Pair {
    pub fn new(c: f64, d: f64) -> Self {
        Pair { c, d }
    }

    pub fn min_component(self) -> f64 {
        self.c.min(self.d)
    }
}

/// All model constants in the canonical unit system (GW, Year, M€).
///
/// Flows (costs, spot reward, consumption value) are M€/Year; the spot level
/// `beta0` is kept in its native €/MWh because the spot *price* is quoted per
/// MWh while the spot *flow* converts on the fly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    /// Initial available capacity [GW].
    pub x0_c: f64,
    /// Initial demand [GW].
    pub x0_d: f64,
    /// Capacity volatility [Year^-1/2].
    pub sigma_c: f64,
    /// Log-demand volatility [Year^-1/2].
    pub sigma_d: f64,
    /// Demand mean-reversion speed [Year^-1].
    pub mu_d: f64,
    /// Long-term mean of log demand [log GW].
    pub m_d: f64,
    /// Spot price level [€/MWh].
    pub beta0: f64,
    /// Spot price sensitivity to the capacity margin [GW^-1].
    pub beta1: f64,
    /// Linear build cost [M€ per GW of build].
    pub kappa1: f64,
    /// Quadratic build penalty [M€·Year/GW²].
    pub kappa2: f64,
    /// Maintenance cost [M€/(GW·Year)].
    pub a: f64,
    /// Production cost [M€/(GW·Year)].
    pub b: f64,
    /// Consumption value (VoLL) [M€/(GW·Year)].
    pub theta: f64,
    /// Shortage disutility slope [M€/(GW·Year)].
    pub k: f64,
    /// Producer risk aversion [M€^-1].
    pub eta_a: f64,
    /// Consumer risk aversion [M€^-1].
    pub eta_p: f64,
    /// Cash participation constraint [M€]. Normally computed from the
    /// stand-alone producer problem; 0 until then.
    pub reservation: f64,
    /// Contract length [Year].
    pub horizon: f64,
    /// State truncation ceiling [GW].
    pub x_inf: f64,
    /// Lower bound on the build/dismantle rate [Year^-1].
    pub alpha_min: f64,
    /// Upper bound on the build/dismantle rate [Year^-1].
    pub alpha_max: f64,
}

/// Floor for truncated capacity when it appears in a denominator [GW].
pub const CAPACITY_FLOOR_GW: f64 = 1e-6;

impl ModelParams {
    /// French-system calibration in canonical units.
    pub fn default_french() -> Self {
        use crate::units::*;
        ModelParams {
            x0_c: 90.0,
            x0_d: 60.0,
            sigma_c: 0.1,
            sigma_d: 0.86,
            mu_d: 61.92,
            m_d: 60.0_f64.ln(),
            beta0: 102.8,
            beta1: 335.3e-4,
            kappa1: eur_per_kw_to_meur_per_gw(122.13),
            // Quadratic adjustment set to twice the linear build cost.
            kappa2: 2.0 * eur_per_kw_to_meur_per_gw(122.13),
            a: 75.35 * MEUR_PER_GW_YEAR_PER_EUR_KW_YEAR,
            b: eur_per_mwh_to_flow(17.6),
            theta: eur_per_mwh_to_flow(20_000.0),
            k: eur_per_mwh_to_flow(200_000.0),
            eta_a: 0.852e-4,
            eta_p: 0.8094e-5,
            reservation: 0.0,
            horizon: 5.0,
            x_inf: 200.0,
            alpha_min: -3.0,
            alpha_max: 3.0,
        }
    }

    /// Componentwise truncation at the ceiling `x_inf`.
    pub fn truncate(&self, x: Pair) -> Pair {
        Pair::new(x.c.min(self.x_inf), x.d.min(self.x_inf))
    }

    /// Every violated invariant, each tagged with the offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut pos = |name: &str, value: f64| {
            if !(value > 0.0) {
                v.push(format!("{name}: must be strictly positive, got {value}"));
            }
        };
        pos("sigma_c", self.sigma_c);
        pos("sigma_d", self.sigma_d);
        pos("mu_d", self.mu_d);
        pos("beta0", self.beta0);
        pos("beta1", self.beta1);
        pos("kappa1", self.kappa1);
        pos("kappa2", self.kappa2);
        pos("a", self.a);
        pos("b", self.b);
        pos("theta", self.theta);
        pos("k", self.k);
        pos("eta_a", self.eta_a);
        pos("eta_p", self.eta_p);
        pos("horizon", self.horizon);
        pos("x0_c", self.x0_c);
        pos("x0_d", self.x0_d);
        if !(self.alpha_min < 0.0) {
            v.push(format!("alpha_min: must be negative, got {}", self.alpha_min));
        }
        if !(self.alpha_max > 0.0) {
            v.push(format!("alpha_max: must be positive, got {}", self.alpha_max));
        }
        if !(self.x_inf > self.x0_c.max(self.x0_d)) {
            v.push(format!(
                "x_inf: must exceed max(x0_c, x0_d) = {}, got {}",
                self.x0_c.max(self.x0_d),
                self.x_inf
            ));
        }
        if !(self.reservation >= 0.0) {
            v.push(format!("reservation: must be nonnegative, got {}", self.reservation));
        }
        for (name, value) in [("m_d", self.m_d)] {
            if !value.is_finite() {
                v.push(format!("{name}: must be finite, got {value}"));
            }
        }
        v
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::error::Error::Config(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_calibration_is_valid() {
        assert!(ModelParams::default_french().violations().is_empty());
    }

    #[test]
    fn violations_are_collected_not_first_only() {
        let mut p = ModelParams::default_french();
        p.sigma_c = 0.0;
        p.theta = -1.0;
        p.alpha_max = -2.0;
        let v = p.violations();
        assert_eq!(v.len(), 3, "expected all three violations reported: {v:?}");
        assert!(v.iter().any(|m| m.starts_with("sigma_c")));
        assert!(v.iter().any(|m| m.starts_with("theta")));
        assert!(v.iter().any(|m| m.starts_with("alpha_max")));
    }

    #[test]
    fn truncation_is_componentwise_and_idempotent() {
        let p = ModelParams::default_french();
        let t = p.truncate(Pair::new(90.0, 60.0));
        assert_eq!((t.c, t.d), (90.0, 60.0));
        let t = p.truncate(Pair::new(250.0, 60.0));
        assert_eq!((t.c, t.d), (200.0, 60.0));
        let tt = p.truncate(t);
        assert_eq!((tt.c, tt.d), (t.c, t.d));
    }
}
