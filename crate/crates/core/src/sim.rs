//! Seeded Monte Carlo forward simulator: explicit Euler diffusion of the
//! (capacity, demand) state under one of three policies, with the full
//! per-path financial ledger.
//!
//! Determinism: every path draws from its own counter-derived stream of the
//! master seed (`ChaCha8`, `set_stream(path index)`), so results are
//! bitwise reproducible for a fixed (seed, config) no matter how many
//! worker threads run the ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldStack, GridSpec};
use crate::model;
use crate::params::{ModelParams, Pair};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Contract in force: recommended effort and the optimal sensitivity
    /// fields drive both the state and the payment process.
    WithCrm,
    /// No contract: the producer follows his stand-alone optimal effort.
    WithoutCrm,
    /// No contract and no capacity adjustment (zero effort).
    NoAdjustment,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::WithCrm => "with_crm",
            PolicyKind::WithoutCrm => "without_crm",
            PolicyKind::NoAdjustment => "no_adjustment",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "with_crm" | "withcrm" | "crm" => Ok(PolicyKind::WithCrm),
            "without_crm" | "withoutcrm" => Ok(PolicyKind::WithoutCrm),
            "no_adjustment" | "noadjustment" | "none" => Ok(PolicyKind::NoAdjustment),
            other => Err(Error::invalid(format!("unknown policy '{other}'"))),
        }
    }
}

/// Per-step control fields required by a policy.
#[derive(Clone, Copy)]
pub enum PolicyFields<'a> {
    WithCrm {
        z_c: &'a FieldStack,
        z_d: &'a FieldStack,
        alpha: &'a FieldStack,
        /// Initial value of the payment process.
        reservation: f64,
    },
    WithoutCrm { alpha: &'a FieldStack },
    NoAdjustment,
}

impl PolicyFields<'_> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyFields::WithCrm { .. } => PolicyKind::WithCrm,
            PolicyFields::WithoutCrm { .. } => PolicyKind::WithoutCrm,
            PolicyFields::NoAdjustment => PolicyKind::NoAdjustment,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Bilinear interpolation of the control fields instead of the
    /// nearest-lower-node read. Off by default; for convergence studies.
    pub interpolate: bool,
    /// Keep the full time series on the ledger.
    pub record_paths: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { interpolate: false, record_paths: false }
    }
}

/// Recorded state/payment trajectories (only when requested).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub x_c: Vec<f64>,
    pub x_d: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

/// One simulated scenario's running accounts. Monetary totals are M€ over
/// the horizon; the payment process only exists under the contract policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioLedger {
    pub path_id: u64,
    pub policy: PolicyKind,
    /// Cumulative spot payment S_T [M€].
    pub spot_revenue: f64,
    /// Terminal contract payment (capacity remuneration) [M€].
    pub capacity_payment: Option<f64>,
    /// Initial value of the payment process [M€].
    pub reservation: Option<f64>,
    /// Realized noise transferred to the producer [M€].
    pub risk_shared: Option<f64>,
    /// Deterministic premium offsetting producer risk aversion [M€].
    pub risk_compensation: Option<f64>,
    pub cost_construction: f64,
    pub cost_maintenance: f64,
    pub cost_production: f64,
    pub shortage_hours_per_year: f64,
    pub delivered_twh: f64,
    pub average_margin_gw: f64,
    pub average_spot_eur_mwh: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathRecord>,
}

impl ScenarioLedger {
    pub fn total_costs(&self) -> f64 {
        self.cost_construction + self.cost_maintenance + self.cost_production
    }

    /// Spot plus capacity payment [M€].
    pub fn total_compensation(&self) -> f64 {
        self.spot_revenue + self.capacity_payment.unwrap_or(0.0)
    }

    pub fn missing_money(&self) -> bool {
        self.total_costs() > self.spot_revenue
    }

    /// Negative capacity remuneration.
    pub fn ncr(&self) -> Option<bool> {
        self.capacity_payment.map(|xi| xi < 0.0)
    }

    pub fn negative_total_compensation(&self) -> Option<bool> {
        self.capacity_payment.map(|xi| self.spot_revenue + xi < 0.0)
    }

    pub fn negative_net_revenues(&self) -> bool {
        self.total_compensation() - self.total_costs() < 0.0
    }

    /// Relative gap of `Y_T + S_T = R + costs + risk shared + risk
    /// compensation`; exact by construction up to accumulated rounding.
    pub fn identity_gap(&self) -> Option<f64> {
        let xi = self.capacity_payment?;
        let lhs = xi + self.spot_revenue;
        let rhs = self.reservation? + self.total_costs() + self.risk_shared? + self.risk_compensation?;
        Some((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0))
    }
}

/// Shortage hours per year from a recorded path: steps are counted at their
/// start, strict inequality, ties are no shortage.
pub fn shortage_hours(x_c: &[f64], x_d: &[f64], dt: f64, horizon: f64) -> f64 {
    let n = x_c.len().min(x_d.len()).saturating_sub(1);
    let count = (0..n).filter(|&k| x_d[k] > x_c[k]).count();
    dt * count as f64 * units::HOURS_PER_YEAR / horizon
}

#[inline]
fn bilinear(stack: &FieldStack, k: usize, g: &GridSpec, x: Pair) -> f64 {
    let xc = x.c.clamp(g.x_c_min, g.x_c_max);
    let xd = x.d.clamp(g.x_d_min, g.x_d_max);
    let fi = ((xc - g.x_c_min) / g.dx_c()).min(g.n_c as f64 - 1e-12).max(0.0);
    let fj = ((xd - g.x_d_min) / g.dx_d()).min(g.n_d as f64 - 1e-12).max(0.0);
    let i = fi.floor() as usize;
    let j = fj.floor() as usize;
    let tc = fi - i as f64;
    let td = fj - j as f64;
    let m = &stack[k];
    (1.0 - tc) * ((1.0 - td) * m.at(i, j) + td * m.at(i, j + 1))
        + tc * ((1.0 - td) * m.at(i + 1, j) + td * m.at(i + 1, j + 1))
}

struct StepControls {
    alpha: f64,
    z: Pair,
}

#[inline]
fn controls_at(
    p: &ModelParams,
    g: &GridSpec,
    fields: &PolicyFields<'_>,
    k: usize,
    x: Pair,
    interpolate: bool,
) -> Result<StepControls> {
    match fields {
        PolicyFields::WithCrm { z_c, z_d, alpha, .. } => {
            if interpolate {
                let zc = bilinear(z_c, k, g, x);
                let zd = bilinear(z_d, k, g, x);
                let a = crate::control::recommended_effort(p, x.c, zc)?;
                Ok(StepControls { alpha: a, z: Pair::new(zc, zd) })
            } else {
                let (i, j) = g.clamp_floor_index(x);
                Ok(StepControls {
                    alpha: alpha[k].at(i, j),
                    z: Pair::new(z_c[k].at(i, j), z_d[k].at(i, j)),
                })
            }
        }
        PolicyFields::WithoutCrm { alpha } => {
            let a = if interpolate {
                // Effort is clipped, so interpolate the field directly.
                bilinear(alpha, k, g, x).clamp(p.alpha_min, p.alpha_max)
            } else {
                let (i, j) = g.clamp_floor_index(x);
                alpha[k].at(i, j)
            };
            Ok(StepControls { alpha: a, z: Pair::new(0.0, 0.0) })
        }
        PolicyFields::NoAdjustment => Ok(StepControls { alpha: 0.0, z: Pair::new(0.0, 0.0) }),
    }
}

/// Diffuse one scenario. `effort_shift` perturbs the executed effort away
/// from the recommendation while the payment process keeps honoring the
/// contract written on the recommended-effort fields and the realized
/// state; zero reproduces the contract simulation exactly.
fn simulate_path_inner(
    p: &ModelParams,
    g: &GridSpec,
    fields: &PolicyFields<'_>,
    opts: &SimOptions,
    effort_shift: f64,
    path_id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ScenarioLedger> {
    let x0 = Pair::new(p.x0_c, p.x0_d);
    if !g.contains(x0) {
        return Err(Error::invalid(format!(
            "initial state ({}, {}) outside the solved grid",
            x0.c, x0.d
        )));
    }
    let n_t = g.n_t;
    let dt = g.dt(p.horizon);
    let sqrt_dt = dt.sqrt();
    let is_crm = matches!(fields, PolicyFields::WithCrm { .. });
    let reservation = match fields {
        PolicyFields::WithCrm { reservation, .. } => Some(*reservation),
        _ => None,
    };

    let mut x = x0;
    let mut y = reservation.unwrap_or(0.0);
    let mut spot_revenue = 0.0f64;
    let mut int_min = 0.0f64; // integral of delivered power [GW·Year]
    let mut cost_construction = 0.0f64;
    let mut cost_maintenance = 0.0f64;
    let mut risk_shared = 0.0f64;
    let mut risk_compensation = 0.0f64;
    let mut shortage_steps = 0usize;
    let mut margin_sum = 0.0f64;
    let mut spot_sum = 0.0f64;

    let mut rec_xc = Vec::new();
    let mut rec_xd = Vec::new();
    let mut rec_y = Vec::new();
    if opts.record_paths {
        rec_xc.reserve(n_t + 1);
        rec_xd.reserve(n_t + 1);
        rec_xc.push(x.c);
        rec_xd.push(x.d);
        if is_crm {
            rec_y.reserve(n_t + 1);
            rec_y.push(y);
        }
    }

    for k in 1..=n_t {
        let ctrl = controls_at(p, g, fields, k - 1, x, opts.interpolate)?;
        let alpha_exec = if effort_shift == 0.0 {
            ctrl.alpha
        } else {
            (ctrl.alpha + effort_shift).clamp(p.alpha_min, p.alpha_max)
        };

        // Left-endpoint accumulation on the state at the step start.
        let xbar = p.truncate(x);
        let min_bar = xbar.min_component();
        let price = model::spot_price(p, xbar);
        let flow = units::eur_per_mwh_to_flow(price) * min_bar;
        spot_revenue += dt * flow;
        int_min += dt * min_bar;
        cost_maintenance += dt * p.a * xbar.c;
        cost_construction += dt * model::build_cost(p, xbar.c, alpha_exec);
        if x.d > x.c {
            shortage_steps += 1;
        }
        margin_sum += x.c - x.d;
        spot_sum += price;

        let vol_c = p.sigma_c * x.c;
        let vol_d = p.sigma_d * x.d;
        let eps_c: f64 = StandardNormal.sample(rng);
        let eps_d: f64 = StandardNormal.sample(rng);

        if is_crm {
            let quad = (vol_c * ctrl.z.c) * (vol_c * ctrl.z.c) + (vol_d * ctrl.z.d) * (vol_d * ctrl.z.d);
            let cost_flow = model::producer_cost_base(p, x) + model::build_cost(p, xbar.c, ctrl.alpha);
            let noise = ctrl.z.c * vol_c * eps_c + ctrl.z.d * vol_d * eps_d;
            y += dt * (cost_flow + 0.5 * p.eta_a * quad - flow) + sqrt_dt * noise;
            if effort_shift != 0.0 {
                // The contract pays out on the realized state: a deviating
                // effort shows up through Z·dX.
                y += dt * ctrl.z.c * (alpha_exec - ctrl.alpha) * x.c;
            }
            risk_shared += sqrt_dt * noise;
            risk_compensation += dt * 0.5 * p.eta_a * quad;
        }

        let drift_d = model::demand_drift(p, x.d);
        x = Pair::new(
            x.c + dt * alpha_exec * x.c + sqrt_dt * vol_c * eps_c,
            x.d + dt * drift_d + sqrt_dt * vol_d * eps_d,
        );
        if !(x.c > 0.0 && x.d > 0.0 && x.c.is_finite() && x.d.is_finite()) {
            return Err(Error::StateOutOfBounds { step: k, x_c: x.c, x_d: x.d });
        }
        if opts.record_paths {
            rec_xc.push(x.c);
            rec_xd.push(x.d);
            if is_crm {
                rec_y.push(y);
            }
        }
    }

    Ok(ScenarioLedger {
        path_id,
        policy: fields.kind(),
        spot_revenue,
        capacity_payment: is_crm.then_some(y),
        reservation,
        risk_shared: is_crm.then_some(risk_shared),
        risk_compensation: is_crm.then_some(risk_compensation),
        cost_construction,
        cost_maintenance,
        cost_production: p.b * int_min,
        shortage_hours_per_year: dt * shortage_steps as f64 * units::HOURS_PER_YEAR / p.horizon,
        delivered_twh: units::TWH_PER_GW_YEAR * int_min,
        average_margin_gw: margin_sum / n_t as f64,
        average_spot_eur_mwh: spot_sum / n_t as f64,
        path: opts.record_paths.then(|| PathRecord {
            x_c: rec_xc,
            x_d: rec_xd,
            y: is_crm.then_some(rec_y),
        }),
    })
}

fn stream_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// Simulate one scenario on the sub-stream `path_id` of the master seed.
pub fn simulate_path(
    p: &ModelParams,
    g: &GridSpec,
    fields: &PolicyFields<'_>,
    opts: &SimOptions,
    master_seed: u64,
    path_id: u64,
) -> Result<ScenarioLedger> {
    let mut rng = stream_rng(master_seed, path_id);
    simulate_path_inner(p, g, fields, opts, 0.0, path_id, &mut rng)
}

/// Simulate `n` independent scenarios. Paths are distributed over the
/// available workers; each owns its counter-derived stream so the ensemble
/// is bitwise identical for any worker count.
pub fn simulate_ensemble(
    p: &ModelParams,
    g: &GridSpec,
    fields: &PolicyFields<'_>,
    opts: &SimOptions,
    n: usize,
    master_seed: u64,
) -> Result<Vec<ScenarioLedger>> {
    if n == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        (0..n as u64)
            .into_par_iter()
            .map(|id| {
                let mut rng = stream_rng(master_seed, id);
                simulate_path_inner(p, g, fields, opts, 0.0, id, &mut rng)
            })
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n as u64)
            .map(|id| {
                let mut rng = stream_rng(master_seed, id);
                simulate_path_inner(p, g, fields, opts, 0.0, id, &mut rng)
            })
            .collect()
    }
}

/// Monte Carlo mean and standard error of the producer's realized utility
/// when he executes the recommended effort shifted by `effort_shift`, under
/// the unchanged contract. Zero shift estimates the utility of honoring the
/// recommendation.
pub fn producer_utility_under_shift(
    p: &ModelParams,
    g: &GridSpec,
    fields: &PolicyFields<'_>,
    effort_shift: f64,
    n: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    if !matches!(fields, PolicyFields::WithCrm { .. }) {
        return Err(Error::invalid("utility estimation requires the contract policy"));
    }
    let opts = SimOptions::default();
    let utility = |ledger: &ScenarioLedger| -> f64 {
        let wealth = ledger.capacity_payment.unwrap_or(0.0) + ledger.spot_revenue - ledger.total_costs();
        -(-p.eta_a * wealth).exp()
    };
    let compute = |id: u64| -> Result<f64> {
        let mut rng = stream_rng(master_seed, id);
        let ledger = simulate_path_inner(p, g, fields, &opts, effort_shift, id, &mut rng)?;
        Ok(utility(&ledger))
    };
    #[cfg(feature = "parallel")]
    let samples: Vec<f64> = (0..n as u64).into_par_iter().map(compute).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<f64> = (0..n as u64).map(compute).collect::<Result<_>>()?;

    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n as f64;
    Ok((mean, (var / n as f64).sqrt()))
}
