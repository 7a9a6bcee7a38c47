//! Analytic control objects: the producer Hamiltonian and its maximizer (the
//! recommended effort), the consumer Hamiltonian with its explicit optimal
//! contract sensitivity, the gradient-squared coefficients of the
//! approximating equation, and the stand-alone producer controls used by the
//! participation-constraint problem.

use crate::error::{Error, Result};
use crate::model;
use crate::params::{ModelParams, Pair, CAPACITY_FLOOR_GW};

/// Symmetric 2x2 second-derivative block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian {
    pub cc: f64,
    pub cd: f64,
    pub dd: f64,
}

impl Hessian {
    pub fn zero() -> Self {
        Hessian { cc: 0.0, cd: 0.0, dd: 0.0 }
    }
}

/// Feedback data at one state: contract sensitivity, effort, and the value
/// gradient/Hessian they were derived from.
#[derive(Debug, Clone, Copy)]
pub struct ControlPoint {
    pub z: Pair,
    pub alpha: f64,
    pub gradient: Pair,
    pub hessian: Hessian,
}

fn floored_truncated_capacity(p: &ModelParams, x_c: f64) -> Result<f64> {
    if !(x_c > 0.0) {
        return Err(Error::invalid(format!("capacity must be positive, got {x_c}")));
    }
    let xbar = x_c.min(p.x_inf);
    if xbar < CAPACITY_FLOOR_GW {
        return Err(Error::invalid(format!(
            "truncated capacity {xbar} below floor {CAPACITY_FLOOR_GW}"
        )));
    }
    Ok(xbar)
}

/// The producer's best response to a contract with capacity sensitivity
/// `z_c`: the clipped maximizer of his Hamiltonian over the effort rate.
pub fn recommended_effort(p: &ModelParams, x_c: f64, z_c: f64) -> Result<f64> {
    let xbar = floored_truncated_capacity(p, x_c)?;
    let raw = (z_c * x_c - p.kappa1 * xbar) / (xbar * xbar * p.kappa2);
    Ok(raw.clamp(p.alpha_min, p.alpha_max))
}

/// Producer Hamiltonian at a fixed effort:
/// `z·mu(x,alpha) + s(x) - c_A(x,alpha) - eta_A/2 |sigma(x) z|^2`.
pub fn producer_hamiltonian_at(p: &ModelParams, x: Pair, z: Pair, alpha: f64) -> Result<f64> {
    if !(p.alpha_min..=p.alpha_max).contains(&alpha) {
        return Err(Error::invalid(format!(
            "effort {alpha} outside [{}, {}]",
            p.alpha_min, p.alpha_max
        )));
    }
    let mu = model::drift_mu(p, x, alpha)?;
    let vol = model::vol_sigma(p, x)?;
    let quad = vol.c * z.c * (vol.c * z.c) + vol.d * z.d * (vol.d * z.d);
    Ok(z.c * mu.c + z.d * mu.d + model::spot_flow(p, x) - model::producer_cost_unchecked(p, x, alpha)
        - 0.5 * p.eta_a * quad)
}

/// Producer Hamiltonian maximized over the admissible effort interval.
pub fn producer_hamiltonian(p: &ModelParams, x: Pair, z: Pair) -> Result<f64> {
    let alpha = recommended_effort(p, x.c, z.c)?;
    producer_hamiltonian_at(p, x, z, alpha)
}

/// Optimal contract sensitivity `(z_c, z_d)` given the consumer value
/// gradient, on the branch where the effort stays strictly inside its
/// bounds. `z_d` is exact everywhere; `z_c` is the stationary point of the
/// consumer objective in closed form.
pub fn optimal_contract_sensitivity(p: &ModelParams, x: Pair, gradient: Pair) -> Result<Pair> {
    let node = ConsumerNode::new(p, x)?;
    let (z_c, _, _) = node.maximize_z_c(gradient.c);
    Ok(Pair::new(z_c, node.z_d_weight * gradient.d))
}

/// Consumer running objective at an arbitrary contract sensitivity `z`
/// (before maximization). The cross second derivative carries zero weight
/// because the volatility matrix is diagonal.
pub fn consumer_hamiltonian_at(
    p: &ModelParams,
    x: Pair,
    gradient: Pair,
    hessian: Hessian,
    z: Pair,
) -> Result<f64> {
    let node = ConsumerNode::new(p, x)?;
    let alpha = recommended_effort(p, x.c, z.c)?;
    let phi = node.effort_gain(alpha, gradient.c);
    let psi_c = node.psi_c(z.c, gradient.c);
    let psi_d = -0.5 * (p.eta_a + p.eta_p) * node.sd2 * z.d * z.d + p.eta_p * node.sd2 * gradient.d * z.d;
    Ok(node.linear_part(gradient, hessian) + phi + psi_c + psi_d)
}

/// Consumer Hamiltonian: the running objective maximized over the contract
/// sensitivity. Exact, including states where the effort clips.
pub fn consumer_hamiltonian(p: &ModelParams, x: Pair, gradient: Pair, hessian: Hessian) -> Result<f64> {
    let node = ConsumerNode::new(p, x)?;
    let out = node.eval(gradient.c, gradient.d, hessian.cc, hessian.dd);
    Ok(out.value)
}

/// Coefficients of the gradient-squared approximation of the consumer
/// equation: `f = c_A_base - c_P` and the two quadratic coefficients, as
/// printed.
pub fn approx_pde_coefficients(p: &ModelParams, x: Pair) -> (f64, Pair) {
    let f = model::producer_cost_base(p, x) - model::consumer_flow(p, x);
    let sc2 = p.sigma_c * x.c * (p.sigma_c * x.c);
    let sd2 = p.sigma_d * x.d * (p.sigma_d * x.d);
    let inv_k2 = 1.0 / p.kappa2;
    let rho_c = (inv_k2 * inv_k2 + inv_k2 * p.eta_p * sc2 - p.eta_a * p.eta_p * sc2 * sc2)
        / ((p.eta_a + p.eta_p) * sc2 + inv_k2);
    let rho_d = -p.eta_a * p.eta_p * sd2 / (p.eta_a + p.eta_p);
    (f, Pair::new(rho_c, rho_d))
}

/// Consumer Hamiltonian assembled from the approximating-equation pieces
/// (drift shift, `rho` quadratics). The constant term is
/// `c_P - c_A_base + kappa1^2/(2 kappa2)`: the epsilon-free evaluation of the
/// exact Hamiltonian at zero gradient, which fixes the sign of the `f` term
/// relative to a literal transcription. Valid where the ceiling and the
/// effort bounds are inactive.
pub fn approx_consumer_hamiltonian(p: &ModelParams, x: Pair, gradient: Pair, hessian: Hessian) -> f64 {
    let (f, rho) = approx_pde_coefficients(p, x);
    let sc2 = p.sigma_c * x.c * (p.sigma_c * x.c);
    let sd2 = p.sigma_d * x.d * (p.sigma_d * x.d);
    let drift_c = -p.kappa1 / p.kappa2;
    let drift_d = model::demand_drift(p, x.d);
    drift_c * gradient.c
        + drift_d * gradient.d
        + 0.5 * (sc2 * hessian.cc + sd2 * hessian.dd)
        - f
        + p.kappa1 * p.kappa1 / (2.0 * p.kappa2)
        + 0.5 * (rho.c * gradient.c * gradient.c + rho.d * gradient.d * gradient.d)
}

/// Stand-alone producer's optimal effort as a function of the certainty
/// equivalent gradient in capacity.
pub fn standalone_effort(p: &ModelParams, x: Pair, du_c: f64) -> Result<f64> {
    let xbar = floored_truncated_capacity(p, x.c)?;
    let raw = (du_c * x.c - p.kappa1 * xbar) / (xbar * xbar * p.kappa2);
    Ok(raw.clamp(p.alpha_min, p.alpha_max))
}

/// Stand-alone producer Hamiltonian in utility form at a fixed effort:
/// `mu(x,alpha)·z + 1/2 sigma sigma^T : gamma + eta_A (c_A(x,alpha) - s(x)) y`.
pub fn standalone_hamiltonian_at(
    p: &ModelParams,
    x: Pair,
    y: f64,
    z: Pair,
    gamma: Hessian,
    alpha: f64,
) -> Result<f64> {
    if !(p.alpha_min..=p.alpha_max).contains(&alpha) {
        return Err(Error::invalid(format!(
            "effort {alpha} outside [{}, {}]",
            p.alpha_min, p.alpha_max
        )));
    }
    let mu = model::drift_mu(p, x, alpha)?;
    let sc2 = p.sigma_c * x.c * (p.sigma_c * x.c);
    let sd2 = p.sigma_d * x.d * (p.sigma_d * x.d);
    Ok(z.c * mu.c + z.d * mu.d + 0.5 * (sc2 * gamma.cc + sd2 * gamma.dd)
        + p.eta_a * (model::producer_cost_unchecked(p, x, alpha) - model::spot_flow(p, x)) * y)
}

/// Stand-alone producer Hamiltonian maximized over the effort. For the value
/// function `y < 0` (a utility level) the objective is strictly concave and
/// the clipped vertex is the maximizer; degenerate signs fall back to
/// endpoint comparison.
pub fn standalone_hamiltonian(p: &ModelParams, x: Pair, y: f64, z: Pair, gamma: Hessian) -> Result<f64> {
    let xbar = floored_truncated_capacity(p, x.c)?;
    // alpha-terms: alpha * (x_c z_c + eta_A y kappa1 xbar)
    //            + alpha^2 * eta_A y kappa2 xbar^2 / 2
    let lin = x.c * z.c + p.eta_a * y * p.kappa1 * xbar;
    let quad = 0.5 * p.eta_a * y * p.kappa2 * xbar * xbar;
    let alpha = if quad < 0.0 {
        (-lin / (2.0 * quad)).clamp(p.alpha_min, p.alpha_max)
    } else if quad == 0.0 {
        if lin >= 0.0 {
            p.alpha_max
        } else {
            p.alpha_min
        }
    } else {
        // Convex in alpha: supremum at one of the endpoints.
        let at_min = standalone_hamiltonian_at(p, x, y, z, gamma, p.alpha_min)?;
        let at_max = standalone_hamiltonian_at(p, x, y, z, gamma, p.alpha_max)?;
        return Ok(at_min.max(at_max));
    };
    standalone_hamiltonian_at(p, x, y, z, gamma, alpha)
}

/// Per-node precomputation for the consumer equation. Everything here is
/// time-independent, so the solver builds one per grid node and reuses it
/// across all backward steps.
#[derive(Debug, Clone)]
pub(crate) struct ConsumerNode {
    pub x_c: f64,
    /// c_P(x) - c_A_base(x).
    pub base: f64,
    pub drift_d: f64,
    pub sc2: f64,
    pub sd2: f64,
    pub eta_p: f64,
    pub eta_sum: f64,
    /// eta_P / (eta_A + eta_P); the exact demand sensitivity weight.
    pub z_d_weight: f64,
    /// kappa1 * truncated capacity.
    pub k1_xbar: f64,
    /// kappa2 * truncated capacity squared (curvature of the build cost).
    pub c2: f64,
    pub inv_c2: f64,
    /// Interior-branch sensitivity weight numerator / denominator.
    pub w_num: f64,
    pub w_den: f64,
    /// Sensitivities at which the effort hits its bounds.
    pub z_lo: f64,
    pub z_hi: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeOutput {
    pub value: f64,
    pub z_c: f64,
    pub z_d: f64,
    pub alpha: f64,
}

impl ConsumerNode {
    pub fn new(p: &ModelParams, x: Pair) -> Result<Self> {
        if !(x.d > 0.0) {
            return Err(Error::invalid(format!("demand must be positive, got {}", x.d)));
        }
        let xbar = floored_truncated_capacity(p, x.c)?;
        let sc2 = p.sigma_c * x.c * (p.sigma_c * x.c);
        let sd2 = p.sigma_d * x.d * (p.sigma_d * x.d);
        let rho = x.c / xbar;
        let r_over_k2 = rho * rho / p.kappa2;
        let c2 = p.kappa2 * xbar * xbar;
        let k1_xbar = p.kappa1 * xbar;
        Ok(ConsumerNode {
            x_c: x.c,
            base: model::consumer_flow(p, x) - model::producer_cost_base(p, x),
            drift_d: model::demand_drift(p, x.d),
            sc2,
            sd2,
            eta_p: p.eta_p,
            eta_sum: p.eta_a + p.eta_p,
            z_d_weight: p.eta_p / (p.eta_a + p.eta_p),
            k1_xbar,
            c2,
            inv_c2: 1.0 / c2,
            w_num: p.eta_p * sc2 + r_over_k2,
            w_den: (p.eta_a + p.eta_p) * sc2 + r_over_k2,
            z_lo: (p.alpha_min * c2 + k1_xbar) / x.c,
            z_hi: (p.alpha_max * c2 + k1_xbar) / x.c,
            alpha_min: p.alpha_min,
            alpha_max: p.alpha_max,
        })
    }

    /// Effort-dependent gain `alpha (x_c p_c - kappa1 xbar) - c2 alpha^2 / 2`.
    #[inline]
    pub fn effort_gain(&self, alpha: f64, p_c: f64) -> f64 {
        alpha * (self.x_c * p_c - self.k1_xbar) - 0.5 * self.c2 * alpha * alpha
    }

    /// Quadratic sensitivity terms in the capacity direction.
    #[inline]
    pub fn psi_c(&self, z_c: f64, p_c: f64) -> f64 {
        -0.5 * self.eta_sum * self.sc2 * z_c * z_c + self.eta_p * self.sc2 * p_c * z_c
    }

    #[inline]
    fn clipped_effort(&self, z_c: f64) -> f64 {
        ((z_c * self.x_c - self.k1_xbar) * self.inv_c2).clamp(self.alpha_min, self.alpha_max)
    }

    #[inline]
    fn objective_at(&self, z_c: f64, p_c: f64) -> (f64, f64) {
        let alpha = self.clipped_effort(z_c);
        (self.effort_gain(alpha, p_c) + self.psi_c(z_c, p_c), alpha)
    }

    /// Exact maximization over the capacity sensitivity. The objective is
    /// piecewise concave-quadratic with kinks where the effort saturates, so
    /// the maximum over each branch is closed-form and the global maximum is
    /// the best of the three branch candidates.
    #[inline]
    pub fn maximize_z_c(&self, p_c: f64) -> (f64, f64, f64) {
        let z_int = self.w_num * p_c / self.w_den;
        let z_psi = self.z_d_weight * p_c;
        let z_low = z_psi.min(self.z_lo);
        let z_high = z_psi.max(self.z_hi);

        let (mut best_v, mut best_z, mut best_a);
        {
            let (v, a) = self.objective_at(z_low, p_c);
            best_v = v;
            best_z = z_low;
            best_a = a;
        }
        let (v_high, a_high) = self.objective_at(z_high, p_c);
        if v_high > best_v {
            best_v = v_high;
            best_z = z_high;
            best_a = a_high;
        }
        let alpha_int = (z_int * self.x_c - self.k1_xbar) * self.inv_c2;
        if alpha_int >= self.alpha_min && alpha_int <= self.alpha_max {
            let v_mid = self.effort_gain(alpha_int, p_c) + self.psi_c(z_int, p_c);
            if v_mid > best_v {
                best_v = v_mid;
                best_z = z_int;
                best_a = alpha_int;
            }
        }
        (best_z, best_a, best_v)
    }

    /// Drift, flow and diffusion terms that do not involve the sensitivity.
    #[inline]
    pub fn linear_part(&self, gradient: Pair, hessian: Hessian) -> f64 {
        self.base
            + self.drift_d * gradient.d
            + 0.5 * self.sc2 * (hessian.cc - self.eta_p * gradient.c * gradient.c)
            + 0.5 * self.sd2 * (hessian.dd - self.eta_p * gradient.d * gradient.d)
    }

    /// Full Hamiltonian value with the maximizing sensitivity and effort.
    #[inline]
    pub fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> NodeOutput {
        let (z_c, alpha, phi_psi) = self.maximize_z_c(p_c);
        let z_d = self.z_d_weight * p_d;
        // psi_d at its unconstrained maximizer.
        let psi_d = 0.5 * self.sd2 * self.eta_p * p_d * z_d;
        let value = self.base
            + self.drift_d * p_d
            + 0.5 * self.sc2 * (g_cc - self.eta_p * p_c * p_c)
            + 0.5 * self.sd2 * (g_dd - self.eta_p * p_d * p_d)
            + phi_psi
            + psi_d;
        NodeOutput { value, z_c, z_d, alpha }
    }
}

/// Per-node precomputation for the stand-alone producer equation in
/// certainty-equivalent form.
#[derive(Debug, Clone)]
pub(crate) struct StandaloneNode {
    pub x_c: f64,
    /// s(x) - c_A_base(x).
    pub base: f64,
    pub drift_d: f64,
    pub sc2: f64,
    pub sd2: f64,
    pub eta_a: f64,
    pub k1_xbar: f64,
    pub c2: f64,
    pub inv_c2: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl StandaloneNode {
    pub fn new(p: &ModelParams, x: Pair) -> Result<Self> {
        if !(x.d > 0.0) {
            return Err(Error::invalid(format!("demand must be positive, got {}", x.d)));
        }
        let xbar = floored_truncated_capacity(p, x.c)?;
        let c2 = p.kappa2 * xbar * xbar;
        Ok(StandaloneNode {
            x_c: x.c,
            base: model::spot_flow(p, x) - model::producer_cost_base(p, x),
            drift_d: model::demand_drift(p, x.d),
            sc2: p.sigma_c * x.c * (p.sigma_c * x.c),
            sd2: p.sigma_d * x.d * (p.sigma_d * x.d),
            eta_a: p.eta_a,
            k1_xbar: p.kappa1 * xbar,
            c2,
            inv_c2: 1.0 / c2,
            alpha_min: p.alpha_min,
            alpha_max: p.alpha_max,
        })
    }

    /// Hamiltonian value and maximizing effort, certainty-equivalent form
    /// (includes the `-eta_A p p^T` Hessian correction).
    #[inline]
    pub fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> (f64, f64) {
        let alpha = ((p_c * self.x_c - self.k1_xbar) * self.inv_c2).clamp(self.alpha_min, self.alpha_max);
        let phi = alpha * (self.x_c * p_c - self.k1_xbar) - 0.5 * self.c2 * alpha * alpha;
        let value = self.base
            + self.drift_d * p_d
            + 0.5 * self.sc2 * (g_cc - self.eta_a * p_c * p_c)
            + 0.5 * self.sd2 * (g_dd - self.eta_a * p_d * p_d)
            + phi;
        (value, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams::default_french()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn producer_hamiltonian_zero_controls() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let h = producer_hamiltonian_at(&params, x, Pair::new(0.0, 0.0), 0.0).unwrap();
        let expect = model::spot_flow(&params, x) - model::producer_cost(&params, x, 0.0).unwrap();
        assert!(rel_err(h, expect) < 1e-12);
    }

    #[test]
    fn producer_hamiltonian_concave_in_effort() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let z = Pair::new(150.0, 30.0);
        let h = |a: f64| producer_hamiltonian_at(&params, x, z, a).unwrap();
        let d = 0.01;
        for a in [-1.0, -0.3, 0.0, 0.4, 1.2] {
            let second = h(a + d) + h(a - d) - 2.0 * h(a);
            let expect = -params.kappa2 * 90.0 * 90.0 * d * d;
            assert!(rel_err(second, expect) < 1e-6, "at {a}: {second} vs {expect}");
        }
    }

    #[test]
    fn recommended_effort_examples() {
        let params = p();
        assert_eq!(recommended_effort(&params, 90.0, params.kappa1).unwrap(), 0.0);
        let z = params.kappa1 + 9.0 * params.kappa2;
        let a = recommended_effort(&params, 90.0, z).unwrap();
        assert!((a - 0.1).abs() < 1e-12, "got {a}");
        assert_eq!(recommended_effort(&params, 90.0, 1e12).unwrap(), params.alpha_max);
        assert_eq!(recommended_effort(&params, 90.0, -1e12).unwrap(), params.alpha_min);
        assert!(recommended_effort(&params, 0.0, 0.0).is_err());
    }

    #[test]
    fn recommended_effort_monotone_in_sensitivity() {
        let params = p();
        let mut last = f64::NEG_INFINITY;
        for i in 0..2000 {
            let z = -2e5 + i as f64 * 200.0;
            let a = recommended_effort(&params, 35.0, z).unwrap();
            assert!(a >= last);
            last = a;
        }
        assert_eq!(last, params.alpha_max);
    }

    #[test]
    fn supremum_dominates_arbitrary_efforts() {
        let params = p();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = Pair::new(10.0 + 180.0 * next(), 30.0 + 80.0 * next());
            let z = Pair::new(-500.0 + 2000.0 * next(), -500.0 + 2000.0 * next());
            let big = producer_hamiltonian(&params, x, z).unwrap();
            assert!(big >= producer_hamiltonian_at(&params, x, z, 0.0).unwrap() - 1e-9 * big.abs().max(1.0));
            let a = params.alpha_min + (params.alpha_max - params.alpha_min) * next();
            assert!(big >= producer_hamiltonian_at(&params, x, z, a).unwrap() - 1e-9 * big.abs().max(1.0));
        }
    }

    #[test]
    fn producer_hamiltonian_zero_sensitivity_closed_form() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let h = producer_hamiltonian(&params, x, Pair::new(0.0, 0.0)).unwrap();
        let expect = model::spot_flow(&params, x) - model::producer_cost_base(&params, x)
            + params.kappa1 * params.kappa1 / (2.0 * params.kappa2);
        assert!(rel_err(h, expect) < 1e-12);
    }

    #[test]
    fn optimal_sensitivity_examples() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let z = optimal_contract_sensitivity(&params, x, Pair::new(0.0, 0.0)).unwrap();
        assert_eq!((z.c, z.d), (0.0, 0.0));

        let z = optimal_contract_sensitivity(&params, x, Pair::new(0.0, 1.0)).unwrap();
        assert!((z.d - 0.086758).abs() < 1e-5, "got {}", z.d);

        // Risk-neutral producer passes the gradient straight through.
        let mut neutral = p();
        neutral.eta_a = 1e-14;
        let g = Pair::new(321.0, -55.0);
        let z = optimal_contract_sensitivity(&neutral, x, g).unwrap();
        assert!(rel_err(z.c, g.c) < 1e-8);
        assert!(rel_err(z.d, g.d) < 1e-8);
    }

    #[test]
    fn sensitivity_is_stationary_point_when_unclipped() {
        let params = p();
        for (x, g) in [
            (Pair::new(90.0, 60.0), Pair::new(250.0, -120.0)),
            (Pair::new(40.0, 75.0), Pair::new(-800.0, 2500.0)),
            (Pair::new(150.0, 35.0), Pair::new(40.0, 4.0)),
        ] {
            let z = optimal_contract_sensitivity(&params, x, g).unwrap();
            let a = recommended_effort(&params, x.c, z.c).unwrap();
            assert!(a > params.alpha_min && a < params.alpha_max, "clipped case not covered here");
            let f = |zc: f64, zd: f64| {
                consumer_hamiltonian_at(&params, x, g, Hessian::zero(), Pair::new(zc, zd)).unwrap()
            };
            let scale = f(z.c, z.d).abs().max(1.0);
            let h = 1e-3;
            let grad_c = (f(z.c + h, z.d) - f(z.c - h, z.d)) / (2.0 * h);
            let grad_d = (f(z.c, z.d + h) - f(z.c, z.d - h)) / (2.0 * h);
            assert!(grad_c.abs() / scale < 1e-9, "z_c gradient {grad_c}");
            assert!(grad_d.abs() / scale < 1e-9, "z_d gradient {grad_d}");
        }
    }

    #[test]
    fn consumer_hamiltonian_zero_gradient_closed_form() {
        let params = p();
        for x in [Pair::new(90.0, 60.0), Pair::new(25.0, 95.0), Pair::new(180.0, 40.0)] {
            let g = consumer_hamiltonian(&params, x, Pair::new(0.0, 0.0), Hessian::zero()).unwrap();
            let expect = model::consumer_flow(&params, x) - model::producer_cost_base(&params, x)
                + params.kappa1 * params.kappa1 / (2.0 * params.kappa2);
            assert!(rel_err(g, expect) < 1e-12, "at ({}, {})", x.c, x.d);
        }
    }

    #[test]
    fn consumer_hamiltonian_dominates_random_sensitivities() {
        let params = p();
        let x = Pair::new(70.0, 66.0);
        let grad = Pair::new(900.0, -400.0);
        let hess = Hessian { cc: -4.0, cd: 0.7, dd: -9.0 };
        let sup = consumer_hamiltonian(&params, x, grad, hess).unwrap();
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let z = Pair::new(-2000.0 + 4000.0 * next(), -2000.0 + 4000.0 * next());
            let v = consumer_hamiltonian_at(&params, x, grad, hess, z).unwrap();
            assert!(v <= sup + 1e-9 * sup.abs().max(1.0));
        }
    }

    #[test]
    fn demand_part_completes_to_rho_quadratic() {
        // The maximized z_d terms plus the -eta_P/2 (sigma_d x_d)^2 p_d^2
        // correction collapse to rho_d/2 p_d^2.
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let sd2 = params.sigma_d * x.d * (params.sigma_d * x.d);
        let (_, rho) = approx_pde_coefficients(&params, x);
        for p_d in [-3000.0, -1.0, 0.5, 800.0] {
            let z_d = params.eta_p / (params.eta_a + params.eta_p) * p_d;
            let psi_d = -0.5 * (params.eta_a + params.eta_p) * sd2 * z_d * z_d
                + params.eta_p * sd2 * p_d * z_d;
            let total = psi_d - 0.5 * params.eta_p * sd2 * p_d * p_d;
            assert!(rel_err(total, 0.5 * rho.d * p_d * p_d) < 1e-12);
        }
    }

    #[test]
    fn approx_coefficients_shapes() {
        let params = p();
        // No shortage: f = a x_c + (b - theta) x_d.
        let x = Pair::new(90.0, 60.0);
        let (f, rho) = approx_pde_coefficients(&params, x);
        assert!(rel_err(f, params.a * 90.0 + (params.b - params.theta) * 60.0) < 1e-12);
        assert!(rho.d < 0.0);
        for j in 1..40 {
            let (_, r) = approx_pde_coefficients(&params, Pair::new(90.0, 3.0 * j as f64));
            assert!(r.d < 0.0);
        }
    }

    #[test]
    fn rho_capacity_sign_change_matches_bisection_root() {
        let params = p();
        // Root of eta_A eta_P s^4 = 1/kappa2^2 + (eta_P/kappa2) s^2 in x_c.
        let num = |x_c: f64| {
            let s2 = params.sigma_c * x_c * (params.sigma_c * x_c);
            1.0 / (params.kappa2 * params.kappa2) + params.eta_p * s2 / params.kappa2
                - params.eta_a * params.eta_p * s2 * s2
        };
        let (mut lo, mut hi) = (1.0, 5000.0);
        assert!(num(lo) > 0.0 && num(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if num(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let (_, below) = approx_pde_coefficients(&params, Pair::new(root * 0.99, 60.0));
        let (_, above) = approx_pde_coefficients(&params, Pair::new(root * 1.01, 60.0));
        assert!(below.c > 0.0 && above.c < 0.0, "root {root}: {} {}", below.c, above.c);
    }

    #[test]
    fn exact_matches_approx_on_interior_states() {
        let params = p();
        for (x, g) in [
            (Pair::new(90.0, 60.0), Pair::new(250.0, -120.0)),
            (Pair::new(60.0, 70.0), Pair::new(-90.0, 450.0)),
            (Pair::new(140.0, 45.0), Pair::new(12.0, 3.0)),
        ] {
            let hess = Hessian { cc: -2.0, cd: 0.0, dd: -5.0 };
            let exact = consumer_hamiltonian(&params, x, g, hess).unwrap();
            let approx = approx_consumer_hamiltonian(&params, x, g, hess);
            assert!(rel_err(exact, approx) < 1e-10, "at ({}, {}): {exact} vs {approx}", x.c, x.d);
        }
    }

    #[test]
    fn standalone_effort_examples() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        assert_eq!(standalone_effort(&params, x, params.kappa1).unwrap(), 0.0);
        assert_eq!(standalone_effort(&params, x, -1e9).unwrap(), params.alpha_min);
    }

    #[test]
    fn standalone_hamiltonian_properties() {
        let params = p();
        let x = Pair::new(90.0, 60.0);
        let y = -0.6;
        let z = Pair::new(40.0, -3.0);
        let gamma = Hessian { cc: -1.0, cd: 0.0, dd: -2.5 };
        let sup = standalone_hamiltonian(&params, x, y, z, gamma).unwrap();
        let at0 = standalone_hamiltonian_at(&params, x, y, z, gamma, 0.0).unwrap();
        assert!(sup >= at0 - 1e-9 * sup.abs().max(1.0));
        // alpha-independent assembly at alpha = 0.
        let sc2 = params.sigma_c * x.c * params.sigma_c * x.c;
        let sd2 = params.sigma_d * x.d * params.sigma_d * x.d;
        let expect = z.d * model::demand_drift(&params, x.d)
            + 0.5 * (sc2 * gamma.cc + sd2 * gamma.dd)
            + params.eta_a * (model::producer_cost(&params, x, 0.0).unwrap() - model::spot_flow(&params, x)) * y;
        assert!(rel_err(at0, expect) < 1e-12);
    }
}
