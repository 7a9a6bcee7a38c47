//! Explicit backward finite-difference solver for the consumer value
//! equation and the stand-alone producer equation, plus the stability guard.
//!
//! The backward recursion is `U^{k-1} = U^k + dt * G(U^k)` with central
//! stencils and replicated boundaries. The stored time resolution `n_t` is a
//! sampling choice; when the explicit stability ratio at `dt = T/n_t`
//! exceeds the target, each stored step is internally split into equal
//! sub-steps so that every actual update is stable. Control fields are
//! extracted at the stored steps only, which is what the forward simulation
//! consumes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ConsumerNode, NodeOutput, StandaloneNode};
use crate::error::{Error, Result};
use crate::grid::{FieldStack, GridSpec, Mat, Surface};
use crate::model;
use crate::params::{ModelParams, Pair};

/// Effective per-update stability target. Kept below the warning threshold
/// so auto-chosen sub-steps never run hot.
pub const CFL_TARGET: f64 = 0.45;
pub const CFL_WARN: f64 = 0.5;
pub const CFL_ERROR: f64 = 1.0;

/// Stability diagnostic for the explicit scheme.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CflReport {
    /// Stored step length T/n_t [Year].
    pub dt: f64,
    /// Stability ratio at the stored step length.
    pub ratio: f64,
    /// Diffusion part of the ratio at the worst node.
    pub diffusion_ratio: f64,
    /// Worst-case drift part (effort at its bounds).
    pub drift_ratio: f64,
    pub worst_node: (usize, usize),
    /// Sub-steps per stored step actually used by the solve.
    pub substeps: u32,
    /// Ratio at the sub-step length.
    pub effective_ratio: f64,
}

impl CflReport {
    pub fn warns(&self) -> bool {
        self.effective_ratio > CFL_WARN
    }
}

/// Which running-gain assembly the consumer solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HamiltonianMode {
    /// Exact clipped formulas. The default.
    Exact,
    /// Gradient-squared approximation; for cross-validation only.
    Approx,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Force the sub-step count instead of deriving it from the stability
    /// ratio.
    pub substeps: Option<u32>,
    /// Run even if the effective ratio exceeds 1.
    pub cfl_override: bool,
    pub hamiltonian: HamiltonianMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { substeps: None, cfl_override: false, hamiltonian: HamiltonianMode::Exact }
    }
}

/// Stability ratio of the explicit update at step length `dt`:
/// `dt * max over nodes of (sigma_c x_c)^2/dx_c^2 + (sigma_d x_d)^2/dx_d^2
/// + |drift| terms`, with the capacity drift taken at the worst admissible
/// effort.
pub fn cfl_check(p: &ModelParams, g: &GridSpec) -> CflReport {
    let dt = g.dt(p.horizon);
    let dx_c = g.dx_c();
    let dx_d = g.dx_d();
    let alpha_worst = p.alpha_min.abs().max(p.alpha_max.abs());
    let mut worst = (0usize, 0usize);
    let mut max_total = 0.0f64;
    let mut max_diff = 0.0f64;
    let mut max_drift = 0.0f64;
    for i in 0..=g.n_c {
        let x_c = g.x_c(i);
        let diff_c = (p.sigma_c * x_c) * (p.sigma_c * x_c) / (dx_c * dx_c);
        let drift_c = alpha_worst * x_c / dx_c;
        for j in 0..=g.n_d {
            let x_d = g.x_d(j);
            let diff = diff_c + (p.sigma_d * x_d) * (p.sigma_d * x_d) / (dx_d * dx_d);
            let drift = drift_c + model::demand_drift(p, x_d).abs() / dx_d;
            let total = diff + drift;
            if total > max_total {
                max_total = total;
                max_diff = diff;
                max_drift = drift;
                worst = (i, j);
            }
        }
    }
    let ratio = dt * max_total;
    let substeps = suggested_substeps(ratio);
    CflReport {
        dt,
        ratio,
        diffusion_ratio: dt * max_diff,
        drift_ratio: dt * max_drift,
        worst_node: worst,
        substeps,
        effective_ratio: ratio / substeps as f64,
    }
}

fn suggested_substeps(ratio: f64) -> u32 {
    if ratio <= CFL_TARGET {
        1
    } else {
        (ratio / CFL_TARGET).ceil() as u32
    }
}

/// Consumer solve output: the value surface and the per-step feedback
/// fields (contract sensitivities and recommended effort).
#[derive(Debug, Clone)]
pub struct ConsumerSolution {
    pub surface: Surface,
    pub z_c: FieldStack,
    pub z_d: FieldStack,
    pub alpha: FieldStack,
    pub cfl: CflReport,
}

/// Stand-alone producer solve output: certainty-equivalent surface and the
/// per-step optimal effort field.
#[derive(Debug, Clone)]
pub struct StandaloneSolution {
    pub surface: Surface,
    pub alpha: FieldStack,
    pub cfl: CflReport,
}

trait Kernel: Sync {
    fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> NodeOutput;
}

impl Kernel for ConsumerNode {
    #[inline]
    fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> NodeOutput {
        ConsumerNode::eval(self, p_c, p_d, g_cc, g_dd)
    }
}

impl Kernel for StandaloneNode {
    #[inline]
    fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> NodeOutput {
        let (value, alpha) = StandaloneNode::eval(self, p_c, p_d, g_cc, g_dd);
        NodeOutput { value, z_c: 0.0, z_d: 0.0, alpha }
    }
}

/// Approximating-equation kernel; see
/// [`crate::control::approx_consumer_hamiltonian`] for the constant-term
/// convention.
struct ApproxNode {
    x_c: f64,
    constant: f64,
    drift_c: f64,
    drift_d: f64,
    sc2: f64,
    sd2: f64,
    rho_c: f64,
    rho_d: f64,
    w_c: f64,
    w_d: f64,
    k1_xbar: f64,
    inv_c2: f64,
    alpha_min: f64,
    alpha_max: f64,
}

impl ApproxNode {
    fn new(p: &ModelParams, x: Pair) -> Result<Self> {
        let node = ConsumerNode::new(p, x)?;
        let (f, rho) = crate::control::approx_pde_coefficients(p, x);
        let inv_k2 = 1.0 / p.kappa2;
        let w_c = (p.eta_p * node.sc2 + inv_k2) / ((p.eta_a + p.eta_p) * node.sc2 + inv_k2);
        Ok(ApproxNode {
            x_c: x.c,
            constant: -f + p.kappa1 * p.kappa1 / (2.0 * p.kappa2),
            drift_c: -p.kappa1 / p.kappa2,
            drift_d: node.drift_d,
            sc2: node.sc2,
            sd2: node.sd2,
            rho_c: rho.c,
            rho_d: rho.d,
            w_c,
            w_d: node.z_d_weight,
            k1_xbar: node.k1_xbar,
            inv_c2: node.inv_c2,
            alpha_min: p.alpha_min,
            alpha_max: p.alpha_max,
        })
    }
}

impl Kernel for ApproxNode {
    #[inline]
    fn eval(&self, p_c: f64, p_d: f64, g_cc: f64, g_dd: f64) -> NodeOutput {
        let value = self.constant
            + self.drift_c * p_c
            + self.drift_d * p_d
            + 0.5 * (self.sc2 * g_cc + self.sd2 * g_dd)
            + 0.5 * (self.rho_c * p_c * p_c + self.rho_d * p_d * p_d);
        let z_c = self.w_c * p_c;
        let alpha = ((z_c * self.x_c - self.k1_xbar) * self.inv_c2).clamp(self.alpha_min, self.alpha_max);
        NodeOutput { value, z_c, z_d: self.w_d * p_d, alpha }
    }
}

struct RowCtx<'a> {
    down: &'a [f64],
    mid: &'a [f64],
    up: &'a [f64],
    dx_c: f64,
    dx_d: f64,
    dt: f64,
    n_d: usize,
}

/// One row of the explicit update. Stencil expressions are kept literally
/// identical to [`crate::grid::stencil5`] so stored fields can be
/// recomputed from the surface bit-for-bit.
#[inline(always)]
fn update_row<K: Kernel>(
    nodes: &[K],
    ctx: &RowCtx<'_>,
    next: &mut [f64],
    mut store: Option<(&mut [f64], &mut [f64], &mut [f64])>,
) -> Option<usize> {
    let mut bad = None;
    for j in 0..=ctx.n_d {
        let jl = j.saturating_sub(1);
        let jr = if j == ctx.n_d { j } else { j + 1 };
        let center = ctx.mid[j];
        let up = ctx.up[j];
        let down = ctx.down[j];
        let right = ctx.mid[jr];
        let left = ctx.mid[jl];
        let p_c = (up - down) / (2.0 * ctx.dx_c);
        let p_d = (right - left) / (2.0 * ctx.dx_d);
        let g_cc = (up + down - 2.0 * center) / (ctx.dx_c * ctx.dx_c);
        let g_dd = (right + left - 2.0 * center) / (ctx.dx_d * ctx.dx_d);
        let out = nodes[j].eval(p_c, p_d, g_cc, g_dd);
        let value = center + ctx.dt * out.value;
        next[j] = value;
        if !value.is_finite() && bad.is_none() {
            bad = Some(j);
        }
        if let Some((zc, zd, al)) = store.as_mut() {
            zc[j] = out.z_c;
            zd[j] = out.z_d;
            al[j] = out.alpha;
        }
    }
    bad
}

fn row_ctx<'a>(cur: &'a Mat, i: usize, dx_c: f64, dx_d: f64, dt: f64, n_d: usize) -> RowCtx<'a> {
    let w = cur.n_cols;
    let mid = &cur.data[i * w..(i + 1) * w];
    let up = if i + 1 < cur.n_rows { &cur.data[(i + 1) * w..(i + 2) * w] } else { mid };
    let down = if i > 0 { &cur.data[(i - 1) * w..i * w] } else { mid };
    RowCtx { down, mid, up, dx_c, dx_d, dt, n_d }
}

/// One explicit sub-step without field extraction. Returns the first
/// non-finite node in row-major order, if any.
fn substep_plain<K: Kernel>(nodes: &[Vec<K>], g: &GridSpec, cur: &Mat, next: &mut Mat, dt: f64) -> Option<(usize, usize)> {
    let (dx_c, dx_d) = (g.dx_c(), g.dx_d());
    #[cfg(feature = "parallel")]
    {
        next.data
            .par_chunks_mut(g.n_d + 1)
            .enumerate()
            .filter_map(|(i, row)| {
                let ctx = row_ctx(cur, i, dx_c, dx_d, dt, g.n_d);
                update_row(&nodes[i], &ctx, row, None).map(|j| (i, j))
            })
            .min()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut bad = None;
        for (i, row) in next.data.chunks_mut(g.n_d + 1).enumerate() {
            let ctx = row_ctx(cur, i, dx_c, dx_d, dt, g.n_d);
            if let Some(j) = update_row(&nodes[i], &ctx, row, None) {
                bad.get_or_insert((i, j));
            }
        }
        bad
    }
}

/// One explicit sub-step that also extracts the feedback fields at the
/// source slice.
fn substep_store<K: Kernel>(
    nodes: &[Vec<K>],
    g: &GridSpec,
    cur: &Mat,
    next: &mut Mat,
    dt: f64,
    zc: &mut Mat,
    zd: &mut Mat,
    al: &mut Mat,
) -> Option<(usize, usize)> {
    let (dx_c, dx_d) = (g.dx_c(), g.dx_d());
    let w = g.n_d + 1;
    #[cfg(feature = "parallel")]
    {
        next.data
            .par_chunks_mut(w)
            .zip(zc.data.par_chunks_mut(w))
            .zip(zd.data.par_chunks_mut(w))
            .zip(al.data.par_chunks_mut(w))
            .enumerate()
            .filter_map(|(i, (((row, zc_row), zd_row), al_row))| {
                let ctx = row_ctx(cur, i, dx_c, dx_d, dt, g.n_d);
                update_row(&nodes[i], &ctx, row, Some((zc_row, zd_row, al_row))).map(|j| (i, j))
            })
            .min()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut bad = None;
        for (i, (((row, zc_row), zd_row), al_row)) in next
            .data
            .chunks_mut(w)
            .zip(zc.data.chunks_mut(w))
            .zip(zd.data.chunks_mut(w))
            .zip(al.data.chunks_mut(w))
            .enumerate()
        {
            let ctx = row_ctx(cur, i, dx_c, dx_d, dt, g.n_d);
            if let Some(j) = update_row(&nodes[i], &ctx, row, Some((zc_row, zd_row, al_row))) {
                bad.get_or_insert((i, j));
            }
        }
        bad
    }
}

struct SweepOutput {
    surface: Surface,
    z_c: FieldStack,
    z_d: FieldStack,
    alpha: FieldStack,
    cfl: CflReport,
}

fn backward_sweep<K: Kernel>(p: &ModelParams, g: &GridSpec, opts: &SolveOptions, nodes: Vec<Vec<K>>) -> Result<SweepOutput> {
    g.validate()?;
    let mut structural = Vec::new();
    if !(p.kappa2 > 0.0) {
        structural.push(format!("kappa2: must be strictly positive, got {}", p.kappa2));
    }
    if !(p.alpha_min < p.alpha_max) {
        structural.push(format!("effort bounds: need alpha_min < alpha_max, got [{}, {}]", p.alpha_min, p.alpha_max));
    }
    if !(p.horizon > 0.0) {
        structural.push(format!("horizon: must be strictly positive, got {}", p.horizon));
    }
    if !structural.is_empty() {
        return Err(Error::Config(structural));
    }

    let mut cfl = cfl_check(p, g);
    if let Some(m) = opts.substeps {
        let m = m.max(1);
        cfl.substeps = m;
        cfl.effective_ratio = cfl.ratio / m as f64;
    }
    if cfl.effective_ratio > CFL_ERROR && !opts.cfl_override {
        return Err(Error::CflViolation { ratio: cfl.effective_ratio });
    }

    let m = cfl.substeps as usize;
    let dt_sub = g.dt(p.horizon) / m as f64;
    let mut slices: Vec<Mat> = Vec::with_capacity(g.n_t + 1);
    for _ in 0..=g.n_t {
        slices.push(Mat::for_grid(g));
    }
    let mut z_c: FieldStack = (0..=g.n_t).map(|_| Mat::for_grid(g)).collect();
    let mut z_d: FieldStack = (0..=g.n_t).map(|_| Mat::for_grid(g)).collect();
    let mut alpha: FieldStack = (0..=g.n_t).map(|_| Mat::for_grid(g)).collect();

    let mut scratch_a = Mat::for_grid(g);
    let mut scratch_b = Mat::for_grid(g);
    let mut substep_counter = 0usize;
    let fail = |bad: Option<(usize, usize)>, step: usize| -> Result<()> {
        if let Some((i, j)) = bad {
            Err(Error::NonFinite { step, i, j })
        } else {
            Ok(())
        }
    };

    for k in (1..=g.n_t).rev() {
        let (head, tail) = slices.split_at_mut(k);
        let src = &tail[0];
        let dst_final = &mut head[k - 1];
        if m == 1 {
            let bad = substep_store(&nodes, g, src, dst_final, dt_sub, &mut z_c[k], &mut z_d[k], &mut alpha[k]);
            substep_counter += 1;
            fail(bad, substep_counter)?;
        } else {
            let bad = substep_store(&nodes, g, src, &mut scratch_a, dt_sub, &mut z_c[k], &mut z_d[k], &mut alpha[k]);
            substep_counter += 1;
            fail(bad, substep_counter)?;
            for sub in 1..m {
                if sub == m - 1 {
                    let bad = substep_plain(&nodes, g, &scratch_a, dst_final, dt_sub);
                    substep_counter += 1;
                    fail(bad, substep_counter)?;
                } else {
                    let bad = substep_plain(&nodes, g, &scratch_a, &mut scratch_b, dt_sub);
                    substep_counter += 1;
                    fail(bad, substep_counter)?;
                    std::mem::swap(&mut scratch_a, &mut scratch_b);
                }
            }
        }
    }
    // Fields at the initial slice; the time update is discarded.
    let bad = substep_store(&nodes, g, &slices[0], &mut scratch_a, dt_sub, &mut z_c[0], &mut z_d[0], &mut alpha[0]);
    fail(bad, substep_counter + 1)?;

    Ok(SweepOutput {
        surface: Surface { grid: *g, slices },
        z_c,
        z_d,
        alpha,
        cfl,
    })
}

fn consumer_nodes(p: &ModelParams, g: &GridSpec) -> Result<Vec<Vec<ConsumerNode>>> {
    (0..=g.n_c)
        .map(|i| (0..=g.n_d).map(|j| ConsumerNode::new(p, g.node(i, j))).collect())
        .collect()
}

fn approx_nodes(p: &ModelParams, g: &GridSpec) -> Result<Vec<Vec<ApproxNode>>> {
    (0..=g.n_c)
        .map(|i| (0..=g.n_d).map(|j| ApproxNode::new(p, g.node(i, j))).collect())
        .collect()
}

fn standalone_nodes(p: &ModelParams, g: &GridSpec) -> Result<Vec<Vec<StandaloneNode>>> {
    (0..=g.n_c)
        .map(|i| (0..=g.n_d).map(|j| StandaloneNode::new(p, g.node(i, j))).collect())
        .collect()
}

/// Solve the consumer value equation backward from a zero terminal
/// condition, extracting the contract sensitivity and recommended-effort
/// fields at every stored step.
pub fn solve_consumer_pde(p: &ModelParams, g: &GridSpec, opts: &SolveOptions) -> Result<ConsumerSolution> {
    let out = match opts.hamiltonian {
        HamiltonianMode::Exact => backward_sweep(p, g, opts, consumer_nodes(p, g)?)?,
        HamiltonianMode::Approx => backward_sweep(p, g, opts, approx_nodes(p, g)?)?,
    };
    Ok(ConsumerSolution { surface: out.surface, z_c: out.z_c, z_d: out.z_d, alpha: out.alpha, cfl: out.cfl })
}

/// Solve the stand-alone producer equation (certainty-equivalent form)
/// backward from a zero terminal condition.
pub fn solve_agent_solo_pde(p: &ModelParams, g: &GridSpec, opts: &SolveOptions) -> Result<StandaloneSolution> {
    let opts = SolveOptions { hamiltonian: HamiltonianMode::Exact, ..*opts };
    let out = backward_sweep(p, g, &opts, standalone_nodes(p, g)?)?;
    Ok(StandaloneSolution { surface: out.surface, alpha: out.alpha, cfl: out.cfl })
}

/// Cash participation constraint: the stand-alone certainty equivalent at
/// the initial state, floored at zero (the producer can always walk away).
pub fn reservation_value(standalone: &Surface, x0: Pair) -> Result<f64> {
    if !standalone.grid.contains(x0) {
        return Err(Error::invalid(format!(
            "initial state ({}, {}) outside the grid box",
            x0.c, x0.d
        )));
    }
    Ok(standalone.value_at(0, x0).max(0.0))
}

/// One explicit consumer step on an arbitrary slice; used by the one-step
/// oracle tests and the benchmark suite.
pub fn consumer_step_once(p: &ModelParams, g: &GridSpec, cur: &Mat, dt: f64) -> Result<Mat> {
    let nodes = consumer_nodes(p, g)?;
    let mut next = Mat::for_grid(g);
    if let Some((i, j)) = substep_plain(&nodes, g, cur, &mut next, dt) {
        return Err(Error::NonFinite { step: 0, i, j });
    }
    Ok(next)
}

/// Same as [`consumer_step_once`] but for the stand-alone producer kernel.
pub fn standalone_step_once(p: &ModelParams, g: &GridSpec, cur: &Mat, dt: f64) -> Result<Mat> {
    let nodes = standalone_nodes(p, g)?;
    let mut next = Mat::for_grid(g);
    if let Some((i, j)) = substep_plain(&nodes, g, cur, &mut next, dt) {
        return Err(Error::NonFinite { step: 0, i, j });
    }
    Ok(next)
}
