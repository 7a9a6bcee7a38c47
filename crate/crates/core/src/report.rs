//! Ensemble aggregation: per-MWh normalization, mean/sd summaries, scenario
//! classification, named-scenario extraction, sensitivity batch runs, and
//! the CSV emitters.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::params::{ModelParams, Pair};
use crate::pde::{self, SolveOptions};
use crate::sim::{self, PolicyFields, PolicyKind, ScenarioLedger, SimOptions};

/// Monetary amounts normalized per MWh of the path's own delivered energy:
/// 1 M€/TWh = 1 €/MWh.
pub fn per_mwh(amount_meur: f64, delivered_twh: f64) -> Result<f64> {
    if !(delivered_twh > 0.0) {
        return Err(Error::invalid(format!(
            "per-MWh normalization requires positive delivered energy, got {delivered_twh}"
        )));
    }
    Ok(amount_meur / delivered_twh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowStat {
    pub mean: f64,
    pub sd: f64,
}

fn row_stat(values: &[f64]) -> RowStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    RowStat { mean, sd: var.sqrt() }
}

fn pct(values: &[bool]) -> f64 {
    100.0 * values.iter().filter(|&&b| b).count() as f64 / values.len() as f64
}

/// Mean/sd of every reported quantity plus classification percentages for
/// one policy's ensemble. Monetary rows are €/MWh after per-path
/// normalization; rows that only exist under the contract are `None`
/// elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub policy: PolicyKind,
    pub n: usize,
    pub shortage_hours: RowStat,
    pub average_spot: RowStat,
    pub average_margin: RowStat,
    pub spot_revenue: RowStat,
    pub capacity_payment: Option<RowStat>,
    pub total_compensation: RowStat,
    pub participation: Option<RowStat>,
    pub risk_shared: Option<RowStat>,
    pub risk_compensation: Option<RowStat>,
    pub total_costs: RowStat,
    pub cost_construction: RowStat,
    pub cost_maintenance: RowStat,
    pub cost_production: RowStat,
    /// Ratio of ensemble means, mean spot / mean total compensation [%].
    pub spot_share_pct: f64,
    /// Mean over paths of (spot + capacity payment) / spot.
    pub mean_total_over_spot: f64,
    pub pct_missing_money: f64,
    pub pct_ncr: Option<f64>,
    pub pct_negative_total_compensation: Option<f64>,
    pub pct_negative_net_revenues: f64,
    pub pct_mm_and_ncr: Option<f64>,
}

/// Aggregate one policy's ledgers. Fails on an empty ensemble or a policy
/// mismatch.
pub fn summarize(ledgers: &[ScenarioLedger], policy: PolicyKind) -> Result<EnsembleStats> {
    if ledgers.is_empty() {
        return Err(Error::invalid("cannot summarize an empty ensemble"));
    }
    if let Some(l) = ledgers.iter().find(|l| l.policy != policy) {
        return Err(Error::invalid(format!(
            "ledger {} belongs to policy {:?}, expected {:?}",
            l.path_id, l.policy, policy
        )));
    }
    let is_crm = policy == PolicyKind::WithCrm;
    let norm = |f: &dyn Fn(&ScenarioLedger) -> f64| -> Result<Vec<f64>> {
        ledgers.iter().map(|l| per_mwh(f(l), l.delivered_twh)).collect()
    };

    let spot_rev = norm(&|l| l.spot_revenue)?;
    let total_comp = norm(&|l| l.total_compensation())?;
    let total_costs = norm(&|l| l.total_costs())?;
    let construction = norm(&|l| l.cost_construction)?;
    let maintenance = norm(&|l| l.cost_maintenance)?;
    let production = norm(&|l| l.cost_production)?;

    let capacity_payment = is_crm.then(|| norm(&|l| l.capacity_payment.unwrap())).transpose()?;
    let participation = is_crm.then(|| norm(&|l| l.reservation.unwrap())).transpose()?;
    let risk_shared = is_crm.then(|| norm(&|l| l.risk_shared.unwrap())).transpose()?;
    let risk_compensation = is_crm.then(|| norm(&|l| l.risk_compensation.unwrap())).transpose()?;

    let mean_spot_meur = ledgers.iter().map(|l| l.spot_revenue).sum::<f64>() / ledgers.len() as f64;
    let mean_total_meur = ledgers.iter().map(|l| l.total_compensation()).sum::<f64>() / ledgers.len() as f64;
    let mean_total_over_spot =
        ledgers.iter().map(|l| l.total_compensation() / l.spot_revenue).sum::<f64>() / ledgers.len() as f64;

    let mm: Vec<bool> = ledgers.iter().map(|l| l.missing_money()).collect();
    let neg_net: Vec<bool> = ledgers.iter().map(|l| l.negative_net_revenues()).collect();
    let ncr: Option<Vec<bool>> = is_crm.then(|| ledgers.iter().map(|l| l.ncr().unwrap()).collect());
    let neg_total: Option<Vec<bool>> =
        is_crm.then(|| ledgers.iter().map(|l| l.negative_total_compensation().unwrap()).collect());
    let mm_and_ncr: Option<Vec<bool>> = ncr
        .as_ref()
        .map(|n| n.iter().zip(&mm).map(|(&a, &b)| a && b).collect());

    let stats = EnsembleStats {
        policy,
        n: ledgers.len(),
        shortage_hours: row_stat(&ledgers.iter().map(|l| l.shortage_hours_per_year).collect::<Vec<_>>()),
        average_spot: row_stat(&ledgers.iter().map(|l| l.average_spot_eur_mwh).collect::<Vec<_>>()),
        average_margin: row_stat(&ledgers.iter().map(|l| l.average_margin_gw).collect::<Vec<_>>()),
        spot_revenue: row_stat(&spot_rev),
        capacity_payment: capacity_payment.as_deref().map(row_stat),
        total_compensation: row_stat(&total_comp),
        participation: participation.as_deref().map(row_stat),
        risk_shared: risk_shared.as_deref().map(row_stat),
        risk_compensation: risk_compensation.as_deref().map(row_stat),
        total_costs: row_stat(&total_costs),
        cost_construction: row_stat(&construction),
        cost_maintenance: row_stat(&maintenance),
        cost_production: row_stat(&production),
        spot_share_pct: 100.0 * mean_spot_meur / mean_total_meur,
        mean_total_over_spot,
        pct_missing_money: pct(&mm),
        pct_ncr: ncr.as_deref().map(pct),
        pct_negative_total_compensation: neg_total.as_deref().map(pct),
        pct_negative_net_revenues: pct(&neg_net),
        pct_mm_and_ncr: mm_and_ncr.as_deref().map(pct),
    };

    // Linearity and accounting identities that hold for any ensemble.
    if is_crm {
        let lhs = stats.total_compensation.mean;
        let rhs = stats.spot_revenue.mean + stats.capacity_payment.as_ref().unwrap().mean;
        debug_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        let joint = stats.pct_mm_and_ncr.unwrap();
        debug_assert!(joint <= stats.pct_missing_money + 1e-12);
        debug_assert!(joint <= stats.pct_ncr.unwrap() + 1e-12);
    }
    let parts = stats.cost_construction.mean + stats.cost_maintenance.mean + stats.cost_production.mean;
    debug_assert!((parts - stats.total_costs.mean).abs() <= 1e-10 * parts.abs().max(1.0));

    Ok(stats)
}

/// Indices of the scenarios singled out for inspection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NamedScenarios {
    /// Highest shortage hours.
    pub severe: usize,
    /// Lowest (spot + capacity payment) / spot ratio.
    pub worst_ratio: usize,
    /// Zero-shortage scenario with the largest capacity-payment share of
    /// total compensation; ties broken by the lowest average spot price.
    /// Absent when no scenario is shortage-free.
    pub favorable: Option<usize>,
}

pub fn select_named_scenarios(ledgers: &[ScenarioLedger]) -> Result<NamedScenarios> {
    if ledgers.is_empty() {
        return Err(Error::invalid("cannot select scenarios from an empty ensemble"));
    }
    let severe = ledgers
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.shortage_hours_per_year.total_cmp(&b.1.shortage_hours_per_year))
        .map(|(i, _)| i)
        .unwrap();
    let ratio = |l: &ScenarioLedger| l.total_compensation() / l.spot_revenue;
    let worst_ratio = ledgers
        .iter()
        .enumerate()
        .min_by(|a, b| ratio(a.1).total_cmp(&ratio(b.1)))
        .map(|(i, _)| i)
        .unwrap();
    let favorable = ledgers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.shortage_hours_per_year == 0.0)
        .max_by(|a, b| {
            let share = |l: &ScenarioLedger| l.capacity_payment.unwrap_or(0.0) / l.total_compensation();
            share(a.1)
                .total_cmp(&share(b.1))
                .then(b.1.average_spot_eur_mwh.total_cmp(&a.1.average_spot_eur_mwh))
        })
        .map(|(i, _)| i);
    Ok(NamedScenarios { severe, worst_ratio, favorable })
}

/// A multiplicative parameter perturbation for sensitivity runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    SigmaC(f64),
    SigmaD(f64),
    EtaA(f64),
    EtaP(f64),
    /// Arbitrary (field, multiplier) pairs on the canonical parameters.
    Custom(Vec<(String, f64)>),
}

impl Perturbation {
    pub fn parse(spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in spec.split(',') {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("perturbation '{item}' is not key=multiplier")))?;
            let mult: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad multiplier '{value}'")))?;
            pairs.push((key.trim().to_string(), mult));
        }
        match pairs.as_slice() {
            [(k, m)] if k == "sigma_c" => Ok(Perturbation::SigmaC(*m)),
            [(k, m)] if k == "sigma_d" => Ok(Perturbation::SigmaD(*m)),
            [(k, m)] if k == "eta_a" => Ok(Perturbation::EtaA(*m)),
            [(k, m)] if k == "eta_p" => Ok(Perturbation::EtaP(*m)),
            _ => Ok(Perturbation::Custom(pairs)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Perturbation::SigmaC(m) => format!("sigma_c_x{m}"),
            Perturbation::SigmaD(m) => format!("sigma_d_x{m}"),
            Perturbation::EtaA(m) => format!("eta_a_x{m}"),
            Perturbation::EtaP(m) => format!("eta_p_x{m}"),
            Perturbation::Custom(pairs) => pairs
                .iter()
                .map(|(k, m)| format!("{k}_x{m}"))
                .collect::<Vec<_>>()
                .join("_"),
        }
    }

    pub fn apply(&self, base: &ModelParams) -> Result<ModelParams> {
        let mut p = base.clone();
        let mut scale = |field: &str, mult: f64| -> Result<()> {
            let slot = match field {
                "sigma_c" => &mut p.sigma_c,
                "sigma_d" => &mut p.sigma_d,
                "eta_a" => &mut p.eta_a,
                "eta_p" => &mut p.eta_p,
                "kappa1" => &mut p.kappa1,
                "kappa2" => &mut p.kappa2,
                "a" => &mut p.a,
                "b" => &mut p.b,
                "theta" => &mut p.theta,
                "k" => &mut p.k,
                "beta0" => &mut p.beta0,
                "beta1" => &mut p.beta1,
                "mu_d" => &mut p.mu_d,
                "x0_c" => &mut p.x0_c,
                "x0_d" => &mut p.x0_d,
                other => return Err(Error::invalid(format!("unknown perturbation field '{other}'"))),
            };
            *slot *= mult;
            Ok(())
        };
        match self {
            Perturbation::SigmaC(m) => scale("sigma_c", *m)?,
            Perturbation::SigmaD(m) => scale("sigma_d", *m)?,
            Perturbation::EtaA(m) => scale("eta_a", *m)?,
            Perturbation::EtaP(m) => scale("eta_p", *m)?,
            Perturbation::Custom(pairs) => {
                for (k, m) in pairs {
                    scale(k, *m)?;
                }
            }
        }
        Ok(p)
    }
}

/// Everything one end-to-end run (solve + simulate + summarize) produces
/// for the contract policy.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub reservation_meur: f64,
    pub stats: EnsembleStats,
    pub ledgers: Vec<ScenarioLedger>,
}

/// Solve both equations, simulate the contract policy, and summarize.
pub fn run_crm_pipeline(
    params: &ModelParams,
    grid: &GridSpec,
    solve_opts: &SolveOptions,
    n_paths: usize,
    master_seed: u64,
) -> Result<PipelineRun> {
    let solo = pde::solve_agent_solo_pde(params, grid, solve_opts)?;
    let reservation = pde::reservation_value(&solo.surface, Pair::new(params.x0_c, params.x0_d))?;
    let consumer = pde::solve_consumer_pde(params, grid, solve_opts)?;
    let fields = PolicyFields::WithCrm {
        z_c: &consumer.z_c,
        z_d: &consumer.z_d,
        alpha: &consumer.alpha,
        reservation,
    };
    let ledgers = sim::simulate_ensemble(params, grid, &fields, &SimOptions::default(), n_paths, master_seed)?;
    let stats = summarize(&ledgers, PolicyKind::WithCrm)?;
    Ok(PipelineRun { reservation_meur: reservation, stats, ledgers })
}

#[derive(Debug, Clone)]
pub struct SensitivityOutcome {
    pub perturbation: Perturbation,
    pub reference: PipelineRun,
    pub perturbed: PipelineRun,
}

/// Paired reference/perturbed contract runs with the same seed and grid.
pub fn run_sensitivity(
    base: &ModelParams,
    grid: &GridSpec,
    solve_opts: &SolveOptions,
    perturbation: &Perturbation,
    n_paths: usize,
    master_seed: u64,
) -> Result<SensitivityOutcome> {
    let reference = run_crm_pipeline(base, grid, solve_opts, n_paths, master_seed)?;
    let perturbed_params = perturbation.apply(base)?;
    let perturbed = run_crm_pipeline(&perturbed_params, grid, solve_opts, n_paths, master_seed)?;
    Ok(SensitivityOutcome { perturbation: perturbation.clone(), reference, perturbed })
}

// ---------------------------------------------------------------------------
// CSV emitters and the ledger round-trip.
// ---------------------------------------------------------------------------

pub const LEDGER_HEADER: &[&str] = &[
    "path_id",
    "policy",
    "shortage_hours_per_year_h",
    "average_spot_eur_per_mwh",
    "average_margin_gw",
    "delivered_twh",
    "spot_revenue_meur",
    "capacity_payment_meur",
    "reservation_meur",
    "risk_shared_meur",
    "risk_compensation_meur",
    "cost_construction_meur",
    "cost_maintenance_meur",
    "cost_production_meur",
];

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_ledger_csv(path: &Path, ledgers: &[ScenarioLedger]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LEDGER_HEADER)?;
    for l in ledgers {
        w.write_record([
            l.path_id.to_string(),
            l.policy.as_str().to_string(),
            l.shortage_hours_per_year.to_string(),
            l.average_spot_eur_mwh.to_string(),
            l.average_margin_gw.to_string(),
            l.delivered_twh.to_string(),
            l.spot_revenue.to_string(),
            opt_str(l.capacity_payment),
            opt_str(l.reservation),
            opt_str(l.risk_shared),
            opt_str(l.risk_compensation),
            l.cost_construction.to_string(),
            l.cost_maintenance.to_string(),
            l.cost_production.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<ScenarioLedger>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::MissingInput(format!("cannot open ledger {}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(LEDGER_HEADER.iter().copied()) {
        return Err(Error::Artifact(format!(
            "unexpected ledger header in {}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let rec = record?;
        let get = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Artifact(format!("bad number '{}' in {}", &rec[i], path.display())))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                get(i).map(Some)
            }
        };
        out.push(ScenarioLedger {
            path_id: rec[0]
                .parse()
                .map_err(|_| Error::Artifact(format!("bad path id '{}'", &rec[0])))?,
            policy: rec[1].parse()?,
            shortage_hours_per_year: get(2)?,
            average_spot_eur_mwh: get(3)?,
            average_margin_gw: get(4)?,
            delivered_twh: get(5)?,
            spot_revenue: get(6)?,
            capacity_payment: opt(7)?,
            reservation: opt(8)?,
            risk_shared: opt(9)?,
            risk_compensation: opt(10)?,
            cost_construction: get(11)?,
            cost_maintenance: get(12)?,
            cost_production: get(13)?,
            path: None,
        });
    }
    Ok(out)
}

fn stat_cells(stat: Option<&RowStat>) -> (String, String) {
    match stat {
        Some(s) => (s.mean.to_string(), s.sd.to_string()),
        None => (String::new(), String::new()),
    }
}

/// Summary table: one row per reported quantity, a (mean, sd) column pair
/// per policy.
pub fn write_summary_csv(path: &Path, stats: &[EnsembleStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["quantity".to_string(), "unit".to_string()];
    for s in stats {
        header.push(format!("{}_mean", s.policy.as_str()));
        header.push(format!("{}_sd", s.policy.as_str()));
    }
    w.write_record(&header)?;
    let rows: Vec<(&str, &str, Box<dyn Fn(&EnsembleStats) -> Option<RowStat>>)> = vec![
        ("shortage_hours_per_year", "h", Box::new(|s| Some(s.shortage_hours))),
        ("average_spot_price", "eur_per_mwh", Box::new(|s| Some(s.average_spot))),
        ("average_margin", "gw", Box::new(|s| Some(s.average_margin))),
        ("spot_revenues", "eur_per_mwh", Box::new(|s| Some(s.spot_revenue))),
        ("capacity_payment", "eur_per_mwh", Box::new(|s| s.capacity_payment)),
        ("spot_plus_capacity_payment", "eur_per_mwh", Box::new(|s| Some(s.total_compensation))),
        ("participation_constraint", "eur_per_mwh", Box::new(|s| s.participation)),
        ("risk_shared", "eur_per_mwh", Box::new(|s| s.risk_shared)),
        ("risk_compensation", "eur_per_mwh", Box::new(|s| s.risk_compensation)),
        ("total_costs", "eur_per_mwh", Box::new(|s| Some(s.total_costs))),
        ("construction_and_dismantling", "eur_per_mwh", Box::new(|s| Some(s.cost_construction))),
        ("maintenance", "eur_per_mwh", Box::new(|s| Some(s.cost_maintenance))),
        ("production", "eur_per_mwh", Box::new(|s| Some(s.cost_production))),
    ];
    for (name, unit, getter) in rows {
        let mut record = vec![name.to_string(), unit.to_string()];
        for s in stats {
            let (mean, sd) = stat_cells(getter(s).as_ref());
            record.push(mean);
            record.push(sd);
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Classification table: spot share, missing money, negative capacity
/// remuneration, negative compensations.
pub fn write_classification_csv(path: &Path, stats: &[EnsembleStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["quantity".to_string()];
    header.extend(stats.iter().map(|s| s.policy.as_str().to_string()));
    w.write_record(&header)?;
    let rows: Vec<(&str, Box<dyn Fn(&EnsembleStats) -> Option<f64>>)> = vec![
        ("spot_share_of_total_revenues_pct", Box::new(|s| Some(s.spot_share_pct))),
        ("mean_total_over_spot_ratio", Box::new(|s| Some(s.mean_total_over_spot))),
        ("scenarios_with_missing_money_pct", Box::new(|s| Some(s.pct_missing_money))),
        ("scenarios_with_negative_capacity_remuneration_pct", Box::new(|s| s.pct_ncr)),
        ("scenarios_with_negative_total_compensation_pct", Box::new(|s| s.pct_negative_total_compensation)),
        ("scenarios_with_negative_net_revenues_pct", Box::new(|s| Some(s.pct_negative_net_revenues))),
        ("scenarios_with_missing_money_and_ncr_pct", Box::new(|s| s.pct_mm_and_ncr)),
    ];
    for (name, getter) in rows {
        let mut record = vec![name.to_string()];
        for s in stats {
            record.push(getter(s).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-scenario decomposition rows (per-MWh) for bar-chart plotting, with
/// the named scenarios tagged.
pub fn write_decomposition_csv(path: &Path, ledgers: &[ScenarioLedger], named: &NamedScenarios) -> Result<()> {
    let mut tags: BTreeMap<usize, &str> = BTreeMap::new();
    tags.insert(named.severe, "severe");
    tags.insert(named.worst_ratio, "worst_ratio");
    if let Some(f) = named.favorable {
        tags.insert(f, "favorable");
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "path_id",
        "tag",
        "spot_revenues_eur_per_mwh",
        "capacity_payment_eur_per_mwh",
        "total_compensation_eur_per_mwh",
        "participation_constraint_eur_per_mwh",
        "producer_costs_eur_per_mwh",
        "risk_shared_eur_per_mwh",
        "risk_compensation_eur_per_mwh",
        "shortage_hours_per_year_h",
        "missing_money",
        "negative_capacity_remuneration",
    ])?;
    for (idx, l) in ledgers.iter().enumerate() {
        let e = l.delivered_twh;
        w.write_record([
            l.path_id.to_string(),
            tags.get(&idx).copied().unwrap_or("").to_string(),
            per_mwh(l.spot_revenue, e)?.to_string(),
            opt_str(l.capacity_payment.map(|v| v / e)),
            per_mwh(l.total_compensation(), e)?.to_string(),
            opt_str(l.reservation.map(|v| v / e)),
            per_mwh(l.total_costs(), e)?.to_string(),
            opt_str(l.risk_shared.map(|v| v / e)),
            opt_str(l.risk_compensation.map(|v| v / e)),
            l.shortage_hours_per_year.to_string(),
            (l.missing_money() as u8).to_string(),
            l.ncr().map(|b| (b as u8).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Paired sensitivity table (reference and perturbed columns).
pub fn write_sensitivity_csv(path: &Path, outcome: &SensitivityOutcome) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "quantity,reference,{}", outcome.perturbation.label())?;
    let rows: Vec<(&str, Box<dyn Fn(&PipelineRun) -> f64>)> = vec![
        ("reservation_meur", Box::new(|r| r.reservation_meur)),
        ("shortage_hours_per_year_h", Box::new(|r| r.stats.shortage_hours.mean)),
        ("average_spot_eur_per_mwh", Box::new(|r| r.stats.average_spot.mean)),
        ("average_margin_gw", Box::new(|r| r.stats.average_margin.mean)),
        ("capacity_payment_eur_per_mwh", Box::new(|r| r.stats.capacity_payment.as_ref().unwrap().mean)),
        ("risk_compensation_eur_per_mwh", Box::new(|r| r.stats.risk_compensation.as_ref().unwrap().mean)),
        ("total_costs_eur_per_mwh", Box::new(|r| r.stats.total_costs.mean)),
        ("construction_eur_per_mwh", Box::new(|r| r.stats.cost_construction.mean)),
        ("spot_share_of_total_revenues_pct", Box::new(|r| r.stats.spot_share_pct)),
        ("scenarios_with_missing_money_pct", Box::new(|r| r.stats.pct_missing_money)),
        ("scenarios_with_ncr_pct", Box::new(|r| r.stats.pct_ncr.unwrap())),
        (
            "scenarios_with_negative_net_revenues_pct",
            Box::new(|r| r.stats.pct_negative_net_revenues),
        ),
    ];
    for (name, getter) in rows {
        writeln!(file, "{name},{},{}", getter(&outcome.reference), getter(&outcome.perturbed))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crm_ledger(id: u64, xi: f64, spot: f64, shortage: f64) -> ScenarioLedger {
        ScenarioLedger {
            path_id: id,
            policy: PolicyKind::WithCrm,
            spot_revenue: spot,
            capacity_payment: Some(xi),
            reservation: Some(7000.0),
            risk_shared: Some(xi * 0.2),
            risk_compensation: Some(900.0),
            cost_construction: 500.0,
            cost_maintenance: 17_000.0,
            cost_production: 154.176 * 300.0,
            shortage_hours_per_year: shortage,
            delivered_twh: 8.76 * 300.0,
            average_margin_gw: 30.0,
            average_spot_eur_mwh: spot / (8.76 * 300.0),
            path: None,
        }
    }

    #[test]
    fn per_mwh_basics() {
        assert!(per_mwh(1.0, 0.0).is_err());
        assert_eq!(per_mwh(0.0, 5.0).unwrap(), 0.0);
        let v = per_mwh(123.0, 7.0).unwrap();
        assert_eq!(per_mwh(246.0, 14.0).unwrap(), v);
    }

    #[test]
    fn single_path_has_zero_sd() {
        let ledgers = vec![crm_ledger(0, 1000.0, 90_000.0, 2.0)];
        let s = summarize(&ledgers, PolicyKind::WithCrm).unwrap();
        assert_eq!(s.shortage_hours.sd, 0.0);
        assert_eq!(s.total_costs.sd, 0.0);
        assert_eq!(s.capacity_payment.unwrap().sd, 0.0);
        let named = select_named_scenarios(&ledgers).unwrap();
        assert_eq!(named.severe, 0);
        assert_eq!(named.worst_ratio, 0);
    }

    #[test]
    fn classification_consistency() {
        let ledgers = vec![
            crm_ledger(0, -2000.0, 90_000.0, 5.0),
            crm_ledger(1, 3000.0, 20_000.0, 0.0),
            crm_ledger(2, 100.0, 60_000.0, 1.0),
        ];
        let s = summarize(&ledgers, PolicyKind::WithCrm).unwrap();
        for p in [
            s.pct_missing_money,
            s.pct_ncr.unwrap(),
            s.pct_negative_net_revenues,
            s.pct_negative_total_compensation.unwrap(),
            s.pct_mm_and_ncr.unwrap(),
        ] {
            assert!((0.0..=100.0).contains(&p));
        }
        assert!(s.pct_mm_and_ncr.unwrap() <= s.pct_missing_money.min(s.pct_ncr.unwrap()));
        // Ratio below one iff negative capacity remuneration, per scenario.
        for l in &ledgers {
            let ratio = l.total_compensation() / l.spot_revenue;
            assert_eq!(ratio < 1.0, l.ncr().unwrap());
        }
    }

    #[test]
    fn summaries_are_permutation_invariant() {
        let a = vec![
            crm_ledger(0, -2000.0, 90_000.0, 5.0),
            crm_ledger(1, 3000.0, 20_000.0, 0.0),
            crm_ledger(2, 100.0, 60_000.0, 1.0),
        ];
        let mut b = a.clone();
        b.reverse();
        let sa = summarize(&a, PolicyKind::WithCrm).unwrap();
        let sb = summarize(&b, PolicyKind::WithCrm).unwrap();
        assert!((sa.total_costs.mean - sb.total_costs.mean).abs() < 1e-12);
        assert!((sa.shortage_hours.sd - sb.shortage_hours.sd).abs() < 1e-12);
        assert_eq!(sa.pct_missing_money, sb.pct_missing_money);
    }

    #[test]
    fn named_scenario_selectors() {
        let ledgers = vec![
            crm_ledger(0, 500.0, 50_000.0, 0.0),
            crm_ledger(1, -4000.0, 95_000.0, 110.0),
            crm_ledger(2, 9000.0, 30_000.0, 0.0),
        ];
        let named = select_named_scenarios(&ledgers).unwrap();
        assert_eq!(named.severe, 1);
        assert_eq!(named.worst_ratio, 1);
        assert_eq!(named.favorable, Some(2));
        let mean_short: f64 =
            ledgers.iter().map(|l| l.shortage_hours_per_year).sum::<f64>() / ledgers.len() as f64;
        assert!(ledgers[named.severe].shortage_hours_per_year >= mean_short);
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(summarize(&[], PolicyKind::WithCrm).is_err());
        assert!(select_named_scenarios(&[]).is_err());
    }

    #[test]
    fn ledger_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("crmkit_ledger_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ledger_with_crm.csv");
        let ledgers = vec![
            crm_ledger(0, -2000.0, 90_000.0, 5.0),
            crm_ledger(1, 3000.0, 20_000.0, 0.0),
        ];
        write_ledger_csv(&path, &ledgers).unwrap();
        let back = read_ledger_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].capacity_payment, ledgers[0].capacity_payment);
        assert_eq!(back[1].spot_revenue.to_bits(), ledgers[1].spot_revenue.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn perturbation_parse_and_apply() {
        let base = ModelParams::default_french();
        let p = Perturbation::parse("sigma_c=1.5").unwrap();
        assert_eq!(p, Perturbation::SigmaC(1.5));
        let perturbed = p.apply(&base).unwrap();
        assert!((perturbed.sigma_c - 0.15).abs() < 1e-15);
        assert_eq!(perturbed.sigma_d, base.sigma_d);

        let custom = Perturbation::parse("kappa2=2,theta=0.5").unwrap();
        let out = custom.apply(&base).unwrap();
        assert!((out.kappa2 - 2.0 * base.kappa2).abs() < 1e-12);
        assert!((out.theta - 0.5 * base.theta).abs() < 1e-12);
        assert!(Perturbation::parse("nonsense=2").unwrap().apply(&base).is_err());
        assert!(Perturbation::parse("garbage").is_err());
    }
}
