//! Relative-frequency estimators of `v` and `p_j`, the depth-discounted
//! estimator of `u`, and scaled additive sums.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limits::additive_constant;
use crate::process::{CriticalProcess, ProcessSpec, RuleId};
use crate::sampler::{sample_batch, AdditiveFn, BatchAccumulator, SamplerConfig, TreeStats};

/// `v_hat = sum f(omega_n) / sum |omega_n|`.
pub fn estimate_v(batch: &BatchAccumulator) -> Result<Vec<f64>> {
    if batch.size_total == 0 {
        return Err(Error::EmptySample);
    }
    let total = batch.size_total as f64;
    Ok(batch.f_totals.iter().map(|&f| f as f64 / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringEstimate {
    /// 0-based parent type.
    pub parent: usize,
    pub offspring: Vec<u32>,
    pub estimate: f64,
    pub count: u128,
    /// Number of type-`parent` particles that applied a rule.
    pub denominator: u128,
}

/// `p_hat_j(n) = sum f(j -> n) / sum f(j)` for the tracked rules of type `j`.
///
/// The denominator counts type-`j` particles that applied a rule; it equals
/// `sum f(j)` except for the unexpanded last generation of censored trees.
pub fn estimate_offspring(
    spec: &ProcessSpec,
    batch: &BatchAccumulator,
    j: usize,
    tracked: &[RuleId],
) -> Result<Vec<OffspringEstimate>> {
    let denominator = batch.expanded_total(spec, j);
    if denominator == 0 {
        return Err(Error::TypeNeverObserved(j + 1));
    }
    Ok(spec
        .rule_range(j)
        .filter(|id| tracked.contains(id))
        .map(|id| OffspringEstimate {
            parent: j,
            offspring: spec.rule_by_id(id).1.offspring.clone(),
            estimate: batch.rule_totals[id] as f64 / denominator as f64,
            count: batch.rule_totals[id],
            denominator,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UEstimate {
    /// 0-based root type.
    pub root: usize,
    pub estimate: f64,
    pub lambda: f64,
    pub beta: f64,
    pub n: usize,
    /// Uncensored trees averaged over.
    pub used: usize,
    pub censored: usize,
}

/// `lambda_N = 1 - N^{-beta}`.
pub fn lambda_schedule(n: usize, beta: f64) -> f64 {
    1.0 - (n as f64).powf(-beta)
}

/// `(1 - lambda_N) / N' sum S(omega_n, lambda_N)` over the uncensored trees
/// among `records` (which must carry depth histograms), `N = records.len()`.
pub fn u_from_records(records: &[TreeStats], root: usize, beta: f64) -> Result<UEstimate> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} not in (0, 1/2)"
        )));
    }
    if records.is_empty() {
        return Err(Error::EmptySample);
    }
    let lambda = lambda_schedule(records.len(), beta);
    let mut sum = 0.0;
    let mut used = 0usize;
    for r in records.iter().filter(|r| !r.censored) {
        sum += r.s_at(lambda).ok_or_else(|| {
            Error::InvalidArgument("tree records carry no depth histogram".into())
        })?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptySample);
    }
    Ok(UEstimate {
        root,
        estimate: (1.0 - lambda) * sum / used as f64,
        lambda,
        beta,
        n: records.len(),
        used,
        censored: records.len() - used,
    })
}

/// Samples `n` trees rooted at `config.root_type` and returns the estimate
/// of `u_k` at `lambda_N = 1 - N^{-beta}`.
pub fn estimate_u(
    spec: &ProcessSpec,
    config: &SamplerConfig,
    n: usize,
    beta: f64,
) -> Result<UEstimate> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut cfg = config.clone();
    cfg.depth_histogram = true;
    let batch = sample_batch(spec, &cfg, 0, n as u64)?;
    u_from_records(batch.records(), cfg.root_type, beta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveSummary {
    /// `N^-2 sum G(omega_n)`.
    pub scaled_sum: f64,
    pub c_g: f64,
}

/// `N^-2 sum G(omega_n)` together with `C_g`; `G` is additive, so the sum is
/// read off the rule totals.
pub fn additive_sum(
    p: &CriticalProcess,
    batch: &BatchAccumulator,
    g: &AdditiveFn,
) -> Result<AdditiveSummary> {
    if batch.trees == 0 {
        return Err(Error::EmptySample);
    }
    let c_g = additive_constant(&p.spec, p.v(), g);
    if c_g == 0.0 {
        return Err(Error::ZeroCg);
    }
    let total: f64 = g
        .values()
        .iter()
        .zip(&batch.rule_totals)
        .map(|(gv, &c)| gv * c as f64)
        .sum();
    let n = batch.trees as f64;
    Ok(AdditiveSummary {
        scaled_sum: total / (n * n),
        c_g,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub n: u64,
    pub censored_count: u64,
    pub censored_fraction: f64,
    pub v_hat: Vec<f64>,
    pub v_true: Vec<f64>,
    pub size_total: u128,
    pub p_hat: Vec<OffspringEstimate>,
    /// Types with no expanded particle; their rules are absent from `p_hat`.
    pub unobserved_types: Vec<usize>,
    pub u_hat: Option<UEstimate>,
    pub u_true: Vec<f64>,
    pub additive: Option<AdditiveSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub estimate: f64,
    pub truth: Option<f64>,
    pub abs_error: Option<f64>,
}

fn offspring_label(n: &[u32]) -> String {
    n.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

impl EstimateReport {
    /// `v_hat` and `p_hat` from `batch`; `u_hat` and the additive sum are
    /// attached separately.
    pub fn from_batch(
        p: &CriticalProcess,
        batch: &BatchAccumulator,
        tracked: &[RuleId],
    ) -> Result<Self> {
        let v_hat = estimate_v(batch)?;
        let mut p_hat = Vec::new();
        let mut unobserved_types = Vec::new();
        for j in 0..p.num_types() {
            match estimate_offspring(&p.spec, batch, j, tracked) {
                Ok(mut rows) => p_hat.append(&mut rows),
                Err(Error::TypeNeverObserved(_)) => unobserved_types.push(j + 1),
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            n: batch.trees,
            censored_count: batch.censored,
            censored_fraction: batch.censored_fraction(),
            v_hat,
            v_true: p.v().to_vec(),
            size_total: batch.size_total,
            p_hat,
            unobserved_types,
            u_hat: None,
            u_true: p.u().to_vec(),
            additive: None,
        })
    }

    pub fn rows(&self, spec: &ProcessSpec) -> Vec<ReportRow> {
        let row = |name: String, estimate: f64, truth: Option<f64>| ReportRow {
            name,
            estimate,
            truth,
            abs_error: truth.map(|t| (estimate - t).abs()),
        };
        let mut rows = Vec::new();
        for (s, (&e, &t)) in self.v_hat.iter().zip(&self.v_true).enumerate() {
            rows.push(row(format!("v_hat[{}]", s + 1), e, Some(t)));
        }
        for o in &self.p_hat {
            let truth = spec
                .find_rule(o.parent, &o.offspring)
                .map(|r| spec.rules(o.parent)[r].prob);
            rows.push(row(
                format!("p_hat[{}][{}]", o.parent + 1, offspring_label(&o.offspring)),
                o.estimate,
                truth,
            ));
        }
        if let Some(u) = &self.u_hat {
            rows.push(row(
                format!("u_hat[{}]", u.root + 1),
                u.estimate,
                Some(self.u_true[u.root]),
            ));
        }
        if let Some(a) = &self.additive {
            rows.push(row("additive_scaled_sum".into(), a.scaled_sum, None));
            rows.push(row("C_g".into(), a.c_g, None));
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W, spec: &ProcessSpec) -> Result<()> {
        writeln!(out, "name,estimate,truth,abs_error")?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in self.rows(spec) {
            writeln!(
                out,
                "{},{:e},{},{}",
                r.name,
                r.estimate,
                opt(r.truth),
                opt(r.abs_error)
            )?;
        }
        Ok(())
    }
}
