//! Parallel batches of trees with results independent of the worker count.

use std::io::Write;

use rayon::prelude::*;

use super::{sample_tree_with, OffspringTables, SamplerConfig, TreeStats};
use crate::error::{Error, Result};
use crate::process::ProcessSpec;

/// Trees handed to one task.
const CHUNK: u64 = 64;

/// Totals and per-tree records of a batch.
///
/// Count totals are integers, so merging in any order gives the same result;
/// records are kept sorted by tree index and every floating-point sum is
/// taken over them in that order.
#[derive(Debug, Clone, Default)]
pub struct BatchAccumulator {
    pub trees: u64,
    pub censored: u64,
    pub size_total: u128,
    /// `sum_omega f(s; omega)` per type.
    pub f_totals: Vec<u128>,
    /// `sum_omega f(j -> n; omega)` per rule id.
    pub rule_totals: Vec<u128>,
    records: Vec<TreeStats>,
}

impl BatchAccumulator {
    pub fn new(spec: &ProcessSpec) -> Self {
        Self {
            f_totals: vec![0; spec.num_types()],
            rule_totals: vec![0; spec.num_rules()],
            ..Self::default()
        }
    }

    pub fn push(&mut self, t: TreeStats) {
        self.trees += 1;
        self.censored += t.censored as u64;
        self.size_total += t.size as u128;
        for (a, &b) in self.f_totals.iter_mut().zip(&t.f) {
            *a += b as u128;
        }
        for (a, &b) in self.rule_totals.iter_mut().zip(&t.rule_counts) {
            *a += b as u128;
        }
        if self
            .records
            .last()
            .is_some_and(|r| r.tree_index > t.tree_index)
        {
            let pos = self
                .records
                .partition_point(|r| r.tree_index < t.tree_index);
            self.records.insert(pos, t);
        } else {
            self.records.push(t);
        }
    }

    pub fn merge(&mut self, other: BatchAccumulator) {
        if self.f_totals.is_empty() {
            self.f_totals = vec![0; other.f_totals.len()];
            self.rule_totals = vec![0; other.rule_totals.len()];
        }
        self.trees += other.trees;
        self.censored += other.censored;
        self.size_total += other.size_total;
        for (a, b) in self.f_totals.iter_mut().zip(other.f_totals) {
            *a += b;
        }
        for (a, b) in self.rule_totals.iter_mut().zip(other.rule_totals) {
            *a += b;
        }
        let in_order = match (self.records.last(), other.records.first()) {
            (Some(a), Some(b)) => a.tree_index < b.tree_index,
            _ => true,
        };
        self.records.extend(other.records);
        if !in_order {
            self.records.sort_by_key(|r| r.tree_index);
        }
    }

    pub fn records(&self) -> &[TreeStats] {
        &self.records
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.trees == 0 {
            0.0
        } else {
            self.censored as f64 / self.trees as f64
        }
    }

    /// Number of type-`k` particles that applied a rule.
    pub fn expanded_total(&self, spec: &ProcessSpec, k: usize) -> u128 {
        self.rule_totals[spec.rule_range(k)].iter().sum()
    }

    /// `sum_omega S(omega, lambda_i)` for the i-th configured lambda.
    pub fn s_sum(&self, i: usize) -> f64 {
        self.records.iter().map(|r| r.s_lambda[i]).sum()
    }

    pub fn g_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.g_sum).collect()
    }
}

/// Samples trees `first .. first + count` in parallel on the current rayon
/// pool. On failure the error of the lowest failing tree index is returned.
pub fn sample_batch(
    spec: &ProcessSpec,
    config: &SamplerConfig,
    first: u64,
    count: u64,
) -> Result<BatchAccumulator> {
    config.validate(spec)?;
    let tables = OffspringTables::new(spec);
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<BatchAccumulator>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = first + c * CHUNK;
            let hi = (lo + CHUNK).min(first + count);
            let mut acc = BatchAccumulator::new(spec);
            for i in lo..hi {
                acc.push(sample_tree_with(spec, &tables, config, i)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = BatchAccumulator::new(spec);
    for part in parts {
        total.merge(part?);
    }
    Ok(total)
}

/// Runs `f` on a dedicated pool of `workers` threads (0 means rayon's
/// default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes one row per tree:
/// `tree_index,size,f_1..f_V,censored,S_<lambda>...`.
pub fn write_records_csv<W: Write>(
    mut out: W,
    acc: &BatchAccumulator,
    num_types: usize,
    lambdas: &[f64],
) -> Result<()> {
    let mut header = vec!["tree_index".to_string(), "size".to_string()];
    header.extend((1..=num_types).map(|k| format!("f_{k}")));
    header.push("censored".into());
    header.extend(lambdas.iter().map(|l| format!("S_{l}")));
    writeln!(out, "{}", header.join(","))?;
    for r in acc.records() {
        let mut row = vec![r.tree_index.to_string(), r.size.to_string()];
        row.extend(r.f.iter().map(u64::to_string));
        row.push((r.censored as u8).to_string());
        row.extend(r.s_lambda.iter().map(|s| format!("{s:e}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
