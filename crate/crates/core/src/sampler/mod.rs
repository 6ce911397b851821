//! Streaming sampler for i.i.d. branching trees.
//!
//! Trees are grown one generation at a time and never stored: each generation
//! is a vector of per-type particle counts, and the rule counts of a whole
//! generation are drawn at once (see [`RuleSampler`]). Everything recorded in
//! [`TreeStats`] is a function of the per-generation rule counts, so the cost
//! of a tree grows with its height rather than with its size.

pub mod alias;
mod batch;
pub mod rng;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use alias::{AliasTable, RuleSampler};
pub use batch::{sample_batch, with_workers, write_records_csv, BatchAccumulator};
pub use rng::{stream_rng, stream_seed, TreeRng};

use crate::error::{Error, Result};
use crate::process::{ProcessSpec, RuleId};

/// Default cap on the number of particles in one tree.
pub const DEFAULT_NODE_CAP: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CapPolicy {
    /// Stop growing, flag the tree, keep the truncated statistics.
    #[default]
    Censor,
    Abort,
}

/// Per-rule values `g_s(n)` of an additive function, indexed by [`RuleId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFn {
    values: Vec<f64>,
}

impl AdditiveFn {
    pub fn from_fn(spec: &ProcessSpec, mut g: impl FnMut(usize, &[u32]) -> f64) -> Self {
        let values = (0..spec.num_rules())
            .map(|id| {
                let (k, rule) = spec.rule_by_id(id);
                g(k, &rule.offspring)
            })
            .collect();
        Self { values }
    }

    /// `g_s(n) = c_s`, so that `G(omega) = c . f(omega)`.
    pub fn per_type(spec: &ProcessSpec, c: &[f64]) -> Self {
        Self::from_fn(spec, |k, _| c[k])
    }

    /// `g_s(n) = 1{|n| = 0}`: counts leaves.
    pub fn terminals(spec: &ProcessSpec) -> Self {
        Self::from_fn(
            spec,
            |_, n| if n.iter().all(|&x| x == 0) { 1.0 } else { 0.0 },
        )
    }

    pub fn value(&self, id: RuleId) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `G(omega) = sum g_s(n) f(s -> n; omega)`.
    pub fn evaluate(&self, rule_counts: &[u64]) -> f64 {
        self.values
            .iter()
            .zip(rule_counts)
            .map(|(g, &c)| g * c as f64)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// 0-based root type.
    pub root_type: usize,
    pub node_cap: u64,
    pub cap_policy: CapPolicy,
    /// Discount factors for `S(omega, lambda)`, each strictly inside (0, 1).
    pub lambdas: Vec<f64>,
    /// Rules reported by the estimators; empty means every rule.
    pub tracked_rules: Vec<(usize, Vec<u32>)>,
    pub additive_g: Option<AdditiveFn>,
    pub master_seed: u64,
    /// Keep nodes-per-depth so `S(omega, lambda)` can be re-evaluated later.
    pub depth_histogram: bool,
}

impl SamplerConfig {
    pub fn new(root_type: usize, master_seed: u64) -> Self {
        Self {
            root_type,
            node_cap: DEFAULT_NODE_CAP,
            cap_policy: CapPolicy::Censor,
            lambdas: Vec::new(),
            tracked_rules: Vec::new(),
            additive_g: None,
            master_seed,
            depth_histogram: false,
        }
    }

    pub fn validate(&self, spec: &ProcessSpec) -> Result<()> {
        if self.root_type >= spec.num_types() {
            return Err(Error::InvalidArgument(format!(
                "root type {} outside 1..={}",
                self.root_type + 1,
                spec.num_types()
            )));
        }
        if self.node_cap == 0 {
            return Err(Error::InvalidArgument("node cap must be positive".into()));
        }
        if let Some(&l) = self.lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidArgument(format!("lambda {l} not in (0, 1)")));
        }
        for (k, n) in &self.tracked_rules {
            if spec.find_rule(*k, n).is_none() {
                return Err(Error::UnknownRule {
                    type_id: k + 1,
                    offspring: n.clone(),
                });
            }
        }
        if let Some(g) = &self.additive_g {
            if g.values.len() != spec.num_rules() {
                return Err(Error::InvalidArgument(
                    "additive function table does not match the process rules".into(),
                ));
            }
        }
        Ok(())
    }

    /// Global ids of the tracked rules (all rules when none are listed).
    pub fn tracked_rule_ids(&self, spec: &ProcessSpec) -> Vec<RuleId> {
        if self.tracked_rules.is_empty() {
            return (0..spec.num_rules()).collect();
        }
        self.tracked_rules
            .iter()
            .filter_map(|(k, n)| spec.find_rule(*k, n).map(|i| spec.rule_id(*k, i)))
            .collect()
    }
}

/// Sufficient statistics of one tree.
///
/// For censored trees the unexpanded last generation is counted in `f` and
/// `size` but has no rule counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeStats {
    pub tree_index: u64,
    /// Particles per type, `f(s; omega)`.
    pub f: Vec<u64>,
    /// `f(j -> n; omega)` for every rule, indexed by [`RuleId`].
    pub rule_counts: Vec<u64>,
    pub size: u64,
    /// `S(omega, lambda)` for each configured lambda.
    pub s_lambda: Vec<f64>,
    pub g_sum: f64,
    pub censored: bool,
    pub depth_histogram: Option<Vec<u64>>,
}

impl TreeStats {
    /// `S(omega, lambda)` from the depth histogram.
    pub fn s_at(&self, lambda: f64) -> Option<f64> {
        let hist = self.depth_histogram.as_ref()?;
        Some(
            hist.iter()
                .rev()
                .fold(0.0, |acc, &c| acc * lambda + c as f64),
        )
    }

    pub fn height(&self) -> Option<usize> {
        self.depth_histogram
            .as_ref()
            .map(|h| h.len().saturating_sub(1))
    }

    /// Number of type-`k` particles that applied a rule.
    pub fn expanded(&self, spec: &ProcessSpec, k: usize) -> u64 {
        self.rule_counts[spec.rule_range(k)].iter().sum()
    }
}

/// Where the rule counts of a generation come from.
pub trait RuleSource {
    /// Adds to `counts` (one slot per rule of `parent`) the rules applied by
    /// `particles` particles of type `parent`.
    fn assign(&mut self, parent: usize, particles: u64, counts: &mut [u64]) -> Result<()>;
}

/// Per-type samplers, built once per process.
#[derive(Debug, Clone)]
pub struct OffspringTables {
    samplers: Vec<RuleSampler>,
}

impl OffspringTables {
    pub fn new(spec: &ProcessSpec) -> Self {
        let samplers = (0..spec.num_types())
            .map(|k| {
                let probs: Vec<f64> = spec.rules(k).iter().map(|r| r.prob).collect();
                RuleSampler::new(&probs)
            })
            .collect();
        Self { samplers }
    }
}

pub struct RandomRules<'a> {
    tables: &'a OffspringTables,
    rng: TreeRng,
}

impl<'a> RandomRules<'a> {
    pub fn new(tables: &'a OffspringTables, rng: TreeRng) -> Self {
        Self { tables, rng }
    }
}

impl RuleSource for RandomRules<'_> {
    #[inline]
    fn assign(&mut self, parent: usize, particles: u64, counts: &mut [u64]) -> Result<()> {
        self.tables.samplers[parent].assign(particles, counts, &mut self.rng);
        Ok(())
    }
}

/// Replays a fixed sequence of offspring vectors, consumed generation by
/// generation and, within a generation, by ascending parent type.
pub struct ForcedRules<'a> {
    spec: &'a ProcessSpec,
    queue: VecDeque<Vec<u32>>,
}

impl<'a> ForcedRules<'a> {
    pub fn new(spec: &'a ProcessSpec, sequence: Vec<Vec<u32>>) -> Self {
        Self {
            spec,
            queue: sequence.into(),
        }
    }
}

impl RuleSource for ForcedRules<'_> {
    fn assign(&mut self, parent: usize, particles: u64, counts: &mut [u64]) -> Result<()> {
        for _ in 0..particles {
            let n = self
                .queue
                .pop_front()
                .ok_or_else(|| Error::InvalidArgument("forced rule sequence ran out".into()))?;
            let r = self.spec.find_rule(parent, &n).ok_or(Error::UnknownRule {
                type_id: parent + 1,
                offspring: n,
            })?;
            counts[r] += 1;
        }
        Ok(())
    }
}

/// Grows one tree from `source` and returns its statistics.
pub fn grow_tree<S: RuleSource>(
    spec: &ProcessSpec,
    config: &SamplerConfig,
    tree_index: u64,
    source: &mut S,
) -> Result<TreeStats> {
    let v = spec.num_types();
    let mut generation = vec![0u64; v];
    generation[config.root_type] = 1;
    let mut next = vec![0u64; v];
    let mut f = vec![0u64; v];
    let mut rule_counts = vec![0u64; spec.num_rules()];
    let mut scratch: Vec<u64> = Vec::new();
    let mut s_lambda = vec![0.0; config.lambdas.len()];
    let mut powers = vec![1.0; config.lambdas.len()];
    let mut hist = config.depth_histogram.then(Vec::new);
    let mut size = 0u64;
    let mut censored = false;

    loop {
        let width: u64 = generation.iter().sum();
        if width == 0 {
            break;
        }
        size += width;
        for (a, &b) in f.iter_mut().zip(&generation) {
            *a += b;
        }
        for ((s, p), &l) in s_lambda.iter_mut().zip(&mut powers).zip(&config.lambdas) {
            *s += width as f64 * *p;
            *p *= l;
        }
        if let Some(h) = hist.as_mut() {
            h.push(width);
        }
        if size > config.node_cap {
            match config.cap_policy {
                CapPolicy::Censor => {
                    censored = true;
                    break;
                }
                CapPolicy::Abort => {
                    return Err(Error::CapExceeded {
                        tree_index,
                        cap: config.node_cap,
                    })
                }
            }
        }

        next.iter_mut().for_each(|x| *x = 0);
        for (k, &count) in generation.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let rules = spec.rules(k);
            scratch.clear();
            scratch.resize(rules.len(), 0);
            source.assign(k, count, &mut scratch)?;
            let base = spec.rule_id(k, 0);
            for (r, &c) in scratch.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                rule_counts[base + r] += c;
                for (x, &n) in next.iter_mut().zip(&rules[r].offspring) {
                    *x += c * n as u64;
                }
            }
        }
        std::mem::swap(&mut generation, &mut next);
    }

    let g_sum = config
        .additive_g
        .as_ref()
        .map_or(0.0, |g| g.evaluate(&rule_counts));
    Ok(TreeStats {
        tree_index,
        f,
        rule_counts,
        size,
        s_lambda,
        g_sum,
        censored,
        depth_histogram: hist,
    })
}

/// Samples tree `tree_index` of the stream keyed by `config.master_seed`.
pub fn sample_tree(
    spec: &ProcessSpec,
    config: &SamplerConfig,
    tree_index: u64,
) -> Result<TreeStats> {
    let tables = OffspringTables::new(spec);
    sample_tree_with(spec, &tables, config, tree_index)
}

pub fn sample_tree_with(
    spec: &ProcessSpec,
    tables: &OffspringTables,
    config: &SamplerConfig,
    tree_index: u64,
) -> Result<TreeStats> {
    let mut source = RandomRules::new(tables, stream_rng(config.master_seed, tree_index));
    grow_tree(spec, config, tree_index, &mut source)
}
