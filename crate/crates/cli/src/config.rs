//! Experiment configuration file.

use std::path::{Path, PathBuf};

use gwcrit::sampler::{AdditiveFn, CapPolicy, DEFAULT_NODE_CAP};
use gwcrit::{Error, ProcessSpec, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Process file, relative to the config file's directory.
    pub process: PathBuf,
    /// 1-based root type.
    #[serde(default = "one")]
    pub root_type: usize,
    pub master_seed: u64,
    #[serde(default = "default_cap")]
    pub node_cap: u64,
    #[serde(default)]
    pub cap_policy: CapPolicy,
    /// Relative to the config file's directory unless given by `--out`.
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    pub sample: Option<SampleBlock>,
    pub estimate: Option<EstimateBlock>,
    pub verify_thm1: Option<Thm1Block>,
    pub verify_thm2: Option<Thm2Block>,
    pub verify_thm3: Option<Thm3Block>,
    pub verify_thm4: Option<Thm4Block>,
}

fn one() -> usize {
    1
}

fn default_cap() -> u64 {
    DEFAULT_NODE_CAP
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub n: u64,
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRef {
    /// 1-based parent type.
    #[serde(rename = "type")]
    pub type_id: usize,
    pub offspring: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UBlock {
    pub n: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleValue {
    #[serde(rename = "type")]
    pub type_id: usize,
    pub offspring: Vec<u32>,
    pub g: f64,
}

/// An additive function: a preset (`"size"` or `"terminals"`), per-type
/// constants, or explicit per-rule values (unlisted rules count 0).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdditiveBlock {
    pub preset: Option<String>,
    pub per_type: Option<Vec<f64>>,
    pub rules: Option<Vec<RuleValue>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateBlock {
    pub n: u64,
    /// Empty means every rule.
    #[serde(default)]
    pub tracked_rules: Vec<RuleRef>,
    pub u: Option<UBlock>,
    pub additive: Option<AdditiveBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm1Block {
    pub n: usize,
    pub replicates: usize,
    /// Direction `c`; defaults to all ones.
    pub c: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    #[serde(default = "tol_008")]
    pub tolerance: f64,
    #[serde(default = "tol_008")]
    pub ks_tolerance: f64,
}

fn tol_008() -> f64 {
    0.08
}

fn tol_01() -> f64 {
    0.1
}

fn tol_005() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub c: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm2Block {
    pub n: usize,
    pub replicates: usize,
    pub grid: Option<Vec<GridPoint>>,
    #[serde(default = "tol_01")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm3Block {
    pub n: usize,
    pub replicates: usize,
    /// 1-based type whose rules are studied.
    #[serde(rename = "type")]
    pub type_id: usize,
    /// Offspring vectors of that type; defaults to all of its rules.
    pub rules: Option<Vec<Vec<u32>>>,
    pub grid: Option<Vec<GridPoint>>,
    #[serde(default = "tol_01")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm4Block {
    pub n_grid: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "ten")]
    pub chains: usize,
    #[serde(default = "tol_005")]
    pub tolerance: f64,
}

fn ten() -> usize {
    10
}

/// A parsed config with everything the commands need.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub spec: ProcessSpec,
    pub sha256: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Loaded {
    pub fn read(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let sha256 = hex(&Sha256::digest(&bytes));
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
        let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!(
                "{}: line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        if let Some(s) = seed {
            config.master_seed = s;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        config.output_dir = match out {
            Some(o) => o,
            None => base.join(&config.output_dir),
        };
        let process_path = base.join(&config.process);
        let spec = ProcessSpec::from_json_file(&process_path)?;
        if config.root_type == 0 || config.root_type > spec.num_types() {
            return Err(Error::InvalidArgument(format!(
                "root_type {} outside 1..={}",
                config.root_type,
                spec.num_types()
            )));
        }
        Ok(Self {
            config,
            spec,
            sha256,
        })
    }

    pub fn root(&self) -> usize {
        self.config.root_type - 1
    }

    pub fn type_index(&self, type_id: usize) -> Result<usize> {
        if type_id == 0 || type_id > self.spec.num_types() {
            return Err(Error::InvalidArgument(format!(
                "type {type_id} outside 1..={}",
                self.spec.num_types()
            )));
        }
        Ok(type_id - 1)
    }

    pub fn rule_refs(&self, refs: &[RuleRef]) -> Result<Vec<(usize, Vec<u32>)>> {
        refs.iter()
            .map(|r| Ok((self.type_index(r.type_id)?, r.offspring.clone())))
            .collect()
    }

    pub fn additive(&self, block: &AdditiveBlock) -> Result<AdditiveFn> {
        let spec = &self.spec;
        let chosen = [
            block.preset.is_some(),
            block.per_type.is_some(),
            block.rules.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if chosen != 1 {
            return Err(Error::InvalidArgument(
                "additive block needs exactly one of preset, per_type, rules".into(),
            ));
        }
        if let Some(p) = &block.preset {
            return match p.as_str() {
                "size" => Ok(AdditiveFn::from_fn(spec, |_, _| 1.0)),
                "terminals" => Ok(AdditiveFn::terminals(spec)),
                other => Err(Error::InvalidArgument(format!(
                    "unknown additive preset {other:?}"
                ))),
            };
        }
        if let Some(c) = &block.per_type {
            if c.len() != spec.num_types() {
                return Err(Error::InvalidArgument(
                    "per_type needs one value per type".into(),
                ));
            }
            return Ok(AdditiveFn::per_type(spec, c));
        }
        let mut values = Vec::new();
        for r in block.rules.as_deref().unwrap_or_default() {
            let k = self.type_index(r.type_id)?;
            spec.find_rule(k, &r.offspring)
                .ok_or_else(|| Error::UnknownRule {
                    type_id: r.type_id,
                    offspring: r.offspring.clone(),
                })?;
            values.push((k, r.offspring.clone(), r.g));
        }
        Ok(AdditiveFn::from_fn(spec, |k, n| {
            values
                .iter()
                .find(|(j, m, _)| *j == k && m.as_slice() == n)
                .map_or(0.0, |(_, _, g)| *g)
        }))
    }

    /// Header line carried by every CSV output.
    pub fn csv_header(&self) -> String {
        format!(
            "# config_sha256={} master_seed={}\n",
            self.sha256, self.config.master_seed
        )
    }
}

pub fn grid_points(points: &[GridPoint]) -> Vec<(Vec<f64>, f64)> {
    points.iter().map(|p| (p.c.clone(), p.k)).collect()
}
