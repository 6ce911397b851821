//! Monte Carlo checks of the limit laws: empirical characteristic functions
//! of replicate statistics compared with the closed forms, and KS distances
//! against the Levy CDF.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{lambda_schedule, u_from_records};
use crate::limits::{
    levy_cdf_scaled, rule_probabilities, s_lambda, theorem1_cf, theorem1_scale, LimitTarget,
};
use crate::process::CriticalProcess;
use crate::sampler::{sample_batch, stream_rng, stream_seed, BatchAccumulator, SamplerConfig};

/// Censored fraction above which a run is flagged.
pub const CENSOR_WARN: f64 = 0.01;
/// Censored fraction above which a run is rejected.
pub const CENSOR_LIMIT: f64 = 0.05;

const GRID_SEED: u64 = 0x6c65_7679;

/// Sampling parameters shared by the verifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// 0-based root type.
    pub root: usize,
    /// Trees per replicate.
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub node_cap: u64,
}

impl RunConfig {
    pub fn new(root: usize, n: usize, replicates: usize, master_seed: u64) -> Self {
        Self {
            root,
            n,
            replicates,
            master_seed,
            node_cap: crate::sampler::DEFAULT_NODE_CAP,
        }
    }

    fn sampler(&self, replicate: u64) -> SamplerConfig {
        let mut cfg = SamplerConfig::new(self.root, stream_seed(self.master_seed, replicate));
        cfg.node_cap = self.node_cap;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub label: String,
    pub theory: Complex64,
    pub empirical: Complex64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem4Detail {
    pub n_grid: Vec<usize>,
    pub beta: f64,
    pub u_true: f64,
    /// `errors[chain][i]` is `|u_hat - u_k|` at `n_grid[i]`.
    pub errors: Vec<Vec<f64>>,
    pub median_errors: Vec<f64>,
    pub decreasing: bool,
    /// `max |(1 - lambda_N) S_k(lambda_N) - u_k|` over the grid: the bias of
    /// the estimator, zero when `(1 - lambda) S_lambda = u` exactly.
    pub identity_error: f64,
    pub identity_exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub experiment: String,
    pub theorem: String,
    pub grid: String,
    pub rows: Vec<GridRow>,
    pub sup_cf_distance: f64,
    pub avg_cf_distance: f64,
    pub ks_statistic: Option<f64>,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub censored_fraction: f64,
    pub tolerance: f64,
    pub ks_tolerance: Option<f64>,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub theorem4: Option<Theorem4Detail>,
}

impl VerificationReport {
    fn from_rows(
        theorem: &str,
        grid: String,
        rows: Vec<GridRow>,
        run: &RunConfig,
        tolerance: f64,
    ) -> Self {
        let sup = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
        let avg = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.abs_diff).sum::<f64>() / rows.len() as f64
        };
        Self {
            experiment: format!(
                "{theorem}-root{}-N{}-R{}",
                run.root + 1,
                run.n,
                run.replicates
            ),
            theorem: theorem.into(),
            grid,
            rows,
            sup_cf_distance: sup,
            avg_cf_distance: avg,
            ks_statistic: None,
            n: run.n,
            replicates: run.replicates,
            master_seed: run.master_seed,
            censored_fraction: 0.0,
            tolerance,
            ks_tolerance: None,
            passed: sup <= tolerance,
            warnings: Vec::new(),
            theorem4: None,
        }
    }

    fn set_censoring(&mut self, fraction: f64) {
        self.censored_fraction = fraction;
        if fraction > CENSOR_WARN {
            self.warnings.push(format!(
                "censored fraction {fraction:.4} exceeds {CENSOR_WARN}"
            ));
        }
    }

    /// `label,theory_re,theory_im,empirical_re,empirical_im,abs_diff`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "label,theory_re,theory_im,empirical_re,empirical_im,abs_diff"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                r.label, r.theory.re, r.theory.im, r.empirical.re, r.empirical.im, r.abs_diff
            )?;
        }
        Ok(())
    }
}

/// `mean exp(i t x)`.
pub fn empirical_cf(samples: &[f64], t: f64) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let sum: Complex64 = samples
        .iter()
        .map(|&x| Complex64::new(0.0, t * x).exp())
        .sum();
    Ok(sum / samples.len() as f64)
}

/// `mean exp(i (c.z + K w))` over pairs `(z, w)`.
pub fn empirical_joint_cf(samples: &[(Vec<f64>, f64)], c: &[f64], k: f64) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let sum: Complex64 = samples
        .iter()
        .map(|(z, w)| {
            let arg: f64 = z.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() + k * w;
            Complex64::new(0.0, arg).exp()
        })
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

/// `t = +-{0.1, 0.2, 0.5, 1, 2, 5}`.
pub fn default_t_grid() -> Vec<f64> {
    let pos = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
    pos.iter().map(|t| -t).chain(pos).collect()
}

/// Eight `(c, K)` points with unit `c` drawn from a fixed seed and `K`
/// cycling through `{-1, -0.3, 0.3, 1}`.
pub fn default_ck_grid(dim: usize) -> Vec<(Vec<f64>, f64)> {
    let ks = [-1.0, -0.3, 0.3, 1.0];
    (0..8)
        .map(|i| {
            let mut rng = stream_rng(GRID_SEED, i as u64);
            let c = loop {
                let c: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = c.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    break c.iter().map(|x| x / norm).collect::<Vec<f64>>();
                }
            };
            (c, ks[i % 4])
        })
        .collect()
}

/// Uncensored totals of one replicate.
struct ReplicateTotals {
    f: Vec<f64>,
    rules: Vec<f64>,
    size: f64,
}

fn uncensored_totals(acc: &BatchAccumulator) -> ReplicateTotals {
    let (nf, nr) = (acc.f_totals.len(), acc.rule_totals.len());
    let mut f = vec![0u128; nf];
    let mut rules = vec![0u128; nr];
    let mut size = 0u128;
    for r in acc.records().iter().filter(|r| !r.censored) {
        for (a, &b) in f.iter_mut().zip(&r.f) {
            *a += b as u128;
        }
        for (a, &b) in rules.iter_mut().zip(&r.rule_counts) {
            *a += b as u128;
        }
        size += r.size as u128;
    }
    ReplicateTotals {
        f: f.into_iter().map(|x| x as f64).collect(),
        rules: rules.into_iter().map(|x| x as f64).collect(),
        size: size as f64,
    }
}

/// Runs the replicates in parallel and maps each to a statistic; returns the
/// statistics in replicate order and the overall censored fraction.
fn replicates<T: Send>(
    p: &CriticalProcess,
    run: &RunConfig,
    stat: impl Fn(&ReplicateTotals) -> T + Sync,
) -> Result<(Vec<T>, f64)> {
    if run.replicates == 0 || run.n == 0 {
        return Err(Error::EmptySample);
    }
    let out: Vec<Result<(T, u64)>> = (0..run.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let acc = sample_batch(&p.spec, &run.sampler(r), 0, run.n as u64)?;
            Ok((stat(&uncensored_totals(&acc)), acc.censored))
        })
        .collect();
    let mut stats = Vec::with_capacity(run.replicates);
    let mut censored = 0u64;
    for item in out {
        let (s, c) = item?;
        stats.push(s);
        censored += c;
    }
    let fraction = censored as f64 / (run.n as f64 * run.replicates as f64);
    if fraction > CENSOR_LIMIT {
        return Err(Error::ExcessiveCensoring {
            fraction,
            limit: CENSOR_LIMIT,
        });
    }
    Ok((stats, fraction))
}

fn check_root(p: &CriticalProcess, root: usize) -> Result<()> {
    if root >= p.num_types() {
        return Err(Error::InvalidArgument(format!(
            "root type {} out of range",
            root + 1
        )));
    }
    Ok(())
}

fn check_direction(c: &[f64], dim: usize) -> Result<()> {
    if c.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "direction has {} entries, expected {dim}",
            c.len()
        )));
    }
    Ok(())
}

/// Empirical law of `N^-2 sum c.f(omega_n)` against the Theorem 1 limit.
pub fn verify_theorem1(
    p: &CriticalProcess,
    run: &RunConfig,
    c: &[f64],
    t_grid: &[f64],
    tolerance: f64,
    ks_tolerance: f64,
) -> Result<VerificationReport> {
    check_root(p, run.root)?;
    check_direction(c, p.num_types())?;
    let n2 = (run.n as f64).powi(2);
    let (xs, censored) = replicates(p, run, |t| {
        t.f.iter().zip(c).map(|(f, ci)| f * ci).sum::<f64>() / n2
    })?;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let theory = theorem1_cf(p, run.root, c, t);
            let empirical = empirical_cf(&xs, t)?;
            Ok(GridRow {
                label: format!("t={t}"),
                theory,
                empirical,
                abs_diff: (theory - empirical).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = VerificationReport::from_rows("theorem1", "t".into(), rows, run, tolerance);
    report.set_censoring(censored);
    let scale = theorem1_scale(p, run.root, c);
    if scale > 0.0 {
        let ks = ks_statistic(&xs, |x| levy_cdf_scaled(x, scale))?;
        report.ks_statistic = Some(ks);
        report.ks_tolerance = Some(ks_tolerance);
        report.passed &= ks <= ks_tolerance;
    }
    Ok(report)
}

fn joint_rows(
    samples: &[(Vec<f64>, f64)],
    grid: &[(Vec<f64>, f64)],
    theory: impl Fn(&[f64], f64) -> Result<Complex64>,
) -> Result<Vec<GridRow>> {
    grid.iter()
        .enumerate()
        .map(|(i, (c, k))| {
            let th = theory(c, *k)?;
            let em = empirical_joint_cf(samples, c, *k)?;
            Ok(GridRow {
                label: format!("c{i}:K={k}"),
                theory: th,
                empirical: em,
                abs_diff: (th - em).norm(),
            })
        })
        .collect()
}

/// Pairs `(N^-1 sum (f - v|omega|), N^-2 sum |omega|)` against the joint
/// limit `exp(z u_k + i eta_k)`.
pub fn verify_theorem2(
    p: &CriticalProcess,
    run: &RunConfig,
    grid: &[(Vec<f64>, f64)],
    tolerance: f64,
) -> Result<VerificationReport> {
    check_root(p, run.root)?;
    for (c, _) in grid {
        check_direction(c, p.num_types())?;
    }
    let n = run.n as f64;
    let v = p.v().to_vec();
    let (samples, censored) = replicates(p, run, |t| {
        let z: Vec<f64> =
            t.f.iter()
                .zip(&v)
                .map(|(f, vs)| (f - vs * t.size) / n)
                .collect();
        (z, t.size / (n * n))
    })?;
    let rows = joint_rows(&samples, grid, |c, k| {
        Ok(LimitTarget::theorem2(p, run.root, c, k).cf)
    })?;
    let mut report = VerificationReport::from_rows("theorem2", "c,K".into(), rows, run, tolerance);
    report.set_censoring(censored);
    Ok(report)
}

/// Pairs `(N^-1 sum (F - q f(j)), N^-2 sum f(j))` for rules `n_1..n_M` of
/// type `j` against `exp(z u_k)`.
pub fn verify_theorem3(
    p: &CriticalProcess,
    run: &RunConfig,
    j: usize,
    rules: &[Vec<u32>],
    grid: &[(Vec<f64>, f64)],
    tolerance: f64,
) -> Result<VerificationReport> {
    check_root(p, run.root)?;
    if j >= p.num_types() {
        return Err(Error::InvalidArgument(format!(
            "type {} out of range",
            j + 1
        )));
    }
    for (c, _) in grid {
        check_direction(c, rules.len())?;
    }
    let q = rule_probabilities(&p.spec, j, rules)?;
    let ids: Vec<usize> = rules
        .iter()
        .map(|r| {
            p.spec
                .rule_id(j, p.spec.find_rule(j, r).expect("checked above"))
        })
        .collect();
    let range = p.spec.rule_range(j);
    let n = run.n as f64;
    let (samples, censored) = replicates(p, run, |t| {
        let fj: f64 = t.rules[range.clone()].iter().sum();
        let z: Vec<f64> = ids
            .iter()
            .zip(&q)
            .map(|(&id, qm)| (t.rules[id] - qm * fj) / n)
            .collect();
        (z, fj / (n * n))
    })?;
    let rows = joint_rows(&samples, grid, |c, k| {
        Ok(LimitTarget::theorem3(p, run.root, j, rules, c, k)?.cf)
    })?;
    let mut report = VerificationReport::from_rows("theorem3", "c,K".into(), rows, run, tolerance);
    report.set_censoring(censored);
    Ok(report)
}

/// Runs the `u_k` estimator over `chains` independent seed chains, each a
/// single sample of `max(n_grid)` trees whose prefixes give the smaller `N`.
/// Passes when the median error decreases along the grid and the final
/// median is within `tolerance`.
#[allow(clippy::too_many_arguments)]
pub fn verify_theorem4(
    p: &CriticalProcess,
    root: usize,
    n_grid: &[usize],
    beta: f64,
    chains: usize,
    master_seed: u64,
    node_cap: u64,
    tolerance: f64,
) -> Result<VerificationReport> {
    check_root(p, root)?;
    if n_grid.is_empty() || chains == 0 || n_grid.contains(&0) {
        return Err(Error::EmptySample);
    }
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "beta {beta} not in (0, 1/2)"
        )));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().expect("nonempty");
    let u_true = p.u()[root];

    let per_chain: Vec<Result<(Vec<f64>, u64)>> = (0..chains as u64)
        .into_par_iter()
        .map(|chain| {
            let mut cfg = SamplerConfig::new(root, stream_seed(master_seed, chain));
            cfg.node_cap = node_cap;
            cfg.depth_histogram = true;
            let acc = sample_batch(&p.spec, &cfg, 0, n_max as u64)?;
            let errs = grid
                .iter()
                .map(|&n| {
                    Ok((u_from_records(&acc.records()[..n], root, beta)?.estimate - u_true).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((errs, acc.censored))
        })
        .collect();
    let mut errors = Vec::with_capacity(chains);
    let mut censored = 0u64;
    for item in per_chain {
        let (e, c) = item?;
        errors.push(e);
        censored += c;
    }
    let fraction = censored as f64 / (n_max as f64 * chains as f64);
    if fraction > CENSOR_LIMIT {
        return Err(Error::ExcessiveCensoring {
            fraction,
            limit: CENSOR_LIMIT,
        });
    }

    let median_errors: Vec<f64> = (0..grid.len())
        .map(|i| median(errors.iter().map(|e| e[i]).collect()))
        .collect();
    let decreasing = median_errors.windows(2).all(|w| w[1] < w[0]);
    let mut identity_error: f64 = 0.0;
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &n) in grid.iter().enumerate() {
        let lambda = lambda_schedule(n, beta);
        let expected = (1.0 - lambda) * s_lambda(&p.eigen, lambda)?[root];
        identity_error = identity_error.max((expected - u_true).abs());
        let med = median(errors.iter().map(|e| e[i]).collect());
        rows.push(GridRow {
            label: format!("N={n}"),
            theory: Complex64::new(u_true, 0.0),
            empirical: Complex64::new(u_true + med, 0.0),
            abs_diff: med,
        });
    }
    let run = RunConfig {
        root,
        n: n_max,
        replicates: chains,
        master_seed,
        node_cap,
    };
    let mut report = VerificationReport::from_rows("theorem4", "N".into(), rows, &run, tolerance);
    let final_err = *median_errors.last().expect("nonempty");
    report.sup_cf_distance = final_err;
    report.passed = decreasing && final_err <= tolerance;
    report.set_censoring(fraction);
    report.theorem4 = Some(Theorem4Detail {
        n_grid: grid,
        beta,
        u_true,
        errors,
        median_errors,
        decreasing,
        identity_error,
        identity_exact: identity_error <= 1e-12,
    });
    Ok(report)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
