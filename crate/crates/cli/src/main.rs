mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwcrit::estimators::{additive_sum, estimate_u, EstimateReport};
use gwcrit::sampler::{sample_batch, with_workers, write_records_csv, SamplerConfig};
use gwcrit::verify::{
    default_ck_grid, default_t_grid, verify_theorem1, verify_theorem2, verify_theorem3,
    verify_theorem4, RunConfig, VerificationReport,
};
use gwcrit::{CriticalProcess, EigenData, Error, ProcessSpec, Result};
use serde_json::json;

use config::{grid_points, Loaded};

const EXIT_VALIDATION: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gwcrit",
    version,
    about = "Critical multi-type Galton-Watson experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a process file and print its Frobenius data.
    Validate { process: PathBuf },
    /// Sample trees and write one CSV row per tree.
    Sample(RunArgs),
    /// Estimate v, the offspring laws and optionally u_k.
    Estimate(RunArgs),
    #[command(name = "verify-thm1")]
    VerifyThm1(RunArgs),
    #[command(name = "verify-thm2")]
    VerifyThm2(RunArgs),
    #[command(name = "verify-thm3")]
    VerifyThm3(RunArgs),
    #[command(name = "verify-thm4")]
    VerifyThm4(RunArgs),
    /// Validate, then run every configured block.
    AllChecks(RunArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse(_) => EXIT_IO,
        Error::CapExceeded { .. } | Error::ExcessiveCensoring { .. } => EXIT_TOLERANCE,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_TOLERANCE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Returns whether every check passed.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Validate { process } => {
            let spec = ProcessSpec::from_json_file(&process)?;
            let p = CriticalProcess::new(spec)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&validation_json(&p)).expect("json")
            );
            Ok(true)
        }
        Command::Sample(a) => with_loaded(a, cmd_sample),
        Command::Estimate(a) => with_loaded(a, cmd_estimate),
        Command::VerifyThm1(a) => with_loaded(a, |l, p| cmd_verify(l, p, 1)),
        Command::VerifyThm2(a) => with_loaded(a, |l, p| cmd_verify(l, p, 2)),
        Command::VerifyThm3(a) => with_loaded(a, |l, p| cmd_verify(l, p, 3)),
        Command::VerifyThm4(a) => with_loaded(a, |l, p| cmd_verify(l, p, 4)),
        Command::AllChecks(a) => with_loaded(a, cmd_all),
    }
}

fn with_loaded(
    args: RunArgs,
    f: impl FnOnce(&Loaded, &CriticalProcess) -> Result<bool> + Send,
) -> Result<bool> {
    let loaded = Loaded::read(&args.config, args.seed, args.out)?;
    let p = CriticalProcess::new(loaded.spec.clone())?;
    fs::create_dir_all(&loaded.config.output_dir)?;
    with_workers(loaded.config.workers, || f(&loaded, &p))?
}

fn validation_json(p: &CriticalProcess) -> serde_json::Value {
    json!({
        "types": p.num_types(),
        "rho": p.eigen.rho,
        "primitive_power": p.report.primitive_power,
        "v": p.v(),
        "u": p.u(),
        "H_u": p.h_u,
        "Lambda": EigenData::rows(&p.eigen.lambda),
        "mean_matrix": EigenData::rows(&p.eigen.mean),
    })
}

fn write_json(path: &Path, loaded: &Loaded, key: &str, value: serde_json::Value) -> Result<()> {
    let doc = json!({
        "config_sha256": loaded.sha256,
        "master_seed": loaded.config.master_seed,
        key: value,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(
    path: &Path,
    loaded: &Loaded,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = loaded.csv_header().into_bytes();
    body(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn sampler_config(loaded: &Loaded) -> SamplerConfig {
    let mut cfg = SamplerConfig::new(loaded.root(), loaded.config.master_seed);
    cfg.node_cap = loaded.config.node_cap;
    cfg.cap_policy = loaded.config.cap_policy;
    cfg
}

fn missing(block: &str) -> Error {
    Error::InvalidArgument(format!("config has no {block} block"))
}

fn cmd_sample(loaded: &Loaded, p: &CriticalProcess) -> Result<bool> {
    let block = loaded
        .config
        .sample
        .as_ref()
        .ok_or_else(|| missing("sample"))?;
    let mut cfg = sampler_config(loaded);
    cfg.lambdas = block.lambdas.clone();
    let batch = sample_batch(&p.spec, &cfg, 0, block.n)?;
    let path = loaded.config.output_dir.join("trees.csv");
    write_csv(&path, loaded, |buf| {
        write_records_csv(buf, &batch, p.num_types(), &cfg.lambdas)
    })?;
    println!(
        "sampled {} trees ({} censored) -> {}",
        batch.trees,
        batch.censored,
        path.display()
    );
    Ok(true)
}

fn cmd_estimate(loaded: &Loaded, p: &CriticalProcess) -> Result<bool> {
    let block = loaded
        .config
        .estimate
        .as_ref()
        .ok_or_else(|| missing("estimate"))?;
    let mut cfg = sampler_config(loaded);
    cfg.tracked_rules = loaded.rule_refs(&block.tracked_rules)?;
    let additive = block
        .additive
        .as_ref()
        .map(|a| loaded.additive(a))
        .transpose()?;
    cfg.validate(&p.spec)?;
    let batch = sample_batch(&p.spec, &cfg, 0, block.n)?;
    let mut report = EstimateReport::from_batch(p, &batch, &cfg.tracked_rule_ids(&p.spec))?;
    if let Some(g) = &additive {
        report.additive = Some(additive_sum(p, &batch, g)?);
    }
    if let Some(u) = &block.u {
        // u uses its own tree stream so the v/p sample stays fixed
        let mut ucfg = sampler_config(loaded);
        ucfg.master_seed = gwcrit::sampler::stream_seed(loaded.config.master_seed, u64::MAX);
        report.u_hat = Some(estimate_u(&p.spec, &ucfg, u.n, u.beta)?);
    }
    let dir = &loaded.config.output_dir;
    write_json(
        &dir.join("estimate.json"),
        loaded,
        "estimate",
        serde_json::to_value(&report).expect("json"),
    )?;
    write_csv(&dir.join("estimate.csv"), loaded, |buf| {
        report.write_csv(buf, &p.spec)
    })?;
    let mut out = std::io::stdout().lock();
    for r in report.rows(&p.spec) {
        let truth = r
            .truth
            .map(|t| format!("  truth {t:.6}"))
            .unwrap_or_default();
        writeln!(out, "{:<24} {:>12.6}{truth}", r.name, r.estimate)?;
    }
    if report.censored_count > 0 {
        writeln!(
            out,
            "censored trees: {} ({:.4})",
            report.censored_count, report.censored_fraction
        )?;
    }
    Ok(true)
}

fn run_verifier(loaded: &Loaded, p: &CriticalProcess, which: u8) -> Result<VerificationReport> {
    let c = &loaded.config;
    let root = loaded.root();
    match which {
        1 => {
            let b = c
                .verify_thm1
                .as_ref()
                .ok_or_else(|| missing("verify_thm1"))?;
            let mut run = RunConfig::new(root, b.n, b.replicates, c.master_seed);
            run.node_cap = c.node_cap;
            let dir = b.c.clone().unwrap_or_else(|| vec![1.0; p.num_types()]);
            let grid = b.t_grid.clone().unwrap_or_else(default_t_grid);
            verify_theorem1(p, &run, &dir, &grid, b.tolerance, b.ks_tolerance)
        }
        2 => {
            let b = c
                .verify_thm2
                .as_ref()
                .ok_or_else(|| missing("verify_thm2"))?;
            let mut run = RunConfig::new(root, b.n, b.replicates, c.master_seed);
            run.node_cap = c.node_cap;
            let grid = b
                .grid
                .as_deref()
                .map(grid_points)
                .unwrap_or_else(|| default_ck_grid(p.num_types()));
            verify_theorem2(p, &run, &grid, b.tolerance)
        }
        3 => {
            let b = c
                .verify_thm3
                .as_ref()
                .ok_or_else(|| missing("verify_thm3"))?;
            let mut run = RunConfig::new(root, b.n, b.replicates, c.master_seed);
            run.node_cap = c.node_cap;
            let j = loaded.type_index(b.type_id)?;
            let rules = b.rules.clone().unwrap_or_else(|| {
                p.spec
                    .rules(j)
                    .iter()
                    .map(|r| r.offspring.clone())
                    .collect()
            });
            let grid = b
                .grid
                .as_deref()
                .map(grid_points)
                .unwrap_or_else(|| default_ck_grid(rules.len()));
            verify_theorem3(p, &run, j, &rules, &grid, b.tolerance)
        }
        _ => {
            let b = c
                .verify_thm4
                .as_ref()
                .ok_or_else(|| missing("verify_thm4"))?;
            verify_theorem4(
                p,
                root,
                &b.n_grid,
                b.beta,
                b.chains,
                c.master_seed,
                c.node_cap,
                b.tolerance,
            )
        }
    }
}

fn cmd_verify(loaded: &Loaded, p: &CriticalProcess, which: u8) -> Result<bool> {
    let report = run_verifier(loaded, p, which)?;
    let dir = &loaded.config.output_dir;
    let stem = format!("verify_thm{which}");
    write_json(
        &dir.join(format!("{stem}.json")),
        loaded,
        "report",
        serde_json::to_value(&report).expect("json"),
    )?;
    write_csv(&dir.join(format!("{stem}.csv")), loaded, |buf| {
        report.write_csv(buf)
    })?;
    print_report(&report);
    Ok(report.passed)
}

fn print_report(r: &VerificationReport) {
    let verdict = if r.passed { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {} (N={}, replicates={})",
        r.experiment, r.n, r.replicates
    );
    for row in &r.rows {
        println!(
            "  {:<16} theory {:>9.5}{:+.5}i  empirical {:>9.5}{:+.5}i  |diff| {:.5}",
            row.label,
            row.theory.re,
            row.theory.im,
            row.empirical.re,
            row.empirical.im,
            row.abs_diff
        );
    }
    println!(
        "  sup distance {:.5} (tolerance {})",
        r.sup_cf_distance, r.tolerance
    );
    if let (Some(ks), Some(tol)) = (r.ks_statistic, r.ks_tolerance) {
        println!("  KS statistic {ks:.5} (tolerance {tol})");
    }
    if let Some(d) = &r.theorem4 {
        println!(
            "  median errors {:?}, decreasing: {}",
            d.median_errors, d.decreasing
        );
        if d.identity_exact {
            println!(
                "  exact identity (1-lambda) S_lambda = u: PASS (max error {:e})",
                d.identity_error
            );
        } else {
            println!(
                "  deterministic bias |(1-lambda) S_lambda - u| up to {:.4e}",
                d.identity_error
            );
        }
    }
    println!("  censored fraction {:.6}", r.censored_fraction);
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

fn cmd_all(loaded: &Loaded, p: &CriticalProcess) -> Result<bool> {
    println!(
        "{}",
        serde_json::to_string_pretty(&validation_json(p)).expect("json")
    );
    let c = &loaded.config;
    if c.sample.is_some() {
        cmd_sample(loaded, p)?;
    }
    if c.estimate.is_some() {
        cmd_estimate(loaded, p)?;
    }
    let configured = [
        c.verify_thm1.is_some(),
        c.verify_thm2.is_some(),
        c.verify_thm3.is_some(),
        c.verify_thm4.is_some(),
    ];
    let mut all = true;
    for (i, _) in configured.iter().enumerate().filter(|(_, &on)| on) {
        all &= cmd_verify(loaded, p, i as u8 + 1)?;
    }
    println!(
        "{}",
        if all {
            "ALL PASS"
        } else {
            "SOME CHECKS FAILED"
        }
    );
    Ok(all)
}
