//! Command-line interface.
//!
//! Exit codes: 0 success, 1 failed audit, 2 I/O error, 64 usage or
//! validation error, 70 internal numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    concentration_bound, delta_l_bound, expected_gram_mse, gram_diff_upper_bound,
    gram_inversion_bound, oracle_mle_mse, sign_test_error, tu_lipschitz_bound, AuditOptions,
    BoundReport,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_unknown_sigma, estimate_with_sigma};
use crate::experiments::{
    audit_jsonl, grid_csv, mse_csv, run_mse_validation, run_phase_transition, run_sigma_benchmark,
    run_stability_audit, sigma_bench_csv, with_threads, MseConfig, SigmaBenchConfig, SweepConfig,
};
use crate::io::{
    fmt_f64_12, io_at, parse_json, read_json, read_text, write_cloud, write_json, write_text, BatchMetadata,
};
use crate::metric::relative_error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "cloudorbit", version, about = "Point-cloud estimation up to orthogonal transformation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a ground-truth cloud and write it with the batch metadata.
    Gen(GenArgs),
    /// Regenerate a batch from metadata and estimate the cloud.
    Estimate(EstimateArgs),
    /// Phase-transition sweep over a (sigma, N) grid.
    Sweep(RunArgs),
    /// Noise-level estimation error against N.
    SigmaBench(RunArgs),
    /// Gram MSE and error-slope validation.
    MseCheck(RunArgs),
    /// Randomized audits of the stability bounds.
    Verify(VerifyArgs),
    /// Evaluate a closed-form bound or formula.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_cloud: PathBuf,
    #[arg(long)]
    pub out_meta: PathBuf,
    /// Keep the Gaussian cloud unnormalized instead of scaling it to unit
    /// Frobenius norm.
    #[arg(long)]
    pub unnormalized: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("noise").required(true).args(["sigma_known", "sigma_unknown"])))]
pub struct EstimateArgs {
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub sigma_known: bool,
    #[arg(long)]
    pub sigma_unknown: bool,
    /// Estimated cloud CSV; the report goes to the same path with `.json`
    /// appended.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Shrinks the named audit's bound so that it fails.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub formula: String,
    /// Comma-separated `name=value` pairs.
    #[arg(long, default_value = "")]
    pub params: String,
}

/// Settings of the `verify` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_trials() -> usize {
    1000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            master_seed: 0,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Dimension(_)
        | Error::Argument(_)
        | Error::Config(_)
        | Error::Parse(_) => EXIT_USAGE,
        Error::Degeneracy(_) | Error::NotPsd(_) | Error::Numerical(_) | Error::Resource(_) => {
            EXIT_INTERNAL
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Estimate(a) => cmd_estimate(&a, out),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::SigmaBench(a) => cmd_sigma_bench(&a),
        Command::MseCheck(a) => cmd_mse_check(&a),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Bounds(a) => cmd_bounds(&a, out),
    }
}

fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let meta = BatchMetadata {
        d: a.d,
        k: a.k,
        sigma: a.sigma,
        n: a.n,
        seed: a.seed,
        unit_frobenius: !a.unnormalized,
    };
    if !(a.sigma >= 0.0) || !a.sigma.is_finite() {
        return Err(Error::Argument(format!("sigma must be finite and >= 0, got {}", a.sigma)));
    }
    if a.n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    let cloud = meta.cloud()?;
    write_cloud(&a.out_cloud, cloud.matrix())?;
    write_json(&a.out_meta, &meta)?;
    Ok(EXIT_OK)
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => parse_json(&read_text(p)?, &p.display().to_string()),
    }
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<i32> {
    let meta: BatchMetadata = read_json(&a.meta)?;
    let cloud = meta.cloud()?;
    let batch = meta.batch(&cloud)?;
    let report = if a.sigma_known {
        estimate_with_sigma(&batch, meta.sigma)?
    } else {
        estimate_unknown_sigma(&batch)?
    };
    let rho_rel = relative_error(cloud.matrix(), report.cloud_estimate.matrix())?;
    if let Some(path) = &a.out {
        write_cloud(path, report.cloud_estimate.matrix())?;
        let mut sidecar = path.clone().into_os_string();
        sidecar.push(".json");
        write_json(Path::new(&sidecar), &report.sidecar(batch.n))?;
    }
    writeln!(
        out,
        "rho_rel={} sigma_hat={} eigengap={}",
        fmt_f64_12(rho_rel),
        fmt_f64_12(report.sigma_used),
        fmt_f64_12(report.eigengap)
    )?;
    Ok(EXIT_OK)
}

fn write_output(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    write_text(&dir.join(name), text)
}

fn cmd_sweep(a: &RunArgs) -> Result<i32> {
    let config: SweepConfig = read_config(a.config.as_deref())?;
    config.validate()?;
    let result = with_threads(a.threads, || run_phase_transition(&config))??;
    write_output(&a.out_dir, "grid.csv", &grid_csv(&result))?;
    Ok(EXIT_OK)
}

fn cmd_sigma_bench(a: &RunArgs) -> Result<i32> {
    let config: SigmaBenchConfig = read_config(a.config.as_deref())?;
    config.validate()?;
    let rows = with_threads(a.threads, || run_sigma_benchmark(&config))??;
    write_output(&a.out_dir, "sigma_bench.csv", &sigma_bench_csv(&rows))?;
    Ok(EXIT_OK)
}

fn cmd_mse_check(a: &RunArgs) -> Result<i32> {
    let config: MseConfig = read_config(a.config.as_deref())?;
    config.validate()?;
    let result = with_threads(a.threads, || run_mse_validation(&config))??;
    write_output(&a.out_dir, "mse.csv", &mse_csv(&result))?;
    let mut slopes = serde_json::to_string_pretty(&result.slopes)
        .map_err(|e| Error::Parse(e.to_string()))?;
    slopes.push('\n');
    write_output(&a.out_dir, "slopes.json", &slopes)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let config: VerifyConfig = read_config(a.run.config.as_deref())?;
    let opts = AuditOptions {
        fault: a.inject_fault.clone(),
    };
    let records = with_threads(a.run.threads, || {
        run_stability_audit(config.trials, config.master_seed, &opts)
    })??;
    write_output(&a.run.out_dir, "audit.jsonl", &audit_jsonl(&records))?;
    for r in &records {
        writeln!(
            out,
            "{} {} violations={}/{}",
            if r.pass { "PASS" } else { "FAIL" },
            r.audit_name,
            r.violations,
            r.trials
        )?;
    }
    Ok(if records.iter().all(|r| r.pass) {
        EXIT_OK
    } else {
        EXIT_AUDIT_FAILED
    })
}

/// Formulas accepted by `bounds --formula`, with their parameters.
pub const FORMULAS: [(&str, &[&str]); 8] = [
    ("gram_inversion", &["sigma_d", "gap"]),
    ("tu_lipschitz", &["sigma_d", "gap"]),
    ("gram_diff", &["opnorm", "rho"]),
    ("concentration", &["d", "k", "n", "sigma", "opnorm", "delta"]),
    ("gram_mse", &["d", "k", "n", "sigma", "frob2"]),
    ("oracle_mse", &["d", "k", "n", "sigma"]),
    ("sign_test", &["norm_x", "sigma"]),
    ("delta_l", &["d", "l", "rho"]),
];

fn parse_params(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("expected name=value, got {item:?}")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("{}: not a number: {value:?}", key.trim())))?;
        if map.insert(key.trim().to_string(), v).is_some() {
            return Err(Error::Argument(format!("parameter {key:?} given twice")));
        }
    }
    Ok(map)
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as usize)
    } else {
        Err(Error::Argument(format!("{name} must be a nonnegative integer, got {v}")))
    }
}

/// Evaluates a named formula; `None` when its hypotheses fail.
pub fn evaluate_formula(name: &str, params: &BTreeMap<String, f64>) -> Result<Option<f64>> {
    let Some((_, required)) = FORMULAS.iter().find(|(f, _)| *f == name) else {
        let names: Vec<&str> = FORMULAS.iter().map(|f| f.0).collect();
        return Err(Error::Argument(format!(
            "unknown formula {name:?}; expected one of {}",
            names.join(", ")
        )));
    };
    for key in params.keys() {
        if !required.contains(&key.as_str()) {
            return Err(Error::Argument(format!("{name} does not take parameter {key:?}")));
        }
    }
    let p = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::Argument(format!("{name} requires parameter {key}")))
    };
    let c = |key: &str| -> Result<usize> { as_count(key, p(key)?) };
    let value = |r: BoundReport| r.value;
    Ok(match name {
        "gram_inversion" => value(gram_inversion_bound(p("sigma_d")?, p("gap")?)?),
        "tu_lipschitz" => value(tu_lipschitz_bound(p("sigma_d")?, p("gap")?)?),
        "gram_diff" => value(gram_diff_upper_bound(p("opnorm")?, p("rho")?)?),
        "concentration" => value(concentration_bound(
            c("d")?,
            c("k")?,
            c("n")?,
            p("sigma")?,
            p("opnorm")?,
            p("delta")?,
        )?),
        "gram_mse" => Some(expected_gram_mse(c("d")?, c("k")?, c("n")?, p("sigma")?, p("frob2")?)),
        "oracle_mse" => Some(oracle_mle_mse(c("d")?, c("k")?, c("n")?, p("sigma")?)),
        "sign_test" => Some(sign_test_error(p("norm_x")?, p("sigma")?)?),
        "delta_l" => {
            let l = c("l")?;
            let l = u32::try_from(l).map_err(|_| Error::Argument("l too large".into()))?;
            Some(delta_l_bound(c("d")?, l, p("rho")?)?)
        }
        _ => unreachable!("formula table and dispatch agree"),
    })
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<i32> {
    let params = parse_params(&a.params)?;
    match evaluate_formula(&a.formula, &params)? {
        Some(v) => writeln!(out, "{}", fmt_f64_12(v))?,
        None => writeln!(out, "not_applicable")?,
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(text: &str) -> BTreeMap<String, f64> {
        parse_params(text).unwrap()
    }

    #[test]
    fn formula_examples() {
        let v = evaluate_formula("gram_inversion", &params("sigma_d=1,gap=0.18")).unwrap();
        assert!((v.unwrap() - 0.141_421_356_237).abs() < 1e-12);
        assert_eq!(evaluate_formula("gram_inversion", &params("sigma_d=1,gap=0.6")).unwrap(), None);
        let v = evaluate_formula("oracle_mse", &params("d=3,k=100,n=300,sigma=1")).unwrap();
        assert_eq!(v, Some(1.0));
    }

    #[test]
    fn formula_errors() {
        assert!(evaluate_formula("nope", &params("")).is_err());
        assert!(evaluate_formula("oracle_mse", &params("d=3,k=100,n=300")).is_err());
        assert!(evaluate_formula("oracle_mse", &params("d=3,k=100,n=300,sigma=1,x=2")).is_err());
        assert!(evaluate_formula("oracle_mse", &params("d=2.5,k=100,n=300,sigma=1")).is_err());
        assert!(parse_params("a=1,a=2").is_err());
        assert!(parse_params("a").is_err());
        assert!(parse_params("a=b").is_err());
    }

    #[test]
    fn every_formula_is_dispatched() {
        for (name, keys) in FORMULAS {
            let p: BTreeMap<String, f64> = keys
                .iter()
                .map(|k| (k.to_string(), if *k == "delta" { 0.1 } else { 2.0 }))
                .collect();
            evaluate_formula(name, &p).unwrap();
        }
    }
}
