//! The `fidi-lab` command line.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime or numeric error,
//! 3 failed checks.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::checks::{run_grad_checks, CheckTarget, GRAD_TOLERANCE};
use crate::config::ExperimentConfig;
use crate::data::{save_sampleset, SampleSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalReport};
use crate::experiment::Experiment;
use crate::geometry::ProbMap;
use crate::losses::{curve_csv, loss_curve, LossKind};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::train::train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CHECKS_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fidi-lab", version, about = "Metric-learning experiments with the FIDI loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic train and held-out datasets.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write its checkpoint and loss history.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the held-out data.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset CSV to evaluate instead of the config's held-out data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Finite-difference checks of every loss and the full model.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Tabulate per-pair losses against distance.
    LossCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 20.0)]
        d_max: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Train and evaluate over a grid of α, β and kept-identity fractions.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData { common } => gen_data(&common),
        Command::Train { common } => train_cmd(&common),
        Command::Eval {
            common,
            checkpoint,
            data,
        } => eval_cmd(&common, checkpoint.as_deref(), data.as_deref()),
        Command::GradCheck {
            common,
            batches,
            corrupt,
        } => grad_check(&common, batches, corrupt.as_deref()),
        Command::LossCurve {
            common,
            alpha,
            beta,
            d_max,
            steps,
        } => curve_cmd(&common, alpha, beta, d_max, steps),
        Command::Sweep { common } => sweep(&common),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::config("this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn describe(name: &str, s: &SampleSet) {
    println!("{name}: N={} C={} F={}", s.len(), s.num_identities(), s.feature_dim());
}

fn gen_data(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    let synth = cfg.synth()?;
    let test_pairs = cfg.data.as_ref().map_or(0, |d| d.test_pairs);
    let out = cfg.output_dir(common.out.as_deref())?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let (train_set, test_set) = crate::data::generate_train_test(&synth, test_pairs)?;
    save_sampleset(&train_set, out.join("train.csv"))?;
    describe("train", &train_set);
    if !test_set.is_empty() {
        save_sampleset(&test_set, out.join("test.csv"))?;
        describe("test", &test_set);
    }
    Ok(EXIT_OK)
}

fn train_cmd(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    let tc = cfg.train_config()?;
    let data = cfg.data_source()?.train_set()?;
    let out = cfg.output_dir(common.out.as_deref())?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    describe("train", &data);
    let (model, history) = train(&data, &tc)?;
    save_checkpoint(&model, out.join("model.ckpt"))?;
    history.save(out.join("history.csv"))?;
    if let Some(last) = history.records.last() {
        println!(
            "final iter={} metric_loss={} cls_loss={} total={}",
            last.iter, last.metric_loss, last.cls_loss, last.total
        );
    }
    Ok(EXIT_OK)
}

fn eval_cmd(common: &Common, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<i32> {
    let cfg = load_config(common)?;
    let out = cfg.output_dir(common.out.as_deref())?;
    let ckpt = checkpoint.map_or_else(|| out.join("model.ckpt"), Path::to_path_buf);
    let model = load_checkpoint(&ckpt)?;
    let test_set = match data {
        Some(p) => crate::data::load_sampleset(p)?,
        None => cfg.data_source()?.test_set()?,
    };
    let ev = cfg.eval_section();
    let report = evaluate_model(&model, &test_set, &ev.protocol()?, ev.bins)?;
    report.write(&out)?;
    print!("{}", report.key_values());
    Ok(EXIT_OK)
}

fn grad_check(common: &Common, batches: usize, corrupt: Option<&str>) -> Result<i32> {
    if batches == 0 {
        return Err(Error::config("--batches must be >= 1"));
    }
    let corrupt = corrupt.map(str::parse::<CheckTarget>).transpose()?;
    let rows = run_grad_checks(batches, common.seed.unwrap_or(0), corrupt)?;
    let mut table = String::from("check,batches,max_rel_error,status\n");
    for r in &rows {
        let status = if r.passed() { "pass" } else { "FAIL" };
        writeln!(table, "{},{},{:e},{status}", r.target.name(), r.batches, r.max_rel_error).unwrap();
    }
    print!("{table}");
    if let Some(out) = &common.out {
        write_file(&out.join("grad_check.csv"), &table)?;
    }
    if rows.iter().all(|r| r.passed()) {
        Ok(EXIT_OK)
    } else {
        eprintln!("gradient checks above tolerance {GRAD_TOLERANCE:e}");
        Ok(EXIT_CHECKS_FAILED)
    }
}

fn curve_cmd(common: &Common, alpha: f64, beta: f64, d_max: f64, steps: usize) -> Result<i32> {
    let points = loss_curve(alpha, beta, d_max, steps)?;
    let out = common
        .out
        .as_ref()
        .ok_or_else(|| Error::config("loss-curve needs --out"))?;
    let path = out.join("loss_curve.csv");
    write_file(&path, &curve_csv(&points))?;
    println!("wrote {} points to {}", points.len(), path.display());
    Ok(EXIT_OK)
}

/// One sweep run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub outcome: std::result::Result<(f64, f64, f64), String>,
}

/// `(parameter, value, loss, seed, experiment)`.
pub type SweepJob = (&'static str, f64, LossKind, u64, Experiment);

/// Grid points vary one axis at a time around the `[train]` values. α and
/// β only apply to FIDI runs; the kept fraction applies to every loss.
pub fn sweep_jobs(base: &Experiment, cfg: &ExperimentConfig) -> Result<Vec<SweepJob>> {
    let s = cfg.sweep()?;
    let mut jobs = Vec::new();
    for &loss in &s.losses {
        let mut exp = base.clone();
        exp.train.loss_kind = loss;
        let mut points: Vec<(&'static str, f64, Experiment)> = Vec::new();
        if loss == LossKind::Fidi {
            for &a in &s.alpha {
                let mut e = exp.clone();
                e.train.fidi.alpha = a;
                points.push(("alpha", a, e));
            }
            for &b in &s.beta {
                let mut e = exp.clone();
                e.train.fidi.prob_map = match e.train.fidi.prob_map {
                    ProbMap::Exponential { .. } => ProbMap::Exponential { beta: b },
                    ProbMap::Sigmoid { .. } => ProbMap::Sigmoid { beta: b },
                };
                points.push(("beta", b, e));
            }
        }
        for &k in &s.keep_fraction {
            let mut e = exp.clone();
            e.keep_fraction = k;
            points.push(("keep_fraction", k, e));
        }
        for (parameter, value, e) in points {
            for &seed in &s.seeds {
                jobs.push((parameter, value, loss, seed, e.clone()));
            }
        }
    }
    Ok(jobs)
}

fn run_job(exp: &Experiment, seed: u64) -> std::result::Result<(f64, f64, f64), String> {
    let run = || -> Result<EvalReport> {
        let out = exp.run(seed)?;
        Ok(out.report)
    };
    run()
        .map(|r| (r.map, r.cmc_at(1).unwrap_or(f64::NAN), r.error_i))
        .map_err(|e| e.to_string())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,loss,seed,status,mAP,cmc_1,error_I,message\n");
    for r in rows {
        match &r.outcome {
            Ok((map, c1, ei)) => writeln!(
                out,
                "{},{},{},{},ok,{map},{c1},{ei},",
                r.parameter,
                r.value,
                r.loss.name(),
                r.seed
            ),
            Err(msg) => writeln!(
                out,
                "{},{},{},{},failed,,,,\"{}\"",
                r.parameter,
                r.value,
                r.loss.name(),
                r.seed,
                msg.replace('"', "'")
            ),
        }
        .unwrap();
    }
    out
}

/// Mean and sample standard deviation over the successful seeds of each
/// grid point, in first-seen order.
pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut keys: Vec<(&str, f64, LossKind)> = Vec::new();
    for r in rows {
        let k = (r.parameter, r.value, r.loss);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = String::from("parameter,value,loss,runs,failed,mAP_mean,mAP_std,cmc_1_mean,cmc_1_std\n");
    for (p, v, l) in keys {
        let group: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.parameter == p && r.value == v && r.loss == l)
            .collect();
        let ok: Vec<(f64, f64)> = group
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|&(m, c, _)| (m, c)))
            .collect();
        let maps: Vec<f64> = ok.iter().map(|x| x.0).collect();
        let cmcs: Vec<f64> = ok.iter().map(|x| x.1).collect();
        let (mm, ms) = mean_std(&maps);
        let (cm, cs) = mean_std(&cmcs);
        writeln!(
            out,
            "{p},{v},{},{},{},{mm},{ms},{cm},{cs}",
            l.name(),
            group.len(),
            group.len() - ok.len()
        )
        .unwrap();
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sweep(common: &Common) -> Result<i32> {
    let cfg = load_config(common)?;
    let base = cfg.experiment()?;
    let out = cfg.output_dir(common.out.as_deref())?;
    let jobs = sweep_jobs(&base, &cfg)?;
    let parallel = cfg.sweep()?.parallel;
    let work = |(parameter, value, loss, seed, exp): &SweepJob| {
        let outcome = run_job(exp, *seed);
        if let Err(msg) = &outcome {
            eprintln!("run {parameter}={value} loss={} seed={seed} failed: {msg}", loss.name());
        }
        SweepRow {
            parameter,
            value: *value,
            loss: *loss,
            seed: *seed,
            outcome,
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };
    write_file(&out.join("sweep.csv"), &sweep_csv(&rows))?;
    let summary = sweep_summary_csv(&rows);
    write_file(&out.join("sweep_summary.csv"), &summary)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_skips_failed_runs() {
        let row = |seed, outcome| SweepRow {
            parameter: "alpha",
            value: 1.05,
            loss: LossKind::Fidi,
            seed,
            outcome,
        };
        let rows = vec![
            row(0, Ok((0.5, 0.6, 1.0))),
            row(1, Ok((0.7, 0.8, 1.0))),
            row(2, Err("diverged".into())),
        ];
        let s = sweep_summary_csv(&rows);
        let line = s.lines().nth(1).unwrap();
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(&f[..5], &["alpha", "1.05", "fidi", "3", "1"]);
        assert!((f[5].parse::<f64>().unwrap() - 0.6).abs() < 1e-12);
        assert!((f[6].parse::<f64>().unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        assert!(sweep_csv(&rows).contains("failed,,,,\"diverged\""));
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(main_with_args(["fidi-lab", "no-such-verb"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["fidi-lab", "train"]), EXIT_CONFIG);
    }
}
