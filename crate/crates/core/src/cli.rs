//! Command-line front end. Every command writes under `--out`; a non-empty output
//! directory is refused unless `--force` is given, in which case it is replaced.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{load_with_overrides, render};
use crate::data::{load_manifest, synth_generate, write_dataset, Modality, Standardizer, SynthConfig, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::evalkit::{attach_deltas, emit_report, format_table, sweep_missing_rates, EvalReport, ReportFormat, SweepConfig};
use crate::experiment::{resolve_splits, run_study, standardize_splits, standardized, Study};
use crate::gradchecks::{render_results, run_gradchecks, GradCheckOptions};
use crate::train::{train_method, Method, TrainConfig, TrainedModel};

pub const SEED_ENV: &str = "BD_SEED";
pub const CHECKPOINT_FILE: &str = "checkpoint.bdck";
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(name = "bidistill", version, about = "Multi-modal classification that tolerates a missing modality")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (manifest plus per-sample bag files).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one method and write its checkpoint and logs.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sweep missing rates over one or more checkpoints.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long = "checkpoint", num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated missing rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long)]
        role: Option<String>,
        /// Comma-separated mask seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Train and evaluate a family of variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        study: String,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Perturb analytic gradients first (negative control; must fail).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
    /// Flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value`, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Evaluation knobs settable from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub confidence: f64,
    pub resamples: usize,
    pub threshold: f64,
    pub role: Modality,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            confidence: s.confidence,
            resamples: s.resamples,
            threshold: s.threshold,
            role: s.role,
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn prepare_out(common: &Common) -> Result<()> {
    let out = &common.out;
    if out.exists() {
        let non_empty = fs::read_dir(out).map_err(|e| Error::file(out, e))?.next().is_some();
        if non_empty {
            if !common.force {
                return Err(Error::Usage(format!(
                    "{} exists and is not empty; pass --force to replace it",
                    out.display()
                )));
            }
            fs::remove_dir_all(out).map_err(|e| Error::file(out, e))?;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::file(out, e))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn require_data(data: Option<PathBuf>) -> Result<PathBuf> {
    let d = data.ok_or_else(|| Error::Usage("--data is required".into()))?;
    Ok(if d.is_dir() { d.join(MANIFEST_FILE) } else { d })
}

fn parse_role(s: &str) -> Result<Modality> {
    match s {
        "clinical" => Ok(Modality::Clinical),
        "image" => Ok(Modality::Image),
        _ => Err(Error::Usage(format!("role must be clinical or image, got {s:?}"))),
    }
}

fn train_config(common: &Common) -> Result<TrainConfig> {
    let mut base = TrainConfig::default();
    if let Some(s) = env_seed()? {
        base.seed = s;
    }
    let cfg = load_with_overrides(&base, common.config.as_deref(), &common.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_synth(common: &Common, n: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut base = SynthConfig::default();
    if let Some(s) = env_seed()? {
        base.seed = s;
    }
    let mut cfg = load_with_overrides(&base, common.config.as_deref(), &common.overrides)?;
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    prepare_out(common)?;
    let ds = synth_generate(&cfg)?;
    // Tiny datasets may not admit a stratified split; they are written untagged.
    let tagged = match resolve_splits(&ds, cfg.seed) {
        Ok(s) => s.merged(),
        Err(Error::Split(msg)) => {
            eprintln!("warning: no split tags written ({msg})");
            ds
        }
        Err(e) => return Err(e),
    };
    write_dataset(&tagged, &common.out)?;
    write(&common.out.join(CONFIG_ECHO), render(&cfg))?;
    println!("wrote {} samples to {}", tagged.len(), common.out.display());
    Ok(())
}

pub fn cmd_train(common: &Common, method: &str, data: Option<PathBuf>) -> Result<()> {
    let method: Method = method.parse()?;
    let data = require_data(data)?;
    let cfg = train_config(common)?;
    let raw = load_manifest(&data)?;
    let (splits, st) = standardize_splits(&resolve_splits(&raw, cfg.seed)?)?;
    prepare_out(common)?;
    let (model, logs) = train_method(method, &splits.train, &splits.val, &cfg)?;
    let meta = serde_json::json!({ "standardizer": st, "train": cfg });
    let mcfg = cfg.model_config(raw.d_w, raw.d_c);
    model.to_checkpoint(&mcfg, meta).save(&common.out.join(CHECKPOINT_FILE))?;

    let mut summary = serde_json::Map::new();
    summary.insert("method".into(), method.as_str().into());
    for (label, log) in &logs {
        let name = if logs.len() == 1 {
            "train_log.csv".to_string()
        } else {
            format!("train_log_{label}.csv")
        };
        write(&common.out.join(name), log.to_csv())?;
        summary.insert(label.clone(), log.summary_json());
    }
    let summary = serde_json::to_string_pretty(&serde_json::Value::Object(summary)).expect("json");
    write(&common.out.join("summary.json"), summary + "\n")?;
    write(&common.out.join(CONFIG_ECHO), render(&cfg))?;
    for (label, log) in &logs {
        println!(
            "{label}: best epoch {} ({} {:.4}), stopped at {}",
            log.best_epoch,
            log.monitor.as_str(),
            log.best_metric,
            log.stop_epoch
        );
    }
    Ok(())
}

fn sweep_config(common: &Common, role: Option<String>, rates: Option<Vec<f64>>, seeds: Option<Vec<u64>>, default_rates: Vec<f64>) -> Result<(SweepConfig, EvalSettings)> {
    let mut settings = load_with_overrides(&EvalSettings::default(), common.config.as_deref(), &common.overrides)?;
    if let Some(r) = role {
        settings.role = parse_role(&r)?;
    }
    let rates = rates.unwrap_or(default_rates);
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Usage(format!("missing rate {r} outside [0, 1]")));
    }
    let seeds = match seeds {
        Some(s) => s,
        None => vec![env_seed()?.unwrap_or(1)],
    };
    if seeds.is_empty() || rates.is_empty() {
        return Err(Error::Usage("--rates and --seeds must not be empty".into()));
    }
    Ok((
        SweepConfig {
            rates,
            seeds,
            role: settings.role,
            confidence: settings.confidence,
            resamples: settings.resamples,
            threshold: settings.threshold,
        },
        settings,
    ))
}

fn emit(reports: &[EvalReport], out: &Path) -> Result<()> {
    emit_report(reports, out, &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg])?;
    print!("{}", format_table(reports));
    Ok(())
}

pub fn cmd_eval(
    common: &Common,
    checkpoints: &[PathBuf],
    data: Option<PathBuf>,
    rates: Option<Vec<f64>>,
    role: Option<String>,
    seeds: Option<Vec<u64>>,
) -> Result<()> {
    let data = require_data(data)?;
    let (sweep, settings) = sweep_config(common, role, rates, seeds, SweepConfig::default().rates)?;
    let raw = load_manifest(&data)?;
    let mut reports = Vec::new();
    for path in checkpoints {
        let ck = Checkpoint::load(path)?;
        let model = TrainedModel::from_checkpoint(&ck)?;
        let st: Standardizer = ck.meta_field("standardizer")?;
        let train: TrainConfig = ck.meta_field("train")?;
        if train.missing_role != sweep.role {
            return Err(Error::Usage(format!(
                "{} was trained for missing {}, evaluation asks for missing {}",
                path.display(),
                train.missing_role,
                sweep.role
            )));
        }
        let test = standardized(&resolve_splits(&raw, train.seed)?.test, &st)?;
        reports.extend(sweep_missing_rates(&[model.predictor()], &test, &sweep)?);
    }
    attach_deltas(&mut reports, "filling");
    prepare_out(common)?;
    emit(&reports, &common.out)?;
    write(&common.out.join(CONFIG_ECHO), render(&settings))?;
    Ok(())
}

pub fn cmd_ablate(
    common: &Common,
    study: &str,
    data: Option<PathBuf>,
    rates: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
) -> Result<()> {
    let study: Study = study.parse()?;
    let data = require_data(data)?;
    let cfg = train_config(common)?;
    let rates = rates.unwrap_or_else(|| study.default_rates());
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Usage(format!("missing rate {r} outside [0, 1]")));
    }
    let train_seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
    let raw = load_manifest(&data)?;
    let (splits, _) = standardize_splits(&resolve_splits(&raw, cfg.seed)?)?;
    let sweep = SweepConfig {
        rates,
        role: cfg.missing_role,
        ..SweepConfig::default()
    };
    let reports = run_study(study, &splits, &cfg, &train_seeds, &sweep)?;
    prepare_out(common)?;
    emit(&reports, &common.out)?;
    write(&common.out.join(CONFIG_ECHO), render(&cfg))?;
    Ok(())
}

pub fn cmd_gradcheck(common: &Common, corrupt: bool) -> Result<()> {
    let mut opts = load_with_overrides(&GradcheckSettings::default(), common.config.as_deref(), &common.overrides)?.into_options();
    opts.corrupt = corrupt;
    let results = run_gradchecks(&opts)?;
    prepare_out(common)?;
    let text = render_results(&results);
    write(&common.out.join("gradcheck.txt"), &text)?;
    print!("{text}");
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!("gradient check failed: {}", failed.join("; "))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GradcheckSettings {
    eps: f64,
    tol: f64,
    seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        let o = GradCheckOptions::default();
        Self {
            eps: o.eps,
            tol: o.tol,
            seed: o.seed,
        }
    }
}

impl GradcheckSettings {
    fn into_options(self) -> GradCheckOptions {
        GradCheckOptions {
            eps: self.eps,
            tol: self.tol,
            seed: self.seed,
            corrupt: false,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, n, seed } => cmd_synth(&common, n, seed),
        Command::Train { common, method, data } => cmd_train(&common, &method, data),
        Command::Eval {
            common,
            checkpoints,
            data,
            rates,
            role,
            seeds,
        } => cmd_eval(&common, &checkpoints, data, rates, role, seeds),
        Command::Ablate {
            common,
            study,
            data,
            rates,
            seeds,
        } => cmd_ablate(&common, &study, data, rates, seeds),
        Command::Gradcheck { common, corrupt } => cmd_gradcheck(&common, corrupt),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
