//! The `expsig` command-line driver.
//!
//! Every CSV starts with a `# expsig ...` line recording the invocation,
//! followed by a header row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{train_and_score, ModelKind};
use crate::config::RunConfig;
use crate::datasets::{build_task, load_tsv, load_tsv_with_labels, write_tsv, Dataset, TaskName};
use crate::error::{Error, Result};
use crate::model::io::{load_model, save_model};
use crate::model::metrics::accuracy;
use crate::model::{forward, output_variance_analysis, train_sgd, weighted_accuracy, ModelParams};
use crate::seeds::derive_seed;

#[derive(Debug, Parser)]
#[command(name = "expsig", version, about = "Expected-signature time-series classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/test TSV files of a synthetic task.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: TaskName,
    },
    /// Train a model and write `model.txt` and `history.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        /// Validation set scored after every epoch.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Score a model over repeated stochastic passes: `metrics.csv`, `probs.csv`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
    /// Output-covariance norms per test series: `variance_K<k>.csv` and
    /// `histogram_K<k>.csv` for each K.
    Variance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        /// Sample counts to evaluate (comma-separated); defaults to the
        /// model's own.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Train NoAug, FFT, CS, GP and the full model on the same split:
    /// `benchmark.csv`.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Synthetic task to generate; alternatively give --train and --test.
        #[arg(long, required_unless_present = "train")]
        task: Option<TaskName>,
        #[arg(long, requires = "test", conflicts_with = "task")]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Stochastic evaluation passes for the full model.
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let invocation = std::iter::once("expsig".to_string())
        .chain(args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()))
        .collect::<Vec<_>>()
        .join(" ");
    match run(cli.command, &invocation) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(&common.out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// CSV text with the invocation comment and header.
fn csv(invocation: &str, header: &str) -> String {
    format!("# {invocation}\n{header}\n")
}

pub fn run(command: Command, invocation: &str) -> Result<()> {
    match command {
        Command::Gen { common, task } => cmd_gen(&common, task, invocation),
        Command::Train { common, train, val } => cmd_train(&common, &train, val.as_deref(), invocation),
        Command::Eval {
            common,
            model,
            test,
            runs,
        } => cmd_eval(&common, &model, &test, runs, invocation),
        Command::Variance {
            common,
            model,
            test,
            runs,
            k,
        } => cmd_variance(&common, &model, &test, runs, &k, invocation),
        Command::Benchmark {
            common,
            task,
            train,
            test,
            runs,
        } => cmd_benchmark(&common, task, train.as_deref(), test.as_deref(), runs, invocation),
    }
}

fn cmd_gen(common: &Common, task: TaskName, invocation: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    let (train, test) = build_task(task, &cfg.task, cfg.seed)?;
    write_tsv(out.join(format!("{task}_train.tsv")), &train)?;
    write_tsv(out.join(format!("{task}_test.tsv")), &test)?;
    #[derive(serde::Serialize)]
    struct Meta<'a> {
        task: String,
        seed: u64,
        classes: usize,
        train_items: usize,
        test_items: usize,
        params: &'a crate::datasets::TaskConfig,
    }
    let meta = Meta {
        task: task.to_string(),
        seed: cfg.seed,
        classes: train.class_count(),
        train_items: train.len(),
        test_items: test.len(),
        params: &cfg.task,
    };
    let meta = format!(
        "# {invocation}\n{}",
        toml::to_string(&meta).expect("metadata serializes")
    );
    write_file(&out.join(format!("{task}_meta.toml")), &meta)
}

fn cmd_train(common: &Common, train_path: &Path, val_path: Option<&Path>, invocation: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    let train = load_tsv(train_path)?;
    let val = val_path
        .map(|p| load_tsv_with_labels(p, &train.label_names))
        .transpose()?;
    let mut p = ModelParams::init(train.dim(), train.n_points(), train.class_count(), cfg.hyper()?)?;
    p.labels = train.label_names.clone();
    let (p, history) = train_sgd(p, &train, val.as_ref(), &cfg.train())?;
    save_model(out.join("model.txt"), &p)?;
    let mut text = csv(invocation, "epoch,loss,train_weighted_accuracy,val_weighted_accuracy");
    for r in &history {
        let val = r.val_wacc.map_or(String::new(), |v| v.to_string());
        writeln!(text, "{},{},{},{val}", r.epoch, r.loss, r.train_wacc).unwrap();
    }
    write_file(&out.join("history.csv"), &text)
}

fn load_for_model(model: &ModelParams, path: &Path) -> Result<Dataset> {
    let data = load_tsv_with_labels(path, &model.labels)?;
    if data.dim() != model.dim {
        return Err(Error::shape(format!(
            "model expects dimension {}, {} has {}",
            model.dim,
            path.display(),
            data.dim()
        )));
    }
    Ok(data)
}

fn cmd_eval(common: &Common, model_path: &Path, test_path: &Path, runs: usize, invocation: &str) -> Result<()> {
    if runs == 0 {
        return Err(Error::invalid("--runs must be at least 1"));
    }
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    let model = load_model(model_path)?;
    let test = load_for_model(&model, test_path)?;
    let truth = test.labels();
    let present: Vec<usize> = (0..model.classes)
        .filter(|c| truth.contains(c))
        .collect();

    let mut metrics = csv(invocation, "run,seed,accuracy,weighted_accuracy");
    let mut probs_csv = csv(
        invocation,
        &format!(
            "run,item,label,{}",
            (0..model.classes).map(|c| format!("p_{}", model.labels[c])).collect::<Vec<_>>().join(",")
        ),
    );
    let (mut acc_sum, mut wacc_sum) = (0.0, 0.0);
    for run in 0..runs {
        let seed = derive_seed(cfg.seed, 0xe7a1, run as u64);
        let probs = test
            .items
            .par_iter()
            .enumerate()
            .map(|(i, (x, _))| forward(&model, x, derive_seed(seed, 0, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<usize> = probs.iter().map(|p| crate::model::argmax(p)).collect();
        let acc = accuracy(&preds, &truth);
        let wacc = present_class_wacc(&preds, &truth, &present)?;
        acc_sum += acc;
        wacc_sum += wacc;
        writeln!(metrics, "{run},{seed},{acc},{wacc}").unwrap();
        for (i, p) in probs.iter().enumerate() {
            write!(probs_csv, "{run},{i},{}", model.labels[truth[i]]).unwrap();
            for q in p {
                write!(probs_csv, ",{q}").unwrap();
            }
            probs_csv.push('\n');
        }
    }
    writeln!(metrics, "mean,,{},{}", acc_sum / runs as f64, wacc_sum / runs as f64).unwrap();
    write_file(&out.join("metrics.csv"), &metrics)?;
    write_file(&out.join("probs.csv"), &probs_csv)
}

/// Weighted accuracy over the classes present in `truth`.
fn present_class_wacc(preds: &[usize], truth: &[usize], present: &[usize]) -> Result<f64> {
    let remap = |c: usize| present.iter().position(|&p| p == c).unwrap_or(present.len());
    let p: Vec<usize> = preds.iter().map(|&c| remap(c)).collect();
    let t: Vec<usize> = truth.iter().map(|&c| remap(c)).collect();
    weighted_accuracy(&p, &t, present.len())
}

fn cmd_variance(
    common: &Common,
    model_path: &Path,
    test_path: &Path,
    runs: usize,
    ks: &[usize],
    invocation: &str,
) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    let model = load_model(model_path)?;
    let test = load_for_model(&model, test_path)?;
    let ks = if ks.is_empty() {
        vec![model.hyper.samples]
    } else {
        ks.to_vec()
    };
    for k in ks {
        if k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        let mut m = model.clone();
        m.hyper.samples = k;
        let report = output_variance_analysis(&m, &test, runs, cfg.seed)?;
        let mut text = csv(invocation, "item,label,cov_norm");
        for (i, (n, (_, y))) in report.norms.iter().zip(&test.items).enumerate() {
            writeln!(text, "{i},{},{n}", model.labels[*y]).unwrap();
        }
        write_file(&out.join(format!("variance_K{k}.csv")), &text)?;
        let mut hist = csv(invocation, "lower,upper,density");
        for (lo, hi, d) in &report.histogram {
            writeln!(hist, "{lo},{hi},{d}").unwrap();
        }
        write_file(&out.join(format!("histogram_K{k}.csv")), &hist)?;
    }
    Ok(())
}

fn cmd_benchmark(
    common: &Common,
    task: Option<TaskName>,
    train_path: Option<&Path>,
    test_path: Option<&Path>,
    runs: usize,
    invocation: &str,
) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common)?;
    let (name, train, test) = match (task, train_path, test_path) {
        (Some(t), _, _) => {
            let (train, test) = build_task(t, &cfg.task, cfg.seed)?;
            (t.to_string(), train, test)
        }
        (None, Some(tr), Some(te)) => {
            let train = load_tsv(tr)?;
            let test = load_tsv_with_labels(te, &train.label_names)?;
            (train.name.clone(), train, test)
        }
        _ => return Err(Error::invalid("benchmark needs --task or both --train and --test")),
    };
    let hyper = cfg.hyper()?;
    let tc = cfg.train();
    let mut text = csv(
        invocation,
        &std::iter::once("dataset")
            .chain(ModelKind::ALL.iter().map(|k| k.name()))
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push_str(&name);
    for kind in ModelKind::ALL {
        let score = train_and_score(kind, &train, &test, hyper, &tc, runs)?;
        write!(text, ",{score}").unwrap();
    }
    text.push('\n');
    write_file(&out.join("benchmark.csv"), &text)
}
