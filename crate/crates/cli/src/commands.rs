use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use affect_core::checkpoint;
use affect_core::data::{kfold_split, pseudo_apply, synth_generate, CeSource, Fold};
use affect_core::metrics::ScoreRow;
use affect_core::numeric::OptimizerKind;
use affect_core::training::{evaluate, gradcheck_batch, network_gradcheck, train_new, LOG_HEADER};
use affect_core::{
    AffectNet, Dataset, Decision, Error, MetricReport, NetConfig, PseudoRuleTable, Result, ScoreWeights,
    SynthConfig, TrainConfig, Variant,
};
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::{Cli, Command, GlobalArgs};

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => cmd_synth(g, a, out),
        Command::Train(a) => cmd_train(g, a, out),
        Command::Eval(a) => cmd_eval(g, a, out),
        Command::Kfold(a) => cmd_kfold(g, a, out),
        Command::Gradcheck(a) => cmd_gradcheck(g, a, out),
        Command::Pseudo(a) => cmd_pseudo(g, a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn rules_for(path: Option<&Path>) -> Result<PseudoRuleTable> {
    match path {
        Some(p) => PseudoRuleTable::load(p),
        None => Ok(PseudoRuleTable::default()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl OptimizerChoice {
    fn kind(self) -> OptimizerKind {
        match self {
            OptimizerChoice::Adam => OptimizerKind::adam(),
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerChoice::Adam)]
    pub optimizer: OptimizerChoice,
}

impl OptimArgs {
    fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            optimizer: self.optimizer.kind(),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn net_config(g: &GlobalArgs, embed_dim: usize, seed: u64) -> NetConfig {
    NetConfig {
        embed_dim,
        variant: g.variant.unwrap_or(Variant::Streaming),
        adapter: g.adapter.unwrap_or(false),
        seed,
        ..NetConfig::default()
    }
}

fn parse_weights(s: &str) -> std::result::Result<ScoreWeights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad weight `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    let [au_f1, au_tacc, ce_f1, ce_acc, ccc_v, ccc_a] = v[..] else {
        return Err(format!("expected 6 comma-separated weights, got {}", v.len()));
    };
    Ok(ScoreWeights {
        au_f1,
        au_tacc,
        ce_f1,
        ce_acc,
        va_valence: ccc_v,
        va_arousal: ccc_a,
    })
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 512)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub missing_au: f64,
    #[arg(long, default_value_t = 0.0)]
    pub missing_ce: f64,
    #[arg(long, default_value_t = 0.0)]
    pub missing_va: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    /// Rule table routing AU patterns to CE classes (default: built-in)
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth sidecar path (default: `<out>.truth`)
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn cmd_synth(g: &GlobalArgs, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        latent_dim: a.latent_dim,
        embed_dim: a.embed_dim,
        missing_au: a.missing_au,
        missing_ce: a.missing_ce,
        missing_va: a.missing_va,
        noise_std: a.noise_std,
        seed: g.seed(),
        ..SynthConfig::default()
    };
    let rules = rules_for(a.rules.as_deref())?;
    let (data, truth) = synth_generate(&cfg, &rules)?;
    let truth_path = a.truth.clone().unwrap_or_else(|| with_suffix(&a.out, ".truth"));
    data.save(&a.out)?;
    truth.save(&truth_path)?;
    let (au, ce, va) = data.label_counts();
    let covered = truth.records.iter().filter(|r| r.ce_source == CeSource::Rule).count();
    emit(
        out,
        &format!(
            "records = {}\nau_labels = {au}\nce_labels = {ce}\nva_labels = {va}\nrule_covered = {covered}\ndataset = {}\ntruth = {}\n",
            data.len(),
            a.out.display(),
            truth_path.display()
        ),
    )
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss log, appended to (default: `<out>.log`)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Validation set to score after training
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Fill missing CE labels of the training set from this rule table first
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
}

pub fn cmd_train(g: &GlobalArgs, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let tcfg = a.optim.train_config(g.seed())?;
    let mut data = Dataset::load(&a.data)?;
    if let Some(path) = &a.rules {
        let filled = pseudo_apply(data.labels_mut(), &PseudoRuleTable::load(path)?);
        emit(out, &format!("pseudo_filled = {filled}\n"))?;
    }
    let val = a.val.as_ref().map(Dataset::load).transpose()?;
    if !data.has_any_label() {
        return Err(Error::NoLabels(format!("{} has no labelled track", a.data.display())));
    }

    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log"));
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let empty = log.metadata().map(|m| m.len() == 0).unwrap_or(true);
    if empty {
        writeln!(log, "{LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    }

    let net = AffectNet::build(net_config(g, data.dim(), g.seed()))?;
    let mut log_err = None;
    let (net, logs) = train_new(net, &data, &tcfg, |e| {
        if log_err.is_none() {
            if let Err(err) = writeln!(log, "{}", e.to_log_line()).and_then(|()| log.flush()) {
                log_err = Some(err);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    checkpoint::save(&net, &a.out)?;

    let last = logs.last().expect("epochs >= 1");
    let mut text = format!(
        "epochs = {}\nfinal_total = {}\nparams = {}\ncheckpoint = {}\nlog = {}\n",
        logs.len(),
        last.total,
        net.num_params(),
        a.out.display(),
        log_path.display()
    );
    if let Some(v) = &val {
        text.push_str(&evaluate(&net, v, &ScoreWeights::default())?.to_text());
    }
    emit(out, &text)
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score the dataset's own labels as predictions
    #[arg(long)]
    pub oracle: bool,
    /// au_f1,au_tacc,ce_f1,ce_acc,ccc_v,ccc_a
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<ScoreWeights>,
}

pub fn cmd_eval(g: &GlobalArgs, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let weights = a.weights.unwrap_or_default();
    let report = if a.oracle {
        let labels: Vec<_> = data.records().iter().map(|r| r.labels).collect();
        let decisions: Vec<Decision> = labels.iter().map(Decision::from_labels).collect();
        MetricReport::evaluate(&decisions, &labels, &weights)?
    } else {
        let path = a.checkpoint.as_ref().expect("clap requires a checkpoint");
        let net = checkpoint::load(path)?;
        check_compatible(g, net.config(), &data)?;
        evaluate(&net, &data, &weights)?
    };
    if let Some(p) = &a.out {
        write_file(p, &report.to_json())?;
    }
    emit(out, &report.to_text())
}

fn check_compatible(g: &GlobalArgs, cfg: &NetConfig, data: &Dataset) -> Result<()> {
    if cfg.embed_dim != data.dim() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint expects {}-dim embeddings, data has {}",
            cfg.embed_dim,
            data.dim()
        )));
    }
    if let Some(v) = g.variant.filter(|v| *v != cfg.variant) {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint is {}, requested {v}",
            cfg.variant
        )));
    }
    if let Some(a) = g.adapter.filter(|a| *a != cfg.adapter) {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint adapter is {}, requested {}",
            on_off(cfg.adapter),
            on_off(a)
        )));
    }
    Ok(())
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[derive(Debug, Clone, Args)]
pub struct KfoldArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Folds trained concurrently
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill missing CE labels of each training split from this rule table
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
}

pub struct FoldOutcome {
    pub fold: Fold,
    pub report: MetricReport,
}

fn run_fold(
    g: &GlobalArgs,
    data: &Dataset,
    fold: &Fold,
    index: usize,
    tcfg: &TrainConfig,
    rules: Option<&PseudoRuleTable>,
) -> Result<MetricReport> {
    let seed = g.seed().wrapping_add(index as u64);
    let mut train = data.subset(&fold.train);
    if let Some(r) = rules {
        pseudo_apply(train.labels_mut(), r);
    }
    let validation = data.subset(&fold.validation);
    let net = AffectNet::build(net_config(g, data.dim(), seed))?;
    let cfg = TrainConfig { seed, ..*tcfg };
    let (net, _) = train_new(net, &train, &cfg, |_| {})?;
    evaluate(&net, &validation, &ScoreWeights::default())
}

pub fn run_kfold(g: &GlobalArgs, a: &KfoldArgs, data: &Dataset) -> Result<Vec<FoldOutcome>> {
    let tcfg = a.optim.train_config(g.seed())?;
    if a.workers == 0 {
        return Err(Error::Validation("workers must be >= 1".into()));
    }
    let rules = a.rules.as_deref().map(PseudoRuleTable::load).transpose()?;
    let folds = kfold_split(data.len(), a.k, g.seed())?;
    let mut results: Vec<Option<Result<MetricReport>>> = (0..folds.len()).map(|_| None).collect();
    let workers = a.workers.min(folds.len());
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (folds, tcfg, rules) = (&folds, &tcfg, rules.as_ref());
                s.spawn(move || {
                    (w..folds.len())
                        .step_by(workers)
                        .map(|i| (i, run_fold(g, data, &folds[i], i, tcfg, rules)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("fold worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    folds
        .into_iter()
        .zip(results)
        .map(|(fold, r)| {
            Ok(FoldOutcome {
                fold,
                report: r.expect("every fold ran")?,
            })
        })
        .collect()
}

pub fn cmd_kfold(g: &GlobalArgs, a: &KfoldArgs, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    if !data.has_any_label() {
        return Err(Error::NoLabels(format!("{} has no labelled track", a.data.display())));
    }
    let outcomes = run_kfold(g, a, &data)?;
    let rows: Vec<ScoreRow> = outcomes.iter().map(|o| ScoreRow::from_report(&o.report)).collect();
    let mean = ScoreRow::mean(&rows);

    let mut text = format!("{:<6} ", "fold");
    text.push_str(
        &ScoreRow::COLUMNS
            .iter()
            .map(|c| format!("{c:>8}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    text.push('\n');
    for (i, r) in rows.iter().enumerate() {
        text.push_str(&format!("{:<6} {}\n", i + 1, r.to_cells()));
    }
    text.push_str(&format!("{:<6} {}\n", "mean", mean.to_cells()));

    if let Some(p) = &a.out {
        let folds: Vec<_> = outcomes
            .iter()
            .zip(&rows)
            .enumerate()
            .map(|(i, (o, row))| {
                json!({
                    "fold": i + 1,
                    "train": o.fold.train,
                    "validation": o.fold.validation,
                    "report": o.report,
                    "scores": row,
                })
            })
            .collect();
        let doc = json!({ "k": a.k, "seed": g.seed(), "folds": folds, "mean": mean });
        write_file(p, &serde_json::to_string_pretty(&doc).expect("report serialises"))?;
    }
    emit(out, &text)
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Shift one analytic gradient entry of this layer (fault injection)
    #[arg(long, value_name = "LAYER")]
    pub corrupt: Option<String>,
    /// Probe at most this many entries per layer instead of all
    #[arg(long)]
    pub max_per_param: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

pub fn cmd_gradcheck(g: &GlobalArgs, a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = NetConfig {
        variant: g.variant.unwrap_or(Variant::Streaming),
        adapter: g.adapter.unwrap_or(false),
        seed: g.seed(),
        ..NetConfig::compact()
    };
    let batch = gradcheck_batch(cfg.embed_dim, g.seed())?;
    let report = network_gradcheck(cfg, &batch, a.corrupt.as_deref(), a.max_per_param)?;
    let worst = report.worst_param.as_deref().unwrap_or("-");
    let passed = report.passed(a.tolerance);
    emit(
        out,
        &format!(
            "variant = {}\nadapter = {}\nentries = {}\nmax_rel_error = {:e}\nworst = {worst}[{}] analytic {:e} numeric {:e}\nresult = {}\n",
            cfg.variant,
            on_off(cfg.adapter),
            report.entries_checked,
            report.max_rel_error,
            report.worst_index,
            report.worst_analytic,
            report.worst_numeric,
            if passed { "PASS" } else { "FAIL" }
        ),
    )?;
    if passed {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "gradient check failed: parameter `{worst}` entry {} has relative error {:e}",
            report.worst_index, report.max_rel_error
        )))
    }
}

#[derive(Debug, Clone, Args)]
pub struct PseudoArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Rule file (default: built-in table)
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_pseudo(_g: &GlobalArgs, a: &PseudoArgs, out: &mut dyn Write) -> Result<()> {
    let rules = rules_for(a.rules.as_deref())?;
    let mut data = Dataset::load(&a.data)?;
    let filled = pseudo_apply(data.labels_mut(), &rules);
    data.save(&a.out)?;
    emit(out, &format!("filled = {filled}\nout = {}\n", a.out.display()))
}
