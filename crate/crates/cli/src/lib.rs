//! Subcommands of the `symconn` binary. Each `cmd_*` function is callable
//! directly, which is how the integration tests drive the pipeline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use symconn_core::analysis::{analyze, scatter_table, AnalysisReport};
use symconn_core::conndata::{
    load_connectome, load_manifest, save_matrix, synth_dataset, write_atomic, Manifest, SynthConfig,
};
use symconn_core::graphmetrics::{metric_errors, MetricReport};
use symconn_core::trainer::{
    prepare_split, sample_from_input, subject_rng, train, Sample, TrainConfig, TrainState, CHECKPOINT_FILE,
};
use symconn_core::{Connectome, Error, Group, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "symconn",
    version,
    about = "Structural connectome prediction from ROI time series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic planted-mapping dataset.
    Synth(SynthArgs),
    /// Train generator and discriminator.
    Train(TrainArgs),
    /// Sample predicted SCs for subjects.
    Sample(SampleArgs),
    /// Sample the validation split and score it.
    Eval(EvalArgs),
    /// Group-difference analysis of a directory of SCs.
    Analyze(AnalyzeArgs),
    /// Train and evaluate the full model and both loss ablations.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON dataset config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint in --out if there is one.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Subject id; repeat for several. All subjects when omitted.
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["pred_dir", "emp_dir"])))]
pub struct AnalyzeArgs {
    /// Directory of predicted `<id>.csv` matrices.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Directory of empirical `<id>.csv` matrices.
    #[arg(long)]
    pub emp_dir: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only subjects that also have a file in this directory.
    #[arg(long)]
    pub subset_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for an error: 2 configuration, 3 data, 4 numeric
/// divergence, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Version(_) | Error::Index { .. } => 2,
        Error::Data(_)
        | Error::Format { .. }
        | Error::Validation { .. }
        | Error::AtlasCoverage { .. }
        | Error::Dimension { .. }
        | Error::Io { .. } => 3,
        Error::Divergence { .. } | Error::NonFiniteLoss { .. } => 4,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a.config.as_deref(), a.seed, &a.out).map(|_| ()),
        Command::Train(a) => {
            let cfg = train_config(a.config.as_deref(), a.seed)?;
            cmd_train(&cfg, &a.data, &a.out, a.resume, true).map(|_| ())
        }
        Command::Sample(a) => cmd_sample(&a.checkpoint, &a.data, &a.subjects, a.seed, &a.out),
        Command::Eval(a) => {
            let rows = cmd_eval(&a.checkpoint, &a.data, a.seed, &a.out)?;
            print!("{}", summary_text(&rows));
            Ok(())
        }
        Command::Analyze(a) => {
            let (dir, _) = match (&a.pred_dir, &a.emp_dir) {
                (Some(p), _) => (p, "predicted"),
                (None, Some(e)) => (e, "empirical"),
                (None, None) => unreachable!("clap requires one source"),
            };
            let r = cmd_analyze(dir, &a.manifest, a.subset_dir.as_deref(), &a.out)?;
            print!("{}", r.text());
            Ok(())
        }
        Command::Ablate(a) => {
            let cfg = train_config(a.config.as_deref(), a.seed)?;
            let table = cmd_ablate(&cfg, &a.data, &a.out)?;
            print!("{table}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn synth_config(path: Option<&Path>, seed: Option<u64>) -> Result<SynthConfig> {
    let mut cfg = match path {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::from_json(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Manifest> {
    let cfg = synth_config(config, seed)?;
    synth_dataset(&cfg)?.write(out)
}

fn load_dataset(data: &Path) -> Result<(Manifest, Vec<symconn_core::SubjectRecord>)> {
    let manifest = load_manifest(&data.join(MANIFEST_FILE))?;
    let records = manifest.load_subjects(data)?;
    Ok((manifest, records))
}

/// Trains on the seeded 80/20 split of `data`, writing the checkpoint,
/// training log and effective config to `out`.
pub fn cmd_train(cfg: &TrainConfig, data: &Path, out: &Path, resume: bool, verbose: bool) -> Result<TrainState> {
    let (_, records) = load_dataset(data)?;
    let (train_set, _) = prepare_split(&records, cfg.seed)?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::Data("training split is empty".into()))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let mut state = if resume && ckpt.exists() {
        TrainState::resume(&ckpt, cfg)?
    } else {
        TrainState::new(cfg.clone(), first.target.n(), first.input.cols())?
    };
    let json = serde_json::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join("config.json"), format!("{json}\n").as_bytes())?;
    let total = cfg.epochs;
    train(&mut state, &train_set, Some(out), |ev| {
        if verbose {
            let r = ev.report;
            eprintln!(
                "epoch {}/{total} l_d={:.5} l_g={:.5} l_mse={:.5} l_scc={:.5}+{:.5}",
                ev.epoch, r.l_d, r.l_g, r.l_mse, r.l_scc_corr, r.l_scc_bc
            );
        }
    })?;
    Ok(state)
}

fn save_sc(path: &Path, a: &Connectome) -> Result<()> {
    save_matrix(path, a.n(), a.n(), a.values())
}

/// Writes `<out>/<id>.csv` for each requested subject (all when empty).
/// Subject k of the manifest samples with stream k of `seed`.
pub fn cmd_sample(checkpoint: &Path, data: &Path, subjects: &[String], seed: u64, out: &Path) -> Result<()> {
    let state = TrainState::load(checkpoint)?;
    let manifest = load_manifest(&data.join(MANIFEST_FILE))?;
    let chosen: Vec<usize> = if subjects.is_empty() {
        (0..manifest.subjects.len()).collect()
    } else {
        subjects
            .iter()
            .map(|id| {
                manifest
                    .subjects
                    .iter()
                    .position(|e| &e.id == id)
                    .ok_or_else(|| Error::Data(format!("subject {id} not in manifest")))
            })
            .collect::<Result<_>>()?
    };
    chosen.par_iter().try_for_each(|&k| {
        let entry = &manifest.subjects[k];
        let rec = entry.load(data)?;
        let input = symconn_core::netarch::normalize_input(rec.series()?);
        let mut rng = subject_rng(seed, k);
        let pred = sample_from_input(&state.generator, &input, state.schedule(), &mut rng)?;
        save_sc(&out.join(format!("{}.csv", entry.id)), &pred)
    })
}

/// One evaluated subject.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub group: Group,
    pub metrics: MetricReport,
}

/// Samples every validation subject and writes `metrics.csv`,
/// `summary.csv`, `scatter.csv` and `pred/<id>.csv`.
pub fn cmd_eval(checkpoint: &Path, data: &Path, seed: u64, out: &Path) -> Result<Vec<EvalRow>> {
    let state = TrainState::load(checkpoint)?;
    let (manifest, records) = load_dataset(data)?;
    let (_, val) = symconn_core::conndata::split_indices(&manifest.groups(), state.config.seed);
    evaluate_subjects(
        &records.iter().map(Sample::from_record).collect::<Result<Vec<_>>>()?,
        &val,
        seed,
        out,
        |s, rng| sample_from_input(&state.generator, &s.input, state.schedule(), rng),
        state.config.density,
    )
}

/// Shared body of eval: predicts `samples[k]` for each k in `which` with
/// `predict`, using stream k of `seed`.
pub fn evaluate_subjects<F>(
    samples: &[Sample],
    which: &[usize],
    seed: u64,
    out: &Path,
    predict: F,
    density: f64,
) -> Result<Vec<EvalRow>>
where
    F: Fn(&Sample, &mut ChaCha8Rng) -> Result<Connectome> + Sync,
{
    let preds: Vec<Connectome> = which
        .par_iter()
        .map(|&k| predict(&samples[k], &mut subject_rng(seed, k)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(which.len());
    for (&k, pred) in which.iter().zip(&preds) {
        let s = &samples[k];
        save_sc(&out.join("pred").join(format!("{}.csv", s.id)), pred)?;
        rows.push(EvalRow {
            id: s.id.clone(),
            group: s.group,
            metrics: metric_errors(pred, &s.target, density)?,
        });
    }
    let mut csv = format!("subject,group,{}\n", MetricReport::NAMES.join(","));
    for r in &rows {
        let vals: Vec<String> = r.metrics.as_array().iter().map(f64::to_string).collect();
        writeln!(csv, "{},{},{}", r.id, r.group, vals.join(",")).expect("string write");
    }
    write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
    let summary = format!("{}\n{}\n", summary_header(), summary_row("all", &rows));
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;
    let pred_pairs: Vec<(Group, &Connectome)> = rows.iter().map(|r| r.group).zip(&preds).collect();
    let emp_pairs: Vec<(Group, &Connectome)> = which.iter().map(|&k| (samples[k].group, &samples[k].target)).collect();
    if pred_pairs.iter().any(|p| p.0 == Group::Nc) && pred_pairs.iter().any(|p| p.0 == Group::Mci) {
        write_atomic(
            &out.join("scatter.csv"),
            scatter_table(&pred_pairs, &emp_pairs)?.as_bytes(),
        )?;
    }
    Ok(rows)
}

/// (mean, sample standard deviation) of each metric column.
pub fn metric_stats(rows: &[EvalRow]) -> [(f64, f64); 8] {
    let k = rows.len() as f64;
    let mut out = [(0.0, 0.0); 8];
    for (c, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.metrics.as_array()[c]).collect();
        let mean = vals.iter().sum::<f64>() / k;
        let var = if rows.len() > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        *slot = (mean, var.sqrt());
    }
    out
}

fn summary_header() -> String {
    format!("variant,{}", MetricReport::NAMES.join(","))
}

fn summary_row(name: &str, rows: &[EvalRow]) -> String {
    let cells: Vec<String> = metric_stats(rows).iter().map(|(m, s)| format!("{m}±{s}")).collect();
    format!("{name},{}", cells.join(","))
}

fn summary_text(rows: &[EvalRow]) -> String {
    let mut s = String::new();
    for (name, (m, sd)) in MetricReport::NAMES.iter().zip(metric_stats(rows)) {
        writeln!(s, "{name:>16} {m:.6} ± {sd:.6}").expect("string write");
    }
    s
}

/// Loads `<dir>/<id>.csv` for every manifest subject that has one (and,
/// with `subset`, also has a file there), runs the group analysis and
/// writes `rois.csv`, `edges.csv` and `report.txt` to `out`.
pub fn cmd_analyze(dir: &Path, manifest: &Path, subset: Option<&Path>, out: &Path) -> Result<AnalysisReport> {
    let m = load_manifest(manifest)?;
    let mut scs: Vec<(Group, Connectome)> = Vec::new();
    for e in &m.subjects {
        let name = format!("{}.csv", e.id);
        let path = dir.join(&name);
        if !path.exists() || subset.is_some_and(|s| !s.join(&name).exists()) {
            continue;
        }
        scs.push((e.group, load_connectome(&path)?));
    }
    if scs.is_empty() {
        return Err(Error::Data(format!("no subject matrices found in {}", dir.display())));
    }
    let pairs: Vec<(Group, &Connectome)> = scs.iter().map(|(g, a)| (*g, a)).collect();
    let report = analyze(&pairs)?;
    write_atomic(&out.join("rois.csv"), report.roi_csv().as_bytes())?;
    write_atomic(&out.join("edges.csv"), report.edge_csv().as_bytes())?;
    write_atomic(&out.join("report.txt"), report.text().as_bytes())?;
    Ok(report)
}

/// Trains and evaluates each loss variant under `out/<variant>` and writes
/// `out/ablation.csv`: one row per variant, each metric as `mean±std`.
pub fn cmd_ablate(cfg: &TrainConfig, data: &Path, out: &Path) -> Result<String> {
    let mut table = summary_header();
    table.push('\n');
    for ab in symconn_core::Ablation::ALL {
        let vcfg = TrainConfig {
            ablation: ab,
            ..cfg.clone()
        };
        let dir = out.join(ab.name());
        cmd_train(&vcfg, data, &dir, false, false)?;
        let rows = cmd_eval(&dir.join(CHECKPOINT_FILE), data, cfg.seed, &dir.join("eval"))?;
        table.push_str(&summary_row(ab.name(), &rows));
        table.push('\n');
    }
    write_atomic(&out.join("ablation.csv"), table.as_bytes())?;
    Ok(table)
}
