use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bliss_core::data_io::{
    enumerate_splits, manifest_path, payload_sha256, write_embeddings, DataPaths, EmbeddingFileHeader,
    ExperimentConfig, FixedSplitFile, Manifest, SplitMode, SplitPlan, HEADER_LEN,
};
use bliss_core::eval::{
    avg_dict_similarities, error_quantile_profile, evaluate, lambda_sweep, text_clustering_report, LabeledScores,
    ThresholdRule,
};
use bliss_core::experiment::{AggregateRow, Experiment};
use bliss_core::math::EmbeddingMatrix;
use bliss_core::scoring::{score_batch, Method};
use bliss_core::synth::{generate, SynthConfig};
use clap::{Args, ValueEnum};
use log::{info, warn};

use crate::error::{invalid, CliError, CliResult};
use crate::tables::{align_labels, read_labels, read_scores, sink, write_json, write_labels, write_scores};

/// Experiment inputs: a config file, explicit flags, or a config with
/// some fields overridden by flags.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config JSON
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training embeddings (labels in the manifest)
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test embeddings
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Class-label text embeddings; ids are class names
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Dictionary text embeddings
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Comma-separated normal classes (default: every class)
    #[arg(long, value_delimiter = ',')]
    pub normal_classes: Option<Vec<String>>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of dictionary matches per sample
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Neighbours for the knn baseline
    #[arg(long)]
    pub k_nn: Option<usize>,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let need = |p: &Option<PathBuf>, flag: &str| {
                    p.clone().ok_or_else(|| invalid(format!("{flag} is required without --config")))
                };
                ExperimentConfig::new(DataPaths {
                    train: need(&self.train, "--train")?,
                    test: need(&self.test, "--test")?,
                    class_text: need(&self.classes, "--classes")?,
                    dictionary: None,
                })
            }
        };
        if let Some(p) = &self.train {
            cfg.paths.train = p.clone();
        }
        if let Some(p) = &self.test {
            cfg.paths.test = p.clone();
        }
        if let Some(p) = &self.classes {
            cfg.paths.class_text = p.clone();
        }
        if let Some(p) = &self.dict {
            cfg.paths.dictionary = Some(p.clone());
        }
        if let Some(n) = &self.normal_classes {
            cfg.normal_classes = n.clone();
        }
        cfg.method = self.method.unwrap_or(cfg.method);
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.k = self.k.unwrap_or(cfg.k);
        cfg.epsilon = self.epsilon.unwrap_or(cfg.epsilon);
        cfg.k_nn = self.k_nn.unwrap_or(cfg.k_nn);
        cfg.scoring().validate()?;
        Ok(cfg)
    }
}

fn load(cfg: &ExperimentConfig) -> CliResult<Experiment> {
    info!("loading embeddings");
    let exp = Experiment::load(cfg)?;
    for w in &exp.warnings {
        warn!("{w}");
    }
    info!(
        "train {}, test {}, classes {}, dictionary {}",
        exp.train.len(),
        exp.test.len(),
        exp.class_text.len(),
        exp.dictionary.as_ref().map_or(0, |d| d.len())
    );
    Ok(exp)
}

fn need_dict(cfg: &ExperimentConfig, what: &str) -> CliResult<()> {
    if cfg.paths.dictionary.is_none() {
        return Err(invalid(format!("{what} needs a dictionary (--dict or paths.dictionary)")));
    }
    Ok(())
}

/// Binary labels from a labels CSV, else from the class labels of the test
/// manifest.
fn anomaly_flags(exp: &Experiment, cfg: &ExperimentConfig, labels: Option<&Path>) -> CliResult<Vec<bool>> {
    match labels {
        Some(p) => align_labels(exp.test.ids(), &read_labels(p)?),
        None => Ok(exp.anomaly_flags(&cfg.normal_classes)?),
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Output CSV (default: output.scores of the config, else stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn score(args: &ScoreArgs) -> CliResult<()> {
    let cfg = args.exp.resolve()?;
    if cfg.method == Method::Bliss {
        need_dict(&cfg, "--method bliss")?;
    }
    let exp = load(&cfg)?;
    info!("scoring {} samples with {}", exp.test.len(), cfg.method);
    let records = exp.score(&cfg.normal_classes, &cfg.scoring(), cfg.method)?;
    let out = args.out.as_deref().or(cfg.output.scores.as_deref());
    write_scores(sink(out)?, &records)?;
    info!("wrote {} rows", records.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scores CSV with sample_id and score columns
    #[arg(long)]
    pub scores: PathBuf,
    /// Labels CSV: sample_id,label with 1 = anomaly
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let scores = read_scores(&args.scores)?;
    let labels = align_labels(scores.iter().map(|(id, _)| id), &read_labels(&args.labels)?)?;
    let ls = LabeledScores::new(scores.into_iter().map(|(_, s)| s).collect(), labels)?;
    let report = evaluate(&ls)?;
    info!("auroc {:.4}, fpr95 {:.4}", report.auroc, report.fpr95);
    write_json(sink(args.out.as_deref())?, &report)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Comma-separated lambda grid
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,1,2")]
    pub lambdas: Vec<f64>,
    /// Split plan JSON; metrics are averaged over its trials
    #[arg(long, conflicts_with = "labels")]
    pub plan: Option<PathBuf>,
    /// Labels CSV used instead of the test manifest's class labels
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let cfg = args.exp.resolve()?;
    need_dict(&cfg, "sweep")?;
    let exp = load(&cfg)?;
    let scoring = cfg.scoring();
    let rows: Vec<AggregateRow> = match &args.plan {
        Some(p) => {
            let plan: SplitPlan = serde_json::from_slice(&fs::read(p)?).map_err(bliss_core::Error::from)?;
            info!("sweeping {} lambdas over {} trials", args.lambdas.len(), plan.trials.len());
            exp.sweep_plan(&plan, &scoring, &args.lambdas)?
        }
        None => {
            let flags = anomaly_flags(&exp, &cfg, args.labels.as_deref())?;
            let bank = exp.bank(&cfg.normal_classes)?;
            let dict = exp.dictionary.as_ref().expect("checked above");
            info!("sweeping {} lambdas", args.lambdas.len());
            lambda_sweep(&exp.test, &flags, &bank, dict, &scoring, &args.lambdas)?
                .iter()
                .map(|r| AggregateRow::from_reports(r.lambda, &[r.report]))
                .collect::<bliss_core::Result<_>>()?
        }
    };
    let out = args.out.as_deref().or(cfg.output.sweep.as_deref());
    let mut w = csv::Writer::from_writer(sink(out)?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagnoseMode {
    /// Image-to-label and label-to-dictionary similarity distributions
    Clustering,
    /// False negative / false positive shares per dictionary-similarity quantile
    Bias,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[arg(long, value_enum)]
    pub mode: DiagnoseMode,
    #[arg(long, default_value_t = 10)]
    pub quantiles: usize,
    /// prevalence, or fixed:<tau>
    #[arg(long, default_value = "prevalence")]
    pub threshold_rule: ThresholdRule,
    /// Labels CSV used instead of the test manifest's class labels
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let cfg = args.exp.resolve()?;
    need_dict(&cfg, "diagnose")?;
    let exp = load(&cfg)?;
    let dict = exp.dictionary.as_ref().expect("checked above");
    let out = sink(args.out.as_deref())?;
    match args.mode {
        DiagnoseMode::Clustering => {
            let bank = exp.bank(&cfg.normal_classes)?;
            let rows: Vec<usize> = (0..exp.train.len())
                .filter(|&i| bank.class_index(&exp.train_labels[i]).is_ok())
                .collect();
            let images = exp.train.select(&rows)?;
            let labels: Vec<&str> = rows.iter().map(|&i| exp.train_labels[i].as_str()).collect();
            let report = text_clustering_report(bank.class_text_embs(), &images, &labels, dict)?;
            info!(
                "image-label mean {:.4}, label-dictionary mean {:.4}",
                report.image_label_summary.mean, report.label_dict_summary.mean
            );
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["distribution", "id", "value"])?;
            for (dist, id, value) in report.rows() {
                w.write_record([dist, id, &value.to_string()])?;
            }
            w.flush()?;
        }
        DiagnoseMode::Bias => {
            let flags = anomaly_flags(&exp, &cfg, args.labels.as_deref())?;
            let bank = exp.bank(&cfg.normal_classes)?;
            info!("scoring {} samples with {}", exp.test.len(), cfg.method);
            let records = score_batch(&exp.test, &bank, Some(dict), &cfg.scoring(), cfg.method)?;
            let ls = LabeledScores::new(records.iter().map(|r| r.score).collect(), flags)?;
            let sims = avg_dict_similarities(&exp.test, dict)?;
            let p = error_quantile_profile(&ls, &sims, args.quantiles, args.threshold_rule)?;
            info!("threshold {}", p.threshold);
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "quantile", "sim_low", "sim_high", "size", "fn_count", "fp_count", "fn_proportion", "fp_proportion",
            ])?;
            for q in 0..p.n_quantiles {
                w.write_record([
                    q.to_string(),
                    p.bucket_ranges[q].0.to_string(),
                    p.bucket_ranges[q].1.to_string(),
                    p.bucket_sizes[q].to_string(),
                    p.fn_counts[q].to_string(),
                    p.fp_counts[q].to_string(),
                    p.fn_proportion[q].to_string(),
                    p.fp_proportion[q].to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitsArgs {
    /// Comma-separated class names of the dataset
    #[arg(long, value_delimiter = ',', required = true)]
    pub dataset_classes: Vec<String>,
    /// one_class, leave_one_out, or fixed:<splits.json>
    #[arg(long)]
    pub mode: String,
    /// Dataset name recorded in the plan
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn splits(args: &SplitsArgs) -> CliResult<()> {
    let (mode, file_dataset) = match args.mode.as_str() {
        "one_class" => (SplitMode::OneClass, None),
        "leave_one_out" => (SplitMode::LeaveOneOut, None),
        m => match m.strip_prefix("fixed:") {
            Some(path) => {
                let file = FixedSplitFile::load(Path::new(path))?;
                (SplitMode::Fixed(file.splits), file.dataset)
            }
            None => return Err(invalid(format!("unknown split mode {m:?}"))),
        },
    };
    let dataset = args.dataset.clone().or(file_dataset).unwrap_or_else(|| "dataset".into());
    let plan = enumerate_splits(&dataset, &args.dataset_classes, &mode)?;
    info!("{} trials", plan.trials.len());
    write_json(sink(args.out.as_deref())?, &plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Biased,
    Unbiased,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "biased")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let cfg = match args.preset {
        Preset::Biased => SynthConfig::biased(args.seed),
        Preset::Unbiased => SynthConfig::unbiased(args.seed),
    };
    info!("generating {:?} world, seed {}", args.preset, args.seed);
    let world = generate(&cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    let source = serde_json::to_value(cfg).map_err(bliss_core::Error::from)?;
    let write = |name: &str, m: &EmbeddingMatrix, labels: Option<&[String]>| -> CliResult<PathBuf> {
        let path = args.out_dir.join(name);
        let mut manifest = Manifest::new(m.ids().to_vec()).with_source("generator", "bliss synth").with_source("config", source.clone());
        if let Some(l) = labels {
            manifest = manifest.with_labels(l.to_vec());
        }
        write_embeddings(&path, m, &manifest)?;
        info!("wrote {}", path.display());
        Ok(path)
    };
    let train = write("train.beb", &world.train, Some(&world.train_labels))?;
    let test = write("test.beb", &world.test, Some(&world.test_labels))?;
    let class_text = write("class_text.beb", &world.class_text_embs, None)?;
    let dictionary = write("dictionary.beb", world.dictionary.embeddings(), None)?;
    write_labels(&args.out_dir.join("test_labels.csv"), world.test.ids(), &world.test_is_anomaly)?;

    let mut exp = ExperimentConfig::new(DataPaths {
        train,
        test,
        class_text,
        dictionary: Some(dictionary),
    });
    exp.normal_classes = world.normal_classes.clone();
    exp.seed = args.seed;
    exp.save(&args.out_dir.join("experiment.json"))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub file: PathBuf,
}

pub fn inspect(args: &InspectArgs) -> CliResult<()> {
    let bytes = fs::read(&args.file)?;
    let header = EmbeddingFileHeader::decode(&bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != header.payload_len() {
        return Err(invalid(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let actual = payload_sha256(payload);
    let recorded = match fs::read(manifest_path(&args.file)) {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
        Ok(json) => Some(serde_json::from_slice::<Manifest>(&json).map_err(bliss_core::Error::from)?.sha256),
    };
    let hash_status = match &recorded {
        None => "no manifest".to_owned(),
        Some(h) if *h == actual => "ok".to_owned(),
        Some(h) => format!("MISMATCH (manifest {h})"),
    };

    let dim = header.dim as usize;
    let (mut lo, mut hi, mut sum, mut off) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    if dim > 0 {
        for row in payload.chunks_exact(4 * dim) {
            let sq: f64 = row
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())).powi(2))
                .sum();
            let n = sq.sqrt();
            lo = lo.min(n);
            hi = hi.max(n);
            sum += n;
            off += usize::from((n - 1.0).abs() > bliss_core::math::UNIT_NORM_TOL);
        }
    }

    let mut out = sink(None)?;
    writeln!(out, "version      {}", header.version)?;
    writeln!(out, "count        {}", header.count)?;
    writeln!(out, "dim          {}", header.dim)?;
    writeln!(out, "normalized   {}", u8::from(header.normalized))?;
    writeln!(out, "sha256       {actual}")?;
    writeln!(out, "hash         {hash_status}")?;
    if header.count > 0 && dim > 0 {
        writeln!(out, "norm min     {lo:.6}")?;
        writeln!(out, "norm mean    {:.6}", sum / f64::from(header.count))?;
        writeln!(out, "norm max     {hi:.6}")?;
        writeln!(out, "non-unit     {off}")?;
    }
    out.flush()?;
    drop(out);
    match recorded {
        Some(expected) if expected != actual => Err(CliError::Core(bliss_core::Error::HashMismatch { expected, actual })),
        _ => Ok(()),
    }
}
