//! Command-line interface: argument parsing, resolution of config file plus
//! flag overrides into an [`Invocation`], execution, and manifests.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors (including
//! unknown feature names and unreadable config/spec files), 1 for any other
//! failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::{read_jsonl, write_jsonl, AgeMode, CharlsonWeightTable, FeatureOptions, PatientHistory, SequenceConfig};
use crate::config::{
    read_config_file, sha256_hex, BaselineSection, ExplainConfig, FileDigest, Manifest, ModelKind, RunConfig,
    ShapModeChoice, Variant, MANIFEST_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::eval::{run_repeated_evaluation, write_comparison_csv, EvaluationReport, SplitPlan, Trainer, REPORT_SCHEMA_VERSION};
use crate::explain::{
    export_force_plot_data, permutation_importance, shap_values, write_ranking_csv, Instance, PermutationResult, Scorer,
    ShapExplanation, ShapMode, MAX_EXACT_FEATURES,
};
use crate::lace::BaselineModel;
use crate::lstm::TrainConfig;
use crate::pipeline::{ColumnSubsetScorer, LaceTrainer, LstmTrainer, TrainedModel};
use crate::rng::{derive_seed, stream_rng};
use crate::synthetic::{generate_cohort, CohortSpec};

pub const EXPLAIN_SCHEMA_VERSION: u32 = 1;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnknownFeature { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "readmit", version, about = "Thirty-day readmission prediction: cohorts, models, evaluation, attribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort as JSON Lines.
    Generate(GenerateArgs),
    /// Fit the LACE logistic baseline.
    TrainBaseline(TrainArgs),
    /// Train the bidirectional LSTM.
    TrainLstm(TrainArgs),
    /// Train either model.
    Train(TrainModelArgs),
    /// Repeated patient-level split evaluation, optionally with the ablation matrix.
    Evaluate(EvaluateArgs),
    /// Permutation importance of a trained model on a cohort.
    ExplainPermutation(ExplainArgs),
    /// Shapley attributions and force-plot data for a trained model.
    ExplainShap(ShapArgs),
    /// Re-execute the invocation recorded in a manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::TrainBaseline(_) => "train-baseline",
            Command::TrainLstm(_) => "train-lstm",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::ExplainPermutation(_) => "explain-permutation",
            Command::ExplainShap(_) => "explain-shap",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration file (TOML); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global seed, applied to every seeded stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Charlson weight table (TOML); defaults to the shipped table.
    #[arg(long)]
    pub charlson_weights: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed.or(cfg.seed) {
            cfg = cfg.with_seed(seed);
        }
        if self.charlson_weights.is_some() {
            cfg.charlson_weights = self.charlson_weights.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Features or feature groups to drop (comma separated); replaces the config list.
    #[arg(long, value_delimiter = ',')]
    pub exclude_features: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub age_mode: Option<AgeMode>,
}

impl FeatureArgs {
    fn apply(&self, base: &FeatureOptions) -> Result<FeatureOptions> {
        let mut opts = base.clone();
        if let Some(ex) = &self.exclude_features {
            opts.exclude = ex.clone();
        }
        if let Some(mode) = self.age_mode {
            opts.age_mode = mode;
        }
        opts.resolve()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cohort spec file (TOML); defaults to the config's `[cohort]` section.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of patients; overrides the spec.
    #[arg(long)]
    pub n_patients: Option<usize>,
    /// Output file; defaults to `cohort.jsonl` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Cohort JSON Lines file.
    #[arg(long)]
    pub input: PathBuf,
    /// Baseline only: use every registry feature.
    #[arg(long)]
    pub extended: bool,
    /// LSTM only: epoch limit.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainModelArgs {
    /// Model to train.
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[command(flatten)]
    pub args: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Cohort JSON Lines file.
    #[arg(long)]
    pub input: PathBuf,
    /// Models to evaluate (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Train/test splits per model.
    #[arg(long)]
    pub n_repeats: Option<usize>,
    /// Also run the feature-layout variants (the config's, or the default matrix).
    #[arg(long)]
    pub ablation: bool,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cohort JSON Lines file.
    #[arg(long)]
    pub input: PathBuf,
    /// Model artifact (baseline JSON or LSTM checkpoint).
    #[arg(long)]
    pub model: PathBuf,
    /// Restrict to these features (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Shuffles per feature.
    #[arg(long)]
    pub n_repeats: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ShapArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cohort whose index admissions are explained.
    #[arg(long)]
    pub input: PathBuf,
    /// Model artifact (baseline JSON or LSTM checkpoint).
    #[arg(long)]
    pub model: PathBuf,
    /// Cohort to draw the background set from; defaults to `--input`.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Restrict attributions to these features (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub mode: Option<ShapModeChoice>,
    /// Monte-Carlo permutation samples per instance.
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Background rows drawn from the background cohort.
    #[arg(long)]
    pub background_size: Option<usize>,
    /// Explain at most this many index admissions.
    #[arg(long)]
    pub max_instances: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// Manifest written by an earlier command.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded locations.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Fail unless every output matches the recorded digest.
    #[arg(long)]
    pub verify: bool,
}

/// A fully resolved command: everything needed to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Generate {
        spec: CohortSpec,
        charlson_weights: Option<PathBuf>,
        out: PathBuf,
    },
    Train {
        model: ModelKind,
        input: PathBuf,
        charlson_weights: Option<PathBuf>,
        features: FeatureOptions,
        baseline: BaselineSection,
        sequence: SequenceConfig,
        train: TrainConfig,
        out: PathBuf,
    },
    Evaluate {
        input: PathBuf,
        charlson_weights: Option<PathBuf>,
        models: Vec<ModelKind>,
        features: FeatureOptions,
        baseline: BaselineSection,
        sequence: SequenceConfig,
        train: TrainConfig,
        split: SplitPlan,
        /// Empty when the ablation matrix is not requested.
        variants: Vec<Variant>,
        ablation_model: ModelKind,
        out_dir: PathBuf,
    },
    ExplainPermutation {
        input: PathBuf,
        model: PathBuf,
        charlson_weights: Option<PathBuf>,
        explain: ExplainConfig,
        out_dir: PathBuf,
    },
    ExplainShap {
        input: PathBuf,
        background: Option<PathBuf>,
        model: PathBuf,
        charlson_weights: Option<PathBuf>,
        explain: ExplainConfig,
        out_dir: PathBuf,
    },
}

pub type RunManifest = Manifest<Invocation>;

/// Resolves parsed arguments and runs the command.
/// Returns the manifest path.
pub fn run(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Command::Rerun(args) => rerun(&args),
        command => {
            let inv = resolve(command)?;
            Ok(execute_with_manifest(&inv)?.0)
        }
    }
}

fn default_out(cfg: &RunConfig, flag: Option<&Path>, name: &str) -> PathBuf {
    flag.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir(None).join(name))
}

fn resolve(command: Command) -> Result<Invocation> {
    match command {
        Command::Generate(a) => {
            let cfg = a.config.load()?;
            let mut spec = match &a.spec {
                Some(p) => toml::from_str::<CohortSpec>(&read_config_file(p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => cfg.cohort.clone(),
            };
            if let Some(seed) = a.config.seed.or(cfg.seed) {
                spec.seed = seed;
            }
            if let Some(n) = a.n_patients {
                spec.n_patients = n;
            }
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            Ok(Invocation::Generate {
                spec,
                charlson_weights: cfg.charlson_weights.clone(),
                out: default_out(&cfg, a.out.as_deref(), "cohort.jsonl"),
            })
        }
        Command::TrainBaseline(a) => resolve_train(ModelKind::LaceLr, a),
        Command::TrainLstm(a) => resolve_train(ModelKind::Lstm, a),
        Command::Train(a) => resolve_train(a.model, a.args),
        Command::Evaluate(a) => {
            let cfg = a.config.load()?;
            let features = a.features.apply(&cfg.features)?;
            let mut split = cfg.split;
            if let Some(n) = a.n_repeats {
                split.n_repeats = n;
            }
            split.validate()?;
            cfg.train.validate()?;
            let models = a.models.clone().unwrap_or_else(|| cfg.evaluate.models.clone());
            let variants = if a.ablation || cfg.evaluate.ablation {
                if cfg.variants.is_empty() { Variant::default_matrix() } else { cfg.variants.clone() }
            } else {
                Vec::new()
            };
            for v in &variants {
                v.features().resolve()?;
            }
            if models.is_empty() && variants.is_empty() {
                return Err(Error::Config("nothing to evaluate: no models and no ablation".into()));
            }
            Ok(Invocation::Evaluate {
                input: a.input,
                charlson_weights: cfg.charlson_weights.clone(),
                models,
                features,
                baseline: cfg.baseline.clone(),
                sequence: cfg.sequence,
                train: cfg.train,
                split,
                variants,
                ablation_model: cfg.evaluate.ablation_model,
                out_dir: cfg.output_dir(a.out_dir.as_deref()),
            })
        }
        Command::ExplainPermutation(a) => {
            let cfg = a.config.load()?;
            let mut explain = cfg.explain.clone();
            if let Some(f) = a.features {
                explain.features = f;
            }
            if let Some(n) = a.n_repeats {
                explain.n_repeats = n;
            }
            if explain.n_repeats == 0 {
                return Err(Error::Config("n_repeats must be at least 1".into()));
            }
            Ok(Invocation::ExplainPermutation {
                input: a.input,
                model: a.model,
                charlson_weights: cfg.charlson_weights.clone(),
                explain,
                out_dir: cfg.output_dir(a.out_dir.as_deref()),
            })
        }
        Command::ExplainShap(a) => {
            let cfg = a.config.load()?;
            let mut explain = cfg.explain.clone();
            if let Some(f) = a.features {
                explain.features = f;
            }
            if let Some(m) = a.mode {
                explain.mode = m;
            }
            if let Some(n) = a.n_samples {
                explain.n_samples = n;
            }
            if let Some(n) = a.background_size {
                explain.background_size = n;
            }
            if let Some(n) = a.max_instances {
                explain.max_instances = n;
            }
            if explain.n_samples == 0 || explain.background_size == 0 {
                return Err(Error::Config("n_samples and background_size must be at least 1".into()));
            }
            Ok(Invocation::ExplainShap {
                input: a.input,
                background: a.background,
                model: a.model,
                charlson_weights: cfg.charlson_weights.clone(),
                explain,
                out_dir: cfg.output_dir(a.out_dir.as_deref()),
            })
        }
        Command::Rerun(_) => unreachable!("handled by run"),
    }
}

fn resolve_train(model: ModelKind, a: TrainArgs) -> Result<Invocation> {
    let cfg = a.config.load()?;
    let features = a.features.apply(&cfg.features)?;
    let mut baseline = cfg.baseline.clone();
    baseline.extended |= a.extended;
    let mut train = cfg.train;
    if let Some(n) = a.max_epochs {
        train.max_epochs = n;
        train.patience = train.patience.min(n);
    }
    train.validate()?;
    let name = match model {
        ModelKind::LaceLr => "model.json",
        ModelKind::Lstm => "model.ckpt",
    };
    Ok(Invocation::Train {
        model,
        input: a.input,
        charlson_weights: cfg.charlson_weights.clone(),
        features,
        baseline,
        sequence: cfg.sequence,
        train,
        out: default_out(&cfg, a.out.as_deref(), name),
    })
}

impl Invocation {
    fn charlson_path(&self) -> Option<&Path> {
        match self {
            Invocation::Generate { charlson_weights, .. }
            | Invocation::Train { charlson_weights, .. }
            | Invocation::Evaluate { charlson_weights, .. }
            | Invocation::ExplainPermutation { charlson_weights, .. }
            | Invocation::ExplainShap { charlson_weights, .. } => charlson_weights.as_deref(),
        }
    }

    fn table(&self) -> Result<CharlsonWeightTable> {
        match self.charlson_path() {
            Some(p) => CharlsonWeightTable::from_toml_str(&read_config_file(p)?),
            None => Ok(CharlsonWeightTable::shipped()),
        }
    }

    /// Files read by the command.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = self.charlson_path().map(Path::to_path_buf).into_iter().collect();
        match self {
            Invocation::Generate { .. } => {}
            Invocation::Train { input, .. } | Invocation::Evaluate { input, .. } => out.push(input.clone()),
            Invocation::ExplainPermutation { input, model, .. } => out.extend([input.clone(), model.clone()]),
            Invocation::ExplainShap { input, background, model, .. } => {
                out.extend([input.clone(), model.clone()]);
                out.extend(background.clone());
            }
        }
        out
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        match self {
            Invocation::Generate { spec, .. } => {
                s.insert("cohort".into(), spec.seed);
            }
            Invocation::Train { model, train, .. } => {
                if *model == ModelKind::Lstm {
                    s.insert("train".into(), train.seed);
                }
            }
            Invocation::Evaluate { split, .. } => {
                s.insert("split".into(), split.seed);
            }
            Invocation::ExplainPermutation { explain, .. } | Invocation::ExplainShap { explain, .. } => {
                s.insert("explain".into(), explain.seed);
            }
        }
        s
    }

    pub fn manifest_path(&self) -> PathBuf {
        match self {
            Invocation::Generate { out, .. } | Invocation::Train { out, .. } => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".manifest.json");
                out.with_file_name(name)
            }
            Invocation::Evaluate { out_dir, .. }
            | Invocation::ExplainPermutation { out_dir, .. }
            | Invocation::ExplainShap { out_dir, .. } => out_dir.join("manifest.json"),
        }
    }

    /// Moves every output into `dir`, keeping file names.
    pub fn redirect(&mut self, dir: &Path) {
        match self {
            Invocation::Generate { out, .. } | Invocation::Train { out, .. } => {
                *out = dir.join(out.file_name().unwrap_or_default());
            }
            Invocation::Evaluate { out_dir, .. }
            | Invocation::ExplainPermutation { out_dir, .. }
            | Invocation::ExplainShap { out_dir, .. } => *out_dir = dir.to_path_buf(),
        }
    }

    /// Runs the command; returns the files it wrote.
    pub fn execute(&self) -> Result<Vec<PathBuf>> {
        let table = self.table()?;
        match self {
            Invocation::Generate { spec, out, .. } => {
                let cohort = generate_cohort(spec, &table)?;
                let mut w = create(out)?;
                write_jsonl(&mut w, &cohort)?;
                w.flush()?;
                log::info!("wrote {} patients to {}", cohort.len(), out.display());
                Ok(vec![out.clone()])
            }
            Invocation::Train { model, input, features, baseline, sequence, train, out, .. } => {
                let histories = load_cohort(input, &table)?;
                match model {
                    ModelKind::LaceLr => {
                        let m = BaselineModel::fit(&histories, &table, &baseline.options(features))?;
                        write_text(out, &m.to_json()?)?;
                        Ok(vec![out.clone()])
                    }
                    ModelKind::Lstm => {
                        let trainer = LstmTrainer {
                            name: "lstm".into(),
                            features: features.clone(),
                            sequence: *sequence,
                            train: *train,
                            table: table.clone(),
                        };
                        let (ckpt, log) = trainer.fit(&histories, train.seed)?;
                        write_text(out, &ckpt.to_json()?)?;
                        let mut name = out.file_name().unwrap_or_default().to_os_string();
                        name.push(".log.json");
                        let log_path = out.with_file_name(name);
                        write_json(&log_path, &log)?;
                        Ok(vec![out.clone(), log_path])
                    }
                }
            }
            Invocation::Evaluate {
                input,
                models,
                features,
                baseline,
                sequence,
                train,
                split,
                variants,
                ablation_model,
                out_dir,
                ..
            } => {
                let histories = load_cohort(input, &table)?;
                let trainer = |model: ModelKind, features: &FeatureOptions| -> Box<dyn Trainer> {
                    match model {
                        ModelKind::LaceLr => {
                            Box::new(LaceTrainer { options: baseline.options(features), table: table.clone() })
                        }
                        ModelKind::Lstm => Box::new(LstmTrainer {
                            name: "lstm".into(),
                            features: features.clone(),
                            sequence: *sequence,
                            train: *train,
                            table: table.clone(),
                        }),
                    }
                };
                let mut written = Vec::new();
                let mut reports = Vec::new();
                for &m in models {
                    let report = run_repeated_evaluation(&histories, trainer(m, features).as_ref(), split)?;
                    let json = out_dir.join(format!("report_{}.json", report.model));
                    write_json(&json, &report)?;
                    let csv = out_dir.join(format!("report_{}.csv", report.model));
                    let mut w = create(&csv)?;
                    report.write_csv(&mut w)?;
                    w.flush()?;
                    written.extend([json, csv]);
                    reports.push(report);
                }
                if reports.len() > 1 {
                    let path = out_dir.join("comparison.csv");
                    let mut w = create(&path)?;
                    write_comparison_csv(&mut w, &reports)?;
                    w.flush()?;
                    written.push(path);
                }
                if !variants.is_empty() {
                    let mut rows = Vec::new();
                    for v in variants {
                        let opts = v.features();
                        let report = run_repeated_evaluation(&histories, trainer(*ablation_model, &opts).as_ref(), split)?;
                        rows.push(AblationRow { variant: v.clone(), n_features: opts.resolve()?.len(), report });
                    }
                    let table = AblationTable { schema_version: REPORT_SCHEMA_VERSION, rows };
                    let json = out_dir.join("ablation.json");
                    write_json(&json, &table)?;
                    let csv = out_dir.join("ablation.csv");
                    let mut w = create(&csv)?;
                    table.write_csv(&mut w)?;
                    w.flush()?;
                    written.extend([json, csv]);
                }
                Ok(written)
            }
            Invocation::ExplainPermutation { input, model, explain, out_dir, .. } => {
                let model = load_model(model)?;
                let histories = load_cohort(input, &table)?;
                let instances = model.instances(&histories, &table)?;
                let names = model.feature_names();
                let columns = select_columns(&names, &explain.features)?;
                let rows = columns
                    .iter()
                    .map(|&k| {
                        permutation_importance(
                            model.scorer(),
                            &instances,
                            k,
                            &names[k],
                            explain.n_repeats,
                            derive_seed(explain.seed, k as u64),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let baseline_auc = rows.first().map_or(f64::NAN, |r| r.baseline_auc);
                let result = PermutationResult { baseline_auc, seed: explain.seed, rows };
                let json = out_dir.join("permutation.json");
                write_json(
                    &json,
                    &PermutationDocument {
                        schema_version: EXPLAIN_SCHEMA_VERSION,
                        n_instances: instances.len(),
                        result: result.clone(),
                    },
                )?;
                let csv = out_dir.join("permutation.csv");
                let mut w = create(&csv)?;
                write_ranking_csv(&mut w, &result)?;
                w.flush()?;
                Ok(vec![json, csv])
            }
            Invocation::ExplainShap { input, background, model, explain, out_dir, .. } => {
                let model = load_model(model)?;
                let targets = model.instances(&load_cohort(input, &table)?, &table)?;
                let pool = match background {
                    Some(p) => model.instances(&load_cohort(p, &table)?, &table)?,
                    None => targets.clone(),
                };
                let background = sample_background(pool, explain.background_size, explain.seed);
                let names = model.feature_names();
                let columns = select_columns(&names, &explain.features)?;
                let explanations =
                    explain_instances(model.scorer(), &targets, &background, &names, &columns, explain)?;
                let json = out_dir.join("shap.json");
                write_json(
                    &json,
                    &ShapDocument { schema_version: EXPLAIN_SCHEMA_VERSION, explanations: explanations.clone() },
                )?;
                let force = out_dir.join("force_plot.json");
                write_json(&force, &export_force_plot_data(&explanations))?;
                let csv = out_dir.join("shap.csv");
                let mut w = create(&csv)?;
                write_shap_ranking(&mut w, &explanations)?;
                w.flush()?;
                Ok(vec![json, force, csv])
            }
        }
    }
}

/// Executes and writes the manifest. Returns its path and contents.
pub fn execute_with_manifest(inv: &Invocation) -> Result<(PathBuf, RunManifest)> {
    let inputs = inv.inputs().iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
    let outputs = inv.execute()?.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(serde_json::to_string(inv)?.as_bytes()),
        invocation: inv.clone(),
        seeds: inv.seeds(),
        inputs,
        outputs,
    };
    let path = inv.manifest_path();
    write_json(&path, &manifest)?;
    Ok((path, manifest))
}

fn rerun(args: &RerunArgs) -> Result<PathBuf> {
    let recorded: RunManifest = serde_json::from_str(&read_config_file(&args.manifest)?)
        .map_err(|e| Error::Config(format!("{}: {e}", args.manifest.display())))?;
    if recorded.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported manifest schema {}", recorded.schema_version)));
    }
    let mut inv = recorded.invocation.clone();
    if let Some(dir) = &args.out_dir {
        inv.redirect(dir);
    }
    let (path, fresh) = execute_with_manifest(&inv)?;
    if args.verify {
        for (old, new) in recorded.outputs.iter().zip(&fresh.outputs) {
            if old.sha256 != new.sha256 {
                return Err(Error::validation(format!(
                    "{} differs from the recorded output {}",
                    new.path.display(),
                    old.path.display()
                )));
            }
        }
        if recorded.outputs.len() != fresh.outputs.len() {
            return Err(Error::validation("rerun wrote a different set of outputs"));
        }
    }
    Ok(path)
}

/// Reads and validates a JSON Lines cohort.
pub fn load_cohort(path: &Path, table: &CharlsonWeightTable) -> Result<Vec<PatientHistory>> {
    let file = File::open(path).map_err(|e| Error::File { path: path.to_path_buf(), source: e })?;
    let histories = read_jsonl(BufReader::new(file))
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    for h in &histories {
        h.validate(Some(table))?;
    }
    Ok(histories)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::File { path: path.to_path_buf(), source: e })?;
    TrainedModel::from_json(&s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::File { path: dir.to_path_buf(), source: e })?;
    }
    let f = File::create(path).map_err(|e| Error::File { path: path.to_path_buf(), source: e })?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

/// Column indices for a feature filter; empty selects every column.
pub fn select_columns(names: &[String], filter: &[String]) -> Result<Vec<usize>> {
    if filter.is_empty() {
        return Ok((0..names.len()).collect());
    }
    filter
        .iter()
        .map(|f| {
            names.iter().position(|n| n == f).ok_or_else(|| Error::UnknownFeature { name: f.clone(), valid: names.join(", ") })
        })
        .collect()
}

/// Seeded sample (without replacement) of at most `size` instances.
pub fn sample_background(mut pool: Vec<Instance>, size: usize, seed: u64) -> Vec<Instance> {
    pool.shuffle(&mut stream_rng(seed, 1));
    pool.truncate(size);
    pool
}

/// Shapley attributions for each target over the selected columns; the
/// other columns stay at the target's own values.
pub fn explain_instances(
    scorer: &dyn Scorer,
    targets: &[Instance],
    background: &[Instance],
    names: &[String],
    columns: &[usize],
    explain: &ExplainConfig,
) -> Result<Vec<ShapExplanation>> {
    let mode = match explain.mode {
        ShapModeChoice::Exact => ShapMode::Exact,
        ShapModeChoice::MonteCarlo => ShapMode::MonteCarlo { n_samples: explain.n_samples },
        ShapModeChoice::Auto if columns.len() <= MAX_EXACT_FEATURES => ShapMode::Exact,
        ShapModeChoice::Auto => ShapMode::MonteCarlo { n_samples: explain.n_samples },
    };
    let selected: Vec<String> = columns.iter().map(|&c| names[c].clone()).collect();
    targets
        .iter()
        .take(explain.max_instances)
        .enumerate()
        .map(|(i, target)| {
            let sub = ColumnSubsetScorer { inner: scorer, anchor: target, columns };
            let bg: Vec<Instance> = background.iter().map(|b| sub.project(b)).collect();
            shap_values(&sub, &sub.project(target), &bg, &selected, mode, derive_seed(explain.seed, i as u64))
        })
        .collect()
}

fn write_shap_ranking<W: Write>(writer: W, explanations: &[ShapExplanation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["rank", "feature", "mean_abs_attribution", "mean_attribution"]).map_err(io)?;
    let names = explanations.first().map(|e| e.feature_names.clone()).unwrap_or_default();
    let n = explanations.len().max(1) as f64;
    let mut rows: Vec<(String, f64, f64)> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let abs = explanations.iter().map(|e| e.attributions[k].abs()).sum::<f64>() / n;
            let mean = explanations.iter().map(|e| e.attributions[k]).sum::<f64>() / n;
            (name.clone(), abs, mean)
        })
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (rank, (name, abs, mean)) in rows.into_iter().enumerate() {
        w.write_record([(rank + 1).to_string(), name, abs.to_string(), mean.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationDocument {
    pub schema_version: u32,
    pub n_instances: usize,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapDocument {
    pub schema_version: u32,
    pub explanations: Vec<ShapExplanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub n_features: usize,
    pub report: EvaluationReport,
}

/// Mean AUC with its interval for every feature-layout variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema_version: u32,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record([
            "variant",
            "model",
            "n_features",
            "n_repeats",
            "auc_mean",
            "auc_ci_low",
            "auc_ci_high",
            "precision_top_decile_mean",
            "recall_top_decile_mean",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let a = &r.report.aggregates;
            w.write_record([
                r.variant.name.clone(),
                r.report.model.clone(),
                r.n_features.to_string(),
                r.report.repeats.len().to_string(),
                a.auc.mean.to_string(),
                opt(a.auc.ci_low),
                opt(a.auc.ci_high),
                a.precision_top_decile.mean.to_string(),
                a.recall_top_decile.mean.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
