//! `mvc`: generate multi-view data, train, cross-validate, run ablations and
//! probe embeddings with a weighted KNN classifier.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvc_core::dataset::{
    fingerprint, generate_synthetic, load_manifest, save_manifest, FeatureFormat, LesionRecord,
};
use mvc_core::evaluation::log_spaced_ks;
use mvc_core::report;
use mvc_core::tensor::EncoderParams;
use mvc_core::trainer::{
    compare_methods, knn_probe, run_ablation, train_one_fold, AblationAxis, ComparisonTable,
    Method, RunResult, TrainConfig,
};
use mvc_core::{Error, Result};
use serde::{Deserialize, Serialize};

use config::{base_synth_config, base_train_config, parse_list, parse_pair, ConfigFile};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "mvc",
    version,
    about = "Multi-view contrastive representation learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset (manifest + feature files).
    GenData(GenDataArgs),
    /// Train one encoder on a whole dataset and save it.
    Train(TrainArgs),
    /// Lesion-level k-fold cross-validation of one or more methods.
    Crossval(CrossvalArgs),
    /// Cross-validate along an ablation axis.
    Ablate(AblateArgs),
    /// Weighted KNN AUC of a trained encoder's embeddings over a k grid.
    KnnProbe(KnnProbeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Lesions per class, `N` or `BENIGN:MALIGNANT`.
    #[arg(long)]
    lesions_per_class: Option<String>,
    /// Views per lesion, `MIN:MAX`.
    #[arg(long)]
    views: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    view_dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    /// Per-view Gaussian noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Largest view rotation angle in radians.
    #[arg(long)]
    max_view_angle: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Training hyperparameters shared by every training command.
#[derive(Debug, Args, Clone)]
struct TrainFlags {
    /// Dataset directory or manifest CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Lesions per mini-batch.
    #[arg(long)]
    groups: Option<usize>,
    /// Views per lesion in a mini-batch.
    #[arg(long)]
    views_per_group: Option<usize>,
    #[arg(long)]
    aug_noise: Option<f64>,
    #[arg(long)]
    aug_dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use one augmentation per image; anchors and candidates coincide.
    #[arg(long)]
    single_view: bool,
    /// Divide each anchor's positive sum by its positive count.
    #[arg(long)]
    normalize_positives: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// KNN probe k values, comma separated.
    #[arg(long)]
    knn_k: Option<String>,
    #[arg(long)]
    knn_temperature: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    train: TrainFlags,
    /// Pair variant or `baseline`.
    #[arg(long, default_value = "LR")]
    variant: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[command(flatten)]
    train: TrainFlags,
    /// Comma-separated methods: baseline, LR, IR, LR-SC, LR-DC, LR-.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Alpha,
    Negatives,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Alpha grid for `--axis alpha`, comma separated.
    #[arg(long)]
    alphas: Option<String>,
    /// Variant used on the alpha axis.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KnnProbeArgs {
    /// Model file written by `mvc train`.
    #[arg(long)]
    model: PathBuf,
    /// Reference (neighbour) dataset.
    #[arg(long)]
    data: PathBuf,
    /// Query dataset; defaults to the reference dataset.
    #[arg(long)]
    query_data: Option<PathBuf>,
    /// k values, comma separated. Defaults to 1, 2, 5, ... up to 200.
    #[arg(long)]
    k: Option<String>,
    #[arg(long, default_value_t = 0.07)]
    knn_temperature: f64,
    /// Output directory; the CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Saved encoder with the configuration and data that produced it.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    method: String,
    config: TrainConfig,
    dataset_fingerprint: String,
    params: EncoderParams,
}

const MODEL_FORMAT: &str = "mvc-model-v1";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Crossval(a) => cmd_crossval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::KnnProbe(a) => cmd_knn_probe(a),
    }
}

fn load_config_file(path: Option<&Path>) -> Result<ConfigFile> {
    path.map(ConfigFile::load)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let mut manifest = RunManifest::start("gen-data");
    let file = load_config_file(a.config.as_deref())?;
    let mut c = base_synth_config(&file)?;
    if let Some(v) = &a.lesions_per_class {
        c.lesions_per_class = parse_pair("lesions-per-class", v)?;
    }
    if let Some(v) = &a.views {
        c.views_per_lesion = parse_pair("views", v)?;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.latent_dim {
        c.latent_dim = v;
    }
    if let Some(v) = a.view_dim {
        c.view_dim = v;
    }
    if let Some(v) = a.separation {
        c.class_separation = v;
    }
    if let Some(v) = a.noise {
        c.view_noise_sigma = v;
    }
    if let Some(v) = a.max_view_angle {
        c.max_view_angle = v;
    }
    let format = match a.format {
        Some(Format::Binary) => FeatureFormat::Binary,
        Some(Format::Text) => FeatureFormat::Text,
        None => match file.values.get("format").map(String::as_str) {
            Some("binary") => FeatureFormat::Binary,
            Some("text") | None => FeatureFormat::Text,
            Some(other) => return Err(Error::Config(format!("unknown feature format {other:?}"))),
        },
    };
    let records = generate_synthetic(&c)?;
    create_dir(&a.out)?;
    let path = save_manifest(&records, &a.out, format)?;
    manifest.config = serde_json::json!({ "synth": c, "format": format });
    manifest.dataset_fingerprint = Some(fingerprint(&records));
    manifest.outputs.push(path.display().to_string());
    manifest.finish(&a.out)?;
    println!(
        "wrote {} lesions ({} views) to {}",
        records.len(),
        mvc_core::dataset::total_views(&records),
        path.display()
    );
    Ok(())
}

/// Resolves the training config (defaults < MVC_SEED < config file < flags),
/// plus the config file's `folds` value.
fn resolve_train(flags: &TrainFlags) -> Result<(TrainConfig, Option<usize>)> {
    let file = load_config_file(flags.config.as_deref())?;
    let (mut c, folds) = base_train_config(&file)?;
    macro_rules! flag {
        ($opt:expr => $($field:ident).+) => {
            if let Some(v) = $opt {
                c.$($field).+ = v;
            }
        };
    }
    flag!(flags.alpha => alpha);
    flag!(flags.temperature => temperature);
    flag!(flags.epochs => epochs);
    flag!(flags.lr => base_lr);
    flag!(flags.groups => batch.groups_per_batch);
    flag!(flags.views_per_group => batch.views_per_group);
    flag!(flags.aug_noise => augment.noise_sigma);
    flag!(flags.aug_dropout => augment.dropout_prob);
    flag!(flags.seed => seed);
    flag!(flags.embed_dim => embed_dim);
    flag!(flags.threshold => threshold);
    flag!(flags.knn_temperature => knn_temperature);
    if flags.single_view {
        c.dual_view = false;
    }
    if flags.normalize_positives {
        c.normalize_positives = true;
    }
    if let Some(v) = &flags.hidden {
        c.hidden = parse_list("hidden", v)?;
    }
    if let Some(v) = &flags.knn_k {
        c.knn_ks = parse_list("knn-k", v)?;
    }
    c.validate()?;
    Ok((c, folds))
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = s
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::Config("no method given".into()));
    }
    Ok(methods)
}

fn load_data(path: &Path) -> Result<Vec<LesionRecord>> {
    load_manifest(path)
}

fn slug(label: &str) -> String {
    label
        .replace("(-)", "-minus")
        .replace("(-", "-minus-")
        .replace(')', "")
        .chars()
        .map(|c| match c {
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => c.to_ascii_lowercase(),
            _ => '_',
        })
        .collect()
}

/// Writes `runs/<slug>/{run.json, run.txt, fold_<i>.json, knn.csv}` per row,
/// then the comparison table as JSON and text.
fn write_table(out: &Path, table: &ComparisonTable, manifest: &mut RunManifest) -> Result<()> {
    create_dir(out)?;
    let reference = serde_json::json!({ "manifest": manifest::MANIFEST_FILE });
    for row in &table.rows {
        let dir = out.join("runs").join(slug(&row.label));
        create_dir(&dir)?;
        write_run(&dir, row, &reference, manifest)?;
    }
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "manifest": manifest::MANIFEST_FILE,
        "table": table,
    }))?;
    let json_path = out.join("comparison.json");
    write_file(&json_path, json)?;
    let text_path = out.join("comparison.txt");
    write_file(
        &text_path,
        format!(
            "{}\nmanifest: {}\n",
            report::comparison_text(table),
            manifest::MANIFEST_FILE
        ),
    )?;
    manifest.outputs.push(json_path.display().to_string());
    manifest.outputs.push(text_path.display().to_string());
    Ok(())
}

fn write_run(
    dir: &Path,
    run: &RunResult,
    reference: &serde_json::Value,
    manifest: &mut RunManifest,
) -> Result<()> {
    let mut written = Vec::new();
    let run_path = dir.join("run.json");
    let doc = serde_json::json!({ "manifest": reference["manifest"], "result": run });
    write_file(&run_path, serde_json::to_string_pretty(&doc)?)?;
    written.push(run_path);
    for f in &run.folds {
        let p = dir.join(format!("fold_{}.json", f.fold));
        write_file(&p, report::metrics_json(&f.metrics)?)?;
        written.push(p);
    }
    let text = dir.join("run.txt");
    write_file(
        &text,
        format!(
            "{}\nmanifest: {}\n",
            report::run_text(run),
            manifest::MANIFEST_FILE
        ),
    )?;
    written.push(text);
    let knn = dir.join("knn.csv");
    write_file(&knn, report::knn_csv(&run.knn_mean))?;
    written.push(knn);
    manifest
        .outputs
        .extend(written.iter().map(|p| p.display().to_string()));
    Ok(())
}

fn default_out(name: &str) -> PathBuf {
    PathBuf::from("runs").join(name)
}

fn cmd_crossval(a: CrossvalArgs) -> Result<()> {
    let mut manifest = RunManifest::start("crossval");
    let (mut config, file_folds) = resolve_train(&a.train)?;
    let methods = match &a.variant {
        Some(v) => parse_methods(v)?,
        None => vec![Method::Contrastive(config.variant)],
    };
    if let [Method::Contrastive(v)] = methods.as_slice() {
        config.variant = *v;
    }
    let folds = a.folds.or(file_folds).unwrap_or(5);
    let records = load_data(&a.train.data)?;
    let table = compare_methods(&records, &config, &methods, folds)?;
    let out = a.out.unwrap_or_else(|| default_out("crossval"));
    manifest.config = serde_json::json!({
        "train": config,
        "methods": methods.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "folds": folds,
        "data": a.train.data,
    });
    manifest.dataset_fingerprint = Some(fingerprint(&records));
    write_table(&out, &table, &mut manifest)?;
    manifest.finish(&out)?;
    print!("{}", report::comparison_text(&table));
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mut manifest = RunManifest::start("ablate");
    let (mut config, file_folds) = resolve_train(&a.train)?;
    if let Some(v) = &a.variant {
        config.variant = v.parse()?;
    }
    let axis = match a.axis {
        Axis::Negatives => AblationAxis::Negatives,
        Axis::Alpha => match &a.alphas {
            Some(v) => AblationAxis::Alpha(parse_list("alphas", v)?),
            None => AblationAxis::default_alpha(),
        },
    };
    let folds = a.folds.or(file_folds).unwrap_or(5);
    let records = load_data(&a.train.data)?;
    let table = run_ablation(&records, &config, &axis, folds)?;
    let out = a.out.unwrap_or_else(|| default_out("ablate"));
    manifest.config = serde_json::json!({
        "train": config,
        "axis": axis,
        "folds": folds,
        "data": a.train.data,
    });
    manifest.dataset_fingerprint = Some(fingerprint(&records));
    write_table(&out, &table, &mut manifest)?;
    manifest.finish(&out)?;
    print!("{}", report::comparison_text(&table));
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::start("train");
    let (config, _) = resolve_train(&a.train)?;
    let method: Method = a.variant.parse()?;
    let config = method.apply(&config);
    let records = load_data(&a.train.data)?;
    let model = train_one_fold(&records, &config)?;
    create_dir(&a.out)?;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        method: method.to_string(),
        config: config.clone(),
        dataset_fingerprint: fingerprint(&records),
        params: model.params,
    };
    let model_path = a.out.join("model.json");
    write_file(&model_path, serde_json::to_string(&file)?)?;
    let mut curve = String::from("epoch,joint,classification,contrastive\n");
    for e in &model.loss_curve {
        curve.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.joint, e.classification, e.contrastive
        ));
    }
    let curve_path = a.out.join("loss_curve.csv");
    write_file(&curve_path, curve)?;
    manifest.config =
        serde_json::json!({ "train": config, "method": method.to_string(), "data": a.train.data });
    manifest.dataset_fingerprint = Some(file.dataset_fingerprint.clone());
    manifest.outputs.push(model_path.display().to_string());
    manifest.outputs.push(curve_path.display().to_string());
    manifest.finish(&a.out)?;
    if let Some(last) = model.loss_curve.last() {
        println!(
            "trained {} for {} epochs; final joint loss {:.6}",
            method, config.epochs, last.joint
        );
    }
    println!("model written to {}", model_path.display());
    Ok(())
}

fn cmd_knn_probe(a: KnnProbeArgs) -> Result<()> {
    let mut manifest = RunManifest::start("knn-probe");
    let text = fs::read_to_string(&a.model).map_err(|e| Error::Io {
        path: a.model.clone(),
        source: e,
    })?;
    let model: ModelFile = serde_json::from_str(&text)?;
    if model.format != MODEL_FORMAT {
        return Err(Error::Parse(format!(
            "unsupported model format {:?}",
            model.format
        )));
    }
    let reference = load_data(&a.data)?;
    let queries = match &a.query_data {
        Some(p) => load_data(p)?,
        None => reference.clone(),
    };
    let n_ref: usize = mvc_core::dataset::total_views(&reference);
    let ks = match &a.k {
        Some(v) => {
            let ks: Vec<usize> = parse_list("k", v)?;
            if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n_ref) {
                return Err(Error::Config(format!(
                    "k = {k} outside 1..={n_ref} reference views"
                )));
            }
            ks
        }
        None => log_spaced_ks(200.min(n_ref)),
    };
    let points = knn_probe(&model.params, &reference, &queries, &ks, a.knn_temperature)?;
    let csv = report::knn_csv(&points);
    match &a.out {
        Some(out) => {
            create_dir(out)?;
            let path = out.join("knn.csv");
            write_file(&path, &csv)?;
            manifest.config = serde_json::json!({
                "model": a.model,
                "data": a.data,
                "query_data": a.query_data,
                "ks": ks,
                "knn_temperature": a.knn_temperature,
            });
            manifest.dataset_fingerprint = Some(fingerprint(&reference));
            manifest.outputs.push(path.display().to_string());
            manifest.finish(out)?;
            println!("wrote {} k values to {}", points.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
