//! Subcommand bodies. Each validates and loads all inputs before it creates
//! the output directory, so a rejected run leaves nothing behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cftc::corpus::{
    compute_cooccurrence, format_dataset, generate_synthetic, load_dataset, matrix_csv, tokenize, Corpus,
    CooccurrenceMatrix, LoadOptions, Split, SyntheticSpec,
};
use cftc::evaluation::{cooccurrence_bias_report, evaluate, intervene as run_intervention};
use cftc::network::Branch;
use cftc::training::{format_log, load_checkpoint, save_checkpoint, train as fit, TrainedModel, TrainingConfig};

use crate::error::{CliError, CliResult};
use crate::manifest::{config_map, InputRecord, OutputDir, RunManifest};
use crate::plot::save_heatmap;
use crate::{BiasArgs, EvalArgs, InterveneArgs, SynthArgs, TrainArgs};

/// A directory stands for its conventional split file.
fn resolve_data(path: &Path, split_file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(split_file)
    } else {
        path.to_path_buf()
    }
}

pub fn synth(args: SynthArgs) -> CliResult<()> {
    let (mut spec, inputs) = match &args.config {
        Some(p) => (SyntheticSpec::read(p)?, vec![InputRecord::hash_file("spec", p)?]),
        None => (SyntheticSpec::shortcut_benchmark(0), Vec::new()),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec)?;
    let names = data.train.labels.names();
    let artifacts = [
        ("train.tsv", format_dataset(&data.train)),
        ("test.tsv", format_dataset(&data.test)),
        ("cooc_true_train.csv", matrix_csv(names, compute_cooccurrence(&data.train).view())),
        ("cooc_true_test.csv", matrix_csv(names, data.true_test_cooccurrence.view())),
    ];

    let manifest = RunManifest::new("synth", config_map(&spec.to_kv_string())?, inputs, spec.seed);
    let out = OutputDir::create(&args.out, manifest, &artifacts.each_ref().map(|(n, _)| *n))?;
    for (name, contents) in &artifacts {
        out.write(name, contents)?;
    }
    println!(
        "wrote {} training and {} test documents over {} labels to {}",
        data.train.len(),
        data.test.len(),
        names.len(),
        args.out.display()
    );
    Ok(())
}

fn training_config(args: &TrainArgs) -> CliResult<TrainingConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainingConfig::read(p)?,
        None => TrainingConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(mode) = args.encoder_mode {
        cfg.encoder_mode = mode;
    }
    if let Some(selection) = args.selection {
        cfg.selection = selection;
    }
    cfg.disable_mask |= args.no_mask;
    cfg.disable_debias |= args.no_debias;
    cfg.validate()?;
    Ok(cfg)
}

const TRAIN_OUTPUTS: [&str; 4] = ["model.ckpt", "training_log.csv", "cooc_raw.csv", "cooc_normalized.csv"];

pub fn train(args: TrainArgs) -> CliResult<()> {
    let cfg = training_config(&args)?;
    let data_path = resolve_data(&args.data, "train.tsv");
    let opts = LoadOptions { max_len: cfg.model.max_len, ..LoadOptions::default() };
    let corpus = load_dataset(&data_path, Split::Train, &opts)?;
    let cooc = CooccurrenceMatrix::from_corpus(&corpus);

    let mut inputs = vec![InputRecord::hash_file("data", &data_path)?];
    if let Some(p) = &args.config {
        inputs.push(InputRecord::hash_file("config", p)?);
    }
    let manifest = RunManifest::new("train", config_map(&cfg.to_kv_string())?, inputs, cfg.seed);
    let out = OutputDir::create(&args.out, manifest, &TRAIN_OUTPUTS)?;
    let names = corpus.labels.names();
    out.write("cooc_raw.csv", matrix_csv(names, cooc.raw.view()))?;
    out.write("cooc_normalized.csv", matrix_csv(names, cooc.normalized.view()))?;

    log::info!(
        "training on {} documents, {} labels, {} epochs",
        corpus.len(),
        corpus.num_labels(),
        cfg.epochs
    );
    let model = fit(&corpus, &cfg, &cooc)?;
    out.write("training_log.csv", format_log(&model.log))?;
    save_checkpoint(&model, &out.path("model.ckpt")?)?;
    let best = &model.log[model.best_epoch - 1];
    println!(
        "kept epoch {} of {} ({} micro-F1 {:.4} on the {} set); checkpoint in {}",
        model.best_epoch,
        model.log.len(),
        model.headline().name(),
        best.selection_micro_f1,
        cfg.selection.as_str(),
        args.out.display()
    );
    Ok(())
}

/// Loads an evaluation split against the checkpoint's label space. Labels the
/// model has never seen mean the data and checkpoint do not belong together.
fn load_for_model(model: &TrainedModel, path: &Path) -> CliResult<Corpus> {
    let opts = LoadOptions { max_len: model.config.model.max_len, ..LoadOptions::default() };
    let own = load_dataset(path, Split::Train, &opts)?;
    let foreign: Vec<&str> =
        own.labels.names().iter().filter(|n| model.labels.index_of(n).is_none()).map(String::as_str).collect();
    if !foreign.is_empty() {
        return Err(CliError::Integrity(format!(
            "{} uses labels unknown to the checkpoint: {}",
            path.display(),
            foreign.join(",")
        )));
    }
    Ok(load_dataset(path, Split::Test(&model.labels), &opts)?)
}

fn model_config(model: &TrainedModel, data: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut config = config_map(&model.config.to_kv_string())?;
    config.insert("best_epoch".into(), model.best_epoch.to_string());
    config.insert("data".into(), data.display().to_string());
    Ok(config)
}

fn checkpoint_inputs(checkpoint: &Path, data: Option<&Path>) -> CliResult<Vec<InputRecord>> {
    let mut inputs = vec![InputRecord::hash_file("checkpoint", checkpoint)?];
    if let Some(d) = data {
        inputs.push(InputRecord::hash_file("data", d)?);
    }
    Ok(inputs)
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let data_path = resolve_data(&args.data, "test.tsv");
    let corpus = load_for_model(&model, &data_path)?;
    let report = evaluate(&model, &corpus)?;

    let inputs = checkpoint_inputs(&args.checkpoint, Some(&data_path))?;
    let manifest = RunManifest::new("eval", model_config(&model, &data_path)?, inputs, model.config.seed);
    let out = OutputDir::create(&args.out, manifest, &["metrics.txt", "metrics.csv"])?;
    let text = report.to_text();
    out.write("metrics.txt", &text)?;
    out.write("metrics.csv", format!("{}\n{}\n", report.csv_header(), report.csv_row()))?;
    print!("{text}");
    Ok(())
}

const BIAS_TABLES: [(&str, &str); 3] = [("true", "cooc_true"), ("before", "cooc_before"), ("after", "cooc_after")];

pub fn bias(args: BiasArgs) -> CliResult<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let data_path = resolve_data(&args.data, "test.tsv");
    let corpus = load_for_model(&model, &data_path)?;
    let report = cooccurrence_bias_report(&model, &corpus)?;

    let mut outputs: Vec<String> = BIAS_TABLES.iter().map(|(_, stem)| format!("{stem}.csv")).collect();
    outputs.push("distances.csv".into());
    if args.plots {
        outputs.extend(BIAS_TABLES.iter().map(|(_, stem)| format!("{stem}.png")));
    }
    let mut config = model_config(&model, &data_path)?;
    config.insert("plots".into(), args.plots.to_string());
    let inputs = checkpoint_inputs(&args.checkpoint, Some(&data_path))?;
    let manifest = RunManifest::new("bias", config, inputs, model.config.seed);
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let out = OutputDir::create(&args.out, manifest, &names)?;

    let matrices = [&report.truth, &report.before, &report.after];
    for ((_, stem), m) in BIAS_TABLES.iter().zip(matrices) {
        out.write(&format!("{stem}.csv"), matrix_csv(&report.label_names, m.view()))?;
    }
    out.write("distances.csv", report.distances_csv())?;
    if args.plots {
        // one colour scale across the three panels
        let scale = matrices.iter().flat_map(|m| m.iter().copied()).fold(0.0, f64::max);
        for ((_, stem), m) in BIAS_TABLES.iter().zip(matrices) {
            save_heatmap(m.view(), scale, &out.path(&format!("{stem}.png"))?)?;
        }
    }

    println!("documents: {}", report.documents);
    println!("d_before (fused vs truth): {:.6}", report.d_before);
    println!("d_after (de-biased vs truth): {:.6}", report.d_after);
    println!("largest fused over/under-counts:");
    for p in report.top_pairs.iter().take(5) {
        println!(
            "  {} & {}: truth {:.4}  before {:.4}  after {:.4}",
            report.label_names[p.first], report.label_names[p.second], p.truth, p.before, p.after
        );
    }
    Ok(())
}

/// Renders rows as an aligned plain-text table.
fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(cell));
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> =
            cells.iter().zip(&widths).map(|(c, &w)| format!("{c}{}", " ".repeat(w - width(c)))).collect();
        padded.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

const INTERVENTION_HEADER: [&str; 4] = ["Given Labels", "Y_{T*+LI}", "Y_{T+LI}", "Y_cd"];

pub fn intervene(args: InterveneArgs) -> CliResult<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let given = match &args.given {
        None => None,
        Some(field) => Some(model.labels.parse_set(field).map_err(|name| {
            CliError::Input(format!(
                "unknown label {name:?}; valid labels: {}",
                model.labels.names().join(",")
            ))
        })?),
    };
    let tokens = tokenize(&args.text, model.config.model.max_len);
    let bundle = run_intervention(&model, &tokens, given.as_deref())?;
    let row: Vec<String> = std::iter::once(bundle.selected.clone())
        .chain([Branch::Counterfactual, Branch::Fused, Branch::Debiased].map(|b| bundle.predict(b)))
        .map(|set| model.labels.format_set(&set))
        .collect();
    let table = render_table(&INTERVENTION_HEADER, &[row]);

    if let Some(dir) = &args.out {
        let mut config = config_map(&model.config.to_kv_string())?;
        config.insert("text".into(), args.text.clone());
        config.insert("given".into(), args.given.clone().unwrap_or_else(|| "<text prediction>".into()));
        let manifest =
            RunManifest::new("intervene", config, checkpoint_inputs(&args.checkpoint, None)?, model.config.seed);
        let out = OutputDir::create(dir, manifest, &["intervention.txt"])?;
        out.write("intervention.txt", &table)?;
    }
    print!("{table}");
    Ok(())
}
