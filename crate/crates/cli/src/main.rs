//! Command-line front end: dataset inspection, feature screening, training,
//! cross-validation, prediction, and per-sample explanation.
//!
//! Exit codes: 1 usage or invalid arguments, 2 I/O or parse failures,
//! 3 numeric failures during fitting or evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use rfsc_core::classifier::Classifier;
use rfsc_core::dataset;
use rfsc_core::dcf::{self, DcfMode};
use rfsc_core::harness::{run_cv, train_full, CvParams, TrainedFold};
use rfsc_core::rfsc::{IterationTrace, MuInit};
use rfsc_core::Error;

#[derive(Parser)]
#[command(name = "rfsc", version, about = "Feature-selecting polynomial classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset shape, classes, and per-feature ranges
    Inspect(CommonArgs),
    /// Screen features per class with the distance-correlation test
    Dcf(CommonArgs),
    /// Train one classifier on the full dataset and save the model artifact
    Train(CommonArgs),
    /// Stratified cross-validation with repeated selection per fold
    Cv(CommonArgs),
    /// Predict labels for a data file using a saved model
    Predict(PredictArgs),
    /// Break per-sample scores into supporting and opposing contributions
    Explain(ExplainArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Input data file (delimited text, label in the last column)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional JSON config; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum monomial degree
    #[arg(long)]
    degree: Option<usize>,
    /// Models sampled per iteration
    #[arg(long)]
    population: Option<usize>,
    /// Iteration cap for the selection loop
    #[arg(long)]
    iterations: Option<usize>,
    /// Convergence threshold on inclusion-probability updates
    #[arg(long)]
    epsilon: Option<f64>,
    /// Confidence level of the significance test
    #[arg(long)]
    alpha: Option<f64>,
    /// Significance level of the feature screening test
    #[arg(long)]
    alpha_d: Option<f64>,
    /// Feature screening: on, off, or auto (on past 15 features)
    #[arg(long, value_parser = parse_dcf)]
    dcf: Option<DcfMode>,
    /// Initial inclusion probability: "auto" (1/N_r) or a value in (0,1)
    #[arg(long = "mu-init", value_parser = parse_mu_init)]
    mu_init: Option<MuInit>,
    /// Master random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
    /// Selection repeats per fold (best kept)
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: timestamped)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model artifact
    #[arg(long)]
    model: PathBuf,
    /// Rows to classify, with or without a trailing label column
    #[arg(long)]
    data: PathBuf,
    /// Output directory (default: timestamped)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Saved model artifact
    #[arg(long)]
    model: PathBuf,
    /// Rows to explain, with or without a trailing label column
    #[arg(long)]
    data: PathBuf,
    /// Class model to decompose (default: the predicted class)
    #[arg(long)]
    class: Option<usize>,
    /// Output directory (default: timestamped)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_dcf(s: &str) -> Result<DcfMode, String> {
    match s {
        "on" => Ok(DcfMode::On),
        "off" => Ok(DcfMode::Off),
        "auto" => Ok(DcfMode::Auto),
        other => Err(format!("expected on, off, or auto, got {other}")),
    }
}

fn parse_mu_init(s: &str) -> Result<MuInit, String> {
    if s == "auto" {
        return Ok(MuInit::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(MuInit::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a value in (0,1), got {s}")),
    }
}

/// Config-file counterpart of the common flags. Field names match the flags.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    degree: Option<usize>,
    population: Option<usize>,
    iterations: Option<usize>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    alpha_d: Option<f64>,
    dcf: Option<String>,
    mu_init: Option<MuInitValue>,
    seed: Option<u64>,
    folds: Option<usize>,
    repeats: Option<usize>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MuInitValue {
    Fixed(f64),
    Policy(String),
}

/// Fully resolved run settings: defaults, then config file, then flags.
struct Resolved {
    data: Option<PathBuf>,
    params: CvParams,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

fn resolve(args: &CommonArgs) -> Result<Resolved, Error> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let display = path.display().to_string();
            let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::parse(&display, e.line(), e.to_string()))?
        }
        None => FileConfig::default(),
    };
    let file_dcf = match file.dcf.as_deref() {
        None => None,
        Some(s) => Some(parse_dcf(s).map_err(Error::InvalidArgument)?),
    };
    let file_mu = match file.mu_init {
        None => None,
        Some(MuInitValue::Policy(s)) => Some(parse_mu_init(&s).map_err(Error::InvalidArgument)?),
        Some(MuInitValue::Fixed(v)) => {
            Some(parse_mu_init(&v.to_string()).map_err(Error::InvalidArgument)?)
        }
    };

    let mut params = CvParams::default();
    params.max_degree = args.degree.or(file.degree).unwrap_or(params.max_degree);
    params.dcf = args.dcf.or(file_dcf).unwrap_or(params.dcf);
    params.alpha_d = args.alpha_d.or(file.alpha_d).unwrap_or(params.alpha_d);
    params.n_folds = args.folds.or(file.folds).unwrap_or(params.n_folds);
    params.n_repeats = args.repeats.or(file.repeats).unwrap_or(params.n_repeats);
    let r = &mut params.rfsc;
    r.n_population = args.population.or(file.population).unwrap_or(r.n_population);
    r.max_iterations = args.iterations.or(file.iterations).unwrap_or(r.max_iterations);
    r.epsilon = args.epsilon.or(file.epsilon).unwrap_or(r.epsilon);
    r.mu_init = args.mu_init.or(file_mu).unwrap_or(r.mu_init);
    r.seed = args.seed.or(file.seed).unwrap_or(r.seed);
    r.fit.alpha = args.alpha.or(file.alpha).unwrap_or(r.fit.alpha);
    params.validate()?;

    Ok(Resolved {
        data: args.data.clone().or(file.data),
        params,
        jobs: args.jobs.or(file.jobs),
        out: args.out.clone().or(file.out),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not failures
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::InvalidArgument(_) => 1,
                Error::Io { .. } | Error::Parse { .. } => 2,
                Error::Numeric(_) | Error::Model(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Inspect(args) => cmd_inspect(&args),
        Command::Dcf(args) => cmd_dcf(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Cv(args) => cmd_cv(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Explain(args) => cmd_explain(&args),
    }
}

fn require_data(r: &Resolved) -> Result<&PathBuf, Error> {
    r.data
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--data is required".into()))
}

fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Creates the output directory, a timestamped default unless overridden.
fn out_dir(explicit: Option<&Path>, mode: &str) -> Result<PathBuf, Error> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => {
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from(format!("rfsc-{mode}-{stamp}"))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_inspect(args: &CommonArgs) -> Result<(), Error> {
    let r = resolve(args)?;
    let path = require_data(&r)?;
    let raw = dataset::load(path)?;
    println!(
        "{}: {} samples, {} features, {} classes",
        path.display(),
        raw.n_samples(),
        raw.n_features(),
        raw.n_classes()
    );
    for (i, name) in raw.label_names.iter().enumerate() {
        let count = raw.labels.iter().filter(|&&l| l == i + 1).count();
        println!("  class {} ({name}): {count} samples", i + 1);
    }
    for (p, name) in raw.feature_names.iter().enumerate() {
        let col: Vec<f64> = raw.features.iter().map(|row| row[p]).collect();
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("  {name}: min {min}, max {max}");
    }
    Ok(())
}

fn cmd_dcf(args: &CommonArgs) -> Result<(), Error> {
    let r = resolve(args)?;
    let path = require_data(&r)?;
    let raw = dataset::load(path)?;
    let ds = dataset::normalize(&raw);
    let dir = out_dir(r.out.as_deref(), "dcf")?;

    let class_ids: Vec<usize> = if raw.n_classes() == 2 {
        vec![1]
    } else {
        (1..=raw.n_classes()).collect()
    };
    for class_id in class_ids {
        let targets = dataset::recode(&ds.labels, class_id);
        let result = dcf::filter_features(&ds, &targets, r.params.alpha_d)?;
        let mut table = String::from("feature,name,statistic,threshold,kept\n");
        for (p, stat) in result.statistics.iter().enumerate() {
            let kept = result.kept.contains(&(p as u32));
            table.push_str(&format!(
                "{},{},{},{},{}\n",
                p + 1,
                raw.feature_names[p],
                stat,
                result.threshold,
                kept
            ));
        }
        let file = dir.join(format!("dcf_class{class_id}.csv"));
        write_file(&file, &table)?;
        println!(
            "class {class_id}: kept {}/{} features (alpha_d {}), report {}",
            result.kept.len(),
            raw.n_features(),
            r.params.alpha_d,
            file.display()
        );
    }
    Ok(())
}

fn trace_csv(traces: &[IterationTrace]) -> String {
    let mut text = String::from("iteration,J_mean,J_max,gamma,ams_pre,ams_post,n_mu_above_half\n");
    for t in traces {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.iteration, t.j_mean, t.j_max, t.gamma, t.ams_pre, t.ams_post, t.n_mu_above_half
        ));
    }
    text
}

fn describe(trained: &TrainedFold) {
    for cm in &trained.classifier.models {
        println!(
            "  class {}: {} regressors over {} features, training J {:.4}",
            cm.class_id,
            cm.model.len(),
            cm.kept_features.len(),
            cm.model.j
        );
    }
    let (n_a, n_r) = trained.classifier.model_size_report();
    println!("  model uses {n_a} attributes, {n_r} distinct regressors");
}

fn cmd_train(args: &CommonArgs) -> Result<(), Error> {
    let r = resolve(args)?;
    let path = require_data(&r)?;
    configure_jobs(r.jobs);
    let raw = dataset::load(path)?;
    let dir = out_dir(r.out.as_deref(), "train")?;

    let trained = train_full(&raw, &r.params)?;
    let model_path = dir.join("model.json");
    trained.classifier.save(&model_path)?;
    for (class_id, traces) in &trained.traces {
        write_file(&dir.join(format!("trace_class{class_id}.csv")), &trace_csv(traces))?;
    }
    println!("trained on {} ({} samples)", path.display(), raw.n_samples());
    describe(&trained);
    println!("model written to {}", model_path.display());
    Ok(())
}

fn cmd_cv(args: &CommonArgs) -> Result<(), Error> {
    let r = resolve(args)?;
    let path = require_data(&r)?;
    configure_jobs(r.jobs);
    let raw = dataset::load(path)?;
    let dir = out_dir(r.out.as_deref(), "cv")?;

    let report = run_cv(&raw, &r.params)?;

    // machine-readable report; wall times stay on stdout so the file is
    // byte-identical across reruns with one seed
    let mut csv = String::from("fold,best_repeats,accuracy,kappa,n_attributes,n_regressors,n_test\n");
    for f in &report.folds {
        let repeats = f
            .best_repeats
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join("+");
        let kappa = f.kappa.map(|k| k.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.fold, repeats, f.accuracy, kappa, f.n_attributes, f.n_regressors, f.n_test
        ));
    }
    let kappa_mean = report.kappa_mean.map(|k| k.to_string()).unwrap_or_default();
    csv.push_str(&format!(
        "mean,,{},{},{},{},\n",
        report.accuracy_mean, kappa_mean, report.attributes_mean, report.regressors_mean
    ));
    let file = dir.join("cv_report.csv");
    write_file(&file, &csv)?;

    println!(
        "{}-fold cross-validation on {} ({} repeats per fold, seed {})",
        r.params.n_folds,
        path.display(),
        r.params.n_repeats,
        r.params.rfsc.seed
    );
    println!("fold  accuracy   kappa    n_attr  n_reg   time");
    for f in &report.folds {
        let kappa = f
            .kappa
            .map(|k| format!("{k:+.4}"))
            .unwrap_or_else(|| "   --  ".into());
        println!(
            "{:>4}  {:.4}    {kappa}  {:>5}  {:>5}   {:.1}s",
            f.fold, f.accuracy, f.n_attributes, f.n_regressors, f.wall_time_s
        );
    }
    let kappa = report
        .kappa_mean
        .map(|k| format!("{k:+.4}"))
        .unwrap_or_else(|| "   --  ".into());
    println!(
        "mean  {:.4}    {kappa}  {:>5.1}  {:>5.1}",
        report.accuracy_mean, report.attributes_mean, report.regressors_mean
    );
    println!("report written to {}", file.display());
    Ok(())
}

/// Rows read for prediction: features plus the label tokens when the file
/// carries one more column than the model expects.
struct PredictRows {
    features: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

fn read_rows(path: &Path, n_features: usize) -> Result<PredictRows, Error> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut features = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c == '\t' || c == ' ')
            .filter(|f| !f.is_empty())
            .collect();
        // a non-numeric first row is a header; only the fields that must be
        // numeric count, so string labels in the last column stay data
        let expect = if fields.len() == n_features + 1 {
            n_features
        } else {
            fields.len()
        };
        if width.is_none() && fields[..expect].iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let w = *width.get_or_insert(fields.len());
        if fields.len() != w {
            return Err(Error::parse(
                &display,
                idx + 1,
                format!("expected {w} fields, found {}", fields.len()),
            ));
        }
        let n_numeric = if w == n_features + 1 { n_features } else { w };
        let mut row = Vec::with_capacity(n_numeric);
        for f in &fields[..n_numeric] {
            row.push(f.parse::<f64>().map_err(|_| {
                Error::parse(&display, idx + 1, format!("not a number: {f}"))
            })?);
        }
        features.push(row);
        if w == n_features + 1 {
            labels.push(fields[n_features].to_string());
        }
    }
    let width = width.ok_or_else(|| Error::parse(&display, 1, "no data rows"))?;
    if width != n_features && width != n_features + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} has {width} columns, model expects {n_features} features (plus optional label)",
            path.display()
        )));
    }
    Ok(PredictRows {
        features,
        labels: (width == n_features + 1).then_some(labels),
    })
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Error> {
    let clf = Classifier::load(&args.model)?;
    let rows = read_rows(&args.data, clf.n_features())?;
    let dir = out_dir(args.out.as_deref(), "predict")?;

    let mut csv = String::from("row,label");
    for cm in &clf.models {
        csv.push_str(&format!(",score_class{}", cm.class_id));
    }
    csv.push('\n');
    let mut correct = 0usize;
    for (i, row) in rows.features.iter().enumerate() {
        let (class, scores) = clf.predict(row)?;
        let name = &clf.label_names[class - 1];
        csv.push_str(&format!("{},{}", i + 1, name));
        for s in &scores {
            csv.push_str(&format!(",{s}"));
        }
        csv.push('\n');
        if let Some(labels) = &rows.labels {
            if labels[i] == *name {
                correct += 1;
            }
        }
    }
    let file = dir.join("predictions.csv");
    write_file(&file, &csv)?;
    println!(
        "predicted {} rows with {}",
        rows.features.len(),
        args.model.display()
    );
    if rows.labels.is_some() {
        let acc = correct as f64 / rows.features.len() as f64;
        println!("accuracy {acc:.4} ({correct}/{})", rows.features.len());
    }
    println!("predictions written to {}", file.display());
    Ok(())
}

fn cmd_explain(args: &ExplainArgs) -> Result<(), Error> {
    let clf = Classifier::load(&args.model)?;
    let rows = read_rows(&args.data, clf.n_features())?;
    let dir = out_dir(args.out.as_deref(), "explain")?;

    let mut csv = String::from("row,class,score,y_plus,y_minus,delta\n");
    for (i, row) in rows.features.iter().enumerate() {
        let (class_id, model_class) = match args.class {
            Some(c) => (c, c),
            None => {
                let predicted = clf.predict(row)?.0;
                // binary problems carry one model; its score sign makes the
                // call for both classes
                let m = if clf.models.len() == 1 {
                    clf.models[0].class_id
                } else {
                    predicted
                };
                (predicted, m)
            }
        };
        let e = clf.explain(row, model_class)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            class_id,
            e.score,
            e.y_plus,
            e.y_minus,
            e.delta
        ));
    }
    let file = dir.join("explanations.csv");
    write_file(&file, &csv)?;
    println!(
        "explained {} rows with {}",
        rows.features.len(),
        args.model.display()
    );
    println!("table written to {}", file.display());
    Ok(())
}
