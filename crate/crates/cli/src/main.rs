use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use uprop::baselines::Method;
use uprop::checkpoint::ModelCheckpoint;
use uprop::config::RunConfig;
use uprop::data::{
    emulate_missing, load_csv, mask_path, save_csv, save_mask_csv, synth_cloud, SynthConfig,
};
use uprop::eval::evaluate_grid;
use uprop::fmt::fmt17;
use uprop::forecaster::{forecast_at, train};
use uprop::novelty::{calibrate_threshold, score_stream, NoveltyKind, NoveltyScore};
use uprop::prob::interval95;
use uprop::{Error, TimeSeries, UPropModel};

#[derive(Parser)]
#[command(
    name = "uprop",
    version,
    about = "Probabilistic forecasting with uncertainty propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cloud-monitoring series, one CSV per node.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Remove cells at random; writes the masked CSV and a `.mask.csv` sidecar.
    Mask {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model, or one model per configured lookahead.
    Train {
        /// CSV file or directory of CSV files.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Single checkpoint path; needs a lookahead from the flag or config.
        #[arg(
            long,
            conflicts_with = "models_dir",
            required_unless_present = "models_dir"
        )]
        model_out: Option<PathBuf>,
        /// Writes `model_k{k}.json` for every lookahead in the config.
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        lookahead: Option<usize>,
    },
    /// Forecast from a time index with 95% intervals, in original units.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Value of the `t` column of the forecast origin.
        #[arg(long)]
        at: i64,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every method on the test split at every missing rate.
    Evaluate {
        #[arg(long)]
        models_dir: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Directory for grid.csv and diff_<method>.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a stream for novelty and flag against a calibrated threshold.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "kl")]
        method: String,
        #[arg(long, default_value_t = 0.99)]
        quantile: f64,
        /// `val` for the validation split of --train-data, or a CSV file/directory.
        #[arg(long, default_value = "val")]
        calibrate_on: String,
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::Range(_)) => 2,
        Some(Error::Checkpoint(_)) => 4,
        Some(_) => 3,
        None => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            nodes,
            steps,
            seed,
        } => cmd_synth(&out, nodes, steps, seed),
        Command::Mask {
            data,
            rate,
            seed,
            out,
        } => cmd_mask(&data, rate, seed, &out),
        Command::Train {
            data,
            config,
            model_out,
            models_dir,
            lookahead,
        } => cmd_train(
            &data,
            &config,
            model_out.as_deref(),
            models_dir.as_deref(),
            lookahead,
        ),
        Command::Forecast {
            model,
            data,
            at,
            horizon,
            format,
            out,
        } => {
            let text = cmd_forecast(&model, &data, at, horizon, format)?;
            emit(out.as_deref(), &text)
        }
        Command::Evaluate {
            models_dir,
            data,
            config,
            out,
        } => cmd_evaluate(&models_dir, &data, &config, &out),
        Command::Detect {
            model,
            data,
            method,
            quantile,
            calibrate_on,
            train_data,
            config,
            format,
            out,
        } => {
            let kind: NoveltyKind = method.parse()?;
            let text = cmd_detect(
                &model,
                &data,
                kind,
                quantile,
                &calibrate_on,
                train_data.as_deref(),
                config.as_deref(),
                format,
            )?;
            emit(out.as_deref(), &text)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(io_as_data),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn io_as_data(e: anyhow::Error) -> anyhow::Error {
    match e.downcast::<std::io::Error>() {
        Ok(io) => Error::Io(io).into(),
        Err(e) => e,
    }
}

/// A CSV file, or every `*.csv` (not `*.mask.csv`) in a directory, by name.
fn load_series(path: &Path) -> Result<Vec<TimeSeries>> {
    if !path.is_dir() {
        return Ok(vec![
            load_csv(path).with_context(|| format!("loading {}", path.display()))?
        ]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(Error::Io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(".mask.csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no CSV files in {}", path.display())).into());
    }
    files
        .iter()
        .map(|f| load_csv(f).with_context(|| format!("loading {}", f.display())))
        .collect()
}

fn load_model(path: &Path) -> Result<UPropModel> {
    let ck = ModelCheckpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(ck.to_model()?)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(Error::Io)
        .with_context(|| format!("creating {}", dir.display()))
}

fn cmd_synth(out: &Path, nodes: usize, steps: usize, seed: u64) -> Result<()> {
    let series = synth_cloud(&SynthConfig { nodes, steps, seed })?;
    create_dir(out)?;
    let width = nodes.saturating_sub(1).to_string().len().max(3);
    for (i, s) in series.iter().enumerate() {
        save_csv(s, out.join(format!("node_{i:0width$}.csv")))?;
    }
    Ok(())
}

fn cmd_mask(data: &Path, rate: f64, seed: u64, out: &Path) -> Result<()> {
    let series = load_csv(data)?;
    let masked = emulate_missing(&series, rate, seed)?;
    save_csv(&masked, out)?;
    save_mask_csv(&masked, mask_path(out))?;
    Ok(())
}

fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt17(*l)));
    }
    s
}

fn loss_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("loss.csv")
}

fn train_one(
    windows: &[TimeSeries],
    cfg: &RunConfig,
    dims: usize,
    k: usize,
    path: &Path,
) -> Result<()> {
    let tc = cfg.train_config(k);
    let (model, history) = train(windows, &cfg.model_config(dims), &tc)?;
    let ck = ModelCheckpoint::from_model(&model, &tc, *history.last().expect("epochs >= 1"));
    ck.save(path)?;
    fs::write(loss_path(path), loss_csv(&history)).map_err(Error::Io)?;
    eprintln!(
        "k={k}: final loss {} -> {}",
        fmt17(ck.final_loss),
        path.display()
    );
    Ok(())
}

fn cmd_train(
    data: &Path,
    config: &Path,
    model_out: Option<&Path>,
    models_dir: Option<&Path>,
    lookahead: Option<usize>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let series = load_series(data)?;
    let dims = cfg.check_dims(&series)?;
    let split = cfg.split_series(&series)?;
    if split.train.is_empty() {
        return Err(Error::Data("training split is empty".into()).into());
    }
    if let Some(path) = model_out {
        let k = lookahead.or(cfg.lookahead).ok_or_else(|| {
            Error::Config("no lookahead: pass --lookahead or set `lookahead` in the config".into())
        })?;
        cfg.train_config(k).validate()?;
        return train_one(&split.train, &cfg, dims, k, path);
    }
    let dir = models_dir.expect("clap requires one of --model-out/--models-dir");
    create_dir(dir)?;
    let ks = match lookahead {
        Some(k) => vec![k],
        None => cfg.lookaheads.clone(),
    };
    for k in ks {
        train_one(
            &split.train,
            &cfg,
            dims,
            k,
            &dir.join(format!("model_k{k}.json")),
        )?;
    }
    Ok(())
}

fn cmd_forecast(
    model: &Path,
    data: &Path,
    at: i64,
    horizon: usize,
    format: Format,
) -> Result<String> {
    let model = load_model(model)?;
    let series = load_csv(data)?;
    let row = at - series.start();
    if row < 0 || row as usize >= series.steps() {
        return Err(Error::Range(format!(
            "--at {at} outside the series (t = {}..={})",
            series.start(),
            series.start() + series.steps() as i64 - 1
        ))
        .into());
    }
    let normalized = model.norm.normalize(&series)?;
    let forecast = forecast_at(&model, &normalized, row as usize, horizon)?;
    let mut rows = Vec::new();
    for (j, b) in forecast.denormalized(&model.norm).iter().enumerate() {
        let (lo, hi) = interval95(b);
        for d in 0..b.dims() {
            rows.push([
                (j + 1) as f64,
                d as f64,
                b.mu()[d],
                b.sigma()[d],
                lo[d],
                hi[d],
            ]);
        }
    }
    let names = ["step", "dim", "mu", "sigma", "lower95", "upper95"];
    let cell = |i: usize, v: f64| {
        if i < 2 {
            (v as usize).to_string()
        } else {
            fmt17(v)
        }
    };
    Ok(match format {
        Format::Csv => {
            let mut s = names.join(",") + "\n";
            for r in &rows {
                s.push_str(
                    &r.iter()
                        .enumerate()
                        .map(|(i, v)| cell(i, *v))
                        .collect::<Vec<_>>()
                        .join(","),
                );
                s.push('\n');
            }
            s
        }
        Format::Json => json_records(
            &names,
            rows.iter()
                .map(|r| r.iter().enumerate().map(|(i, v)| cell(i, *v)).collect()),
        ),
    })
}

/// JSON array of flat objects whose values are already JSON literals.
fn json_records(names: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let body: Vec<String> = rows
        .map(|r| {
            let fields: Vec<String> = names
                .iter()
                .zip(&r)
                .map(|(n, v)| format!("\"{n}\":{v}"))
                .collect();
            format!("  {{{}}}", fields.join(","))
        })
        .collect();
    format!("[\n{}\n]\n", body.join(",\n"))
}

fn cmd_evaluate(models_dir: &Path, data: &Path, config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let mut models = Vec::new();
    for &k in &cfg.lookaheads {
        let path = models_dir.join(format!("model_k{k}.json"));
        models.push((k, load_model(&path)?));
    }
    let series = load_series(data)?;
    let split = cfg.split_series(&series)?;
    if split.test.is_empty() {
        return Err(Error::Data("test split is empty".into()).into());
    }
    let refs: Vec<(usize, &UPropModel)> = models.iter().map(|(k, m)| (*k, m)).collect();
    let grid = evaluate_grid(
        &refs,
        &split.test,
        &cfg.missing_rates,
        &cfg.methods,
        cfg.seed,
        cfg.eval_warmup,
    )?;
    create_dir(out)?;
    fs::write(out.join("grid.csv"), grid.to_csv()).map_err(Error::Io)?;
    for &m in cfg.methods.iter().filter(|m| **m != Method::Uprop) {
        let table = grid.difference_csv(m).expect("uprop is always evaluated");
        fs::write(out.join(format!("diff_{m}.csv")), &table).map_err(Error::Io)?;
        println!("{m} - uprop\n{table}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect(
    model: &Path,
    data: &Path,
    kind: NoveltyKind,
    quantile: f64,
    calibrate_on: &str,
    train_data: Option<&Path>,
    config: Option<&Path>,
    format: Format,
) -> Result<String> {
    let model = load_model(model)?;
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let opts = cfg.score_options();
    let calibration: Vec<TimeSeries> = if calibrate_on == "val" {
        let Some(train_data) = train_data else {
            bail!(Error::Config(
                "--calibrate-on val needs --train-data (and usually --config)".into()
            ));
        };
        cfg.split_series(&load_series(train_data)?)?.val
    } else {
        load_series(Path::new(calibrate_on))?
    };
    let mut cal_scores = Vec::new();
    for s in &calibration {
        let normalized = model.norm.normalize(s)?;
        cal_scores.extend(
            score_stream(&model, &normalized, kind, &opts)?
                .into_iter()
                .map(|(_, v)| v),
        );
    }
    let threshold = calibrate_threshold(kind, &cal_scores, quantile)?;
    let series = load_csv(data)?;
    let normalized = model.norm.normalize(&series)?;
    let scores: Vec<NoveltyScore> =
        threshold.apply(&score_stream(&model, &normalized, kind, &opts)?);
    eprintln!(
        "{} threshold {} at q={} from {} calibration scores; {} of {} steps flagged",
        kind,
        fmt17(threshold.cutoff),
        quantile,
        cal_scores.len(),
        scores.iter().filter(|s| s.flagged).count(),
        scores.len()
    );
    let t_label = |s: &NoveltyScore| series.start() + s.t as i64;
    let names = ["t", "kind", "value", "flagged"];
    Ok(match format {
        Format::Csv => {
            let mut out = names.join(",") + "\n";
            for s in &scores {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    t_label(s),
                    s.kind,
                    fmt17(s.value),
                    u8::from(s.flagged)
                ));
            }
            out
        }
        Format::Json => json_records(
            &names,
            scores.iter().map(|s| {
                vec![
                    t_label(s).to_string(),
                    format!("\"{}\"", s.kind),
                    fmt17(s.value),
                    s.flagged.to_string(),
                ]
            }),
        ),
    })
}
