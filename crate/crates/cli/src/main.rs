use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use maskrefine::bayes::BayesConfig;
use maskrefine::io::{
    list_indexed_pgms, load_checkpoint, load_dataset_dir, mask_to_pgm, pgm_to_frame, pgm_to_mask,
    read_pgm_file, save_checkpoint, temp_sibling, write_atomic, write_dataset_dir, write_pgm,
};
use maskrefine::net::{refine_mask, RefinerConfig};
use maskrefine::synth::{make_dataset, DatasetConfig, NoiseConfig};
use maskrefine::train::{
    compare, evaluate, format_metrics_rows, train, MetricsRecord, TrainConfig,
};
use maskrefine::Mask;

#[derive(Parser)]
#[command(name = "maskrefine", version, about = "Refine binary foreground masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Train a refiner and write its checkpoint.
    Train(TrainArgs),
    /// Refine one mask with a trained model.
    Refine(RefineArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Raw vs Bayesian vs network report on a dataset.
    Compare(CompareArgs),
}

/// `HxW`, both positive, lowercase `x`.
fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let err = || format!("expected HxW with positive integers, got {s:?}");
    let (h, w) = s.split_once('x').ok_or_else(err)?;
    let num = |v: &str| -> Result<usize, String> {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        match v.parse() {
            Ok(0) | Err(_) => Err(err()),
            Ok(n) => Ok(n),
        }
    };
    Ok((num(h)?, num(w)?))
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    flip_fg: Option<f64>,
    #[arg(long)]
    flip_bg: Option<f64>,
    #[arg(long)]
    jitter: Option<usize>,
    #[arg(long)]
    blobs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the threshold stored in the checkpoint.
    #[arg(long)]
    tau: Option<f32>,
}

#[derive(Args)]
struct EvalArgs {
    /// A directory of NNNNNN.pgm masks, or a single mask file.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bayes_window: Option<usize>,
    #[arg(long)]
    bayes_sigma: Option<f64>,
    #[arg(long)]
    bayes_iters: Option<usize>,
    #[arg(long)]
    tau: Option<f32>,
    #[arg(long)]
    csv: bool,
}

fn gen(a: GenArgs) -> Result<()> {
    let (height, width) = a.size;
    let mut cfg = DatasetConfig::new(height, width);
    let noise: &mut NoiseConfig = &mut cfg.noise;
    if let Some(p) = a.flip_fg {
        noise.p_flip_fg = p;
    }
    if let Some(p) = a.flip_bg {
        noise.p_flip_bg = p;
    }
    if let Some(r) = a.jitter {
        noise.jitter_radius = r;
    }
    if let Some(k) = a.blobs {
        noise.blob_count = k;
    }
    let samples = make_dataset(a.seed, a.count, &cfg)?;

    if a.out.exists() && fs::read_dir(&a.out)?.next().is_some() {
        bail!("output directory {} is not empty", a.out.display());
    }
    // Build next to the target, then move it into place in one rename.
    let tmp = temp_sibling(&a.out);
    let built = fs::create_dir_all(&tmp)
        .map_err(anyhow::Error::from)
        .and_then(|_| Ok(write_dataset_dir(&tmp, &samples)?))
        .and_then(|_| {
            if a.out.exists() {
                fs::remove_dir(&a.out)?;
            }
            Ok(fs::rename(&tmp, &a.out)?)
        });
    if built.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    built.with_context(|| format!("writing {}", a.out.display()))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = load_dataset_dir(&a.data)?;
    let mut net = RefinerConfig::default();
    if let Some(l) = a.levels {
        net.levels = l;
    }
    if let Some(c) = a.channels {
        net.base_channels = c;
    }
    let mut cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    let out = train(&cfg, &net, &data, |epoch, loss| {
        println!("epoch {epoch} loss {loss:.6}");
    })?;
    write_atomic(&a.out, &save_checkpoint(&out.params))?;
    Ok(())
}

fn read_model(path: &Path) -> Result<maskrefine::net::RefinerParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_checkpoint(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn refine_cmd(a: RefineArgs) -> Result<()> {
    let params = read_model(&a.model)?;
    let tau = a.tau.unwrap_or(params.config().threshold);
    let mask = pgm_to_mask(&read_pgm_file(&a.mask).with_context(|| a.mask.display().to_string())?);
    let source =
        pgm_to_frame(&read_pgm_file(&a.source).with_context(|| a.source.display().to_string())?);
    let refined = refine_mask(&params, &mask, &source, tau)?;
    write_atomic(&a.out, &write_pgm(&mask_to_pgm(&refined)))?;
    Ok(())
}

fn read_mask(path: &Path) -> Result<Mask> {
    Ok(pgm_to_mask(
        &read_pgm_file(path).with_context(|| path.display().to_string())?,
    ))
}

/// Labeled (prediction, ground truth) pairs: matching indices for two
/// directories, or the single pair for two files.
fn eval_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (pred.is_dir(), gt.is_dir()) {
        (true, true) => {
            let p = list_indexed_pgms(pred)?;
            let g = list_indexed_pgms(gt)?;
            if let Some(idx) = p.keys().find(|k| !g.contains_key(*k)) {
                bail!("index {idx} has a prediction but no ground truth");
            }
            if let Some(idx) = g.keys().find(|k| !p.contains_key(*k)) {
                bail!("index {idx} has ground truth but no prediction");
            }
            if p.is_empty() {
                bail!("no NNNNNN.pgm masks in {}", pred.display());
            }
            Ok(p.into_iter()
                .map(|(k, pp)| (k.clone(), pp, g[&k].clone()))
                .collect())
        }
        (false, false) => {
            let label = pred
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "pred".into());
            Ok(vec![(label, pred.to_path_buf(), gt.to_path_buf())])
        }
        _ => bail!("--pred and --gt must both be directories or both be files"),
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut rows = Vec::new();
    for (label, p, g) in eval_pairs(&a.pred, &a.gt)? {
        let m = evaluate(&read_mask(&p)?, &read_mask(&g)?).with_context(|| label.clone())?;
        rows.push((label, m));
    }
    let records: Vec<MetricsRecord> = rows.iter().map(|r| r.1).collect();
    rows.push(("mean".into(), MetricsRecord::mean(&records)));
    print!("{}", format_metrics_rows("index", &rows, a.csv));
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let data = load_dataset_dir(&a.data)?;
    let params = read_model(&a.model)?;
    let mut bayes = BayesConfig::default();
    if let Some(w) = a.bayes_window {
        bayes.window = w;
    }
    if let Some(s) = a.bayes_sigma {
        bayes.sigma = s;
    }
    if let Some(i) = a.bayes_iters {
        bayes.max_iters = i;
    }
    let tau = a.tau.unwrap_or(params.config().threshold);
    print!("{}", compare(&data, &params, &bayes, tau)?.render(a.csv));
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors exit with status 2 from inside `parse`.
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Refine(a) => refine_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
