use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use mscrf_core::classify::ModelBundle;
use mscrf_core::crf::{Labeling, PairwiseMode};
use mscrf_core::imageio::{load_image_pair, read_label_plane, write_label_plane, LabelMask, Mode, VOID_ID};
use mscrf_core::pipeline::segment_image;

use mscrf_cli::compare::compare_reports;
use mscrf_cli::config::ExperimentConfig;
use mscrf_cli::protocol::{run_protocol, train_from_config};
use mscrf_cli::report::{build_report, load_report, write_report, Evaluated};
use mscrf_cli::synth::{write_corpus, SynthParams};
use mscrf_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "mscrf", version, about = "RGB+NIR semantic segmentation with Fisher vectors and a CRF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    OutdoorVoid,
    IndoorBackground,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::OutdoorVoid => Mode::OutdoorVoid,
            ModeArg::IndoorBackground => Mode::IndoorBackground,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model bundle on the config's training folds.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment one image; `--image scene` reads scene_rgb.png and, if present, scene_nir.png.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        pairwise: Option<PairwiseMode>,
    },
    /// Score a directory of predicted label maps against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        /// Number of classes; inferred from the ground truth when omitted.
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        plot: bool,
    },
    /// Run the five-fold protocol and write a report.
    Protocol {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// Compare two protocol reports produced on the same folds.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a synthetic RGB+NIR corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_pool(workers: Option<usize>) -> CliResult<()> {
    let env = std::env::var("MSCRF_WORKERS").ok();
    let n = match env {
        Some(v) => Some(v.parse::<usize>().map_err(|_| CliError::Config(format!("MSCRF_WORKERS={v} is not a count")))?),
        None => workers,
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn segment(model: &Path, image: &Path, out: &Path, lambda: Option<f64>, pairwise: Option<PairwiseMode>) -> CliResult<()> {
    let bundle = ModelBundle::load(model)?;
    let (rgb, nir) = if image.extension().is_some() && image.is_file() {
        (image.to_path_buf(), None)
    } else {
        let nir = with_suffix(image, "_nir.png");
        (with_suffix(image, "_rgb.png"), nir.is_file().then_some(nir))
    };
    let img = load_image_pair(&rgb, nir.as_deref())?;
    let labeling = segment_image(&bundle, &img, lambda.unwrap_or(bundle.lambda), pairwise.unwrap_or(bundle.pairwise))?;
    write_label_plane(out, labeling.width, labeling.height, &labeling.labels)?;
    info!("wrote {}", out.display());
    Ok(())
}

/// Ground truth for `id`: `<id>.png` or `<id>_mask.png` in `gt`.
fn gt_path(gt: &Path, id: &str) -> Option<PathBuf> {
    [format!("{id}.png"), format!("{id}_mask.png")]
        .into_iter()
        .map(|n| gt.join(n))
        .find(|p| p.is_file())
}

fn evaluate(pred: &Path, gt: &Path, mode: Mode, out: &Path, num_classes: Option<usize>, plot: bool) -> CliResult<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(pred)
        .map_err(|e| CliError::Data(format!("{}: {e}", pred.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no predictions in {}", pred.display())));
    }
    let mut raw = Vec::new();
    for p in &files {
        let id = p.file_stem().unwrap().to_string_lossy().into_owned();
        let g = gt_path(gt, &id).ok_or_else(|| CliError::Data(format!("no ground truth for {id}")))?;
        raw.push((id, read_label_plane(p)?, read_label_plane(&g)?));
    }
    let k = match num_classes {
        Some(k) => k,
        None => {
            let max = raw
                .iter()
                .flat_map(|r| r.2 .2.iter().copied())
                .filter(|&l| l != VOID_ID)
                .max()
                .unwrap_or(0) as usize;
            // indoor ground truth always contains the background id `k`
            match mode {
                Mode::OutdoorVoid => max + 1,
                Mode::IndoorBackground => max.max(1),
            }
        }
    };
    let mut images = Vec::with_capacity(raw.len());
    for (id, (pw, ph, pl), (gw, gh, gl)) in raw {
        images.push(Evaluated {
            pred: Labeling::new(pw, ph, pl)?,
            gt: LabelMask::new(gw, gh, gl, k, mode)?,
            id,
            fold: None,
        });
    }
    let names: Vec<String> = (0..k).map(|i| format!("class{i}")).collect();
    let report = build_report("evaluation", &names, mode, &images, &[1, 2, 4, 6, 8, 10, 15, 20])?;
    write_report(out, &report, &images, plot)?;
    println!("OA {:.4}  CA {:.4}  JI {:.4}", report.oa, report.ca, report.ji);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            init_pool(cfg.workers)?;
            let bundle = train_from_config(&cfg)?;
            bundle.save(&out)?;
            info!("wrote {}", out.display());
        }
        Command::Segment {
            model,
            image,
            out,
            lambda,
            pairwise,
        } => {
            init_pool(None)?;
            segment(&model, &image, &out, lambda, pairwise)?;
        }
        Command::Evaluate {
            pred,
            gt,
            mode,
            out,
            num_classes,
            plot,
        } => {
            init_pool(None)?;
            evaluate(&pred, &gt, mode.into(), &out, num_classes, plot)?;
        }
        Command::Protocol { config, out, plot } => {
            let cfg = ExperimentConfig::load(&config)?;
            init_pool(cfg.workers)?;
            let outcome = run_protocol(&cfg)?;
            write_report(&out, &outcome.report, &outcome.predictions, plot)?;
            let r = &outcome.report;
            println!("{}: OA {:.4}  CA {:.4}  JI {:.4}", r.name, r.oa, r.ca, r.ji);
        }
        Command::Compare { a, b, json } => {
            let cmp = compare_reports(&load_report(&a)?, &load_report(&b)?)?;
            print!("{}", cmp.table);
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&cmp)?;
                std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            }
        }
        Command::Synth { out, count, size, seed } => {
            let manifest = write_corpus(&out, &SynthParams { count, size, seed })?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
