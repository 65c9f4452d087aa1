use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcr::config::PipelineConfig;
use dcr::io::{load_image, load_sinogram, save_image, save_png, save_sinogram, write_json};
use dcr::metrics::{body_mask, EvalReport, MethodScores};
use dcr::phantom::{analytic_sinogram, rasterize, sample_phantom_in, EllipsePhantom, PhantomBounds};
use dcr::pipeline::{make_dataset, run_pipeline, score, write_report, Case, Method, OutputOptions, PriorSource};
use dcr::projector::forward_project;
use dcr::recon::{dcr_reconstruct, wtv_reconstruct};
use dcr::simulate::{add_poisson_noise, truncate, NoiseModel};
use dcr::{fbp, fov_mask, wce, Error, Image, Result};

#[derive(Parser)]
#[command(name = "dcr", version, about = "Data-consistent FOV extension for truncated fan-beam CT")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set recon.n_outer=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// PNG display window in HU (overrides `window_hu`).
    #[arg(
        long,
        value_name = "LOW,HIGH",
        value_delimiter = ',',
        num_args = 2,
        allow_negative_numbers = true,
        global = true
    )]
    window: Option<Vec<f64>>,
    /// Also write a windowed PNG next to each output image.
    #[arg(long, global = true)]
    png: bool,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Args)]
struct Io {
    /// Input array file (header or payload path, or their common stem).
    #[arg(long, short)]
    input: PathBuf,
    /// Output array file stem.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random ellipse phantom and rasterize it.
    Phantom {
        /// Output directory for `phantom.json` and `truth`.
        #[arg(long, short)]
        out: PathBuf,
        /// Keep the whole object inside the scan field of view.
        #[arg(long)]
        inside_fov: bool,
    },
    /// Project a phantom analytically, or an image with the discrete projector.
    Project {
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        phantom: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Zero the channels outside the physical detector.
    Truncate(Io),
    /// Apply Poisson noise to measured channels.
    Noise(Io),
    /// Filtered back-projection.
    Fbp(Io),
    /// Water cylinder extrapolation followed by FBP.
    Wce(Io),
    /// Reweighted-TV regularized SART on measured channels.
    Wtv(Io),
    /// Data-consistent reconstruction with a prior image.
    Dcr {
        #[command(flatten)]
        io: Io,
        /// Prior image covering the extended field of view.
        #[arg(long)]
        prior: PathBuf,
    },
    /// Write (wce, reference, artifact) training triples.
    Dataset {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 425)]
        n_train: usize,
        /// Defaults to `suite.n_cases`.
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Score images against a reference.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        /// Measured sinogram for the data residual.
        #[arg(long)]
        sinogram: PathBuf,
        /// Images to score as `name=path`.
        #[arg(required = true, value_name = "NAME=PATH")]
        images: Vec<String>,
        /// Output directory for `report.json` and `report.txt`.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate, reconstruct and score the phantom suite.
    Pipeline {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "fbp,wce,wtv,unet,dcr")]
        methods: Vec<String>,
        /// Prior image per case, in suite order (repeatable).
        #[arg(long, conflicts_with = "prior_dir")]
        prior: Vec<PathBuf>,
        /// Directory with one prior `<case>.json` per case.
        #[arg(long)]
        prior_dir: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let base = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(w) = &common.window {
        overrides.push(format!("window_hu=[{},{}]", w[0], w[1]));
    }
    base.with_overrides(&overrides)
}

fn write_image(path: &Path, image: &Image, cfg: &PipelineConfig, png: bool, what: &str) -> Result<()> {
    let provenance = serde_json::json!({ "command": what, "seed": cfg.seed });
    save_image(path, image, Some(provenance))?;
    if png {
        save_png(&path.with_extension("png"), image, cfg.window_hu)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let png = cli.common.png;
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    match cli.command {
        Command::Phantom { out, inside_fov } => {
            let bounds = PhantomBounds::for_setup(&geometry, &grid);
            let phantom = sample_phantom_in(cfg.seed, !inside_fov, &bounds);
            write_json(&out.join("phantom.json"), &phantom)?;
            write_image(&out.join("truth"), &rasterize(&phantom, &grid), &cfg, png, "phantom")?;
        }
        Command::Project { phantom, image, out } => {
            let sino = match (phantom, image) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                    let phantom: EllipsePhantom =
                        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                    analytic_sinogram(&phantom, &geometry)
                }
                (None, Some(path)) => forward_project(&load_image(&path)?.to_unit(dcr::Unit::MuPerMm), &geometry)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            save_sinogram(&out, &sino, None)?;
        }
        Command::Truncate(io) => save_sinogram(&io.out, &truncate(&load_sinogram(&io.input)?), None)?,
        Command::Noise(io) => {
            let noisy = add_poisson_noise(&load_sinogram(&io.input)?, &NoiseModel::new(cfg.noise.i0, cfg.seed)?)?;
            save_sinogram(&io.out, &noisy, Some(cfg.seed))?;
        }
        Command::Fbp(io) => {
            let img = fbp::fbp_reconstruct(&load_sinogram(&io.input)?, &grid)?;
            write_image(&io.out, &img, &cfg, png, "fbp")?;
        }
        Command::Wce(io) => {
            let img = wce::reconstruct_wce(&load_sinogram(&io.input)?, &grid)?;
            write_image(&io.out, &img, &cfg, png, "wce")?;
        }
        Command::Wtv(io) => {
            let img = wtv_reconstruct(&load_sinogram(&io.input)?, &grid, &cfg.recon)?;
            write_image(&io.out, &img, &cfg, png, "wtv")?;
        }
        Command::Dcr { io, prior } => {
            let prior = load_image(&prior)?.to_unit(dcr::Unit::Hu);
            let img = dcr_reconstruct(&load_sinogram(&io.input)?, &prior, &cfg.recon)?;
            write_image(&io.out, &img, &cfg, png, "dcr")?;
        }
        Command::Dataset { out, n_train, n_test } => {
            let manifest = make_dataset(&cfg, n_train, n_test.unwrap_or(cfg.suite.n_cases), &out)?;
            println!(
                "wrote {} training and {} test triples to {}",
                manifest.train.len(),
                manifest.test.len(),
                out.display()
            );
        }
        Command::Evaluate { reference, sinogram, images, out } => {
            let truth = load_image(&reference)?.to_unit(dcr::Unit::Hu);
            let measured = load_sinogram(&sinogram)?;
            let case =
                Case { name: "input".into(), index: 0, phantom: EllipsePhantom::new(Vec::new()), truth, measured };
            let fov = fov_mask(&case.measured.geometry, &case.truth.grid, false);
            let body = body_mask(&case.truth)?;
            let mut methods = Vec::new();
            for item in &images {
                let (name, path) =
                    item.split_once('=').ok_or_else(|| Error::Config(format!("image {item:?} is not name=path")))?;
                let img = load_image(Path::new(path))?.to_unit(dcr::Unit::Hu);
                methods.push(MethodScores::from_cases(name, vec![score(&case, &img, &fov, &body)?]));
            }
            let report = EvalReport { prior_source: None, methods };
            write_report(&out, &report)?;
            print!("{}", report.to_table());
        }
        Command::Pipeline { out, methods, prior, prior_dir } => {
            let methods = methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
            let source = match (prior_dir, prior.is_empty()) {
                (Some(dir), _) => PriorSource::Dir(dir),
                (None, false) => PriorSource::Files(prior),
                (None, true) => PriorSource::Surrogate,
            };
            let run = run_pipeline(&cfg, &methods, &source, Some(&OutputOptions { dir: out, png }))?;
            print!("{}", run.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
