//! End-to-end simulation, reconstruction and evaluation over a phantom suite,
//! and generation of training triples for a learned prior.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fbp::fbp_reconstruct;
use crate::geometry::{fov_mask, ImageGrid, Mask};
use crate::image::{Image, Unit};
use crate::io::{load_image, save_image, save_png, save_sinogram, write_json};
use crate::metrics::{body_mask, rmse, ssim, CaseScores, EvalReport, MethodScores};
use crate::phantom::{analytic_sinogram, rasterize, sample_phantom_in, EllipsePhantom, PhantomBounds};
use crate::recon::{data_residual, dcr_reconstruct, wtv_reconstruct, ChannelSet};
use crate::simulate::{add_poisson_noise, truncate, NoiseModel};
use crate::sinogram::Sinogram;
use crate::wce::reconstruct_wce;

/// Independent seed streams derived from the root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedStream {
    TrainPhantom = 1,
    TrainNoise = 2,
    TestPhantom = 3,
    TestNoise = 4,
    Prior = 5,
}

/// SplitMix64 finalizer over `(root, stream, index)`.
pub fn derive_seed(root: u64, stream: SeedStream, index: u64) -> u64 {
    let mut z = root
        .wrapping_add((stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fbp,
    Wce,
    Wtv,
    /// The prior image itself: a learned prior from file, or the surrogate.
    Unet,
    Dcr,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fbp, Method::Wce, Method::Wtv, Method::Unet, Method::Dcr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fbp => "fbp",
            Method::Wce => "wce",
            Method::Wtv => "wtv",
            Method::Unet => "unet",
            Method::Dcr => "dcr",
        }
    }

    fn needs_prior(self) -> bool {
        matches!(self, Method::Unet | Method::Dcr)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where prior images come from.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum PriorSource {
    /// Ground truth degraded by the configured blur and noise.
    #[default]
    Surrogate,
    /// One prior file per case, in suite order.
    Files(Vec<PathBuf>),
    /// A directory holding `<case>.json` / `<case>.raw` per case.
    Dir(PathBuf),
}

impl PriorSource {
    fn path_for(&self, index: usize, case: &str) -> Result<Option<PathBuf>> {
        match self {
            PriorSource::Surrogate => Ok(None),
            PriorSource::Files(paths) => paths
                .get(index)
                .cloned()
                .map(Some)
                .ok_or_else(|| Error::Config(format!("no prior file given for case {case}"))),
            PriorSource::Dir(dir) => Ok(Some(dir.join(case))),
        }
    }

    fn describe(&self) -> String {
        match self {
            PriorSource::Surrogate => "surrogate".into(),
            PriorSource::Files(_) => "files".into(),
            PriorSource::Dir(dir) => format!("dir:{}", dir.display()),
        }
    }
}

/// One simulated acquisition.
#[derive(Clone, Debug)]
pub struct Case {
    pub name: String,
    pub index: usize,
    pub phantom: EllipsePhantom,
    pub truth: Image,
    /// Truncated, noisy sinogram.
    pub measured: Sinogram,
}

/// Rasterizes the phantom and simulates its truncated noisy acquisition.
pub fn simulate_case(cfg: &PipelineConfig, phantom: &EllipsePhantom, noise_seed: u64) -> Result<(Image, Sinogram)> {
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    let truth = rasterize(phantom, &grid);
    let full = analytic_sinogram(phantom, &geometry);
    let measured = add_poisson_noise(&truncate(&full), &NoiseModel::new(cfg.noise.i0, noise_seed)?)?;
    Ok((truth, measured))
}

fn sample_case(cfg: &PipelineConfig, name: String, index: usize, phantom_seed: u64, noise_seed: u64) -> Result<Case> {
    let bounds = PhantomBounds::for_setup(&cfg.geometry()?, &cfg.grid()?);
    let phantom = sample_phantom_in(phantom_seed, cfg.suite.truncating, &bounds);
    let (truth, measured) = simulate_case(cfg, &phantom, noise_seed)?;
    Ok(Case { name, index, phantom, truth, measured })
}

/// Test case `index` of the suite; identical to the test split written by
/// [`make_dataset`] for the same root seed.
pub fn test_case(cfg: &PipelineConfig, index: usize) -> Result<Case> {
    let k = index as u64;
    sample_case(
        cfg,
        format!("test_{index:03}"),
        index,
        derive_seed(cfg.seed, SeedStream::TestPhantom, k),
        derive_seed(cfg.seed, SeedStream::TestNoise, k),
    )
}

fn train_case(cfg: &PipelineConfig, index: usize) -> Result<Case> {
    let k = index as u64;
    sample_case(
        cfg,
        format!("train_{index:03}"),
        index,
        derive_seed(cfg.seed, SeedStream::TrainPhantom, k),
        derive_seed(cfg.seed, SeedStream::TrainNoise, k),
    )
}

/// Loads the prior for a case, or degrades the ground truth when no file
/// source is configured.
pub fn case_prior(cfg: &PipelineConfig, case: &Case, source: &PriorSource) -> Result<Image> {
    match source.path_for(case.index, &case.name)? {
        None => cfg.prior.degrade(&case.truth, derive_seed(cfg.seed, SeedStream::Prior, case.index as u64)),
        Some(path) => {
            let prior = load_image(&path)?;
            if prior.grid != case.truth.grid {
                return Err(Error::ShapeMismatch(format!(
                    "{}: prior grid {:?} differs from the reconstruction grid {:?}",
                    path.display(),
                    prior.grid,
                    case.truth.grid
                )));
            }
            Ok(prior.to_unit(Unit::Hu))
        }
    }
}

/// File outputs of a pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Also write windowed PNGs of every image.
    pub png: bool,
}

/// Reconstructions of one case, in method order.
#[derive(Clone, Debug)]
pub struct CaseResult {
    pub case: Case,
    pub images: Vec<(Method, Image)>,
}

impl CaseResult {
    pub fn image(&self, method: Method) -> Option<&Image> {
        self.images.iter().find(|(m, _)| *m == method).map(|(_, img)| img)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub cases: Vec<CaseResult>,
}

/// Reconstructs one case with every requested method.
pub fn reconstruct_case(
    cfg: &PipelineConfig,
    case: &Case,
    methods: &[Method],
    prior: &PriorSource,
) -> Result<CaseResult> {
    let grid = cfg.grid()?;
    let prior_image = if methods.iter().any(|m| m.needs_prior()) { Some(case_prior(cfg, case, prior)?) } else { None };
    let mut images = Vec::with_capacity(methods.len());
    for &method in methods {
        log::info!("{}: {method}", case.name);
        let img = match method {
            Method::Fbp => fbp_reconstruct(&case.measured, &grid)?,
            Method::Wce => reconstruct_wce(&case.measured, &grid)?,
            Method::Wtv => wtv_reconstruct(&case.measured, &grid, &cfg.recon)?,
            Method::Unet => prior_image.clone().expect("prior loaded"),
            Method::Dcr => dcr_reconstruct(&case.measured, prior_image.as_ref().expect("prior loaded"), &cfg.recon)?,
        };
        images.push((method, img));
    }
    Ok(CaseResult { case: case.clone(), images })
}

/// Scores of one reconstruction against the case's ground truth.
pub fn score(case: &Case, image: &Image, fov: &Mask, body: &Mask) -> Result<CaseScores> {
    Ok(CaseScores {
        case: case.name.clone(),
        rmse_fov: rmse(image, &case.truth, fov)?,
        rmse_body: rmse(image, &case.truth, body)?,
        ssim: ssim(image, &case.truth, Some(body))?,
        data_residual: data_residual(image, &case.measured, ChannelSet::Measured)?,
    })
}

fn write_outputs(cfg: &PipelineConfig, result: &CaseResult, out: &OutputOptions) -> Result<()> {
    let dir = out.dir.join(&result.case.name);
    let provenance = |what: &str| json!({ "case": result.case.name, "image": what, "seed": cfg.seed });
    let save = |name: &str, img: &Image| -> Result<()> {
        save_image(&dir.join(name), img, Some(provenance(name)))?;
        if out.png {
            save_png(&dir.join(format!("{name}.png")), img, cfg.window_hu)?;
        }
        Ok(())
    };
    save("truth", &result.case.truth)?;
    save_sinogram(&dir.join("sinogram"), &result.case.measured, None)?;
    write_json(&dir.join("phantom.json"), &result.case.phantom)?;
    for (method, img) in &result.images {
        save(method.name(), img)?;
        let diff = img.sub(&result.case.truth)?;
        save_image(&dir.join(format!("{method}_diff")), &diff, Some(provenance(&format!("{method}_diff"))))?;
        if out.png {
            let w = cfg.window_hu[1] - cfg.window_hu[0];
            save_png(&dir.join(format!("{method}_diff.png")), &diff, [-w / 2.0, w / 2.0])?;
        }
    }
    Ok(())
}

/// Simulates the configured suite, reconstructs it with `methods` and scores
/// every result. Reports are written to `out` as `report.json` and
/// `report.txt` along with per-case images.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    methods: &[Method],
    prior: &PriorSource,
    out: Option<&OutputOptions>,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    let geometry = cfg.geometry()?;
    let grid = cfg.grid()?;
    let fov = fov_mask(&geometry, &grid, false);
    let mut results = Vec::with_capacity(cfg.suite.n_cases);
    let mut scores: Vec<Vec<CaseScores>> = vec![Vec::new(); methods.len()];
    for index in 0..cfg.suite.n_cases {
        let case = test_case(cfg, index)?;
        let body = body_mask(&case.truth)?;
        let result = reconstruct_case(cfg, &case, methods, prior)?;
        for (k, (_, img)) in result.images.iter().enumerate() {
            scores[k].push(score(&case, img, &fov, &body)?);
        }
        if let Some(out) = out {
            write_outputs(cfg, &result, out)?;
        }
        results.push(result);
    }
    let report = EvalReport {
        prior_source: methods.iter().any(|m| m.needs_prior()).then(|| prior.describe()),
        methods: methods.iter().zip(scores).map(|(m, s)| MethodScores::from_cases(m.name(), s)).collect(),
    };
    if let Some(out) = out {
        write_report(&out.dir, &report)?;
    }
    Ok(PipelineRun { report, cases: results })
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let table_path = dir.join("report.txt");
    std::fs::write(&table_path, report.to_table()).map_err(|e| Error::io(&table_path, e))
}

/// Summary written as `manifest.json` at the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub grid: ImageGrid,
    pub files: [String; 3],
}

/// Writes `(wce, reference, artifact)` triples for `n_train` training and
/// `n_test` test phantoms under `out/train/<case>/` and `out/test/<case>/`.
///
/// Values are rounded to 32 bits before the artifact is formed, so
/// `artifact + reference == wce` holds exactly in 32-bit arithmetic.
pub fn make_dataset(cfg: &PipelineConfig, n_train: usize, n_test: usize, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config(format!("dataset needs n_train, n_test > 0, got {n_train}, {n_test}")));
    }
    let grid = cfg.grid()?;
    let mut manifest = DatasetManifest {
        seed: cfg.seed,
        train: Vec::new(),
        test: Vec::new(),
        grid,
        files: ["wce".into(), "reference".into(), "artifact".into()],
    };
    for (split, n) in [("train", n_train), ("test", n_test)] {
        for index in 0..n {
            let case = if split == "train" { train_case(cfg, index)? } else { test_case(cfg, index)? };
            log::info!("dataset {}", case.name);
            let wce = reconstruct_wce(&case.measured, &grid)?;
            let (w, r, a) = dataset_triple(&wce, &case.truth)?;
            let dir = out.join(split).join(&case.name);
            let provenance = json!({ "case": case.name, "split": split, "seed": cfg.seed });
            save_image(&dir.join("wce"), &w, Some(provenance.clone()))?;
            save_image(&dir.join("reference"), &r, Some(provenance.clone()))?;
            save_image(&dir.join("artifact"), &a, Some(provenance))?;
            if split == "train" { &mut manifest.train } else { &mut manifest.test }.push(case.name);
        }
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `(wce, reference, artifact)` on the 32-bit lattice with
/// `artifact + reference == wce` exact in `f32`.
pub fn dataset_triple(wce: &Image, reference: &Image) -> Result<(Image, Image, Image)> {
    let wce = wce.to_unit(Unit::Hu);
    let reference = reference.to_unit(Unit::Hu);
    wce.check_same_shape(&reference)?;
    let n = wce.values.len();
    let (mut w, mut r, mut a) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (&fw, &fr) in wce.values.iter().zip(&reference.values) {
        let r32 = fr as f32;
        let a32 = (fw - f64::from(r32)) as f32;
        w.push(f64::from(a32 + r32));
        r.push(f64::from(r32));
        a.push(f64::from(a32));
    }
    let grid = wce.grid;
    Ok((Image::new(grid, w, Unit::Hu)?, Image::new(grid, r, Unit::Hu)?, Image::new(grid, a, Unit::Hu)?))
}
