//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactile_core::calib::{build_remap, calibrate_depth, rectify, IntensityDepthTable, RemapField};
use tactile_core::deform::{compose_triple, visualize};
use tactile_core::force::{
    collect_dataset, constant_mean_baseline, evaluate, load_params, save_params, split_by_object,
    split_standard, train, write_loss_curve, DatasetManifest, Normalization, ParamsHeader,
};
use tactile_core::gelsim::{
    add_noise, apply_distortion, calibration_board, desk_schedule, object_library, procedural_object,
    reference_image, simulate_frame, simulate_session, ContactState, ObjectShape, ObjectSpec, SessionConfig,
};
use tactile_core::recon::{difference, reconstruct, to_pointcloud};
use tactile_core::{detect_blobs, io, GrayImage, PixelScale};

use crate::config::{stream, RunConfig};
use crate::{CliError, Command, Common, SplitArgs, SplitKind};

type CmdResult = Result<(), CliError>;

pub fn dispatch(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Init { seed, out: path } => {
            let cfg = RunConfig::with_seed(seed.unwrap_or(0));
            fs::write(&path, cfg.to_toml()).map_err(|e| CliError::usage(e.to_string()))?;
            say(out, format!("wrote {}", path.display()))
        }
        Command::SimulateCalibration { common } => simulate_calibration(&common, out),
        Command::SimulatePress { common, radius, depth, x, y } => simulate_press(&common, radius, depth, x, y, out),
        Command::Calibrate { common, reference, ball, board } => calibrate(&common, &reference, &ball, &board, out),
        Command::Reconstruct { common, table, remap, reference, tactile, visualize } => {
            reconstruct_cmd(&common, &table, remap.as_deref(), &reference, &tactile, visualize, out)
        }
        Command::SimulateDataset { common } => simulate_dataset(&common, out),
        Command::Train { common, manifest, split } => train_cmd(&common, &manifest, &split, out),
        Command::Evaluate { common, manifest, params, baseline, split } => {
            evaluate_cmd(&common, &manifest, params.as_deref(), baseline, &split, out)
        }
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> CmdResult {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::usage(e.to_string()))
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn sensor_scale(cfg: &RunConfig) -> Result<PixelScale, CliError> {
    Ok(PixelScale::new(cfg.sensor.mm_per_pixel)?)
}

fn load_image(path: &Path) -> Result<GrayImage, CliError> {
    io::load_pgm(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Raw-frame renderer: no-contact reference, lens distortion and noise.
struct RawCamera<'c> {
    cfg: &'c RunConfig,
    reference: GrayImage,
    center: [f64; 2],
}

impl<'c> RawCamera<'c> {
    fn new(cfg: &'c RunConfig) -> Self {
        let s = &cfg.sensor;
        Self {
            cfg,
            reference: reference_image(s.raw_width, s.raw_height, cfg.seed_for(stream::REFERENCE)),
            center: [s.raw_width as f64 / 2.0, s.raw_height as f64 / 2.0],
        }
    }

    /// Distorted, optionally noisy capture of an undistorted frame;
    /// `shot` picks the noise stream.
    fn capture(&self, frame: &GrayImage, shot: u64) -> Result<GrayImage, CliError> {
        let s = &self.cfg.sensor;
        let img = apply_distortion(frame, s.k1, s.k2, self.center)?;
        if s.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed_for(stream::NOISE) ^ shot.rotate_left(32));
            return Ok(add_noise(&img, s.noise_std, &mut rng)?);
        }
        Ok(img)
    }

    fn press(&self, radius: f64, depth: f64, center: [f64; 2]) -> Result<GrayImage, CliError> {
        let scale = sensor_scale(self.cfg)?;
        let ball = procedural_object(&ObjectSpec::new(ObjectShape::Sphere { radius }, scale.mm_per_pixel() / 2.0), 0)?;
        let (img, _) = simulate_frame(&self.cfg.gel, &ball, &ContactState::press(center, depth), &self.reference, scale)?;
        Ok(img)
    }
}

fn simulate_calibration(common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common)?;
    let cam = RawCamera::new(&cfg);
    let c = &cfg.calibration;
    let scale = sensor_scale(&cfg)?;
    fs::create_dir_all(&common.out).map_err(|e| CliError::usage(e.to_string()))?;

    let ball = cam.press(c.depth.ball_radius_mm, c.ball_press_mm, cam.center)?;
    let board_obj = calibration_board(c.grid.rows, c.grid.cols, c.grid.spacing_mm, c.pin_radius_mm, scale.mm_per_pixel() / 2.0)?;
    let (board, _) = simulate_frame(&cfg.gel, &board_obj, &ContactState::press(cam.center, c.board_press_mm), &cam.reference, scale)?;

    for (name, img, shot) in [("reference.pgm", &cam.reference, 0), ("ball.pgm", &ball, 1), ("board.pgm", &board, 2)] {
        io::save_pgm(common.out.join(name), &cam.capture(img, shot)?)?;
    }
    say(out, format!("wrote reference.pgm, ball.pgm, board.pgm to {}", common.out.display()))
}

fn simulate_press(common: &Common, radius: f64, depth: f64, x: Option<f64>, y: Option<f64>, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common)?;
    let cam = RawCamera::new(&cfg);
    let center = [x.unwrap_or(cam.center[0]), y.unwrap_or(cam.center[1])];
    let img = cam.press(radius, depth, center)?;
    // noise stream keyed by the press itself so repeated presses differ
    let shot = 3 + radius.to_bits() ^ depth.to_bits().rotate_left(17) ^ center[0].to_bits() ^ center[1].to_bits().rotate_left(29);
    io::save_pgm(&common.out, &cam.capture(&img, shot)?)?;
    say(out, format!("wrote {}", common.out.display()))
}

fn calibrate(common: &Common, reference: &Path, ball: &Path, board: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common)?;
    let c = &cfg.calibration;
    let (reference, ball, board) = (load_image(reference)?, load_image(ball)?, load_image(board)?);
    let markers = detect_blobs(&difference(&reference, &board)?, c.marker_threshold, c.marker_min_area)?;
    say(out, format!("markers: {}", markers.len()))?;
    let (remap, scale) = build_remap(&markers, &c.grid, reference.dims(), (cfg.sensor.width, cfg.sensor.height))?;
    let table = calibrate_depth(&rectify(&reference, &remap)?, &rectify(&ball, &remap)?, scale, &c.depth)?;

    remap.save(&common.out, scale)?;
    let json = serde_json::to_string_pretty(&table).map_err(|e| CliError::usage(e.to_string()))?;
    fs::write(common.out.join("table.json"), json + "\n").map_err(|e| CliError::usage(e.to_string()))?;
    say(out, format!("scale: {:.6} mm/px", scale.mm_per_pixel()))?;
    say(out, format!("table: {} bins, max depth {:.4} mm", table.depths().len(), table.max_depth()))
}

fn reconstruct_cmd(
    common: &Common,
    table: &Path,
    remap: Option<&Path>,
    reference: &Path,
    tactile: &Path,
    vis: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common)?;
    let table_text = fs::read_to_string(table).map_err(|e| CliError::usage(format!("{}: {e}", table.display())))?;
    let table: IntensityDepthTable =
        serde_json::from_str(&table_text).map_err(|e| CliError::usage(format!("{}: {e}", table.display())))?;
    let (mut reference, mut tactile) = (load_image(reference)?, load_image(tactile)?);
    let scale = match remap {
        Some(path) => {
            let (field, scale): (RemapField, PixelScale) = RemapField::load(path)?;
            reference = rectify(&reference, &field)?;
            tactile = rectify(&tactile, &field)?;
            scale
        }
        None => sensor_scale(&cfg)?,
    };
    let depth = reconstruct(&difference(&reference, &tactile)?, &table, &cfg.recon)?;
    fs::create_dir_all(&common.out).map_err(|e| CliError::usage(e.to_string()))?;
    io::save_pfm(common.out.join("depth.pfm"), depth.width(), depth.height(), depth.data())?;
    let cloud = to_pointcloud(&depth, scale);
    io::save_ply(common.out.join("cloud.ply"), &cloud.points)?;
    if vis {
        io::save_ppm(common.out.join("deformation.ppm"), &visualize(&compose_triple(&reference, &tactile)?, 3.0)?)?;
    }
    say(out, format!("points: {}", cloud.points.len()))?;
    say(out, format!("max depth: {:.4} mm", depth.max_value()))
}

fn simulate_dataset(common: &Common, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common)?;
    let scale = sensor_scale(&cfg)?;
    let dims = (cfg.sensor.width, cfg.sensor.height);
    let objects = object_library(&cfg.library(), scale)?;
    let schedule = desk_schedule(objects.len(), dims, &cfg.schedule())?;
    let reference = reference_image(dims.0, dims.1, cfg.seed_for(stream::REFERENCE));
    let session_cfg =
        SessionConfig { session_id: "session-0".into(), noise_std: cfg.sensor.noise_std, seed: cfg.seed_for(stream::NOISE) };
    let session = || simulate_session(&cfg.gel, &objects, &schedule, &reference, scale, &session_cfg);
    // gating needs a wrench scale before any sample exists
    let gate = Normalization::from_wrenches(&session().wrenches()?)?;
    fs::create_dir_all(&common.out).map_err(|e| CliError::usage(e.to_string()))?;
    let manifest = collect_dataset([session()], &gate, &cfg.collection, &common.out)?;
    say(out, format!("frames: {}", schedule.iter().map(|t| t.steps.len()).sum::<usize>()))?;
    say(out, format!("samples: {}", manifest.len()))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    DatasetManifest::load(path).map_err(|e| match e {
        tactile_core::Error::EmptyDataset(_) => e.into(),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })
}

/// Train and test halves for the requested split.
pub fn split_manifest(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    args: &SplitArgs,
) -> Result<(DatasetManifest, DatasetManifest), CliError> {
    let usage = |e: tactile_core::Error| CliError::usage(e.to_string());
    match args.split {
        SplitKind::Standard => {
            let n = args.n_test.unwrap_or(cfg.split.n_test);
            let n = if n == 0 { (manifest.len() / 10).max(1) } else { n };
            split_standard(manifest, n, cfg.seed_for(stream::SPLIT)).map_err(usage)
        }
        SplitKind::Object => {
            let ids = match &args.test_objects {
                Some(ids) => ids.clone(),
                None if !cfg.split.test_objects.is_empty() => cfg.split.test_objects.clone(),
                None => default_test_objects(manifest, cfg.seed_for(stream::SPLIT)),
            };
            split_by_object(manifest, &ids).map_err(usage)
        }
    }
}

/// A seeded quarter of the objects (at least one).
pub fn default_test_objects(manifest: &DatasetManifest, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = manifest.object_ids().into_iter().collect();
    let k = ids.len().div_ceil(4).max(1);
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked = ids[..k].to_vec();
    picked.sort();
    picked
}

fn train_cmd(common: &Common, manifest: &Path, split: &SplitArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common)?;
    let manifest = load_manifest(manifest)?;
    let (train_half, _) = split_manifest(&cfg, &manifest, split)?;
    let n_val = ((train_half.len() as f64 * cfg.split.validation_fraction).round() as usize).max(1);
    let (fit, val) = split_standard(&train_half, n_val, cfg.seed_for(stream::VALIDATION))
        .map_err(|e| CliError::usage(format!("cannot carve a validation set: {e}")))?;
    let tc = cfg.training();
    let outcome = train(&fit, &tc, &val)?;

    fs::create_dir_all(&common.out).map_err(|e| CliError::usage(e.to_string()))?;
    let header = ParamsHeader::new(tc.seed, outcome.selected_epoch, fit.normalization, "params.bin");
    save_params(&common.out, "params", &outcome.params, &header)?;
    let mut csv = Vec::new();
    write_loss_curve(&mut csv, &outcome.curve)?;
    fs::write(common.out.join("loss_curve.csv"), csv).map_err(|e| CliError::usage(e.to_string()))?;
    say(out, format!("train/validation samples: {}/{}", fit.len(), val.len()))?;
    say(out, format!("selected epoch: {}", outcome.selected_epoch))
}

fn evaluate_cmd(
    common: &Common,
    manifest: &Path,
    params: Option<&Path>,
    baseline: bool,
    split: &SplitArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common)?;
    let manifest = load_manifest(manifest)?;
    let (_, test) = split_manifest(&cfg, &manifest, split)?;
    let report = if baseline {
        constant_mean_baseline(&test)?
    } else {
        let path = params.ok_or_else(|| CliError::usage("--params is required unless --baseline is given"))?;
        let (p, header) = load_params(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        evaluate(&p, &test, &header.normalization, header.selected_epoch)?
    };
    if let Some(dir) = common.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::usage(e.to_string()))?;
    fs::write(&common.out, json + "\n").map_err(|e| CliError::usage(e.to_string()))?;
    say(out, format!("test samples: {}", report.n))?;
    say(out, format!("mae: {}", report.mae.map(|v| format!("{v:.6}")).join(" ")))
}
