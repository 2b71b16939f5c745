use std::path::Path;

use anyhow::{anyhow, Context, Result};
use occkit_core::container::{decode, MAGIC};
use occkit_core::flow_math::{flow_from_logits, grad_flow_from_logits, BinConfig, BinModel};
use occkit_core::metrics::{evaluate, EvalConfig, MavePooling, DEFAULT_FOREGROUND, DEFAULT_MAVE_THRESHOLD, DEFAULT_THRESHOLDS};
use occkit_core::raycast::{generate_bundle, select_hard_examples, visible_mask_v1, visible_mask_v2};
use occkit_core::splat_warp::{warp_forward, warp_occupancy, warp_score, DEFAULT_CE_EPS, DEFAULT_DT};
use occkit_core::synth::{synth_scene, SynthConfig};
use occkit_core::{
    load_container, save_container, FeatureGrid, FlowField, OccupancyGrid, RayBundle, RayPattern, Trajectory, VoxelMask,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{BinsArgs, EvalArgs, GenMaskArgs, RaySource, SynthArgs, WarpArgs, WarpOccArgs};
use crate::config::{pick, FileConfig};
use crate::UsageError;

fn load_occ(path: &Path) -> Result<OccupancyGrid> {
    Ok(load_container(path)?.into_occupancy().with_context(|| path.display().to_string())?)
}

fn load_flow(path: &Path) -> Result<FlowField> {
    Ok(load_container(path)?.into_flow().with_context(|| path.display().to_string())?)
}

fn load_features(path: &Path) -> Result<FeatureGrid> {
    Ok(load_container(path)?.into_features().with_context(|| path.display().to_string())?)
}

fn load_mask(path: &Path) -> Result<VoxelMask> {
    Ok(load_container(path)?.into_mask().with_context(|| path.display().to_string())?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", to_json(value)?);
    Ok(())
}

fn resolve_pattern(path: Option<&Path>, cfg: &FileConfig) -> Result<RayPattern> {
    let pattern = match path {
        Some(p) => read_json(p)?,
        None => cfg.pattern.clone().unwrap_or_default(),
    };
    pattern.validate()?;
    Ok(pattern)
}

fn resolve_bundle(rays: &RaySource, cfg: &FileConfig) -> Result<RayBundle> {
    if let Some(path) = &rays.bundle {
        return read_json(path);
    }
    let Some(traj) = &rays.trajectory else {
        return Err(UsageError("one of --bundle or --trajectory is required".into()).into());
    };
    let trajectory: Trajectory = read_json(traj)?;
    let pattern = resolve_pattern(rays.pattern.as_deref(), cfg)?;
    Ok(generate_bundle(&trajectory, &pattern)?)
}

pub fn gen_mask(args: &GenMaskArgs, cfg: &FileConfig) -> Result<()> {
    let bundle = resolve_bundle(&args.rays, cfg)?;
    let grid = load_occ(&args.gt)?;
    let dilate = args.dilate.or(cfg.dilate);
    let mask = match dilate {
        None => visible_mask_v1(&grid, &bundle),
        Some(r) => visible_mask_v2(&grid, &bundle, r)?,
    };
    save_container(&args.out, &mask)?;
    let mut summary = json!({
        "variant": if dilate.is_some() { "v2" } else { "v1" },
        "dilate": dilate,
        "rays": bundle.len(),
        "visible_voxels": mask.count(),
    });
    if let (Some(unc_path), Some(hard_out)) = (&args.uncertainty, &args.hard_out) {
        let fraction = args
            .hard_fraction
            .or(cfg.hard_fraction)
            .ok_or_else(|| UsageError("--uncertainty needs --hard-fraction".into()))?;
        let hard = select_hard_examples(&load_features(unc_path)?, &mask, fraction)?;
        save_container(hard_out, &hard)?;
        summary["hard_voxels"] = hard.count().into();
    }
    print_json(&summary)
}

pub fn eval(args: &EvalArgs, cfg: &FileConfig) -> Result<()> {
    let bundle = resolve_bundle(&args.rays, cfg)?;
    let gt = load_occ(&args.gt)?;
    let pred = load_occ(&args.pred)?;
    let flow_or_zero = |path: &Option<std::path::PathBuf>| match path {
        Some(p) => load_flow(p),
        None => Ok(FlowField::zeros(*gt.spec())),
    };
    let gt_flow = flow_or_zero(&args.flow_gt)?;
    let pred_flow = flow_or_zero(&args.flow_pred)?;
    let pooled = args.pooled || cfg.pooled.unwrap_or(false);
    let config = EvalConfig {
        thresholds: pick(args.thresholds.clone(), cfg.thresholds.clone(), DEFAULT_THRESHOLDS.to_vec()),
        classes: None,
        foreground: pick(args.foreground.clone(), cfg.foreground.clone(), DEFAULT_FOREGROUND.to_vec()),
        mave_threshold: pick(args.mave_threshold, cfg.mave_threshold, DEFAULT_MAVE_THRESHOLD),
        pooling: if pooled { MavePooling::Pooled } else { MavePooling::ClassMean },
    };
    let report = evaluate(&gt, &pred, &gt_flow, &pred_flow, &bundle, &config)?;
    let text = to_json(&report)?;
    print!("{text}");
    if let Some(out) = &args.out {
        write_text(out, &text)?;
    }
    Ok(())
}

/// JSON logits: scene logits per axis and per-voxel logits per axis.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitsDoc {
    scene_x: Vec<f64>,
    #[serde(default)]
    scene_y: Option<Vec<f64>>,
    voxel_x: Vec<Vec<f64>>,
    voxel_y: Vec<Vec<f64>>,
}

struct Logits {
    n_bins: usize,
    scene: [Vec<f64>; 2],
    /// Flat, `n_bins` per voxel.
    voxel: [Vec<f64>; 2],
}

fn flatten(rows: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    if let Some(row) = rows.iter().find(|r| r.len() != n) {
        return Err(anyhow!("voxel logits have {} entries, expected {n}", row.len()));
    }
    Ok(rows.concat())
}

/// Feature containers carry `[x bins | y bins]` per voxel; the scene logits
/// are the per-channel mean over voxels.
fn logits_from_features(features: &FeatureGrid) -> Result<Logits> {
    let c = features.channels();
    if c % 2 != 0 {
        return Err(anyhow!("logit container needs 2·n_bins channels, found {c}"));
    }
    let n = c / 2;
    let count = features.spec().len() as f64;
    let totals = features.channel_totals();
    let mean: Vec<f64> = totals.iter().map(|t| t / count).collect();
    let mut voxel = [Vec::new(), Vec::new()];
    for v in features.values().chunks(c) {
        voxel[0].extend_from_slice(&v[..n]);
        voxel[1].extend_from_slice(&v[n..]);
    }
    Ok(Logits { n_bins: n, scene: [mean[..n].to_vec(), mean[n..].to_vec()], voxel })
}

fn read_logits(path: &Path, shared: bool) -> Result<Logits> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&MAGIC) {
        return logits_from_features(&decode(&bytes)?.into_features()?);
    }
    let doc: LogitsDoc = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let n = doc.scene_x.len();
    let scene_y = match doc.scene_y {
        Some(y) => y,
        None if shared => doc.scene_x.clone(),
        None => return Err(anyhow!("scene_y is required unless --shared-bins is set")),
    };
    if doc.voxel_x.len() != doc.voxel_y.len() {
        return Err(anyhow!("voxel_x has {} rows, voxel_y has {}", doc.voxel_x.len(), doc.voxel_y.len()));
    }
    Ok(Logits {
        n_bins: n,
        voxel: [flatten(&doc.voxel_x, n)?, flatten(&doc.voxel_y, n)?],
        scene: [doc.scene_x, scene_y],
    })
}

#[derive(Debug, Serialize)]
struct GradCheck {
    voxels_checked: usize,
    max_rel_err: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct BinsReport {
    n_bins: usize,
    f_min: f64,
    f_max: f64,
    shared_bins: bool,
    scene_probs: [Vec<f64>; 2],
    centers: [Vec<f64>; 2],
    flows: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_check: Option<GradCheck>,
}

const GRAD_CHECK_VOXELS: usize = 16;
const GRAD_CHECK_STEP: f64 = 1e-6;
const GRAD_CHECK_TOL: f64 = 1e-6;

fn check_gradients(logits: &Logits, config: &BinConfig, shared: bool) -> Result<GradCheck> {
    let n = config.n_bins;
    let voxels = (logits.voxel[0].len() / n).min(GRAD_CHECK_VOXELS);
    let mut worst = 0.0f64;
    for axis in 0..2 {
        let scene = &logits.scene[if shared { 0 } else { axis }];
        for v in 0..voxels {
            let voxel = &logits.voxel[axis][v * n..(v + 1) * n];
            let (gs, gv) = grad_flow_from_logits(scene, voxel, config)?;
            let f = |s: &[f64], p: &[f64]| flow_from_logits(s, p, config).expect("finite logits");
            let ns = occkit_oracle::central_gradient(|x| f(x, voxel), scene, GRAD_CHECK_STEP);
            let nv = occkit_oracle::central_gradient(|x| f(scene, x), voxel, GRAD_CHECK_STEP);
            worst = worst
                .max(occkit_oracle::relative_error(&gs, &ns, 1e-8))
                .max(occkit_oracle::relative_error(&gv, &nv, 1e-8));
        }
    }
    Ok(GradCheck { voxels_checked: voxels, max_rel_err: worst, tolerance: GRAD_CHECK_TOL, passed: worst <= GRAD_CHECK_TOL })
}

pub fn bins(args: &BinsArgs, cfg: &FileConfig) -> Result<()> {
    let shared = args.shared_bins || cfg.shared_bins.unwrap_or(false);
    let logits = read_logits(&args.logits, shared)?;
    let defaults = BinConfig::default();
    if let Some(n) = args.n_bins.or(cfg.n_bins) {
        if n != logits.n_bins {
            return Err(anyhow!("--n-bins {n} does not match the {} bins in the logits", logits.n_bins));
        }
    }
    let config = BinConfig::new(
        logits.n_bins,
        pick(args.fmin, cfg.fmin, defaults.f_min),
        pick(args.fmax, cfg.fmax, defaults.f_max),
    )?;
    let model = BinModel::from_logits(
        config,
        [&logits.scene[0], &logits.scene[1]],
        [&logits.voxel[0], &logits.voxel[1]],
        shared,
    )?;
    let grad_check = if args.check_grad { Some(check_gradients(&logits, &config, shared)?) } else { None };
    let failed = grad_check.as_ref().is_some_and(|g| !g.passed);
    let report = BinsReport {
        n_bins: config.n_bins,
        f_min: config.f_min,
        f_max: config.f_max,
        shared_bins: shared,
        scene_probs: model.scene_probs().clone(),
        centers: model.centers(),
        flows: model.flows(),
        grad_check,
    };
    let text = to_json(&report)?;
    match &args.out {
        Some(out) => write_text(out, &text)?,
        None => print!("{text}"),
    }
    if failed {
        return Err(anyhow!("gradient check exceeded tolerance {GRAD_CHECK_TOL:e}"));
    }
    Ok(())
}

pub fn warp(args: &WarpArgs, cfg: &FileConfig) -> Result<()> {
    let features = load_features(&args.features)?;
    let flow = load_flow(&args.flow)?;
    let dt = pick(args.dt, cfg.dt, DEFAULT_DT);
    let warped = warp_forward(&features, &flow, dt)?;
    save_container(&args.out, &warped)?;
    print_json(&json!({
        "dt": dt,
        "channels": warped.channels(),
        "mass_in": features.channel_totals(),
        "mass_out": warped.channel_totals(),
    }))
}

pub fn warp_occ(args: &WarpOccArgs, cfg: &FileConfig) -> Result<()> {
    let current = load_occ(&args.gt)?;
    let flow = load_flow(&args.flow)?;
    let dt = pick(args.dt, cfg.dt, DEFAULT_DT);
    let soft = warp_occupancy(&current, &flow, dt)?;
    if let Some(out) = &args.out {
        save_container(out, &soft)?;
    }
    let score = match &args.gt_future {
        Some(path) => {
            let future = load_occ(path)?;
            let mask = args.mask.as_deref().map(load_mask).transpose()?;
            let eps = pick(args.eps, cfg.eps, DEFAULT_CE_EPS);
            Some(warp_score(&soft, &future, mask.as_ref(), eps)?)
        }
        None => None,
    };
    print_json(&json!({
        "dt": dt,
        "classes": soft.channels(),
        "mass": soft.channel_totals(),
        "warp_score": score,
    }))
}

pub fn synth(args: &SynthArgs, cfg: &FileConfig) -> Result<()> {
    let base = cfg.synth.clone().unwrap_or_default();
    let config = SynthConfig {
        seed: args.seed.or(cfg.seed).unwrap_or(base.seed),
        n_boxes: args.n_boxes.unwrap_or(base.n_boxes),
        dt: args.dt.or(cfg.dt).unwrap_or(base.dt),
        ..base
    };
    let pattern = resolve_pattern(args.pattern.as_deref(), cfg)?;
    let scene = synth_scene(&config)?;
    let bundle = generate_bundle(&scene.trajectory, &pattern)?;

    let dir = &args.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    save_container(dir.join("current.occ"), &scene.current)?;
    save_container(dir.join("future.occ"), &scene.future)?;
    save_container(dir.join("flow.flow"), &scene.flow)?;
    write_text(&dir.join("trajectory.json"), &to_json(&scene.trajectory)?)?;
    write_text(&dir.join("bundle.json"), &to_json(&bundle)?)?;
    print_json(&json!({
        "seed": config.seed,
        "dims": config.spec.dims,
        "occupied_current": scene.current.occupied_count(),
        "occupied_future": scene.future.occupied_count(),
        "moving_voxels": scene.flow.values().iter().filter(|v| **v != [0.0, 0.0]).count(),
        "rays": bundle.len(),
        "files": ["current.occ", "future.occ", "flow.flow", "trajectory.json", "bundle.json"],
    }))
}
