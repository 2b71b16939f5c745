//! Slow, independent reference implementations.
//!
//! Nothing here calls into the algorithms of `occkit-core`; only its data
//! types are shared. Each function recomputes its result the obvious way
//! (dense sampling, exhaustive scans, full sorts, direct sums) so the fast
//! paths can be checked against it.

use std::collections::{BTreeMap, BTreeSet};

use occkit_core::{FeatureGrid, FlowField, GridSpec, OccupancyGrid, RayBundle, RayEval, VoxelMask};

/// Sampling step of the marching oracle, in voxels.
pub const MARCH_STEP: f64 = 1e-3;
/// Width at which bisection of a cell transition stops, in voxels.
const BISECT_WIDTH: f64 = 1e-13;

fn lattice_cell(spec: &GridSpec, origin: [f64; 3], dir: [f64; 3], s: f64) -> [i64; 3] {
    let t = s * spec.voxel_size;
    std::array::from_fn(|a| ((origin[a] + dir[a] * t - spec.origin[a]) / spec.voxel_size).floor() as i64)
}

fn l1(a: [i64; 3], b: [i64; 3]) -> i64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).sum()
}

/// Appends every cell entered in `(lo, hi]`, resolving multi-axis jumps
/// between samples by bisection.
fn resolve(
    spec: &GridSpec,
    origin: [f64; 3],
    dir: [f64; 3],
    (lo, c_lo): (f64, [i64; 3]),
    (hi, c_hi): (f64, [i64; 3]),
    out: &mut Vec<([i64; 3], f64)>,
) {
    if c_lo == c_hi {
        return;
    }
    if hi - lo <= BISECT_WIDTH {
        out.push((c_hi, hi));
        return;
    }
    if l1(c_lo, c_hi) == 1 {
        let (mut a, mut b) = (lo, hi);
        while b - a > BISECT_WIDTH {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if lattice_cell(spec, origin, dir, m) == c_lo {
                a = m;
            } else {
                b = m;
            }
        }
        out.push((c_hi, b));
        return;
    }
    let mid = 0.5 * (lo + hi);
    let c_mid = lattice_cell(spec, origin, dir, mid);
    resolve(spec, origin, dir, (lo, c_lo), (mid, c_mid), out);
    resolve(spec, origin, dir, (mid, c_mid), (hi, c_hi), out);
}

/// Cells along the segment with their entry depth in meters, found by
/// marching at [`MARCH_STEP`] voxels and keeping the in-box cells.
pub fn march(spec: &GridSpec, origin: [f64; 3], dir: [f64; 3], max_range: f64) -> Vec<([usize; 3], f64)> {
    let s_max = max_range / spec.voxel_size;
    let first = lattice_cell(spec, origin, dir, 0.0);
    let mut cells = vec![(first, 0.0)];
    let steps = (s_max / MARCH_STEP).ceil() as usize;
    let mut prev = (0.0, first);
    for k in 1..=steps {
        let s = (k as f64 * MARCH_STEP).min(s_max);
        let c = lattice_cell(spec, origin, dir, s);
        resolve(spec, origin, dir, prev, (s, c), &mut cells);
        prev = (s, c);
    }
    cells
        .into_iter()
        .filter(|(c, _)| (0..3).all(|a| c[a] >= 0 && c[a] < spec.dims[a] as i64))
        .map(|(c, s)| (c.map(|v| v as usize), s * spec.voxel_size))
        .collect()
}

/// First occupied cell along the ray as (voxel, label, entry depth).
pub fn march_first_hit(
    grid: &OccupancyGrid,
    origin: [f64; 3],
    dir: [f64; 3],
    max_range: f64,
) -> Option<([usize; 3], u8, f64)> {
    march(grid.spec(), origin, dir, max_range)
        .into_iter()
        .find(|(v, _)| grid.get(*v) != grid.free_class())
        .map(|(v, d)| (v, grid.get(v), d.max(0.0)))
}

fn center_distance(spec: &GridSpec, a: [usize; 3], b: [usize; 3]) -> f64 {
    let pa = spec.voxel_to_world(a).unwrap();
    let pb = spec.voxel_to_world(b).unwrap();
    (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum::<f64>().sqrt()
}

/// Voxels within `radius` (plus 1e-9 m slack) of `center`, by scanning the grid.
pub fn ball_count(spec: &GridSpec, center: [usize; 3], radius: f64) -> usize {
    (0..spec.len()).filter(|&i| center_distance(spec, spec.unravel(i), center) <= radius + 1e-9).count()
}

/// Visibility mask built from [`march`], optionally dilated around hits by an
/// exhaustive center-distance scan.
pub fn visible_mask(grid: &OccupancyGrid, bundle: &RayBundle, dilate: Option<f64>) -> VoxelMask {
    let spec = *grid.spec();
    let mut mask = VoxelMask::empty(spec);
    let mut hits = BTreeSet::new();
    for (o, d) in bundle.rays() {
        for (v, _) in march(&spec, o, d, bundle.max_range()) {
            mask.set(v, true);
            if grid.get(v) != grid.free_class() {
                hits.insert(v);
                break;
            }
        }
    }
    if let Some(radius) = dilate {
        for i in 0..spec.len() {
            let v = spec.unravel(i);
            if hits.iter().any(|&h| center_distance(&spec, v, h) <= radius + 1e-9) {
                mask.set(v, true);
            }
        }
    }
    mask
}

/// The top `ceil(fraction * n)` masked voxels by a full sort.
pub fn hard_examples(uncertainty: &FeatureGrid, mask: &VoxelMask, fraction: f64) -> VoxelMask {
    let mut items: Vec<(f64, usize)> =
        mask.indices().map(|i| (uncertainty.values()[i], i)).collect();
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let keep = (fraction * items.len() as f64 - 1e-9).ceil() as usize;
    let mut out = VoxelMask::empty(*mask.spec());
    for &(_, i) in items.iter().take(keep) {
        out.set(mask.spec().unravel(i), true);
    }
    out
}

/// RayIoU by explicit set algebra over ray ids.
pub fn ray_iou(evals: &[RayEval], threshold: f64, classes: &[u8]) -> (f64, BTreeMap<u8, f64>) {
    let mut per_class = BTreeMap::new();
    for &c in classes {
        let gt: BTreeSet<usize> =
            (0..evals.len()).filter(|&i| evals[i].gt_hit.hit && evals[i].gt_hit.label == c).collect();
        let pred: BTreeSet<usize> =
            (0..evals.len()).filter(|&i| evals[i].pred_hit.hit && evals[i].pred_hit.label == c).collect();
        let tp: BTreeSet<usize> = gt
            .intersection(&pred)
            .copied()
            .filter(|&i| (evals[i].gt_hit.depth - evals[i].pred_hit.depth).abs() <= threshold)
            .collect();
        let fp = pred.difference(&tp).count();
        let fn_ = gt.difference(&tp).count();
        let denom = tp.len() + fp + fn_;
        if denom > 0 {
            per_class.insert(c, tp.len() as f64 / denom as f64);
        }
    }
    let mean = if per_class.is_empty() { 1.0 } else { per_class.values().sum::<f64>() / per_class.len() as f64 };
    (mean, per_class)
}

fn class_mean(errors: BTreeMap<u8, Vec<f64>>) -> f64 {
    if errors.is_empty() {
        return 1.0;
    }
    let means: Vec<f64> = errors.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    means.iter().sum::<f64>() / means.len() as f64
}

fn flow_err(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn mave_tp(evals: &[RayEval], threshold: f64, foreground: &[u8]) -> f64 {
    let mut errors: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for e in evals {
        let (g, p) = (e.gt_hit, e.pred_hit);
        if g.hit && p.hit && g.label == p.label && foreground.contains(&g.label) && (g.depth - p.depth).abs() <= threshold {
            errors.entry(g.label).or_default().push(flow_err(e.pred_flow, e.gt_flow));
        }
    }
    class_mean(errors)
}

pub fn mave_lq(evals: &[RayEval], foreground: &[u8]) -> f64 {
    let mut errors: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for e in evals {
        if e.gt_hit.hit && e.pred_hit.hit && foreground.contains(&e.gt_hit.label) {
            errors.entry(e.gt_hit.label).or_default().push(flow_err(e.pred_flow, e.gt_flow));
        }
    }
    class_mean(errors)
}

pub fn mave_per_voxel(
    gt: &OccupancyGrid,
    pred: &OccupancyGrid,
    gt_flow: &FlowField,
    pred_flow: &FlowField,
    foreground: &[u8],
) -> f64 {
    let spec = gt.spec();
    let mut errors: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for i in 0..spec.len() {
        let v = spec.unravel(i);
        let (g, p) = (gt.get(v), pred.get(v));
        if g == p && foreground.contains(&g) {
            errors.entry(g).or_default().push(flow_err(pred_flow.get(v), gt_flow.get(v)));
        }
    }
    class_mean(errors)
}

/// Bin centers by summing the preceding probabilities explicitly for every bin.
pub fn bin_centers(b: &[f64], f_min: f64, f_max: f64) -> Vec<f64> {
    (0..b.len())
        .map(|i| {
            let below: f64 = b[..i].iter().sum();
            f_min + (f_max - f_min) * (b[i] / 2.0 + below)
        })
        .collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function, `J[i][j] = d f_i / d x_j`.
pub fn central_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut probe = x.to_vec();
    let cols: Vec<Vec<f64>> = (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
        })
        .collect();
    let rows = cols.first().map_or(0, |c| c.len());
    (0..rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// `max |a - n| / max(max |a|, max |n|, floor)`: error relative to the
/// gradient's own scale.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(floor, |m, v| m.max(v.abs()));
    let worst = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    worst / scale
}

/// Sequential scatter-add of `(position, value)` samples, position in
/// continuous voxel coordinates (voxel `i` centered at `i + 0.5`).
pub fn splat(spec: &GridSpec, channels: usize, samples: &[([f64; 3], Vec<f64>)]) -> Vec<f64> {
    let mut out = vec![0.0; spec.len() * channels];
    for (pos, value) in samples {
        let q: Vec<f64> = pos.iter().map(|p| p - 0.5).collect();
        let base: Vec<f64> = q.iter().map(|v| v.floor()).collect();
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    let off = [dx, dy, dz];
                    let mut w = 1.0;
                    let mut idx = [0i64; 3];
                    for a in 0..3 {
                        let f = q[a] - base[a];
                        w *= if off[a] == 1 { f } else { 1.0 - f };
                        idx[a] = base[a] as i64 + off[a];
                    }
                    if (0..3).any(|a| idx[a] < 0 || idx[a] >= spec.dims[a] as i64) {
                        continue;
                    }
                    let li = spec.linear(idx.map(|v| v as usize));
                    for c in 0..channels {
                        out[li * channels + c] += w * value[c];
                    }
                }
            }
        }
    }
    out
}

/// Forward warp by explicit per-voxel displacement in world coordinates.
pub fn warp(features: &FeatureGrid, flow: &FlowField, dt: f64) -> Vec<f64> {
    let spec = features.spec();
    let c = features.channels();
    let samples: Vec<([f64; 3], Vec<f64>)> = (0..spec.len())
        .map(|i| {
            let v = spec.unravel(i);
            let center = spec.voxel_to_world(v).unwrap();
            let f = flow.get(v);
            let dest = [center[0] + f[0] * dt, center[1] + f[1] * dt, center[2]];
            let pos = std::array::from_fn(|a| (dest[a] - spec.origin[a]) / spec.voxel_size);
            (pos, features.values()[i * c..(i + 1) * c].to_vec())
        })
        .collect();
    splat(spec, c, &samples)
}

/// Per-class warped mass by transporting one-hot samples of occupied voxels.
pub fn warp_occupancy(current: &OccupancyGrid, flow: &FlowField, dt: f64) -> Vec<f64> {
    let spec = current.spec();
    let k = current.num_classes() as usize;
    let mut samples = Vec::new();
    for i in 0..spec.len() {
        let v = spec.unravel(i);
        let label = current.get(v);
        if label == current.free_class() {
            continue;
        }
        let center = spec.voxel_to_world(v).unwrap();
        let f = flow.get(v);
        let dest = [center[0] + f[0] * dt, center[1] + f[1] * dt, center[2]];
        let mut one_hot = vec![0.0; k];
        one_hot[label as usize] = 1.0;
        samples.push((std::array::from_fn(|a| (dest[a] - spec.origin[a]) / spec.voxel_size), one_hot));
    }
    splat(spec, k, &samples)
}

/// Mean per-voxel cross-entropy, written out directly.
pub fn warp_score(mass: &[f64], channels: usize, future: &OccupancyGrid, eps: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (i, &label) in future.labels().iter().enumerate() {
        if label == future.free_class() {
            continue;
        }
        let cell = &mass[i * channels..(i + 1) * channels];
        let smoothed: Vec<f64> = cell.iter().map(|m| m + eps).collect();
        let z: f64 = smoothed.iter().sum();
        total += -(smoothed[label as usize] / z).ln();
        n += 1;
    }
    total / n as f64
}
