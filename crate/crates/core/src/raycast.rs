//! Virtual-LiDAR ray casting over occupancy grids.
//!
//! Traversal is incremental grid stepping (Amanatides & Woo): per axis we
//! track the ray parameter of the next lattice-plane crossing and always
//! advance along the axis whose crossing comes first. Exact ties step x
//! before y before z. Points lying exactly on a lattice plane belong to the
//! cell above it (floor semantics), matching [`GridSpec::world_to_voxel`].
//!
//! Masks are accumulated per worker and OR-merged, so they are bitwise
//! independent of the rayon pool size.

use std::f64::consts::PI;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, GridSpec, OccupancyGrid, Trajectory, VoxelMask};
use crate::grid::ensure_same_spec;

/// Accepted deviation of a direction's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Default dilation radius for the V2 mask, meters.
pub const DEFAULT_DILATE_RADIUS: f64 = 2.0;
/// Slack on the dilation radius so lattice points exactly on the sphere count.
const DILATE_SLACK: f64 = 1e-9;
/// Rays per parallel work item.
const RAY_CHUNK: usize = 512;

/// Beam layout of the virtual sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPattern {
    /// Elevation angles of the channels, radians.
    pub elevations: Vec<f64>,
    /// Azimuths per channel, spaced uniformly over [0, 2π) starting at 0.
    pub azimuth_count: usize,
    /// Meters.
    pub max_range: f64,
}

impl Default for RayPattern {
    /// 32 channels from -30° to +10°, 1800 azimuths (0.2°), 60 m.
    fn default() -> Self {
        let lo = -30f64.to_radians();
        let hi = 10f64.to_radians();
        let elevations = (0..32).map(|i| lo + (hi - lo) * i as f64 / 31.0).collect();
        RayPattern { elevations, azimuth_count: 1800, max_range: 60.0 }
    }
}

impl RayPattern {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_count == 0 {
            return Err(Error::InvalidArgument("azimuth_count must be >= 1".into()));
        }
        if self.elevations.is_empty() {
            return Err(Error::InvalidArgument("pattern needs at least one elevation".into()));
        }
        if self.elevations.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidArgument("elevations must be finite".into()));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::InvalidArgument(format!("max_range must be > 0, got {}", self.max_range)));
        }
        Ok(())
    }

    /// Unit directions, elevation-major then azimuth.
    pub fn directions(&self) -> Vec<[f64; 3]> {
        let n = self.azimuth_count;
        let mut out = Vec::with_capacity(self.elevations.len() * n);
        for &elev in &self.elevations {
            let (sin_e, cos_e) = elev.sin_cos();
            for k in 0..n {
                let (sin_a, cos_a) = (2.0 * PI * k as f64 / n as f64).sin_cos();
                out.push([cos_e * cos_a, cos_e * sin_a, sin_e]);
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    origins: Vec<[f64; 3]>,
    pattern: RayPattern,
}

/// Sensor origins sharing one beam pattern.
///
/// Serializes as `{"origins": [[x, y, z], ...], "pattern": {...}}`; the
/// per-origin directions are regenerated from the pattern on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BundleDoc", into = "BundleDoc")]
pub struct RayBundle {
    origins: Vec<[f64; 3]>,
    pattern: RayPattern,
    directions: Vec<[f64; 3]>,
}

impl TryFrom<BundleDoc> for RayBundle {
    type Error = Error;

    fn try_from(doc: BundleDoc) -> Result<Self> {
        RayBundle::new(doc.origins, doc.pattern)
    }
}

impl From<RayBundle> for BundleDoc {
    fn from(b: RayBundle) -> Self {
        BundleDoc { origins: b.origins, pattern: b.pattern }
    }
}

impl RayBundle {
    pub fn new(origins: Vec<[f64; 3]>, pattern: RayPattern) -> Result<Self> {
        pattern.validate()?;
        if origins.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if origins.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("ray origins must be finite".into()));
        }
        let directions = pattern.directions();
        Ok(RayBundle { origins, pattern, directions })
    }

    pub fn origins(&self) -> &[[f64; 3]] {
        &self.origins
    }

    pub fn pattern(&self) -> &RayPattern {
        &self.pattern
    }

    /// Directions shared by every origin.
    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn max_range(&self) -> f64 {
        self.pattern.max_range
    }

    pub fn len(&self) -> usize {
        self.origins.len() * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ray `i` in origin-major order.
    #[inline]
    pub fn ray(&self, i: usize) -> ([f64; 3], [f64; 3]) {
        let per = self.directions.len();
        (self.origins[i / per], self.directions[i % per])
    }

    pub fn rays(&self) -> impl Iterator<Item = ([f64; 3], [f64; 3])> + '_ {
        (0..self.len()).map(|i| self.ray(i))
    }
}

/// One virtual-LiDAR origin per pose, each carrying the full pattern.
pub fn generate_bundle(trajectory: &Trajectory, pattern: &RayPattern) -> Result<RayBundle> {
    trajectory.validate()?;
    RayBundle::new(trajectory.poses.iter().map(|p| p.sensor_origin()).collect(), pattern.clone())
}

/// First occupied voxel along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub hit: bool,
    /// Distance to the hit voxel's entry point; +∞ on a miss.
    pub depth: f64,
    pub voxel: [usize; 3],
    pub label: u8,
}

impl RayHit {
    pub const MISS: RayHit = RayHit { hit: false, depth: f64::INFINITY, voxel: [0; 3], label: 0 };
}

fn check_direction(direction: [f64; 3]) -> Result<()> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::NonUnitDirection { norm });
    }
    Ok(())
}

fn check_range(max_range: f64) -> Result<()> {
    if !(max_range.is_finite() && max_range >= 0.0) {
        return Err(Error::InvalidArgument(format!("max_range must be finite and >= 0, got {max_range}")));
    }
    Ok(())
}

/// Steps through every voxel the segment `[origin, origin + max_range * direction]`
/// passes, calling `visit(index, entry_depth_m)` in entry order until it breaks.
///
/// Inputs must already be validated.
fn walk<F>(spec: &GridSpec, origin: [f64; 3], direction: [f64; 3], max_range: f64, mut visit: F)
where
    F: FnMut([usize; 3], f64) -> ControlFlow<()>,
{
    let u0 = spec.to_voxel_coords(origin);
    let s_max = max_range / spec.voxel_size;
    let dims = spec.dims;

    let mut s_enter = 0.0f64;
    let mut s_exit = s_max;
    let mut entry_axis = None;
    for a in 0..3 {
        let n = dims[a] as f64;
        let d = direction[a];
        if d == 0.0 {
            if !(u0[a] >= 0.0 && u0[a] < n) {
                return;
            }
            continue;
        }
        let (mut t0, mut t1) = ((0.0 - u0[a]) / d, (n - u0[a]) / d);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > s_enter {
            s_enter = t0;
            entry_axis = Some(a);
        }
        s_exit = s_exit.min(t1);
    }
    if !(s_enter < s_exit) {
        return;
    }

    let mut idx = [0i64; 3];
    let mut next = [f64::INFINITY; 3];
    let mut step = [0i64; 3];
    for a in 0..3 {
        let n = dims[a] as i64;
        let d = direction[a];
        idx[a] = if entry_axis == Some(a) {
            if d > 0.0 { 0 } else { n - 1 }
        } else {
            ((u0[a] + d * s_enter).floor() as i64).clamp(0, n - 1)
        };
        if d > 0.0 {
            step[a] = 1;
            next[a] = ((idx[a] + 1) as f64 - u0[a]) / d;
        } else if d < 0.0 {
            step[a] = -1;
            next[a] = (idx[a] as f64 - u0[a]) / d;
        }
    }

    let mut s = s_enter;
    loop {
        let index = [idx[0] as usize, idx[1] as usize, idx[2] as usize];
        if visit(index, s * spec.voxel_size).is_break() {
            return;
        }
        let mut a = 0;
        if next[1] < next[a] {
            a = 1;
        }
        if next[2] < next[a] {
            a = 2;
        }
        if next[a] >= s_exit {
            return;
        }
        s = next[a];
        idx[a] += step[a];
        if idx[a] < 0 || idx[a] >= dims[a] as i64 {
            return;
        }
        let boundary = if step[a] > 0 { idx[a] + 1 } else { idx[a] };
        next[a] = (boundary as f64 - u0[a]) / direction[a];
    }
}

/// Voxels whose cells the segment passes through, in entry order.
pub fn traverse(spec: &GridSpec, origin: [f64; 3], direction: [f64; 3], max_range: f64) -> Result<Vec<[usize; 3]>> {
    check_direction(direction)?;
    check_range(max_range)?;
    let mut out = Vec::new();
    walk(spec, origin, direction, max_range, |v, _| {
        out.push(v);
        ControlFlow::Continue(())
    });
    Ok(out)
}

/// Like [`traverse`], paired with each voxel's entry depth in meters.
pub fn traverse_with_depth(
    spec: &GridSpec,
    origin: [f64; 3],
    direction: [f64; 3],
    max_range: f64,
) -> Result<Vec<([usize; 3], f64)>> {
    check_direction(direction)?;
    check_range(max_range)?;
    let mut out = Vec::new();
    walk(spec, origin, direction, max_range, |v, d| {
        out.push((v, d));
        ControlFlow::Continue(())
    });
    Ok(out)
}

fn first_hit_unchecked(grid: &OccupancyGrid, origin: [f64; 3], direction: [f64; 3], max_range: f64) -> RayHit {
    let spec = grid.spec();
    let mut result = RayHit::MISS;
    walk(spec, origin, direction, max_range, |v, depth| {
        let label = grid.get(v);
        if label != grid.free_class() {
            result = RayHit { hit: true, depth: depth.max(0.0), voxel: v, label };
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    result
}

/// First non-free voxel along the ray.
pub fn cast_first_hit(grid: &OccupancyGrid, origin: [f64; 3], direction: [f64; 3], max_range: f64) -> Result<RayHit> {
    check_direction(direction)?;
    check_range(max_range)?;
    Ok(first_hit_unchecked(grid, origin, direction, max_range))
}

/// First hits for every ray of the bundle, in bundle order.
pub fn cast_bundle(grid: &OccupancyGrid, bundle: &RayBundle) -> Vec<RayHit> {
    (0..bundle.len())
        .into_par_iter()
        .with_min_len(RAY_CHUNK)
        .map(|i| {
            let (o, d) = bundle.ray(i);
            first_hit_unchecked(grid, o, d, bundle.max_range())
        })
        .collect()
}

struct Visibility {
    visible: Vec<bool>,
    hits: Vec<bool>,
}

fn or_into(dst: &mut [bool], src: &[bool]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d |= *s;
    }
}

fn accumulate_visibility(grid: &OccupancyGrid, bundle: &RayBundle) -> Visibility {
    let spec = *grid.spec();
    let n = spec.len();
    let empty = || Visibility { visible: vec![false; n], hits: vec![false; n] };
    (0..bundle.len())
        .into_par_iter()
        .with_min_len(RAY_CHUNK)
        .fold(empty, |mut acc, i| {
            let (o, d) = bundle.ray(i);
            walk(&spec, o, d, bundle.max_range(), |v, _| {
                let li = spec.linear(v);
                acc.visible[li] = true;
                if grid.is_occupied_linear(li) {
                    acc.hits[li] = true;
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            acc
        })
        .reduce(empty, |mut a, b| {
            or_into(&mut a.visible, &b.visible);
            or_into(&mut a.hits, &b.hits);
            a
        })
}

/// Voxels seen by any ray, up to and including each ray's first occupied voxel.
pub fn visible_mask_v1(grid: &OccupancyGrid, bundle: &RayBundle) -> VoxelMask {
    let vis = accumulate_visibility(grid, bundle);
    VoxelMask::new(*grid.spec(), vis.visible).expect("mask length matches spec")
}

/// Integer offsets whose center distance from the origin cell is within `radius`.
pub fn ball_offsets(voxel_size: f64, radius: f64) -> Vec<[i64; 3]> {
    let reach = ((radius + DILATE_SLACK) / voxel_size).floor() as i64;
    let mut out = Vec::new();
    for dx in -reach..=reach {
        for dy in -reach..=reach {
            for dz in -reach..=reach {
                let d2 = (dx * dx + dy * dy + dz * dz) as f64;
                if d2.sqrt() * voxel_size <= radius + DILATE_SLACK {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// V1 plus every voxel whose center lies within `dilate_radius` meters of a
/// ray-visible occupied voxel's center.
pub fn visible_mask_v2(grid: &OccupancyGrid, bundle: &RayBundle, dilate_radius: f64) -> Result<VoxelMask> {
    if !(dilate_radius.is_finite() && dilate_radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("dilate radius must be >= 0, got {dilate_radius}")));
    }
    let spec = *grid.spec();
    let vis = accumulate_visibility(grid, bundle);
    let mut mask = VoxelMask::new(spec, vis.visible).expect("mask length matches spec");
    let offsets = ball_offsets(spec.voxel_size, dilate_radius);
    let dims = spec.dims.map(|d| d as i64);
    let bits = mask.bits_mut();
    for (li, _) in vis.hits.iter().enumerate().filter(|(_, &h)| h) {
        let c = spec.unravel(li).map(|v| v as i64);
        for off in &offsets {
            let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
            if (0..3).all(|a| p[a] >= 0 && p[a] < dims[a]) {
                bits[spec.linear(p.map(|v| v as usize))] = true;
            }
        }
    }
    Ok(mask)
}

/// Keeps the `ceil(fraction * count)` most uncertain voxels of `mask`.
/// Ties go to the lower linear index.
pub fn select_hard_examples(uncertainty: &FeatureGrid, mask: &VoxelMask, fraction: f64) -> Result<VoxelMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if uncertainty.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "uncertainty must have 1 channel, got {}",
            uncertainty.channels()
        )));
    }
    ensure_same_spec(uncertainty.spec(), mask.spec())?;
    let mut candidates: Vec<usize> = mask.indices().collect();
    // ceil with a small guard so 0.1 * 100 selects 10, not 11
    let keep = ((fraction * candidates.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let values = uncertainty.values();
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut out = VoxelMask::empty(*mask.spec());
    let bits = out.bits_mut();
    for &i in candidates.iter().take(keep.min(candidates.len())) {
        bits[i] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pose;

    fn unit_spec(n: [usize; 3]) -> GridSpec {
        GridSpec::new([0.0; 3], 1.0, n).unwrap()
    }

    #[test]
    fn four_azimuths_point_along_axes() {
        let traj = Trajectory::new(vec![Pose { position: [0.0; 3], height: 0.0 }]).unwrap();
        let pattern = RayPattern { elevations: vec![0.0], azimuth_count: 4, max_range: 10.0 };
        let bundle = generate_bundle(&traj, &pattern).unwrap();
        let expected = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]];
        assert_eq!(bundle.len(), 4);
        for (d, e) in bundle.directions().iter().zip(expected) {
            assert!(d.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-15), "{d:?} vs {e:?}");
        }
    }

    #[test]
    fn bundle_counts_and_elevation() {
        let poses = (0..3).map(|i| Pose { position: [i as f64, 0.0, 0.0], height: 1.5 }).collect();
        let traj = Trajectory::new(poses).unwrap();
        let pattern = RayPattern { elevations: vec![-0.1, 0.05], azimuth_count: 180, max_range: 10.0 };
        let bundle = generate_bundle(&traj, &pattern).unwrap();
        assert_eq!(bundle.len(), 1080);
        assert_eq!(bundle.origins()[2], [2.0, 0.0, 1.5]);
        for d in &bundle.directions()[..180] {
            assert!((d[2] - (-0.1f64).sin()).abs() < 1e-15);
            assert!((d.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(generate_bundle(&Trajectory { poses: vec![] }, &pattern), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn bundle_json_shape() {
        let bundle = RayBundle::new(
            vec![[1.0, 2.0, 3.0]],
            RayPattern { elevations: vec![0.0], azimuth_count: 2, max_range: 5.0 },
        )
        .unwrap();
        let json = serde_json::to_value(&bundle).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"origins": [[1.0, 2.0, 3.0]], "pattern": {"elevations": [0.0], "azimuth_count": 2, "max_range": 5.0}})
        );
        let back: RayBundle = serde_json::from_value(json).unwrap();
        assert_eq!(back, bundle);
        assert!(serde_json::from_str::<RayBundle>(r#"{"origins":[],"pattern":{"elevations":[0],"azimuth_count":1,"max_range":1}}"#).is_err());
    }

    #[test]
    fn traverse_axis_aligned_row() {
        let spec = unit_spec([6, 3, 3]);
        let path = traverse(&spec, [0.5, 1.5, 2.5], [1.0, 0.0, 0.0], 100.0).unwrap();
        assert_eq!(path, (0..6).map(|x| [x, 1, 2]).collect::<Vec<_>>());
        let short = traverse(&spec, [0.5, 1.5, 2.5], [1.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(short, vec![[0, 1, 2], [1, 1, 2], [2, 1, 2]]);
    }

    #[test]
    fn traverse_misses_and_enters_from_outside() {
        let spec = unit_spec([4, 4, 4]);
        assert!(traverse(&spec, [-1.0, 2.0, 2.0], [-1.0, 0.0, 0.0], 50.0).unwrap().is_empty());
        assert!(traverse(&spec, [-1.0, 5.0, 2.0], [1.0, 0.0, 0.0], 50.0).unwrap().is_empty());
        let from_outside = traverse_with_depth(&spec, [-2.0, 0.5, 0.5], [1.0, 0.0, 0.0], 50.0).unwrap();
        assert_eq!(from_outside.len(), 4);
        assert_eq!(from_outside[0], ([0, 0, 0], 2.0));
        assert!(traverse(&spec, [-2.0, 0.5, 0.5], [1.0, 0.0, 0.0], 1.5).unwrap().is_empty());
    }

    #[test]
    fn diagonal_tie_steps_x_first() {
        let spec = unit_spec([3, 3, 1]);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let path = traverse(&spec, [0.5, 0.5, 0.5], [d, d, 0.0], 10.0).unwrap();
        assert_eq!(path, vec![[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 0], [2, 2, 0]]);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let spec = unit_spec([2, 2, 2]);
        assert!(matches!(traverse(&spec, [0.5; 3], [1.0, 1.0, 0.0], 1.0), Err(Error::NonUnitDirection { .. })));
    }

    #[test]
    fn first_hit_rules() {
        let spec = GridSpec::new([0.0; 3], 0.4, [10, 3, 3]).unwrap();
        let mut grid = OccupancyGrid::empty(spec);
        let origin = spec.voxel_to_world([0, 1, 1]).unwrap();
        let miss = cast_first_hit(&grid, origin, [1.0, 0.0, 0.0], 100.0).unwrap();
        assert!(!miss.hit && miss.depth.is_infinite());

        grid.set([5, 1, 1], 3);
        let hit = cast_first_hit(&grid, origin, [1.0, 0.0, 0.0], 100.0).unwrap();
        assert!(hit.hit);
        assert_eq!((hit.voxel, hit.label), ([5, 1, 1], 3));
        assert!((hit.depth - 1.8).abs() < 1e-12, "{}", hit.depth);

        grid.set([0, 1, 1], 2);
        let inside = cast_first_hit(&grid, origin, [1.0, 0.0, 0.0], 100.0).unwrap();
        assert_eq!((inside.depth, inside.label), (0.0, 2));
    }

    #[test]
    fn wall_blocks_visibility() {
        let spec = unit_spec([8, 8, 1]);
        let mut grid = OccupancyGrid::empty(spec);
        for y in 0..8 {
            grid.set([3, y, 0], 0);
        }
        let bundle = RayBundle::new(
            vec![[1.5, 4.5, 0.5]],
            RayPattern { elevations: vec![0.0], azimuth_count: 64, max_range: 20.0 },
        )
        .unwrap();
        let mask = visible_mask_v1(&grid, &bundle);
        for x in 4..8 {
            for y in 0..8 {
                assert!(!mask.get([x, y, 0]), "voxel behind wall visible at {x},{y}");
            }
        }
        assert!(mask.get([3, 4, 0]));
    }

    #[test]
    fn free_scene_marks_traverse_set() {
        let spec = unit_spec([8, 8, 2]);
        let grid = OccupancyGrid::empty(spec);
        let pattern = RayPattern { elevations: vec![0.1], azimuth_count: 1, max_range: 30.0 };
        let bundle = RayBundle::new(vec![[0.3, 0.7, 0.2]], pattern).unwrap();
        let mask = visible_mask_v1(&grid, &bundle);
        let (o, d) = bundle.ray(0);
        let mut expected = VoxelMask::empty(spec);
        for v in traverse(&spec, o, d, 30.0).unwrap() {
            expected.set(v, true);
        }
        assert_eq!(mask, expected);
        let v2 = visible_mask_v2(&grid, &bundle, DEFAULT_DILATE_RADIUS).unwrap();
        assert_eq!(v2, mask);
    }

    #[test]
    fn ball_includes_sphere_surface() {
        let offsets = ball_offsets(0.4, 2.0);
        assert!(offsets.contains(&[5, 0, 0]));
        assert!(offsets.contains(&[3, 4, 0]));
        assert!(!offsets.contains(&[5, 1, 0]));
        assert_eq!(ball_offsets(0.4, 0.0), vec![[0, 0, 0]]);
    }

    #[test]
    fn hard_examples_tie_break_and_identity() {
        let spec = unit_spec([20, 1, 1]);
        let mut mask = VoxelMask::empty(spec);
        for x in (0..20).step_by(2) {
            mask.set([x, 0, 0], true);
        }
        let uniform = FeatureGrid::new(spec, 1, vec![0.5; 20]).unwrap();
        let half = select_hard_examples(&uniform, &mask, 0.5).unwrap();
        assert_eq!(half.indices().collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
        assert_eq!(select_hard_examples(&uniform, &mask, 1.0).unwrap(), mask);
        let none = select_hard_examples(&uniform, &VoxelMask::empty(spec), 0.3).unwrap();
        assert_eq!(none.count(), 0);
        assert!(select_hard_examples(&uniform, &mask, 0.0).is_err());
        assert!(select_hard_examples(&uniform, &mask, 1.5).is_err());
    }
}
