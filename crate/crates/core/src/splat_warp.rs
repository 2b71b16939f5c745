//! Trilinear splatting and flow-driven forward warping.
//!
//! Positions are continuous voxel coordinates (grid min corner at 0, one unit
//! per voxel), so voxel `i` has its center at `i + 0.5`. Splat weights are
//! anchored at voxel centers: a sample at `p` spreads over the 8 cells around
//! `p - 0.5` with the usual trilinear coefficients. Neighbors outside the grid
//! are dropped together with their mass.
//!
//! Scatter-add runs in parallel over output x-slabs. Each slab reads its
//! contributing samples in a fixed order (lower anchor first, then sample
//! order), so results are bitwise identical for any worker count.

use arrayvec::ArrayVec;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_spec, FeatureGrid, FlowField, GridSpec, OccupancyGrid, VoxelMask};

/// Default time step between frames, seconds.
pub const DEFAULT_DT: f64 = 0.5;
/// Smoothing mass added to every class before the cross-entropy.
pub const DEFAULT_CE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SplatSample {
    /// Continuous voxel coordinates.
    pub position: [f64; 3],
    pub value: Vec<f64>,
}

/// Lower anchor and fractional offset of a lattice coordinate (`position - 0.5`).
#[inline]
fn anchor(q: f64) -> (i64, f64) {
    let base = q.floor();
    (base as i64, q - base)
}

/// Nonzero in-bounds trilinear weights of a sample at `position`.
pub fn splat_weights(position: [f64; 3], dims: [usize; 3]) -> ArrayVec<([usize; 3], f64), 8> {
    let mut out = ArrayVec::new();
    let mut base = [0i64; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        (base[a], frac[a]) = anchor(position[a] - 0.5);
    }
    for corner in 0..8 {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        let mut inside = true;
        for a in 0..3 {
            let up = (corner >> (2 - a)) & 1 == 1;
            let i = base[a] + up as i64;
            inside &= i >= 0 && i < dims[a] as i64;
            idx[a] = i.max(0) as usize;
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        if inside && w != 0.0 {
            out.push((idx, w));
        }
    }
    out
}

/// Deterministic scatter-add of `count` samples given in lattice coordinates
/// (`position - 0.5`).
fn scatter<'v>(
    spec: &GridSpec,
    channels: usize,
    count: usize,
    lattice: &(dyn Fn(usize) -> [f64; 3] + Sync),
    value: &(dyn Fn(usize) -> &'v [f64] + Sync),
) -> FeatureGrid {
    let [nx, ny, nz] = spec.dims;
    // buckets[b + 1] holds samples whose lower x anchor is b, for b in -1..nx
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx + 1];
    for i in 0..count {
        let q = lattice(i);
        if !q.iter().all(|v| v.is_finite()) {
            continue;
        }
        let (bx, _) = anchor(q[0]);
        if bx >= -1 && bx < nx as i64 {
            buckets[(bx + 1) as usize].push(i as u32);
        }
    }

    let slab = ny * nz * channels;
    let mut values = vec![0.0; spec.len() * channels];
    values.par_chunks_mut(slab).enumerate().for_each(|(x, out)| {
        // samples anchored at x - 1 reach this slab with their upper weight
        for (bucket, upper) in [(x, true), (x + 1, false)] {
            for &i in &buckets[bucket] {
                let i = i as usize;
                let q = lattice(i);
                let (_, fx) = anchor(q[0]);
                let wx = if upper { fx } else { 1.0 - fx };
                if wx == 0.0 {
                    continue;
                }
                let (by, fy) = anchor(q[1]);
                let (bz, fz) = anchor(q[2]);
                let v = value(i);
                for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                    let y = by + dy;
                    if wy == 0.0 || y < 0 || y >= ny as i64 {
                        continue;
                    }
                    for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                        let z = bz + dz;
                        if wz == 0.0 || z < 0 || z >= nz as i64 {
                            continue;
                        }
                        let w = wx * wy * wz;
                        let cell = ((y as usize) * nz + z as usize) * channels;
                        for (o, s) in out[cell..cell + channels].iter_mut().zip(v) {
                            *o += s * w;
                        }
                    }
                }
            }
        }
    });
    FeatureGrid::from_parts_unchecked(*spec, channels, values)
}

/// Scatter-adds samples into a fresh grid (inverse trilinear interpolation).
pub fn splat(samples: &[SplatSample], spec: &GridSpec, channels: usize) -> Result<FeatureGrid> {
    spec.validate()?;
    if channels == 0 {
        return Err(Error::InvalidArgument("channels must be >= 1".into()));
    }
    for s in samples {
        if s.value.len() != channels {
            return Err(Error::LengthMismatch { expected: channels, found: s.value.len() });
        }
        if !s.position.iter().chain(&s.value).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("splat samples must be finite".into()));
        }
    }
    Ok(scatter(
        spec,
        channels,
        samples.len(),
        &|i| samples[i].position.map(|p| p - 0.5),
        &|i| samples[i].value.as_slice(),
    ))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    Ok(())
}

/// Lattice coordinate of voxel `linear` after moving by its flow for `dt`.
#[inline]
fn displaced(spec: &GridSpec, flow: &FlowField, linear: usize, scale: f64) -> [f64; 3] {
    let [x, y, z] = spec.unravel(linear);
    let f = flow.values()[linear];
    [x as f64 + f[0] * scale, y as f64 + f[1] * scale, z as f64]
}

/// Moves every voxel's features along its flow and splats them into the next frame.
pub fn warp_forward(features: &FeatureGrid, flow: &FlowField, dt: f64) -> Result<FeatureGrid> {
    ensure_same_spec(features.spec(), flow.spec())?;
    check_dt(dt)?;
    let spec = *features.spec();
    let scale = dt / spec.voxel_size;
    Ok(scatter(
        &spec,
        features.channels(),
        spec.len(),
        &|i| displaced(&spec, flow, i, scale),
        &|i| features.voxel(i),
    ))
}

/// Transports one-hot labels of occupied voxels; channel `c` carries the
/// soft mass of class `c`. Free voxels emit nothing.
pub fn warp_occupancy(current: &OccupancyGrid, flow: &FlowField, dt: f64) -> Result<FeatureGrid> {
    ensure_same_spec(current.spec(), flow.spec())?;
    check_dt(dt)?;
    let spec = *current.spec();
    let k = current.num_classes() as usize;
    let mut one_hot = vec![0.0; k * k];
    for c in 0..k {
        one_hot[c * k + c] = 1.0;
    }
    let occupied: Vec<usize> = (0..spec.len()).filter(|&i| current.is_occupied_linear(i)).collect();
    let labels = current.labels();
    let scale = dt / spec.voxel_size;
    Ok(scatter(
        &spec,
        k,
        occupied.len(),
        &|j| displaced(&spec, flow, occupied[j], scale),
        &|j| {
            let c = labels[occupied[j]] as usize;
            &one_hot[c * k..(c + 1) * k]
        },
    ))
}

/// Mean cross-entropy of the smoothed warped class distribution against the
/// future labels, over voxels occupied in `future` (and set in `mask`, if given).
pub fn warp_score(warped: &FeatureGrid, future: &OccupancyGrid, mask: Option<&VoxelMask>, eps: f64) -> Result<f64> {
    ensure_same_spec(warped.spec(), future.spec())?;
    if let Some(m) = mask {
        ensure_same_spec(warped.spec(), m.spec())?;
    }
    if warped.channels() != future.num_classes() as usize {
        return Err(Error::LengthMismatch { expected: future.num_classes() as usize, found: warped.channels() });
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let k = warped.channels() as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &label) in future.labels().iter().enumerate() {
        if label == future.free_class() || mask.is_some_and(|m| !m.bits()[i]) {
            continue;
        }
        let mass = warped.voxel(i);
        let norm: f64 = mass.iter().sum::<f64>() + k * eps;
        let q = (mass[label as usize] + eps) / norm;
        total -= q.ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoValidVoxels);
    }
    Ok(total / count as f64)
}

/// Gradients of `sum(upstream * warp_forward(features, flow, dt))` with respect
/// to the features and to the flow.
///
/// The weights are piecewise linear in position; exactly on a lattice plane
/// the derivative is taken from the positive side.
pub fn grad_warp(
    features: &FeatureGrid,
    flow: &FlowField,
    dt: f64,
    upstream: &FeatureGrid,
) -> Result<(FeatureGrid, FlowField)> {
    ensure_same_spec(features.spec(), flow.spec())?;
    ensure_same_spec(features.spec(), upstream.spec())?;
    check_dt(dt)?;
    if upstream.channels() != features.channels() {
        return Err(Error::LengthMismatch { expected: features.channels(), found: upstream.channels() });
    }
    let spec = *features.spec();
    let channels = features.channels();
    let scale = dt / spec.voxel_size;
    let dims = spec.dims.map(|d| d as i64);

    let per_voxel: Vec<(Vec<f64>, [f64; 2])> = (0..spec.len())
        .into_par_iter()
        .map(|s| {
            let q = displaced(&spec, flow, s, scale);
            let src = features.voxel(s);
            let mut g_feat = vec![0.0; channels];
            let mut g_q = [0.0; 2];
            let mut base = [0i64; 3];
            let mut frac = [0f64; 3];
            for a in 0..3 {
                (base[a], frac[a]) = anchor(q[a]);
            }
            for corner in 0..8 {
                let mut t = [0i64; 3];
                let mut w = [0f64; 3];
                let mut dw = [0f64; 3];
                for a in 0..3 {
                    let up = (corner >> (2 - a)) & 1 == 1;
                    t[a] = base[a] + up as i64;
                    (w[a], dw[a]) = if up { (frac[a], 1.0) } else { (1.0 - frac[a], -1.0) };
                }
                if (0..3).any(|a| t[a] < 0 || t[a] >= dims[a]) {
                    continue;
                }
                let up_grad = upstream.voxel(spec.linear(t.map(|v| v as usize)));
                let weight = w[0] * w[1] * w[2];
                let mut dot = 0.0;
                for c in 0..channels {
                    g_feat[c] += weight * up_grad[c];
                    dot += src[c] * up_grad[c];
                }
                g_q[0] += dw[0] * w[1] * w[2] * dot;
                g_q[1] += w[0] * dw[1] * w[2] * dot;
            }
            (g_feat, [g_q[0] * scale, g_q[1] * scale])
        })
        .collect();

    let mut g_features = Vec::with_capacity(spec.len() * channels);
    let mut g_flow = Vec::with_capacity(spec.len());
    for (gf, gq) in per_voxel {
        g_features.extend_from_slice(&gf);
        g_flow.push(gq);
    }
    Ok((FeatureGrid::from_parts_unchecked(spec, channels, g_features), FlowField::new(spec, g_flow)?))
}
