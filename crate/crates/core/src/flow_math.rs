//! Adaptive-bin flow regression.
//!
//! A scene-level softmax `b` partitions `[f_min, f_max]` into `n` bins whose
//! centers sit at the cumulative midpoint of each bin:
//!
//! `c_i = f_min + (f_max - f_min) * (b_i / 2 + sum_{j<i} b_j)`
//!
//! Each voxel predicts its own softmax `p` over the bins and the flow is the
//! convex combination `f = sum_k c_k p_k`. The x and y flow components use
//! independent bin sets unless the model is built with shared bins.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_spec, FlowField, OccupancyGrid};

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
/// Norm below which a flow vector has no direction.
pub const COSINE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinConfig {
    pub n_bins: usize,
    /// m/s
    pub f_min: f64,
    /// m/s
    pub f_max: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig { n_bins: 32, f_min: -25.0, f_max: 25.0 }
    }
}

impl BinConfig {
    pub fn new(n_bins: usize, f_min: f64, f_max: f64) -> Result<Self> {
        let config = BinConfig { n_bins, f_min, f_max };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
        }
        if !(self.f_min.is_finite() && self.f_max.is_finite() && self.f_min < self.f_max) {
            return Err(Error::InvalidArgument(format!(
                "flow range must satisfy f_min < f_max, got ({}, {})",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.f_max - self.f_min
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(softmax_unchecked(logits))
}

fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_simplex(v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument("probabilities must be non-negative".into()));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Bin centers from scene bin probabilities.
pub fn bin_centers(b: &[f64], config: &BinConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if b.len() != config.n_bins {
        return Err(Error::LengthMismatch { expected: config.n_bins, found: b.len() });
    }
    check_simplex(b)?;
    Ok(centers_unchecked(b, config))
}

fn centers_unchecked(b: &[f64], config: &BinConfig) -> Vec<f64> {
    let span = config.span();
    let mut below = 0.0;
    b.iter()
        .map(|&bi| {
            let c = config.f_min + span * (0.5 * bi + below);
            below += bi;
            c
        })
        .collect()
}

/// `sum_k c_k p_k`.
pub fn aggregate_flow(centers: &[f64], weights: &[f64]) -> Result<f64> {
    if centers.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: centers.len(), found: weights.len() });
    }
    Ok(dot(centers, weights))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobian `J[i][j] = dc_i / db_j`: the span times 1 below the diagonal,
/// 0.5 on it and 0 above.
pub fn grad_bin_centers(b: &[f64], config: &BinConfig) -> Vec<Vec<f64>> {
    let n = b.len();
    let span = config.span();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => span,
                    std::cmp::Ordering::Equal => 0.5 * span,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

/// `(df/dc, df/dp) = (p, c)`.
pub fn grad_aggregate(centers: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (weights.to_vec(), centers.to_vec())
}

/// Pulls a gradient with respect to softmax outputs back to the logits.
pub fn grad_through_softmax(logits: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if logits.len() != upstream.len() {
        return Err(Error::LengthMismatch { expected: logits.len(), found: upstream.len() });
    }
    let s = softmax(logits)?;
    let mean = dot(&s, upstream);
    Ok(s.iter().zip(upstream).map(|(si, ui)| si * (ui - mean)).collect())
}

/// `J^T p` without materializing `J`: `span * (p_j / 2 + sum_{i>j} p_i)`.
fn centers_vjp(weights: &[f64], config: &BinConfig) -> Vec<f64> {
    let span = config.span();
    let mut above = 0.0;
    let mut out = vec![0.0; weights.len()];
    for j in (0..weights.len()).rev() {
        out[j] = span * (0.5 * weights[j] + above);
        above += weights[j];
    }
    out
}

/// One flow component straight from scene and voxel logits.
pub fn flow_from_logits(scene_logits: &[f64], voxel_logits: &[f64], config: &BinConfig) -> Result<f64> {
    if scene_logits.len() != config.n_bins {
        return Err(Error::LengthMismatch { expected: config.n_bins, found: scene_logits.len() });
    }
    let b = softmax(scene_logits)?;
    let p = softmax(voxel_logits)?;
    aggregate_flow(&bin_centers(&b, config)?, &p)
}

/// Gradient of [`flow_from_logits`] with respect to (scene logits, voxel logits).
pub fn grad_flow_from_logits(
    scene_logits: &[f64],
    voxel_logits: &[f64],
    config: &BinConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = softmax(scene_logits)?;
    let p = softmax(voxel_logits)?;
    let centers = bin_centers(&b, config)?;
    let (df_dc, df_dp) = grad_aggregate(&centers, &p);
    let df_db = centers_vjp(&df_dc, config);
    Ok((grad_through_softmax(scene_logits, &df_db)?, grad_through_softmax(voxel_logits, &df_dp)?))
}

/// Scene bins plus per-voxel bin weights for both flow axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BinModel {
    config: BinConfig,
    /// Scene bin probabilities for x and y.
    scene_probs: [Vec<f64>; 2],
    /// Per-voxel weights for x and y, `n_bins` values per voxel.
    voxel_weights: [Vec<f64>; 2],
}

impl BinModel {
    /// Builds the model from logits. `voxel_logits[axis]` holds `n_bins`
    /// values per voxel. With `shared_bins`, the y axis reuses the x scene bins
    /// and `scene_logits[1]` is ignored.
    pub fn from_logits(
        config: BinConfig,
        scene_logits: [&[f64]; 2],
        voxel_logits: [&[f64]; 2],
        shared_bins: bool,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n_bins;
        let sx = softmax(scene_logits[0])?;
        let sy = if shared_bins { sx.clone() } else { softmax(scene_logits[1])? };
        for s in [&sx, &sy] {
            if s.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: s.len() });
            }
        }
        if voxel_logits[0].len() % n != 0 || voxel_logits[0].len() != voxel_logits[1].len() {
            return Err(Error::LengthMismatch { expected: voxel_logits[0].len(), found: voxel_logits[1].len() });
        }
        for logits in voxel_logits {
            if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        let weights = |logits: &[f64]| -> Vec<f64> {
            logits.par_chunks(n).flat_map_iter(softmax_unchecked).collect()
        };
        Ok(BinModel {
            config,
            scene_probs: [sx, sy],
            voxel_weights: [weights(voxel_logits[0]), weights(voxel_logits[1])],
        })
    }

    pub fn config(&self) -> &BinConfig {
        &self.config
    }

    pub fn scene_probs(&self) -> &[Vec<f64>; 2] {
        &self.scene_probs
    }

    pub fn voxel_count(&self) -> usize {
        self.voxel_weights[0].len() / self.config.n_bins
    }

    pub fn voxel_weights(&self, voxel: usize) -> [&[f64]; 2] {
        let n = self.config.n_bins;
        let r = voxel * n..(voxel + 1) * n;
        [&self.voxel_weights[0][r.clone()], &self.voxel_weights[1][r]]
    }

    pub fn centers(&self) -> [Vec<f64>; 2] {
        [
            centers_unchecked(&self.scene_probs[0], &self.config),
            centers_unchecked(&self.scene_probs[1], &self.config),
        ]
    }

    /// Aggregated (x, y) flow for every voxel.
    pub fn flows(&self) -> Vec<[f64; 2]> {
        let [cx, cy] = self.centers();
        let n = self.config.n_bins;
        self.voxel_weights[0]
            .par_chunks(n)
            .zip(self.voxel_weights[1].par_chunks(n))
            .map(|(px, py)| [dot(&cx, px), dot(&cy, py)])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLoss {
    /// Mean squared L2 distance.
    pub l2: f64,
    /// Mean cosine similarity over voxels where both vectors have a direction.
    /// 1.0 when no voxel qualifies.
    pub cos: f64,
    /// `l2 + lambda * (1 - cos)`.
    pub combined: f64,
}

/// Magnitude and direction losses between aligned flow lists.
pub fn flow_loss(pred: &[[f64; 2]], gt: &[[f64; 2]], lambda: f64) -> Result<FlowLoss> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: gt.len(), found: pred.len() });
    }
    if gt.is_empty() {
        return Err(Error::NoValidVoxels);
    }
    let mut sq = 0.0;
    let mut cos_sum = 0.0;
    let mut cos_n = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        let (dx, dy) = (p[0] - g[0], p[1] - g[1]);
        sq += dx * dx + dy * dy;
        let (np, ng) = (p[0].hypot(p[1]), g[0].hypot(g[1]));
        if np > COSINE_EPS && ng > COSINE_EPS {
            cos_sum += (p[0] * g[0] + p[1] * g[1]) / (np * ng);
            cos_n += 1;
        }
    }
    let l2 = sq / gt.len() as f64;
    let cos = if cos_n == 0 { 1.0 } else { cos_sum / cos_n as f64 };
    Ok(FlowLoss { l2, cos, combined: l2 + lambda * (1.0 - cos) })
}

/// [`flow_loss`] restricted to voxels occupied in `gt_occupancy`.
pub fn flow_loss_on_grid(
    pred: &FlowField,
    gt: &FlowField,
    gt_occupancy: &OccupancyGrid,
    lambda: f64,
) -> Result<FlowLoss> {
    ensure_same_spec(pred.spec(), gt.spec())?;
    ensure_same_spec(pred.spec(), gt_occupancy.spec())?;
    let (p, g): (Vec<_>, Vec<_>) = (0..gt_occupancy.labels().len())
        .filter(|&i| gt_occupancy.is_occupied_linear(i))
        .map(|i| (pred.values()[i], gt.values()[i]))
        .unzip();
    flow_loss(&p, &g, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_cases() {
        assert!(approx(&softmax(&[0.3; 4]).unwrap(), &[0.25; 4], 1e-15));
        assert_eq!(softmax(&[1000.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(approx(&softmax(&[0.0, 3f64.ln()]).unwrap(), &[0.25, 0.75], 1e-15));
        assert!(softmax(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn centers_examples() {
        let c = bin_centers(&[1.0], &BinConfig::new(1, -2.0, 2.0).unwrap()).unwrap();
        assert_eq!(c, vec![0.0]);
        let c = bin_centers(&[0.5, 0.5], &BinConfig::new(2, -1.0, 1.0).unwrap()).unwrap();
        assert_eq!(c, vec![-0.5, 0.5]);
        let c = bin_centers(&[0.2, 0.3, 0.5], &BinConfig::new(3, 0.0, 10.0).unwrap()).unwrap();
        assert!(approx(&c, &[1.0, 3.5, 7.5], 1e-12), "{c:?}");
    }

    #[test]
    fn centers_reject_bad_input() {
        let cfg = BinConfig::new(2, 0.0, 1.0).unwrap();
        assert!(bin_centers(&[0.5, 0.6], &cfg).is_err());
        assert!(bin_centers(&[1.2, -0.2], &cfg).is_err());
        assert!(bin_centers(&[1.0], &cfg).is_err());
        assert!(BinConfig::new(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_flow(&[-0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(aggregate_flow(&[1.0, 3.5, 7.5], &[0.0, 1.0, 0.0]).unwrap(), 3.5);
        assert!((aggregate_flow(&[1.0, 3.5, 7.5], &[0.2, 0.3, 0.5]).unwrap() - 5.0).abs() < 1e-12);
        assert!(aggregate_flow(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn jacobian_closed_form() {
        let j = grad_bin_centers(&[0.5, 0.5], &BinConfig::new(2, -1.0, 1.0).unwrap());
        assert_eq!(j, vec![vec![1.0, 0.0], vec![2.0, 1.0]]);
        let (dc, dp) = grad_aggregate(&[1.0, 3.5, 7.5], &[0.2, 0.3, 0.5]);
        assert_eq!(dp, vec![1.0, 3.5, 7.5]);
        assert_eq!(dc, vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn vjp_matches_dense_jacobian() {
        let cfg = BinConfig::new(4, -3.0, 5.0).unwrap();
        let b = [0.1, 0.2, 0.3, 0.4];
        let p = [0.4, 0.1, 0.3, 0.2];
        let j = grad_bin_centers(&b, &cfg);
        let dense: Vec<f64> = (0..4).map(|col| (0..4).map(|row| j[row][col] * p[row]).sum()).collect();
        assert!(approx(&centers_vjp(&p, &cfg), &dense, 1e-12));
    }

    #[test]
    fn losses() {
        let gt = [[1.0, 2.0], [-3.0, 0.5]];
        let same = flow_loss(&gt, &gt, 1.0).unwrap();
        assert_eq!(same.l2, 0.0);
        assert!((same.cos - 1.0).abs() < 1e-15);
        assert!(same.combined.abs() < 1e-15);
        let neg: Vec<_> = gt.iter().map(|v| [-v[0], -v[1]]).collect();
        assert!((flow_loss(&neg, &gt, 1.0).unwrap().cos + 1.0).abs() < 1e-15);
        let zero = flow_loss(&[[0.0; 2]], &[[0.0; 2]], 1.0).unwrap();
        assert_eq!((zero.cos, zero.combined), (1.0, 0.0));
        assert!(matches!(flow_loss(&[], &[], 1.0), Err(Error::NoValidVoxels)));
    }

    #[test]
    fn bin_model_flows() {
        let cfg = BinConfig::new(2, -1.0, 1.0).unwrap();
        let scene = [0.0, 0.0];
        let voxels = [0.0, 0.0, 50.0, -50.0];
        let model = BinModel::from_logits(cfg, [&scene, &scene], [&voxels, &voxels], false).unwrap();
        let flows = model.flows();
        assert_eq!(model.voxel_count(), 2);
        assert!(flows[0][0].abs() < 1e-15);
        assert!((flows[1][1] + 0.5).abs() < 1e-12);
        assert!(BinModel::from_logits(cfg, [&scene, &scene], [&voxels[..3], &voxels[..3]], false).is_err());
    }
}
