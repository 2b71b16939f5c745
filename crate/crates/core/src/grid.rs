//! Voxel grid data model.
//!
//! Every dense array in the crate uses the same C-order, x-major layout:
//! `linear = (x * ny + y) * nz + z`. The metric box is half-open,
//! `[origin, origin + dims * voxel_size)`, so points on the max faces fall
//! outside the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of semantic categories in the default label set, "free" included.
pub const DEFAULT_NUM_CLASSES: u8 = 17;
/// Default id of the free ("unoccupied") class: the last of the 17.
pub const DEFAULT_FREE_CLASS: u8 = 16;

/// Geometry of a regular voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Min corner of the box, meters.
    pub origin: [f64; 3],
    /// Edge length of a cubic voxel, meters.
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl Default for GridSpec {
    /// The 80 m x 80 m x 6.4 m box at 0.4 m used by the occupancy challenge.
    fn default() -> Self {
        GridSpec { origin: [-40.0, -40.0, -1.0], voxel_size: 0.4, dims: [200, 200, 16] }
    }
}

impl GridSpec {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        let spec = GridSpec { origin, voxel_size, dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(Error::InvalidSpec(format!("voxel_size must be > 0, got {}", self.voxel_size)));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidSpec(format!("dims must be >= 1, got {:?}", self.dims)));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("origin must be finite".into()));
        }
        if self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::InvalidSpec("voxel count overflows".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Max corner of the box.
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + self.dims[a] as f64 * self.voxel_size)
    }

    #[inline]
    pub fn contains(&self, index: [usize; 3]) -> bool {
        index[0] < self.dims[0] && index[1] < self.dims[1] && index[2] < self.dims[2]
    }

    #[inline]
    pub fn linear(&self, index: [usize; 3]) -> usize {
        (index[0] * self.dims[1] + index[1]) * self.dims[2] + index[2]
    }

    #[inline]
    pub fn unravel(&self, linear: usize) -> [usize; 3] {
        let z = linear % self.dims[2];
        let rest = linear / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], z]
    }

    /// Center of the voxel at `index`.
    pub fn voxel_to_world(&self, index: [usize; 3]) -> Result<[f64; 3]> {
        if !self.contains(index) {
            return Err(Error::IndexOutOfRange { index, dims: self.dims });
        }
        Ok(self.center_unchecked(index))
    }

    #[inline]
    pub(crate) fn center_unchecked(&self, index: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (index[a] as f64 + 0.5) * self.voxel_size)
    }

    /// Voxel containing `point`, or `None` outside the half-open box.
    pub fn world_to_voxel(&self, point: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let cell = ((point[a] - self.origin[a]) / self.voxel_size).floor();
            if !(cell >= 0.0 && cell < self.dims[a] as f64) {
                return None;
            }
            out[a] = cell as usize;
        }
        Some(out)
    }

    /// Continuous voxel coordinates: the grid min corner is 0, one unit per voxel.
    #[inline]
    pub fn to_voxel_coords(&self, point: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (point[a] - self.origin[a]) / self.voxel_size)
    }
}

/// Dense semantic label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    spec: GridSpec,
    labels: Vec<u8>,
    num_classes: u8,
    free_class: u8,
}

impl OccupancyGrid {
    pub fn new(spec: GridSpec, labels: Vec<u8>, num_classes: u8, free_class: u8) -> Result<Self> {
        spec.validate()?;
        if labels.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), found: labels.len() });
        }
        if free_class >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "free_class {free_class} must be below num_classes {num_classes}"
            )));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidLabel { label, index, num_classes });
        }
        Ok(OccupancyGrid { spec, labels, num_classes, free_class })
    }

    /// All-free grid with the default 17-class label set.
    pub fn empty(spec: GridSpec) -> Self {
        Self::filled(spec, DEFAULT_FREE_CLASS, DEFAULT_NUM_CLASSES, DEFAULT_FREE_CLASS)
    }

    pub fn filled(spec: GridSpec, label: u8, num_classes: u8, free_class: u8) -> Self {
        assert!(label < num_classes && free_class < num_classes);
        OccupancyGrid { spec, labels: vec![label; spec.len()], num_classes, free_class }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_classes(&self) -> u8 {
        self.num_classes
    }

    pub fn free_class(&self) -> u8 {
        self.free_class
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> u8 {
        self.labels[self.spec.linear(index)]
    }

    #[inline]
    pub fn is_occupied_linear(&self, linear: usize) -> bool {
        self.labels[linear] != self.free_class
    }

    /// Sets one label. Panics if `index` or `label` is out of range.
    pub fn set(&mut self, index: [usize; 3], label: u8) {
        assert!(label < self.num_classes, "label {label} out of range");
        let i = self.spec.linear(index);
        self.labels[i] = label;
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != self.free_class).count()
    }
}

/// Per-voxel (x, y) velocity in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    spec: GridSpec,
    flow: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn new(spec: GridSpec, flow: Vec<[f64; 2]>) -> Result<Self> {
        spec.validate()?;
        if flow.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), found: flow.len() });
        }
        if let Some(index) = flow.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(FlowField { spec, flow })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        FlowField { spec, flow: vec![[0.0; 2]; spec.len()] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.flow
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> [f64; 2] {
        self.flow[self.spec.linear(index)]
    }

    /// Panics on non-finite input.
    pub fn set(&mut self, index: [usize; 3], value: [f64; 2]) {
        assert!(value[0].is_finite() && value[1].is_finite());
        let i = self.spec.linear(index);
        self.flow[i] = value;
    }
}

/// Multi-channel real-valued grid; channels are the fastest-varying axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    spec: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(spec: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if channels == 0 {
            return Err(Error::InvalidArgument("channels must be >= 1".into()));
        }
        let expected = spec.len() * channels;
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, found: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(FeatureGrid { spec, channels, values })
    }

    pub fn zeros(spec: GridSpec, channels: usize) -> Self {
        assert!(channels >= 1);
        FeatureGrid { spec, channels, values: vec![0.0; spec.len() * channels] }
    }

    pub(crate) fn from_parts_unchecked(spec: GridSpec, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len() * channels);
        FeatureGrid { spec, channels, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Channel vector of one voxel.
    #[inline]
    pub fn voxel(&self, linear: usize) -> &[f64] {
        &self.values[linear * self.channels..(linear + 1) * self.channels]
    }

    /// Per-channel sum over the whole grid, accumulated in linear order.
    pub fn channel_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.channels];
        for chunk in self.values.chunks_exact(self.channels) {
            for (t, v) in totals.iter_mut().zip(chunk) {
                *t += v;
            }
        }
        totals
    }
}

/// Dense boolean grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    spec: GridSpec,
    bits: Vec<bool>,
}

impl VoxelMask {
    pub fn new(spec: GridSpec, bits: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if bits.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), found: bits.len() });
        }
        Ok(VoxelMask { spec, bits })
    }

    pub fn empty(spec: GridSpec) -> Self {
        VoxelMask { spec, bits: vec![false; spec.len()] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> bool {
        self.bits[self.spec.linear(index)]
    }

    pub fn set(&mut self, index: [usize; 3], value: bool) {
        let i = self.spec.linear(index);
        self.bits[i] = value;
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set voxel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &VoxelMask) -> bool {
        self.spec == other.spec && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Linear indices of set voxels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }
}

/// One ego pose: a world-frame position plus the sensor mounting height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default)]
    pub height: f64,
}

impl Pose {
    /// Sensor origin: position lifted by the height offset.
    pub fn sensor_origin(&self) -> [f64; 3] {
        [self.position[0], self.position[1], self.position[2] + self.height]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        let traj = Trajectory { poses };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if self.poses.iter().any(|p| p.position.iter().chain([&p.height]).any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("trajectory pose is not finite".into()));
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_spec(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::SpecMismatch)
    }
}
