//! Occupancy-and-flow toolkit: semantic voxel grids, virtual-LiDAR visibility
//! masks, ray-based occupancy metrics, adaptive-bin flow math and
//! trilinear splat/warp operators.
//!
//! All parallel entry points run on the ambient rayon pool. Their results do
//! not depend on the pool size.

pub mod container;
pub mod error;
pub mod flow_math;
pub mod grid;
pub mod metrics;
pub mod raycast;
pub mod splat_warp;
pub mod synth;

pub use container::{load_container, save_container, Container, ContainerRef};
pub use error::{Error, Result};
pub use grid::{FeatureGrid, FlowField, GridSpec, OccupancyGrid, Pose, Trajectory, VoxelMask};
pub use metrics::{MetricReport, RayEval};
pub use raycast::{RayBundle, RayHit, RayPattern};
