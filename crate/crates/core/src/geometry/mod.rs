//! Spherical projection geometry, equirectangular rasters and the synthetic
//! world harness producing paired image / range data.

pub mod condition;
pub mod dataset;
pub mod image;
pub mod io;
pub mod map;
pub mod pose;
pub mod projection;
pub mod world;

pub use condition::{apply_condition, ConditionSpec};
pub use dataset::{generate_paired_dataset, PairedSample};
pub use image::{roll_columns, yaw_shift_equirect, EquirectImage, Panorama, RangeImage};
pub use map::{Aabb, PointCloudMap};
pub use pose::{Pose, Trajectory};
pub use projection::{project_points_to_range, render_view, GRID, R_MAX};
pub use world::{synthesize_world, synthesize_world_with, WorldConfig};
