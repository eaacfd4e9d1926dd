//! Layer-to-layer thermal modeling and spatial iterative learning control
//! for laser powder bed fusion.
//!
//! The crate covers the finite-difference conduction plant, raster paths and
//! voxel registration, the lifted layer-domain operators, controllability
//! diagnostics and the closed-loop layer driver.

pub mod config;
pub mod control;
pub mod error;
pub mod export;
pub mod geometry;
pub mod grid;
pub mod lift;
pub mod measurement;
pub mod path;
pub mod silc;
pub mod sparse;
pub mod thermal;

pub use config::{parse_config, GeometrySource, PulseConfig, RunConfig};
pub use error::{Error, Result};
pub use geometry::{LayerMask, PartGeometry};
pub use grid::{FlatIndex, MeshSpec, VoxelGridSpec, VoxelId};
pub use measurement::{CameraModel, MeasurementKind};
pub use path::{MaskShape, PathSchedule, RasterParams, SampleSets};
pub use thermal::{BottomBoundary, MaterialParams, PlantOptions, ResetOperator, SystemMatrices, ThermalState};
