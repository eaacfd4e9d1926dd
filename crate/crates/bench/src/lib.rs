//! Fixtures shared by the kernel benchmarks.

use layerwise_core::path::generate_raster;
use layerwise_core::{
    LayerMask, MaterialParams, MeshSpec, PartGeometry, PathSchedule, PlantOptions, RasterParams, Result,
    SystemMatrices,
};
use layerwise_core::thermal::build_system;

/// Rectangular block with a raster on its top layer.
pub struct Fixture {
    pub mesh: MeshSpec,
    pub geometry: PartGeometry,
    pub system: SystemMatrices,
    pub schedule: PathSchedule,
}

/// `n1 x n2` plane of 50 um elements, `window` layers deep, raster along y
/// at 0.8 m/s with a 100 um hatch.
pub fn block(n1: usize, n2: usize, window: usize) -> Result<Fixture> {
    let mesh = MeshSpec::new(n1, n2, window, 50e-6, 50e-6, 50e-6, 62.5e-6)?;
    let geometry = PartGeometry::extruded(LayerMask::full(n1, n2), window)?;
    let system = build_system(&mesh, &MaterialParams::steel(), &geometry, window, &PlantOptions::default())?;
    let rp = RasterParams { hatch: 100e-6, speed: 0.8, sample_period: 62.5e-6, angle_deg: 90.0 };
    let schedule = generate_raster(&geometry, &mesh, window, &rp)?;
    Ok(Fixture { mesh, geometry, system, schedule })
}
