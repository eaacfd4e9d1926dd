//! Spatial iterative learning control and the layer-by-layer build driver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PartGeometry;
use crate::grid::{MeshSpec, VoxelGridSpec, VoxelId};
use crate::lift::PMode;
use crate::measurement::MeasurementKind;
use crate::path::{generate_raster, layer_angle, register_samples, MaskShape, PathSchedule, RasterParams, SampleSets};
use crate::thermal::{
    build_system, recoat_and_shift, simulate_layer, MaterialParams, PlantOptions, ResetOperator, ThermalState,
};

/// Desired voxel output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Value(f64),
    /// Mean centre-region output of the last uncontrolled layer.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilcConfig {
    pub gamma: f64,
    pub reference: Reference,
    /// Power of every voxel before learning starts (W).
    pub u_nominal: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Clamp updated powers to `[u_min, u_max]`.
    pub saturate: bool,
    /// Last layer built at nominal power; its error drives the first update.
    pub start_layer: usize,
}

impl Default for SilcConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            reference: Reference::Auto,
            u_nominal: 250.0,
            u_min: 0.0,
            u_max: 400.0,
            saturate: true,
            start_layer: 10,
        }
    }
}

impl SilcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::Argument(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.u_min <= self.u_nominal && self.u_nominal <= self.u_max) {
            return Err(Error::Argument(format!(
                "nominal power {} outside [{}, {}]",
                self.u_nominal, self.u_min, self.u_max
            )));
        }
        if self.start_layer == 0 {
            return Err(Error::Argument("start layer must be at least 1".into()));
        }
        Ok(())
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        self.saturate.then_some((self.u_min, self.u_max))
    }
}

/// `u + gamma e`, optionally clamped to `bounds`.
pub fn silc_update(u: &DVector<f64>, e: &DVector<f64>, gamma: f64, bounds: Option<(f64, f64)>) -> Result<DVector<f64>> {
    if u.len() != e.len() {
        return Err(Error::Dimension(format!("power map has {} voxels, error map {}", u.len(), e.len())));
    }
    let mut next = u + e * gamma;
    if let Some((lo, hi)) = bounds {
        next.apply(|v| *v = v.clamp(lo, hi));
    }
    Ok(next)
}

/// `y_d - y_s`; a one-entry `y_d` is broadcast.
pub fn error(y_d: &DVector<f64>, y_s: &DVector<f64>) -> Result<DVector<f64>> {
    match y_d.len() {
        1 => Ok(y_s.map(|y| y_d[0] - y)),
        n if n == y_s.len() => Ok(y_d - y_s),
        n => Err(Error::Dimension(format!("reference has {n} entries, output {}", y_s.len()))),
    }
}

/// Spectral radius of `I - gamma G_s`.
pub fn convergence_margin(gs: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    if !gs.is_square() {
        return Err(Error::Dimension("G_s must be square".into()));
    }
    let n = gs.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::identity(n, n) - gs * gamma;
    let eig = m.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("eigenvalue iteration did not converge".into()));
    }
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Carries voxel powers to the next layer's voxel set. Voxels seen in both
/// keep their value; new ones start at `u_nominal`. Both lists are sorted.
pub fn transfer_between_layers(
    u: &DVector<f64>,
    from: &[VoxelId],
    to: &[VoxelId],
    u_nominal: f64,
) -> Result<DVector<f64>> {
    if u.len() != from.len() {
        return Err(Error::Dimension(format!("{} powers for {} voxels", u.len(), from.len())));
    }
    Ok(DVector::from_iterator(
        to.len(),
        to.iter().map(|v| from.binary_search(v).map_or(u_nominal, |k| u[k])),
    ))
}

/// Region of a voxel in the build summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Region {
    Center,
    Edge,
    Corner,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Center => "center",
            Region::Edge => "edge",
            Region::Corner => "corner",
        }
    }
}

/// Region flags of each voxel in `sets`: corner voxels hold a sample from
/// the last `corner_lines` scan lines, edge voxels hold the first or last
/// sample of some scan line.
pub fn classify_regions(sched: &PathSchedule, sets: &SampleSets, corner_lines: usize) -> Vec<(bool, bool)> {
    let n = sched.steps().len();
    let mut endpoint = vec![false; n];
    let mut late = vec![false; n];
    let lines = sched.lines();
    for (k, line) in lines.iter().enumerate() {
        if line.samples.is_empty() {
            continue;
        }
        endpoint[line.samples.start] = true;
        endpoint[line.samples.end - 1] = true;
        if k + corner_lines >= lines.len() {
            late[line.samples.clone()].iter_mut().for_each(|f| *f = true);
        }
    }
    sets.sets()
        .iter()
        .map(|s| (s.iter().any(|&i| endpoint[i]), s.iter().any(|&i| late[i])))
        .collect()
}

/// Plant side of a closed-loop build.
#[derive(Debug, Clone)]
pub struct PlantConfig {
    pub mesh: MeshSpec,
    pub material: MaterialParams,
    pub geometry: PartGeometry,
    pub options: PlantOptions,
    pub measurement: MeasurementKind,
    pub mask: MaskShape,
    pub reset: ResetOperator,
}

/// Path and voxel registration side of a closed-loop build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub hatch: f64,
    pub speed: f64,
    pub base_angle_deg: f64,
    pub rotation_deg: f64,
    /// Mesh elements per voxel side.
    pub voxel_size: usize,
    pub p_mode: PMode,
    /// Scan lines at the end of each layer counted as the corner region.
    pub corner_lines: usize,
}

impl PathConfig {
    pub fn raster(&self, mesh: &MeshSpec, substeps: usize, layer: usize) -> RasterParams {
        RasterParams {
            hatch: self.hatch,
            speed: self.speed,
            sample_period: mesh.dt * substeps as f64,
            angle_deg: layer_angle(layer, self.base_angle_deg, self.rotation_deg),
        }
    }
}

/// Voxel grid shared by every layer: anchored at the part bounding box.
pub fn voxel_grid(geom: &PartGeometry, voxel_size: usize) -> Result<VoxelGridSpec> {
    let (lo, hi) = geom.bounding_box();
    VoxelGridSpec::covering(lo, hi, (voxel_size, voxel_size))
}

/// One built layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub layer: usize,
    pub angle_deg: f64,
    pub n_t: usize,
    pub voxels: Vec<VoxelId>,
    pub coords: Vec<(usize, usize)>,
    /// `(edge, corner)` flags per voxel.
    pub flags: Vec<(bool, bool)>,
    /// Power applied in this layer.
    pub u_s: DVector<f64>,
    pub y_s: DVector<f64>,
    pub e_s: DVector<f64>,
    /// Whether `u_s` came from learning rather than the nominal power.
    pub controlled: bool,
}

impl LayerRecord {
    pub fn region(&self, i: usize) -> Region {
        match self.flags[i] {
            (_, true) => Region::Corner,
            (true, false) => Region::Edge,
            _ => Region::Center,
        }
    }

    /// Means of `(y_s, u_s, |e_s|)` over a region, or `None` if it is empty.
    /// The error term reads 0 until the reference is known.
    pub fn region_means(&self, r: Region) -> Option<(f64, f64, f64)> {
        let idx: Vec<usize> = (0..self.voxels.len()).filter(|&i| self.region(i) == r).collect();
        if idx.is_empty() {
            return None;
        }
        let k = idx.len() as f64;
        let s = idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| (a + self.y_s[i], b + self.u_s[i], c + self.e_s.get(i).map_or(0.0, |e| e.abs())));
        Some((s.0 / k, s.1 / k, s.2 / k))
    }

    /// Mean `|e_s|` over voxels holding a scan-line endpoint.
    pub fn mean_abs_edge_error(&self) -> Option<f64> {
        let e: Vec<f64> = (0..self.voxels.len()).filter(|&i| self.flags[i].0).map(|i| self.e_s[i].abs()).collect();
        (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub reference: f64,
    pub layers: Vec<LayerRecord>,
}

/// Builds `layers` layers. Layers up to `start_layer` run at nominal power;
/// from then on each layer's error updates the power of the next one.
pub fn run_closed_loop(plant: &PlantConfig, path: &PathConfig, silc: &SilcConfig, layers: usize) -> Result<History> {
    drive(plant, path, silc, layers, |l, rp| generate_raster(&plant.geometry, &plant.mesh, l, rp))
}

/// [`run_closed_loop`] over given schedules, one per layer starting at
/// layer 1, instead of generated rasters.
pub fn run_closed_loop_on_paths(
    plant: &PlantConfig,
    path: &PathConfig,
    silc: &SilcConfig,
    schedules: &[PathSchedule],
) -> Result<History> {
    for (k, s) in schedules.iter().enumerate() {
        if s.layer() != k + 1 {
            return Err(Error::Argument(format!("schedule {k} is for layer {}, expected {}", s.layer(), k + 1)));
        }
    }
    drive(plant, path, silc, schedules.len(), |l, _| Ok(schedules[l - 1].clone()))
}

fn drive(
    plant: &PlantConfig,
    path: &PathConfig,
    silc: &SilcConfig,
    layers: usize,
    schedule: impl Fn(usize, &RasterParams) -> Result<PathSchedule>,
) -> Result<History> {
    silc.validate()?;
    if layers > plant.geometry.layer_count() {
        return Err(Error::Argument(format!(
            "{layers} layers requested, part has {}",
            plant.geometry.layer_count()
        )));
    }
    let vspec = voxel_grid(&plant.geometry, path.voxel_size)?;
    let mut reference = match silc.reference {
        Reference::Value(v) => Some(v),
        Reference::Auto => None,
    };
    let auto_layer = silc.start_layer.min(layers);
    let mut records: Vec<LayerRecord> = Vec::with_capacity(layers);
    let mut next_u: Option<(Vec<VoxelId>, DVector<f64>)> = None;
    let mut state = ThermalState::zeros(&plant.mesh, 1);

    for l in 1..=layers {
        let sys = build_system(&plant.mesh, &plant.material, &plant.geometry, l, &plant.options)?;
        let rp = path.raster(&plant.mesh, plant.options.substeps, l);
        let sched = schedule(l, &rp)?;
        let n_t = sched.n_t();
        let sets = register_samples(&sched, &vspec)?.observable(n_t);
        let voxels = sets.voxels().to_vec();

        let (u_s, controlled) = match next_u.take() {
            Some((from, u)) => (transfer_between_layers(&u, &from, &voxels, silc.u_nominal)?, true),
            None => (DVector::from_element(voxels.len(), silc.u_nominal), false),
        };
        let u_t = temporal_power(&sched, &sets, &vspec, &u_s, path.p_mode, silc.u_nominal)?;
        let (end, y_t) = simulate_layer(&state, &sched, &u_t, &sys, &plant.measurement, &plant.mask)?;
        let y_s = voxel_average(&sets, &y_t);

        let flags = classify_regions(&sched, &sets, path.corner_lines);
        let mut rec = LayerRecord {
            layer: l,
            angle_deg: rp.angle_deg,
            n_t,
            coords: voxels.iter().map(|&v| vspec.coords(v)).collect(),
            voxels,
            flags,
            u_s,
            y_s,
            e_s: DVector::zeros(0),
            controlled,
        };
        if reference.is_none() && l == auto_layer {
            let centre = rec
                .region_means(Region::Center)
                .or_else(|| rec.region_means(Region::Edge))
                .or_else(|| rec.region_means(Region::Corner))
                .map(|m| m.0)
                .unwrap_or(0.0);
            reference = Some(centre);
            for r in records.iter_mut() {
                r.e_s = r.y_s.map(|y| centre - y);
            }
        }
        if let Some(y_d) = reference {
            rec.e_s = rec.y_s.map(|y| y_d - y);
        }
        if l >= silc.start_layer {
            let u = silc_update(&rec.u_s, &rec.e_s, silc.gamma, silc.bounds())?;
            next_u = Some((rec.voxels.clone(), u));
        }
        records.push(rec);
        state = recoat_and_shift(&end, &plant.mesh, &plant.reset)?;
    }
    Ok(History { reference: reference.unwrap_or(0.0), layers: records })
}

/// Expands voxel powers into the temporal sequence `u_t(0..N_t)` through the
/// look-up table. Samples whose voxel has no output keep `u_nominal`.
pub fn temporal_power(
    sched: &PathSchedule,
    sets: &SampleSets,
    vspec: &VoxelGridSpec,
    u_s: &DVector<f64>,
    mode: PMode,
    u_nominal: f64,
) -> Result<Vec<f64>> {
    let n_t = sched.n_t();
    let mut u_t = vec![u_nominal; n_t];
    for (n, u) in u_t.iter_mut().enumerate() {
        let sample = match mode {
            PMode::Backward => n,
            PMode::Forward => n + 1,
        };
        if let Some((d1, d2)) = sched.position(sample) {
            let v = vspec.element_to_voxel(d1, d2)?;
            if let Ok(k) = sets.voxels().binary_search(&v) {
                *u = u_s[k];
            }
        }
    }
    Ok(u_t)
}

/// `y_s = Q y`: mean of the outputs `y(1..=N_t)` registered to each voxel.
pub fn voxel_average(sets: &SampleSets, y_t: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        sets.len(),
        sets.sets().iter().map(|s| {
            let obs: Vec<f64> = s.iter().filter(|&&n| n >= 1 && n <= y_t.len()).map(|&n| y_t[n - 1]).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        }),
    )
}
