//! Run configuration: `key=value` lines with `#` comments.
//!
//! A `preset` key (`prism` or `ellipsoid`) seeds every value of a built-in
//! experiment; other keys override it. Without a preset the mesh and the
//! geometry keys are required.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{LayerMask, PartGeometry};
use crate::grid::MeshSpec;
use crate::lift::PMode;
use crate::measurement::{CameraModel, MeasurementKind};
use crate::path::{generate_raster, read_path_csv, MaskShape, PathSchedule};
use crate::silc::{PathConfig, PlantConfig, Reference, SilcConfig};
use crate::thermal::{build_system, BottomBoundary, MaterialParams, PlantOptions, ResetOperator, SystemMatrices};

/// Recognised keys and their defaults. An empty default marks a required key.
const KEYS: &[(&str, &str)] = &[
    ("preset", "none"),
    ("n1", ""),
    ("n2", ""),
    ("window_layers", "4"),
    ("dx", ""),
    ("dy", ""),
    ("dz", ""),
    ("dt", ""),
    ("conductivity", "33.5"),
    ("diffusivity", "6e-6"),
    ("bottom", "substrate"),
    ("powder_ratio", "0"),
    ("substeps", "1"),
    ("reset", "zero"),
    ("geometry", ""),
    ("build_layers", "1"),
    ("semi_axis_x", "0"),
    ("semi_axis_y", "0"),
    ("height", "0"),
    ("mask_file", "none"),
    ("path_file", "none"),
    ("hatch", "100e-6"),
    ("speed", "0.8"),
    ("base_angle_deg", "0"),
    ("rotation_deg", "0"),
    ("voxel_size", "8"),
    ("p_mode", "backward"),
    ("corner_lines", "10"),
    ("laser_mask", "one_hot"),
    ("measurement", "meltpool_area"),
    ("threshold", "100"),
    ("kelvin_per_count", "1"),
    ("camera_pixel", "0"),
    ("camera_fov", "0"),
    ("lift_measurement", "max_temp"),
    ("gamma", "0.2"),
    ("reference", "auto"),
    ("power_nominal", "250"),
    ("power_min", "0"),
    ("power_max", "400"),
    ("saturate", "true"),
    ("start_layer", "10"),
    ("layers", "0"),
    ("pulse_samples", "10"),
    ("pulse_spacing", "400e-6"),
    ("pulse_period", "5e-4"),
    ("output_dir", "out"),
];

const PRISM: &[(&str, &str)] = &[
    ("n1", "80"),
    ("n2", "60"),
    ("window_layers", "4"),
    ("dx", "50e-6"),
    ("dy", "50e-6"),
    ("dz", "50e-6"),
    ("dt", "62.5e-6"),
    ("geometry", "prism"),
    ("build_layers", "20"),
    ("hatch", "100e-6"),
    ("speed", "0.8"),
    ("base_angle_deg", "90"),
    ("rotation_deg", "0"),
    ("voxel_size", "8"),
    ("corner_lines", "10"),
    ("measurement", "meltpool_area"),
    ("threshold", "100"),
    ("kelvin_per_count", "180"),
    ("camera_pixel", "4.7e-6"),
    ("camera_fov", "102"),
    ("gamma", "0.2"),
    ("reference", "40"),
    ("power_nominal", "250"),
    ("start_layer", "10"),
    ("output_dir", "out-prism"),
];

const ELLIPSOID: &[(&str, &str)] = &[
    ("n1", "102"),
    ("n2", "72"),
    ("window_layers", "4"),
    ("dx", "50e-6"),
    ("dy", "50e-6"),
    ("dz", "50e-6"),
    ("dt", "62.5e-6"),
    ("geometry", "half_ellipsoid"),
    ("semi_axis_x", "2.5e-3"),
    ("semi_axis_y", "1.75e-3"),
    ("height", "3.2e-3"),
    ("hatch", "100e-6"),
    ("speed", "0.8"),
    ("base_angle_deg", "0"),
    ("rotation_deg", "67"),
    ("voxel_size", "8"),
    ("corner_lines", "0"),
    ("measurement", "meltpool_area"),
    ("threshold", "100"),
    ("kelvin_per_count", "180"),
    ("camera_pixel", "2.5e-6"),
    ("camera_fov", "192"),
    ("gamma", "0.25"),
    ("reference", "75"),
    ("power_nominal", "250"),
    ("start_layer", "10"),
    ("layers", "61"),
    ("output_dir", "out-ellipsoid"),
];

/// Where the part masks come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    /// Triangular prism filling the plane.
    Prism,
    /// Full rectangular plane on every layer.
    Block,
    /// Half ellipsoid centred on the plane; semi-axes and height in metres.
    HalfEllipsoid { semi_x: f64, semi_y: f64, height: f64 },
    MaskFile(PathBuf),
}

/// Settings of the `pulse-decay` run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseConfig {
    pub samples: usize,
    /// Sample spacing along the edge, in mesh elements.
    pub spacing: usize,
    pub period: f64,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub path: PathConfig,
    pub silc: SilcConfig,
    /// Layers to build.
    pub layers: usize,
    pub geometry_source: GeometrySource,
    /// Explicit schedules, one per layer, when a path file is given.
    pub paths: Option<Vec<PathSchedule>>,
    /// Linear functional used for the lifted matrices when the plant output
    /// is state dependent.
    pub lift_measurement: MeasurementKind,
    pub pulse: PulseConfig,
    pub output_dir: PathBuf,
    resolved: Vec<(&'static str, String)>,
}

impl RunConfig {
    /// Schedule of layer `l`.
    pub fn schedule(&self, l: usize) -> Result<PathSchedule> {
        match &self.paths {
            Some(p) => p
                .get(l.wrapping_sub(1))
                .cloned()
                .ok_or_else(|| Error::Range(format!("path file has no layer {l}"))),
            None => {
                let rp = self.path.raster(&self.plant.mesh, self.plant.options.substeps, l);
                generate_raster(&self.plant.geometry, &self.plant.mesh, l, &rp)
            }
        }
    }

    pub fn system(&self, l: usize) -> Result<SystemMatrices> {
        build_system(&self.plant.mesh, &self.plant.material, &self.plant.geometry, l, &self.plant.options)
    }

    /// Measurement used to build `D_L`.
    pub fn analysis_measurement(&self) -> MeasurementKind {
        if self.plant.measurement.is_linear() {
            self.plant.measurement
        } else {
            self.lift_measurement
        }
    }

    /// Every key with its resolved value, one `key=value` line each.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }
}

/// Reads a config file; relative file references resolve against its
/// directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

struct Entry {
    value: String,
    /// Source line, 0 for defaults and presets.
    line: usize,
}

struct Values {
    map: BTreeMap<&'static str, Entry>,
    eof: usize,
}

impl Values {
    fn entry(&self, key: &'static str) -> Result<&Entry> {
        let e = &self.map[key];
        if e.value.is_empty() {
            return Err(Error::Parse { line: self.eof, msg: format!("missing required key `{key}`") });
        }
        Ok(e)
    }

    fn str(&self, key: &'static str) -> Result<&str> {
        Ok(&self.entry(key)?.value)
    }

    fn bad(&self, key: &'static str, why: &str) -> Error {
        let e = &self.map[key];
        Error::Parse { line: e.line, msg: format!("`{key}={}`: {why}", e.value) }
    }

    fn f64(&self, key: &'static str) -> Result<f64> {
        let v: f64 = self.str(key)?.parse().map_err(|_| self.bad(key, "not a number"))?;
        if !v.is_finite() {
            return Err(self.bad(key, "not finite"));
        }
        Ok(v)
    }

    fn positive(&self, key: &'static str) -> Result<f64> {
        let v = self.f64(key)?;
        if v <= 0.0 {
            return Err(self.bad(key, "must be positive"));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &'static str) -> Result<f64> {
        let v = self.f64(key)?;
        if v < 0.0 {
            return Err(self.bad(key, "must be non-negative"));
        }
        Ok(v)
    }

    fn usize(&self, key: &'static str) -> Result<usize> {
        self.str(key)?.parse().map_err(|_| self.bad(key, "not a non-negative integer"))
    }

    fn count(&self, key: &'static str) -> Result<usize> {
        let v = self.usize(key)?;
        if v == 0 {
            return Err(self.bad(key, "must be at least 1"));
        }
        Ok(v)
    }

    fn bool(&self, key: &'static str) -> Result<bool> {
        match self.str(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.bad(key, "expected true or false")),
        }
    }

    fn choice<'a>(&self, key: &'static str, options: &[&'a str]) -> Result<&'a str> {
        let v = self.str(key)?;
        options
            .iter()
            .find(|&&o| o == v)
            .copied()
            .ok_or_else(|| self.bad(key, &format!("expected one of {}", options.join(", "))))
    }

    fn file(&self, key: &'static str, base: &Path) -> Result<Option<(PathBuf, String)>> {
        let v = self.str(key)?;
        if v == "none" {
            return Ok(None);
        }
        let p = base.join(v);
        let text = std::fs::read_to_string(&p).map_err(|e| self.bad(key, &format!("cannot read {}: {e}", p.display())))?;
        Ok(Some((p, text)))
    }
}

/// Parses and validates a config. Files named in it resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let mut user: Vec<(&'static str, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: format!("expected key=value, found {t:?}") })?;
        let (k, v) = (k.trim(), v.trim());
        let key = KEYS
            .iter()
            .map(|&(name, _)| name)
            .find(|&name| name == k)
            .ok_or_else(|| Error::Parse { line, msg: format!("unknown key `{k}`") })?;
        if v.is_empty() {
            return Err(Error::Parse { line, msg: format!("empty value for `{k}`") });
        }
        if let Some(prev) = user.iter().find(|(name, _, _)| *name == key) {
            return Err(Error::Parse { line, msg: format!("`{k}` already set on line {}", prev.2) });
        }
        user.push((key, v.to_string(), line));
    }

    let mut map: BTreeMap<&'static str, Entry> =
        KEYS.iter().map(|&(k, d)| (k, Entry { value: d.to_string(), line: 0 })).collect();
    if let Some((_, preset, line)) = user.iter().find(|(k, _, _)| *k == "preset") {
        let table = match preset.as_str() {
            "prism" => PRISM,
            "ellipsoid" => ELLIPSOID,
            "none" => &[][..],
            other => {
                return Err(Error::Parse { line: *line, msg: format!("unknown preset `{other}` (prism, ellipsoid)") })
            }
        };
        for &(k, v) in table {
            map.insert(k, Entry { value: v.to_string(), line: *line });
        }
    }
    for (k, v, line) in user {
        map.insert(k, Entry { value: v, line });
    }
    let vals = Values { map, eof: text.lines().count() + 1 };
    build(&vals, base)
}

fn build(v: &Values, base: &Path) -> Result<RunConfig> {
    let (n1, n2) = (v.count("n1")?, v.count("n2")?);
    let (dx, dy, dz, dt) = (v.positive("dx")?, v.positive("dy")?, v.positive("dz")?, v.positive("dt")?);
    let mesh = MeshSpec::new(n1, n2, v.count("window_layers")?, dx, dy, dz, dt)
        .map_err(|e| v.bad("window_layers", &e.to_string()))?;
    let material = MaterialParams::new(v.positive("conductivity")?, v.positive("diffusivity")?)?;
    let powder_ratio = v.non_negative("powder_ratio")?;
    if powder_ratio > 1.0 {
        return Err(v.bad("powder_ratio", "must lie in [0, 1]"));
    }
    let options = PlantOptions {
        bottom: match v.choice("bottom", &["substrate", "adiabatic"])? {
            "substrate" => BottomBoundary::Substrate,
            _ => BottomBoundary::Adiabatic,
        },
        powder_ratio,
        substeps: v.count("substeps")?,
    };
    let reset = match v.choice("reset", &["zero", "identity"])? {
        "zero" => ResetOperator::Zero,
        _ => ResetOperator::Identity,
    };

    let build_layers = v.count("build_layers")?;
    let (source, geometry) = match v.choice("geometry", &["prism", "block", "half_ellipsoid", "mask_file"])? {
        "prism" => (GeometrySource::Prism, PartGeometry::prism(n1, n2, build_layers)?),
        "block" => (GeometrySource::Block, PartGeometry::extruded(LayerMask::full(n1, n2), build_layers)?),
        "half_ellipsoid" => {
            let (a, b, c) = (v.positive("semi_axis_x")?, v.positive("semi_axis_y")?, v.positive("height")?);
            let g = PartGeometry::half_ellipsoid(n1, n2, (dx, dy, dz), (a, b, c))
                .map_err(|e| v.bad("geometry", &e.to_string()))?;
            (GeometrySource::HalfEllipsoid { semi_x: a, semi_y: b, height: c }, g)
        }
        _ => {
            let (p, text) = v.file("mask_file", base)?.ok_or_else(|| v.bad("mask_file", "required by geometry=mask_file"))?;
            let g = PartGeometry::parse_mask_text(&text, build_layers).map_err(|e| v.bad("mask_file", &e.to_string()))?;
            if (g.n1(), g.n2()) != (n1, n2) {
                return Err(v.bad("mask_file", &format!("mask is {}x{}, mesh plane is {n1}x{n2}", g.n1(), g.n2())));
            }
            (GeometrySource::MaskFile(p), g)
        }
    };

    let paths = match v.file("path_file", base)? {
        Some((_, text)) => Some(read_path_csv(&text, n1, n2).map_err(|e| v.bad("path_file", &e.to_string()))?),
        None => None,
    };

    let threshold = v.non_negative("threshold")? * v.positive("kelvin_per_count")?;
    let camera_pixel = v.non_negative("camera_pixel")?;
    let camera = if camera_pixel > 0.0 {
        Some(CameraModel { pixel_size: camera_pixel, fov: v.count("camera_fov")? })
    } else {
        None
    };
    let measurement = match v.choice("measurement", &["meltpool_area", "max_temp", "surface_sum"])? {
        "meltpool_area" => MeasurementKind::MeltPoolArea { threshold, camera },
        "max_temp" => MeasurementKind::MaxTemp,
        _ => MeasurementKind::SurfaceSum,
    };
    let lift_measurement = match v.choice("lift_measurement", &["max_temp", "surface_sum"])? {
        "max_temp" => MeasurementKind::MaxTemp,
        _ => MeasurementKind::SurfaceSum,
    };
    let mask = match v.choice("laser_mask", &["one_hot", "distributed"])? {
        "one_hot" => MaskShape::OneHot,
        _ => MaskShape::three_element(),
    };

    let path = PathConfig {
        hatch: v.positive("hatch")?,
        speed: v.positive("speed")?,
        base_angle_deg: v.f64("base_angle_deg")?,
        rotation_deg: v.f64("rotation_deg")?,
        voxel_size: v.count("voxel_size")?,
        p_mode: match v.choice("p_mode", &["backward", "forward"])? {
            "backward" => PMode::Backward,
            _ => PMode::Forward,
        },
        corner_lines: v.usize("corner_lines")?,
    };

    let silc = SilcConfig {
        gamma: v.non_negative("gamma")?,
        reference: match v.str("reference")? {
            "auto" => Reference::Auto,
            _ => Reference::Value(v.f64("reference")?),
        },
        u_nominal: v.non_negative("power_nominal")?,
        u_min: v.non_negative("power_min")?,
        u_max: v.non_negative("power_max")?,
        saturate: v.bool("saturate")?,
        start_layer: v.count("start_layer")?,
    };
    silc.validate().map_err(|e| v.bad("power_nominal", &e.to_string()))?;

    let available = match &paths {
        Some(p) => p.len().min(geometry.layer_count()),
        None => geometry.layer_count(),
    };
    let layers = match v.usize("layers")? {
        0 => available,
        k if k <= available => k,
        k => return Err(v.bad("layers", &format!("only {available} layers available, {k} requested"))),
    };

    let spacing_m = v.non_negative("pulse_spacing")?;
    let spacing = (spacing_m / dx).round();
    if (spacing * dx - spacing_m).abs() > 1e-9 * dx.max(spacing_m) {
        return Err(v.bad("pulse_spacing", "must be a whole number of dx"));
    }
    let pulse = PulseConfig { samples: v.count("pulse_samples")?, spacing: spacing as usize, period: v.positive("pulse_period")? };

    let resolved = KEYS.iter().map(|&(k, _)| (k, v.map[k].value.clone())).collect();
    Ok(RunConfig {
        plant: PlantConfig { mesh, material, geometry, options, measurement, mask, reset },
        path,
        silc,
        layers,
        geometry_source: source,
        paths,
        lift_measurement,
        pulse,
        output_dir: base.join(v.str("output_dir")?),
        resolved,
    })
}
