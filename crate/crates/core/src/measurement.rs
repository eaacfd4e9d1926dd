//! Output functionals of the thermal plant.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::LayerMask;
use crate::grid::MeshSpec;
use crate::path::PathSchedule;

/// Coaxial camera over the top surface: a square field of `fov x fov`
/// pixels of side `pixel_size` (m) centred on the laser spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub pixel_size: f64,
    pub fov: usize,
}

/// What is sampled at each time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementKind {
    /// Sum of the top-layer temperatures.
    SurfaceSum,
    /// Temperature of the element struck during the previous sample.
    MaxTemp,
    /// Melt-pool size: top-layer elements at or above `threshold` (K), or
    /// camera pixels at or above it when a camera is configured.
    MeltPoolArea { threshold: f64, camera: Option<CameraModel> },
}

impl MeasurementKind {
    pub fn is_linear(&self) -> bool {
        !matches!(self, MeasurementKind::MeltPoolArea { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasurementKind::SurfaceSum => "surface_sum",
            MeasurementKind::MaxTemp => "max_temp",
            MeasurementKind::MeltPoolArea { .. } => "meltpool_area",
        }
    }
}

/// Sampling vector `f(n)` with `y(n) = f(n)^T x(n)`. The melt-pool vector
/// depends on the state and needs `state`.
pub fn measurement_vector(
    kind: &MeasurementKind,
    n: usize,
    sched: &PathSchedule,
    mesh: &MeshSpec,
    state: Option<&[f64]>,
) -> Result<DVector<f64>> {
    if n == 0 || n > sched.n_t() {
        return Err(Error::Range(format!("sample {n} outside 1..={}", sched.n_t())));
    }
    let mut f = DVector::zeros(mesh.state_len());
    let top = mesh.top_offset(1, 1);
    match kind {
        MeasurementKind::SurfaceSum => f.rows_mut(top, mesh.plane_len()).fill(1.0),
        MeasurementKind::MaxTemp => {
            if let Some((d1, d2)) = sched.position(n - 1) {
                f[mesh.top_offset(d1, d2)] = 1.0;
            }
        }
        MeasurementKind::MeltPoolArea { threshold, .. } => {
            let x = state.ok_or_else(|| Error::Argument("melt-pool sampling vector needs a state".into()))?;
            if x.len() != mesh.state_len() {
                return Err(Error::Dimension("state does not match the mesh".into()));
            }
            for j in 0..mesh.plane_len() {
                if x[top + j] >= *threshold {
                    f[top + j] = 1.0;
                }
            }
        }
    }
    Ok(f)
}

/// Plant output `y(n)` for the state `x` reached at sample `n`.
pub fn measure(
    kind: &MeasurementKind,
    n: usize,
    sched: &PathSchedule,
    mesh: &MeshSpec,
    top_mask: &LayerMask,
    x: &[f64],
) -> Result<f64> {
    let top = &x[mesh.top_offset(1, 1)..];
    Ok(match kind {
        MeasurementKind::SurfaceSum => top.iter().sum(),
        MeasurementKind::MaxTemp => sched
            .position(n - 1)
            .map_or(0.0, |(d1, d2)| top[(d1 - 1) + (d2 - 1) * mesh.n1]),
        MeasurementKind::MeltPoolArea { threshold, camera: None } => top
            .iter()
            .zip(top_mask.cells())
            .filter(|&(&t, &inside)| inside && t >= *threshold)
            .count() as f64,
        MeasurementKind::MeltPoolArea { threshold, camera: Some(cam) } => {
            let centre = sched.position(n).or_else(|| sched.position(n - 1));
            match centre {
                Some(c) => camera_count(cam, *threshold, c, mesh, top_mask, top) as f64,
                None => 0.0,
            }
        }
    })
}

/// Pixels at or above `threshold` in a camera frame centred on element `c`.
///
/// The frame is rendered by bilinear interpolation between element centres.
/// Out-of-part centres take the mean of their in-part 4-neighbours, and
/// pixels over out-of-part elements never count.
pub fn camera_count(
    cam: &CameraModel,
    threshold: f64,
    c: (usize, usize),
    mesh: &MeshSpec,
    mask: &LayerMask,
    top: &[f64],
) -> usize {
    let (n1, n2) = (mesh.n1 as isize, mesh.n2 as isize);
    let (dx, dy) = (mesh.dx, mesh.dy);
    let raw = |i: isize, j: isize| top[(i - 1) as usize + (j - 1) as usize * mesh.n1];
    let ext = |i: isize, j: isize| -> f64 {
        if mask.contains_i(i, j) {
            return raw(i, j);
        }
        let mut s = 0.0;
        let mut k = 0;
        for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            if mask.contains_i(a, b) {
                s += raw(a, b);
                k += 1;
            }
        }
        if k == 0 {
            0.0
        } else {
            s / k as f64
        }
    };

    let pix = cam.pixel_size;
    let half = 0.5 * cam.fov as f64;
    // Centre of pixel 0 along each axis.
    let x0 = (c.0 as f64 - 0.5) * dx + (0.5 - half) * pix;
    let y0 = (c.1 as f64 - 0.5) * dy + (0.5 - half) * pix;
    let last_x = x0 + (cam.fov - 1) as f64 * pix;
    let last_y = y0 + (cam.fov - 1) as f64 * pix;
    // Pixel indices whose centres fall in [lo, hi).
    let span = |lo: f64, hi: f64, origin: f64| -> (usize, usize) {
        let a = ((lo - origin) / pix).ceil().max(0.0);
        let b = ((hi - origin) / pix).ceil().clamp(0.0, cam.fov as f64);
        (a as usize, (b as usize).max(a as usize))
    };

    let mut count = 0;
    // Interpolation cell (i, j) spans the centres of elements i..i+1, j..j+1.
    let i_lo = ((x0 / dx - 0.5).floor() as isize + 1).max(0);
    let i_hi = ((last_x / dx - 0.5).floor() as isize + 1).min(n1);
    let j_lo = ((y0 / dy - 0.5).floor() as isize + 1).max(0);
    let j_hi = ((last_y / dy - 0.5).floor() as isize + 1).min(n2);
    for j in j_lo..=j_hi {
        for i in i_lo..=i_hi {
            let v = [ext(i, j), ext(i + 1, j), ext(i, j + 1), ext(i + 1, j + 1)];
            if v.iter().all(|&t| t < threshold) {
                continue;
            }
            let cx = (i as f64 - 0.5) * dx;
            let cy = (j as f64 - 0.5) * dy;
            let (a0, a1) = span(cx.max(0.0), (cx + dx).min(n1 as f64 * dx), x0);
            let (b0, b1) = span(cy.max(0.0), (cy + dy).min(n2 as f64 * dy), y0);
            for b in b0..b1 {
                let py = y0 + b as f64 * pix;
                let fy = (py - cy) / dy;
                let ej = (py / dy).floor() as isize + 1;
                for a in a0..a1 {
                    let px = x0 + a as f64 * pix;
                    let ei = (px / dx).floor() as isize + 1;
                    if !mask.contains_i(ei, ej) {
                        continue;
                    }
                    let fx = (px - cx) / dx;
                    let t = (1.0 - fy) * ((1.0 - fx) * v[0] + fx * v[1]) + fy * ((1.0 - fx) * v[2] + fx * v[3]);
                    if t >= threshold {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}
