//! Raster tool paths, laser mask vectors and sample-to-voxel registration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{LayerMask, PartGeometry};
use crate::grid::{MeshSpec, VoxelGridSpec, VoxelId};

/// One straight scan track: the samples `samples` in schedule order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLine {
    pub samples: Range<usize>,
}

/// Laser occupancy for one layer.
///
/// Holds positions for samples `0..=N_t`. Power is applied during samples
/// `0..N_t` and outputs exist for samples `1..=N_t`, so the final position
/// only serves registration.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSchedule {
    layer: usize,
    n1: usize,
    n2: usize,
    steps: Vec<Option<(usize, usize)>>,
    lines: Vec<ScanLine>,
}

impl PathSchedule {
    /// Builds a schedule from explicit positions (`None` = laser off).
    /// Without line information the whole schedule counts as one line.
    pub fn from_steps(layer: usize, n1: usize, n2: usize, steps: Vec<Option<(usize, usize)>>) -> Result<Self> {
        let len = steps.len();
        Self::with_lines(layer, n1, n2, steps, vec![ScanLine { samples: 0..len }])
    }

    pub fn with_lines(
        layer: usize,
        n1: usize,
        n2: usize,
        steps: Vec<Option<(usize, usize)>>,
        lines: Vec<ScanLine>,
    ) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Argument("a schedule needs at least one sample".into()));
        }
        for (n, s) in steps.iter().enumerate() {
            if let Some((d1, d2)) = *s {
                if d1 == 0 || d2 == 0 || d1 > n1 || d2 > n2 {
                    return Err(Error::Range(format!("sample {n} at ({d1},{d2}) outside {n1}x{n2} plane")));
                }
            }
        }
        if lines.iter().any(|l| l.samples.end > steps.len()) {
            return Err(Error::Range("scan line exceeds the schedule".into()));
        }
        Ok(Self { layer, n1, n2, steps, lines })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    /// Last time instant of laser activity.
    pub fn n_t(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn plane(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Position at sample `n` (`0..=N_t`).
    pub fn position(&self, n: usize) -> Option<(usize, usize)> {
        self.steps.get(n).copied().flatten()
    }

    pub fn steps(&self) -> &[Option<(usize, usize)>] {
        &self.steps
    }

    pub fn lines(&self) -> &[ScanLine] {
        &self.lines
    }

    /// Mask vectors `h(n)` for `n = 0..N_t`, sparse as `(plane offset, weight)`.
    /// Weights that would land outside `top` are folded into the struck element.
    pub fn mask_sequence(&self, shape: &MaskShape, top: &LayerMask) -> Vec<Vec<(usize, f64)>> {
        (0..self.n_t()).map(|n| self.mask(n, shape, top)).collect()
    }

    fn mask(&self, n: usize, shape: &MaskShape, top: &LayerMask) -> Vec<(usize, f64)> {
        let Some((d1, d2)) = self.position(n) else { return Vec::new() };
        let at = |a: usize, b: usize| (a - 1) + (b - 1) * self.n1;
        match *shape {
            MaskShape::OneHot => vec![(at(d1, d2), 1.0)],
            MaskShape::Distributed { side } => {
                let along_x = self.travel_is_along_x(n);
                let neighbours = if along_x {
                    [(d1 as isize - 1, d2 as isize), (d1 as isize + 1, d2 as isize)]
                } else {
                    [(d1 as isize, d2 as isize - 1), (d1 as isize, d2 as isize + 1)]
                };
                let mut centre = 1.0 - 2.0 * side;
                let mut out = Vec::with_capacity(3);
                for (a, b) in neighbours {
                    if top.contains_i(a, b) {
                        out.push((at(a as usize, b as usize), side));
                    } else {
                        centre += side;
                    }
                }
                out.push((at(d1, d2), centre));
                out.sort_by_key(|&(j, _)| j);
                out
            }
        }
    }

    fn travel_is_along_x(&self, n: usize) -> bool {
        let here = self.position(n).unwrap();
        let other = self
            .position(n + 1)
            .or_else(|| n.checked_sub(1).and_then(|m| self.position(m)));
        match other {
            Some((a, b)) => (a as isize - here.0 as isize).abs() >= (b as isize - here.1 as isize).abs(),
            None => true,
        }
    }
}

/// Power distribution of the laser spot over top-layer elements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MaskShape {
    /// All power into the occupied element.
    #[default]
    OneHot,
    /// `side` to each collinear neighbour along the travel direction and the
    /// rest to the occupied element.
    Distributed { side: f64 },
}

impl MaskShape {
    /// The `[1/8, 3/4, 1/8]` spot.
    pub fn three_element() -> Self {
        MaskShape::Distributed { side: 0.125 }
    }
}

/// Scan parameters for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterParams {
    /// Line spacing in metres.
    pub hatch: f64,
    /// Laser speed in m/s.
    pub speed: f64,
    /// Time between samples in seconds.
    pub sample_period: f64,
    /// Track direction in degrees, `[0, 180)`. 0 scans along +x and steps
    /// toward -y; 90 scans along +y and steps toward +x.
    pub angle_deg: f64,
}

/// Scan angle of `layer` for a raster rotated by `rotation_deg` per layer.
pub fn layer_angle(layer: usize, base_deg: f64, rotation_deg: f64) -> f64 {
    (base_deg + layer as f64 * rotation_deg).rem_euclid(180.0)
}

/// Serpentine raster of one layer clipped to its cross-section.
///
/// Lines are spaced by `hatch` starting at the outermost in-part element
/// centre. Each track runs between the centres of its first and last in-part
/// elements and is sampled every `speed * sample_period`; consecutive lines
/// alternate direction and turnarounds take no samples. A track shorter than
/// one sample spacing gets a single sample at its midpoint.
pub fn generate_raster(geom: &PartGeometry, mesh: &MeshSpec, layer: usize, p: &RasterParams) -> Result<PathSchedule> {
    if !(p.hatch > 0.0 && p.speed > 0.0 && p.sample_period > 0.0) {
        return Err(Error::Argument("hatch, speed and sample period must be positive".into()));
    }
    if !(0.0..180.0).contains(&p.angle_deg) {
        return Err(Error::Argument(format!("scan angle {} outside [0, 180)", p.angle_deg)));
    }
    let mask = geom.mask(layer)?;
    let (dx, dy) = (mesh.dx, mesh.dy);
    let th = p.angle_deg.to_radians();
    let dir = (th.cos(), th.sin());
    let nrm = (dir.1, -dir.0);
    let cells: Vec<(usize, usize)> = (1..=mesh.n2)
        .flat_map(|d2| (1..=mesh.n1).map(move |d1| (d1, d2)))
        .filter(|&(d1, d2)| mask.contains(d1, d2))
        .collect();
    if cells.is_empty() {
        return Err(Error::Geometry(format!("layer {layer} has an empty cross-section")));
    }
    let centre = |(d1, d2): (usize, usize)| ((d1 as f64 - 0.5) * dx, (d2 as f64 - 0.5) * dy);
    let proj = |c: (f64, f64)| c.0 * nrm.0 + c.1 * nrm.1;
    let (smin, smax) = cells
        .iter()
        .map(|&c| proj(centre(c)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s), b.max(s)));

    let tol = 1e-9 * dx.min(dy);
    let spacing = p.speed * p.sample_period;
    // Half the chord through one element along the track.
    let shrink = 0.5 * {
        let cx = if dir.0.abs() > 1e-12 { dx / dir.0.abs() } else { f64::INFINITY };
        let cy = if dir.1.abs() > 1e-12 { dy / dir.1.abs() } else { f64::INFINITY };
        cx.min(cy)
    };

    let mut steps = Vec::new();
    let mut lines = Vec::new();
    let n_lines = ((smax - smin) / p.hatch + 1e-9).floor() as usize + 1;
    let mut reverse = false;
    for k in 0..n_lines {
        let off = smin + k as f64 * p.hatch;
        let base = (off * nrm.0, off * nrm.1);
        let mut segments = track_segments(&cells, base, dir, dx, dy, tol);
        if segments.is_empty() {
            continue;
        }
        if reverse {
            segments.reverse();
        }
        for (t0, t1) in segments {
            let (a, b) = (t0 + shrink, t1 - shrink);
            let ts: Vec<f64> = if b - a < spacing {
                vec![0.5 * (a + b)]
            } else {
                let count = ((b - a) / spacing + 1e-9).floor() as usize + 1;
                let (from, sign) = if reverse { (b, -1.0) } else { (a, 1.0) };
                (0..count).map(|i| from + sign * i as f64 * spacing).collect()
            };
            let start = steps.len();
            for t in ts {
                let pos = (base.0 + t * dir.0, base.1 + t * dir.1);
                steps.push(Some(snap(pos, dx, dy, mask, tol)));
            }
            lines.push(ScanLine { samples: start..steps.len() });
        }
        reverse = !reverse;
    }
    PathSchedule::with_lines(layer, mesh.n1, mesh.n2, steps, lines)
}

/// Merged parameter intervals `[t0, t1]` where the line `base + t*dir`
/// crosses in-part element squares.
fn track_segments(
    cells: &[(usize, usize)],
    base: (f64, f64),
    dir: (f64, f64),
    dx: f64,
    dy: f64,
    tol: f64,
) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for &(d1, d2) in cells {
        let (x0, x1) = ((d1 - 1) as f64 * dx, d1 as f64 * dx);
        let (y0, y1) = ((d2 - 1) as f64 * dy, d2 as f64 * dy);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut hit = true;
        for (b, d, s0, s1) in [(base.0, dir.0, x0, x1), (base.1, dir.1, y0, y1)] {
            if d.abs() < 1e-12 {
                if b < s0 - tol || b > s1 + tol {
                    hit = false;
                }
            } else {
                let (ta, tb) = ((s0 - b) / d, (s1 - b) / d);
                lo = lo.max(ta.min(tb));
                hi = hi.min(ta.max(tb));
            }
        }
        if hit && hi - lo > tol {
            spans.push((lo, hi));
        }
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 + tol => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Nearest in-part element to a continuous position. On an element border
/// the lower index wins unless it is out of part.
fn snap(pos: (f64, f64), dx: f64, dy: f64, mask: &LayerMask, tol: f64) -> (usize, usize) {
    let candidates = |v: f64, h: f64, n: usize| -> Vec<usize> {
        let f = v / h;
        let r = f.round();
        if (f - r).abs() * h <= tol && r >= 1.0 && (r as usize) < n {
            vec![r as usize, r as usize + 1]
        } else {
            vec![(f.floor().max(0.0) as usize + 1).min(n)]
        }
    };
    let c1 = candidates(pos.0, dx, mask.n1());
    let c2 = candidates(pos.1, dy, mask.n2());
    for &a in &c1 {
        for &b in &c2 {
            if mask.contains(a, b) {
                return (a, b);
            }
        }
    }
    // Off the section: fall back to the closest in-part centre.
    let mut best = (c1[0], c2[0]);
    let mut dist = f64::INFINITY;
    for d2 in 1..=mask.n2() {
        for d1 in 1..=mask.n1() {
            if mask.contains(d1, d2) {
                let e = ((d1 as f64 - 0.5) * dx - pos.0).powi(2) + ((d2 as f64 - 0.5) * dy - pos.1).powi(2);
                if e < dist {
                    dist = e;
                    best = (d1, d2);
                }
            }
        }
    }
    best
}

/// Samples registered to each voxel, in increasing voxel id. Only voxels
/// holding at least one sample are present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSets {
    voxels: Vec<VoxelId>,
    sets: Vec<Vec<usize>>,
}

impl SampleSets {
    /// Validates that the sets are disjoint and non-empty.
    pub fn new(voxels: Vec<VoxelId>, sets: Vec<Vec<usize>>) -> Result<Self> {
        if voxels.len() != sets.len() {
            return Err(Error::Dimension(format!("{} voxels but {} sample sets", voxels.len(), sets.len())));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (v, s) in voxels.iter().zip(&sets) {
            if s.is_empty() {
                return Err(Error::Argument(format!("voxel {} has an empty sample set", v.0)));
            }
            for &n in s {
                if !seen.insert(n) {
                    return Err(Error::Argument(format!("sample {n} registered to two voxels")));
                }
            }
        }
        Ok(Self { voxels, sets })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn voxels(&self) -> &[VoxelId] {
        &self.voxels
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// Drops voxels whose samples all lie outside `1..=n_t`; those voxels
    /// produce no output in the layer.
    pub fn observable(&self, n_t: usize) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.sets[i].iter().any(|&n| n >= 1 && n <= n_t))
            .collect();
        Self {
            voxels: keep.iter().map(|&i| self.voxels[i]).collect(),
            sets: keep.iter().map(|&i| self.sets[i].clone()).collect(),
        }
    }
}

/// Sample `n` joins `S_i` iff its element maps to voxel `i`. OFF samples
/// are not registered.
pub fn register_samples(sched: &PathSchedule, vspec: &VoxelGridSpec) -> Result<SampleSets> {
    let mut map: BTreeMap<VoxelId, Vec<usize>> = BTreeMap::new();
    for (n, s) in sched.steps().iter().enumerate() {
        if let Some((d1, d2)) = *s {
            map.entry(vspec.element_to_voxel(d1, d2)?).or_default().push(n);
        }
    }
    let (voxels, sets) = map.into_iter().unzip();
    Ok(SampleSets { voxels, sets })
}

/// Serializes schedules as `layer,n,d1,d2,on` rows. OFF rows carry `0,0`.
pub fn write_path_csv(schedules: &[PathSchedule]) -> String {
    let mut out = String::from("layer,n,d1,d2,on\n");
    for s in schedules {
        for (n, p) in s.steps().iter().enumerate() {
            let (d1, d2, on) = p.map_or((0, 0, 0), |(a, b)| (a, b, 1));
            writeln!(out, "{},{n},{d1},{d2},{on}", s.layer()).unwrap();
        }
    }
    out
}

/// Parses a path CSV on an `n1 x n2` plane. Rows of one layer must be
/// contiguous with `n = 0, 1, ...`.
pub fn read_path_csv(text: &str, n1: usize, n2: usize) -> Result<Vec<PathSchedule>> {
    let mut layers: Vec<(usize, Vec<Option<(usize, usize)>>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (i == 0 && t.starts_with("layer")) {
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::Parse { line: lineno, msg: format!("expected 5 fields, found {}", f.len()) });
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("not a non-negative integer: {s:?}") })
        };
        let (layer, n, d1, d2, on) = (num(f[0])?, num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?);
        if on > 1 {
            return Err(Error::Parse { line: lineno, msg: format!("on flag must be 0 or 1, got {on}") });
        }
        if on == 1 && (d1 == 0 || d2 == 0 || d1 > n1 || d2 > n2) {
            return Err(Error::Parse { line: lineno, msg: format!("element ({d1},{d2}) outside {n1}x{n2}") });
        }
        if layers.last().is_none_or(|(l, _)| *l != layer) {
            if layers.iter().any(|(l, _)| *l == layer) {
                return Err(Error::Parse { line: lineno, msg: format!("layer {layer} rows are not contiguous") });
            }
            layers.push((layer, Vec::new()));
        }
        let steps = &mut layers.last_mut().unwrap().1;
        if n != steps.len() {
            return Err(Error::Parse { line: lineno, msg: format!("expected n = {}, found {n}", steps.len()) });
        }
        steps.push((on == 1).then_some((d1, d2)));
    }
    layers
        .into_iter()
        .map(|(l, steps)| PathSchedule::from_steps(l, n1, n2, steps))
        .collect()
}
