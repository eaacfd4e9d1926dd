//! Per-layer part cross-sections on the `N1 x N2` mesh plane.

use crate::error::{Error, Result};

/// In-part flags for one layer, indexed `(d1-1) + (d2-1)*n1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    n1: usize,
    n2: usize,
    cells: Vec<bool>,
}

impl LayerMask {
    pub fn new(n1: usize, n2: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != n1 * n2 {
            return Err(Error::Dimension(format!(
                "mask has {} cells, expected {}",
                cells.len(),
                n1 * n2
            )));
        }
        Ok(Self { n1, n2, cells })
    }

    pub fn full(n1: usize, n2: usize) -> Self {
        Self { n1, n2, cells: vec![true; n1 * n2] }
    }

    pub fn from_fn(n1: usize, n2: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(n1 * n2);
        for d2 in 1..=n2 {
            for d1 in 1..=n1 {
                cells.push(f(d1, d2));
            }
        }
        Self { n1, n2, cells }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// 1-based lookup; anything outside the plane is out of part.
    #[inline]
    pub fn contains(&self, d1: usize, d2: usize) -> bool {
        d1 >= 1 && d2 >= 1 && d1 <= self.n1 && d2 <= self.n2 && self.cells[(d1 - 1) + (d2 - 1) * self.n1]
    }

    /// Signed-index lookup for stencil neighbours.
    #[inline]
    pub fn contains_i(&self, d1: isize, d2: isize) -> bool {
        d1 >= 1 && d2 >= 1 && self.contains(d1 as usize, d2 as usize)
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Inclusive 1-based bounding box of the in-part cells.
    pub fn bounding_box(&self) -> Option<((usize, usize), (usize, usize))> {
        let mut lo = (usize::MAX, usize::MAX);
        let mut hi = (0, 0);
        for d2 in 1..=self.n2 {
            for d1 in 1..=self.n1 {
                if self.contains(d1, d2) {
                    lo = (lo.0.min(d1), lo.1.min(d2));
                    hi = (hi.0.max(d1), hi.1.max(d2));
                }
            }
        }
        (hi.0 > 0).then_some((lo, hi))
    }
}

/// Cross-section of every build layer. Build layers are numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGeometry {
    n1: usize,
    n2: usize,
    masks: Vec<LayerMask>,
}

impl PartGeometry {
    pub fn new(masks: Vec<LayerMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Geometry("part has no layers".into()))?;
        let (n1, n2) = (first.n1, first.n2);
        for (i, m) in masks.iter().enumerate() {
            if m.n1 != n1 || m.n2 != n2 {
                return Err(Error::Dimension(format!("layer {} mask is not {n1}x{n2}", i + 1)));
            }
            if m.is_empty() {
                return Err(Error::Geometry(format!("layer {} has an empty cross-section", i + 1)));
            }
        }
        Ok(Self { n1, n2, masks })
    }

    /// The same cross-section repeated for `layers` layers.
    pub fn extruded(mask: LayerMask, layers: usize) -> Result<Self> {
        Self::new(vec![mask; layers])
    }

    /// Triangular prism: the base spans the full height at `d1 = 1` and the
    /// section narrows linearly toward `d1 = n1`, keeping the middle row (or
    /// two) at the apex. Scan lines along y get shorter toward +x.
    pub fn prism(n1: usize, n2: usize, layers: usize) -> Result<Self> {
        let mask = LayerMask::from_fn(n1, n2, |d1, d2| {
            let half = 0.5 * n2 as f64 * (1.0 - (d1 as f64 - 1.0) / n1 as f64);
            let y = d2 as f64 - 0.5 - 0.5 * n2 as f64;
            y.abs() <= half.max(0.5)
        });
        Self::extruded(mask, layers)
    }

    /// Half ellipsoid with semi-axes `(a, b)` in the plane and height `c`, all
    /// in metres, centered on an `n1 x n2` plane of `dx x dy` elements. Layer
    /// `l` samples the section at height `(l - 1/2) dz`. Layers whose section
    /// would be empty are dropped.
    pub fn half_ellipsoid(
        n1: usize,
        n2: usize,
        (dx, dy, dz): (f64, f64, f64),
        (a, b, c): (f64, f64, f64),
    ) -> Result<Self> {
        let (xc, yc) = (0.5 * n1 as f64 * dx, 0.5 * n2 as f64 * dy);
        let mut masks = Vec::new();
        let mut l = 1usize;
        loop {
            let z = (l as f64 - 0.5) * dz;
            if z >= c {
                break;
            }
            let s = (1.0 - (z / c).powi(2)).sqrt();
            let mask = LayerMask::from_fn(n1, n2, |d1, d2| {
                let x = (d1 as f64 - 0.5) * dx - xc;
                let y = (d2 as f64 - 0.5) * dy - yc;
                (x / (a * s)).powi(2) + (y / (b * s)).powi(2) <= 1.0
            });
            if mask.is_empty() {
                break;
            }
            masks.push(mask);
            l += 1;
        }
        Self::new(masks)
    }

    /// Parses a text mask: one line per row `d2 = 1, 2, ...`, one character
    /// per column (`#`/`1` in part, `.`/`0` out). Layers are separated by a
    /// line of `---`. A single layer is extruded to `layers` layers.
    pub fn parse_mask_text(text: &str, layers: usize) -> Result<Self> {
        let mut groups: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with("//") {
                continue;
            }
            if t == "---" {
                groups.push(Vec::new());
                continue;
            }
            groups.last_mut().unwrap().push((i + 1, t));
        }
        groups.retain(|g| !g.is_empty());
        let mut masks = Vec::new();
        for rows in &groups {
            let n1 = rows[0].1.chars().count();
            let n2 = rows.len();
            let mut cells = vec![false; n1 * n2];
            for (d2, (lineno, row)) in rows.iter().enumerate() {
                if row.chars().count() != n1 {
                    return Err(Error::Parse { line: *lineno, msg: format!("expected {n1} columns") });
                }
                for (d1, ch) in row.chars().enumerate() {
                    cells[d1 + d2 * n1] = match ch {
                        '#' | '1' => true,
                        '.' | '0' => false,
                        other => {
                            return Err(Error::Parse { line: *lineno, msg: format!("unexpected mask character {other:?}") })
                        }
                    };
                }
            }
            masks.push(LayerMask::new(n1, n2, cells)?);
        }
        match masks.len() {
            0 => Err(Error::Geometry("mask file has no rows".into())),
            1 => Self::extruded(masks.pop().unwrap(), layers),
            _ => Self::new(masks),
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn layer_count(&self) -> usize {
        self.masks.len()
    }

    /// Mask of build layer `layer` (1-based).
    pub fn mask(&self, layer: usize) -> Result<&LayerMask> {
        if layer == 0 || layer > self.masks.len() {
            return Err(Error::Range(format!("layer {layer} outside 1..={}", self.masks.len())));
        }
        Ok(&self.masks[layer - 1])
    }

    /// Bounding box over every layer, 1-based inclusive.
    pub fn bounding_box(&self) -> ((usize, usize), (usize, usize)) {
        let mut lo = (usize::MAX, usize::MAX);
        let mut hi = (0, 0);
        for m in &self.masks {
            if let Some((a, b)) = m.bounding_box() {
                lo = (lo.0.min(a.0), lo.1.min(a.1));
                hi = (hi.0.max(b.0), hi.1.max(b.1));
            }
        }
        (lo, hi)
    }
}
