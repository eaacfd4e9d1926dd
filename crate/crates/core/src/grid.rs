//! Index arithmetic between the 3-D finite-difference mesh, the flat state
//! vector and the coarser control-voxel grid.
//!
//! Domain indices are 1-based: element `(d1, d2, d3)` with `1 <= d1 <= N1`,
//! `1 <= d2 <= N2`, `1 <= d3 <= L`, where `d3 = L` is the top (newest) layer
//! of the state window. Storage is 0-based everywhere else in the crate; use
//! [`MeshSpec::offset`] to convert.

use nalgebra::DVector;
use ndarray::Array3;

use crate::error::{Error, Result};

/// Uniform finite-difference mesh over the top `layers` layers of the part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub n1: usize,
    pub n2: usize,
    /// Depth of the constant-dimension state window, in layers.
    pub layers: usize,
    /// Element sizes in metres; `dz` is the powder layer thickness.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Time step in seconds.
    pub dt: f64,
}

impl MeshSpec {
    pub fn new(n1: usize, n2: usize, layers: usize, dx: f64, dy: f64, dz: f64, dt: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 || layers == 0 {
            return Err(Error::Argument(format!(
                "mesh counts must be positive, got {n1}x{n2}x{layers}"
            )));
        }
        for (name, v) in [("dx", dx), ("dy", dy), ("dz", dz), ("dt", dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { n1, n2, layers, dx, dy, dz, dt })
    }

    /// Elements per layer, `N1*N2`.
    pub fn plane_len(&self) -> usize {
        self.n1 * self.n2
    }

    /// Length of the state vector, `N1*N2*L`.
    pub fn state_len(&self) -> usize {
        self.n1 * self.n2 * self.layers
    }

    /// 0-based storage offset of a 1-based element, unchecked.
    #[inline]
    pub fn offset(&self, d1: usize, d2: usize, d3: usize) -> usize {
        (d1 - 1) + (d2 - 1) * self.n1 + (d3 - 1) * self.n1 * self.n2
    }

    /// 0-based offset of in-plane element `(d1, d2)` within the top layer.
    #[inline]
    pub fn top_offset(&self, d1: usize, d2: usize) -> usize {
        self.offset(d1, d2, self.layers)
    }

    /// Volume of one element in cubic metres.
    pub fn element_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Explicit-scheme diffusion number `alpha*dt*(1/dx^2+1/dy^2+1/dz^2)`.
    pub fn diffusion_number(&self, alpha: f64) -> f64 {
        alpha * self.dt * (1.0 / (self.dx * self.dx) + 1.0 / (self.dy * self.dy) + 1.0 / (self.dz * self.dz))
    }

    /// Flat index `d1 + (d2-1)N1 + (d3-1)N1N2`.
    pub fn phi(&self, d1: usize, d2: usize, d3: usize) -> Result<FlatIndex> {
        if !(1..=self.n1).contains(&d1) || !(1..=self.n2).contains(&d2) || !(1..=self.layers).contains(&d3) {
            return Err(Error::Range(format!(
                "element ({d1},{d2},{d3}) outside mesh {}x{}x{}",
                self.n1, self.n2, self.layers
            )));
        }
        Ok(FlatIndex(d1 + (d2 - 1) * self.n1 + (d3 - 1) * self.n1 * self.n2))
    }

    /// Inverse of [`MeshSpec::phi`] via the ceiling formulas.
    pub fn phi_inv(&self, d_hat: FlatIndex) -> Result<(usize, usize, usize)> {
        let d = d_hat.get();
        if d == 0 || d > self.state_len() {
            return Err(Error::Range(format!(
                "flat index {d} outside 1..={}",
                self.state_len()
            )));
        }
        let plane = self.plane_len();
        let d3 = d.div_ceil(plane);
        let rem = d - (d3 - 1) * plane;
        let d2 = rem.div_ceil(self.n1);
        let d1 = rem - (d2 - 1) * self.n1;
        Ok((d1, d2, d3))
    }
}

/// 1-based position in the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlatIndex(usize);

impl FlatIndex {
    pub fn new(d_hat: usize) -> Self {
        FlatIndex(d_hat)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// 0-based storage offset.
    pub fn offset(self) -> usize {
        self.0 - 1
    }
}

/// Flattens an `N1 x N2 x L` array in `phi` order.
pub fn vectorize(field: &Array3<f64>, spec: &MeshSpec) -> Result<DVector<f64>> {
    let shape = field.shape();
    if shape != [spec.n1, spec.n2, spec.layers] {
        return Err(Error::Dimension(format!(
            "array shape {:?} does not match mesh {}x{}x{}",
            shape, spec.n1, spec.n2, spec.layers
        )));
    }
    let mut out = DVector::zeros(spec.state_len());
    for d3 in 0..spec.layers {
        for d2 in 0..spec.n2 {
            for d1 in 0..spec.n1 {
                out[spec.offset(d1 + 1, d2 + 1, d3 + 1)] = field[[d1, d2, d3]];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`vectorize`].
pub fn devectorize(vec: &DVector<f64>, spec: &MeshSpec) -> Result<Array3<f64>> {
    if vec.len() != spec.state_len() {
        return Err(Error::Dimension(format!(
            "vector of length {} does not match mesh of {} elements",
            vec.len(),
            spec.state_len()
        )));
    }
    Ok(Array3::from_shape_fn((spec.n1, spec.n2, spec.layers), |(i, j, k)| {
        vec[spec.offset(i + 1, j + 1, k + 1)]
    }))
}

/// 1-based voxel id, numbered like mesh elements (x fastest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelId(pub usize);

/// Coarse control grid laid over the layer cross-section.
///
/// Voxels are anchored at the part bounding-box minimum corner and span
/// `voxel_size` mesh elements per axis; the last row/column may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelGridSpec {
    pub m1: usize,
    pub m2: usize,
    /// Mesh elements per voxel along x and y.
    pub voxel_size: (usize, usize),
    /// 1-based mesh element at the lower-left corner of voxel 1.
    pub origin: (usize, usize),
}

impl VoxelGridSpec {
    /// Grid covering the element box `[lo, hi]` (1-based, inclusive).
    pub fn covering(lo: (usize, usize), hi: (usize, usize), voxel_size: (usize, usize)) -> Result<Self> {
        if voxel_size.0 == 0 || voxel_size.1 == 0 {
            return Err(Error::Argument("voxel size must be positive".into()));
        }
        if lo.0 == 0 || lo.1 == 0 || hi.0 < lo.0 || hi.1 < lo.1 {
            return Err(Error::Argument(format!("invalid element box {lo:?}..{hi:?}")));
        }
        Ok(Self {
            m1: (hi.0 - lo.0 + 1).div_ceil(voxel_size.0),
            m2: (hi.1 - lo.1 + 1).div_ceil(voxel_size.1),
            voxel_size,
            origin: lo,
        })
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxel containing mesh element `(d1, d2)`.
    pub fn element_to_voxel(&self, d1: usize, d2: usize) -> Result<VoxelId> {
        let (o1, o2) = self.origin;
        if d1 < o1 || d2 < o2 {
            return Err(Error::Range(format!("element ({d1},{d2}) below voxel grid origin")));
        }
        let v1 = (d1 - o1) / self.voxel_size.0;
        let v2 = (d2 - o2) / self.voxel_size.1;
        if v1 >= self.m1 || v2 >= self.m2 {
            return Err(Error::Range(format!(
                "element ({d1},{d2}) outside {}x{} voxel grid",
                self.m1, self.m2
            )));
        }
        Ok(VoxelId(1 + v1 + v2 * self.m1))
    }

    /// 1-based `(vx, vy)` voxel coordinates.
    pub fn coords(&self, id: VoxelId) -> (usize, usize) {
        let k = id.0 - 1;
        (k % self.m1 + 1, k / self.m1 + 1)
    }

    /// Mesh elements (1-based, inclusive bounds) covered by a voxel, clipped
    /// to `n1 x n2`.
    pub fn element_range(&self, id: VoxelId, n1: usize, n2: usize) -> ((usize, usize), (usize, usize)) {
        let (vx, vy) = self.coords(id);
        let x0 = self.origin.0 + (vx - 1) * self.voxel_size.0;
        let y0 = self.origin.1 + (vy - 1) * self.voxel_size.1;
        (
            (x0, (x0 + self.voxel_size.0 - 1).min(n1)),
            (y0, (y0 + self.voxel_size.1 - 1).min(n2)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mesh(n1: usize, n2: usize, l: usize) -> MeshSpec {
        MeshSpec::new(n1, n2, l, 1.0, 1.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn phi_corners() {
        let m = mesh(4, 3, 2);
        assert_eq!(m.phi(1, 1, 1).unwrap().get(), 1);
        assert_eq!(m.phi(4, 3, 2).unwrap().get(), 24);
        assert_eq!(m.phi_inv(FlatIndex::new(1)).unwrap(), (1, 1, 1));
        assert_eq!(m.phi_inv(FlatIndex::new(24)).unwrap(), (4, 3, 2));
    }

    #[test]
    fn phi_rejects_out_of_range() {
        let m = mesh(4, 3, 2);
        assert!(matches!(m.phi(0, 1, 1), Err(Error::Range(_))));
        assert!(matches!(m.phi(5, 1, 1), Err(Error::Range(_))));
        assert!(matches!(m.phi(1, 1, 3), Err(Error::Range(_))));
        assert!(matches!(m.phi_inv(FlatIndex::new(0)), Err(Error::Range(_))));
        assert!(matches!(m.phi_inv(FlatIndex::new(25)), Err(Error::Range(_))));
    }

    #[test]
    fn phi_round_trip_5x4x3() {
        let m = mesh(5, 4, 3);
        for d3 in 1..=3 {
            for d2 in 1..=4 {
                for d1 in 1..=5 {
                    let f = m.phi(d1, d2, d3).unwrap();
                    assert_eq!(m.phi_inv(f).unwrap(), (d1, d2, d3));
                }
            }
        }
    }

    #[test]
    fn phi_is_bijection_6x5x4() {
        let m = mesh(6, 5, 4);
        let mut seen = vec![false; m.state_len()];
        for d3 in 1..=4 {
            for d2 in 1..=5 {
                for d1 in 1..=6 {
                    let f = m.phi(d1, d2, d3).unwrap().get();
                    assert!(!seen[f - 1], "index {f} hit twice");
                    seen[f - 1] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        for d in 1..=m.state_len() {
            let (a, b, c) = m.phi_inv(FlatIndex::new(d)).unwrap();
            assert_eq!(m.phi(a, b, c).unwrap().get(), d);
        }
    }

    #[test]
    fn vectorize_zero_and_one_hot() {
        let m = mesh(4, 3, 2);
        let z = Array3::<f64>::zeros((4, 3, 2));
        assert!(vectorize(&z, &m).unwrap().iter().all(|&v| v == 0.0));
        let mut a = Array3::<f64>::zeros((4, 3, 2));
        a[[1, 0, 0]] = 1.0;
        let v = vectorize(&a, &m).unwrap();
        assert_eq!(v[1], 1.0);
        assert_eq!(v.sum(), 1.0);
    }

    #[test]
    fn vectorize_shape_mismatch() {
        let m = mesh(4, 3, 2);
        let a = Array3::<f64>::zeros((3, 4, 2));
        assert!(matches!(vectorize(&a, &m), Err(Error::Dimension(_))));
        assert!(matches!(devectorize(&DVector::zeros(5), &m), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn vectorize_round_trip(n1 in 1usize..6, n2 in 1usize..6, l in 1usize..4, seed in any::<u64>()) {
            let m = mesh(n1, n2, l);
            let a = Array3::from_shape_fn((n1, n2, l), |(i, j, k)| {
                ((seed ^ ((i * 31 + j * 7 + k * 131) as u64)) % 1000) as f64 * 0.37
            });
            let v = vectorize(&a, &m).unwrap();
            prop_assert_eq!(devectorize(&v, &m).unwrap(), a);
        }
    }

    #[test]
    fn voxel_assignment() {
        let g = VoxelGridSpec::covering((1, 1), (6, 3), (3, 3)).unwrap();
        assert_eq!(g.element_to_voxel(1, 1).unwrap(), VoxelId(1));
        assert_eq!(g.element_to_voxel(4, 1).unwrap(), VoxelId(2));
        assert!(matches!(g.element_to_voxel(7, 1), Err(Error::Range(_))));
        assert_eq!(g.coords(VoxelId(2)), (2, 1));
    }

    #[test]
    fn voxel_preimages_partition_the_grid() {
        // Partial voxels on the right and top edges.
        let (n1, n2) = (10, 7);
        let g = VoxelGridSpec::covering((1, 1), (n1, n2), (3, 4)).unwrap();
        let mut counts = vec![0usize; g.len()];
        for d2 in 1..=n2 {
            for d1 in 1..=n1 {
                let v = g.element_to_voxel(d1, d2).unwrap();
                let ((x0, x1), (y0, y1)) = g.element_range(v, n1, n2);
                assert!((x0..=x1).contains(&d1) && (y0..=y1).contains(&d2));
                counts[v.0 - 1] += 1;
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), n1 * n2);
        assert!(counts.iter().all(|&c| c > 0));
    }
}
