//! Lifted layer-domain operators.
//!
//! Within a layer the temporal input `u_t(0..N_t)` maps to the temporal
//! output `y(1..=N_t)` through the lower-triangular `D_L`. Voxel inputs reach
//! the temporal sequence through the look-up table `P` and temporal outputs
//! are averaged per voxel by `Q`, giving the spatial gain `G_s = Q D_L P`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{MeshSpec, VoxelGridSpec};
use crate::measurement::{measure, measurement_vector, MeasurementKind};
use crate::path::{register_samples, MaskShape, PathSchedule, SampleSets};
use crate::thermal::{shift_operator, ResetOperator, SystemMatrices};

/// Which sample's voxel selects the power of input `u_t(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMode {
    /// Power of the voxel holding sample `n`: `p_ij = 1` iff `i-1 ∈ S_j`.
    Backward,
    /// Power of the voxel holding sample `n+1`: `p_ij = 1` iff `i ∈ S_j`.
    Forward,
}

/// Averaging operator `Q` (`N_s x N_t`). Column `j-1` holds output sample
/// `j`; sample 0 has no output and is ignored.
pub fn build_q(sets: &SampleSets, n_t: usize) -> Result<DMatrix<f64>> {
    let mut q = DMatrix::zeros(sets.len(), n_t);
    for (i, s) in sets.sets().iter().enumerate() {
        let obs: Vec<usize> = s.iter().copied().filter(|&n| n >= 1 && n <= n_t).collect();
        if obs.is_empty() {
            return Err(Error::Precondition(format!(
                "voxel {} has no output sample in 1..={n_t}",
                sets.voxels()[i].0
            )));
        }
        let w = 1.0 / obs.len() as f64;
        for n in obs {
            q[(i, n - 1)] = w;
        }
    }
    Ok(q)
}

/// Look-up table `P` (`N_t x N_s`). Row `i-1` is the input `u_t(i-1)`.
pub fn build_p(sets: &SampleSets, n_t: usize, mode: PMode) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n_t, sets.len());
    for (j, s) in sets.sets().iter().enumerate() {
        for &n in s {
            let row = match mode {
                PMode::Backward => Some(n),
                PMode::Forward => n.checked_sub(1),
            };
            if let Some(r) = row.filter(|&r| r < n_t) {
                p[(r, j)] = 1.0;
            }
        }
    }
    p
}

fn require_linear(kind: &MeasurementKind) -> Result<()> {
    if kind.is_linear() {
        Ok(())
    } else {
        Err(Error::UnsupportedMeasurement(kind.name().into()))
    }
}

/// `D_L` with `d_ij = f(i)^T A^(i-j) B h(j-1)` for `i >= j`, built column by
/// column by propagating a unit pulse through the plant.
pub fn build_dl(
    sys: &SystemMatrices,
    sched: &PathSchedule,
    kind: &MeasurementKind,
    shape: &MaskShape,
) -> Result<DMatrix<f64>> {
    require_linear(kind)?;
    let mesh = sys.mesh();
    let n_t = sched.n_t();
    let masks = sched.mask_sequence(shape, sys.top_mask());
    let mut dl = DMatrix::zeros(n_t, n_t);
    let mut x = vec![0.0; mesh.state_len()];
    let mut scratch = vec![0.0; mesh.state_len()];
    for j in 1..=n_t {
        x.iter_mut().for_each(|v| *v = 0.0);
        sys.step_sparse(&mut x, &mut scratch, &masks[j - 1]);
        dl[(j - 1, j - 1)] = measure(kind, j, sched, mesh, sys.top_mask(), &x)?;
        for i in j + 1..=n_t {
            sys.step_sparse(&mut x, &mut scratch, &[]);
            dl[(i - 1, j - 1)] = measure(kind, i, sched, mesh, sys.top_mask(), &x)?;
        }
    }
    Ok(dl)
}

/// `C_L` with row `n` equal to `f(n)^T A^n` (`A` per sample).
pub fn build_cl(sys: &SystemMatrices, sched: &PathSchedule, kind: &MeasurementKind) -> Result<DMatrix<f64>> {
    require_linear(kind)?;
    let mesh = sys.mesh();
    let n_t = sched.n_t();
    let mut cl = DMatrix::zeros(n_t, mesh.state_len());
    let mut r = vec![0.0; mesh.state_len()];
    let mut scratch = vec![0.0; mesh.state_len()];
    for n in 1..=n_t {
        let f = measurement_vector(kind, n, sched, mesh, None)?;
        r.copy_from_slice(f.as_slice());
        for _ in 0..n * sys.substeps() {
            sys.a().tr_mul_vec_into(&r, &mut scratch);
            std::mem::swap(&mut r, &mut scratch);
        }
        cl.row_mut(n - 1).copy_from_slice(&r);
    }
    Ok(cl)
}

/// `B~` with column `j` equal to `A^(N_t-j-1) B h(j)`: the end-of-layer
/// state produced by a unit input at sample `j`.
pub fn build_b_tilde(sys: &SystemMatrices, sched: &PathSchedule, shape: &MaskShape) -> DMatrix<f64> {
    let mesh = sys.mesh();
    let n_t = sched.n_t();
    let masks = sched.mask_sequence(shape, sys.top_mask());
    let mut bt = DMatrix::zeros(mesh.state_len(), n_t);
    let mut x = vec![0.0; mesh.state_len()];
    let mut scratch = vec![0.0; mesh.state_len()];
    for (j, mask) in masks.iter().enumerate().take(n_t) {
        x.iter_mut().for_each(|v| *v = 0.0);
        sys.step_sparse(&mut x, &mut scratch, mask);
        for _ in j + 1..n_t {
            sys.step_sparse(&mut x, &mut scratch, &[]);
        }
        bt.column_mut(j).copy_from_slice(&x);
    }
    bt
}

/// Per-sample transition over the whole layer, `A^(N_t)`.
pub fn layer_propagator(sys: &SystemMatrices, n_t: usize) -> DMatrix<f64> {
    let n = sys.mesh().state_len();
    let mut m = DMatrix::zeros(n, n);
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for k in 0..n {
        x.iter_mut().for_each(|v| *v = 0.0);
        x[k] = 1.0;
        for _ in 0..n_t {
            sys.step_sparse(&mut x, &mut scratch, &[]);
        }
        m.column_mut(k).copy_from_slice(&x);
    }
    m
}

/// Layer-to-layer operators `A_L = Δ₁ A_r A^(N_t)` and `B_L = Δ₁ A_r B~`.
pub fn build_layer_transition(
    sys: &SystemMatrices,
    sched: &PathSchedule,
    reset: &ResetOperator,
    shape: &MaskShape,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mesh: &MeshSpec = sys.mesh();
    let n = mesh.state_len();
    let n_t = sched.n_t();
    if *reset == ResetOperator::Zero {
        return (DMatrix::zeros(n, n), DMatrix::zeros(n, n_t));
    }
    let left = shift_operator(mesh) * reset.dense(n);
    (&left * layer_propagator(sys, n_t), &left * build_b_tilde(sys, sched, shape))
}

/// State-transition matrix `Φ(l1, l2) = A_L(l1-1) ... A_L(l2)`, with
/// `a_l[k]` holding `A_L(k+1)`.
pub fn state_transition(a_l: &[DMatrix<f64>], l1: usize, l2: usize) -> Result<DMatrix<f64>> {
    if l1 < l2 {
        return Err(Error::Argument(format!("state transition needs l1 >= l2, got {l1} < {l2}")));
    }
    if l2 == 0 || l1 - 1 > a_l.len() {
        return Err(Error::Range(format!("layers {l2}..{l1} not covered by {} operators", a_l.len())));
    }
    let n = a_l.first().map_or(0, |m| m.nrows());
    let mut phi = DMatrix::identity(n, n);
    for l in l2..l1 {
        phi = &a_l[l - 1] * phi;
    }
    Ok(phi)
}

/// `G_s = Q D_L P`.
pub fn build_gs(q: &DMatrix<f64>, dl: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.ncols() != dl.nrows() || dl.ncols() != p.nrows() {
        return Err(Error::Dimension(format!(
            "cannot form Q({}x{}) D_L({}x{}) P({}x{})",
            q.nrows(),
            q.ncols(),
            dl.nrows(),
            dl.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(q * dl * p)
}

/// The spatial view of one layer.
#[derive(Debug, Clone)]
pub struct LiftedSystem {
    pub sets: SampleSets,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub dl: DMatrix<f64>,
    pub gs: DMatrix<f64>,
    pub mode: PMode,
}

/// Registers the schedule on the voxel grid and builds `Q`, `P`, `D_L` and
/// `G_s`. Voxels without an output sample are left out.
pub fn lift_layer(
    sys: &SystemMatrices,
    sched: &PathSchedule,
    kind: &MeasurementKind,
    shape: &MaskShape,
    vspec: &VoxelGridSpec,
    mode: PMode,
) -> Result<LiftedSystem> {
    let sets = register_samples(sched, vspec)?.observable(sched.n_t());
    let q = build_q(&sets, sched.n_t())?;
    let p = build_p(&sets, sched.n_t(), mode);
    let dl = build_dl(sys, sched, kind, shape)?;
    let gs = build_gs(&q, &dl, &p)?;
    Ok(LiftedSystem { sets, q, p, dl, gs, mode })
}
