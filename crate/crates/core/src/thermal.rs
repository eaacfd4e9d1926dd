//! Explicit finite-difference conduction plant.
//!
//! The state window holds the top `L` build layers. Window slot `k`
//! (`1..=L`, `L` on top) of build layer `l` holds build layer `l - L + k`;
//! slots that would hold a layer below the first one are substrate. The
//! substrate face and the bottom of the window are Dirichlet at ambient
//! (temperature 0 after shifting), every other face is adiabatic via a
//! mirrored ghost element.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{LayerMask, PartGeometry};
use crate::grid::MeshSpec;
use crate::measurement::{measure, MeasurementKind};
use crate::path::{MaskShape, PathSchedule};
use crate::sparse::CsrMatrix;

/// Thermal properties of the solid part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// W/(m K)
    pub conductivity: f64,
    /// m^2/s
    pub diffusivity: f64,
}

impl MaterialParams {
    pub fn new(conductivity: f64, diffusivity: f64) -> Result<Self> {
        if !(conductivity > 0.0 && diffusivity > 0.0) {
            return Err(Error::Argument(format!(
                "conductivity and diffusivity must be positive, got {conductivity} and {diffusivity}"
            )));
        }
        Ok(Self { conductivity, diffusivity })
    }

    /// Solid steel.
    pub fn steel() -> Self {
        Self { conductivity: 33.5, diffusivity: 6e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BottomBoundary {
    /// Ambient-temperature substrate below the window.
    #[default]
    Substrate,
    /// Insulated bottom; the whole domain conserves heat.
    Adiabatic,
}

/// Knobs of the plant that are not mesh or material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOptions {
    pub bottom: BottomBoundary,
    /// Powder-to-solid conductivity ratio. Zero treats the part contour as
    /// adiabatic and leaves powder elements out of the stencil.
    pub powder_ratio: f64,
    /// Finite-difference steps per sample. The input is held over all of them.
    pub substeps: usize,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self { bottom: BottomBoundary::Substrate, powder_ratio: 0.0, substeps: 1 }
    }
}

/// Per-layer conduction operator `A` and input gain of `B`.
///
/// `B` maps a top-layer power distribution in watts onto the state: every
/// top-layer element receives `beta * u` kelvin per step with
/// `beta = alpha*dt/(k_c*dx*dy*dz)`.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    mesh: MeshSpec,
    a: CsrMatrix,
    beta: f64,
    substeps: usize,
    layer: usize,
    window: Vec<Option<LayerMask>>,
}

/// Builds the conduction operator for build layer `layer` (1-based).
pub fn build_system(
    mesh: &MeshSpec,
    mat: &MaterialParams,
    geom: &PartGeometry,
    layer: usize,
    opts: &PlantOptions,
) -> Result<SystemMatrices> {
    let ratio = mesh.diffusion_number(mat.diffusivity);
    if ratio > 0.5 {
        return Err(Error::Stability { ratio });
    }
    if geom.n1() != mesh.n1 || geom.n2() != mesh.n2 {
        return Err(Error::Dimension(format!(
            "geometry plane {}x{} does not match mesh {}x{}",
            geom.n1(),
            geom.n2(),
            mesh.n1,
            mesh.n2
        )));
    }
    if opts.substeps == 0 {
        return Err(Error::Argument("substeps must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&opts.powder_ratio) {
        return Err(Error::Argument(format!("powder ratio {} outside [0, 1]", opts.powder_ratio)));
    }
    geom.mask(layer)?;

    let l_win = mesh.layers;
    let window: Vec<Option<LayerMask>> = (1..=l_win)
        .map(|k| {
            let build = layer as isize - l_win as isize + k as isize;
            (build >= 1).then(|| geom.mask(build as usize).unwrap().clone())
        })
        .collect();

    let alpha = mat.diffusivity;
    let rx = alpha * mesh.dt / (mesh.dx * mesh.dx);
    let ry = alpha * mesh.dt / (mesh.dy * mesh.dy);
    let rz = alpha * mesh.dt / (mesh.dz * mesh.dz);
    let powder = opts.powder_ratio;

    // Conductance weight of an element: 1 in part, `powder` for powder,
    // None where there is no element (substrate slot or outside the plane).
    let weight = |k: usize, d1: isize, d2: isize| -> Option<f64> {
        if d1 < 1 || d2 < 1 || d1 as usize > mesh.n1 || d2 as usize > mesh.n2 {
            return None;
        }
        match &window[k - 1] {
            None => None,
            Some(m) if m.contains_i(d1, d2) => Some(1.0),
            Some(_) if powder > 0.0 => Some(powder),
            Some(_) => None,
        }
    };

    let n = mesh.state_len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for k in 1..=l_win {
        for d2 in 1..=mesh.n2 {
            for d1 in 1..=mesh.n1 {
                let (i1, i2) = (d1 as isize, d2 as isize);
                let Some(w0) = weight(k, i1, i2) else { continue };
                let me = mesh.offset(d1, d2, k);
                let mut row = Vec::with_capacity(7);
                let mut diag = 1.0;
                let couple = |row: &mut Vec<(usize, f64)>, diag: &mut f64, r: f64, w: Option<f64>, off: usize| {
                    if let Some(w1) = w {
                        let c = r * w0.min(w1);
                        if c > 0.0 {
                            row.push((off, c));
                            *diag -= c;
                        }
                    }
                };
                if d1 > 1 {
                    couple(&mut row, &mut diag, rx, weight(k, i1 - 1, i2), mesh.offset(d1 - 1, d2, k));
                }
                if d1 < mesh.n1 {
                    couple(&mut row, &mut diag, rx, weight(k, i1 + 1, i2), mesh.offset(d1 + 1, d2, k));
                }
                if d2 > 1 {
                    couple(&mut row, &mut diag, ry, weight(k, i1, i2 - 1), mesh.offset(d1, d2 - 1, k));
                }
                if d2 < mesh.n2 {
                    couple(&mut row, &mut diag, ry, weight(k, i1, i2 + 1), mesh.offset(d1, d2 + 1, k));
                }
                // Below: another window slot, the substrate, or the window floor.
                let below_is_sink = k == 1 || window[k - 2].is_none();
                if below_is_sink {
                    if opts.bottom == BottomBoundary::Substrate {
                        diag -= rz * w0;
                    }
                } else {
                    couple(&mut row, &mut diag, rz, weight(k - 1, i1, i2), mesh.offset(d1, d2, k - 1));
                }
                if k < l_win {
                    couple(&mut row, &mut diag, rz, weight(k + 1, i1, i2), mesh.offset(d1, d2, k + 1));
                }
                row.push((me, diag));
                row.sort_by_key(|&(c, _)| c);
                rows[me] = row;
            }
        }
    }

    Ok(SystemMatrices {
        mesh: *mesh,
        a: CsrMatrix::from_rows(n, rows),
        beta: alpha * mesh.dt / (mat.conductivity * mesh.element_volume()),
        substeps: opts.substeps,
        layer,
        window,
    })
}

impl SystemMatrices {
    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    /// One finite-difference step of the conduction operator.
    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    /// Kelvin per watt added to a struck element per finite-difference step.
    pub fn input_gain(&self) -> f64 {
        self.beta
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Sample period, `dt * substeps`.
    pub fn sample_period(&self) -> f64 {
        self.mesh.dt * self.substeps as f64
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    /// Cross-section of the top window slot.
    pub fn top_mask(&self) -> &LayerMask {
        self.window[self.mesh.layers - 1].as_ref().expect("top slot always holds the current layer")
    }

    /// Dense `A` for one finite-difference step.
    pub fn a_dense(&self) -> DMatrix<f64> {
        self.a.to_dense()
    }

    /// Dense `B`, mapping a top-layer distribution (length `N1*N2`) onto the
    /// state for one finite-difference step.
    pub fn b_dense(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.mesh.state_len(), self.mesh.plane_len());
        let top = self.mesh.top_offset(1, 1);
        for j in 0..self.mesh.plane_len() {
            b[(top + j, j)] = self.beta;
        }
        b
    }

    /// Per-sample transition `A^K`, `K` = substeps.
    pub fn sample_a_dense(&self) -> DMatrix<f64> {
        let a = self.a_dense();
        let mut out = DMatrix::identity(a.nrows(), a.ncols());
        for _ in 0..self.substeps {
            out = &a * out;
        }
        out
    }

    /// Per-sample input map `sum_{m<K} A^m B` for power held over a sample.
    pub fn sample_b_dense(&self) -> DMatrix<f64> {
        let a = self.a_dense();
        let b = self.b_dense();
        let mut acc = b.clone();
        let mut term = b;
        for _ in 1..self.substeps {
            term = &a * term;
            acc += &term;
        }
        acc
    }

    /// Advances `x` by one sample in place with top-layer input `u` (W),
    /// given sparsely as `(plane offset, watts)`. `scratch` must match `x`.
    pub fn step_sparse(&self, x: &mut [f64], scratch: &mut [f64], u: &[(usize, f64)]) {
        let top = self.mesh.top_offset(1, 1);
        for _ in 0..self.substeps {
            self.a.mul_vec_into(x, scratch);
            for &(j, w) in u {
                scratch[top + j] += self.beta * w;
            }
            x.copy_from_slice(scratch);
        }
    }
}

/// Temperature above ambient over the state window, tagged with the build
/// layer it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub x: DVector<f64>,
    pub layer: usize,
}

impl ThermalState {
    pub fn zeros(mesh: &MeshSpec, layer: usize) -> Self {
        Self { x: DVector::zeros(mesh.state_len()), layer }
    }
}

/// `x <- A x + B u` for one sample; `u` is the dense top-layer input (W).
pub fn step(state: &ThermalState, u: &DVector<f64>, sys: &SystemMatrices) -> Result<ThermalState> {
    let mesh = sys.mesh();
    if state.x.len() != mesh.state_len() {
        return Err(Error::Dimension(format!(
            "state has length {}, system expects {}",
            state.x.len(),
            mesh.state_len()
        )));
    }
    if u.len() != mesh.plane_len() {
        return Err(Error::Dimension(format!(
            "input has length {}, system expects {}",
            u.len(),
            mesh.plane_len()
        )));
    }
    let sparse_u: Vec<(usize, f64)> = u.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).collect();
    let mut x = state.x.clone();
    let mut scratch = vec![0.0; x.len()];
    sys.step_sparse(x.as_mut_slice(), &mut scratch, &sparse_u);
    Ok(ThermalState { x, layer: state.layer })
}

/// Inter-layer temperature reset operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum ResetOperator {
    /// Full return to ambient during recoating.
    #[default]
    Zero,
    Identity,
    Dense(DMatrix<f64>),
}

impl ResetOperator {
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            ResetOperator::Zero => Ok(DVector::zeros(x.len())),
            ResetOperator::Identity => Ok(x.clone()),
            ResetOperator::Dense(m) => {
                if m.ncols() != x.len() || m.nrows() != x.len() {
                    return Err(Error::Dimension(format!(
                        "reset operator is {}x{}, state has length {}",
                        m.nrows(),
                        m.ncols(),
                        x.len()
                    )));
                }
                Ok(m * x)
            }
        }
    }

    pub fn dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            ResetOperator::Zero => DMatrix::zeros(n, n),
            ResetOperator::Identity => DMatrix::identity(n, n),
            ResetOperator::Dense(m) => m.clone(),
        }
    }
}

/// Shifts the window one layer down and clears the new top layer.
pub fn shift_down(x: &DVector<f64>, mesh: &MeshSpec) -> DVector<f64> {
    let plane = mesh.plane_len();
    let n = mesh.state_len();
    let mut out = DVector::zeros(n);
    out.as_mut_slice()[..n - plane].copy_from_slice(&x.as_slice()[plane..]);
    out
}

/// Dense window shift operator: `[0 I; 0 0]` in layer blocks.
pub fn shift_operator(mesh: &MeshSpec) -> DMatrix<f64> {
    let plane = mesh.plane_len();
    let n = mesh.state_len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n - plane {
        d[(i, i + plane)] = 1.0;
    }
    d
}

/// End-of-layer recoat: applies `reset`, then shifts the window and advances
/// the layer counter.
pub fn recoat_and_shift(state: &ThermalState, mesh: &MeshSpec, reset: &ResetOperator) -> Result<ThermalState> {
    let r = reset.apply(&state.x)?;
    Ok(ThermalState { x: shift_down(&r, mesh), layer: state.layer + 1 })
}

/// Runs one layer from `x0` along `sched` with temporal power `u_t`
/// (`u_t[n]` applied during sample `n`, `n < N_t`). Returns the state at
/// `N_t` and the outputs `y(1..=N_t)`.
pub fn simulate_layer(
    x0: &ThermalState,
    sched: &PathSchedule,
    u_t: &[f64],
    sys: &SystemMatrices,
    kind: &MeasurementKind,
    shape: &MaskShape,
) -> Result<(ThermalState, DVector<f64>)> {
    let mesh = sys.mesh();
    let n_t = sched.n_t();
    if u_t.len() != n_t {
        return Err(Error::Dimension(format!(
            "power sequence has {} samples, schedule has N_t = {n_t}",
            u_t.len()
        )));
    }
    if x0.x.len() != mesh.state_len() {
        return Err(Error::Dimension("initial state does not match the mesh".into()));
    }
    let masks = sched.mask_sequence(shape, sys.top_mask());
    let mut x = x0.x.clone();
    let mut scratch = vec![0.0; x.len()];
    let mut y = DVector::zeros(n_t);
    let mut u = Vec::new();
    for n in 1..=n_t {
        u.clear();
        u.extend(masks[n - 1].iter().map(|&(j, w)| (j, w * u_t[n - 1])));
        sys.step_sparse(x.as_mut_slice(), &mut scratch, &u);
        y[n - 1] = measure(kind, n, sched, mesh, sys.top_mask(), x.as_slice())?;
    }
    Ok((ThermalState { x, layer: x0.layer }, y))
}

/// Pulse response seen by a camera sampling along the edge of a block.
///
/// A 1 W pulse is held over the first sample at the top corner element
/// `(1, 1, L)` of a rectangular all-adiabatic block. Entry `k` is the
/// temperature of the top edge element `spacing * k` elements along `d1`
/// from the corner, read `k` samples after the pulse ends, so the sequence
/// is the corner column of `D_L` for an edge scan with that sample spacing.
/// `spacing = 0` reads the corner itself. The sample period must be a whole
/// number of mesh time steps.
pub fn corner_pulse_decay(
    mat: &MaterialParams,
    mesh: &MeshSpec,
    samples: usize,
    sample_period: f64,
    spacing: usize,
) -> Result<Vec<f64>> {
    let k = (sample_period / mesh.dt).round();
    if k < 1.0 || ((k * mesh.dt - sample_period) / sample_period).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "sample period {sample_period} s is not a multiple of dt = {} s",
            mesh.dt
        )));
    }
    if samples > 0 && spacing * (samples - 1) >= mesh.n1 {
        return Err(Error::Argument(format!(
            "{samples} samples {spacing} elements apart do not fit in n1 = {}",
            mesh.n1
        )));
    }
    let geom = PartGeometry::extruded(LayerMask::full(mesh.n1, mesh.n2), mesh.layers)?;
    let opts = PlantOptions { substeps: k as usize, bottom: BottomBoundary::Adiabatic, ..PlantOptions::default() };
    let sys = build_system(mesh, mat, &geom, mesh.layers, &opts)?;
    let mut x = vec![0.0; mesh.state_len()];
    let mut scratch = vec![0.0; x.len()];
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let u: &[(usize, f64)] = if s == 0 { &[(0, 1.0)] } else { &[] };
        sys.step_sparse(&mut x, &mut scratch, u);
        out.push(x[mesh.top_offset(1 + spacing * s, 1)]);
    }
    Ok(out)
}
