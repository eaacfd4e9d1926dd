//! Output-controllability diagnostics for the lifted and spatial systems.
//!
//! Nothing in the closed loop depends on these checks; they only report.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lift::{build_gs, build_p, build_q, state_transition, PMode};
use crate::path::SampleSets;

/// Determinant and rank verdict of a lower-triangular `D_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1 {
    /// Product of the diagonal entries. May underflow for long layers.
    pub det: f64,
    /// `log10 |det|`, or `-inf` for a zero diagonal entry.
    pub log10_abs_det: f64,
    pub full_rank: bool,
}

/// Full rank of a triangular `D_L` reduces to a nonzero diagonal. Entries
/// below `eps * max|d_ij|` count as zero.
pub fn check_theorem1(dl: &DMatrix<f64>) -> Result<Theorem1> {
    if !dl.is_square() {
        return Err(Error::Dimension(format!("D_L is {}x{}, expected square", dl.nrows(), dl.ncols())));
    }
    let tol = f64::EPSILON * dl.amax();
    let diag = dl.diagonal();
    Ok(Theorem1 {
        det: diag.iter().product(),
        log10_abs_det: diag.iter().map(|d| d.abs().log10()).sum(),
        full_rank: diag.iter().all(|d| d.abs() > tol),
    })
}

/// Numerical rank: singular values at or below `max(rows, cols) * eps *
/// sigma_max` count as zero. Returns the rank and the threshold used.
pub fn numerical_rank(m: &DMatrix<f64>) -> (usize, f64) {
    if m.is_empty() {
        return (0, 0.0);
    }
    let sv = m.singular_values();
    let smax = sv.max();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    (sv.iter().filter(|&&s| s > tol).count(), tol)
}

/// Output controllability matrix over layers `0..l1`:
/// `[C_L(l1) Φ(l1, 1) B_L(0) | ... | C_L(l1) B_L(l1-1) | D_L(l1)]`, with
/// `a_l[k] = A_L(k+1)` and `b_l[r] = B_L(r)`. Returns the matrix and its
/// numerical rank.
pub fn output_controllability_matrix(
    c_l: &DMatrix<f64>,
    a_l: &[DMatrix<f64>],
    b_l: &[DMatrix<f64>],
    d_l: &DMatrix<f64>,
    l1: usize,
) -> Result<(DMatrix<f64>, usize)> {
    if b_l.len() < l1 {
        return Err(Error::Dimension(format!("need {l1} input operators, got {}", b_l.len())));
    }
    if c_l.nrows() != d_l.nrows() {
        return Err(Error::Dimension("C_L and D_L differ in row count".into()));
    }
    let mut blocks = Vec::with_capacity(l1 + 1);
    for (r, b) in b_l.iter().enumerate().take(l1) {
        let phi = if r + 1 == l1 {
            DMatrix::identity(c_l.ncols(), c_l.ncols())
        } else {
            state_transition(a_l, l1, r + 1)?
        };
        if phi.ncols() != b.nrows() || c_l.ncols() != phi.nrows() {
            return Err(Error::Dimension(format!("layer {r} operators are not conformable")));
        }
        blocks.push(c_l * phi * b);
    }
    blocks.push(d_l.clone());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = DMatrix::zeros(d_l.nrows(), cols);
    let mut at = 0;
    for b in blocks {
        m.columns_mut(at, b.ncols()).copy_from(&b);
        at += b.ncols();
    }
    let (rank, _) = numerical_rank(&m);
    Ok((m, rank))
}

/// Strict row diagonal dominance and the smallest row margin
/// `|m_ii| - sum_{j != i} |m_ij|`.
pub fn is_strictly_diag_dominant(m: &DMatrix<f64>) -> (bool, f64) {
    let n = m.nrows().min(m.ncols());
    let mut margin = f64::INFINITY;
    for i in 0..m.nrows() {
        let off: f64 = m.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
        let d = if i < n { m[(i, i)].abs() } else { 0.0 };
        margin = margin.min(d - off);
    }
    (m.is_square() && margin > 0.0, margin)
}

/// Smallest singular value relative to the largest: the least-squares
/// residual of `M w = 0` over unit `w`. Positive means only `w = 0` solves
/// the homogeneous system.
pub fn homogeneous_residual(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        0.0
    } else {
        sv.min() / smax
    }
}

/// Outcome of the fast-cooling controllability test.
#[derive(Debug, Clone)]
pub struct Theorem3 {
    pub dl_nonnegative: bool,
    pub dl_dominant: bool,
    pub dl_margin: f64,
    pub gs: DMatrix<f64>,
    pub gs_dominant: bool,
    pub gs_margin: f64,
    /// The theorem's hypothesis on `D_L` holds.
    pub satisfied: bool,
}

/// Checks the hypothesis (nonnegative, strictly dominant `D_L`) and builds
/// `G_s` with the one-step-forward `P` and averaging `Q` to cross-check the
/// conclusion. A satisfied hypothesis with a non-dominant `G_s` is reported
/// as a numerical failure.
pub fn check_theorem3(dl: &DMatrix<f64>, mode: PMode, sets: &SampleSets) -> Result<Theorem3> {
    if mode != PMode::Forward {
        return Err(Error::Precondition("the fast-cooling test needs the one-step-forward P".into()));
    }
    if !dl.is_square() {
        return Err(Error::Dimension("D_L must be square".into()));
    }
    let n_t = dl.nrows();
    let q = build_q(sets, n_t)?;
    let p = build_p(sets, n_t, mode);
    let gs = build_gs(&q, dl, &p)?;
    let dl_nonnegative = dl.iter().all(|&v| v >= 0.0);
    let (dl_dominant, dl_margin) = is_strictly_diag_dominant(dl);
    let (gs_dominant, gs_margin) = is_strictly_diag_dominant(&gs);
    let satisfied = dl_nonnegative && dl_dominant;
    if satisfied && !gs_dominant {
        return Err(Error::Numerical(format!(
            "D_L satisfies the fast-cooling hypothesis but G_s has dominance margin {gs_margin:e}"
        )));
    }
    Ok(Theorem3 { dl_nonnegative, dl_dominant, dl_margin, gs, gs_dominant, gs_margin, satisfied })
}

/// Worst consecutive-input decay ratio `d_{i,j-1} / d_{ij}` over `j <= i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastCooling {
    pub worst_ratio: f64,
    /// `worst_ratio < 1/2`: the geometric-series bound makes `D_L`
    /// strictly diagonally dominant.
    pub implies_dominance: bool,
}

/// Ratios with a zero denominator are skipped.
pub fn fast_cooling_ratio(dl: &DMatrix<f64>) -> FastCooling {
    let mut worst: f64 = 0.0;
    for i in 0..dl.nrows() {
        for j in 1..=i.min(dl.ncols() - 1) {
            let den = dl[(i, j)];
            if den != 0.0 {
                worst = worst.max(dl[(i, j - 1)] / den);
            }
        }
    }
    FastCooling { worst_ratio: worst, implies_dominance: worst < 0.5 }
}

/// Lower-triangular Toeplitz `D_L` of a time-invariant pulse response,
/// `d_ij = seq[i - j]`.
pub fn toeplitz_dl(seq: &[f64]) -> DMatrix<f64> {
    let n = seq.len();
    DMatrix::from_fn(n, n, |i, j| if i >= j { seq[i - j] } else { 0.0 })
}

/// Controllability summary of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub det_dl: f64,
    pub log10_abs_det_dl: f64,
    pub dl_full_rank: bool,
    pub gs_rank: usize,
    pub gs_rows: usize,
    pub gs_rank_tolerance: f64,
    pub gs_full_row_rank: bool,
    pub gs_min_singular_ratio: f64,
    pub dl_nonnegative: bool,
    pub dl_strictly_diag_dominant: bool,
    pub dl_dominance_margin: f64,
    pub gs_strictly_diag_dominant: bool,
    pub gs_dominance_margin: f64,
    pub worst_decay_ratio: f64,
    pub decay_implies_dominance: bool,
    pub theorem3_satisfied: bool,
}

impl ControllabilityReport {
    /// Builds the report for `D_L` with the one-step-forward `P` and the
    /// averaging `Q` over `sets`.
    pub fn build(dl: &DMatrix<f64>, sets: &SampleSets) -> Result<Self> {
        let t1 = check_theorem1(dl)?;
        let t3 = check_theorem3(dl, PMode::Forward, sets)?;
        let (rank, tol) = numerical_rank(&t3.gs);
        let fc = fast_cooling_ratio(dl);
        let report = Self {
            det_dl: t1.det,
            log10_abs_det_dl: t1.log10_abs_det,
            dl_full_rank: t1.full_rank,
            gs_rank: rank,
            gs_rows: t3.gs.nrows(),
            gs_rank_tolerance: tol,
            gs_full_row_rank: rank == t3.gs.nrows(),
            gs_min_singular_ratio: homogeneous_residual(&t3.gs),
            dl_nonnegative: t3.dl_nonnegative,
            dl_strictly_diag_dominant: t3.dl_dominant,
            dl_dominance_margin: t3.dl_margin,
            gs_strictly_diag_dominant: t3.gs_dominant,
            gs_dominance_margin: t3.gs_margin,
            worst_decay_ratio: fc.worst_ratio,
            decay_implies_dominance: fc.implies_dominance,
            theorem3_satisfied: t3.satisfied,
        };
        report.check_chain()?;
        Ok(report)
    }

    /// Theorem 3 hypothesis => `G_s` dominant => `G_s` full row rank.
    pub fn check_chain(&self) -> Result<()> {
        if self.theorem3_satisfied && !self.gs_strictly_diag_dominant {
            return Err(Error::Numerical("fast-cooling hypothesis holds but G_s is not dominant".into()));
        }
        if self.gs_strictly_diag_dominant && !self.gs_full_row_rank {
            return Err(Error::Numerical("G_s is strictly dominant but rank deficient".into()));
        }
        Ok(())
    }

    pub fn output_controllable(&self) -> bool {
        self.gs_full_row_rank
    }

    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("det_DL", format!("{:e}", self.det_dl));
        kv("log10_abs_det_DL", format!("{}", self.log10_abs_det_dl));
        kv("DL_full_rank", self.dl_full_rank.to_string());
        kv("Gs_rank", self.gs_rank.to_string());
        kv("Gs_rows", self.gs_rows.to_string());
        kv("Gs_rank_tolerance", format!("{:e}", self.gs_rank_tolerance));
        kv("Gs_full_row_rank", self.gs_full_row_rank.to_string());
        kv("Gs_min_singular_ratio", format!("{:e}", self.gs_min_singular_ratio));
        kv("DL_nonnegative", self.dl_nonnegative.to_string());
        kv("DL_strictly_diag_dominant", self.dl_strictly_diag_dominant.to_string());
        kv("DL_dominance_margin", format!("{:e}", self.dl_dominance_margin));
        kv("Gs_strictly_diag_dominant", self.gs_strictly_diag_dominant.to_string());
        kv("Gs_dominance_margin", format!("{:e}", self.gs_dominance_margin));
        kv("worst_decay_ratio", format!("{}", self.worst_decay_ratio));
        kv("decay_implies_dominance", self.decay_implies_dominance.to_string());
        kv("theorem3_satisfied", self.theorem3_satisfied.to_string());
        kv("output_controllable", self.output_controllable().to_string());
        s
    }
}
