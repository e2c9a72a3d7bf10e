//! Symmetric bilinear forms and subspaces of ℝⁿ: inertia, restriction,
//! annihilators and form-orthogonal complements.
//!
//! All tolerances are relative to the largest singular value (resp.
//! eigenvalue magnitude) of the object at hand; [`DEFAULT_TOL`] is the
//! crate-wide default.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative tolerance used for rank decisions and eigenvalue
/// classification unless the caller overrides it.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative asymmetry admitted when constructing a [`SymBilinearForm`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix asymmetry {residual:.3e} exceeds {tol:.3e} (relative)")]
    NotSymmetric { residual: f64, tol: f64 },
    #[error("dimension mismatch: form has dim {form_dim}, subspace ambient dim {ambient_dim}")]
    DimensionMismatch { form_dim: usize, ambient_dim: usize },
    #[error("subspace frame {rows}x{cols} is rank deficient (σ_min/σ_max = {ratio:.3e})")]
    RankDeficientFrame { rows: usize, cols: usize, ratio: f64 },
    #[error("frame has {rows} rows, ambient dimension is {ambient_dim}")]
    FrameAmbientMismatch { rows: usize, ambient_dim: usize },
    #[error("restriction of the form to the subspace is degenerate (n_zero = {n_zero})")]
    DegenerateRestriction { n_zero: usize },
}

/// A real symmetric bilinear form on ℝᵈ, stored as its (symmetrized) matrix.
///
/// `dim = 0` is allowed; it arises naturally as the restriction of a form
/// to the zero subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBilinearForm {
    entries: DMatrix<f64>,
}

impl SymBilinearForm {
    /// Builds a form from a square matrix, verifying symmetry to within
    /// [`SYMMETRY_TOL`] relative to the largest entry and symmetrizing.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, FormsError> {
        if entries.nrows() != entries.ncols() {
            return Err(FormsError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let scale = entries.amax();
        if scale > 0.0 {
            let mut residual = 0.0f64;
            for i in 0..entries.nrows() {
                for j in (i + 1)..entries.ncols() {
                    residual = residual.max((entries[(i, j)] - entries[(j, i)]).abs());
                }
            }
            if residual > SYMMETRY_TOL * scale {
                return Err(FormsError::NotSymmetric {
                    residual: residual / scale,
                    tol: SYMMETRY_TOL,
                });
            }
        }
        Ok(Self::symmetrized(entries))
    }

    /// Builds a form by symmetrizing `(M + Mᵀ)/2` without a symmetry check.
    pub fn symmetrized(entries: DMatrix<f64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "square matrix required");
        let sym = (&entries + entries.transpose()) * 0.5;
        Self { entries: sym }
    }

    /// The zero-dimensional (empty) form.
    pub fn empty() -> Self {
        Self {
            entries: DMatrix::zeros(0, 0),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            entries: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Evaluates the form on a pair of coordinate vectors.
    pub fn apply(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (v.transpose() * &self.entries * w)[(0, 0)]
    }

    /// Eigenvalue inertia of the form; see [`inertia`].
    pub fn inertia(&self, tol: f64) -> Inertia {
        inertia(self, tol)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }
}

/// A linear subspace of ℝᵈ given by a frame of linearly independent columns.
/// The zero subspace (no columns) is allowed.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient_dim: usize,
    frame: DMatrix<f64>,
}

impl Subspace {
    /// Wraps a frame matrix, rejecting rank-deficient column sets
    /// (σ_min ≤ tol·σ_max).
    pub fn new(frame: DMatrix<f64>, tol: f64) -> Result<Self, FormsError> {
        let (rows, cols) = frame.shape();
        if cols > rows {
            return Err(FormsError::RankDeficientFrame {
                rows,
                cols,
                ratio: 0.0,
            });
        }
        if cols > 0 {
            let svd = frame.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smax == 0.0 || smin <= tol * smax {
                return Err(FormsError::RankDeficientFrame {
                    rows,
                    cols,
                    ratio: if smax > 0.0 { smin / smax } else { 0.0 },
                });
            }
        }
        Ok(Self {
            ambient_dim: rows,
            frame,
        })
    }

    /// The zero subspace of ℝᵈ.
    pub fn zero(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            frame: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// The full space ℝᵈ with the canonical basis as frame.
    pub fn full(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            frame: DMatrix::identity(ambient_dim, ambient_dim),
        }
    }

    /// Span of a single vector.
    pub fn line(v: DVector<f64>) -> Result<Self, FormsError> {
        let n = v.len();
        Self::new(DMatrix::from_columns(&[v]), DEFAULT_TOL).map(|mut s| {
            s.ambient_dim = n;
            s
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthonormalizes the frame (same span, better conditioning).
    pub fn orthonormalized(&self) -> Self {
        if self.dim() == 0 {
            return self.clone();
        }
        Self {
            ambient_dim: self.ambient_dim,
            frame: orthonormal_columns(&self.frame),
        }
    }

    /// True if `v` lies in the span to within `tol` (relative to ‖v‖).
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let nv = v.norm();
        if nv == 0.0 {
            return true;
        }
        let q = orthonormal_columns(&self.frame);
        let residual = v - &q * (q.transpose() * v);
        residual.norm() <= tol * nv
    }

    /// True if the two subspaces have the same span to within `tol`.
    pub fn same_span(&self, other: &Subspace, tol: f64) -> bool {
        if self.ambient_dim != other.ambient_dim || self.dim() != other.dim() {
            return false;
        }
        (0..other.dim()).all(|j| self.contains(&other.frame.column(j).into_owned(), tol))
    }
}

/// Inertia triple of a symmetric form: counts of negative, (numerically)
/// zero and positive eigenvalues, together with the tolerance used to
/// classify them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    pub n_minus: usize,
    pub n_zero: usize,
    pub n_plus: usize,
    pub tol_used: f64,
}

impl Inertia {
    pub fn dim(&self) -> usize {
        self.n_minus + self.n_zero + self.n_plus
    }

    /// Signature n₊ − n₋.
    pub fn signature(&self) -> i64 {
        self.n_plus as i64 - self.n_minus as i64
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.n_zero == 0
    }

    pub fn is_negative_definite(&self) -> bool {
        self.n_minus == self.dim()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.n_plus == self.dim()
    }
}

impl std::fmt::Display for Inertia {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(n-={}, n0={}, n+={})", self.n_minus, self.n_zero, self.n_plus)
    }
}

/// Counts eigenvalues of `m` below `-tol·s`, within `[-tol·s, tol·s]` and
/// above `tol·s`, where `s` is the largest eigenvalue magnitude. A zero
/// matrix has all-zero inertia.
pub fn inertia(m: &SymBilinearForm, tol: f64) -> Inertia {
    assert!(tol > 0.0, "tolerance must be positive");
    let dim = m.dim();
    if dim == 0 {
        return Inertia {
            n_minus: 0,
            n_zero: 0,
            n_plus: 0,
            tol_used: tol,
        };
    }
    let eigs = m.matrix().clone().symmetric_eigenvalues();
    let scale = eigs.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let cutoff = tol * scale;
    let mut result = Inertia {
        n_minus: 0,
        n_zero: 0,
        n_plus: 0,
        tol_used: tol,
    };
    for &lambda in eigs.iter() {
        if lambda < -cutoff {
            result.n_minus += 1;
        } else if lambda > cutoff {
            result.n_plus += 1;
        } else {
            result.n_zero += 1;
        }
    }
    result
}

/// Restriction `FᵀMF` of a form to the span of a subspace frame `F`.
pub fn restrict(m: &SymBilinearForm, w: &Subspace) -> Result<SymBilinearForm, FormsError> {
    if m.dim() != w.ambient_dim() {
        return Err(FormsError::DimensionMismatch {
            form_dim: m.dim(),
            ambient_dim: w.ambient_dim(),
        });
    }
    let f = w.frame();
    Ok(SymBilinearForm::symmetrized(
        f.transpose() * m.matrix() * f,
    ))
}

/// Annihilator `P^o = {α : α(p) = 0 ∀p ∈ P}` of a subspace, computed as
/// the null space of `frameᵀ` and returned in dual coordinates.
pub fn annihilator(p: &Subspace) -> Subspace {
    let n = p.ambient_dim();
    if p.dim() == 0 {
        return Subspace::full(n);
    }
    let basis = null_space(&p.frame().transpose(), DEFAULT_TOL);
    Subspace {
        ambient_dim: n,
        frame: basis,
    }
}

/// The G-orthogonal complement `{v : G(v, s) = 0 ∀s ∈ S}`.
///
/// Fails with [`FormsError::DegenerateRestriction`] when G restricted to S
/// is degenerate (in which case the complement would not be transversal).
pub fn form_orthogonal_complement(
    g: &SymBilinearForm,
    s: &Subspace,
    tol: f64,
) -> Result<Subspace, FormsError> {
    let restricted = restrict(g, s)?;
    let res_inertia = inertia(&restricted, tol);
    if !res_inertia.is_nondegenerate() {
        return Err(FormsError::DegenerateRestriction {
            n_zero: res_inertia.n_zero,
        });
    }
    if s.dim() == 0 {
        return Ok(Subspace::full(g.dim()));
    }
    // v ⊥_G S  ⟺  (GS)ᵀ v = 0
    let constraints = (g.matrix() * s.frame()).transpose();
    let basis = null_space(&constraints, tol);
    Ok(Subspace {
        ambient_dim: g.dim(),
        frame: basis,
    })
}

/// Orthonormal basis of the null space of `m`, with singular values below
/// `tol·σ_max` treated as zero.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::identity(cols, cols);
    }
    // nalgebra's thin SVD keeps only min(rows, cols) rows of Vᵀ; pad a wide
    // matrix with zero rows so Vᵀ comes back square.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let cutoff = tol * smax;
    let kernel_cols: Vec<_> = (0..cols)
        .filter(|&j| svd.singular_values[j] <= cutoff)
        .map(|j| v_t.row(j).transpose())
        .collect();
    if kernel_cols.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&kernel_cols)
    }
}

/// Thin-QR orthonormalization of the columns of `m`.
pub fn orthonormal_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    qr.q()
}
