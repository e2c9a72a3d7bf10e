//! Finite-element discretization of the index form
//! `I(v,w) = ∫ [B⁻¹(v'−Av, w'−Aw) + C(v,w)] dt − S(v(a), w(a))`
//! on continuous piecewise-linear trial fields, the discrete `S` and `K`
//! subspaces, and numerical verification of the index identity in its
//! fixed-endpoint, variable-endpoint, opposite and focal-endpoint variants.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::forms::{self, FormsError, Inertia, SymBilinearForm, Subspace, DEFAULT_TOL};
use crate::interp::MonotoneCubic;
use crate::lagrangian::{frame_from_ps, LagrangianError};
use crate::maslov::{self, FocalInstant, MaslovError};
use crate::system::{
    fundamental_matrix, opposite, CoefficientField, SymplecticProblem, SystemError,
};

/// Default number of mesh elements for assembly.
pub const DEFAULT_MESH: usize = 256;

#[derive(Debug, Error)]
pub enum IndexFormError {
    #[error("mesh must have at least 2 elements with strictly increasing nodes")]
    BadMesh,
    #[error(
        "restriction of the index form to S_N is degenerate; the reduced-system assumption is \
         violated or the mesh is too coarse"
    )]
    DegenerateRestriction,
    #[error("distribution invalid: {reason}")]
    DistributionInvalid { reason: String },
    #[error("Q is not contained in V_b (basis vector {index} has residual {residual:.3e})")]
    QNotContained { index: usize, residual: f64 },
    #[error("endpoint t=b is focal; use the b-focal variant")]
    EndpointFocal,
    #[error("endpoint t=b is not focal; the b-focal variant does not apply")]
    EndpointNotFocal,
    #[error("reduced system has a focal instant at t = {t:.6}; the K-reduction is unavailable")]
    AssumptionFailed { t: f64 },
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Lagrangian(#[from] LagrangianError),
    #[error(transparent)]
    Maslov(#[from] MaslovError),
}

/// Partition of `[a, b]`, uniform unless built from explicit nodes.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<f64>,
}

impl Mesh {
    pub fn uniform(interval: (f64, f64), elements: usize) -> Result<Self, IndexFormError> {
        if elements < 2 {
            return Err(IndexFormError::BadMesh);
        }
        let (a, b) = interval;
        let h = (b - a) / elements as f64;
        Ok(Self {
            nodes: (0..=elements).map(|i| a + i as f64 * h).collect(),
        })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, IndexFormError> {
        if nodes.len() < 3 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IndexFormError::BadMesh);
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Shape of the discrete trial space: `v(a) ∈ P` (dim `p_dim`), free
/// interior nodes, and `v(b) = 0` or `v(b) ∈ Q` (dim `q_dim`).
#[derive(Debug, Clone)]
pub struct TrialSpace {
    pub n: usize,
    pub interior_nodes: usize,
    pub p_dim: usize,
    pub q_dim: Option<usize>,
}

impl TrialSpace {
    pub fn dof(&self) -> usize {
        self.p_dim + self.n * self.interior_nodes + self.q_dim.unwrap_or(0)
    }

    /// Offset of the block of interior node `j` (1-based) in the dof vector.
    fn node_offset(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.interior_nodes);
        self.p_dim + (j - 1) * self.n
    }
}

/// The assembled symmetric matrix of `I` (or `I#`) on the trial space.
#[derive(Debug, Clone)]
pub struct DiscreteIndexForm {
    pub mesh: Mesh,
    pub matrix: SymBilinearForm,
    pub trial: TrialSpace,
}

type FrameEval = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum FrameKind {
    Constant(DMatrix<f64>),
    Interpolated(MonotoneCubic),
    Analytic { eval: FrameEval, deriv: Option<FrameEval> },
}

/// A `k`-dimensional distribution `t ↦ D_t ⊂ ℝⁿ` given by a moving frame,
/// intended maximal negative for `B(t)⁻¹`.
#[derive(Clone)]
pub struct Distribution {
    n: usize,
    k: usize,
    kind: FrameKind,
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Distribution")
            .field("n", &self.n)
            .field("k", &self.k)
            .finish()
    }
}

impl Distribution {
    pub fn constant(frame: DMatrix<f64>) -> Self {
        let (n, k) = frame.shape();
        Self {
            n,
            k,
            kind: FrameKind::Constant(frame),
        }
    }

    pub fn interpolated(times: Vec<f64>, frames: Vec<DMatrix<f64>>) -> Result<Self, IndexFormError> {
        let (n, k) = frames
            .first()
            .map(|f| f.shape())
            .ok_or(IndexFormError::DistributionInvalid {
                reason: "no frame samples".into(),
            })?;
        let interp = MonotoneCubic::new(times, frames).map_err(|reason| {
            IndexFormError::DistributionInvalid { reason }
        })?;
        Ok(Self {
            n,
            k,
            kind: FrameKind::Interpolated(interp),
        })
    }

    pub fn analytic<F>(n: usize, k: usize, eval: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            k,
            kind: FrameKind::Analytic {
                eval: Arc::new(eval),
                deriv: None,
            },
        }
    }

    pub fn with_derivative<F>(mut self, deriv: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if let FrameKind::Analytic { deriv: slot, .. } = &mut self.kind {
            *slot = Some(Arc::new(deriv));
        }
        self
    }

    /// The span of the eigenvectors of `B(t)` with negative eigenvalues,
    /// continued along the grid. Constant fields yield a constant frame.
    pub fn negative_eigenspace(
        field: &CoefficientField,
        grid_steps: usize,
    ) -> Result<Self, IndexFormError> {
        let (a, b) = field.interval();
        let negative_frame = |t: f64| -> DMatrix<f64> {
            let bmat = field.eval(t).b;
            let rows = bmat.nrows();
            let eig = bmat.symmetric_eigen();
            let mut cols: Vec<(f64, DVector<f64>)> = (0..rows)
                .filter(|&i| eig.eigenvalues[i] < 0.0)
                .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
                .collect();
            cols.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let vecs: Vec<DVector<f64>> = cols.into_iter().map(|(_, v)| v).collect();
            if vecs.is_empty() {
                DMatrix::zeros(rows, 0)
            } else {
                DMatrix::from_columns(&vecs)
            }
        };
        if field.is_constant() {
            return Ok(Self::constant(negative_frame(a)));
        }
        let steps = 2 * grid_steps;
        let h = (b - a) / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|i| a + i as f64 * h).collect();
        let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(times.len());
        for &t in &times {
            let mut f = negative_frame(t);
            if let Some(prev) = frames.last() {
                if prev.ncols() != f.ncols() {
                    return Err(IndexFormError::DistributionInvalid {
                        reason: format!("negative eigenspace changed dimension at t = {t}"),
                    });
                }
                // align signs/ordering with the previous node
                let overlaps = prev.transpose() * &f;
                let k = f.ncols();
                let mut assigned = vec![usize::MAX; k];
                let mut used = vec![false; k];
                for _ in 0..k {
                    let mut best = (0usize, 0usize, -1.0f64);
                    for i in 0..k {
                        if assigned[i] != usize::MAX {
                            continue;
                        }
                        for j in 0..k {
                            if used[j] {
                                continue;
                            }
                            if overlaps[(i, j)].abs() > best.2 {
                                best = (i, j, overlaps[(i, j)].abs());
                            }
                        }
                    }
                    if best.2 < 0.5 {
                        return Err(IndexFormError::DistributionInvalid {
                            reason: format!("eigenvector continuation broke down at t = {t}"),
                        });
                    }
                    assigned[best.0] = best.1;
                    used[best.1] = true;
                }
                let cols: Vec<DVector<f64>> = (0..k)
                    .map(|i| {
                        let j = assigned[i];
                        let col = f.column(j).into_owned();
                        if overlaps[(i, j)] < 0.0 {
                            -col
                        } else {
                            col
                        }
                    })
                    .collect();
                f = DMatrix::from_columns(&cols);
            }
            frames.push(f);
        }
        let k = frames[0].ncols();
        if k == 0 {
            return Ok(Self::constant(DMatrix::zeros(field.n(), 0)));
        }
        Self::interpolated(times, frames)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frame_at(&self, t: f64) -> DMatrix<f64> {
        match &self.kind {
            FrameKind::Constant(f) => f.clone(),
            FrameKind::Interpolated(interp) => interp.eval(t),
            FrameKind::Analytic { eval, .. } => eval(t),
        }
    }

    /// Frame derivative: zero for constant frames, analytic when supplied,
    /// central differences otherwise.
    pub fn frame_deriv(&self, t: f64, step: f64, interval: (f64, f64)) -> DMatrix<f64> {
        match &self.kind {
            FrameKind::Constant(f) => DMatrix::zeros(f.nrows(), f.ncols()),
            FrameKind::Analytic {
                deriv: Some(d), ..
            } => d(t),
            FrameKind::Interpolated(interp) => {
                crate::interp::differentiate(|s| interp.eval(s), t, step, interval.0, interval.1)
            }
            FrameKind::Analytic { eval, .. } => {
                let eval = eval.clone();
                crate::interp::differentiate(move |s| eval(s), t, step, interval.0, interval.1)
            }
        }
    }

    /// Checks the defining invariants against a problem: full frame rank,
    /// `B(t)⁻¹` negative definite on the span, and `k = n₋(B)` at every
    /// grid node.
    pub fn validate_for(&self, problem: &SymplecticProblem) -> Result<(), IndexFormError> {
        self.validate_signed(problem, true)
    }

    /// Same checks with the sign mirrored (`B⁻¹` positive definite on the
    /// span, `k = n₊(B)`), as required of a carried-over distribution on
    /// the opposite system.
    pub fn validate_signed(
        &self,
        problem: &SymplecticProblem,
        negative: bool,
    ) -> Result<(), IndexFormError> {
        let (a, b) = problem.interval();
        let steps = problem.grid_steps();
        let h = (b - a) / steps as f64;
        for i in 0..=steps {
            let t = a + i as f64 * h;
            let frame = self.frame_at(t);
            let b_inv = problem.coefficients().b_inverse(t)?;
            let b_inv_form = SymBilinearForm::symmetrized(b_inv);
            let b_inertia = forms::inertia(
                &SymBilinearForm::symmetrized(problem.coefficients().eval(t).b),
                DEFAULT_TOL,
            );
            let expected_k = if negative {
                b_inertia.n_minus
            } else {
                b_inertia.n_plus
            };
            if expected_k != self.k {
                return Err(IndexFormError::DistributionInvalid {
                    reason: format!(
                        "k = {} but the matching type number of B({t:.6}) is {expected_k}",
                        self.k
                    ),
                });
            }
            if self.k == 0 {
                continue;
            }
            let span = Subspace::new(frame, DEFAULT_TOL).map_err(|_| {
                IndexFormError::DistributionInvalid {
                    reason: format!("frame rank loss at t = {t:.6}"),
                }
            })?;
            let restricted = forms::restrict(&b_inv_form, &span)?;
            let inertia = restricted.inertia(DEFAULT_TOL);
            let definite = if negative {
                inertia.is_negative_definite()
            } else {
                inertia.is_positive_definite()
            };
            if !definite {
                return Err(IndexFormError::DistributionInvalid {
                    reason: format!(
                        "B({t:.6})⁻¹ is not {} definite on the frame span",
                        if negative { "negative" } else { "positive" }
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Final-endpoint data `(Q, S_Q)` for the variable-endpoint form `I#`.
#[derive(Debug, Clone)]
pub struct EndpointData {
    q: Subspace,
    s_q: SymBilinearForm,
}

impl EndpointData {
    pub fn new(q: Subspace, s_q: SymBilinearForm) -> Result<Self, IndexFormError> {
        if q.dim() != s_q.dim() {
            return Err(IndexFormError::DistributionInvalid {
                reason: format!("S_Q is {}x{0} but Q has dimension {}", s_q.dim(), q.dim()),
            });
        }
        Ok(Self { q, s_q })
    }

    pub fn q(&self) -> &Subspace {
        &self.q
    }

    pub fn s_q(&self) -> &SymBilinearForm {
        &self.s_q
    }
}

/// Assembles the discrete index form on piecewise-linear trial fields with
/// 2-point Gauss quadrature per element. With `endpoint` present the trial
/// space allows `v(b) ∈ Q` and the `+S_Q(v(b), w(b))` term is added.
pub fn assemble(
    problem: &SymplecticProblem,
    mesh: &Mesh,
    endpoint: Option<&EndpointData>,
) -> Result<DiscreteIndexForm, IndexFormError> {
    let n = problem.n();
    let elements = mesh.elements();
    let trial = TrialSpace {
        n,
        interior_nodes: elements - 1,
        p_dim: problem.ell0().p().dim(),
        q_dim: endpoint.map(|e| e.q().dim()),
    };
    let field = problem.coefficients();
    let nodes = mesh.nodes();
    // nodal assembly over y_0..y_N, then reduction by the boundary maps
    let nodal_dim = n * (elements + 1);
    let mut m = DMatrix::zeros(nodal_dim, nodal_dim);
    let gauss = [
        0.5 - 0.5 / 3.0f64.sqrt(),
        0.5 + 0.5 / 3.0f64.sqrt(),
    ];
    for e in 0..elements {
        let (t0, t1) = (nodes[e], nodes[e + 1]);
        let h = t1 - t0;
        let mut local = DMatrix::zeros(2 * n, 2 * n);
        for &s in &gauss {
            let t = t0 + s * h;
            let sample = field.eval(t);
            let b_inv = sample
                .b
                .clone()
                .try_inverse()
                .ok_or(SystemError::SingularB { t })?;
            let weight = 0.5 * h;
            let phi0 = 1.0 - s;
            let phi1 = s;
            // v' − Av = D0 y_e + D1 y_{e+1}
            let d0 = DMatrix::identity(n, n) * (-1.0 / h) - &sample.a * phi0;
            let d1 = DMatrix::identity(n, n) * (1.0 / h) - &sample.a * phi1;
            let mut dmap = DMatrix::zeros(n, 2 * n);
            dmap.view_mut((0, 0), (n, n)).copy_from(&d0);
            dmap.view_mut((0, n), (n, n)).copy_from(&d1);
            let mut vmap = DMatrix::zeros(n, 2 * n);
            vmap.view_mut((0, 0), (n, n))
                .copy_from(&(DMatrix::identity(n, n) * phi0));
            vmap.view_mut((0, n), (n, n))
                .copy_from(&(DMatrix::identity(n, n) * phi1));
            local += (dmap.transpose() * &b_inv * &dmap + vmap.transpose() * &sample.c * &vmap)
                * weight;
        }
        let off = e * n;
        for i in 0..2 * n {
            for j in 0..2 * n {
                m[(off + i, off + j)] += local[(i, j)];
            }
        }
    }
    // reduce to the constrained dof space
    let dof = trial.dof();
    let mut reduced = DMatrix::zeros(dof, dof);
    let p_frame = problem.ell0().p().frame().clone();
    let p_dim = trial.p_dim;
    let interior = trial.interior_nodes;
    let q_frame = endpoint.map(|e| e.q().frame().clone());
    // maps from dof blocks to nodal blocks: c ↦ y_0 = F_P c, x_j ↦ y_j, d ↦ y_N = F_Q d
    let block = |m: &DMatrix<f64>, r: usize, c: usize| -> DMatrix<f64> {
        m.view((r * n, c * n), (n, n)).into_owned()
    };
    // c-c
    if p_dim > 0 {
        let cc = p_frame.transpose() * block(&m, 0, 0) * &p_frame
            - problem.ell0().s().matrix();
        reduced.view_mut((0, 0), (p_dim, p_dim)).copy_from(&cc);
        if interior >= 1 {
            let cx = p_frame.transpose() * block(&m, 0, 1);
            reduced
                .view_mut((0, trial.node_offset(1)), (p_dim, n))
                .copy_from(&cx);
            reduced
                .view_mut((trial.node_offset(1), 0), (n, p_dim))
                .copy_from(&cx.transpose());
        }
    }
    // interior tridiagonal blocks
    for j in 1..=interior {
        let oj = trial.node_offset(j);
        reduced
            .view_mut((oj, oj), (n, n))
            .copy_from(&block(&m, j, j));
        if j + 1 <= interior {
            let ok = trial.node_offset(j + 1);
            let off_block = block(&m, j, j + 1);
            reduced.view_mut((oj, ok), (n, n)).copy_from(&off_block);
            reduced
                .view_mut((ok, oj), (n, n))
                .copy_from(&off_block.transpose());
        }
    }
    // endpoint block
    if let (Some(qf), Some(q_dim)) = (q_frame, trial.q_dim) {
        if q_dim > 0 {
            let od = trial.dof() - q_dim;
            let last = elements;
            let dd = qf.transpose() * block(&m, last, last) * &qf
                + endpoint.unwrap().s_q().matrix();
            reduced.view_mut((od, od), (q_dim, q_dim)).copy_from(&dd);
            if interior >= 1 {
                let xo = trial.node_offset(interior);
                let xd = block(&m, last - 1, last) * &qf;
                reduced.view_mut((xo, od), (n, q_dim)).copy_from(&xd);
                reduced
                    .view_mut((od, xo), (q_dim, n))
                    .copy_from(&xd.transpose());
            }
        }
    }
    Ok(DiscreteIndexForm {
        mesh: mesh.clone(),
        matrix: SymBilinearForm::symmetrized(reduced),
        trial,
    })
}

/// The discrete `S` subspace: trial fields vanishing at both endpoints
/// with nodal values in `D_{t_j}` at every interior node. Returned as a
/// frame in dof coordinates; dimension `k·(N−1)`.
pub fn build_s_subspace(form: &DiscreteIndexForm, dist: &Distribution) -> Subspace {
    let trial = &form.trial;
    let dof = trial.dof();
    let k = dist.k();
    if k == 0 {
        return Subspace::zero(dof);
    }
    let nodes = form.mesh.nodes();
    let mut cols = Vec::with_capacity(k * trial.interior_nodes);
    for j in 1..=trial.interior_nodes {
        let frame = dist.frame_at(nodes[j]);
        for i in 0..k {
            let mut col = DVector::zeros(dof);
            let off = trial.node_offset(j);
            for r in 0..trial.n {
                col[off + r] = frame[(r, i)];
            }
            cols.push(col);
        }
    }
    Subspace::new(DMatrix::from_columns(&cols), DEFAULT_TOL)
        .expect("nodal distribution frames have full rank")
}

/// The discrete `K` subspace: the `I_N`-orthogonal complement of `S_N` in
/// the trial space; `dim K_N = dof − dim S_N`.
///
/// Fails with [`IndexFormError::DegenerateRestriction`] when `I_N|S_N` is
/// degenerate (the reduced-system assumption fails or the mesh is too
/// coarse).
pub fn build_k_subspace(
    form: &DiscreteIndexForm,
    s_n: &Subspace,
) -> Result<Subspace, IndexFormError> {
    let dof = form.trial.dof();
    if s_n.dim() == 0 {
        return Ok(Subspace::full(dof));
    }
    let restricted = forms::restrict(&form.matrix, s_n)?;
    if !restricted.inertia(DEFAULT_TOL).is_nondegenerate() {
        return Err(IndexFormError::DegenerateRestriction);
    }
    let m = s_n.dim();
    // constraint rows R = S_Nᵀ I_N; K = null(R), built as the orthogonal
    // complement of the row space (thin QR of Rᵀ), then checked
    let r = s_n.frame().transpose() * form.matrix.matrix();
    let q = forms::orthonormal_columns(&r.transpose());
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let e = DMatrix::from_fn(dof, dof - m, |_, _| rng.gen_range(-1.0..1.0));
    let projected = &e - &q * (q.transpose() * &e);
    let candidate = forms::orthonormal_columns(&projected);
    let r_scale = r.amax().max(1e-300);
    let residual = (&r * &candidate).amax() / r_scale;
    let frame = if residual <= 1e-8 && candidate.ncols() == dof - m {
        candidate
    } else {
        forms::null_space(&r, DEFAULT_TOL)
    };
    Subspace::new(frame, DEFAULT_TOL).map_err(IndexFormError::from)
}

/// Inertia of `I_N` on `K_N` plus the additivity cross-check
/// `n₋(I_N) = n₋(I_N|K_N) + n₋(I_N|S_N)`.
#[derive(Debug, Clone)]
pub struct IndexOnK {
    pub on_k: Inertia,
    pub on_s: Inertia,
    pub full: Inertia,
    /// `n₋(I_N) − n₋(I_N|S_N)`, which must equal `on_k.n_minus`.
    pub cross_check: i64,
    pub additivity_holds: bool,
    /// `K_N ∩ S_N = {0}` verified by a rank check on `[K | S]`.
    pub trivial_intersection: bool,
}

/// Assembles, splits off `S_N`, and computes the inertia of the index form
/// on the discrete `K`.
pub fn index_on_k(
    problem: &SymplecticProblem,
    dist: &Distribution,
    mesh: &Mesh,
) -> Result<IndexOnK, IndexFormError> {
    let form = assemble(problem, mesh, None)?;
    index_on_k_of_form(&form, dist)
}

pub fn index_on_k_of_form(
    form: &DiscreteIndexForm,
    dist: &Distribution,
) -> Result<IndexOnK, IndexFormError> {
    let s_n = build_s_subspace(form, dist);
    let k_n = build_k_subspace(form, &s_n)?;
    let on_s = forms::restrict(&form.matrix, &s_n)?.inertia(DEFAULT_TOL);
    let on_k = forms::restrict(&form.matrix, &k_n)?.inertia(DEFAULT_TOL);
    let full = form.matrix.inertia(DEFAULT_TOL);
    let cross_check = full.n_minus as i64 - on_s.n_minus as i64;
    let additivity_holds = full.n_minus == on_k.n_minus + on_s.n_minus;
    let trivial_intersection = if s_n.dim() == 0 {
        true
    } else {
        // K ∩ S = {0} ⟺ [K | S] has full column rank; K is orthonormal, so
        // check that S stays full rank after projecting K out.
        let kts = k_n.frame().transpose() * s_n.frame();
        let gram = s_n.frame().transpose() * s_n.frame() - kts.transpose() * kts;
        let eigs = gram.symmetric_eigenvalues();
        eigs.iter().all(|&e| e > 1e-12)
    };
    Ok(IndexOnK {
        on_k,
        on_s,
        full,
        cross_check,
        additivity_holds,
        trivial_intersection,
    })
}

/// The endpoint form `𝔔 = S_Q − S_b|_Q` on `Q`, where
/// `S_b(v(b), w(b)) = −α_v(b)(w(b))` over the fundamental solutions.
pub fn endpoint_form(
    problem: &SymplecticProblem,
    endpoint: &EndpointData,
) -> Result<SymBilinearForm, IndexFormError> {
    let n = problem.n();
    let psi = fundamental_matrix(problem)?;
    let (_, b) = problem.interval();
    let u_b = psi.at(b) * frame_from_ps(problem.ell0()).matrix();
    let v_b = u_b.view((0, 0), (n, n)).into_owned();
    let alpha_b = u_b.view((n, 0), (n, n)).into_owned();
    let q_dim = endpoint.q().dim();
    if q_dim == 0 {
        return Ok(SymBilinearForm::empty());
    }
    // membership of Q in V_b and coordinates of the Q basis in the
    // solutions; the rank cutoff is absolute against the solution-frame
    // scale so that a vanishing v-part is not silently "inverted"
    let frame_scale = u_b.amax().max(1e-300);
    let svd = v_b.clone().svd(true, true);
    let pinv = svd
        .pseudo_inverse(maslov::INTERSECTION_TOL * frame_scale)
        .expect("pseudo-inverse of the final v-part");
    let mut coords = DMatrix::zeros(n, q_dim);
    for i in 0..q_dim {
        let qi = endpoint.q().frame().column(i).into_owned();
        let ci = &pinv * &qi;
        let residual = (&v_b * &ci - &qi).norm() / qi.norm();
        if residual > 1e-7 {
            return Err(IndexFormError::QNotContained {
                index: i,
                residual,
            });
        }
        coords.set_column(i, &ci);
    }
    // S_b(q_i, q_j) = −α_{c_i}(b)(q_j)
    let alpha_cols = &alpha_b * &coords;
    let s_b_on_q = -(alpha_cols.transpose() * endpoint.q().frame());
    let frak_q = endpoint.s_q().matrix() - s_b_on_q;
    Ok(SymBilinearForm::symmetrized(frak_q))
}

/// Which identity to verify.
#[derive(Debug, Clone)]
pub enum Variant {
    /// `n₋(I|K) = n₋(B(a)⁻¹|P) + i_maslov`, final endpoint not focal.
    Fixed,
    /// `n₋(I#|K#) = n₋(B(a)⁻¹|P) + n₋(𝔔) + i_maslov`.
    Variable(EndpointData),
    /// `n₊(I_op|K_op) = n₋(I|K)` together with `i_maslov(op) = −i_maslov`.
    Opposite,
    /// Focal endpoint: `n₋(I|K) = n₋(B(a)⁻¹|P) − n₋(B(b)|𝕍[b]^o) + i_maslov`.
    BFocal,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Fixed => "fixed",
            Variant::Variable(_) => "variable",
            Variant::Opposite => "opposite",
            Variant::BFocal => "b-focal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Verified,
    Violated,
    /// The two mesh resolutions disagreed.
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Verified => "verified",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        };
        write!(f, "{s}")
    }
}

/// Full record of one verification run.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub variant: String,
    pub mesh_elements: usize,
    pub grid_steps: usize,
    /// Discrete side: `n₋` on K (or `n₊` for the opposite variant).
    pub lhs: usize,
    /// `n₋(B(a)⁻¹|P)`.
    pub initial_term: usize,
    pub maslov_index: i64,
    /// `n₋(𝔔)` for the variable variant.
    pub endpoint_term: Option<usize>,
    /// `n₋(B(b)|𝕍[b]^o)` for the focal-endpoint variant.
    pub bfocal_correction: Option<usize>,
    pub rhs_total: i64,
    pub equality: bool,
    /// Same `lhs` at mesh 2N.
    pub refined_lhs: usize,
    pub refinement_agrees: bool,
    pub verdict: Verdict,
    pub b_is_focal: bool,
    pub initial_gap: f64,
    /// For the opposite variant: the opposite system's own Maslov index
    /// (the negative of `maslov_index`).
    pub opposite_maslov: Option<i64>,
    pub crossings: Vec<FocalInstant>,
    pub additivity_holds: bool,
    pub trivial_intersection: bool,
    pub symp_residual: f64,
    pub inertia_tol: f64,
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "variant {} | mesh N={} (refined {}) grid {}",
            self.variant, self.mesh_elements, 2 * self.mesh_elements, self.grid_steps
        )?;
        for c in &self.crossings {
            writeln!(
                f,
                "  focal t = {:.12}  mul {}  sgn {:+}",
                c.t, c.multiplicity, c.signature
            )?;
        }
        write!(f, "  lhs {} = {}", self.lhs, self.initial_term)?;
        if let Some(q) = self.endpoint_term {
            write!(f, " + n-(Q)={q}")?;
        }
        if let Some(corr) = self.bfocal_correction {
            write!(f, " - {corr}")?;
        }
        writeln!(f, " + i_maslov {} = {} rhs", self.maslov_index, self.rhs_total)?;
        writeln!(
            f,
            "  refinement: {} vs {} ({})",
            self.lhs,
            self.refined_lhs,
            if self.refinement_agrees { "agree" } else { "DISAGREE" }
        )?;
        write!(f, "  verdict: {}", self.verdict)
    }
}

/// Distribution used for a problem: the one supplied, or the negative
/// eigenspace of `B` when the caller passes none.
pub fn distribution_for(
    problem: &SymplecticProblem,
    supplied: Option<&Distribution>,
) -> Result<Distribution, IndexFormError> {
    let dist = match supplied {
        Some(d) => d.clone(),
        None => Distribution::negative_eigenspace(problem.coefficients(), problem.grid_steps())?,
    };
    dist.validate_for(problem)?;
    Ok(dist)
}

fn discrete_lhs(
    problem: &SymplecticProblem,
    dist: &Distribution,
    elements: usize,
    endpoint: Option<&EndpointData>,
    count_positive: bool,
) -> Result<(IndexOnK, usize), IndexFormError> {
    let mesh = Mesh::uniform(problem.interval(), elements)?;
    let form = assemble(problem, &mesh, endpoint)?;
    let result = index_on_k_of_form(&form, dist)?;
    let lhs = if count_positive {
        result.on_k.n_plus
    } else {
        result.on_k.n_minus
    };
    Ok((result, lhs))
}

/// Verifies the index identity for the requested variant at mesh `N`, with
/// a mesh-refinement agreement check at `2N`. The reduced-system
/// assumption (for `k ≥ 1`) is the caller's business; see
/// [`crate::reduced::check_assumption`].
pub fn verify_index_theorem(
    problem: &SymplecticProblem,
    supplied: Option<&Distribution>,
    elements: usize,
    variant: &Variant,
) -> Result<VerifyReport, IndexFormError> {
    let (target, dist, endpoint, count_positive) = match variant {
        Variant::Fixed | Variant::BFocal => (
            problem.clone(),
            distribution_for(problem, supplied)?,
            None,
            false,
        ),
        Variant::Variable(data) => (
            problem.clone(),
            distribution_for(problem, supplied)?,
            Some(data.clone()),
            false,
        ),
        Variant::Opposite => {
            // the original distribution carries over: on the opposite
            // system B⁻¹ is positive definite on it, which is exactly the
            // co-index theorem's hypothesis, and the reduced system of the
            // opposite data is the opposite of the original reduced system
            let d = distribution_for(problem, supplied)?;
            let op = opposite(problem);
            d.validate_signed(&op, false)?;
            (op, d, None, true)
        }
    };

    let psi = fundamental_matrix(&target)?;
    let report = maslov::maslov_index_with(&target, &psi)?;
    match variant {
        Variant::BFocal => {
            if !report.b_is_focal {
                return Err(IndexFormError::EndpointNotFocal);
            }
        }
        _ => {
            if report.b_is_focal {
                return Err(IndexFormError::EndpointFocal);
            }
        }
    }

    // For the opposite variant the identity reads
    // n₊(I_op|K_op) = n₊(B_op(a)⁻¹|P) − i_maslov(op); both right-hand terms
    // coincide with the original n₋(B(a)⁻¹|P) + i_maslov.
    let initial_inertia = target.initial_index_term()?;
    let initial_term = match variant {
        Variant::Opposite => initial_inertia.n_plus,
        _ => initial_inertia.n_minus,
    };
    let endpoint_term = match (&variant, &endpoint) {
        (Variant::Variable(_), Some(data)) => {
            Some(endpoint_form(&target, data)?.inertia(DEFAULT_TOL).n_minus)
        }
        _ => None,
    };
    let bfocal_correction = match variant {
        Variant::BFocal => {
            let (_, b) = target.interval();
            let l0 = frame_from_ps(target.ell0());
            let frame = crate::lagrangian::LagrangianFrame::new(psi.at(b) * l0.matrix())?;
            let inter = crate::lagrangian::vertical_intersection(&frame, maslov::INTERSECTION_TOL);
            let b_form = target.coefficients().b_form(b);
            Some(forms::restrict(&b_form, &inter)?.inertia(DEFAULT_TOL).n_minus)
        }
        _ => None,
    };

    let (diag, lhs) = discrete_lhs(&target, &dist, elements, endpoint.as_ref(), count_positive)?;
    let (_, refined_lhs) =
        discrete_lhs(&target, &dist, elements * 2, endpoint.as_ref(), count_positive)?;

    let maslov_for_rhs = match variant {
        // For the opposite variant the comparison is with the original
        // problem: n₊(I_op|K_op) = n₋(B(a)⁻¹|P) + i_maslov(original), and
        // i_maslov(op) = −i_maslov(original).
        Variant::Opposite => -report.maslov_index,
        _ => report.maslov_index,
    };
    let rhs_total = match variant {
        Variant::Opposite => initial_term as i64 + maslov_for_rhs,
        _ => {
            initial_term as i64 + report.maslov_index + endpoint_term.unwrap_or(0) as i64
                - bfocal_correction.unwrap_or(0) as i64
        }
    };

    let equality = lhs as i64 == rhs_total;
    let refinement_agrees = lhs == refined_lhs;
    let verdict = if !refinement_agrees {
        Verdict::Inconclusive
    } else if equality {
        Verdict::Verified
    } else {
        Verdict::Violated
    };
    Ok(VerifyReport {
        variant: variant.name().to_string(),
        mesh_elements: elements,
        grid_steps: target.grid_steps(),
        lhs,
        initial_term,
        maslov_index: maslov_for_rhs,
        endpoint_term,
        bfocal_correction,
        rhs_total,
        equality,
        refined_lhs,
        refinement_agrees,
        verdict,
        b_is_focal: report.b_is_focal,
        initial_gap: report.initial_gap,
        opposite_maslov: match variant {
            Variant::Opposite => Some(report.maslov_index),
            _ => None,
        },
        crossings: report.crossings,
        additivity_holds: diag.additivity_holds,
        trivial_intersection: diag.trivial_intersection,
        symp_residual: psi.symp_residual(),
        inertia_tol: DEFAULT_TOL,
    })
}

/// The index evolution `i(t) = n₋(I on [a,t] | K)` sampled at `ts`.
/// Each sample restricts the problem and scales the mesh proportionally
/// (at least 16 elements).
pub fn index_evolution(
    problem: &SymplecticProblem,
    supplied: Option<&Distribution>,
    elements: usize,
    ts: &[f64],
) -> Result<Vec<usize>, IndexFormError> {
    let (a, b) = problem.interval();
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        assert!(t > a && t <= b, "sample instants must lie in ]a, b]");
        let sub = problem.restricted(t)?;
        let dist = distribution_for(&sub, supplied)?;
        let sub_elements = ((elements as f64 * (t - a) / (b - a)).ceil() as usize).max(16);
        let mesh = Mesh::uniform(sub.interval(), sub_elements)?;
        let result = index_on_k(&sub, &dist, &mesh)?;
        out.push(result.on_k.n_minus);
    }
    Ok(out)
}
