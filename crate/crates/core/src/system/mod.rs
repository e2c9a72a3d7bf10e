//! Symplectic differential systems: coefficient curves `X(t) ∈ sp(2n,ℝ)`,
//! problem data `(X, ℓ₀)`, validation and fundamental-matrix integration.

mod transform;

pub use transform::{apply_isomorphism, opposite, to_morse_sturm, Isomorphism, MorseSturmStage};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::forms::{self, Inertia, SymBilinearForm, DEFAULT_TOL};
use crate::interp::MonotoneCubic;
use crate::lagrangian::PSPair;

/// Default number of fixed RK4 steps on `[a, b]`.
pub const DEFAULT_GRID_STEPS: usize = 4096;

/// Default ceiling on the symplecticity residual `‖ΨᵀJΨ − J‖_max`.
pub const DEFAULT_SYMP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("coefficient validation failed:\n{0}")]
    Validation(Box<ValidationReport>),
    #[error("B(a) is degenerate on the annihilator of P ({inertia}); initial data rejected")]
    AssumptionViolated { inertia: Inertia },
    #[error(
        "symplecticity residual {residual:.3e} exceeds {tol:.3e}; the integration grid is too coarse"
    )]
    SympDrift { residual: f64, tol: f64 },
    #[error("B(t) numerically singular at t = {t}")]
    SingularB { t: f64 },
    #[error("Z(t) singular at t = {t}")]
    SingularZ { t: f64 },
    #[error("congruence frame continuation broke down at t = {t} (overlap {overlap:.3})")]
    ContinuationBreakdown { t: f64, overlap: f64 },
    #[error("interval [{a}, {b}] is empty or inverted")]
    BadInterval { a: f64, b: f64 },
    #[error("grid must have at least 2 steps, got {0}")]
    BadGrid(usize),
    #[error(transparent)]
    Forms(#[from] forms::FormsError),
}

/// One evaluation of the coefficient curve: `A(t)` plus symmetrized
/// `B(t)`, `C(t)`.
#[derive(Debug, Clone)]
pub struct CoeffSample {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl CoeffSample {
    /// The block matrix `[[A, B], [C, −Aᵀ]] ∈ sp(2n,ℝ)`.
    pub fn x_matrix(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        let mut x = DMatrix::zeros(2 * n, 2 * n);
        x.view_mut((0, 0), (n, n)).copy_from(&self.a);
        x.view_mut((0, n), (n, n)).copy_from(&self.b);
        x.view_mut((n, 0), (n, n)).copy_from(&self.c);
        x.view_mut((n, n), (n, n)).copy_from(&(-self.a.transpose()));
        x
    }
}

type AnalyticEval = Arc<dyn Fn(f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) + Send + Sync>;

#[derive(Clone)]
enum CoefficientKind {
    Constant {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    },
    Interpolated {
        a: MonotoneCubic,
        b: MonotoneCubic,
        c: MonotoneCubic,
    },
    Builtin {
        name: String,
        eval: AnalyticEval,
    },
}

/// The coefficient curve `t ↦ (A(t), B(t), C(t))` of a symplectic system
/// on a compact interval. `B`, `C` are symmetrized on evaluation; whether
/// the raw data was acceptably symmetric is the business of [`validate`].
#[derive(Clone)]
pub struct CoefficientField {
    n: usize,
    interval: (f64, f64),
    kind: CoefficientKind,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("n", &self.n)
            .field("interval", &self.interval)
            .field("kind", &self.kind_name())
            .finish()
    }
}

impl CoefficientField {
    pub fn constant(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        interval: (f64, f64),
    ) -> Result<Self, SystemError> {
        let n = a.nrows();
        check_interval(interval)?;
        assert!(
            a.is_square() && b.shape() == (n, n) && c.shape() == (n, n),
            "coefficient blocks must be n x n"
        );
        Ok(Self {
            n,
            interval,
            kind: CoefficientKind::Constant { a, b, c },
        })
    }

    /// Sampled coefficients with monotone-cubic interpolation in `t`.
    /// The sample times must cover the interval.
    pub fn interpolated(
        times: Vec<f64>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
    ) -> Result<Self, SystemError> {
        let interval = (
            *times.first().expect("nonempty sample times"),
            *times.last().expect("nonempty sample times"),
        );
        check_interval(interval)?;
        let n = a[0].nrows();
        let build = |vals: Vec<DMatrix<f64>>| {
            MonotoneCubic::new(times.clone(), vals)
                .map_err(|e| SystemError::Validation(Box::new(ValidationReport::message(e))))
        };
        Ok(Self {
            n,
            interval,
            kind: CoefficientKind::Interpolated {
                a: build(a)?,
                b: build(b)?,
                c: build(c)?,
            },
        })
    }

    /// A named analytic family; also used internally for derived systems
    /// (opposite, isomorphic images, reductions).
    pub fn builtin<F>(name: impl Into<String>, n: usize, interval: (f64, f64), eval: F) -> Self
    where
        F: Fn(f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    {
        Self {
            n,
            interval,
            kind: CoefficientKind::Builtin {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn kind_name(&self) -> &str {
        match &self.kind {
            CoefficientKind::Constant { .. } => "constant",
            CoefficientKind::Interpolated { .. } => "interpolated",
            CoefficientKind::Builtin { .. } => "builtin",
        }
    }

    pub fn builtin_name(&self) -> Option<&str> {
        match &self.kind {
            CoefficientKind::Builtin { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, CoefficientKind::Constant { .. })
    }

    /// Raw blocks before symmetrization (used by validation diagnostics).
    pub fn eval_raw(&self, t: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let t = t.clamp(self.interval.0, self.interval.1);
        match &self.kind {
            CoefficientKind::Constant { a, b, c } => (a.clone(), b.clone(), c.clone()),
            CoefficientKind::Interpolated { a, b, c } => (a.eval(t), b.eval(t), c.eval(t)),
            CoefficientKind::Builtin { eval, .. } => eval(t),
        }
    }

    /// Evaluates the curve, symmetrizing `B` and `C`.
    pub fn eval(&self, t: f64) -> CoeffSample {
        let (a, b, c) = self.eval_raw(t);
        CoeffSample {
            a,
            b: symmetrize(b),
            c: symmetrize(c),
        }
    }

    pub fn x_matrix(&self, t: f64) -> DMatrix<f64> {
        self.eval(t).x_matrix()
    }

    /// `B(t)` as a symmetric bilinear form (on covectors).
    pub fn b_form(&self, t: f64) -> SymBilinearForm {
        SymBilinearForm::symmetrized(self.eval(t).b)
    }

    /// The inverse matrix `B(t)⁻¹` (a symmetric bilinear form on vectors).
    pub fn b_inverse(&self, t: f64) -> Result<DMatrix<f64>, SystemError> {
        let b = self.eval(t).b;
        b.try_inverse().ok_or(SystemError::SingularB { t })
    }

    /// Restricts the field to a subinterval `[a, t1]` (same evaluator).
    pub fn restricted(&self, t1: f64) -> Result<Self, SystemError> {
        check_interval((self.interval.0, t1))?;
        let mut field = self.clone();
        field.interval = (self.interval.0, t1);
        Ok(field)
    }
}

fn check_interval((a, b): (f64, f64)) -> Result<(), SystemError> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(SystemError::BadInterval { a, b });
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Grid-scan diagnostics for a coefficient curve.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub nodes_checked: usize,
    pub max_b_asymmetry: f64,
    pub max_c_asymmetry: f64,
    /// min over nodes of σ_min(B)/σ_max(B)
    pub min_b_singular_ratio: f64,
    pub b_inertia: Option<Inertia>,
    pub failures: Vec<String>,
    pub passes: bool,
}

impl ValidationReport {
    fn message(msg: String) -> Self {
        ValidationReport {
            nodes_checked: 0,
            max_b_asymmetry: 0.0,
            max_c_asymmetry: 0.0,
            min_b_singular_ratio: 0.0,
            b_inertia: None,
            failures: vec![msg],
            passes: false,
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "nodes checked: {}, max asym B {:.3e} C {:.3e}, min sv-ratio of B {:.3e}",
            self.nodes_checked,
            self.max_b_asymmetry,
            self.max_c_asymmetry,
            self.min_b_singular_ratio
        )?;
        if let Some(i) = &self.b_inertia {
            writeln!(f, "inertia of B: {i}")?;
        }
        for failure in &self.failures {
            writeln!(f, "FAIL: {failure}")?;
        }
        write!(f, "verdict: {}", if self.passes { "pass" } else { "fail" })
    }
}

/// Scans the coefficient curve on a uniform grid and reports symmetry
/// residuals, invertibility of `B` and constancy of its inertia. Returns
/// diagnostics rather than failing; callers decide.
pub fn validate(coeffs: &CoefficientField, grid_steps: usize, tol: f64) -> ValidationReport {
    let (a, b) = coeffs.interval();
    let mut report = ValidationReport {
        nodes_checked: 0,
        max_b_asymmetry: 0.0,
        max_c_asymmetry: 0.0,
        min_b_singular_ratio: f64::INFINITY,
        b_inertia: None,
        failures: Vec::new(),
        passes: true,
    };
    if grid_steps < 2 {
        report.failures.push(format!("grid_steps = {grid_steps} < 2"));
        report.passes = false;
        return report;
    }
    let h = (b - a) / grid_steps as f64;
    let mut reference_inertia: Option<Inertia> = None;
    for i in 0..=grid_steps {
        let t = a + i as f64 * h;
        let (_, raw_b, raw_c) = coeffs.eval_raw(t);
        report.max_b_asymmetry = report.max_b_asymmetry.max(asymmetry(&raw_b));
        report.max_c_asymmetry = report.max_c_asymmetry.max(asymmetry(&raw_c));
        let b_sym = symmetrize(raw_b);
        let svd = b_sym.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let ratio = if smax > 0.0 {
            svd.singular_values.min() / smax
        } else {
            0.0
        };
        report.min_b_singular_ratio = report.min_b_singular_ratio.min(ratio);
        if ratio <= tol {
            report
                .failures
                .push(format!("B({t:.6}) singular (sv-ratio {ratio:.3e})"));
            report.passes = false;
        }
        let inertia_here = forms::inertia(&SymBilinearForm::symmetrized(b_sym), tol);
        match &reference_inertia {
            None => reference_inertia = Some(inertia_here),
            Some(reference) => {
                if (reference.n_minus, reference.n_plus)
                    != (inertia_here.n_minus, inertia_here.n_plus)
                {
                    report.failures.push(format!(
                        "inertia of B changed from {reference} to {inertia_here} at t = {t:.6}"
                    ));
                    report.passes = false;
                    reference_inertia = Some(inertia_here);
                }
            }
        }
        report.nodes_checked += 1;
    }
    const SYM_EVAL_TOL: f64 = 1e-12;
    if report.max_b_asymmetry > SYM_EVAL_TOL {
        report
            .failures
            .push(format!("B asymmetry {:.3e} exceeds 1e-12", report.max_b_asymmetry));
        report.passes = false;
    }
    if report.max_c_asymmetry > SYM_EVAL_TOL {
        report
            .failures
            .push(format!("C asymmetry {:.3e} exceeds 1e-12", report.max_c_asymmetry));
        report.passes = false;
    }
    report.b_inertia = reference_inertia;
    report
}

/// `α_v(t) = B(t)⁻¹(v'(t) − A(t)v(t))`, the covector a C¹ curve `v`
/// induces through the first equation of the system.
pub fn alpha_from_v(
    coeffs: &CoefficientField,
    t: f64,
    v: &DVector<f64>,
    v_prime: &DVector<f64>,
) -> Result<DVector<f64>, SystemError> {
    let sample = coeffs.eval(t);
    let rhs = v_prime - &sample.a * v;
    sample
        .b
        .lu()
        .solve(&rhs)
        .ok_or(SystemError::SingularB { t })
}

/// Problem data: coefficients plus a Lagrangian initial condition,
/// validated (coefficient invariants and the initial-data nondegeneracy)
/// at construction.
#[derive(Debug, Clone)]
pub struct SymplecticProblem {
    coefficients: CoefficientField,
    ell0: PSPair,
    grid_steps: usize,
}

impl SymplecticProblem {
    pub fn new(
        coefficients: CoefficientField,
        ell0: PSPair,
        grid_steps: usize,
    ) -> Result<Self, SystemError> {
        if grid_steps < 2 {
            return Err(SystemError::BadGrid(grid_steps));
        }
        assert_eq!(
            coefficients.n(),
            ell0.ambient_dim(),
            "initial condition dimension must match the system"
        );
        let report = validate(&coefficients, grid_steps, DEFAULT_TOL);
        if !report.passes {
            return Err(SystemError::Validation(Box::new(report)));
        }
        let problem = Self {
            coefficients,
            ell0,
            grid_steps,
        };
        let inertia = problem.assumption_inertia();
        if !inertia.is_nondegenerate() {
            return Err(SystemError::AssumptionViolated { inertia });
        }
        Ok(problem)
    }

    /// Inertia of `B(a)` restricted to the annihilator `P^o`; the initial
    /// data is admissible iff this is nondegenerate.
    pub fn assumption_inertia(&self) -> Inertia {
        let (a, _) = self.coefficients.interval();
        let p_ann = forms::annihilator(self.ell0.p());
        let restricted = forms::restrict(&self.coefficients.b_form(a), &p_ann)
            .expect("annihilator lives in the dual of the ambient space");
        restricted.inertia(DEFAULT_TOL)
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coefficients
    }

    pub fn ell0(&self) -> &PSPair {
        &self.ell0
    }

    pub fn grid_steps(&self) -> usize {
        self.grid_steps
    }

    pub fn n(&self) -> usize {
        self.coefficients.n()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.coefficients.interval()
    }

    pub fn grid_step_size(&self) -> f64 {
        let (a, b) = self.interval();
        (b - a) / self.grid_steps as f64
    }

    /// `n₋(B(a)⁻¹|P)`, the initial term of the index identity.
    pub fn initial_index_term(&self) -> Result<Inertia, SystemError> {
        let (a, _) = self.interval();
        let b_inv = self.coefficients.b_inverse(a)?;
        let restricted = forms::restrict(&SymBilinearForm::symmetrized(b_inv), self.ell0.p())?;
        Ok(restricted.inertia(DEFAULT_TOL))
    }

    /// Restriction of the problem to `[a, t1]` with a proportionally
    /// scaled grid (at least 64 steps).
    pub fn restricted(&self, t1: f64) -> Result<Self, SystemError> {
        let (a, b) = self.interval();
        let fraction = (t1 - a) / (b - a);
        let steps = ((self.grid_steps as f64 * fraction).ceil() as usize).max(64);
        Self::new(self.coefficients.restricted(t1)?, self.ell0.clone(), steps)
    }
}

/// The matrix `J` of the symplectic form `ω((v₁,α₁),(v₂,α₂)) = α₂(v₁) − α₁(v₂)`
/// in coordinates `(v, α)`.
pub fn omega_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// `ω(x, y)` for coordinate vectors in ℝⁿ ⊕ ℝⁿ*.
pub fn omega_apply(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = x.len() / 2;
    let mut value = 0.0;
    for i in 0..n {
        value += x[i] * y[n + i] - x[n + i] * y[i];
    }
    value
}

/// One classical RK4 step for a matrix-valued ODE `Y' = f(t, Y)`.
pub(crate) fn rk4_step<F>(f: &F, t: f64, y: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Fixed-step RK4 integration of `Y' = f(t, Y)` on `[a, b]`, returning all
/// node values including the initial one.
pub(crate) fn rk4_integrate<F>(
    f: &F,
    y0: DMatrix<f64>,
    interval: (f64, f64),
    steps: usize,
) -> Vec<DMatrix<f64>>
where
    F: Fn(f64, &DMatrix<f64>) -> DMatrix<f64>,
{
    let (a, b) = interval;
    let h = (b - a) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0);
    for i in 0..steps {
        let t = a + i as f64 * h;
        let next = rk4_step(f, t, out.last().unwrap(), h);
        out.push(next);
    }
    out
}

/// The fundamental matrix `Ψ` of a symplectic system sampled on the
/// uniform integration grid, with `Ψ(a) = Id`.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    field: CoefficientField,
    times: Vec<f64>,
    samples: Vec<DMatrix<f64>>,
    symp_residual: f64,
}

impl FundamentalMatrix {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    /// Worst symplecticity residual `‖ΨᵀJΨ − J‖_max` over the grid.
    pub fn symp_residual(&self) -> f64 {
        self.symp_residual
    }

    pub fn step_size(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Dense evaluation of `Ψ(t)` by a single RK4 step from the nearest
    /// grid node on the left.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let (a, b) = self.field.interval();
        let t = t.clamp(a, b);
        let h = self.step_size();
        let mut i = ((t - a) / h).floor() as usize;
        i = i.min(self.samples.len() - 1);
        let ti = self.times[i];
        let dt = t - ti;
        if dt.abs() < 1e-300 {
            return self.samples[i].clone();
        }
        let field = &self.field;
        let f = |s: f64, y: &DMatrix<f64>| field.x_matrix(s) * y;
        rk4_step(&f, ti, &self.samples[i], dt)
    }
}

/// Integrates `Ψ' = X(t)Ψ, Ψ(a) = Id` with fixed-step RK4 on the problem
/// grid and verifies symplecticity at every node.
pub fn fundamental_matrix(problem: &SymplecticProblem) -> Result<FundamentalMatrix, SystemError> {
    fundamental_matrix_with_tol(problem, DEFAULT_SYMP_TOL)
}

pub fn fundamental_matrix_with_tol(
    problem: &SymplecticProblem,
    symp_tol: f64,
) -> Result<FundamentalMatrix, SystemError> {
    let field = problem.coefficients().clone();
    let n = field.n();
    let (a, b) = field.interval();
    let steps = problem.grid_steps();
    let f = |t: f64, y: &DMatrix<f64>| field.x_matrix(t) * y;
    let samples = rk4_integrate(&f, DMatrix::identity(2 * n, 2 * n), (a, b), steps);
    let h = (b - a) / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| a + i as f64 * h).collect();
    let j = omega_matrix(n);
    let mut worst = 0.0f64;
    for psi in &samples {
        let residual = (psi.transpose() * &j * psi - &j).amax();
        worst = worst.max(residual);
    }
    if worst > symp_tol {
        return Err(SystemError::SympDrift {
            residual: worst,
            tol: symp_tol,
        });
    }
    Ok(FundamentalMatrix {
        field,
        times,
        samples,
        symp_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_field(n: usize) -> CoefficientField {
        CoefficientField::constant(
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            DMatrix::zeros(n, n),
            (0.0, 1.0),
        )
        .unwrap()
    }

    fn oscillator_field(kappa: f64) -> CoefficientField {
        CoefficientField::constant(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, -kappa * kappa),
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn validate_flat_system() {
        let report = validate(&flat_field(2), 64, DEFAULT_TOL);
        assert!(report.passes, "{report}");
        let inertia = report.b_inertia.unwrap();
        assert_eq!((inertia.n_minus, inertia.n_zero, inertia.n_plus), (0, 0, 2));
    }

    #[test]
    fn validate_indefinite_constant_b() {
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::zeros(2, 2),
            (0.0, 1.0),
        )
        .unwrap();
        let report = validate(&field, 64, DEFAULT_TOL);
        assert!(report.passes, "{report}");
        let inertia = report.b_inertia.unwrap();
        assert_eq!((inertia.n_minus, inertia.n_zero, inertia.n_plus), (1, 0, 1));
    }

    #[test]
    fn validate_detects_singular_b() {
        // B(t) = diag(t - 1/2, 1) crosses zero at t = 1/2
        let field = CoefficientField::builtin("singular-demo", 2, (0.0, 1.0), |t| {
            (
                DMatrix::zeros(2, 2),
                DMatrix::from_diagonal(&DVector::from_row_slice(&[t - 0.5, 1.0])),
                DMatrix::zeros(2, 2),
            )
        });
        let report = validate(&field, 64, DEFAULT_TOL);
        assert!(!report.passes);
        assert!(!report.failures.is_empty());
    }

    #[test]
    fn alpha_from_v_identity_b() {
        let field = flat_field(2);
        let v = DVector::from_row_slice(&[0.3, -0.4]);
        let vp = DVector::from_row_slice(&[1.0, 2.0]);
        let alpha = alpha_from_v(&field, 0.5, &v, &vp).unwrap();
        assert_abs_diff_eq!(alpha[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(alpha[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn alpha_from_v_componentwise_division() {
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::zeros(2, 2),
            (0.0, 1.0),
        )
        .unwrap();
        let v = DVector::zeros(2);
        let vp = DVector::from_row_slice(&[1.0, 1.0]);
        let alpha = alpha_from_v(&field, 0.0, &v, &vp).unwrap();
        assert_abs_diff_eq!(alpha[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(alpha[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn alpha_from_v_vanishes_when_vprime_equals_av() {
        let field = CoefficientField::constant(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            (0.0, 1.0),
        )
        .unwrap();
        let v = DVector::from_row_slice(&[2.0]);
        let alpha = alpha_from_v(&field, 0.3, &v, &v).unwrap();
        assert_abs_diff_eq!(alpha[0], 0.0, epsilon = 1e-14);
    }

    fn problem(field: CoefficientField) -> SymplecticProblem {
        let n = field.n();
        SymplecticProblem::new(field, PSPair::vertical(n), 512).unwrap()
    }

    #[test]
    fn zero_coefficients_give_identity_psi() {
        let field = CoefficientField::builtin("zero", 2, (0.0, 1.0), |_| {
            // B must stay invertible for validation, so use the flat system
            // and check Ψ for the genuinely zero field separately below.
            (
                DMatrix::zeros(2, 2),
                DMatrix::identity(2, 2),
                DMatrix::zeros(2, 2),
            )
        });
        let _ = field;
        // X ≡ 0 cannot be a symplectic system (B singular), but the
        // integrator itself must fix Ψ = Id for a zero right-hand side.
        let f = |_t: f64, _y: &DMatrix<f64>| DMatrix::<f64>::zeros(4, 4);
        let out = rk4_integrate(&f, DMatrix::identity(4, 4), (0.0, 1.0), 16);
        for psi in out {
            assert_abs_diff_eq!((psi - DMatrix::<f64>::identity(4, 4)).amax(), 0.0);
        }
    }

    #[test]
    fn free_particle_fundamental_matrix() {
        let p = problem(flat_field(1));
        let fm = fundamental_matrix(&p).unwrap();
        // Ψ(t) = [[1, t], [0, 1]]
        let psi = fm.at(0.73);
        assert_abs_diff_eq!(psi[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psi[(0, 1)], 0.73, epsilon = 1e-12);
        assert_abs_diff_eq!(psi[(1, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(psi[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oscillator_fundamental_matrix() {
        let kappa = 1.5 * std::f64::consts::PI;
        let p = problem(oscillator_field(kappa));
        let fm = fundamental_matrix(&p).unwrap();
        for &t in &[0.2, 0.5, 0.9] {
            let psi = fm.at(t);
            assert_abs_diff_eq!(psi[(0, 0)], (kappa * t).cos(), epsilon = 1e-9);
            assert_abs_diff_eq!(psi[(0, 1)], (kappa * t).sin() / kappa, epsilon = 1e-9);
            assert_abs_diff_eq!(psi[(1, 0)], -kappa * (kappa * t).sin(), epsilon = 1e-9);
            assert_abs_diff_eq!(psi[(1, 1)], (kappa * t).cos(), epsilon = 1e-9);
        }
        assert!(fm.symp_residual() < 1e-10);
    }

    #[test]
    fn symp_drift_reported_for_coarse_grid() {
        let kappa = 40.0;
        let field = oscillator_field(kappa);
        let p = SymplecticProblem::new(field, PSPair::vertical(1), 8).unwrap();
        let result = fundamental_matrix_with_tol(&p, 1e-12);
        assert!(matches!(result, Err(SystemError::SympDrift { .. })));
    }

    #[test]
    fn pairing_constant_along_solutions() {
        // β(v) − α(w) is constant for any two solutions (ω-invariance).
        let kappa = 2.0;
        let p = problem(oscillator_field(kappa));
        let fm = fundamental_matrix(&p).unwrap();
        let z1 = DVector::from_row_slice(&[0.7, -0.3]);
        let z2 = DVector::from_row_slice(&[-0.2, 1.1]);
        let initial = omega_apply(&z1, &z2);
        for &t in &[0.1, 0.4, 0.8, 1.0] {
            let psi = fm.at(t);
            let w1 = &psi * &z1;
            let w2 = &psi * &z2;
            assert_abs_diff_eq!(omega_apply(&w1, &w2), initial, epsilon = 1e-10);
        }
    }

    #[test]
    fn assumption_check_rejects_degenerate_initial_data() {
        // B(a) = diag(-1, 1) is degenerate on P^o for P = span(e1 + e2):
        // P^o = span(e1* - e2*)... B(e1-e2, e1-e2) = -1 + ... = 0? Compute:
        // covector (1, -1): B = -1·1 + 1·1 = 0, degenerate indeed.
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::zeros(2, 2),
            (0.0, 1.0),
        )
        .unwrap();
        let p_frame = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let ps = PSPair::new(
            crate::forms::Subspace::new(p_frame, DEFAULT_TOL).unwrap(),
            SymBilinearForm::zeros(1),
        )
        .unwrap();
        let result = SymplecticProblem::new(field, ps, 64);
        assert!(matches!(result, Err(SystemError::AssumptionViolated { .. })));
    }

    #[test]
    fn assumption_equivalence_with_b_inverse_on_p() {
        // B(a)⁻¹ nondegenerate on P ⟺ B(a) nondegenerate on P^o.
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::zeros(2, 2),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::horizontal(2), 64).unwrap();
        assert!(p.assumption_inertia().is_nondegenerate());
        assert!(p.initial_index_term().unwrap().is_nondegenerate());
        assert_eq!(p.initial_index_term().unwrap().n_minus, 1);
    }
}
