//! The reduced symplectic system induced by a maximal negative
//! distribution: coefficients `𝓑, 𝓒, 𝓘`, verification that it has no
//! focal instants (the key hypothesis of the index identity), sufficient
//! conditions, and the identity tying the reduced index form to the
//! restriction of the full one.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::forms::{self, SymBilinearForm, DEFAULT_TOL};
use crate::indexform::{assemble, build_s_subspace, Distribution, IndexFormError, Mesh};
use crate::interp::differentiate;
use crate::lagrangian::PSPair;
use crate::maslov::{find_focal_instants, FocalInstant, MaslovError};
use crate::system::{fundamental_matrix, CoefficientField, SymplecticProblem, SystemError};

#[derive(Debug, Error)]
pub enum ReducedError {
    #[error("distribution frame lost rank at t = {t:.6}")]
    FrameRankLoss { t: f64 },
    #[error("the two frames span different distributions at t = {t:.6}")]
    FramesSpanDiffer { t: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    IndexForm(#[from] IndexFormError),
    #[error(transparent)]
    Maslov(#[from] MaslovError),
    #[error(transparent)]
    Forms(#[from] forms::FormsError),
}

/// Samples of the reduced coefficients at one instant.
#[derive(Debug, Clone)]
pub struct ReducedSample {
    /// `𝓑_ij = B⁻¹(Y_i, Y_j)` (negative definite).
    pub b_cal: DMatrix<f64>,
    /// `𝓒_ij = α_{Y_j}(Y_i)`.
    pub c_cal: DMatrix<f64>,
    /// `𝓘_ij = B(α_{Y_i}, α_{Y_j}) + C(Y_i, Y_j)`.
    pub i_cal: DMatrix<f64>,
}

impl ReducedSample {
    pub fn c_sym(&self) -> DMatrix<f64> {
        (&self.c_cal + self.c_cal.transpose()) * 0.5
    }

    pub fn c_antisym(&self) -> DMatrix<f64> {
        (&self.c_cal - self.c_cal.transpose()) * 0.5
    }
}

/// The reduced symplectic system in ℝᵏ attached to a distribution frame,
/// with its embedding as an ordinary coefficient field
/// (`A = −𝓑⁻¹𝓒_a`, `B = 𝓑⁻¹`, `C = 𝓘 − 𝓒_s' + 𝓒_a𝓑⁻¹𝓒_a`).
pub struct ReducedSystem {
    k: usize,
    interval: (f64, f64),
    grid_steps: usize,
    base: SymplecticProblem,
    dist: Distribution,
    embedded: CoefficientField,
}

impl std::fmt::Debug for ReducedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedSystem")
            .field("k", &self.k)
            .field("interval", &self.interval)
            .finish()
    }
}

fn reduced_sample_at(
    problem: &SymplecticProblem,
    dist: &Distribution,
    t: f64,
    fd_step: f64,
) -> ReducedSample {
    let field = problem.coefficients();
    let interval = field.interval();
    let sample = field.eval(t);
    let b_inv = sample
        .b
        .clone()
        .try_inverse()
        .expect("B invertible on validated problems");
    let y = dist.frame_at(t);
    let y_prime = dist.frame_deriv(t, fd_step, interval);
    let alpha = &b_inv * (&y_prime - &sample.a * &y);
    let b_cal = y.transpose() * &b_inv * &y;
    let c_cal = y.transpose() * &alpha;
    let i_cal = alpha.transpose() * &sample.b * &alpha + y.transpose() * &sample.c * &y;
    ReducedSample {
        b_cal,
        c_cal,
        i_cal: (&i_cal + i_cal.transpose()) * 0.5,
    }
}

impl ReducedSystem {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sample(&self, t: f64) -> ReducedSample {
        reduced_sample_at(&self.base, &self.dist, t, self.fd_step())
    }

    fn fd_step(&self) -> f64 {
        let (a, b) = self.interval;
        (b - a) / self.grid_steps as f64
    }

    /// The reduced system as a symplectic coefficient field in ℝᵏ.
    pub fn embedded(&self) -> &CoefficientField {
        &self.embedded
    }

    /// The reduced problem with initial condition `f(a) = 0`.
    pub fn problem(&self) -> Result<SymplecticProblem, SystemError> {
        SymplecticProblem::new(
            self.embedded.clone(),
            PSPair::vertical(self.k),
            self.grid_steps,
        )
    }

    /// The alternative reduced system
    /// (`A = −𝓑⁻¹𝓒`, `B = 𝓑⁻¹`, `C = 𝓘 − 𝓒*𝓑⁻¹𝓒`), isomorphic to the
    /// primary one.
    pub fn alternative_problem(&self) -> Result<SymplecticProblem, SystemError> {
        let base = self.base.clone();
        let dist = self.dist.clone();
        let fd_step = self.fd_step();
        let k = self.k;
        let field = CoefficientField::builtin(
            "reduced-alternative",
            k,
            self.interval,
            move |t| {
                let s = reduced_sample_at(&base, &dist, t, fd_step);
                let b_inv = s
                    .b_cal
                    .clone()
                    .try_inverse()
                    .expect("𝓑 negative definite");
                let a_red = -&b_inv * &s.c_cal;
                let c_red = &s.i_cal - s.c_cal.transpose() * &b_inv * &s.c_cal;
                (a_red, b_inv, c_red)
            },
        );
        SymplecticProblem::new(field, PSPair::vertical(k), self.grid_steps)
    }
}

/// Builds the reduced symplectic system for a validated distribution.
/// Frame derivatives are analytic when the frame supplies them and central
/// differences on the integration grid otherwise; `𝓒_s'` follows the same
/// rule (exactly zero in the constant-coefficients/constant-frame case).
pub fn build_reduced(
    problem: &SymplecticProblem,
    dist: &Distribution,
) -> Result<ReducedSystem, ReducedError> {
    dist.validate_for(problem).map_err(|e| match e {
        IndexFormError::DistributionInvalid { reason } if reason.contains("rank loss") => {
            ReducedError::FrameRankLoss {
                t: problem.interval().0,
            }
        }
        other => ReducedError::IndexForm(other),
    })?;
    let k = dist.k();
    let interval = problem.interval();
    let grid_steps = problem.grid_steps();
    let fd_step = (interval.1 - interval.0) / grid_steps as f64;
    let base = problem.clone();
    let dist_cl = dist.clone();
    let constant_case = problem.coefficients().is_constant() && {
        // constant frame ⇒ 𝓒 constant ⇒ 𝓒_s' = 0 analytically
        let f0 = dist.frame_at(interval.0);
        let f1 = dist.frame_at(0.5 * (interval.0 + interval.1));
        (f0 - f1).amax() == 0.0
    };
    let embedded = CoefficientField::builtin("reduced", k, interval, move |t| {
        let s = reduced_sample_at(&base, &dist_cl, t, fd_step);
        let b_inv = s
            .b_cal
            .clone()
            .try_inverse()
            .expect("𝓑 negative definite");
        let c_a = s.c_antisym();
        let a_red = -&b_inv * &c_a;
        let c_s_prime = if constant_case {
            DMatrix::zeros(k, k)
        } else {
            let (lo, hi) = base.interval();
            let inner_base = base.clone();
            let dist = dist_cl.clone();
            differentiate(
                move |u| reduced_sample_at(&inner_base, &dist, u, fd_step).c_sym(),
                t,
                fd_step,
                lo,
                hi,
            )
        };
        let c_red = &s.i_cal - c_s_prime + &c_a * &b_inv * &c_a;
        (a_red, b_inv, c_red)
    });
    Ok(ReducedSystem {
        k,
        interval,
        grid_steps,
        base: problem.clone(),
        dist: dist.clone(),
        embedded,
    })
}

/// Verdict of the no-reduced-focal-instants hypothesis.
#[derive(Debug, Clone)]
pub struct AssumptionVerdict {
    pub holds: bool,
    pub fails_at: Option<f64>,
    /// `𝓘 − 𝓒_s' + 𝓒_a𝓑⁻¹𝓒_a` negative semidefinite at every node.
    pub sufficient_negsemi: bool,
    /// `𝓘 − 𝓒*𝓑⁻¹𝓒` negative semidefinite at every node.
    pub sufficient_negsemi_alt: bool,
    /// The alternative reduced system produces the same verdict.
    pub alternative_agrees: bool,
}

fn first_focal(problem: &SymplecticProblem) -> Result<Option<f64>, ReducedError> {
    let psi = fundamental_matrix(problem)?;
    match find_focal_instants(problem, &psi) {
        Ok(instants) => Ok(instants.first().map(|c| c.t)),
        // a degenerate crossing is still a focal instant
        Err(MaslovError::DegenerateCrossing { t, .. }) => Ok(Some(t)),
        Err(other) => Err(other.into()),
    }
}

/// Integrates the reduced system with `f(a) = 0` data and scans for zeros
/// of the determinant of the `f`-part; also evaluates the two sufficient
/// negative-semidefiniteness criteria and cross-checks the verdict on the
/// isomorphic alternative system.
pub fn check_assumption(reduced: &ReducedSystem) -> Result<AssumptionVerdict, ReducedError> {
    if reduced.k == 0 {
        return Ok(AssumptionVerdict {
            holds: true,
            fails_at: None,
            sufficient_negsemi: true,
            sufficient_negsemi_alt: true,
            alternative_agrees: true,
        });
    }
    let primary = reduced.problem()?;
    let primary_failure = first_focal(&primary)?;
    let alt = reduced.alternative_problem()?;
    let alt_failure = first_focal(&alt)?;

    let (a, b) = reduced.interval;
    let steps = reduced.grid_steps;
    let h = (b - a) / steps as f64;
    let mut negsemi = true;
    let mut negsemi_alt = true;
    for i in 0..=steps {
        let t = a + i as f64 * h;
        let c_red = reduced.embedded.eval(t).c;
        if forms::inertia(&SymBilinearForm::symmetrized(c_red), DEFAULT_TOL).n_plus > 0 {
            negsemi = false;
        }
        let s = reduced.sample(t);
        let b_inv = s.b_cal.clone().try_inverse().expect("𝓑 invertible");
        let alt_form = &s.i_cal - s.c_cal.transpose() * &b_inv * &s.c_cal;
        if forms::inertia(&SymBilinearForm::symmetrized(alt_form), DEFAULT_TOL).n_plus > 0 {
            negsemi_alt = false;
        }
        if !negsemi && !negsemi_alt {
            break;
        }
    }
    Ok(AssumptionVerdict {
        holds: primary_failure.is_none(),
        fails_at: primary_failure,
        sufficient_negsemi: negsemi,
        sufficient_negsemi_alt: negsemi_alt,
        alternative_agrees: primary_failure.is_none() == alt_failure.is_none(),
    })
}

/// Residuals of the identity `I_red(f, g) = I(Σf_iY_i, Σg_iY_i)` at the
/// discrete level: the reduced index form is assembled on P1 fields
/// vanishing at both endpoints and compared against the restriction of the
/// full discrete form to `S_N` (whose columns are exactly the nodal images
/// of the reduced basis).
#[derive(Debug, Clone)]
pub struct RestrictionResidual {
    /// Max entrywise deviation over the hat-function basis. Zero (to
    /// roundoff) for constant frames and coefficients; O(h) otherwise, the
    /// hat basis being too rough to superconverge.
    pub entrywise: f64,
    /// Max deviation of the two quadratic forms on smooth probe fields;
    /// O(h²) for smooth data. This is the headline residual.
    pub on_smooth_probes: f64,
}

pub fn restriction_identity_check(
    problem: &SymplecticProblem,
    dist: &Distribution,
    mesh: &Mesh,
) -> Result<RestrictionResidual, ReducedError> {
    let reduced = build_reduced(problem, dist)?;
    let reduced_problem = reduced.problem()?;
    let reduced_form = assemble(&reduced_problem, mesh, None)?;
    let full_form = assemble(problem, mesh, None)?;
    let s_n = build_s_subspace(&full_form, dist);
    let restricted = forms::restrict(&full_form.matrix, &s_n)?;
    let difference = reduced_form.matrix.matrix() - restricted.matrix();
    let entrywise = difference.amax();
    // probe with sin(mπτ) e_i shapes: nodal vectors in the reduced trial
    // space (the matching full-space field is S_N times the same vector)
    let (a, b) = problem.interval();
    let k = dist.k();
    let nodes = mesh.nodes();
    let interior = nodes.len() - 2;
    let mut worst = 0.0f64;
    for i in 0..k {
        for m in 1..=2usize {
            let mut probe = nalgebra::DVector::zeros(reduced_form.trial.dof());
            for j in 1..=interior {
                let tau = (nodes[j] - a) / (b - a);
                probe[(j - 1) * k + i] = (m as f64 * std::f64::consts::PI * tau).sin();
            }
            let value = (probe.transpose() * &difference * &probe)[(0, 0)].abs();
            worst = worst.max(value);
        }
    }
    Ok(RestrictionResidual {
        entrywise,
        on_smooth_probes: worst,
    })
}

/// Outcome of comparing the reduced systems of two frames for the same
/// distribution.
#[derive(Debug, Clone)]
pub struct FramesComparison {
    pub agree: bool,
    pub instants_first: Vec<FocalInstant>,
    pub instants_second: Vec<FocalInstant>,
}

/// Builds the reduced systems of two frames spanning the same distribution
/// and compares their focal data (isomorphic systems must agree).
pub fn frames_isomorphic_check(
    problem: &SymplecticProblem,
    first: &Distribution,
    second: &Distribution,
) -> Result<FramesComparison, ReducedError> {
    let (a, b) = problem.interval();
    let steps = problem.grid_steps().min(256);
    let h = (b - a) / steps as f64;
    for i in 0..=steps {
        let t = a + i as f64 * h;
        let s1 = forms::Subspace::new(first.frame_at(t), DEFAULT_TOL)
            .map_err(|_| ReducedError::FrameRankLoss { t })?;
        let s2 = forms::Subspace::new(second.frame_at(t), DEFAULT_TOL)
            .map_err(|_| ReducedError::FrameRankLoss { t })?;
        if !s1.same_span(&s2, 1e-8) {
            return Err(ReducedError::FramesSpanDiffer { t });
        }
    }
    let instants_of = |dist: &Distribution| -> Result<Vec<FocalInstant>, ReducedError> {
        let reduced = build_reduced(problem, dist)?;
        let p = reduced.problem()?;
        let psi = fundamental_matrix(&p)?;
        Ok(find_focal_instants(&p, &psi)?)
    };
    let instants_first = instants_of(first)?;
    let instants_second = instants_of(second)?;
    let tol = 1e-7 * (b - a);
    let agree = instants_first.len() == instants_second.len()
        && instants_first
            .iter()
            .zip(&instants_second)
            .all(|(x, y)| {
                (x.t - y.t).abs() <= tol
                    && x.multiplicity == y.multiplicity
                    && x.signature == y.signature
            });
    Ok(FramesComparison {
        agree,
        instants_first,
        instants_second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::DEFAULT_GRID_STEPS;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    const KAPPA_A: f64 = 4.71238898038469; // 3π/2

    fn oracle_c_problem() -> (SymplecticProblem, Distribution) {
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, -KAPPA_A * KAPPA_A])),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(2), DEFAULT_GRID_STEPS).unwrap();
        let d = Distribution::constant(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        (p, d)
    }

    #[test]
    fn oracle_c_reduced_coefficients() {
        let (p, d) = oracle_c_problem();
        let reduced = build_reduced(&p, &d).unwrap();
        let s = reduced.sample(0.37);
        assert_abs_diff_eq!(s.b_cal[(0, 0)], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.c_cal[(0, 0)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.i_cal[(0, 0)], 0.0, epsilon = 1e-13);
        // embedded system: f' = −φ, φ' = 0
        let e = reduced.embedded().eval(0.37);
        assert_abs_diff_eq!(e.a[(0, 0)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e.b[(0, 0)], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e.c[(0, 0)], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn oracle_c_assumption_holds() {
        let (p, d) = oracle_c_problem();
        let reduced = build_reduced(&p, &d).unwrap();
        let verdict = check_assumption(&reduced).unwrap();
        assert!(verdict.holds);
        assert!(verdict.fails_at.is_none());
        assert!(verdict.sufficient_negsemi);
        assert!(verdict.sufficient_negsemi_alt);
        assert!(verdict.alternative_agrees);
    }

    #[test]
    fn scalar_time_varying_i_cal() {
        // k=1, Y = e1, B⁻¹ = −1 constant, C₁₁ = c(t): 𝓘 = (c(t))
        let field = CoefficientField::builtin("ct", 1, (0.0, 1.0), |t| {
            (
                DMatrix::zeros(1, 1),
                DMatrix::from_element(1, 1, -1.0),
                DMatrix::from_element(1, 1, -1.0 - 0.5 * (2.0 * t).sin()),
            )
        });
        let p = SymplecticProblem::new(field, PSPair::vertical(1), 1024).unwrap();
        let d = Distribution::constant(DMatrix::identity(1, 1));
        let reduced = build_reduced(&p, &d).unwrap();
        for &t in &[0.2, 0.5, 0.9] {
            let s = reduced.sample(t);
            assert_abs_diff_eq!(
                s.i_cal[(0, 0)],
                -1.0 - 0.5 * (2.0 * t).sin(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn x_solution_frame_kills_c_red() {
        // Y(t) = (1 + t/2)e1 is an X-solution of the C = 0 system with
        // B = diag(-1,1); α_Y(Y) is symmetric (scalar), so C_red ≡ 0.
        let field = CoefficientField::constant(
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, 1.0])),
            DMatrix::zeros(2, 2),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(2), 2048).unwrap();
        let d = Distribution::analytic(2, 1, |t| {
            DMatrix::from_column_slice(2, 1, &[1.0 + 0.5 * t, 0.0])
        })
        .with_derivative(|_t| DMatrix::from_column_slice(2, 1, &[0.5, 0.0]));
        let reduced = build_reduced(&p, &d).unwrap();
        for &t in &[0.1, 0.5, 0.85] {
            let e = reduced.embedded().eval(t);
            assert_abs_diff_eq!(e.c[(0, 0)], 0.0, epsilon = 1e-7);
        }
        let verdict = check_assumption(&reduced).unwrap();
        assert!(verdict.holds);
    }

    #[test]
    fn oscillating_reduced_system_fails_at_pi_over_mu() {
        // B = −1, C = μ²: the reduced system is f'' = −μ²f, focal at π/μ.
        let mu = 2.0 * std::f64::consts::PI;
        let field = CoefficientField::constant(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, mu * mu),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(1), DEFAULT_GRID_STEPS).unwrap();
        let d = Distribution::constant(DMatrix::identity(1, 1));
        let reduced = build_reduced(&p, &d).unwrap();
        let verdict = check_assumption(&reduced).unwrap();
        assert!(!verdict.holds);
        assert_abs_diff_eq!(
            verdict.fails_at.unwrap(),
            std::f64::consts::PI / mu,
            epsilon = 1e-8
        );
        assert!(!verdict.sufficient_negsemi);
        assert!(verdict.alternative_agrees);
    }

    #[test]
    fn restriction_identity_exact_for_constant_data() {
        let (p, d) = oracle_c_problem();
        let mesh = Mesh::uniform((0.0, 1.0), 64).unwrap();
        let residual = restriction_identity_check(&p, &d, &mesh).unwrap();
        assert!(
            residual.entrywise < 1e-11,
            "residual {:.3e}",
            residual.entrywise
        );
        assert!(residual.on_smooth_probes < 1e-10);
    }

    #[test]
    fn restriction_identity_second_order_for_rotating_frame() {
        let field = CoefficientField::constant(
            DMatrix::zeros(3, 3),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, -1.0, 1.0])),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[0.5, -0.25, -1.0])),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(3), 2048).unwrap();
        let omega = 3.0;
        let d = Distribution::analytic(3, 2, move |t| {
            let (s, c) = (omega * t).sin_cos();
            DMatrix::from_column_slice(3, 2, &[c, s, 0.0, -s, c, 0.0])
        })
        .with_derivative(move |t| {
            let (s, c) = (omega * t).sin_cos();
            DMatrix::from_column_slice(
                3,
                2,
                &[-omega * s, omega * c, 0.0, -omega * c, -omega * s, 0.0],
            )
        });
        let r64 = restriction_identity_check(&p, &d, &Mesh::uniform((0.0, 1.0), 64).unwrap())
            .unwrap()
            .on_smooth_probes;
        let r128 = restriction_identity_check(&p, &d, &Mesh::uniform((0.0, 1.0), 128).unwrap())
            .unwrap()
            .on_smooth_probes;
        let ratio = r64 / r128;
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x decay, got r64={r64:.3e} r128={r128:.3e} ratio={ratio:.2}"
        );
    }

    #[test]
    fn reduced_single_hat_is_negative() {
        let (p, d) = oracle_c_problem();
        let reduced = build_reduced(&p, &d).unwrap().problem().unwrap();
        let mesh = Mesh::uniform((0.0, 1.0), 2).unwrap();
        let form = assemble(&reduced, &mesh, None).unwrap();
        assert_eq!(form.trial.dof(), 1);
        assert_abs_diff_eq!(form.matrix.matrix()[(0, 0)], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn frames_scaled_and_recombined_agree() {
        // frames that differ by scaling or a constant GL(k) change of basis
        // give identical focal data
        let field = CoefficientField::constant(
            DMatrix::zeros(3, 3),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, -1.0, 1.0])),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[10.0, 15.0, -1.0])),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(3), 2048).unwrap();
        let frame = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let d1 = Distribution::constant(frame.clone());
        let d2 = Distribution::constant(&frame * 2.0);
        let mix = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let d3 = Distribution::constant(&frame * &mix);
        let c12 = frames_isomorphic_check(&p, &d1, &d2).unwrap();
        assert!(c12.agree, "{c12:?}");
        assert!(!c12.instants_first.is_empty());
        let c13 = frames_isomorphic_check(&p, &d1, &d3).unwrap();
        assert!(c13.agree, "{c13:?}");
    }

    #[test]
    fn rotating_frame_agrees_with_static_frame() {
        let field = CoefficientField::constant(
            DMatrix::zeros(3, 3),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[-1.0, -1.0, 1.0])),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[10.0, 15.0, -1.0])),
            (0.0, 1.0),
        )
        .unwrap();
        let p = SymplecticProblem::new(field, PSPair::vertical(3), 2048).unwrap();
        let d1 = Distribution::constant(DMatrix::from_column_slice(
            3,
            2,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        ));
        let omega = 2.0;
        let d2 = Distribution::analytic(3, 2, move |t| {
            let (s, c) = (omega * t).sin_cos();
            DMatrix::from_column_slice(3, 2, &[c, s, 0.0, -s, c, 0.0])
        })
        .with_derivative(move |t| {
            let (s, c) = (omega * t).sin_cos();
            DMatrix::from_column_slice(
                3,
                2,
                &[-omega * s, omega * c, 0.0, -omega * c, -omega * s, 0.0],
            )
        });
        let cmp = frames_isomorphic_check(&p, &d1, &d2).unwrap();
        assert!(cmp.agree, "{cmp:?}");
    }

    #[test]
    fn differing_spans_rejected() {
        let (p, d) = oracle_c_problem();
        let other = Distribution::constant(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        assert!(matches!(
            frames_isomorphic_check(&p, &d, &other),
            Err(ReducedError::FramesSpanDiffer { .. })
        ));
    }
}
