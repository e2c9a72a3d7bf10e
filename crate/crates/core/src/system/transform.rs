//! Structural transformations of symplectic systems: the opposite system,
//! isomorphisms by symplectomorphisms fixing the vertical, and the
//! Morse–Sturm normal form (`A = 0`, constant diagonal `B`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{rk4_integrate, CoefficientField, SymplecticProblem, SystemError};
use crate::interp::{differentiate, MonotoneCubic};
use crate::lagrangian::PSPair;

type MatFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// The opposite problem: blocks `(A, −B, −C)` and initial pair `(P, −S)`,
/// i.e. the image of the data under `(v, α) ↦ (v, −α)`.
pub fn opposite(problem: &SymplecticProblem) -> SymplecticProblem {
    let field = problem.coefficients().clone();
    let n = field.n();
    let interval = field.interval();
    let op_field = if field.is_constant() {
        let s = field.eval(interval.0);
        CoefficientField::constant(s.a.clone(), -&s.b, -&s.c, interval)
            .expect("constant opposite field")
    } else {
        CoefficientField::builtin("opposite", n, interval, move |t| {
            let (a, b, c) = field.eval_raw(t);
            (a, -b, -c)
        })
    };
    SymplecticProblem::new(op_field, problem.ell0().negated(), problem.grid_steps())
        .expect("opposition preserves validity of the data")
}

/// A curve of symplectomorphisms preserving `L₀`, block form
/// `[[Z, 0], [Z⁻ᵀW, Z⁻ᵀ]]` with `Z(t)` invertible and `W(t)` symmetric.
/// Derivatives are analytic when supplied, otherwise central differences
/// with the stored step.
#[derive(Clone)]
pub struct Isomorphism {
    n: usize,
    interval: (f64, f64),
    fd_step: f64,
    z: MatFn,
    w: MatFn,
    z_prime: Option<MatFn>,
    w_prime: Option<MatFn>,
}

impl std::fmt::Debug for Isomorphism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Isomorphism")
            .field("n", &self.n)
            .field("interval", &self.interval)
            .field("analytic_z_prime", &self.z_prime.is_some())
            .field("analytic_w_prime", &self.w_prime.is_some())
            .finish()
    }
}

impl Isomorphism {
    pub fn new<Fz, Fw>(
        n: usize,
        interval: (f64, f64),
        fd_step: f64,
        z: Fz,
        w: Fw,
    ) -> Self
    where
        Fz: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        Fw: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            interval,
            fd_step,
            z: Arc::new(z),
            w: Arc::new(w),
            z_prime: None,
            w_prime: None,
        }
    }

    pub fn with_z_prime<F>(mut self, z_prime: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.z_prime = Some(Arc::new(z_prime));
        self
    }

    pub fn with_w_prime<F>(mut self, w_prime: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.w_prime = Some(Arc::new(w_prime));
        self
    }

    pub fn identity(n: usize, interval: (f64, f64)) -> Self {
        Self::new(
            n,
            interval,
            1e-4,
            move |_| DMatrix::identity(n, n),
            move |_| DMatrix::zeros(n, n),
        )
        .with_z_prime(move |_| DMatrix::zeros(n, n))
        .with_w_prime(move |_| DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self, t: f64) -> DMatrix<f64> {
        (self.z)(t)
    }

    pub fn w(&self, t: f64) -> DMatrix<f64> {
        let w = (self.w)(t);
        (&w + w.transpose()) * 0.5
    }

    pub fn z_prime(&self, t: f64) -> DMatrix<f64> {
        match &self.z_prime {
            Some(f) => f(t),
            None => {
                let z = self.z.clone();
                differentiate(move |s| z(s), t, self.fd_step, self.interval.0, self.interval.1)
            }
        }
    }

    pub fn w_prime(&self, t: f64) -> DMatrix<f64> {
        match &self.w_prime {
            Some(f) => f(t),
            None => {
                let w = self.w.clone();
                differentiate(move |s| w(s), t, self.fd_step, self.interval.0, self.interval.1)
            }
        }
    }

    /// The `2n × 2n` block matrix `[[Z, 0], [Z⁻ᵀW, Z⁻ᵀ]]`.
    pub fn phi0(&self, t: f64) -> Result<DMatrix<f64>, SystemError> {
        let n = self.n;
        let z = self.z(t);
        let z_inv_t = z
            .clone()
            .try_inverse()
            .ok_or(SystemError::SingularZ { t })?
            .transpose();
        let w = self.w(t);
        let mut phi = DMatrix::zeros(2 * n, 2 * n);
        phi.view_mut((0, 0), (n, n)).copy_from(&z);
        phi.view_mut((n, 0), (n, n)).copy_from(&(&z_inv_t * &w));
        phi.view_mut((n, n), (n, n)).copy_from(&z_inv_t);
        Ok(phi)
    }

    /// Composition `outer ∘ inner`: `Z = Z₂Z₁`, `W = W₁ + Z₁ᵀW₂Z₁`.
    pub fn compose(outer: &Isomorphism, inner: &Isomorphism) -> Isomorphism {
        assert_eq!(outer.n, inner.n);
        let n = inner.n;
        let interval = inner.interval;
        let (o1, i1) = (outer.clone(), inner.clone());
        let (o2, i2) = (outer.clone(), inner.clone());
        let (o3, i3) = (outer.clone(), inner.clone());
        let (o4, i4) = (outer.clone(), inner.clone());
        Isomorphism::new(n, interval, inner.fd_step, move |t| o1.z(t) * i1.z(t), move |t| {
            let z1 = i2.z(t);
            i2.w(t) + z1.transpose() * o2.w(t) * z1
        })
        .with_z_prime(move |t| o3.z_prime(t) * i3.z(t) + o3.z(t) * i3.z_prime(t))
        .with_w_prime(move |t| {
            let z1 = i4.z(t);
            let z1p = i4.z_prime(t);
            let w2 = o4.w(t);
            i4.w_prime(t)
                + z1p.transpose() * &w2 * &z1
                + z1.transpose() * o4.w_prime(t) * &z1
                + z1.transpose() * &w2 * z1p
        })
    }
}

/// Seeded random isomorphism built from trigonometric polynomials of
/// degree ≤ 3: `Z` stays within condition number ~3 of the identity and
/// `W` is a bounded symmetric curve. Derivatives are analytic.
pub fn random_smooth_isomorphism(n: usize, interval: (f64, f64), seed: u64) -> Isomorphism {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let degree = 3usize;
    let scale = 0.4 / (2.0 * degree as f64 * n as f64);
    let mut rand_mat =
        |s: f64| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * s);
    let z_cos: Vec<DMatrix<f64>> = (0..degree).map(|_| rand_mat(scale)).collect();
    let z_sin: Vec<DMatrix<f64>> = (0..degree).map(|_| rand_mat(scale)).collect();
    let w_cos: Vec<DMatrix<f64>> = (0..degree)
        .map(|_| {
            let m = rand_mat(0.3 / degree as f64);
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let w_sin: Vec<DMatrix<f64>> = (0..degree)
        .map(|_| {
            let m = rand_mat(0.3 / degree as f64);
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let (a, b) = interval;
    let omega = std::f64::consts::PI / (b - a);
    let trig_sum = move |t: f64, cos_coef: &[DMatrix<f64>], sin_coef: &[DMatrix<f64>]| {
        let tau = (t - a) * omega;
        let mut acc = DMatrix::zeros(n, n);
        for m in 1..=cos_coef.len() {
            acc += &cos_coef[m - 1] * (m as f64 * tau).cos() + &sin_coef[m - 1] * (m as f64 * tau).sin();
        }
        acc
    };
    let trig_sum_prime = move |t: f64, cos_coef: &[DMatrix<f64>], sin_coef: &[DMatrix<f64>]| {
        let tau = (t - a) * omega;
        let mut acc = DMatrix::zeros(n, n);
        for m in 1..=cos_coef.len() {
            let freq = m as f64 * omega;
            acc += &sin_coef[m - 1] * (freq * (m as f64 * tau).cos())
                - &cos_coef[m - 1] * (freq * (m as f64 * tau).sin());
        }
        acc
    };
    let (zc1, zs1) = (z_cos.clone(), z_sin.clone());
    let (zc2, zs2) = (z_cos, z_sin);
    let (wc1, ws1) = (w_cos.clone(), w_sin.clone());
    let (wc2, ws2) = (w_cos, w_sin);
    Isomorphism::new(
        n,
        interval,
        1e-5,
        move |t| DMatrix::identity(n, n) + trig_sum(t, &zc1, &zs1),
        move |t| trig_sum(t, &wc1, &ws1),
    )
    .with_z_prime(move |t| trig_sum_prime(t, &zc2, &zs2))
    .with_w_prime(move |t| trig_sum_prime(t, &wc2, &ws2))
}

/// Transforms the problem through an isomorphism:
/// `Ã = ZAZ⁻¹ − ZBWZ⁻¹ + Z'Z⁻¹`, `B̃ = ZBZᵀ`,
/// `C̃ = Z⁻ᵀ(WA + C − WBW + AᵀW + W')Z⁻¹`, with the initial pair mapped to
/// `(Z(a)P, S(Z(a)⁻¹·, Z(a)⁻¹·) − W(a)(Z(a)⁻¹·, Z(a)⁻¹·))`.
pub fn apply_isomorphism(
    problem: &SymplecticProblem,
    iso: &Isomorphism,
) -> Result<SymplecticProblem, SystemError> {
    let n = problem.n();
    assert_eq!(iso.n(), n, "isomorphism dimension mismatch");
    let (a, b) = problem.interval();
    // reject Z singular anywhere on the grid before building the field
    let steps = problem.grid_steps();
    let h = (b - a) / steps as f64;
    for i in 0..=steps {
        let t = a + i as f64 * h;
        let z = iso.z(t);
        let svd = z.svd(false, false);
        if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
            return Err(SystemError::SingularZ { t });
        }
    }
    let base = problem.coefficients().clone();
    let iso_field = iso.clone();
    let field = CoefficientField::builtin("isomorphic-image", n, (a, b), move |t| {
        let s = base.eval(t);
        let z = iso_field.z(t);
        let z_inv = z.clone().try_inverse().expect("Z invertible on the grid");
        let z_inv_t = z_inv.transpose();
        let w = iso_field.w(t);
        let zp = iso_field.z_prime(t);
        let wp = iso_field.w_prime(t);
        let a_new = &z * &s.a * &z_inv - &z * &s.b * &w * &z_inv + &zp * &z_inv;
        let b_new = &z * &s.b * z.transpose();
        let c_new =
            &z_inv_t * (&w * &s.a + &s.c - &w * &s.b * &w + s.a.transpose() * &w + &wp) * &z_inv;
        (a_new, b_new, c_new)
    });
    let z_a = iso.z(a);
    let w_a = iso.w(a);
    let p_frame = problem.ell0().p().frame();
    let new_ell0 = if problem.ell0().p().dim() == 0 {
        PSPair::vertical(n)
    } else {
        let new_frame = &z_a * p_frame;
        // S̃ in the transformed frame Z(a)F equals S − FᵀW(a)F in the old coordinates
        let s_new = problem.ell0().s().matrix() - p_frame.transpose() * &w_a * p_frame;
        PSPair::new(
            crate::forms::Subspace::new(new_frame, crate::forms::DEFAULT_TOL)?,
            crate::forms::SymBilinearForm::symmetrized(s_new),
        )
        .expect("dimensions preserved")
    };
    SymplecticProblem::new(field, new_ell0, problem.grid_steps())
}

/// Stages of the Morse–Sturm normal form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorseSturmStage {
    /// Remove the `A` block only (`Z' = −ZA`, `W = 0`).
    KillA,
    /// Remove `A` and freeze `B` to `diag(−I_k, I_{n−k})`.
    ConstantB,
}

/// Transforms the problem to a Morse–Sturm system. `KillA` yields `Ã = 0`;
/// `ConstantB` additionally makes `B̃ = diag(−I_k, I_{n−k})` via a
/// congruence frame continued along the interval, then a `O(k, n−k)`-valued
/// integration that removes the induced `A` block.
pub fn to_morse_sturm(
    problem: &SymplecticProblem,
    stage: MorseSturmStage,
) -> Result<(SymplecticProblem, Isomorphism), SystemError> {
    match stage {
        MorseSturmStage::KillA => {
            let iso = kill_a_isomorphism(problem.coefficients(), problem.grid_steps())?;
            let transformed = apply_isomorphism(problem, &iso)?;
            Ok((transformed, iso))
        }
        MorseSturmStage::ConstantB => {
            let iso0 = congruence_isomorphism(problem.coefficients(), problem.grid_steps())?;
            let intermediate = apply_isomorphism(problem, &iso0)?;
            let iso1 = gauge_isomorphism(intermediate.coefficients(), problem.grid_steps())?;
            let final_problem = apply_isomorphism(&intermediate, &iso1)?;
            Ok((final_problem, Isomorphism::compose(&iso1, &iso0)))
        }
    }
}

/// Fine uniform grid with half the RK4 step, so integrated curves are
/// sampled everywhere downstream integrators evaluate them.
fn fine_times(interval: (f64, f64), grid_steps: usize) -> Vec<f64> {
    let (a, b) = interval;
    let fine = 2 * grid_steps;
    let h = (b - a) / fine as f64;
    (0..=fine).map(|i| a + i as f64 * h).collect()
}

fn interpolant_isomorphism_z(
    field: &CoefficientField,
    samples: Vec<DMatrix<f64>>,
    times: Vec<f64>,
    z_rhs: impl Fn(f64, &DMatrix<f64>, &CoefficientField) -> DMatrix<f64> + Send + Sync + 'static,
) -> Isomorphism {
    let n = field.n();
    let interval = field.interval();
    let fd_step = (times[1] - times[0]).max(1e-8);
    let interp = MonotoneCubic::new(times, samples).expect("strictly increasing fine grid");
    let interp_for_z = interp.clone();
    let field_for_zp = field.clone();
    let interp_for_zp = interp;
    let zeros = move |_t: f64| DMatrix::zeros(n, n);
    let zeros2 = zeros.clone();
    Isomorphism::new(n, interval, fd_step, move |t| interp_for_z.eval(t), zeros)
        .with_z_prime(move |t| z_rhs(t, &interp_for_zp.eval(t), &field_for_zp))
        .with_w_prime(zeros2)
}

/// `Z' = −ZA`, `Z(a) = Id`, `W = 0` — kills the `A` block exactly since the
/// derivative closure reuses the same interpolated `Z`.
fn kill_a_isomorphism(
    field: &CoefficientField,
    grid_steps: usize,
) -> Result<Isomorphism, SystemError> {
    let n = field.n();
    let times = fine_times(field.interval(), grid_steps);
    let rhs_field = field.clone();
    let f = move |t: f64, z: &DMatrix<f64>| -(z * rhs_field.eval(t).a);
    let samples = rk4_integrate(&f, DMatrix::identity(n, n), field.interval(), 2 * grid_steps);
    Ok(interpolant_isomorphism_z(field, samples, times, |t, z, fld| {
        -(z * fld.eval(t).a)
    }))
}

/// Congruence step: `Z₀ = Eᵀ` with `E(t)ᵀB(t)E(t) = diag(−I_k, I_{n−k})`,
/// built per node from a sorted eigendecomposition and continued by
/// maximal-overlap matching. `Z₀'` falls back to central differences.
fn congruence_isomorphism(
    field: &CoefficientField,
    grid_steps: usize,
) -> Result<Isomorphism, SystemError> {
    let n = field.n();
    let times = fine_times(field.interval(), grid_steps);
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(times.len());
    let mut prev_q: Option<DMatrix<f64>> = None;
    let mut k_ref: Option<usize> = None;
    for &t in &times {
        let b = field.eval(t).b;
        let (mut vals, mut vecs) = sorted_symmetric_eigen(&b);
        let k = vals.iter().filter(|&&v| v < 0.0).count();
        match k_ref {
            None => k_ref = Some(k),
            Some(kr) if kr != k => {
                return Err(SystemError::ContinuationBreakdown { t, overlap: 0.0 })
            }
            _ => {}
        }
        if vals.iter().any(|v| v.abs() < 1e-14) {
            return Err(SystemError::SingularB { t });
        }
        if let Some(prev) = &prev_q {
            match_columns(prev, &mut vecs, &mut vals, k).map_err(|overlap| {
                SystemError::ContinuationBreakdown { t, overlap }
            })?;
        }
        prev_q = Some(vecs.clone());
        let mut e = vecs;
        for j in 0..n {
            let scale = 1.0 / vals[j].abs().sqrt();
            e.column_mut(j).scale_mut(scale);
        }
        frames.push(e.transpose());
    }
    let n_ = n;
    let interval = field.interval();
    let fd_step = times[1] - times[0];
    let interp = MonotoneCubic::new(times, frames).expect("fine grid");
    let interp_z = interp.clone();
    let interp_zp = interp;
    let zeros = move |_t: f64| DMatrix::zeros(n_, n_);
    let zeros2 = zeros.clone();
    let (lo, hi) = interval;
    Ok(
        Isomorphism::new(n, interval, fd_step, move |t| interp_z.eval(t), zeros)
            .with_z_prime(move |t| {
                differentiate(|s| interp_zp.eval(s), t, fd_step, lo, hi)
            })
            .with_w_prime(zeros2),
    )
}

/// Second stage on a system whose `B ≡ G = diag(±1)`: with
/// `W = ½(GA + AᵀG)` and `Z' = Z(GW − A)` the transformed `A` vanishes and
/// `Z` stays in `O(k, n−k)`, so `B` is preserved.
fn gauge_isomorphism(
    field: &CoefficientField,
    grid_steps: usize,
) -> Result<Isomorphism, SystemError> {
    let n = field.n();
    let times = fine_times(field.interval(), grid_steps);
    let g = field.eval(field.interval().0).b; // constant diag(±1) after stage one
    let w_of = {
        let field = field.clone();
        let g = g.clone();
        move |t: f64| {
            let a = field.eval(t).a;
            (&g * &a + a.transpose() * &g) * 0.5
        }
    };
    let rhs = {
        let field = field.clone();
        let g = g.clone();
        let w_of = w_of.clone();
        move |t: f64, z: &DMatrix<f64>| {
            let a = field.eval(t).a;
            z * (&g * w_of(t) - a)
        }
    };
    let samples = rk4_integrate(&rhs, DMatrix::identity(n, n), field.interval(), 2 * grid_steps);
    let interval = field.interval();
    let fd_step = times[1] - times[0];
    let interp = MonotoneCubic::new(times, samples).expect("fine grid");
    let interp_z = interp.clone();
    let interp_zp = interp;
    let rhs_for_prime = rhs.clone();
    let w_for_iso = w_of.clone();
    let w_for_prime = w_of;
    let (lo, hi) = interval;
    Ok(Isomorphism::new(
        n,
        interval,
        fd_step,
        move |t| interp_z.eval(t),
        move |t| w_for_iso(t),
    )
    .with_z_prime(move |t| rhs_for_prime(t, &interp_zp.eval(t)))
    .with_w_prime(move |t| differentiate(|s| w_for_prime(s), t, fd_step, lo, hi)))
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending.
fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (vals, DMatrix::from_columns(&cols))
}

/// Permutes/flips the columns of `vecs` (and `vals`) within each sign
/// group to maximize overlap with the previous node's columns. Returns the
/// worst matched overlap on failure.
fn match_columns(
    prev: &DMatrix<f64>,
    vecs: &mut DMatrix<f64>,
    vals: &mut [f64],
    k: usize,
) -> Result<(), f64> {
    let n = prev.ncols();
    let overlaps = prev.transpose() * vecs.clone();
    let mut new_cols: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut new_vals = vec![0.0; n];
    for (lo, hi) in [(0usize, k), (k, n)] {
        let mut used = vec![false; n];
        for _ in lo..hi {
            // best remaining (previous column, current column) pair in the group
            let mut best = (0usize, 0usize, -1.0f64);
            for i in lo..hi {
                if new_cols[i].is_some() {
                    continue;
                }
                for j in lo..hi {
                    if used[j] {
                        continue;
                    }
                    let o = overlaps[(i, j)].abs();
                    if o > best.2 {
                        best = (i, j, o);
                    }
                }
            }
            let (i, j, o) = best;
            if o < 0.5 {
                return Err(o);
            }
            used[j] = true;
            let mut col = vecs.column(j).into_owned();
            if overlaps[(i, j)] < 0.0 {
                col = -col;
            }
            new_cols[i] = Some(col);
            new_vals[i] = vals[j];
        }
    }
    for (j, col) in new_cols.into_iter().enumerate() {
        vecs.set_column(j, &col.expect("all columns assigned"));
        vals[j] = new_vals[j];
    }
    Ok(())
}
