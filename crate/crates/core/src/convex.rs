//! ADMM solver for the spectral-norm-regularized shape fitting problem.
//!
//! With the per-basis motion blocks `M_i` (2×3) concatenated as column
//! triplets of `M̃` (2×3k) and the bases stacked as row triplets of `B̃`
//! (3k×p), the landmarks satisfy `W = M̃ B̃`. Two programs are solved:
//!
//! * penalized: `min ½‖W − M̃B̃‖_F² + λ Σ‖M_i‖₂`
//! * noiseless: `min Σ‖M_i‖₂  s.t.  W = M̃B̃`
//!
//! Both split `M̃ = Z` and alternate a blockwise spectral prox on `M̃`, a
//! closed-form quadratic (or affine projection) step on `Z`, and a dual
//! ascent step on `Y`.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix2xX, Matrix3, RowVector3};

use crate::model::{compose_shape, visible_stacked_bases, LandmarkSet2D, Shape3D, ShapeDictionary};
use crate::prox::{prox_spectral_2x3, spectral_norm_2x3, svd_2x3_left, SingularDecomposition};
use crate::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero
/// when pseudo-inverting the stacked bases.
const PINV_RANK_TOL: f64 = 1e-10;
/// Relative residual above which `W` is declared outside the row space of `B̃`.
const FEASIBILITY_TOL: f64 = 1e-8;
/// Blocks whose spectral norm is below this fraction of the largest are inactive.
const INACTIVE_REL: f64 = 1e-6;
const INACTIVE_ABS: f64 = 1e-12;
/// Residual-balancing ratio and the minimum spacing between μ changes.
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_PERIOD: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Weight of the spectral-norm penalty (ignored by the noiseless solver).
    pub lambda: f64,
    pub mu_init: f64,
    /// Threshold on both scaled residuals.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Residual balancing of the ADMM step size.
    pub adaptive_mu: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            mu_init: 1.0,
            tolerance: 1e-4,
            max_iterations: 500,
            adaptive_mu: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self, needs_lambda: bool) -> Result<()> {
        if needs_lambda && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.mu_init > 0.0 && self.mu_init.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu_init)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// One 2×3 block `M_i = c_i R̄_i` of the stacked motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionMatrix(pub Matrix2x3<f64>);

impl MotionMatrix {
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm_2x3(&self.0)
    }

    /// `(σ₁, σ₂)`, nonincreasing.
    pub fn singular_values(&self) -> (f64, f64) {
        let (s, _) = svd_2x3_left(&self.0);
        (s[0], s[1])
    }
}

/// The `k` motion blocks, equivalently a 2×3k matrix of column triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedMotion {
    blocks: Vec<MotionMatrix>,
}

impl StackedMotion {
    pub fn new(blocks: Vec<MotionMatrix>) -> Self {
        Self { blocks }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            blocks: vec![MotionMatrix(Matrix2x3::zeros()); k],
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != 2 || m.ncols() % 3 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "stacked motion must be 2×3k, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let blocks = (0..m.ncols() / 3)
            .map(|i| MotionMatrix(m.fixed_view::<2, 3>(0, 3 * i).into_owned()))
            .collect();
        Ok(Self { blocks })
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(2, 3 * self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            out.fixed_view_mut::<2, 3>(0, 3 * i).copy_from(&b.0);
        }
        out
    }

    pub fn blocks(&self) -> &[MotionMatrix] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `Σ‖M_i‖₂`.
    pub fn spectral_penalty(&self) -> f64 {
        self.blocks.iter().map(MotionMatrix::spectral_norm).sum()
    }
}

/// ADMM iterates. `y` is the unscaled dual variable.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub m_tilde: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub mu: f64,
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SolverState {
    /// All iterates zero.
    pub fn new(k: usize, mu: f64) -> Self {
        Self {
            m_tilde: DMatrix::zeros(2, 3 * k),
            z: DMatrix::zeros(2, 3 * k),
            y: DMatrix::zeros(2, 3 * k),
            mu,
            iteration: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.m_tilde.ncols() / 3
    }
}

/// How the data term enters the `Z` step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFit {
    /// `½‖W − ZB̃‖_F²`
    Penalized,
    /// Indicator of `{Z : ZB̃ = W}`
    Constrained,
}

/// Blockwise spectral prox: `M_i = prox_{(λ/μ)‖·‖₂}(Q_i)` with `Q = Z − Y/μ`.
pub fn admm_update_m(state: &SolverState, lambda: f64) -> StackedMotion {
    let q = &state.z - &state.y / state.mu;
    let threshold = lambda / state.mu;
    let blocks = (0..state.num_blocks())
        .map(|i| {
            let qi: Matrix2x3<f64> = q.fixed_view::<2, 3>(0, 3 * i).into_owned();
            MotionMatrix(prox_spectral_2x3(&qi, threshold))
        })
        .collect();
    StackedMotion { blocks }
}

/// The `Z` step for the visible columns of `w` and `b_tilde`.
///
/// Penalized: `Z = (W B̃ᵀ + μM̃ + Y)(B̃B̃ᵀ + μI)⁻¹`.
/// Constrained: Frobenius projection of `M̃ + Y/μ` onto `{Z : ZB̃ = W}`.
pub fn admm_update_z(
    state: &SolverState,
    w: &LandmarkSet2D,
    b_tilde: &DMatrix<f64>,
    mode: DataFit,
) -> Result<DMatrix<f64>> {
    if b_tilde.ncols() != w.len() || b_tilde.nrows() != state.m_tilde.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "stacked bases are {}×{}, expected {}×{}",
            b_tilde.nrows(),
            b_tilde.ncols(),
            state.m_tilde.ncols(),
            w.len()
        )));
    }
    let visible = w.visible_indices();
    let step = ZStep::new(&w.visible_points(), &b_tilde.select_columns(&visible), mode)?;
    Ok(step.apply(&state.m_tilde, &state.y, state.mu))
}

/// Precomputed factorization behind the `Z` step. Built once per solve from
/// the thin SVD `B̃ = U Σ Vᵀ`, so that changing μ costs nothing.
struct ZStep {
    mode: DataFit,
    /// `U` restricted to the numerical rank (constrained) or all of it.
    left: DMatrix<f64>,
    /// Σ² per column of `left`.
    gram_eigs: DVector<f64>,
    /// Penalized: `W B̃ᵀ`. Constrained: `W B̃⁺`, the minimum-norm solution.
    offset: DMatrix<f64>,
}

impl ZStep {
    fn new(w: &Matrix2xX<f64>, b: &DMatrix<f64>, mode: DataFit) -> Result<Self> {
        let svd = SingularDecomposition::new(b);
        let u = svd.left;
        let sigma = svd.singulars;
        let w_dyn = DMatrix::from_column_slice(2, w.ncols(), w.as_slice());
        match mode {
            DataFit::Penalized => Ok(Self {
                mode,
                gram_eigs: sigma.map(|s| s * s),
                left: u,
                offset: &w_dyn * b.transpose(),
            }),
            DataFit::Constrained => {
                let smax = sigma.max();
                let rank = sigma.iter().filter(|&&s| s > PINV_RANK_TOL * smax).count();
                let u_r = u.columns(0, rank).into_owned();
                let v_r = svd.right.columns(0, rank).into_owned();
                let w_norm = w_dyn.norm();
                let coords = &w_dyn * &v_r;
                let residual = (&w_dyn - &coords * v_r.transpose()).norm();
                let rel = residual / w_norm.max(1.0);
                if rel > FEASIBILITY_TOL {
                    return Err(Error::InfeasibleConstraint(rel));
                }
                let mut scaled = coords;
                for (mut col, s) in scaled.column_iter_mut().zip(sigma.iter()) {
                    col /= *s;
                }
                Ok(Self {
                    mode,
                    gram_eigs: sigma.rows(0, rank).map(|s| s * s),
                    offset: scaled * u_r.transpose(),
                    left: u_r,
                })
            }
        }
    }

    fn apply(&self, m: &DMatrix<f64>, y: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        match self.mode {
            DataFit::Penalized => {
                // (G + μI)⁻¹ = (I − U diag(σ²/(σ²+μ)) Uᵀ) / μ
                let rhs = &self.offset + m * mu + y;
                let mut coords = &rhs * &self.left;
                for (mut col, e) in coords.column_iter_mut().zip(self.gram_eigs.iter()) {
                    col *= *e / (*e + mu);
                }
                (rhs - coords * self.left.transpose()) / mu
            }
            DataFit::Constrained => {
                let p = m + y / mu;
                let coords = &p * &self.left;
                p - coords * self.left.transpose() + &self.offset
            }
        }
    }
}

/// `(c, R)` recovered from one motion block.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredPose {
    pub coeff: f64,
    pub rotation: Matrix3<f64>,
    pub active: bool,
}

/// `c = ‖M‖₂`, `R̄` the nearest matrix with orthonormal rows to `M/c` (its
/// polar factor), third row `r₁ × r₂`.
///
/// Blocks with `‖M‖₂ ≤ threshold` are inactive: `c = 0`, `R = I`.
pub fn recover_pose(m: &MotionMatrix, threshold: f64) -> RecoveredPose {
    let svd = SingularDecomposition::of(&m.0);
    let coeff = svd.singulars[0];
    if coeff <= threshold || coeff == 0.0 {
        return RecoveredPose {
            coeff: 0.0,
            rotation: Matrix3::identity(),
            active: false,
        };
    }
    let rbar = Matrix2x3::from_column_slice(svd.polar().as_slice());
    let r1: RowVector3<f64> = rbar.row(0).into_owned();
    let r2: RowVector3<f64> = rbar.row(1).into_owned();
    let r3 = r1.cross(&r2);
    RecoveredPose {
        coeff,
        rotation: Matrix3::from_rows(&[r1, r2, r3]),
        active: true,
    }
}

/// `max(1e-6 · max_j ‖M_j‖₂, 1e-12)`.
pub fn inactive_threshold(motion: &StackedMotion) -> f64 {
    let largest = motion
        .blocks()
        .iter()
        .map(MotionMatrix::spectral_norm)
        .fold(0.0, f64::max);
    (INACTIVE_REL * largest).max(INACTIVE_ABS)
}

pub fn recover_all(motion: &StackedMotion) -> Vec<RecoveredPose> {
    let threshold = inactive_threshold(motion);
    motion.blocks().iter().map(|m| recover_pose(m, threshold)).collect()
}

/// `S = Σ c_i R_i B_i` over all `p` landmarks, including ones that were not
/// visible in the image.
pub fn reconstruct_shape(motion: &StackedMotion, dict: &ShapeDictionary) -> Result<Shape3D> {
    let poses = recover_all(motion);
    let coeffs: Vec<f64> = poses.iter().map(|p| p.coeff).collect();
    let rotations: Vec<Matrix3<f64>> = poses.iter().map(|p| p.rotation).collect();
    compose_shape(dict, &coeffs, &rotations)
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub motion: StackedMotion,
    /// `c_i = ‖M_i‖₂`, zero for inactive blocks.
    pub coeffs: Vec<f64>,
    pub rotations: Vec<Matrix3<f64>>,
    pub active: Vec<bool>,
    pub shape: Shape3D,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `σ₁/σ₂ − 1` per active block; `None` for inactive ones.
    pub tightness: Vec<Option<f64>>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub final_mu: f64,
}

impl SolveResult {
    pub fn max_tightness(&self) -> f64 {
        self.tightness.iter().flatten().fold(0.0, |m, &t| m.max(t))
    }
}

/// Penalized fit `min ½‖W_vis − Σ M_iB_i‖_F² + λΣ‖M_i‖₂` over visible landmarks.
///
/// Hitting `max_iterations` is reported through `converged`, not as an error.
pub fn solve_noisy(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate(true)?;
    solve(w, dict, opts, DataFit::Penalized)
}

/// Exact fit `min Σ‖M_i‖₂ s.t. W_vis = Σ M_iB_i`.
pub fn solve_noiseless(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate(false)?;
    solve(w, dict, opts, DataFit::Constrained)
}

/// Objective of the penalized program at `motion`, over visible landmarks.
pub fn penalized_objective(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    motion: &StackedMotion,
    lambda: f64,
) -> Result<f64> {
    check_dims(w, dict)?;
    let visible = w.visible_indices();
    if visible.is_empty() {
        return Err(Error::NoVisibleLandmarks);
    }
    let w = w.centralize()?.visible_points();
    let b = visible_stacked_bases(dict, &visible);
    let fit = fit_residual(&w, &b, &motion.to_matrix());
    Ok(0.5 * fit * fit + lambda * motion.spectral_penalty())
}

fn check_dims(w: &LandmarkSet2D, dict: &ShapeDictionary) -> Result<()> {
    if w.len() != dict.num_landmarks() {
        return Err(Error::LandmarkCountMismatch {
            expected: dict.num_landmarks(),
            found: w.len(),
        });
    }
    Ok(())
}

fn fit_residual(w: &Matrix2xX<f64>, b: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let pred = m * b;
    w.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

fn solve(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    opts: &SolverOptions,
    mode: DataFit,
) -> Result<SolveResult> {
    check_dims(w, dict)?;
    for (i, b) in dict.bases().iter().enumerate() {
        if !b.is_centered(1e-9) {
            return Err(Error::UncenteredBasis(i));
        }
    }
    let w = w.centralize()?;
    let visible = w.visible_indices();
    let w_vis = w.visible_points();
    let b_vis = visible_stacked_bases(dict, &visible);
    let z_step = ZStep::new(&w_vis, &b_vis, mode)?;
    let penalty = match mode {
        DataFit::Penalized => opts.lambda,
        DataFit::Constrained => 1.0,
    };

    let mut state = SolverState::new(dict.len(), opts.mu_init);
    let mut motion = StackedMotion::zeros(dict.len());
    let mut converged = false;
    let mut last_mu_change = 0;
    while state.iteration < opts.max_iterations {
        state.iteration += 1;
        motion = admm_update_m(&state, penalty);
        state.m_tilde = motion.to_matrix();
        let z_new = z_step.apply(&state.m_tilde, &state.y, state.mu);
        let dz = (&z_new - &state.z).norm();
        state.z = z_new;
        state.y += (&state.m_tilde - &state.z) * state.mu;

        state.primal_residual = (&state.m_tilde - &state.z).norm() / state.m_tilde.norm().max(1.0);
        state.dual_residual = state.mu * dz / state.y.norm().max(1.0);
        if state.primal_residual < opts.tolerance && state.dual_residual < opts.tolerance {
            converged = true;
            break;
        }
        if opts.adaptive_mu && state.iteration - last_mu_change >= BALANCE_PERIOD {
            if state.primal_residual > BALANCE_RATIO * state.dual_residual {
                state.mu *= 2.0;
                last_mu_change = state.iteration;
            } else if state.dual_residual > BALANCE_RATIO * state.primal_residual {
                state.mu /= 2.0;
                last_mu_change = state.iteration;
            }
        }
    }

    let objective = match mode {
        DataFit::Penalized => {
            let fit = fit_residual(&w_vis, &b_vis, &state.m_tilde);
            0.5 * fit * fit + opts.lambda * motion.spectral_penalty()
        }
        DataFit::Constrained => motion.spectral_penalty(),
    };
    let poses = recover_all(&motion);
    let coeffs: Vec<f64> = poses.iter().map(|p| p.coeff).collect();
    let rotations: Vec<Matrix3<f64>> = poses.iter().map(|p| p.rotation).collect();
    let shape = compose_shape(dict, &coeffs, &rotations)?;
    let tightness = motion
        .blocks()
        .iter()
        .zip(&poses)
        .map(|(m, pose)| {
            pose.active.then(|| {
                let (s1, s2) = m.singular_values();
                if s2 > 0.0 {
                    s1 / s2 - 1.0
                } else {
                    f64::INFINITY
                }
            })
        })
        .collect();
    Ok(SolveResult {
        coeffs,
        active: poses.iter().map(|p| p.active).collect(),
        rotations,
        shape,
        objective,
        iterations: state.iteration,
        converged,
        tightness,
        primal_residual: state.primal_residual,
        dual_residual: state.dual_residual,
        final_mu: state.mu,
        motion,
    })
}
