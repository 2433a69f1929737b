//! Nonconvex alternating-minimization baseline.
//!
//! Fits `W ≈ R̄ Σ c_i B_i` with a single truncated rotation `R̄` (2×3,
//! orthonormal rows) by alternating an ℓ1-regularized least-squares update of
//! `c` with a descent on the Stiefel manifold for `R̄`:
//!
//! ```text
//! min_{c, R̄}  ½‖W − R̄ Σ c_i B_i‖_F² + λ‖c‖₁   s.t.  R̄R̄ᵀ = I₂
//! ```
//!
//! The result depends on the starting point.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix2xX, Matrix3, Matrix3xX, RowVector3};

use crate::convex::SolveResult;
use crate::model::{LandmarkSet2D, Shape3D, ShapeDictionary};
use crate::prox::SingularDecomposition;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AltMinOptions {
    pub lambda: f64,
    /// Outer alternations.
    pub max_iterations: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    pub coeff_max_iterations: usize,
    /// Duality-gap target of the coefficient subproblem.
    pub coeff_gap_tolerance: f64,
    pub rotation_max_iterations: usize,
    pub rotation_gradient_tolerance: f64,
}

impl Default for AltMinOptions {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            max_iterations: 200,
            tolerance: 1e-6,
            coeff_max_iterations: 20_000,
            coeff_gap_tolerance: 1e-8,
            rotation_max_iterations: 100,
            rotation_gradient_tolerance: 1e-8,
        }
    }
}

/// Starting point of the alternation.
#[derive(Clone, Debug)]
pub enum AltMinInit<'a> {
    /// Start from the dictionary mean, `c_i = 1/k`.
    MeanShape,
    /// Start from the least-squares coefficients of a given mean shape, such
    /// as the mean of the training set.
    Shape(&'a Shape3D),
    /// Start from a convex solution: its coefficients and the rotation of its
    /// dominant block.
    WarmStart(&'a SolveResult),
    /// Explicit coefficients and truncated rotation.
    Explicit { coeffs: Vec<f64>, rbar: Matrix2x3<f64> },
}

impl AltMinInit<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            AltMinInit::MeanShape => "mean_shape",
            AltMinInit::Shape(_) => "shape",
            AltMinInit::WarmStart(_) => "convex",
            AltMinInit::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AltMinState {
    pub coeffs: Vec<f64>,
    pub rbar: Matrix2x3<f64>,
    /// Objective after initialization and after every outer alternation.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl AltMinState {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::INFINITY)
    }

    /// The 3×3 rotation completing `R̄` with `r₁ × r₂`.
    pub fn rotation(&self) -> Matrix3<f64> {
        complete_rotation(&self.rbar)
    }
}

pub fn complete_rotation(rbar: &Matrix2x3<f64>) -> Matrix3<f64> {
    let r1: RowVector3<f64> = rbar.row(0).into_owned();
    let r2: RowVector3<f64> = rbar.row(1).into_owned();
    Matrix3::from_rows(&[r1, r2, r1.cross(&r2)])
}

/// Nearest matrix with orthonormal rows (`U Vᵀ`).
fn polar_rows(m: &Matrix2x3<f64>) -> Matrix2x3<f64> {
    Matrix2x3::from_column_slice(SingularDecomposition::of(m).polar().as_slice())
}

/// Landmarks and bases restricted to visible columns, both centered there.
struct Problem {
    w: Matrix2xX<f64>,
    bases: Vec<Matrix3xX<f64>>,
}

impl Problem {
    fn new(w: &LandmarkSet2D, dict: &ShapeDictionary) -> Result<Self> {
        if w.len() != dict.num_landmarks() {
            return Err(Error::LandmarkCountMismatch {
                expected: dict.num_landmarks(),
                found: w.len(),
            });
        }
        let w = w.centralize()?;
        let visible = w.visible_indices();
        let bases = dict
            .bases()
            .iter()
            .map(|b| {
                let mut sel = b.points().select_columns(&visible);
                let mean = sel.column_mean();
                for mut col in sel.column_iter_mut() {
                    col -= mean;
                }
                sel
            })
            .collect();
        Ok(Self {
            w: w.visible_points(),
            bases,
        })
    }

    fn composite(&self, coeffs: &[f64]) -> Matrix3xX<f64> {
        let mut acc = Matrix3xX::zeros(self.w.ncols());
        for (b, &c) in self.bases.iter().zip(coeffs) {
            if c != 0.0 {
                acc += b * c;
            }
        }
        acc
    }

    fn objective(&self, coeffs: &[f64], rbar: &Matrix2x3<f64>, lambda: f64) -> f64 {
        let r = &self.w - rbar * self.composite(coeffs);
        0.5 * r.norm_squared() + lambda * coeffs.iter().map(|c| c.abs()).sum::<f64>()
    }
}

/// Result of the coefficient subproblem.
#[derive(Clone, Debug)]
pub struct CoeffUpdate {
    pub coeffs: Vec<f64>,
    pub duality_gap: f64,
    pub iterations: usize,
}

/// `min_c ½‖W − R̄Σc_iB_i‖_F² + λ‖c‖₁` by proximal gradient with backtracking,
/// warm-started at `coeffs`, until the duality gap drops below the target.
pub fn update_coeffs_l1(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    rbar: &Matrix2x3<f64>,
    coeffs: &[f64],
    lambda: f64,
    opts: &AltMinOptions,
) -> Result<CoeffUpdate> {
    let problem = Problem::new(w, dict)?;
    Ok(problem_update_coeffs(&problem, rbar, coeffs, lambda, opts))
}

fn problem_update_coeffs(
    problem: &Problem,
    rbar: &Matrix2x3<f64>,
    coeffs: &[f64],
    lambda: f64,
    opts: &AltMinOptions,
) -> CoeffUpdate {
    // Columns a_i = vec(R̄ B_i); everything below works off the Gram matrix.
    let k = problem.bases.len();
    let cols: Vec<Matrix2xX<f64>> = problem.bases.iter().map(|b| rbar * b).collect();
    let gram = DMatrix::from_fn(k, k, |i, j| cols[i].dot(&cols[j]));
    let rhs = DVector::from_fn(k, |i, _| cols[i].dot(&problem.w));
    let ww = problem.w.norm_squared();
    lasso_gram(&gram, &rhs, ww, coeffs, lambda, opts.coeff_gap_tolerance, opts.coeff_max_iterations)
}

/// Lasso `½‖w − Ac‖² + λ‖c‖₁` given `G = AᵀA`, `b = Aᵀw` and `‖w‖²`.
fn lasso_gram(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    ww: f64,
    start: &[f64],
    lambda: f64,
    gap_tol: f64,
    max_iter: usize,
) -> CoeffUpdate {
    let k = rhs.len();
    let primal = |c: &DVector<f64>| {
        let quad = c.dot(&(gram * c));
        0.5 * (quad - 2.0 * rhs.dot(c) + ww).max(0.0) + lambda * c.lp_norm(1)
    };
    // Dual point θ = s·r with s scaling r into the feasible set ‖Aᵀθ‖∞ ≤ λ.
    let gap = |c: &DVector<f64>| {
        let gc = gram * c;
        let rr = (c.dot(&gc) - 2.0 * rhs.dot(c) + ww).max(0.0);
        let corr = rhs - &gc;
        let linf = corr.amax();
        let s = if linf > lambda { lambda / linf } else { 1.0 };
        let wr = ww - rhs.dot(c);
        let dual = 0.5 * ww - 0.5 * (ww - 2.0 * s * wr + s * s * rr);
        0.5 * rr + lambda * c.lp_norm(1) - dual
    };
    let soft = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);

    let mut c = DVector::from_column_slice(start);
    if c.len() != k {
        c = DVector::zeros(k);
    }
    let mut step = {
        let l = gram.symmetric_eigenvalues().max();
        if l > 0.0 {
            1.0 / l
        } else {
            1.0
        }
    };
    let mut f = primal(&c);
    let mut iterations = 0;
    let mut g = gap(&c);
    while iterations < max_iter && g > gap_tol * f.max(1.0) {
        iterations += 1;
        let grad = gram * &c - rhs;
        let smooth = |x: &DVector<f64>| 0.5 * x.dot(&(gram * x)) - rhs.dot(x);
        let f_smooth = smooth(&c);
        // Backtracking on the quadratic upper bound.
        let next = loop {
            let cand = DVector::from_fn(k, |i, _| soft(c[i] - step * grad[i], step * lambda));
            let d = &cand - &c;
            let bound = f_smooth + grad.dot(&d) + 0.5 / step * d.norm_squared();
            if smooth(&cand) <= bound + 1e-15 * f_smooth.abs().max(1.0) || step < 1e-300 {
                break cand;
            }
            step *= 0.5;
        };
        let f_next = primal(&next);
        if f_next > f {
            // Rounding only; stop rather than accept an ascent step.
            break;
        }
        c = next;
        f = f_next;
        g = gap(&c);
        step *= 1.1;
    }
    CoeffUpdate {
        coeffs: c.iter().copied().collect(),
        duality_gap: g,
        iterations,
    }
}

/// Result of the rotation subproblem.
#[derive(Clone, Debug)]
pub struct RotationUpdate {
    pub rbar: Matrix2x3<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Riemannian gradient of `½‖W − R̄S‖²` at `R̄` on `{R̄ : R̄R̄ᵀ = I₂}`.
pub fn stiefel_gradient(w: &Matrix2xX<f64>, s: &Matrix3xX<f64>, rbar: &Matrix2x3<f64>) -> Matrix2x3<f64> {
    let egrad: Matrix2x3<f64> = -(w - rbar * s) * s.transpose();
    let sym: Matrix2<f64> = {
        let a = egrad * rbar.transpose();
        (a + a.transpose()) * 0.5
    };
    egrad - sym * rbar
}

/// Projected gradient with polar retraction and Armijo backtracking on
/// `f(R̄) = ½‖W − R̄S‖_F²`, `S = Σc_iB_i`.
///
/// A zero composite shape leaves `R̄` unchanged.
pub fn update_rotation_stiefel(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    coeffs: &[f64],
    rbar: &Matrix2x3<f64>,
    opts: &AltMinOptions,
) -> Result<RotationUpdate> {
    if coeffs.len() != dict.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} bases",
            coeffs.len(),
            dict.len()
        )));
    }
    let problem = Problem::new(w, dict)?;
    Ok(problem_update_rotation(&problem, coeffs, rbar, opts))
}

fn problem_update_rotation(
    problem: &Problem,
    coeffs: &[f64],
    rbar: &Matrix2x3<f64>,
    opts: &AltMinOptions,
) -> RotationUpdate {
    let s = problem.composite(coeffs);
    let w = &problem.w;
    let ss = (&s * s.transpose()).norm();
    let mut rbar = polar_rows(rbar);
    let mut grad = stiefel_gradient(w, &s, &rbar);
    if ss == 0.0 {
        return RotationUpdate {
            rbar,
            gradient_norm: grad.norm(),
            iterations: 0,
        };
    }
    let f = |r: &Matrix2x3<f64>| 0.5 * (w - r * &s).norm_squared();
    let mut fx = f(&rbar);
    let mut step = 1.0 / ss;
    let mut iterations = 0;
    while iterations < opts.rotation_max_iterations && grad.norm() >= opts.rotation_gradient_tolerance {
        iterations += 1;
        let gg = grad.norm_squared();
        let mut accepted = None;
        for _ in 0..60 {
            let cand = polar_rows(&(rbar - grad * step));
            let fc = f(&cand);
            if fc <= fx - 1e-4 * step * gg {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        rbar = cand;
        fx = fc;
        grad = stiefel_gradient(w, &s, &rbar);
        step *= 2.0;
    }
    RotationUpdate {
        gradient_norm: grad.norm(),
        rbar,
        iterations,
    }
}

/// Alternates coefficient and rotation updates from `init`. Returns a local
/// minimizer and the shape `R · Σc_iB_i` with `R` the completed rotation.
pub fn solve_altmin(
    w: &LandmarkSet2D,
    dict: &ShapeDictionary,
    init: &AltMinInit<'_>,
    opts: &AltMinOptions,
) -> Result<(AltMinState, Shape3D)> {
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {}", opts.lambda)));
    }
    let problem = Problem::new(w, dict)?;
    let k = dict.len();
    let (mut coeffs, mut rbar, rotation_first) = match init {
        AltMinInit::MeanShape => {
            let coeffs = vec![1.0 / k as f64; k];
            let rbar = initial_rotation(&problem, &coeffs);
            (coeffs, rbar, true)
        }
        AltMinInit::Shape(mean) => {
            if mean.len() != dict.num_landmarks() {
                return Err(Error::LandmarkCountMismatch {
                    expected: dict.num_landmarks(),
                    found: mean.len(),
                });
            }
            let coeffs = least_squares_coeffs(dict, mean);
            let rbar = initial_rotation(&problem, &coeffs);
            (coeffs, rbar, true)
        }
        AltMinInit::WarmStart(res) => {
            if res.coeffs.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} coefficients for {} bases",
                    res.coeffs.len(),
                    k
                )));
            }
            let dominant = res
                .coeffs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let rbar = res.rotations[dominant].fixed_rows::<2>(0).into_owned();
            (res.coeffs.clone(), rbar, false)
        }
        AltMinInit::Explicit { coeffs, rbar } => {
            if coeffs.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "{} initial coefficients for {} bases",
                    coeffs.len(),
                    k
                )));
            }
            (coeffs.clone(), polar_rows(rbar), false)
        }
    };

    let mut history = vec![problem.objective(&coeffs, &rbar, opts.lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let prev = *history.last().unwrap();
        let (c_new, r_new) = if rotation_first {
            let r = problem_update_rotation(&problem, &coeffs, &rbar, opts).rbar;
            let c = problem_update_coeffs(&problem, &r, &coeffs, opts.lambda, opts).coeffs;
            (c, r)
        } else {
            let c = problem_update_coeffs(&problem, &rbar, &coeffs, opts.lambda, opts).coeffs;
            let r = problem_update_rotation(&problem, &c, &rbar, opts).rbar;
            (c, r)
        };
        let obj = problem.objective(&c_new, &r_new, opts.lambda);
        if obj > prev {
            converged = true;
            break;
        }
        coeffs = c_new;
        rbar = r_new;
        history.push(obj);
        if prev - obj <= opts.tolerance * prev.abs() || prev - obj <= 1e-15 {
            converged = true;
            break;
        }
    }

    let state = AltMinState {
        coeffs,
        rbar,
        objective_history: history,
        iterations,
        converged,
    };
    let mut composite = Matrix3xX::zeros(dict.num_landmarks());
    for (b, &c) in dict.bases().iter().zip(&state.coeffs) {
        composite += b.points() * c;
    }
    let shape = Shape3D::new(state.rotation() * composite)?;
    Ok((state, shape))
}

/// Coefficients of the least-squares projection of `shape` onto the span of
/// the bases.
fn least_squares_coeffs(dict: &ShapeDictionary, shape: &Shape3D) -> Vec<f64> {
    let k = dict.len();
    let target = shape.centralize();
    let a = DMatrix::from_fn(3 * dict.num_landmarks(), k, |r, i| dict.bases()[i].points().as_slice()[r]);
    let b = DVector::from_column_slice(target.points().as_slice());
    let svd = SingularDecomposition::new(&a);
    let cutoff = 1e-12 * svd.singulars.max();
    let mut coords = svd.left.transpose() * b;
    for (c, &s) in coords.iter_mut().zip(svd.singulars.iter()) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    (svd.right * coords).iter().copied().collect()
}

/// Starting rotation for a known composite shape: the polar factor of the
/// unconstrained least-squares fit `W ≈ A·S`.
fn initial_rotation(problem: &Problem, coeffs: &[f64]) -> Matrix2x3<f64> {
    let s = problem.composite(coeffs);
    let sst: Matrix3<f64> = &s * s.transpose();
    let a: Matrix2x3<f64> = &problem.w * s.transpose() * sst.pseudo_inverse(1e-12).unwrap_or(Matrix3::zeros());
    if a.norm() == 0.0 {
        Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    } else {
        polar_rows(&a)
    }
}
