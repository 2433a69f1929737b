//! Sparse nonnegative shape-dictionary learning.
//!
//! ```text
//! min_{B, C}  Σ_j ½‖S_j − Σ_i C_ij B_i‖_F² + β Σ_ij C_ij
//! s.t.        C_ij ≥ 0,  ‖B_i‖_F ≤ 1
//! ```
//!
//! Solved locally by alternating a nonnegative-lasso update of `C` (monotone
//! accelerated projected gradient) with exact block-coordinate updates of each
//! `B_i` (a gradient step with the block's own curvature followed by the
//! Frobenius-ball projection).

use nalgebra::{DMatrix, DVector, Matrix3xX};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{procrustes_align, Shape3D, ShapeDictionary};
use crate::{Error, Result};

/// Centers every shape and aligns it to the first one by a similarity
/// transform. The first shape is only centered.
pub fn align_training_set(shapes: &[Shape3D]) -> Result<Vec<Shape3D>> {
    let Some(first) = shapes.first() else {
        return Err(Error::InvalidParameter("empty training set".into()));
    };
    let reference = first.centralize();
    if reference.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateShape);
    }
    let mut out = Vec::with_capacity(shapes.len());
    out.push(reference.clone());
    for s in &shapes[1..] {
        let aligned = procrustes_align(s, &reference)?.aligned;
        out.push(aligned.centralize());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DictLearnOptions {
    /// Outer alternations.
    pub max_iterations: usize,
    /// Relative objective decrease that ends the alternation.
    pub tolerance: f64,
    /// Seeds the choice of initial atoms.
    pub seed: u64,
    pub coeff_max_iterations: usize,
    /// Target for the projected-gradient residual of the `C` subproblem.
    pub kkt_tolerance: f64,
    pub basis_max_sweeps: usize,
}

impl Default for DictLearnOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            seed: 0,
            coeff_max_iterations: 5000,
            kkt_tolerance: 1e-8,
            basis_max_sweeps: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnedDictionary {
    pub dictionary: ShapeDictionary,
    /// `k × n`, column `j` codes training shape `j`.
    pub coefficients: DMatrix<f64>,
    /// Objective after initialization and after every half-step (C then B).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Final projected-gradient residual of the `C` subproblem.
    pub coeff_kkt: f64,
    /// Final KKT residual of the `B` subproblem.
    pub basis_kkt: f64,
}

impl LearnedDictionary {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }

    /// Per training shape, `‖S_j − Σ_i C_ij B_i‖_F / ‖S_j‖_F`.
    pub fn relative_residuals(&self, shapes: &[Shape3D]) -> Vec<f64> {
        let atoms = atom_matrix(&self.dictionary);
        shapes
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let x = DVector::from_column_slice(s.points().as_slice());
                let fit = &atoms * self.coefficients.column(j);
                (&x - fit).norm() / x.norm().max(f64::MIN_POSITIVE)
            })
            .collect()
    }
}

fn atom_matrix(dict: &ShapeDictionary) -> DMatrix<f64> {
    let rows = 3 * dict.num_landmarks();
    DMatrix::from_fn(rows, dict.len(), |r, i| dict.bases()[i].points().as_slice()[r])
}

fn objective(x: &DMatrix<f64>, d: &DMatrix<f64>, c: &DMatrix<f64>, beta: f64) -> f64 {
    0.5 * (x - d * c).norm_squared() + beta * c.sum()
}

/// Learns `k` atoms from centered, aligned training shapes.
///
/// Atoms start as `k` distinct training shapes drawn uniformly at random and
/// scaled to unit Frobenius norm.
pub fn learn_dictionary(
    shapes: &[Shape3D],
    k: usize,
    beta: f64,
    opts: &DictLearnOptions,
) -> Result<LearnedDictionary> {
    let n = shapes.len();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of training shapes ({n})"
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
    }
    let p = shapes[0].len();
    if let Some(bad) = shapes.iter().find(|s| s.len() != p) {
        return Err(Error::LandmarkCountMismatch {
            expected: p,
            found: bad.len(),
        });
    }
    let x = DMatrix::from_fn(3 * p, n, |r, j| shapes[j].points().as_slice()[r]);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picks = sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    let mut d = DMatrix::zeros(3 * p, k);
    for (i, &j) in picks.iter().enumerate() {
        let col = x.column(j);
        let norm = col.norm();
        if norm > 0.0 {
            d.set_column(i, &(col / norm));
        }
    }
    let mut c = DMatrix::zeros(k, n);

    let mut trace = vec![objective(&x, &d, &c, beta)];
    let mut iterations = 0;
    let mut coeff_kkt;
    let mut basis_kkt;
    loop {
        iterations += 1;
        let prev = *trace.last().unwrap();
        coeff_kkt = update_coefficients(&x, &d, &mut c, beta, opts);
        trace.push(objective(&x, &d, &c, beta));
        basis_kkt = update_bases(&x, &mut d, &c, opts.basis_max_sweeps);
        let obj = objective(&x, &d, &c, beta);
        trace.push(obj);
        if iterations >= opts.max_iterations || prev - obj <= opts.tolerance * prev.abs() {
            break;
        }
    }

    // Rows of each atom stay centered up to rounding; re-center exactly.
    let bases = (0..k)
        .map(|i| Shape3D::new(Matrix3xX::from_column_slice(d.column(i).as_slice())).map(|s| s.centralize()))
        .collect::<Result<Vec<_>>>()?;
    let dictionary = ShapeDictionary::new(bases)?;
    Ok(LearnedDictionary {
        dictionary,
        coefficients: c,
        objective_trace: trace,
        iterations,
        coeff_kkt,
        basis_kkt,
    })
}

/// Nonnegative lasso per column by monotone FISTA, warm-started at `c`.
/// Returns the largest projected-gradient residual.
fn update_coefficients(
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    c: &mut DMatrix<f64>,
    beta: f64,
    opts: &DictLearnOptions,
) -> f64 {
    let gram = d.transpose() * d;
    let corr = d.transpose() * x;
    let lipschitz = gram.symmetric_eigenvalues().max();
    if lipschitz <= 0.0 {
        c.fill(0.0);
        return 0.0;
    }
    let step = 1.0 / lipschitz;
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let r = corr.column(j).into_owned();
        let f = |v: &DVector<f64>| 0.5 * v.dot(&(&gram * v)) - r.dot(v) + beta * v.sum();
        let grad = |v: &DVector<f64>| &gram * v - &r + DVector::from_element(v.len(), beta);
        let residual = |v: &DVector<f64>| {
            let g = grad(v);
            v.zip_map(&g, |vi, gi| vi - (vi - gi).max(0.0)).amax()
        };
        let mut cur = c.column(j).into_owned();
        let mut f_cur = f(&cur);
        let mut y = cur.clone();
        let mut t: f64 = 1.0;
        let mut res = residual(&cur);
        let mut it = 0;
        while res > opts.kkt_tolerance && it < opts.coeff_max_iterations {
            it += 1;
            let z = (&y - grad(&y) * step).map(|v| v.max(0.0));
            let f_z = f(&z);
            let prev = cur.clone();
            if f_z <= f_cur {
                cur = z.clone();
                f_cur = f_z;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &cur + (&z - &cur) * (t / t_next) + (&cur - &prev) * ((t - 1.0) / t_next);
            t = t_next;
            if it % 10 == 0 {
                res = residual(&cur);
            }
        }
        res = residual(&cur);
        worst = worst.max(res);
        c.set_column(j, &cur);
    }
    worst
}

/// Exact block-coordinate sweeps over the atoms. Returns the KKT residual of
/// the ball-constrained least-squares subproblem.
fn update_bases(x: &DMatrix<f64>, d: &mut DMatrix<f64>, c: &DMatrix<f64>, max_sweeps: usize) -> f64 {
    let a = c * c.transpose();
    let e = x * c.transpose();
    let k = d.ncols();
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        for i in 0..k {
            let aii = a[(i, i)];
            if aii <= 0.0 {
                continue;
            }
            let old = d.column(i).into_owned();
            let u = &old + (e.column(i) - &*d * a.column(i)) / aii;
            let norm = u.norm();
            let new = if norm > 1.0 { u / norm } else { u };
            change = change.max((&new - &old).amax());
            d.set_column(i, &new);
        }
        if change < 1e-12 {
            break;
        }
    }
    basis_kkt(d, &a, &e)
}

/// For each atom the gradient `G_i = D a_i − e_i` must vanish inside the
/// ball, or be a nonpositive multiple of `B_i` on its boundary.
fn basis_kkt(d: &DMatrix<f64>, a: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    let grad = d * a - e;
    let mut worst: f64 = 0.0;
    for i in 0..d.ncols() {
        let g = grad.column(i);
        let b = d.column(i);
        let nb = b.norm();
        let r = if nb >= 1.0 - 1e-12 {
            // remove the multiplier component ν·B_i with ν ≤ 0
            let nu = (g.dot(&b) / (nb * nb)).min(0.0);
            (g - b * nu).amax()
        } else {
            g.amax()
        };
        worst = worst.max(r);
    }
    worst
}
