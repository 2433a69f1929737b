//! Exact proximal and projection primitives.
//!
//! The spectral-norm prox works on singular values only: the spectral norm is
//! the ℓ∞ norm of the singular values, and the ℓ∞ prox follows from Moreau
//! decomposition with the projection onto the (dual) ℓ1 ball,
//!
//! ```text
//! prox_{λ‖·‖∞}(σ) = σ − λ·P_{ℓ1}(σ/λ)
//! prox_{λ‖·‖₂}(Y) = U diag(prox_{λ‖·‖∞}(σ)) Vᵀ
//! ```

use nalgebra::{DMatrix, DVector, Dim, Matrix, Matrix2, Matrix2x3, RawStorage, Vector2};

/// Euclidean projection of `v` onto `{u : ‖u‖₁ ≤ radius}`.
///
/// Sort-and-threshold: find `θ` with `Σ max(|v_i| − θ, 0) = radius` and
/// soft-threshold. `radius` must be positive.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    debug_assert!(radius > 0.0);
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (j + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Proximal operator of `λ‖·‖∞`, by Moreau decomposition.
pub fn prox_linf(v: &[f64], lambda: f64) -> Vec<f64> {
    if lambda <= 0.0 {
        return v.to_vec();
    }
    let scaled: Vec<f64> = v.iter().map(|x| x / lambda).collect();
    let proj = project_l1_ball(&scaled, 1.0);
    v.iter().zip(proj).map(|(x, p)| x - lambda * p).collect()
}

/// Thin SVD with singular values sorted in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SingularDecomposition {
    /// `m × r`, orthonormal columns.
    pub left: DMatrix<f64>,
    pub singulars: DVector<f64>,
    /// `n × r`, orthonormal columns.
    pub right: DMatrix<f64>,
}

impl SingularDecomposition {
    /// Panics if `m` has non-finite entries.
    pub fn new(m: &DMatrix<f64>) -> Self {
        // nalgebra's bidiagonal SVD silently returns wrong factors for some
        // exactly rank-deficient inputs (such as row-centered bases), so the
        // decomposition is delegated to faer.
        let a = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
        let svd = a.thin_svd().expect("SVD of a finite matrix");
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let r = s.nrows();
        SingularDecomposition {
            left: DMatrix::from_fn(m.nrows(), r, |i, j| u[(i, j)]),
            singulars: DVector::from_fn(r, |i, _| s[i]),
            right: DMatrix::from_fn(m.ncols(), r, |i, j| v[(i, j)]),
        }
    }

    /// The decomposition of a statically sized matrix.
    pub fn of<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(m: &Matrix<f64, R, C, S>) -> Self {
        Self::new(&DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]))
    }

    /// `U Vᵀ`, the nearest matrix with orthonormal columns (or rows).
    pub fn polar(&self) -> DMatrix<f64> {
        &self.left * self.right.transpose()
    }

    /// `U diag(σ) Vᵀ`.
    pub fn recompose(&self) -> DMatrix<f64> {
        self.recompose_with(&self.singulars)
    }

    pub fn recompose_with(&self, singulars: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.left.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(singulars.iter()) {
            col *= *s;
        }
        scaled * self.right.transpose()
    }
}

/// Unique minimizer of `½‖Y − X‖_F² + λ‖X‖₂`.
pub fn prox_spectral(y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    if lambda <= 0.0 {
        return y.clone();
    }
    let svd = SingularDecomposition::new(y);
    let shrunk = prox_linf(svd.singulars.as_slice(), lambda);
    svd.recompose_with(&DVector::from_vec(shrunk))
}

/// Singular values `(σ₁, σ₂)` of a 2×3 matrix and the left singular vectors.
///
/// Computed from the 2×2 Gram matrix; `σ₂` comes from the determinant
/// (Cauchy–Binet) so it keeps full relative accuracy when `σ₂ ≪ σ₁`.
pub(crate) fn svd_2x3_left(y: &Matrix2x3<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let g = y * y.transpose();
    let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let half_gap = (0.5 * (a - d)).hypot(b);
    let s1_sq = 0.5 * (a + d) + half_gap;
    let s1 = s1_sq.max(0.0).sqrt();
    let minor = |i: usize, j: usize| y[(0, i)] * y[(1, j)] - y[(0, j)] * y[(1, i)];
    let det_sqrt = minor(0, 1).hypot(minor(0, 2)).hypot(minor(1, 2));
    let s2 = if s1 > 0.0 { (det_sqrt / s1).min(s1) } else { 0.0 };
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (sin, cos) = theta.sin_cos();
    let u = Matrix2::new(cos, -sin, sin, cos);
    (Vector2::new(s1, s2), u)
}

/// Spectral norm of a 2×3 matrix.
pub fn spectral_norm_2x3(y: &Matrix2x3<f64>) -> f64 {
    svd_2x3_left(y).0[0]
}

/// `prox_{λ‖·‖∞}` for a sorted nonnegative pair.
fn prox_linf_pair(s1: f64, s2: f64, lambda: f64) -> (f64, f64) {
    if s1 - s2 >= lambda {
        (s1 - lambda, s2)
    } else {
        let t = (0.5 * (s1 + s2 - lambda)).max(0.0);
        (t, t)
    }
}

/// Closed-form [`prox_spectral`] for 2×3 blocks.
///
/// With `Y = U Σ Vᵀ`, the result is `U diag(σ'/σ) Uᵀ Y`, which avoids forming
/// `V` at all.
pub fn prox_spectral_2x3(y: &Matrix2x3<f64>, lambda: f64) -> Matrix2x3<f64> {
    if lambda <= 0.0 {
        return *y;
    }
    let (s, u) = svd_2x3_left(y);
    if s[0] + s[1] <= lambda {
        return Matrix2x3::zeros();
    }
    let (t1, t2) = prox_linf_pair(s[0], s[1], lambda);
    let ratio = |t: f64, s: f64| if s > 0.0 { t / s } else { 0.0 };
    let d = Matrix2::new(ratio(t1, s[0]), 0.0, 0.0, ratio(t2, s[1]));
    u * d * u.transpose() * y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn approx_eq(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Bisection on θ for `Σ max(|v_i| − θ, 0) = r`.
    fn bisection_projection(v: &[f64], r: f64) -> Vec<f64> {
        if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
            return v.to_vec();
        }
        let (mut lo, mut hi) = (0.0, v.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
            if mass > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        v.iter()
            .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
            .collect()
    }

    #[test]
    fn l1_projection_examples() {
        assert_eq!(project_l1_ball(&[0.3, 0.2], 1.0), vec![0.3, 0.2]);
        assert!(approx_eq(&project_l1_ball(&[2.0, 2.0], 1.0), &[0.5, 0.5], 1e-15));
        assert!(approx_eq(&project_l1_ball(&[3.0, 1.0, 0.5], 1.0), &[1.0, 0.0, 0.0], 1e-15));
        assert!(approx_eq(
            &project_l1_ball(&[-3.0, 1.0, 0.5], 2.0),
            &bisection_projection(&[-3.0, 1.0, 0.5], 2.0),
            1e-12
        ));
    }

    #[test]
    fn l1_projection_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.random_range(1..=50);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let r = rng.random_range(0.1..10.0);
            assert!(approx_eq(&project_l1_ball(&v, r), &bisection_projection(&v, r), 1e-10));
        }
    }

    #[test]
    fn prox_linf_examples() {
        assert_eq!(prox_linf(&[1.0, -2.0], 0.0), vec![1.0, -2.0]);
        assert!(approx_eq(&prox_linf(&[1.0, 1.0], 0.5), &[0.75, 0.75], 1e-15));
        assert!(approx_eq(&prox_linf(&[0.2, -0.3], 0.5), &[0.0, 0.0], 1e-15));
        assert!(approx_eq(&prox_linf(&[2.0, 0.5], 1.0), &[1.0, 0.5], 1e-15));
    }

    #[test]
    fn prox_spectral_examples() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_eq!(prox_spectral(&eye, 0.0), eye);
        assert!((prox_spectral(&eye, 0.5) - &eye * 0.75).amax() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let nuclear = SingularDecomposition::new(&y).singulars.sum();
        assert!(prox_spectral(&y, nuclear).amax() < 1e-14);
        assert!(prox_spectral(&y, nuclear * 1.5).amax() < 1e-14);
    }

    #[test]
    fn singular_decomposition_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (m, n) in [(2, 3), (3, 2), (4, 4), (6, 5)] {
            let y = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let svd = SingularDecomposition::new(&y);
            let r = m.min(n);
            assert!((svd.left.transpose() * &svd.left - DMatrix::identity(r, r)).amax() < 1e-10);
            assert!((svd.right.transpose() * &svd.right - DMatrix::identity(r, r)).amax() < 1e-10);
            assert!((svd.recompose() - &y).norm() <= 1e-9 * y.norm());
            assert!(svd.singulars.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn singular_decomposition_of_row_centered_matrices() {
        // centered rows give an exact zero singular value
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for t in 0..500 {
            let (m, n) = (3 * (1 + t % 20), 4 + (t * 7) % 30);
            let mut y = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            for mut row in y.row_iter_mut() {
                let mean = row.mean();
                row.add_scalar_mut(-mean);
            }
            let svd = SingularDecomposition::new(&y);
            assert!((svd.recompose() - &y).norm() <= 1e-12 * y.norm(), "{m}x{n}");
        }
    }

    #[test]
    fn closed_form_2x3_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for trial in 0..2000 {
            let mut y = Matrix2x3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            if trial % 5 == 0 {
                // rank one
                let row = y.row(0).into_owned();
                y.set_row(1, &(row * rng.random_range(-1.0..1.0)));
            }
            if trial % 7 == 0 {
                // equal singular values
                let q = nalgebra::Rotation3::new(nalgebra::Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ));
                y = q.matrix().fixed_rows::<2>(0) * rng.random_range(0.1..2.0);
            }
            let lambda = rng.random_range(0.0..3.0);
            let fast = prox_spectral_2x3(&y, lambda);
            let general = prox_spectral(&DMatrix::from_column_slice(2, 3, y.as_slice()), lambda);
            let diff = (DMatrix::from_column_slice(2, 3, fast.as_slice()) - general).amax();
            assert!(diff < 1e-10, "trial {trial}: diff {diff}");
            let sv = DMatrix::from_column_slice(2, 3, y.as_slice()).singular_values();
            assert!((spectral_norm_2x3(&y) - sv.max()).abs() < 1e-12);
        }
    }

    #[test]
    fn prox_spectral_tie_is_factorization_independent() {
        // Two different SVDs of a matrix with σ₁ = σ₂ give the same prox.
        let q = nalgebra::Rotation3::new(nalgebra::Vector3::new(0.3, -0.4, 1.0));
        let y = q.matrix().fixed_rows::<2>(0) * 1.3;
        let yd = DMatrix::from_column_slice(2, 3, y.as_slice());
        let a = SingularDecomposition::new(&yd);
        // Rotate the left/right singular pairs within the tied subspace.
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let b = SingularDecomposition {
            left: &a.left * &rot,
            singulars: a.singulars.clone(),
            right: &a.right * &rot,
        };
        assert!((b.recompose() - &yd).amax() < 1e-12);
        let shrunk = DVector::from_vec(prox_linf(a.singulars.as_slice(), 0.4));
        assert!((a.recompose_with(&shrunk) - b.recompose_with(&shrunk)).amax() < 1e-12);
        assert!((a.recompose_with(&shrunk) - prox_spectral(&yd, 0.4)).amax() < 1e-12);
    }
}
