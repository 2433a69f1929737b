//! Random noiseless instances for the exact-recovery experiment.

use nalgebra::{Matrix2x3, Matrix3, Matrix3xX, Quaternion, UnitQuaternion};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapefit::convex::{MotionMatrix, StackedMotion};
use shapefit::{Error, LandmarkSet2D, Result, Shape3D, ShapeDictionary};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticInstance {
    pub dict: ShapeDictionary,
    pub true_motion: StackedMotion,
    pub true_coeffs: Vec<f64>,
    pub true_rotations: Vec<Matrix3<f64>>,
    pub w: LandmarkSet2D,
    pub seed: u64,
}

/// Uniform on SO(3): a normalized isotropic Gaussian 4-vector is a uniform
/// unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-12 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

/// `k` centered bases with i.i.d. standard normal entries.
pub fn random_dictionary<R: Rng + ?Sized>(rng: &mut R, k: usize, p: usize) -> Result<ShapeDictionary> {
    let bases = (0..k)
        .map(|_| {
            let pts = Matrix3xX::from_fn(p, |_, _| rng.sample(StandardNormal));
            Shape3D::new(pts).map(|s| s.centralize())
        })
        .collect::<Result<Vec<_>>>()?;
    ShapeDictionary::new(bases)
}

/// `W = Σ c_i R̄_i B_i` with `z` nonzero coefficients drawn from U(0,1).
pub fn synth_instance(k: usize, p: usize, z: usize, seed: u64) -> Result<SyntheticInstance> {
    if k == 0 || z == 0 || z > k {
        return Err(Error::InvalidParameter(format!("need 1 <= z <= k, got z = {z}, k = {k}")));
    }
    if p < 3 {
        return Err(Error::TooFewLandmarks(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dict = random_dictionary(&mut rng, k, p)?;
    let true_rotations: Vec<Matrix3<f64>> = (0..k).map(|_| random_rotation(&mut rng)).collect();
    let mut support = sample(&mut rng, k, z).into_vec();
    support.sort_unstable();
    let mut true_coeffs = vec![0.0; k];
    for &i in &support {
        true_coeffs[i] = rng.random::<f64>();
    }

    let blocks: Vec<MotionMatrix> = true_coeffs
        .iter()
        .zip(&true_rotations)
        .map(|(&c, r)| MotionMatrix(Matrix2x3::from(r.fixed_rows::<2>(0)) * c))
        .collect();
    let mut w = nalgebra::Matrix2xX::zeros(p);
    for (m, b) in blocks.iter().zip(dict.bases()) {
        w += m.0 * b.points();
    }
    Ok(SyntheticInstance {
        dict,
        true_motion: StackedMotion::new(blocks),
        true_coeffs,
        true_rotations,
        w: LandmarkSet2D::fully_visible(w)?,
        seed,
    })
}
