//! Synthetic single-rotation batch whose shapes lie far from the dictionary
//! mean.
//!
//! The first `mean_atoms` atoms are perturbations of one shared template, so
//! the dictionary mean looks like that template. Each ground-truth shape
//! combines `active` of the remaining atoms and is seen under one random
//! rotation.

use std::path::Path;

use nalgebra::{Matrix2xX, Matrix3xX};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shapefit::{LandmarkSet2D, Shape3D, ShapeDictionary};

use crate::error::{HarnessError, Result};
use crate::formats::{write_dictionary, write_landmarks, write_shape};
use crate::synth::random_rotation;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub instances: usize,
    pub k: usize,
    pub p: usize,
    /// Atoms clustered around the shared template.
    pub mean_atoms: usize,
    /// Relative size of the per-atom perturbation of the template.
    pub mean_spread: f64,
    /// Atoms used by each ground-truth shape.
    pub active: usize,
    pub coeff_range: (f64, f64),
    /// Standard deviation of Gaussian image noise, relative to the RMS of `W`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            k: 20,
            p: 15,
            mean_atoms: 10,
            mean_spread: 0.3,
            active: 2,
            coeff_range: (0.5, 1.5),
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkItem {
    pub name: String,
    pub w: LandmarkSet2D,
    pub truth: Shape3D,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub dict: ShapeDictionary,
    pub items: Vec<BenchmarkItem>,
}

/// Atoms are centered Gaussian shapes scaled to unit Frobenius norm.
pub fn far_from_mean_benchmark(config: &BenchmarkConfig) -> Result<Benchmark> {
    let BenchmarkConfig {
        instances,
        k,
        p,
        mean_atoms,
        mean_spread,
        active,
        coeff_range: (lo, hi),
        noise,
        seed,
    } = *config;
    if active == 0 || mean_atoms + active > k || p < 3 || instances == 0 {
        return Err(HarnessError::Invalid(format!(
            "need instances >= 1, p >= 3 and 1 <= active <= k - mean_atoms \
             (got {instances}, {p}, {active}, {k} - {mean_atoms})"
        )));
    }
    if !(mean_spread >= 0.0 && mean_spread.is_finite()) {
        return Err(HarnessError::Invalid("bad template spread".into()));
    }
    if !(0.0 <= lo && lo <= hi && hi.is_finite()) || !(noise >= 0.0 && noise.is_finite()) {
        return Err(HarnessError::Invalid("bad coefficient range or noise level".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> shapefit::Result<Matrix3xX<f64>> {
        let s = Shape3D::new(Matrix3xX::from_fn(p, |_, _| rng.sample(StandardNormal)))?.centralize();
        let n = s.frobenius_norm();
        Ok(s.into_points() / n)
    };
    let template = gaussian(&mut rng)?;
    let bases = (0..k)
        .map(|i| {
            let pts = if i < mean_atoms {
                &template + gaussian(&mut rng)? * mean_spread
            } else {
                gaussian(&mut rng)?
            };
            let n = pts.norm();
            Shape3D::new(pts / n)
        })
        .collect::<shapefit::Result<Vec<_>>>()?;
    let dict = ShapeDictionary::new(bases)?;

    let width = (instances - 1).to_string().len();
    let mut items = Vec::with_capacity(instances);
    for idx in 0..instances {
        let mut coeffs = vec![0.0; k];
        for i in sample(&mut rng, k - mean_atoms, active) {
            coeffs[mean_atoms + i] = rng.random_range(lo..=hi);
        }
        let mut s = Matrix3xX::zeros(p);
        for (b, &c) in dict.bases().iter().zip(&coeffs) {
            s += b.points() * c;
        }
        let rotation = random_rotation(&mut rng);
        let truth = Shape3D::new(rotation * s)?;
        let mut w: Matrix2xX<f64> = truth.points().fixed_rows::<2>(0).into_owned();
        if noise > 0.0 {
            let rms = w.norm() / ((2 * p) as f64).sqrt();
            w += Matrix2xX::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * noise * rms);
        }
        items.push(BenchmarkItem {
            name: format!("item{idx:0width$}"),
            w: LandmarkSet2D::fully_visible(w)?,
            truth,
            coeffs,
        });
    }
    Ok(Benchmark { dict, items })
}

/// Writes `dictionary.json` and `<name>.2d.csv` / `<name>.3d.csv` pairs.
pub fn write_benchmark(bench: &Benchmark, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_dictionary(&dir.join("dictionary.json"), &bench.dict)?;
    for item in &bench.items {
        write_landmarks(&dir.join(format!("{}.2d.csv", item.name)), &item.w)?;
        write_shape(&dir.join(format!("{}.3d.csv", item.name)), &item.truth)?;
    }
    Ok(())
}
