//! Domain types and the geometric operations shared by every solver.

use nalgebra::{DMatrix, Matrix2xX, Matrix3, Matrix3xX, Vector3};

use crate::prox::SingularDecomposition;
use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// 2D image landmarks (one column per landmark) with a visibility mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet2D {
    points: Matrix2xX<f64>,
    visibility: Vec<bool>,
}

impl LandmarkSet2D {
    pub fn new(points: Matrix2xX<f64>, visibility: Vec<bool>) -> Result<Self> {
        if points.ncols() < 3 {
            return Err(Error::TooFewLandmarks(points.ncols()));
        }
        if visibility.len() != points.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "visibility mask has {} entries for {} landmarks",
                visibility.len(),
                points.ncols()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landmarks"));
        }
        Ok(Self { points, visibility })
    }

    pub fn fully_visible(points: Matrix2xX<f64>) -> Result<Self> {
        let p = points.ncols();
        Self::new(points, vec![true; p])
    }

    pub fn points(&self) -> &Matrix2xX<f64> {
        &self.points
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    /// Number of landmarks, visible or not.
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        self.visibility
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| v.then_some(j))
            .collect()
    }

    pub fn all_visible(&self) -> bool {
        self.visibility.iter().all(|&v| v)
    }

    /// Visible columns only.
    pub fn visible_points(&self) -> Matrix2xX<f64> {
        self.points.select_columns(&self.visible_indices())
    }

    /// Subtracts the per-row mean of the visible columns from every column.
    ///
    /// Invisible landmarks are shifted by the same offset so that the full
    /// column set survives for hallucination downstream.
    pub fn centralize(&self) -> Result<Self> {
        let visible = self.visible_indices();
        if visible.is_empty() {
            return Err(Error::NoVisibleLandmarks);
        }
        let n = visible.len() as f64;
        let mut mean = nalgebra::Vector2::zeros();
        for &j in &visible {
            mean += self.points.column(j);
        }
        mean /= n;
        let mut points = self.points.clone();
        for mut col in points.column_iter_mut() {
            col -= mean;
        }
        Ok(Self {
            points,
            visibility: self.visibility.clone(),
        })
    }
}

/// A 3D landmark configuration, one column per landmark.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape3D {
    points: Matrix3xX<f64>,
}

impl Shape3D {
    pub fn new(points: Matrix3xX<f64>) -> Result<Self> {
        if points.ncols() < 3 {
            return Err(Error::TooFewLandmarks(points.ncols()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shape"));
        }
        Ok(Self { points })
    }

    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(Matrix3xX::zeros(p))
    }

    /// Builds a shape from three coordinate rows.
    pub fn from_rows(rows: [&[f64]; 3]) -> Result<Self> {
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("coordinate rows differ in length".into()));
        }
        Self::new(Matrix3xX::from_fn(p, |i, j| rows[i][j]))
    }

    pub fn points(&self) -> &Matrix3xX<f64> {
        &self.points
    }

    pub fn into_points(self) -> Matrix3xX<f64> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.column_mean()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.points.norm()
    }

    /// Returns the shape with every coordinate row shifted to zero mean.
    pub fn centralize(&self) -> Shape3D {
        let mean = self.centroid();
        let mut points = self.points.clone();
        for mut col in points.column_iter_mut() {
            col -= mean;
        }
        Shape3D { points }
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        let scale = self.points.norm().max(1.0);
        self.centroid().amax() <= tol * scale
    }

    pub fn scaled(&self, factor: f64) -> Shape3D {
        Shape3D {
            points: &self.points * factor,
        }
    }
}

/// An ordered list of basis shapes sharing the same landmark count.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDictionary {
    bases: Vec<Shape3D>,
    labels: Option<Vec<String>>,
}

impl ShapeDictionary {
    /// Every basis must be row-centered.
    pub fn new(bases: Vec<Shape3D>) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::InvalidParameter("dictionary needs at least one basis".into()));
        };
        let p = first.len();
        for (i, b) in bases.iter().enumerate() {
            if b.len() != p {
                return Err(Error::LandmarkCountMismatch {
                    expected: p,
                    found: b.len(),
                });
            }
            if !b.is_centered(1e-9) {
                return Err(Error::UncenteredBasis(i));
            }
        }
        Ok(Self {
            bases,
            labels: None,
        })
    }

    /// Centers each basis before building the dictionary.
    pub fn from_uncentered(bases: Vec<Shape3D>) -> Result<Self> {
        Self::new(bases.iter().map(Shape3D::centralize).collect())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.num_landmarks() {
            return Err(Error::LandmarkCountMismatch {
                expected: self.num_landmarks(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn bases(&self) -> &[Shape3D] {
        &self.bases
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of bases, `k`.
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Number of landmarks, `p`.
    pub fn num_landmarks(&self) -> usize {
        self.bases[0].len()
    }

    /// Bases stacked as row-triplets into a `3k × p` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let k = self.len();
        let p = self.num_landmarks();
        let mut out = DMatrix::zeros(3 * k, p);
        for (i, b) in self.bases.iter().enumerate() {
            out.view_mut((3 * i, 0), (3, p)).copy_from(b.points());
        }
        out
    }

    /// Unweighted mean of the bases.
    pub fn mean_shape(&self) -> Shape3D {
        let mut acc = Matrix3xX::zeros(self.num_landmarks());
        for b in &self.bases {
            acc += b.points();
        }
        Shape3D {
            points: acc / self.len() as f64,
        }
    }
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Weak-perspective camera: scaled orthographic projection after a rigid motion.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    alpha: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraModel {
    pub fn new(alpha: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidCamera("scale must be positive and finite"));
        }
        if !is_rotation(&rotation, ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera("rotation is not in SO(3)"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("translation is not finite"));
        }
        Ok(Self {
            alpha,
            rotation,
            translation,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
}

/// `x ↦ scale · rotation · x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, shape: &Shape3D) -> Shape3D {
        let mut points = self.rotation * shape.points() * self.scale;
        for mut col in points.column_iter_mut() {
            col += self.translation;
        }
        Shape3D { points }
    }
}

/// `W = α · (first two rows of R·S + T·1ᵀ)`; all landmarks visible.
pub fn project_weak_perspective(shape: &Shape3D, camera: &CameraModel) -> LandmarkSet2D {
    let rbar = camera.rotation.fixed_rows::<2>(0);
    let t = camera.translation.fixed_rows::<2>(0);
    let mut points: Matrix2xX<f64> = rbar * shape.points();
    for mut col in points.column_iter_mut() {
        col += t;
    }
    points *= camera.alpha;
    LandmarkSet2D {
        visibility: vec![true; points.ncols()],
        points,
    }
}

/// `S = Σ c_i R_i B_i`.
pub fn compose_shape(
    dict: &ShapeDictionary,
    coeffs: &[f64],
    rotations: &[Matrix3<f64>],
) -> Result<Shape3D> {
    if coeffs.len() != dict.len() || rotations.len() != dict.len() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} bases but got {} coefficients and {} rotations",
            dict.len(),
            coeffs.len(),
            rotations.len()
        )));
    }
    let mut acc = Matrix3xX::zeros(dict.num_landmarks());
    for ((b, &c), r) in dict.bases().iter().zip(coeffs).zip(rotations) {
        if c != 0.0 {
            acc += (r * b.points()) * c;
        }
    }
    Shape3D::new(acc)
}

/// Result of [`procrustes_align`].
#[derive(Clone, Debug)]
pub struct Alignment {
    pub transform: SimilarityTransform,
    /// The source mapped through `transform`.
    pub aligned: Shape3D,
    /// `‖target − aligned‖_F`.
    pub residual: f64,
}

/// Proper-rotation similarity alignment of `source` onto `target` (Umeyama).
pub fn procrustes_align(source: &Shape3D, target: &Shape3D) -> Result<Alignment> {
    if source.len() != target.len() {
        return Err(Error::LandmarkCountMismatch {
            expected: target.len(),
            found: source.len(),
        });
    }
    let src_mean = source.centroid();
    let tgt_mean = target.centroid();
    let src_c = source.centralize();
    let tgt_c = target.centralize();
    let src_norm_sq = src_c.points().norm_squared();
    if src_norm_sq <= (1e-14 * source.frobenius_norm().max(1.0)).powi(2) {
        return Err(Error::DegenerateShape);
    }

    let cov: Matrix3<f64> = tgt_c.points() * src_c.points().transpose();
    let svd = SingularDecomposition::of(&cov);
    let u = Matrix3::from_column_slice(svd.left.as_slice());
    let v_t = Matrix3::from_column_slice(svd.right.as_slice()).transpose();
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = Vector3::from_column_slice(svd.singulars.as_slice()).dot(&d) / src_norm_sq;
    let translation = tgt_mean - rotation * src_mean * scale;
    let transform = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let aligned = transform.apply(source);
    let residual = (target.points() - aligned.points()).norm();
    Ok(Alignment {
        transform,
        aligned,
        residual,
    })
}

/// Frobenius distance after optimal similarity alignment, divided by the
/// norm of the centered ground truth.
///
/// An all-zero estimate scores 1, the value of the best (zero) scale.
pub fn reconstruction_error(estimate: &Shape3D, truth: &Shape3D) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LandmarkCountMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let truth_norm = truth.centralize().frobenius_norm();
    if truth_norm == 0.0 {
        return Err(Error::ZeroNormTruth);
    }
    match procrustes_align(estimate, truth) {
        Ok(al) => Ok(al.residual / truth_norm),
        Err(Error::DegenerateShape) => Ok(1.0),
        Err(e) => Err(e),
    }
}

/// Row means of `m` over the given columns, as a column vector.
pub(crate) fn row_means_over(m: &DMatrix<f64>, cols: &[usize]) -> nalgebra::DVector<f64> {
    let mut acc = nalgebra::DVector::zeros(m.nrows());
    for &j in cols {
        acc += m.column(j);
    }
    acc / cols.len().max(1) as f64
}

/// Visible columns of the stacked bases, re-centered over those columns so
/// that the translation eliminated from the landmarks is eliminated here too.
pub(crate) fn visible_stacked_bases(dict: &ShapeDictionary, visible: &[usize]) -> DMatrix<f64> {
    let stacked = dict.stacked();
    let mean = row_means_over(&stacked, visible);
    let mut out = stacked.select_columns(visible);
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}
