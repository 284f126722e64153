//! Point clouds, Euclidean transforms, distance matrices and Kabsch alignment.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance for `linearᵀ·linear = I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// `n` particles in `d` dimensions, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    n: usize,
    d: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidCloud(format!("empty cloud ({n} x {d})")));
        }
        if coords.len() != n * d {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates for {n} x {d}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        Ok(Self { n, d, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCloud("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// I.i.d. standard normal coordinates.
    pub fn gaussian(n: usize, d: usize, rng: &mut rng::Rng) -> Result<Self> {
        let coords = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(n, d, coords)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.d];
        for row in self.rows() {
            for (ck, x) in c.iter_mut().zip(row) {
                *ck += x;
            }
        }
        c.iter_mut().for_each(|ck| *ck /= self.n as f64);
        c
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(k, x)| x + shift[k % self.d])
            .collect();
        Self { coords, ..*self }
    }

    pub fn centered(&self) -> Self {
        let c: Vec<f64> = self.centroid().iter().map(|x| -x).collect();
        self.translated(&c)
    }

    /// Reorders rows: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let coords = perm.iter().flat_map(|&p| self.row(p).to_vec()).collect();
        Self::new(self.n, self.d, coords)
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::ShapeMismatch(format!(
                "{} x {} vs {} x {}",
                self.n, self.d, other.n, other.d
            )));
        }
        Ok(())
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.coords)
    }
}

/// Symmetric, zero-diagonal matrix of pairwise distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    let n = cloud.n();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let r = distance(cloud.row(i), cloud.row(j));
            entries[i * n + j] = r;
            entries[j * n + i] = r;
        }
    }
    DistanceMatrix { n, entries }
}

/// An element of E(d): `x ↦ linear·x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
}

impl RigidTransform {
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = linear.nrows();
        if linear.ncols() != d {
            return Err(Error::ShapeMismatch("linear part must be square".into()));
        }
        if translation.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: translation.len(),
            });
        }
        let defect = (linear.transpose() * &linear - DMatrix::identity(d, d)).amax();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "linear part not orthogonal (defect {defect:e})"
            )));
        }
        Ok(Self {
            linear,
            translation,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            linear: DMatrix::identity(d, d),
            translation: DVector::zeros(d),
        }
    }

    /// Planar rotation by `angle` radians followed by `translation`.
    pub fn rotation_2d(angle: f64, translation: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            linear: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            translation: DVector::from_column_slice(&translation),
        }
    }

    pub fn d(&self) -> usize {
        self.linear.nrows()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn determinant(&self) -> f64 {
        self.linear.determinant()
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            linear: &self.linear * &first.linear,
            translation: &self.linear * &first.translation + &self.translation,
        }
    }
}

pub fn apply_transform(cloud: &PointCloud, g: &RigidTransform) -> Result<PointCloud> {
    let d = cloud.d();
    if g.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: g.d(),
        });
    }
    let mut coords = Vec::with_capacity(cloud.coords.len());
    for row in cloud.rows() {
        for a in 0..d {
            let mut v = g.translation[a];
            for (b, x) in row.iter().enumerate() {
                v += g.linear[(a, b)] * x;
            }
            coords.push(v);
        }
    }
    PointCloud::new(cloud.n(), d, coords)
}

/// Haar-random element of O(d) (QR of a Gaussian matrix with the sign of
/// `R`'s diagonal folded into `Q`) and a translation uniform in
/// `[-max_translation, max_translation]^d`.
pub fn random_transform(d: usize, max_translation: f64, seed: u64) -> Result<RigidTransform> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    let mut rng = rng::seeded(seed);
    random_transform_with(d, max_translation, &mut rng)
}

pub fn random_transform_with(
    d: usize,
    max_translation: f64,
    rng: &mut rng::Rng,
) -> Result<RigidTransform> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    let gauss = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    // One Gram-Schmidt polish keeps the orthogonality defect near 1e-16.
    let q = polish_orthogonal(q);
    let translation = if max_translation > 0.0 {
        let u = Uniform::new_inclusive(-max_translation, max_translation)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        DVector::from_fn(d, |_, _| rng.sample(u))
    } else {
        DVector::zeros(d)
    };
    RigidTransform::new(q, translation)
}

fn polish_orthogonal(mut q: DMatrix<f64>) -> DMatrix<f64> {
    let d = q.ncols();
    for k in 0..d {
        for j in 0..k {
            let proj = q.column(k).dot(&q.column(j));
            let cj = q.column(j).clone_owned();
            q.column_mut(k).axpy(-proj, &cj, 1.0);
        }
        let norm = q.column(k).norm();
        q.column_mut(k).unscale_mut(norm);
    }
    q
}

/// Proper rigid motion minimizing the RMSD of `pred` onto `target`, and the
/// minimized RMSD.
pub fn kabsch_align(pred: &PointCloud, target: &PointCloud) -> Result<(RigidTransform, f64)> {
    pred.check_same_shape(target)?;
    let cp = DVector::from_vec(pred.centroid());
    let ct = DVector::from_vec(target.centroid());
    let p = pred.centered().to_matrix();
    let t = target.centered().to_matrix();
    let rotation = kabsch_rotation(p.transpose() * t);
    let translation = &ct - &rotation * cp;
    let g = RigidTransform {
        linear: rotation,
        translation,
    };
    let aligned = apply_transform(pred, &g)?;
    let sq: f64 = aligned
        .coords
        .iter()
        .zip(target.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((g, (sq / pred.n() as f64).sqrt()))
}

/// Proper rotation `R` maximizing `tr(R·cov)` for the `d × d` cross
/// covariance `cov = Pᵀ·T` of centered clouds; identity when `cov` vanishes.
pub(crate) fn kabsch_rotation(cov: DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    if cov.amax() == 0.0 {
        return DMatrix::identity(d, d);
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let mut correction = DMatrix::<f64>::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        let weakest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(d - 1);
        correction[(weakest, weakest)] = -1.0;
    }
    polish_orthogonal(v * correction * u.transpose())
}

/// RMSD after removing only the centroid offset.
pub fn centered_rmsd(pred: &PointCloud, target: &PointCloud) -> Result<f64> {
    pred.check_same_shape(target)?;
    let p = pred.centered();
    let t = target.centered();
    let sq: f64 = p
        .coords
        .iter()
        .zip(&t.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / pred.n() as f64).sqrt())
}
