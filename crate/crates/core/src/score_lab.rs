//! Score-estimation lab for distance-based denoising losses.
//!
//! A two-particle, one-dimensional toy density is convolved with the
//! forward noising kernel on a tensor grid, which gives an exact (up to
//! quadrature) noise-prediction target `−σ_t·∇log p(x_t)`. Monte-Carlo
//! estimators drawn from the discretized posterior are compared against it,
//! both raw and after projection onto the row space of the distance Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::energy::NORM_EPS;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::par::Exec;
use crate::rng;

/// Grid nodes per axis for the quadrature.
pub const GRID_NODES: usize = 801;
/// Coarse grid used by the consistency check.
pub const COARSE_GRID_NODES: usize = 401;
/// Largest allowed difference between the coarse and fine scores.
pub const GRID_TOLERANCE: f64 = 1e-4;
/// Relative singular-value cutoff for the projector.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Rows are unordered pairs `(i, j)`, `i < j`, in lexicographic order;
/// columns are the `n·d` coordinates.
pub fn distance_jacobian(x: &PointCloud) -> DMatrix<f64> {
    let (n, d) = (x.n(), x.d());
    let pairs = n * n.saturating_sub(1) / 2;
    let mut jac = DMatrix::zeros(pairs, n * d);
    let mut row = 0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (x.row(i), x.row(j));
            let norm = (a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
            for k in 0..d {
                let u = (a[k] - b[k]) / norm;
                jac[(row, i * d + k)] = u;
                jac[(row, j * d + k)] = -u;
            }
            row += 1;
        }
    }
    jac
}

/// Orthogonal projector onto the row space of `jac`.
pub fn projector_onto_row_space(jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = jac.ncols();
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite Jacobian".into()));
    }
    if jac.nrows() == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, cols));
    }
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.max();
    let mut p = DMatrix::zeros(cols, cols);
    if top == 0.0 {
        return Ok(p);
    }
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > RANK_CUTOFF * top {
            let v = v_t.row(k).transpose();
            p += &v * v.transpose();
        }
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToyDensity {
    /// `p(x) ∝ exp(−(|x₁ − x₂| − r0)² / 2s²)`, restricted to the quadrature box.
    PairDistanceGaussian { r0: f64, s: f64 },
    /// `p(x) ∝ exp(−|x|² / 2s²)`.
    IsotropicGaussian { s: f64 },
}

impl ToyDensity {
    pub fn validate(&self) -> Result<()> {
        let (s, r0) = match *self {
            ToyDensity::PairDistanceGaussian { r0, s } => (s, r0),
            ToyDensity::IsotropicGaussian { s } => (s, 0.0),
        };
        if !(s > 0.0 && s.is_finite() && r0.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad density parameters s={s}, r0={r0}")));
        }
        Ok(())
    }

    /// Half-width of the square quadrature box centered at the origin.
    pub fn half_width(&self) -> f64 {
        match *self {
            ToyDensity::PairDistanceGaussian { r0, s } => 8.0 * s + r0.abs(),
            ToyDensity::IsotropicGaussian { s } => 8.0 * s,
        }
    }

    fn log_density(&self, x1: f64, x2: f64) -> f64 {
        match *self {
            ToyDensity::PairDistanceGaussian { r0, s } => {
                let u = (x1 - x2).abs() - r0;
                -u * u / (2.0 * s * s)
            }
            ToyDensity::IsotropicGaussian { s } => -(x1 * x1 + x2 * x2) / (2.0 * s * s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyDiffusionConfig {
    pub sigma_t: f64,
    pub alpha_t: f64,
    pub n_particles: usize,
    pub d: usize,
    pub mc_samples: usize,
    /// Number of trial batches.
    pub trials: usize,
    /// Estimator draws inside one trial batch.
    pub draws_per_trial: usize,
    pub seed: u64,
}

impl Default for ToyDiffusionConfig {
    fn default() -> Self {
        let sigma_t = 0.05;
        Self {
            sigma_t,
            alpha_t: (1.0 - sigma_t * sigma_t).sqrt(),
            n_particles: 2,
            d: 1,
            mc_samples: 64,
            trials: 200,
            draws_per_trial: 32,
            seed: 0,
        }
    }
}

impl ToyDiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_t = {} must be positive", self.sigma_t)));
        }
        if !(self.alpha_t > 0.0 && self.alpha_t.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha_t = {} must be positive", self.alpha_t)));
        }
        if self.mc_samples < 2 {
            return Err(Error::InvalidParameter("mc_samples must be at least 2".into()));
        }
        if self.draws_per_trial < 2 || self.trials == 0 {
            return Err(Error::InvalidParameter("need at least one trial of two draws".into()));
        }
        if self.n_particles != 2 || self.d != 1 {
            return Err(Error::UnsupportedDimension(self.n_particles * self.d));
        }
        Ok(())
    }
}

/// Default density of the experiment.
pub fn default_density() -> ToyDensity {
    ToyDensity::PairDistanceGaussian { r0: 1.0, s: 0.25 }
}

/// Default noisy point of the experiment.
pub fn default_point() -> PointCloud {
    PointCloud::new(2, 1, vec![-0.45, 0.6]).expect("valid cloud")
}

/// The posterior `p(x | x_t)` discretized on a tensor grid with trapezoid weights.
struct GridPosterior {
    axis: Vec<f64>,
    cdf: Vec<f64>,
    mean: [f64; 2],
}

impl GridPosterior {
    fn build(density: &ToyDensity, x_t: &PointCloud, cfg: &ToyDiffusionConfig, nodes: usize) -> Result<Self> {
        density.validate()?;
        check_point(x_t)?;
        let b = density.half_width();
        let h = 2.0 * b / (nodes - 1) as f64;
        let axis: Vec<f64> = (0..nodes).map(|k| -b + k as f64 * h).collect();
        let (t1, t2) = (x_t.coords()[0], x_t.coords()[1]);
        let (a, s2) = (cfg.alpha_t, 2.0 * cfg.sigma_t * cfg.sigma_t);
        let edge = |k: usize| if k == 0 || k == nodes - 1 { 0.5f64.ln() } else { 0.0 };
        let mut logw = Vec::with_capacity(nodes * nodes);
        for (i, &x1) in axis.iter().enumerate() {
            let k1 = -(t1 - a * x1).powi(2) / s2 + edge(i);
            for (j, &x2) in axis.iter().enumerate() {
                logw.push(density.log_density(x1, x2) + k1 - (t2 - a * x2).powi(2) / s2 + edge(j));
            }
        }
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = Vec::with_capacity(logw.len());
        let (mut total, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (k, lw) in logw.iter().enumerate() {
            let w = (lw - top).exp();
            total += w;
            m1 += w * axis[k / nodes];
            m2 += w * axis[k % nodes];
            cdf.push(total);
        }
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Degenerate("posterior has no mass on the grid".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            axis,
            cdf,
            mean: [m1 / total, m2 / total],
        })
    }

    fn sample(&self, r: &mut rng::Rng) -> [f64; 2] {
        let u: f64 = r.random();
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let n = self.axis.len();
        [self.axis[k / n], self.axis[k % n]]
    }

    fn score(&self, x_t: &PointCloud, cfg: &ToyDiffusionConfig) -> Vec<f64> {
        (0..2)
            .map(|k| (x_t.coords()[k] - cfg.alpha_t * self.mean[k]) / cfg.sigma_t)
            .collect()
    }
}

fn check_point(x_t: &PointCloud) -> Result<()> {
    if x_t.n() != 2 || x_t.d() != 1 {
        return Err(Error::UnsupportedDimension(x_t.n() * x_t.d()));
    }
    Ok(())
}

/// `−σ_t·∇log p(x_t)` by quadrature on [`GRID_NODES`]² nodes, checked
/// against the [`COARSE_GRID_NODES`]² result.
pub fn quadrature_score(density: &ToyDensity, x_t: &PointCloud, cfg: &ToyDiffusionConfig) -> Result<Vec<f64>> {
    let fine = quadrature_score_on(density, x_t, cfg, GRID_NODES)?;
    let coarse = quadrature_score_on(density, x_t, cfg, COARSE_GRID_NODES)?;
    let gap = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > GRID_TOLERANCE {
        return Err(Error::GridTooCoarse(gap));
    }
    Ok(fine)
}

/// Quadrature score on a single grid of `nodes`² points, unchecked.
pub fn quadrature_score_on(
    density: &ToyDensity,
    x_t: &PointCloud,
    cfg: &ToyDiffusionConfig,
    nodes: usize,
) -> Result<Vec<f64>> {
    if nodes < 3 {
        return Err(Error::InvalidParameter(format!("{nodes} grid nodes")));
    }
    Ok(GridPosterior::build(density, x_t, cfg, nodes)?.score(x_t, cfg))
}

fn draw_estimators(
    post: &GridPosterior,
    x_t: &PointCloud,
    cfg: &ToyDiffusionConfig,
    proj: &DMatrix<f64>,
    r: &mut rng::Rng,
) -> (DVector<f64>, DVector<f64>) {
    let mut mean = [0.0; 2];
    for _ in 0..cfg.mc_samples {
        let x = post.sample(r);
        mean[0] += x[0];
        mean[1] += x[1];
    }
    let m = cfg.mc_samples as f64;
    let eps_mse = DVector::from_fn(2, |k, _| (x_t.coords()[k] - cfg.alpha_t * mean[k] / m) / cfg.sigma_t);
    let eps_dist = proj * &eps_mse;
    (eps_mse, eps_dist)
}

/// One draw of `(eps_mse, eps_dist)` from `mc_samples` posterior samples.
pub fn mc_estimators(
    density: &ToyDensity,
    x_t: &PointCloud,
    cfg: &ToyDiffusionConfig,
    r: &mut rng::Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.mc_samples == 0 {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let post = GridPosterior::build(density, x_t, cfg, GRID_NODES)?;
    let proj = projector_onto_row_space(&distance_jacobian(x_t))?;
    let (a, b) = draw_estimators(&post, x_t, cfg, &proj, r);
    Ok((a.as_slice().to_vec(), b.as_slice().to_vec()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub bias_dist: f64,
    pub bias_mse: f64,
    pub var_dist: f64,
    pub var_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasVarianceReport {
    pub rows: Vec<TrialRow>,
    /// Quadrature reference `−σ_t·∇log p(x_t)`.
    pub score: Vec<f64>,
    /// Reference for the distance estimator: the projected score.
    pub projected_score: Vec<f64>,
    pub mean_mse: Vec<f64>,
    pub mean_dist: Vec<f64>,
    pub bias_norm_dist: f64,
    pub bias_norm_mse: f64,
    pub var_trace_dist: f64,
    pub var_trace_mse: f64,
    /// `sqrt(trace(cov) / draws)`, the RMS size of the pooled mean's error.
    pub se_dist: f64,
    pub se_mse: f64,
    /// Per-coordinate standard errors of the pooled `eps_mse` mean.
    pub se_mse_components: Vec<f64>,
}

impl BiasVarianceReport {
    /// Fraction of trial batches where the distance estimator's variance
    /// trace does not exceed the MSE estimator's.
    pub fn fraction_var_dist_le_mse(&self) -> f64 {
        let hits = self.rows.iter().filter(|r| r.var_dist <= r.var_mse).count();
        hits as f64 / self.rows.len() as f64
    }

    /// Largest `|mean_mse − score|` in units of its standard error.
    pub fn max_mse_z_score(&self) -> f64 {
        self.mean_mse
            .iter()
            .zip(&self.score)
            .zip(&self.se_mse_components)
            .map(|((m, s), se)| (m - s).abs() / se)
            .fold(0.0, f64::max)
    }
}

struct Moments {
    mean: DVector<f64>,
    trace_cov: f64,
    var: DVector<f64>,
}

fn moments(xs: &[DVector<f64>]) -> Moments {
    let n = xs.len() as f64;
    let dim = xs[0].len();
    let mean = xs.iter().fold(DVector::zeros(dim), |acc, x| acc + x) / n;
    let var = xs
        .iter()
        .fold(DVector::zeros(dim), |acc: DVector<f64>, x| acc + (x - &mean).map(|v| v * v))
        / (n - 1.0);
    Moments {
        trace_cov: var.sum(),
        mean,
        var,
    }
}

/// Runs `cfg.trials` batches of `cfg.draws_per_trial` estimator draws at
/// `x_t`; batches run in parallel on independent random streams.
pub fn bias_variance_experiment(
    density: &ToyDensity,
    x_t: &PointCloud,
    cfg: &ToyDiffusionConfig,
    exec: Exec,
) -> Result<BiasVarianceReport> {
    cfg.validate()?;
    let score = quadrature_score(density, x_t, cfg)?;
    let post = GridPosterior::build(density, x_t, cfg, GRID_NODES)?;
    let proj = projector_onto_row_space(&distance_jacobian(x_t))?;
    let score_v = DVector::from_vec(score.clone());
    let projected = &proj * &score_v;

    let batches: Vec<Vec<(DVector<f64>, DVector<f64>)>> = exec.map(cfg.trials, |t| {
        let mut r = rng::stream(cfg.seed, t as u64);
        (0..cfg.draws_per_trial)
            .map(|_| draw_estimators(&post, x_t, cfg, &proj, &mut r))
            .collect()
    });

    let rows = batches
        .iter()
        .enumerate()
        .map(|(trial, draws)| {
            let mse: Vec<_> = draws.iter().map(|d| d.0.clone()).collect();
            let dist: Vec<_> = draws.iter().map(|d| d.1.clone()).collect();
            let (mm, md) = (moments(&mse), moments(&dist));
            TrialRow {
                trial,
                bias_dist: (&md.mean - &projected).norm(),
                bias_mse: (&mm.mean - &score_v).norm(),
                var_dist: md.trace_cov,
                var_mse: mm.trace_cov,
            }
        })
        .collect();

    let all_mse: Vec<_> = batches.iter().flatten().map(|d| d.0.clone()).collect();
    let all_dist: Vec<_> = batches.iter().flatten().map(|d| d.1.clone()).collect();
    let (mm, md) = (moments(&all_mse), moments(&all_dist));
    let draws = all_mse.len() as f64;
    Ok(BiasVarianceReport {
        rows,
        bias_norm_dist: (&md.mean - &projected).norm(),
        bias_norm_mse: (&mm.mean - &score_v).norm(),
        var_trace_dist: md.trace_cov,
        var_trace_mse: mm.trace_cov,
        se_dist: (md.trace_cov / draws).sqrt(),
        se_mse: (mm.trace_cov / draws).sqrt(),
        se_mse_components: mm.var.iter().map(|v| (v / draws).sqrt()).collect(),
        mean_mse: mm.mean.as_slice().to_vec(),
        mean_dist: md.mean.as_slice().to_vec(),
        projected_score: projected.as_slice().to_vec(),
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_distances;
    use crate::rigidity::rigid_motion_fields;

    fn cloud(v: &[f64], d: usize) -> PointCloud {
        PointCloud::new(v.len() / d, d, v.to_vec()).unwrap()
    }

    #[test]
    fn jacobian_examples() {
        let j = distance_jacobian(&cloud(&[0.0, 1.0], 1));
        assert_eq!(j.shape(), (1, 2));
        assert!((j[(0, 0)] + 1.0).abs() < 1e-12 && (j[(0, 1)] - 1.0).abs() < 1e-12);

        let mut r = rng::seeded(4);
        let x = PointCloud::gaussian(5, 3, &mut r).unwrap();
        let j = distance_jacobian(&x);
        let t = DVector::from_fn(15, |k, _| [0.3, -1.0, 2.0][k % 3]);
        assert!((&j * t).amax() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut r = rng::seeded(11);
        for (n, d) in [(3, 1), (4, 2), (5, 3)] {
            let x = PointCloud::gaussian(n, d, &mut r).unwrap();
            let j = distance_jacobian(&x);
            let h = 1e-6;
            for c in 0..n * d {
                let mut plus = x.coords().to_vec();
                let mut minus = x.coords().to_vec();
                plus[c] += h;
                minus[c] -= h;
                let dp = pairwise_distances(&cloud(&plus, d));
                let dm = pairwise_distances(&cloud(&minus, d));
                let mut row = 0;
                for i in 0..n {
                    for k in i + 1..n {
                        let fd = (dp.get(i, k) - dm.get(i, k)) / (2.0 * h);
                        assert!((fd - j[(row, c)]).abs() < 1e-6);
                        row += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn projector_axioms() {
        let p = projector_onto_row_space(&distance_jacobian(&cloud(&[0.0, 1.0], 1))).unwrap();
        let half = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((&p - half).amax() < 1e-12);

        let mut r = rng::seeded(2);
        for d in 1..=3 {
            for n in 2..=6 {
                let x = PointCloud::gaussian(n, d, &mut r).unwrap();
                let p = projector_onto_row_space(&distance_jacobian(&x)).unwrap();
                assert!((&p * &p - &p).amax() < 1e-10);
                assert!((&p - p.transpose()).amax() < 1e-10);
                for v in rigid_motion_fields(&x) {
                    assert!((&p * v).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn isotropic_closed_form() {
        let cfg = ToyDiffusionConfig::default();
        let s = 1.0;
        let density = ToyDensity::IsotropicGaussian { s };
        let mut r = rng::seeded(3);
        for _ in 0..20 {
            let x_t = cloud(&[r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)], 1);
            let got = quadrature_score(&density, &x_t, &cfg).unwrap();
            let denom = cfg.alpha_t.powi(2) * s * s + cfg.sigma_t.powi(2);
            for k in 0..2 {
                let want = cfg.sigma_t * x_t.coords()[k] / denom;
                assert!((got[k] - want).abs() < 1e-6, "{} vs {want}", got[k]);
            }
        }
    }

    #[test]
    fn pair_density_symmetries() {
        let cfg = ToyDiffusionConfig::default();
        let density = default_density();
        let s = quadrature_score(&density, &default_point(), &cfg).unwrap();
        assert!((s[0] + s[1]).abs() < 1e-6);

        let swapped = quadrature_score(&density, &cloud(&[0.6, -0.45], 1), &cfg).unwrap();
        assert!((swapped[0] - s[1]).abs() < 1e-9 && (swapped[1] - s[0]).abs() < 1e-9);

        let same = quadrature_score(&density, &cloud(&[0.2, 0.2], 1), &cfg).unwrap();
        assert!((same[0] + same[1]).abs() < 1e-9);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let cfg = ToyDiffusionConfig {
            sigma_t: 1e-3,
            alpha_t: 1.0,
            ..Default::default()
        };
        let x_t = cloud(&[-0.4537, 0.6021], 1);
        let err = quadrature_score(&default_density(), &x_t, &cfg).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(_)));
    }

    #[test]
    fn estimator_construction() {
        let cfg = ToyDiffusionConfig::default();
        let mut r = rng::seeded(0);
        let x_t = default_point();
        let p = projector_onto_row_space(&distance_jacobian(&x_t)).unwrap();
        for _ in 0..10 {
            let (mse, dist) = mc_estimators(&default_density(), &x_t, &cfg, &mut r).unwrap();
            let proj = &p * DVector::from_vec(mse.clone());
            assert!((proj - DVector::from_vec(dist.clone())).amax() < 1e-15);
            assert!((dist[0] + dist[1]).abs() < 1e-12);
            assert!(dist.iter().map(|v| v * v).sum::<f64>() <= mse.iter().map(|v| v * v).sum::<f64>() + 1e-12);
        }
    }

    #[test]
    fn small_noise_limit() {
        let cfg = ToyDiffusionConfig {
            sigma_t: 0.02,
            alpha_t: 1.0,
            trials: 10,
            ..Default::default()
        };
        let rep = bias_variance_experiment(&default_density(), &default_point(), &cfg, Exec::Parallel).unwrap();
        assert!(rep.bias_norm_dist < 4.0 * rep.se_dist);
        assert!(rep.bias_norm_mse < 4.0 * rep.se_mse);
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = ToyDiffusionConfig {
            trials: 6,
            ..Default::default()
        };
        let a = bias_variance_experiment(&default_density(), &default_point(), &cfg, Exec::Parallel).unwrap();
        let b = bias_variance_experiment(&default_density(), &default_point(), &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        assert!(a.rows.iter().all(|r| r.var_dist <= r.var_mse));
    }
}
