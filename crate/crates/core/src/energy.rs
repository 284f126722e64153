//! The pairwise-distance energy loss, its sparse-edge variant and the
//! coordinate baselines (MSE and Kabsch-aligned MSE).
//!
//! Every loss returns its value together with the exact gradient with
//! respect to the prediction, so trainers can feed it straight into the
//! autodiff tape as an external node.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{kabsch_rotation, PointCloud};
use crate::par::Exec;
use crate::rigidity::EdgeSet;

/// Smoothing added under the square root of every distance in the loss.
pub const NORM_EPS: f64 = 1e-12;

/// Default clamp for the inverse schemes.
pub const DEFAULT_FLOOR: f64 = 1e-3;

/// Default decay length of the exponential scheme.
pub const DEFAULT_DECAY: f64 = 1.0;

/// Full pairwise losses refuse clouds at or above this size.
pub const FULL_LOSS_MAX_PARTICLES: usize = 30_000;

/// Rule producing pair stiffnesses `k_ij` from the target geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientScheme {
    Constant { k: f64 },
    InverseDistance { floor: f64 },
    InverseSquared { floor: f64 },
    ExponentialDecay { lambda: f64 },
}

impl Default for CoefficientScheme {
    fn default() -> Self {
        CoefficientScheme::Constant { k: 1.0 }
    }
}

impl CoefficientScheme {
    pub fn constant() -> Self {
        Self::Constant { k: 1.0 }
    }

    pub fn inverse() -> Self {
        Self::InverseDistance {
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn inverse_squared() -> Self {
        Self::InverseSquared {
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn exponential() -> Self {
        Self::ExponentialDecay {
            lambda: DEFAULT_DECAY,
        }
    }

    pub fn all_defaults() -> [Self; 4] {
        [
            Self::constant(),
            Self::inverse(),
            Self::inverse_squared(),
            Self::exponential(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parameter();
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient parameter must be positive, got {p}"
            )));
        }
        Ok(())
    }

    /// Short name used in configs and CSV files.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::InverseDistance { .. } => "inverse",
            Self::InverseSquared { .. } => "inverse-squared",
            Self::ExponentialDecay { .. } => "exponential",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            Self::Constant { k } => k,
            Self::InverseDistance { floor } | Self::InverseSquared { floor } => floor,
            Self::ExponentialDecay { lambda } => lambda,
        }
    }

    pub fn from_name(name: &str, parameter: Option<f64>) -> Result<Self> {
        let scheme = match name {
            "constant" => Self::Constant {
                k: parameter.unwrap_or(1.0),
            },
            "inverse" => Self::InverseDistance {
                floor: parameter.unwrap_or(DEFAULT_FLOOR),
            },
            "inverse-squared" => Self::InverseSquared {
                floor: parameter.unwrap_or(DEFAULT_FLOOR),
            },
            "exponential" => Self::ExponentialDecay {
                lambda: parameter.unwrap_or(DEFAULT_DECAY),
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown coefficient scheme '{other}'"
                )))
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Stiffness of a pair whose target distance is `r`.
    #[inline]
    pub fn stiffness(&self, r: f64) -> f64 {
        match *self {
            Self::Constant { k } => k,
            Self::InverseDistance { floor } => 1.0 / r.max(floor),
            Self::InverseSquared { floor } => {
                let r = r.max(floor);
                1.0 / (r * r)
            }
            Self::ExponentialDecay { lambda } => (-r / lambda).exp(),
        }
    }
}

/// Loss value and its gradient with respect to the prediction (flattened
/// in the prediction's own layout).
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `n × n` stiffness matrix with a zero diagonal.
pub fn coefficients(scheme: &CoefficientScheme, target: &PointCloud) -> DMatrix<f64> {
    let n = target.n();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            scheme.stiffness(smooth_distance(target.row(i), target.row(j)))
        }
    })
}

#[inline]
fn smooth_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq + NORM_EPS * NORM_EPS).sqrt()
}

/// Sum of `k (r − r̂)²` over `pairs`, accumulating its gradient into `grad`.
/// `D` is the spatial dimension; `D = 0` selects a runtime-sized loop.
fn pair_sum<const D: usize>(
    pred: &PointCloud,
    target: &PointCloud,
    scheme: &CoefficientScheme,
    pairs: impl Iterator<Item = (usize, usize)>,
    grad: &mut [f64],
) -> f64 {
    let d = if D == 0 { pred.d() } else { D };
    let (p, t) = (pred.coords(), target.coords());
    let mut value = 0.0;
    for (i, j) in pairs {
        let (pi, pj) = (&p[i * d..][..d], &p[j * d..][..d]);
        let (ti, tj) = (&t[i * d..][..d], &t[j * d..][..d]);
        let (mut sq_hat, mut sq) = (NORM_EPS * NORM_EPS, NORM_EPS * NORM_EPS);
        for a in 0..d {
            sq_hat += (pi[a] - pj[a]) * (pi[a] - pj[a]);
            sq += (ti[a] - tj[a]) * (ti[a] - tj[a]);
        }
        let (r_hat, r) = (sq_hat.sqrt(), sq.sqrt());
        let k = scheme.stiffness(r);
        let residual = r - r_hat;
        // ∂/∂p_i of k (r - r̂)² = -2k (r - r̂) (p_i - p_j) / r̂
        let w = -2.0 * k * residual / r_hat;
        for a in 0..d {
            let g = w * (pi[a] - pj[a]);
            grad[i * d + a] += g;
            grad[j * d + a] -= g;
        }
        value += k * residual * residual;
    }
    value
}

fn pair_sum_dispatch(
    pred: &PointCloud,
    target: &PointCloud,
    scheme: &CoefficientScheme,
    pairs: impl Iterator<Item = (usize, usize)>,
    grad: &mut [f64],
) -> f64 {
    match pred.d() {
        1 => pair_sum::<1>(pred, target, scheme, pairs, grad),
        2 => pair_sum::<2>(pred, target, scheme, pairs, grad),
        3 => pair_sum::<3>(pred, target, scheme, pairs, grad),
        _ => pair_sum::<0>(pred, target, scheme, pairs, grad),
    }
}

/// Mean over unordered pairs of `k_ij (‖y_i − y_j‖ − ‖ŷ_i − ŷ_j‖)²`.
pub fn energy_loss(
    pred: &PointCloud,
    target: &PointCloud,
    scheme: &CoefficientScheme,
) -> Result<LossReport> {
    pred.check_same_shape(target)?;
    let n = pred.n();
    if n < 2 {
        return Err(Error::Degenerate("energy loss needs at least two particles".into()));
    }
    if n >= FULL_LOSS_MAX_PARTICLES {
        return Err(Error::TooLarge(format!(
            "full energy loss over {n} particles exceeds the {FULL_LOSS_MAX_PARTICLES} guard; use the sparse loss"
        )));
    }
    let mut grad = vec![0.0; n * pred.d()];
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    let value = pair_sum_dispatch(pred, target, scheme, pairs, &mut grad);
    let pairs = (n * (n - 1) / 2) as f64;
    grad.iter_mut().for_each(|g| *g /= pairs);
    Ok(LossReport {
        value: value / pairs,
        grad,
    })
}

/// The energy loss restricted to `edges`, averaged over the edges.
pub fn sparse_energy_loss(
    pred: &PointCloud,
    target: &PointCloud,
    scheme: &CoefficientScheme,
    edges: &EdgeSet,
) -> Result<LossReport> {
    pred.check_same_shape(target)?;
    if edges.n() != pred.n() {
        return Err(Error::DimensionMismatch {
            expected: pred.n(),
            got: edges.n(),
        });
    }
    if edges.is_empty() {
        return Err(Error::Degenerate("sparse energy loss needs at least one edge".into()));
    }
    let mut grad = vec![0.0; pred.n() * pred.d()];
    let value = pair_sum_dispatch(pred, target, scheme, edges.edges().iter().copied(), &mut grad);
    let m = edges.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok(LossReport {
        value: value / m,
        grad,
    })
}

/// `‖ŷ − y‖²_F / (n·d)`.
pub fn mse_loss(pred: &PointCloud, target: &PointCloud) -> Result<LossReport> {
    pred.check_same_shape(target)?;
    let scale = 1.0 / pred.coords().len() as f64;
    let mut value = 0.0;
    let grad = pred
        .coords()
        .iter()
        .zip(target.coords())
        .map(|(p, t)| {
            let diff = p - t;
            value += diff * diff;
            2.0 * scale * diff
        })
        .collect();
    Ok(LossReport {
        value: value * scale,
        grad,
    })
}

/// MSE after Kabsch-aligning the prediction onto the target. The alignment
/// is held fixed when differentiating; at the optimum this equals the
/// derivative of the aligned value.
pub fn kabsch_mse_loss(pred: &PointCloud, target: &PointCloud) -> Result<LossReport> {
    pred.check_same_shape(target)?;
    Ok(match pred.d() {
        1 => kabsch_kernel::<1>(pred, target),
        2 => kabsch_kernel::<2>(pred, target),
        3 => kabsch_kernel::<3>(pred, target),
        _ => kabsch_kernel::<0>(pred, target),
    })
}

/// Centroids, cross covariance and the aligned residual in three passes.
/// `D = 0` selects a runtime-sized loop.
fn kabsch_kernel<const D: usize>(pred: &PointCloud, target: &PointCloud) -> LossReport {
    let d = if D == 0 { pred.d() } else { D };
    let (p, t) = (pred.coords(), target.coords());
    let (cp, ct) = (pred.centroid(), target.centroid());
    let mut cov = vec![0.0; d * d];
    for (pi, ti) in p.chunks_exact(d).zip(t.chunks_exact(d)) {
        for a in 0..d {
            let x = pi[a] - cp[a];
            for b in 0..d {
                cov[a * d + b] += x * (ti[b] - ct[b]);
            }
        }
    }
    let rot = kabsch_rotation(DMatrix::from_row_slice(d, d, &cov));
    let r: Vec<f64> = (0..d * d).map(|k| rot[(k / d, k % d)]).collect();
    let scale = 1.0 / p.len() as f64;
    let mut grad = vec![0.0; p.len()];
    let mut value = 0.0;
    let mut diff = vec![0.0; d];
    for ((pi, ti), gi) in p.chunks_exact(d).zip(t.chunks_exact(d)).zip(grad.chunks_exact_mut(d)) {
        for a in 0..d {
            let mut v = ct[a] - ti[a];
            for b in 0..d {
                v += r[a * d + b] * (pi[b] - cp[b]);
            }
            diff[a] = v;
            value += v * v;
        }
        for b in 0..d {
            gi[b] = 2.0 * scale * (0..d).map(|a| r[a * d + b] * diff[a]).sum::<f64>();
        }
    }
    LossReport {
        value: value * scale,
        grad,
    }
}

/// Which loss a batch evaluation should apply.
#[derive(Clone, Debug)]
pub enum PointLoss<'a> {
    Mse,
    Kabsch,
    Energy(CoefficientScheme),
    /// Sparse energy over the edge set chosen for each sample.
    Sparse(CoefficientScheme, &'a [&'a EdgeSet]),
}

/// Evaluates `loss` on every (prediction, target) pair.
pub fn batch_loss(
    exec: Exec,
    loss: &PointLoss<'_>,
    preds: &[PointCloud],
    targets: &[PointCloud],
) -> Result<Vec<LossReport>> {
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    exec.try_map(preds.len(), |b| match loss {
        PointLoss::Mse => mse_loss(&preds[b], &targets[b]),
        PointLoss::Kabsch => kabsch_mse_loss(&preds[b], &targets[b]),
        PointLoss::Energy(s) => energy_loss(&preds[b], &targets[b], s),
        PointLoss::Sparse(s, edges) => sparse_energy_loss(&preds[b], &targets[b], s, edges[b]),
    })
}
