//! Regular-polygon prediction: a radius goes in, the polygon's vertices
//! come out, and targets are randomly rotated.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::{LossKind, TrainConfig};
use super::csv::{field, CsvTable};
use super::format::{Array, Container, SHAPE_MAGIC};
use crate::autodiff::{AdamState, Mlp, MlpConfig, Tape, Tensor};
use crate::energy::{batch_loss, PointLoss};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::par::Exec;
use crate::rigidity::{edge_pool, EdgeSet};
use crate::rng;

pub const RADIUS_MIN: f64 = 0.3;
pub const RADIUS_MAX: f64 = 5.0;
/// Lower clamp of the quality metric's argument.
pub const QUALITY_FLOOR: f64 = 1e-12;
pub const SHAPES_TRAIN_HEADER: [&str; 6] = [
    "epoch",
    "split",
    "mean_quality",
    "sigma_dangle",
    "sigma_radius",
    "loss_value",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSample {
    pub radius: f64,
    pub rotation: f64,
    pub target: PointCloud,
}

/// Vertex `k` at angle `2πk/n + rotation` on a circle of `radius`.
pub fn regular_polygon(n: usize, radius: f64, rotation: f64) -> PointCloud {
    let coords = (0..n)
        .flat_map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64 + rotation;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    PointCloud::new(n, 2, coords).expect("finite polygon")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDataset {
    pub n_vertices: usize,
    pub theta_aug: f64,
    pub seed: u64,
    pub samples: Vec<ShapeSample>,
}

/// `size` polygons with radius `U[0.3, 5]` and rotation `U[−θ, θ]`; sample
/// `i` draws from stream `i` of `seed`.
pub fn gen_shape_dataset(n_vertices: usize, theta_aug: f64, size: usize, seed: u64, exec: Exec) -> Result<ShapeDataset> {
    if n_vertices < 3 {
        return Err(Error::InvalidParameter(format!("{n_vertices} vertices")));
    }
    if !(0.0..=PI).contains(&theta_aug) {
        return Err(Error::InvalidParameter(format!("theta_aug = {theta_aug} outside [0, pi]")));
    }
    let samples = exec.map(size, |i| {
        let mut r = rng::stream(seed, i as u64);
        let radius = r.random_range(RADIUS_MIN..=RADIUS_MAX);
        let rotation = if theta_aug == 0.0 {
            0.0
        } else {
            r.random_range(-theta_aug..=theta_aug)
        };
        ShapeSample {
            radius,
            rotation,
            target: regular_polygon(n_vertices, radius, rotation),
        }
    });
    Ok(ShapeDataset {
        n_vertices,
        theta_aug,
        seed,
        samples,
    })
}

impl ShapeDataset {
    pub fn to_container(&self) -> Result<Container> {
        let s = self.samples.len();
        let targets = self.samples.iter().flat_map(|x| x.target.coords().iter().copied()).collect();
        Ok(Container::new(
            SHAPE_MAGIC,
            self.seed,
            vec![
                Array::new(vec![2], vec![self.n_vertices as f64, self.theta_aug])?,
                Array::new(vec![s], self.samples.iter().map(|x| x.radius).collect())?,
                Array::new(vec![s], self.samples.iter().map(|x| x.rotation).collect())?,
                Array::new(vec![s, self.n_vertices, 2], targets)?,
            ],
        ))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = &c.array(0, 1)?.data;
        if meta.len() != 2 {
            return Err(Error::Format("shape metadata must hold 2 values".into()));
        }
        let (n_vertices, theta_aug) = (meta[0] as usize, meta[1]);
        let radius = c.array(1, 1)?;
        let rotation = c.array(2, 1)?;
        let targets = c.array(3, 3)?;
        let s = radius.data.len();
        if rotation.data.len() != s || targets.shape != [s, n_vertices, 2] {
            return Err(Error::Format("inconsistent shape dataset arrays".into()));
        }
        let samples = (0..s)
            .map(|i| {
                let coords = targets.data[i * 2 * n_vertices..(i + 1) * 2 * n_vertices].to_vec();
                Ok(ShapeSample {
                    radius: radius.data[i],
                    rotation: rotation.data[i],
                    target: PointCloud::new(n_vertices, 2, coords)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n_vertices,
            theta_aug,
            seed: c.seed,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, SHAPE_MAGIC)?)
    }

    fn inputs(&self) -> Result<Tensor> {
        Tensor::matrix(self.samples.len(), 1, self.samples.iter().map(|s| s.radius).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quality {
    pub quality: f64,
    pub sigma_dangle: f64,
    pub sigma_radius: f64,
    pub mean_radius: f64,
    /// All points sit on the centroid; `quality` is then 0.
    pub degenerate: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `−ln(max(σ_Δangle/2π + σ_radius/r̄, 1e-12))` of the centered points,
/// taking angular gaps between angle-sorted neighbours (wrap-around
/// included). Standard deviations are population ones.
pub fn shape_quality(points: &PointCloud) -> Result<Quality> {
    if points.d() != 2 || points.n() < 3 {
        return Err(Error::InvalidParameter(format!(
            "quality needs at least 3 planar points, got {} in {}D",
            points.n(),
            points.d()
        )));
    }
    let c = points.centered();
    let radii: Vec<f64> = c.rows().map(|p| p[0].hypot(p[1])).collect();
    let (mean_radius, sigma_radius) = mean_std(&radii);
    if mean_radius <= QUALITY_FLOOR {
        return Ok(Quality {
            quality: 0.0,
            sigma_dangle: 0.0,
            sigma_radius: 0.0,
            mean_radius,
            degenerate: true,
        });
    }
    let mut angles: Vec<f64> = c.rows().map(|p| p[1].atan2(p[0])).collect();
    angles.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = angles.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(2.0 * PI + angles[0] - angles[angles.len() - 1]);
    let (_, sigma_dangle) = mean_std(&gaps);
    let arg = (sigma_dangle / (2.0 * PI) + sigma_radius / mean_radius).max(QUALITY_FLOOR);
    Ok(Quality {
        quality: -arg.ln(),
        sigma_dangle,
        sigma_radius,
        mean_radius,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShapeEval {
    pub mean_quality: f64,
    pub sigma_dangle: f64,
    pub sigma_radius: f64,
    pub degenerate: usize,
}

fn outputs_to_clouds(out: &Tensor, n_vertices: usize) -> Result<Vec<PointCloud>> {
    out.data()
        .chunks(2 * n_vertices)
        .map(|c| PointCloud::new(n_vertices, 2, c.to_vec()))
        .collect()
}

/// Mean quality statistics of the model's predictions on `data`.
pub fn evaluate_shapes(mlp: &Mlp, data: &ShapeDataset) -> Result<ShapeEval> {
    let preds = outputs_to_clouds(&mlp.forward(&data.inputs()?)?, data.n_vertices)?;
    summarize(&preds)
}

fn summarize(preds: &[PointCloud]) -> Result<ShapeEval> {
    let mut e = ShapeEval::default();
    for p in preds {
        let q = shape_quality(p)?;
        e.mean_quality += q.quality;
        e.sigma_dangle += q.sigma_dangle;
        e.sigma_radius += q.sigma_radius;
        e.degenerate += q.degenerate as usize;
    }
    let n = preds.len().max(1) as f64;
    e.mean_quality /= n;
    e.sigma_dangle /= n;
    e.sigma_radius /= n;
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeEpoch {
    pub epoch: usize,
    pub split: &'static str,
    pub eval: ShapeEval,
    pub loss_value: f64,
}

#[derive(Clone, Debug)]
pub struct ShapeRun {
    pub config: TrainConfig,
    pub mlp: Mlp,
    pub epochs: Vec<ShapeEpoch>,
    pub val: ShapeEval,
    pub test: ShapeEval,
}

impl ShapeRun {
    pub fn metrics_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(SHAPES_TRAIN_HEADER);
        for e in &self.epochs {
            t.push(vec![
                field(e.epoch),
                field(e.split),
                field(e.eval.mean_quality),
                field(e.eval.sigma_dangle),
                field(e.eval.sigma_radius),
                field(e.loss_value),
            ])
            .expect("fixed width");
        }
        t
    }
}

/// Datasets of a run: train, validation and test, derived from the seed.
pub fn shape_splits(cfg: &TrainConfig, exec: Exec) -> Result<[ShapeDataset; 3]> {
    let gen = |label: u64, size: usize| gen_shape_dataset(cfg.n_vertices, cfg.theta_aug, size, rng::derive(cfg.seed, label), exec);
    Ok([gen(1, cfg.train_size)?, gen(2, cfg.val_size)?, gen(3, cfg.test_size)?])
}

fn mlp_config(cfg: &TrainConfig) -> MlpConfig {
    MlpConfig {
        input_dim: 1,
        hidden_dim: cfg.hidden_dim,
        output_dim: 2 * cfg.n_vertices,
        n_hidden_layers: cfg.hidden_layers,
        activation: cfg.activation,
    }
}

fn point_loss<'a>(cfg: &TrainConfig, edges: &'a [&'a EdgeSet]) -> PointLoss<'a> {
    match cfg.loss {
        LossKind::Mse => PointLoss::Mse,
        LossKind::Kabsch => PointLoss::Kabsch,
        LossKind::Energy => PointLoss::Energy(cfg.coeff),
        _ => PointLoss::Sparse(cfg.coeff, edges),
    }
}

/// Mean loss over `preds` and the gradient of that mean (flattened).
fn mean_loss(
    cfg: &TrainConfig,
    preds: &[PointCloud],
    targets: &[PointCloud],
    edges: &[&EdgeSet],
) -> Result<(f64, Vec<f64>)> {
    let reports = batch_loss(Exec::Sequential, &point_loss(cfg, edges), preds, targets)?;
    let b = reports.len() as f64;
    let value = reports.iter().map(|r| r.value).sum::<f64>() / b;
    let grad = reports.iter().flat_map(|r| r.grad.iter().map(|g| g / b)).collect();
    Ok((value, grad))
}

/// Trains on in-memory splits generated from `cfg.seed`. Training itself is
/// single-threaded; `exec` only drives dataset generation.
pub fn train_shape(cfg: &TrainConfig, exec: Exec) -> Result<ShapeRun> {
    cfg.validate()?;
    if !LossKind::SHAPES.contains(&cfg.loss) {
        return Err(Error::Config(format!("'{}' is not a shape loss", cfg.loss.name())));
    }
    let [train, val, test] = shape_splits(cfg, exec)?;
    let pool = if cfg.loss == LossKind::SparseEnergy {
        edge_pool(cfg.n_vertices, 2, cfg.edge_pool, rng::derive(cfg.seed, 6), exec)?
    } else {
        Vec::new()
    };
    let mut mlp = Mlp::init(mlp_config(cfg), rng::derive(cfg.seed, 4))?;
    let mut adam = AdamState::new(cfg.lr, mlp.params())?;
    let mut shuffle = rng::seeded(rng::derive(cfg.seed, 5));
    let mut order: Vec<usize> = (0..train.samples.len()).collect();
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = Tensor::matrix(batch.len(), 1, batch.iter().map(|&i| train.samples[i].radius).collect())?;
            let targets: Vec<PointCloud> = batch.iter().map(|&i| train.samples[i].target.clone()).collect();
            let edges: Vec<&EdgeSet> = if pool.is_empty() {
                Vec::new()
            } else {
                batch.iter().map(|_| &pool[shuffle.random_range(0..pool.len())]).collect()
            };

            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let (out, handles) = mlp.record(&mut tape, xv)?;
            let preds = outputs_to_clouds(tape.value(out), cfg.n_vertices)?;
            let (value, grad) = mean_loss(cfg, &preds, &targets, &edges)?;
            let loss = tape.external(out, value, grad)?;
            let grads = tape.backward(loss)?;
            let g: Vec<&Tensor> = handles.iter().map(|h| grads.wrt(*h)).collect::<Result<_>>()?;
            adam.step(mlp.params_mut(), &g)?;
            loss_sum += value * batch.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        epochs.push(ShapeEpoch {
            epoch,
            split: "train",
            eval: evaluate_shapes(&mlp, &train)?,
            loss_value: train_loss,
        });
        let test_preds = outputs_to_clouds(&mlp.forward(&test.inputs()?)?, cfg.n_vertices)?;
        let test_edges: Vec<&EdgeSet> = if pool.is_empty() {
            Vec::new()
        } else {
            (0..test_preds.len()).map(|i| &pool[i % pool.len()]).collect()
        };
        let targets: Vec<PointCloud> = test.samples.iter().map(|s| s.target.clone()).collect();
        let (test_loss, _) = mean_loss(cfg, &test_preds, &targets, &test_edges)?;
        epochs.push(ShapeEpoch {
            epoch,
            split: "test",
            eval: summarize(&test_preds)?,
            loss_value: test_loss,
        });
    }
    let val_eval = evaluate_shapes(&mlp, &val)?;
    let test_eval = epochs.last().map(|e| e.eval).unwrap_or_default();
    Ok(ShapeRun {
        config: cfg.clone(),
        mlp,
        epochs,
        val: val_eval,
        test: test_eval,
    })
}

/// Trains once per learning rate (in parallel under `exec`) and keeps the
/// run with the best validation quality; ties go to the earlier rate.
pub fn sweep_shape_lr(cfg: &TrainConfig, lrs: &[f64], exec: Exec) -> Result<ShapeRun> {
    if lrs.is_empty() {
        return Err(Error::Config("empty learning-rate grid".into()));
    }
    let runs = exec.try_map(lrs.len(), |k| {
        let c = TrainConfig { lr: lrs[k], ..cfg.clone() };
        train_shape(&c, Exec::Sequential)
    })?;
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.val.mean_quality > best.val.mean_quality { r } else { best })
        .expect("non-empty"))
}
