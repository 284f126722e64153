//! Ground-state prediction for random spin glasses: couplings go in,
//! per-site logits come out.

use std::path::Path;

use rand::seq::SliceRandom;

use super::config::{LossKind, TrainConfig};
use super::csv::{field, CsvTable};
use super::format::{Array, Container, SPIN_MAGIC};
use crate::autodiff::{AdamState, Mlp, MlpConfig, Tape, Tensor};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng;
use crate::spin::{
    ground_state_exhaustive, local_field, predict_config, record_cross_entropy_loss, record_local_energy_loss,
    record_margin_loss, record_true_energy_loss, sample_hamiltonian_with, true_energy, LatticeHamiltonian,
    SpinConfig, SpinLogits, MAX_EXHAUSTIVE_SITES,
};

pub const SPINS_TRAIN_HEADER: [&str; 5] = [
    "epoch",
    "split",
    "mean_pred_energy",
    "mean_ground_energy",
    "accuracy_per_site",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSample {
    pub hamiltonian: LatticeHamiltonian,
    pub ground: SpinConfig,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinDataset {
    pub lattice: usize,
    pub seed: u64,
    pub samples: Vec<SpinSample>,
}

/// `size` random `l × l` glasses with exact ground states; sample `i`
/// draws from stream `i` of `seed`.
pub fn gen_spin_dataset(l: usize, size: usize, seed: u64, exec: Exec) -> Result<SpinDataset> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!("lattice side {l} < 2")));
    }
    if l * l > MAX_EXHAUSTIVE_SITES {
        return Err(Error::TooLarge(format!("{l}x{l} lattice exceeds the exhaustive solver")));
    }
    let samples = exec.try_map(size, |i| {
        let hamiltonian = sample_hamiltonian_with(l, &mut rng::stream(seed, i as u64))?;
        let (ground, energy) = ground_state_exhaustive(&hamiltonian, Exec::Sequential)?;
        Ok::<_, Error>(SpinSample {
            hamiltonian,
            ground,
            energy,
        })
    })?;
    Ok(SpinDataset {
        lattice: l,
        seed,
        samples,
    })
}

impl SpinDataset {
    fn bonds(&self) -> usize {
        2 * self.lattice * (self.lattice - 1)
    }

    pub fn to_container(&self) -> Result<Container> {
        let (s, l) = (self.samples.len(), self.lattice);
        Ok(Container::new(
            SPIN_MAGIC,
            self.seed,
            vec![
                Array::new(vec![1], vec![l as f64])?,
                Array::new(
                    vec![s, self.bonds()],
                    self.samples.iter().flat_map(|x| x.hamiltonian.features()).collect(),
                )?,
                Array::new(
                    vec![s, l, l],
                    self.samples.iter().flat_map(|x| x.ground.as_f64()).collect(),
                )?,
                Array::new(vec![s], self.samples.iter().map(|x| x.energy).collect())?,
            ],
        ))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = &c.array(0, 1)?.data;
        let l = *meta.first().ok_or_else(|| Error::Format("missing lattice size".into()))? as usize;
        if l < 2 {
            return Err(Error::Format(format!("lattice side {l}")));
        }
        let couplings = c.array(1, 2)?;
        let ground = c.array(2, 3)?;
        let energy = c.array(3, 1)?;
        let s = energy.data.len();
        let e = 2 * l * (l - 1);
        if couplings.shape != [s, e] || ground.shape != [s, l, l] {
            return Err(Error::Format("inconsistent spin dataset arrays".into()));
        }
        let half = l * (l - 1);
        let samples = (0..s)
            .map(|i| {
                let j = &couplings.data[i * e..(i + 1) * e];
                let hamiltonian = LatticeHamiltonian::new(l, l, j[..half].to_vec(), j[half..].to_vec())?;
                let spins = ground.data[i * l * l..(i + 1) * l * l].iter().map(|&v| v as i8).collect();
                Ok(SpinSample {
                    hamiltonian,
                    ground: SpinConfig::new(l, l, spins)?,
                    energy: energy.data[i],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            lattice: l,
            seed: c.seed,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, SPIN_MAGIC)?)
    }

    fn inputs(&self, idx: &[usize]) -> Result<Tensor> {
        let data = idx.iter().flat_map(|&i| self.samples[i].hamiltonian.features()).collect();
        Tensor::matrix(idx.len(), self.bonds(), data)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpinEval {
    pub mean_pred_energy: f64,
    pub mean_ground_energy: f64,
    pub accuracy_per_site: f64,
}

/// Scores predictions: energy of the sign configuration (minimized over the
/// global flip) and the per-site agreement with the ground state under the
/// better of the two flips.
pub fn score_predictions(data: &SpinDataset, logits: &Tensor) -> Result<SpinEval> {
    let (l, n) = (data.lattice, data.lattice * data.lattice);
    let mut e = SpinEval::default();
    for (s, z) in data.samples.iter().zip(logits.data().chunks(n)) {
        let pred = predict_config(&SpinLogits::new(l, l, z.to_vec())?);
        let energy = true_energy(&s.hamiltonian, &pred)?.min(true_energy(&s.hamiltonian, &pred.flipped())?);
        let agree = pred.spins().iter().zip(s.ground.spins()).filter(|(a, b)| a == b).count() as f64 / n as f64;
        e.mean_pred_energy += energy;
        e.mean_ground_energy += s.energy;
        e.accuracy_per_site += agree.max(1.0 - agree);
    }
    let m = data.samples.len().max(1) as f64;
    e.mean_pred_energy /= m;
    e.mean_ground_energy /= m;
    e.accuracy_per_site /= m;
    Ok(e)
}

pub fn evaluate_spins(mlp: &Mlp, data: &SpinDataset) -> Result<SpinEval> {
    let idx: Vec<usize> = (0..data.samples.len()).collect();
    score_predictions(data, &mlp.forward(&data.inputs(&idx)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinEpoch {
    pub epoch: usize,
    pub split: &'static str,
    pub eval: SpinEval,
}

#[derive(Clone, Debug)]
pub struct SpinRun {
    pub config: TrainConfig,
    pub mlp: Mlp,
    pub epochs: Vec<SpinEpoch>,
    pub test: SpinEval,
}

impl SpinRun {
    pub fn metrics_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(SPINS_TRAIN_HEADER);
        for e in &self.epochs {
            t.push(vec![
                field(e.epoch),
                field(e.split),
                field(e.eval.mean_pred_energy),
                field(e.eval.mean_ground_energy),
                field(e.eval.accuracy_per_site),
            ])
            .expect("fixed width");
        }
        t
    }
}

/// Train and test sets of a run, derived from the seed.
pub fn spin_splits(cfg: &TrainConfig, exec: Exec) -> Result<[SpinDataset; 2]> {
    Ok([
        gen_spin_dataset(cfg.lattice, cfg.train_size, rng::derive(cfg.seed, 1), exec)?,
        gen_spin_dataset(cfg.lattice, cfg.test_size, rng::derive(cfg.seed, 3), exec)?,
    ])
}

struct Targets {
    spins: Vec<f64>,
    fields: Vec<f64>,
    couplings: Vec<f64>,
}

fn targets(data: &SpinDataset, h0: f64) -> Result<Targets> {
    let mut t = Targets {
        spins: Vec::new(),
        fields: Vec::new(),
        couplings: Vec::new(),
    };
    for s in &data.samples {
        t.spins.extend(s.ground.as_f64());
        t.fields.extend(local_field(&s.hamiltonian, &s.ground, h0)?);
        t.couplings.extend(s.hamiltonian.features());
    }
    Ok(t)
}

fn gather(src: &[f64], width: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| src[i * width..(i + 1) * width].iter().copied()).collect()
}

/// Trains on in-memory splits generated from `cfg.seed`; `exec` drives only
/// dataset generation.
pub fn train_spin(cfg: &TrainConfig, exec: Exec) -> Result<SpinRun> {
    cfg.validate()?;
    if !LossKind::SPINS.contains(&cfg.loss) {
        return Err(Error::Config(format!("'{}' is not a spin loss", cfg.loss.name())));
    }
    let [train, test] = spin_splits(cfg, exec)?;
    let l = cfg.lattice;
    let (n, e) = (l * l, 2 * l * (l - 1));
    let bonds: Vec<(usize, usize)> = train.samples[0].hamiltonian.bonds().iter().map(|b| (b.0, b.1)).collect();
    let tg = targets(&train, cfg.h0)?;
    let mut mlp = Mlp::init(
        MlpConfig {
            input_dim: e,
            hidden_dim: cfg.hidden_dim,
            output_dim: n,
            n_hidden_layers: cfg.hidden_layers,
            activation: cfg.activation,
        },
        rng::derive(cfg.seed, 4),
    )?;
    let mut adam = AdamState::new(cfg.lr, mlp.params())?;
    let mut shuffle = rng::seeded(rng::derive(cfg.seed, 5));
    let mut order: Vec<usize> = (0..train.samples.len()).collect();
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let x = tape.constant(train.inputs(batch)?);
            let (z, handles) = mlp.record(&mut tape, x)?;
            let loss = match cfg.loss {
                LossKind::CrossEntropy => record_cross_entropy_loss(&mut tape, z, &gather(&tg.spins, n, batch))?,
                LossKind::Margin => record_margin_loss(&mut tape, z, &gather(&tg.spins, n, batch))?,
                LossKind::LocalEnergy => {
                    record_local_energy_loss(&mut tape, z, &gather(&tg.fields, n, batch), cfg.temperature)?
                }
                _ => record_true_energy_loss(&mut tape, z, &bonds, &gather(&tg.couplings, e, batch), cfg.temperature)?,
            };
            let grads = tape.backward(loss)?;
            let g: Vec<&Tensor> = handles.iter().map(|h| grads.wrt(*h)).collect::<Result<_>>()?;
            adam.step(mlp.params_mut(), &g)?;
        }
        epochs.push(SpinEpoch {
            epoch,
            split: "train",
            eval: evaluate_spins(&mlp, &train)?,
        });
        epochs.push(SpinEpoch {
            epoch,
            split: "test",
            eval: evaluate_spins(&mlp, &test)?,
        });
    }
    let test_eval = epochs.last().map(|e| e.eval).unwrap_or_default();
    Ok(SpinRun {
        config: cfg.clone(),
        mlp,
        epochs,
        test: test_eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_consistency() {
        let d = gen_spin_dataset(3, 40, 5, Exec::Parallel).unwrap();
        for s in &d.samples {
            assert!((true_energy(&s.hamiltonian, &s.ground).unwrap() - s.energy).abs() < 1e-12);
            for i in 0..9 {
                assert!(true_energy(&s.hamiltonian, &s.ground.with_flip(i)).unwrap() >= s.energy - 1e-12);
            }
        }
        let again = gen_spin_dataset(3, 40, 5, Exec::Sequential).unwrap();
        assert_eq!(d.to_container().unwrap().to_bytes(), again.to_container().unwrap().to_bytes());
        assert!(gen_spin_dataset(6, 1, 0, Exec::Sequential).is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let d = gen_spin_dataset(4, 10, 1, Exec::Parallel).unwrap();
        let bytes = d.to_container().unwrap().to_bytes();
        let back = SpinDataset::from_container(&Container::from_bytes(&bytes, SPIN_MAGIC).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn scoring_rules() {
        let d = gen_spin_dataset(3, 5, 2, Exec::Sequential).unwrap();
        let exact: Vec<f64> = d.samples.iter().flat_map(|s| s.ground.as_f64()).collect();
        let e = score_predictions(&d, &Tensor::matrix(5, 9, exact.clone()).unwrap()).unwrap();
        assert!((e.mean_pred_energy - e.mean_ground_energy).abs() < 1e-12);
        assert_eq!(e.accuracy_per_site, 1.0);
        let flipped: Vec<f64> = exact.iter().map(|v| -v).collect();
        let f = score_predictions(&d, &Tensor::matrix(5, 9, flipped).unwrap()).unwrap();
        assert_eq!(e, f);
    }

    #[test]
    fn short_training_runs_each_loss() {
        for loss in LossKind::SPINS {
            let mut cfg = TrainConfig::spins(loss, 3);
            cfg.lattice = 3;
            cfg.train_size = 64;
            cfg.test_size = 16;
            cfg.epochs = 2;
            cfg.hidden_dim = 16;
            cfg.batch_size = 32;
            let a = train_spin(&cfg, Exec::Parallel).unwrap();
            let b = train_spin(&cfg, Exec::Sequential).unwrap();
            assert_eq!(a.metrics_csv(), b.metrics_csv());
            assert!(a.test.mean_pred_energy >= a.test.mean_ground_energy - 1e-12);
        }
        assert!(train_spin(&TrainConfig::shapes(LossKind::Mse, 0), Exec::Sequential).is_err());
    }
}
