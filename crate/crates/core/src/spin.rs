//! Ising spin glasses on open rectangular lattices: Hamiltonians, exact
//! ground states by enumeration, and the discrete loss family (local-field
//! free energy, cross-entropy, hinge margin, entropy-regularized true energy).
//!
//! Sites are indexed row-major, `i = r·cols + c`. Every loss is recorded on
//! an autodiff [`Tape`] over a `batch × sites` logits matrix; the
//! single-sample wrappers run that same code with a batch of one.

use rand::Rng as _;
use rand_distr::Uniform;

use crate::autodiff::{Tape, Tensor, Var};
use crate::energy::LossReport;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::rng;

/// Largest lattice (in sites) the exhaustive solver accepts.
pub const MAX_EXHAUSTIVE_SITES: usize = 26;

/// Default local-field offset.
pub const DEFAULT_H0: f64 = 4.01;

/// Default temperature for the free-energy losses.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Energies closer than this are treated as tied by the exhaustive solver.
const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeHamiltonian {
    rows: usize,
    cols: usize,
    /// `rows × (cols − 1)`; entry `(r, c)` couples `(r, c)` and `(r, c + 1)`.
    horizontal: Vec<f64>,
    /// `(rows − 1) × cols`; entry `(r, c)` couples `(r, c)` and `(r + 1, c)`.
    vertical: Vec<f64>,
}

impl LatticeHamiltonian {
    pub fn new(rows: usize, cols: usize, horizontal: Vec<f64>, vertical: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("empty lattice".into()));
        }
        if horizontal.len() != rows * (cols - 1) || vertical.len() != (rows - 1) * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} horizontal and {} vertical couplings for a {rows}x{cols} lattice",
                horizontal.len(),
                vertical.len()
            )));
        }
        if horizontal.iter().chain(&vertical).any(|j| !(-1.0..=1.0).contains(j)) {
            return Err(Error::InvalidParameter("couplings must lie in [-1, 1]".into()));
        }
        Ok(Self {
            rows,
            cols,
            horizontal,
            vertical,
        })
    }

    /// Every coupling set to `j`.
    pub fn uniform(rows: usize, cols: usize, j: f64) -> Result<Self> {
        Self::new(
            rows,
            cols,
            vec![j; rows * cols.saturating_sub(1)],
            vec![j; rows.saturating_sub(1) * cols],
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn vertical(&self) -> &[f64] {
        &self.vertical
    }

    /// `(i, j, J_ij)` for every lattice bond, horizontal bonds first.
    pub fn bonds(&self) -> Vec<(usize, usize, f64)> {
        let (rows, cols) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(self.horizontal.len() + self.vertical.len());
        for r in 0..rows {
            for c in 0..cols - 1 {
                out.push((r * cols + c, r * cols + c + 1, self.horizontal[r * (cols - 1) + c]));
            }
        }
        for r in 0..rows - 1 {
            for c in 0..cols {
                out.push((r * cols + c, (r + 1) * cols + c, self.vertical[r * cols + c]));
            }
        }
        out
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.sites()];
        for (i, j, w) in self.bonds() {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }

    /// Couplings as network input: horizontal then vertical.
    pub fn features(&self) -> Vec<f64> {
        [self.horizontal.as_slice(), self.vertical.as_slice()].concat()
    }
}

/// I.i.d. couplings uniform on `[-1, 1]` for an `l × l` lattice.
pub fn sample_hamiltonian(l: usize, seed: u64) -> Result<LatticeHamiltonian> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!("lattice side {l} < 2")));
    }
    sample_hamiltonian_with(l, &mut rng::seeded(seed))
}

pub fn sample_hamiltonian_with(l: usize, r: &mut rng::Rng) -> Result<LatticeHamiltonian> {
    let u = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let horizontal = (0..l * (l - 1)).map(|_| r.sample(u)).collect();
    let vertical = (0..l * (l - 1)).map(|_| r.sample(u)).collect();
    LatticeHamiltonian::new(l, l, horizontal, vertical)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    rows: usize,
    cols: usize,
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(rows: usize, cols: usize, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} spins for a {rows}x{cols} lattice",
                spins.len()
            )));
        }
        if spins.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidParameter("spins must be ±1".into()));
        }
        Ok(Self { rows, cols, spins })
    }

    pub fn all_up(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            spins: vec![1; rows * cols],
        }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn flipped(&self) -> Self {
        Self {
            spins: self.spins.iter().map(|s| -s).collect(),
            ..*self
        }
    }

    pub fn with_flip(&self, site: usize) -> Self {
        let mut out = self.clone();
        out.spins[site] = -out.spins[site];
        out
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| s as f64).collect()
    }

    /// Configuration for enumeration index `pattern`: site 0 is +1, site
    /// `k ≥ 1` is −1 when bit `k − 1` is set.
    pub fn from_pattern(rows: usize, cols: usize, pattern: u64) -> Self {
        let mut spins = vec![1i8; rows * cols];
        for (k, s) in spins.iter_mut().enumerate().skip(1) {
            if pattern >> (k - 1) & 1 == 1 {
                *s = -1;
            }
        }
        Self { rows, cols, spins }
    }

    /// All `2^sites` configurations (small lattices only).
    pub fn enumerate_all(rows: usize, cols: usize) -> impl Iterator<Item = SpinConfig> {
        let n = rows * cols;
        (0..1u64 << n).map(move |bits| SpinConfig {
            rows,
            cols,
            spins: (0..n).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect(),
        })
    }

    fn check_fits(&self, h: &LatticeHamiltonian) -> Result<()> {
        if self.rows != h.rows || self.cols != h.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} spins on a {}x{} lattice",
                self.rows, self.cols, h.rows, h.cols
            )));
        }
        Ok(())
    }
}

/// Per-site logits; the model's magnetization is `tanh(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinLogits {
    rows: usize,
    cols: usize,
    z: Vec<f64>,
}

impl SpinLogits {
    pub fn new(rows: usize, cols: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} logits for {rows}x{cols}", z.len())));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite logit".into()));
        }
        Ok(Self { rows, cols, z })
    }

    /// `scale · y`.
    pub fn scaled(y: &SpinConfig, scale: f64) -> Self {
        Self {
            rows: y.rows,
            cols: y.cols,
            z: y.spins.iter().map(|&s| scale * s as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    fn check_fits(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} logits for a {rows}x{cols} lattice",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// `−Σ_bonds J_ij s_i s_j`.
pub fn true_energy(h: &LatticeHamiltonian, s: &SpinConfig) -> Result<f64> {
    s.check_fits(h)?;
    Ok(-h
        .bonds()
        .iter()
        .map(|&(i, j, w)| w * (s.spins[i] * s.spins[j]) as f64)
        .sum::<f64>())
}

#[derive(Clone, Copy, Debug)]
struct Best {
    energy: f64,
    pattern: u64,
}

impl Best {
    fn better(self, other: Best) -> Best {
        if other.energy < self.energy - TIE_TOL {
            other
        } else if self.energy < other.energy - TIE_TOL {
            self
        } else if other.pattern < self.pattern {
            Best {
                energy: self.energy.min(other.energy),
                ..other
            }
        } else {
            Best {
                energy: self.energy.min(other.energy),
                ..self
            }
        }
    }
}

/// Exact ground state by Gray-code enumeration of the `2^(sites−1)`
/// configurations with site 0 up. Ties go to the smallest pattern.
pub fn ground_state_exhaustive(h: &LatticeHamiltonian, exec: Exec) -> Result<(SpinConfig, f64)> {
    let n = h.sites();
    if n > MAX_EXHAUSTIVE_SITES {
        return Err(Error::TooLarge(format!(
            "{n} sites exceeds the exhaustive limit of {MAX_EXHAUSTIVE_SITES}"
        )));
    }
    let (rows, cols) = (h.rows, h.cols);
    if n == 1 {
        let s = SpinConfig::all_up(rows, cols);
        return Ok((s, 0.0));
    }
    let adj = h.neighbors();
    let total = 1u64 << (n - 1);
    let chunk = total.min(1 << 12);
    let chunks = (total / chunk) as usize;

    let scan = |c: usize| -> Best {
        let start = c as u64 * chunk;
        let mut pattern = start ^ (start >> 1);
        let mut s = SpinConfig::from_pattern(rows, cols, pattern).spins;
        let mut field: Vec<f64> = adj
            .iter()
            .map(|nb| nb.iter().map(|&(j, w)| w * s[j] as f64).sum())
            .collect();
        let mut energy = -0.5 * (0..n).map(|i| s[i] as f64 * field[i]).sum::<f64>();
        let mut best = Best { energy, pattern };
        for k in start + 1..start + chunk {
            let bit = k.trailing_zeros() as usize;
            let site = bit + 1;
            energy += 2.0 * s[site] as f64 * field[site];
            s[site] = -s[site];
            for &(j, w) in &adj[site] {
                field[j] += 2.0 * w * s[site] as f64;
            }
            pattern ^= 1 << bit;
            best = best.better(Best { energy, pattern });
        }
        best
    };
    let best = exec
        .map(chunks, scan)
        .into_iter()
        .reduce(Best::better)
        .expect("at least one chunk");
    let config = SpinConfig::from_pattern(rows, cols, best.pattern);
    let energy = true_energy(h, &config)?;
    Ok((config, energy))
}

/// `h_i = Σ_j J_ij y_j + h0·y_i`.
pub fn local_field(h: &LatticeHamiltonian, y: &SpinConfig, h0: f64) -> Result<Vec<f64>> {
    y.check_fits(h)?;
    if h0 < 0.0 {
        return Err(Error::InvalidParameter(format!("h0 = {h0} must be non-negative")));
    }
    Ok(h.neighbors()
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter().map(|&(j, w)| w * y.spins[j] as f64).sum::<f64>() + h0 * y.spins[i] as f64
        })
        .collect())
}

/// `E(ŷ, y) = −Σ_i h_i(y)·ŷ_i`.
pub fn local_energy(
    y_hat: &SpinConfig,
    y: &SpinConfig,
    h: &LatticeHamiltonian,
    h0: f64,
) -> Result<f64> {
    y_hat.check_fits(h)?;
    let field = local_field(h, y, h0)?;
    Ok(-field
        .iter()
        .zip(&y_hat.spins)
        .map(|(f, &s)| f * s as f64)
        .sum::<f64>())
}

/// `sign(z)` with zero logits resolved to +1.
pub fn predict_config(z: &SpinLogits) -> SpinConfig {
    SpinConfig {
        rows: z.rows,
        cols: z.cols,
        spins: z.z.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect(),
    }
}

fn batch_shape(tape: &Tape, z: Var) -> Result<(usize, usize)> {
    match tape.value(z).shape() {
        [b, n] => Ok((*b, *n)),
        s => Err(Error::ShapeMismatch(format!("logits must be batch x sites, got {s:?}"))),
    }
}

fn constant_like(tape: &mut Tape, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
    Ok(tape.constant(Tensor::matrix(rows, cols, data)?))
}

/// Sum over all entries of the binary entropy of `±1` spins with mean `tanh(z)`.
fn record_entropy(tape: &mut Tape, z: Var) -> Result<Var> {
    // With p = σ(2z): S = p·softplus(−2z) + (1 − p)·softplus(2z).
    let z2 = tape.scale(z, 2.0)?;
    let p = tape.sigmoid(z2)?;
    let neg = tape.scale(z2, -1.0)?;
    let sp_neg = tape.softplus(neg)?;
    let sp_pos = tape.softplus(z2)?;
    let not_p = tape.scale(p, -1.0)?;
    let q = tape.add_scalar(not_p, 1.0)?;
    let a = tape.mul(p, sp_neg)?;
    let b = tape.mul(q, sp_pos)?;
    let s = tape.add(a, b)?;
    tape.sum(s)
}

/// Batch mean of `(1/T)·(−Σ h_i tanh z_i) − Σ S_b(tanh z_i)`; `fields` is
/// `batch × sites` (from [`local_field`]).
pub fn record_local_energy_loss(tape: &mut Tape, z: Var, fields: &[f64], temperature: f64) -> Result<Var> {
    let (batch, n) = batch_shape(tape, z)?;
    check_temperature(temperature)?;
    let h = constant_like(tape, batch, n, fields.to_vec())?;
    let m = tape.tanh(z)?;
    let hm = tape.mul(h, m)?;
    let energy = tape.sum(hm)?;
    let energy = tape.scale(energy, -1.0 / temperature)?;
    let entropy = record_entropy(tape, z)?;
    let total = tape.sub(energy, entropy)?;
    tape.scale(total, 1.0 / batch as f64)
}

/// Mean over sites and batch of `softplus(−2 y_i z_i)`.
pub fn record_cross_entropy_loss(tape: &mut Tape, z: Var, targets: &[f64]) -> Result<Var> {
    let (batch, n) = batch_shape(tape, z)?;
    let c = constant_like(tape, batch, n, targets.iter().map(|y| -2.0 * y).collect())?;
    let a = tape.mul(z, c)?;
    let sp = tape.softplus(a)?;
    tape.mean(sp)
}

/// Mean over sites and batch of `max(0, 1 − y_i z_i)`.
pub fn record_margin_loss(tape: &mut Tape, z: Var, targets: &[f64]) -> Result<Var> {
    let (batch, n) = batch_shape(tape, z)?;
    let c = constant_like(tape, batch, n, targets.iter().map(|y| -y).collect())?;
    let a = tape.mul(z, c)?;
    let a = tape.add_scalar(a, 1.0)?;
    let hinge = tape.relu(a)?;
    tape.mean(hinge)
}

/// Batch mean of `(1/T)·(−Σ_bonds J_ij m_i m_j) − Σ S_b(m_i)` with
/// `m = tanh(z)`. `bonds` lists the site pairs shared by the batch and
/// `couplings` holds the matching `batch × bonds` values.
pub fn record_true_energy_loss(
    tape: &mut Tape,
    z: Var,
    bonds: &[(usize, usize)],
    couplings: &[f64],
    temperature: f64,
) -> Result<Var> {
    let (batch, _) = batch_shape(tape, z)?;
    check_temperature(temperature)?;
    let left: Vec<usize> = bonds.iter().map(|b| b.0).collect();
    let right: Vec<usize> = bonds.iter().map(|b| b.1).collect();
    let j = constant_like(tape, batch, bonds.len(), couplings.to_vec())?;
    let m = tape.tanh(z)?;
    let ml = tape.gather_cols(m, &left)?;
    let mr = tape.gather_cols(m, &right)?;
    let prod = tape.mul(ml, mr)?;
    let weighted = tape.mul(prod, j)?;
    let energy = tape.sum(weighted)?;
    let energy = tape.scale(energy, -1.0 / temperature)?;
    let entropy = record_entropy(tape, z)?;
    let total = tape.sub(energy, entropy)?;
    tape.scale(total, 1.0 / batch as f64)
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("temperature {t} must be positive")));
    }
    Ok(())
}

fn single(z: &SpinLogits, record: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<LossReport> {
    let mut tape = Tape::new();
    let zv = tape.param(Tensor::matrix(1, z.z.len(), z.z.clone())?);
    let loss = record(&mut tape, zv)?;
    let grads = tape.backward(loss)?;
    Ok(LossReport {
        value: tape.value(loss).item(),
        grad: grads.wrt(zv)?.data().to_vec(),
    })
}

/// Free-energy loss around the data `y` under the local-field energy.
pub fn local_energy_loss(
    z: &SpinLogits,
    y: &SpinConfig,
    h: &LatticeHamiltonian,
    h0: f64,
    temperature: f64,
) -> Result<LossReport> {
    z.check_fits(h.rows, h.cols)?;
    let fields = local_field(h, y, h0)?;
    single(z, |t, zv| record_local_energy_loss(t, zv, &fields, temperature))
}

pub fn cross_entropy_loss(z: &SpinLogits, y: &SpinConfig) -> Result<LossReport> {
    z.check_fits(y.rows, y.cols)?;
    let targets = y.as_f64();
    single(z, |t, zv| record_cross_entropy_loss(t, zv, &targets))
}

pub fn margin_loss(z: &SpinLogits, y: &SpinConfig) -> Result<LossReport> {
    z.check_fits(y.rows, y.cols)?;
    let targets = y.as_f64();
    single(z, |t, zv| record_margin_loss(t, zv, &targets))
}

/// Mean-field free energy of the true Hamiltonian; uses no data.
pub fn true_energy_loss(z: &SpinLogits, h: &LatticeHamiltonian, temperature: f64) -> Result<LossReport> {
    z.check_fits(h.rows, h.cols)?;
    let bonds = h.bonds();
    let pairs: Vec<(usize, usize)> = bonds.iter().map(|b| (b.0, b.1)).collect();
    let couplings: Vec<f64> = bonds.iter().map(|b| b.2).collect();
    single(z, |t, zv| record_true_energy_loss(t, zv, &pairs, &couplings, temperature))
}

/// The two terms of the local-field free energy, before dividing by `T`:
/// `(−Σ h_i m_i, Σ S_b(m_i))`.
pub fn local_energy_parts(
    z: &SpinLogits,
    y: &SpinConfig,
    h: &LatticeHamiltonian,
    h0: f64,
) -> Result<(f64, f64)> {
    z.check_fits(h.rows, h.cols)?;
    let fields = local_field(h, y, h0)?;
    let energy = -fields.iter().zip(&z.z).map(|(f, x)| f * x.tanh()).sum::<f64>();
    let mut tape = Tape::new();
    let zv = tape.constant(Tensor::matrix(1, z.z.len(), z.z.clone())?);
    let s = record_entropy(&mut tape, zv)?;
    Ok((energy, tape.value(s).item()))
}
