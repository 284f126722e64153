//! Wall-time benchmark of the point-cloud losses across cloud sizes.

use std::hint::black_box;
use std::time::{Duration, Instant};

use super::csv::{field, CsvTable};
use crate::energy::{
    energy_loss, kabsch_mse_loss, mse_loss, sparse_energy_loss, CoefficientScheme, FULL_LOSS_MAX_PARTICLES,
};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rigidity::{pool_degree, random_k_regular, EdgeSet};
use crate::rng;

pub const BENCH_HEADER: [&str; 6] = ["n", "loss", "repeats", "median_ms", "iqr_ms", "status"];
pub const DEFAULT_SIZES: [usize; 7] = [100, 300, 1000, 3000, 10_000, 30_000, 100_000];
pub const BENCH_LOSSES: [&str; 4] = ["mse", "energy", "sparse-energy", "kabsch"];

/// Shortest interval timed as one measurement; fast calls are repeated
/// inside it and reported per call.
const MIN_SAMPLE: Duration = Duration::from_millis(2);

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub loss: &'static str,
    pub repeats: usize,
    /// `None` when the loss refused the size.
    pub median_ms: Option<f64>,
    pub iqr_ms: Option<f64>,
}

impl BenchRow {
    pub fn status(&self) -> &'static str {
        if self.median_ms.is_some() {
            "ok"
        } else {
            "guarded"
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub d: usize,
}

impl BenchReport {
    pub fn median(&self, loss: &str, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.loss == loss && r.n == n)
            .and_then(|r| r.median_ms)
    }

    /// Least-squares slope of `log median` against `log n` for `loss`.
    pub fn scaling_exponent(&self, loss: &str) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.loss == loss)
            .filter_map(|r| r.median_ms.map(|m| ((r.n as f64).ln(), m.ln())))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(BENCH_HEADER);
        for r in &self.rows {
            t.push(vec![
                field(r.n),
                field(r.loss),
                field(r.repeats),
                r.median_ms.map(field).unwrap_or_default(),
                r.iqr_ms.map(field).unwrap_or_default(),
                field(r.status()),
            ])
            .expect("fixed width");
        }
        t
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-call milliseconds: `repeats` measurements, each covering enough calls
/// to last at least [`MIN_SAMPLE`].
fn time_calls(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    let start = Instant::now();
    f()?;
    let first = start.elapsed();
    let calls = if first >= MIN_SAMPLE {
        1
    } else {
        (MIN_SAMPLE.as_secs_f64() / first.as_secs_f64().max(1e-9)).ceil() as usize
    };
    let mut out = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        for _ in 0..calls {
            f()?;
        }
        out.push(t.elapsed().as_secs_f64() * 1e3 / calls as f64);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Times every loss in [`BENCH_LOSSES`] at each size in `d` dimensions. The
/// sparse loss uses a random `2d`-regular graph; the full energy loss is
/// recorded as guarded at or above its particle limit.
pub fn benchmark_losses(sizes: &[usize], repeats: usize, d: usize, seed: u64) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be positive".into()));
    }
    let scheme = CoefficientScheme::exponential();
    let mut rows = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let mut r = rng::stream(seed, k as u64);
        let target = PointCloud::gaussian(n, d, &mut r)?;
        let pred = PointCloud::gaussian(n, d, &mut r)?;
        let edges: EdgeSet = random_k_regular(n, pool_degree(n, d), rng::derive(seed, k as u64))?;
        for loss in BENCH_LOSSES {
            if loss == "energy" && n >= FULL_LOSS_MAX_PARTICLES {
                rows.push(BenchRow {
                    n,
                    loss,
                    repeats,
                    median_ms: None,
                    iqr_ms: None,
                });
                continue;
            }
            let times = time_calls(repeats, || {
                let rep = match loss {
                    "mse" => mse_loss(&pred, &target),
                    "energy" => energy_loss(&pred, &target, &scheme),
                    "sparse-energy" => sparse_energy_loss(&pred, &target, &scheme, &edges),
                    _ => kabsch_mse_loss(&pred, &target),
                }?;
                black_box(rep);
                Ok(())
            })?;
            rows.push(BenchRow {
                n,
                loss,
                repeats,
                median_ms: Some(quantile(&times, 0.5)),
                iqr_ms: Some(quantile(&times, 0.75) - quantile(&times, 0.25)),
            });
        }
    }
    Ok(BenchReport { rows, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn single_repeat_layout() {
        let rep = benchmark_losses(&[50, 80], 1, 3, 0).unwrap();
        let csv = rep.to_csv();
        assert_eq!(csv.header(), BENCH_HEADER);
        assert_eq!(csv.rows().len(), 8);
        assert!(csv.rows().iter().all(|r| r[2] == "1" && r[5] == "ok" && r[4] == "0"));
        assert!(rep.scaling_exponent("mse").is_some());
        assert!(benchmark_losses(&[50], 0, 3, 0).is_err());
    }

    #[test]
    fn exponent_fit_recovers_power_law() {
        let rows = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| BenchRow {
                n,
                loss: "mse",
                repeats: 1,
                median_ms: Some(3.0 * (n as f64).powf(1.5)),
                iqr_ms: Some(0.0),
            })
            .collect();
        let rep = BenchReport { rows, d: 3 };
        assert!((rep.scaling_exponent("mse").unwrap() - 1.5).abs() < 1e-12);
    }
}
