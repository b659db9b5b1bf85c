//! Per-run stochastic simulation of the noisy, postselected weak
//! measurement.
//!
//! Each run draws a preparation shift, accepts postselection with the exact
//! probability for that shift and, when accepted, draws the meter readout by
//! inverse-CDF sampling of the exact gridded conditional density.
//!
//! Run `i` draws from ChaCha8 keyed by the seed with stream id `i`, so a run
//! depends only on `(seed, i)`. Runs are processed in fixed-size chunks and
//! the accepted samples are concatenated in run order before any statistic
//! is formed; results are bit-identical for any thread count.

use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::analytic::SnrReport;
use crate::error::{Error, Result};
use crate::meter::{effective_width, sample_shift, Basis, GaussianMeter, NoiseKind, NoiseModel};
use crate::oracle::{GridParams, MeterGrid, Oracle};
use crate::quantum::{Observable, TwoStateVector};

/// Runs per work unit. Fixed, so chunk boundaries never depend on threads.
const CHUNK: u64 = 4096;
/// Shift quantum for the density cache, in units of the noise width.
pub const SHIFT_QUANTUM: f64 = 1e-6;
/// Upper bound on cached conditional densities.
const MAX_CACHED_TABLES: usize = 1024;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tsv: TwoStateVector,
    pub obs: Observable,
    pub k: f64,
    pub meter: GaussianMeter,
    pub noise: NoiseModel,
    pub readout: Basis,
    pub n_runs: u64,
    pub seed: u64,
    pub grid: GridParams,
}

impl SimConfig {
    /// The two-level example with `C_w = i·w`, read out in `readout`.
    pub fn qubit(w: f64, k: f64, delta: f64, noise: NoiseModel, readout: Basis, n_runs: u64, seed: u64) -> Result<Self> {
        let (tsv, obs) = TwoStateVector::qubit_example(w);
        Ok(Self {
            tsv,
            obs,
            k,
            meter: GaussianMeter::new(delta)?,
            noise,
            readout,
            n_runs,
            seed,
            grid: GridParams::default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub run_index: u64,
    pub shift: f64,
    /// Present iff postselection succeeded.
    pub readout: Option<f64>,
}

impl RunRecord {
    pub fn accepted(&self) -> bool {
        self.readout.is_some()
    }
}

/// Statistics of the accepted runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStats {
    /// Empirical readout moments (plug-in); `n_events` is the accepted count.
    pub report: SnrReport,
    pub mean_stderr: f64,
    /// Delta-method standard error of `report.snr_per_event`.
    pub snr_stderr: f64,
    pub shift_mean: f64,
    pub shift_variance: f64,
    pub shift_mean_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleResult {
    pub n_total: u64,
    pub n_accepted: u64,
    /// `None` when no run was accepted.
    pub accepted: Option<AcceptedStats>,
}

impl EnsembleResult {
    pub fn acceptance_fraction(&self) -> f64 {
        self.n_accepted as f64 / self.n_total as f64
    }

    /// Binomial standard error of the acceptance fraction.
    pub fn acceptance_stderr(&self) -> f64 {
        let f = self.acceptance_fraction();
        (f * (1.0 - f) / self.n_total as f64).sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_none()
    }
}

/// How the conditional readout density depends on the preparation shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShiftResponse {
    /// Density and acceptance independent of the shift.
    Invariant,
    /// Density translated by the shift, acceptance unchanged.
    Translating,
    /// Everything recomputed per (quantized) shift.
    PerShift,
}

/// Piecewise-linear CDF of a gridded density.
#[derive(Debug)]
struct SamplingTable {
    x0: f64,
    dx: f64,
    cumulative: Vec<f64>,
}

impl SamplingTable {
    fn new(grid: &MeterGrid, density: &[f64]) -> Self {
        let dx = grid.spacing();
        let mut cumulative = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for pair in density.windows(2) {
            acc += 0.5 * (pair[0] + pair[1]) * dx;
            cumulative.push(acc);
        }
        Self {
            x0: grid.point(0),
            dx,
            cumulative,
        }
    }

    fn sample(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().expect("nonempty grid");
        let target = u * total;
        let upper = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.cumulative.len() - 1);
        let lo = upper - 1;
        let mass = self.cumulative[upper] - self.cumulative[lo];
        let frac = if mass > 0.0 {
            (target - self.cumulative[lo]) / mass
        } else {
            0.5
        };
        self.x0 + (lo as f64 + frac) * self.dx
    }
}

/// A prepared ensemble simulation.
pub struct Simulator {
    config: SimConfig,
    oracle: Oracle,
    response: ShiftResponse,
    shift_basis: Basis,
    quantum: f64,
    key: [u8; 32],
    cache: DashMap<i64, Arc<SamplingTable>>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        if config.n_runs == 0 {
            return Err(Error::invalid("n_runs", "must be at least 1"));
        }
        let oracle = Oracle::new(
            &config.tsv,
            &config.obs,
            config.k,
            &config.meter,
            config.readout,
            &config.grid,
            &config.noise,
        )?;
        let response = match (config.noise.kind(), config.readout) {
            _ if config.noise.is_trivial() => ShiftResponse::Invariant,
            (NoiseKind::QShift, Basis::P) => ShiftResponse::Invariant,
            (NoiseKind::QShift, Basis::Q) => ShiftResponse::Translating,
            _ => ShiftResponse::PerShift,
        };
        let shift_basis = config.noise.basis().unwrap_or(Basis::P);
        let quantum = SHIFT_QUANTUM * config.noise.width().max(f64::MIN_POSITIVE);
        let key = ChaCha8Rng::seed_from_u64(config.seed).get_seed();
        Ok(Self {
            config,
            oracle,
            response,
            shift_basis,
            quantum,
            key,
            cache: DashMap::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    /// Independent random stream of run `index`.
    pub fn run_stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }

    fn quantize(&self, shift: f64) -> (i64, f64) {
        let key = (shift / self.quantum).round() as i64;
        (key, key as f64 * self.quantum)
    }

    fn table(&self, key: i64, shift: f64) -> Result<Arc<SamplingTable>> {
        if let Some(t) = self.cache.get(&key) {
            return Ok(Arc::clone(t.value()));
        }
        let density = self.oracle.unnormalized_density(shift, self.shift_basis)?;
        let table = Arc::new(SamplingTable::new(self.oracle.grid(), &density));
        if self.cache.len() < MAX_CACHED_TABLES {
            self.cache.entry(key).or_insert_with(|| Arc::clone(&table));
        }
        Ok(table)
    }

    /// Simulates run `index`.
    pub fn run(&self, index: u64) -> Result<RunRecord> {
        let mut rng = self.run_stream(index);
        let drawn = sample_shift(&self.config.noise, &mut rng);
        let (key, shift) = match self.response {
            ShiftResponse::Invariant => (0, 0.0),
            ShiftResponse::Translating => (0, self.quantize(drawn).1),
            ShiftResponse::PerShift => self.quantize(drawn),
        };
        let recorded = if self.config.noise.is_trivial() { 0.0 } else { self.quantize(drawn).1 };
        let density_shift = if self.response == ShiftResponse::PerShift { shift } else { 0.0 };
        let probability = self.oracle.postselect_probability(density_shift, self.shift_basis);
        let u: f64 = rng.random();
        if u >= probability {
            return Ok(RunRecord {
                run_index: index,
                shift: recorded,
                readout: None,
            });
        }
        let table = self.table(key, density_shift)?;
        let mut readout = table.sample(rng.random());
        if self.response == ShiftResponse::Translating {
            readout += shift;
        }
        Ok(RunRecord {
            run_index: index,
            shift: recorded,
            readout: Some(readout),
        })
    }

    /// Accepted `(shift, readout)` pairs in run order.
    pub fn accepted_samples(&self) -> Result<Vec<(f64, f64)>> {
        let n = self.config.n_runs;
        let chunks: Vec<Vec<(f64, f64)>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::new();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let rec = self.run(i)?;
                    if let Some(x) = rec.readout {
                        out.push((rec.shift, x));
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    pub fn run_ensemble(&self) -> Result<EnsembleResult> {
        let samples = self.accepted_samples()?;
        Ok(summarize(self.config.n_runs, &samples))
    }
}

fn summarize(n_total: u64, samples: &[(f64, f64)]) -> EnsembleResult {
    let n_accepted = samples.len() as u64;
    if samples.is_empty() {
        return EnsembleResult {
            n_total,
            n_accepted,
            accepted: None,
        };
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &(_, x) in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let report = SnrReport::from_moments(mean, m2, n / n_total as f64, n);
    let r = report.snr_per_event;
    let snr_var = if m2 > 0.0 {
        (1.0 + r * r * (m4 / (m2 * m2) - 1.0) / 4.0 - r * m3 / m2.powf(1.5)) / n
    } else {
        f64::NAN
    };
    let shift_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let shift_variance = samples.iter().map(|s| (s.0 - shift_mean).powi(2)).sum::<f64>() / n;
    EnsembleResult {
        n_total,
        n_accepted,
        accepted: Some(AcceptedStats {
            report,
            mean_stderr: (m2 / n).sqrt(),
            snr_stderr: snr_var.max(0.0).sqrt(),
            shift_mean,
            shift_variance,
            shift_mean_stderr: (shift_variance / n).sqrt(),
        }),
    }
}

/// Runs the ensemble described by `config`.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    Simulator::new(config.clone())?.run_ensemble()
}

/// Seed of sweep point `index`; point 0 keeps the base seed.
pub fn sweep_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Ensembles over a sweep of P-shift widths, keyed by `Δ_T`.
pub fn empirical_snr_curve(base: &SimConfig, delta_p_values: &[f64]) -> Result<Vec<(f64, EnsembleResult)>> {
    if delta_p_values.is_empty() {
        return Err(Error::invalid("sweep", "needs at least one Δ_P value"));
    }
    delta_p_values
        .iter()
        .enumerate()
        .map(|(i, &dp)| {
            let noise = NoiseModel::p_shift(dp)?;
            let config = SimConfig {
                noise,
                seed: sweep_seed(base.seed, i as u64),
                ..base.clone()
            };
            Ok((effective_width(&config.meter, &noise)?, run_ensemble(&config)?))
        })
        .collect()
}

/// Binomial simulation of the reversed-role protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackactionEstimate {
    pub n_runs: u64,
    pub successes: u64,
    pub exact_probability: f64,
    pub baseline_probability: f64,
    /// `(n̂/N - |⟨Φ|Ψ⟩|²) / √(|⟨Φ|Ψ⟩|²(1-|⟨Φ|Ψ⟩|²)/N)`.
    pub snr: f64,
    pub snr_stderr: f64,
}

pub fn simulate_backaction(
    tsv: &TwoStateVector,
    obs: &Observable,
    k: f64,
    p0: f64,
    n_runs: u64,
    seed: u64,
) -> Result<BackactionEstimate> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs", "must be at least 1"));
    }
    let base = tsv.overlap_probability();
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::invalid("postselection", "|<Φ|Ψ>|² must lie strictly inside (0, 1)"));
    }
    let exact = tsv.transition_amplitude(obs, k, p0)?.norm_sqr().clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let successes = Binomial::new(n_runs, exact)
        .map_err(|e| Error::invalid("probability", e.to_string()))?
        .sample(&mut rng);
    let n = n_runs as f64;
    let p_hat = successes as f64 / n;
    let noise = (base * (1.0 - base) / n).sqrt();
    Ok(BackactionEstimate {
        n_runs,
        successes,
        exact_probability: exact,
        baseline_probability: base,
        snr: (p_hat - base) / noise,
        snr_stderr: (p_hat * (1.0 - p_hat) / n).sqrt() / noise,
    })
}

/// Draws from a stream; exposed for tests of stream independence.
pub fn stream_uniforms(seed: u64, index: u64, count: usize) -> Vec<f64> {
    let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    (0..count).map(|_| rng.random()).collect()
}
