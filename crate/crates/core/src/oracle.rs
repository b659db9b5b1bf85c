//! Exact evolution of system ⊗ discretized meter.
//!
//! The coupling `exp(-i·k·P·C)` is diagonal in the meter's P basis, so the
//! postselected meter amplitude is built pointwise on a P grid as
//! `ψ(P) = φ₀(P)·⟨Φ|exp(-i·k·P·C)|Ψ⟩`, with the system factor expanded over
//! the eigenbranches of `C`. A Q readout is obtained from the P amplitude by
//! a centered discrete Fourier transform. No weak-value approximation is
//! made anywhere; noise averages use Gauss–Hermite quadrature over the
//! shift distribution, averaging the unnormalized postselected densities
//! before normalizing.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::analytic::SnrReport;
use crate::error::{Error, Result};
use crate::meter::{Basis, GaussianMeter, NoiseKind, NoiseModel};
use crate::quadrature::GaussHermite;
use crate::quantum::{transition_amplitude, Branch, Observable, TwoStateVector};

pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const DEFAULT_QUAD_POINTS: usize = 121;
pub const MIN_QUAD_POINTS: usize = 41;
pub const MIN_GRID_POINTS: usize = 256;
/// Minimum number of grid points per meter width, in both bases.
pub const POINTS_PER_WIDTH: f64 = 16.0;
/// Quadrature nodes whose probability weight falls below this are skipped.
pub const NODE_WEIGHT_CUTOFF: f64 = 1e-30;

/// Uniform grid on `[-L, L)` with a power-of-two number of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterGrid {
    half_width: f64,
    n_points: usize,
}

impl MeterGrid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::invalid("grid half width", format!("must be positive, got {half_width}")));
        }
        if n_points < MIN_GRID_POINTS || !n_points.is_power_of_two() {
            return Err(Error::invalid(
                "grid points",
                format!("must be a power of two >= {MIN_GRID_POINTS}, got {n_points}"),
            ));
        }
        Ok(Self {
            half_width,
            n_points,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.point(i))
    }

    /// The grid in the conjugate variable reached by the discrete Fourier
    /// transform: spacing `π/L`, half-width `nπ/(2L)`.
    pub fn conjugate(&self) -> Self {
        Self {
            half_width: self.n_points as f64 * PI / (2.0 * self.half_width),
            n_points: self.n_points,
        }
    }
}

/// Grid overrides; `None` fields fall back to the defaults derived from the
/// meter, coupling and noise. A defaulted point count starts at
/// [`DEFAULT_GRID_POINTS`] and doubles until the resolution check passes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridParams {
    pub n_points: Option<usize>,
    pub half_width: Option<f64>,
}

impl GridParams {
    pub fn new(n_points: usize, half_width: f64) -> Self {
        Self {
            n_points: Some(n_points),
            half_width: Some(half_width),
        }
    }
}

const MAX_AUTO_GRID_POINTS: usize = 1 << 20;

/// Nonnegative readout density with unit integral on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: MeterGrid,
    basis: Basis,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: MeterGrid, basis: Basis, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_points(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("density", "entries must be nonnegative"));
        }
        let integral = values.iter().sum::<f64>() * grid.spacing();
        if (integral - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("density", format!("integral {integral} is not 1")));
        }
        Ok(Self {
            grid,
            basis,
            values,
        })
    }

    /// Normalizes `weights` (an unnormalized density) to unit integral.
    fn normalized(grid: MeterGrid, basis: Basis, mut weights: Vec<f64>) -> Result<(Self, f64)> {
        let mass = weights.iter().sum::<f64>() * grid.spacing();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegeneratePostselection { overlap: mass.max(0.0).sqrt() });
        }
        for w in &mut weights {
            *w /= mass;
        }
        Ok((Self::new(grid, basis, weights)?, mass))
    }

    pub fn grid(&self) -> &MeterGrid {
        &self.grid
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing()
    }

    /// Linear interpolation; zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.grid.point(0)) / self.grid.spacing();
        if !(t >= 0.0) || t > (self.grid.n_points() - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(self.grid.n_points() - 2);
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// Mass of the density below `x` (trapezoid rule, linear within cells).
    pub fn mass_below(&self, x: f64) -> f64 {
        let dx = self.grid.spacing();
        let mut acc = 0.0;
        for i in 0..self.grid.n_points() - 1 {
            let (a, b) = (self.grid.point(i), self.grid.point(i + 1));
            if b <= x {
                acc += 0.5 * (self.values[i] + self.values[i + 1]) * dx;
            } else if a < x {
                let f = (x - a) / dx;
                let vx = self.values[i] * (1.0 - f) + self.values[i + 1] * f;
                acc += 0.5 * (self.values[i] + vx) * (x - a);
            }
        }
        acc
    }
}

/// Mean, second moment and per-event S/N of a gridded density.
pub fn density_moments(density: &GridDensity) -> Result<SnrReport> {
    let dx = density.grid.spacing();
    let xs: Vec<f64> = density.grid.points().collect();
    let mean = pairwise_sum_by(&xs, &density.values, |x, v| x * v) * dx;
    let variance = pairwise_sum_by(&xs, &density.values, |x, v| (x - mean) * (x - mean) * v) * dx;
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(SnrReport::from_moments(mean, variance, 1.0, 1.0))
}

fn pairwise_sum_by(xs: &[f64], vs: &[f64], f: impl Fn(f64, f64) -> f64 + Copy) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().zip(vs).map(|(&x, &v)| f(x, v)).sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], &vs[..mid], f) + pairwise_sum_by(&xs[mid..], &vs[mid..], f)
}

/// A configured exact evolution: eigenbranches, coupling profile on the P
/// grid and the readout transform, computed once and reused per shift.
#[derive(Clone)]
pub struct Oracle {
    branches: Vec<Branch>,
    k: f64,
    meter: GaussianMeter,
    readout: Basis,
    grid: MeterGrid,
    p_grid: MeterGrid,
    coupling: Vec<Complex64>,
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("k", &self.k)
            .field("meter", &self.meter)
            .field("readout", &self.readout)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

/// Default readout-grid half-width,
/// `8·max(Δ, Δ⁻¹, Δ_T) + |k|·ρ(C) + 18·noise width`, widened for a Q
/// readout until the conjugate P grid has 16 points per `Δ⁻¹`.
pub fn default_half_width(
    meter: &GaussianMeter,
    k: f64,
    spectral_radius: f64,
    noise: &NoiseModel,
    readout: Basis,
) -> f64 {
    let delta = meter.delta();
    let delta_t = match noise.kind() {
        NoiseKind::PShift => (delta.powi(-2) + noise.width().powi(2)).sqrt(),
        _ => 1.0 / delta,
    };
    let base = 8.0 * delta.max(1.0 / delta).max(delta_t) + k.abs() * spectral_radius + 18.0 * noise.width();
    match readout {
        Basis::P => base,
        Basis::Q => base.max(1.1 * POINTS_PER_WIDTH * PI * delta),
    }
}

impl Oracle {
    pub fn new(
        tsv: &TwoStateVector,
        obs: &Observable,
        k: f64,
        meter: &GaussianMeter,
        readout: Basis,
        params: &GridParams,
        noise: &NoiseModel,
    ) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::invalid("k", "must be finite"));
        }
        let branches = tsv.branches(obs)?;
        let radius = branches.iter().fold(0.0_f64, |a, b| a.max(b.eigenvalue.abs()));
        let half_width = params
            .half_width
            .unwrap_or_else(|| default_half_width(meter, k, radius, noise, readout));
        let mut n_points = params.n_points.unwrap_or(DEFAULT_GRID_POINTS);
        let (grid, p_grid) = loop {
            let grid = MeterGrid::new(half_width, n_points)?;
            let p_grid = match readout {
                Basis::P => grid,
                Basis::Q => grid.conjugate(),
            };
            match check_resolution(meter, readout, &grid, &p_grid) {
                Ok(()) => break (grid, p_grid),
                Err(e) if params.n_points.is_some() || n_points >= MAX_AUTO_GRID_POINTS => return Err(e),
                Err(_) => n_points *= 2,
            }
        };
        let coupling_limit = match readout {
            Basis::P => grid.conjugate().half_width() / 2.0,
            Basis::Q => grid.half_width() / 2.0,
        };
        if k.abs() * radius > coupling_limit {
            return Err(Error::GridResolution(format!(
                "coupling displacement |k|·ρ(C) = {} exceeds {coupling_limit}",
                k.abs() * radius
            )));
        }
        let coupling = p_grid
            .points()
            .map(|p| transition_amplitude(&branches, k * p))
            .collect();
        let fft = match readout {
            Basis::P => None,
            Basis::Q => Some(FftPlanner::new().plan_fft_inverse(grid.n_points())),
        };
        Ok(Self {
            branches,
            k,
            meter: *meter,
            readout,
            grid,
            p_grid,
            coupling,
            fft,
        })
    }

    pub fn grid(&self) -> &MeterGrid {
        &self.grid
    }

    pub fn p_grid(&self) -> &MeterGrid {
        &self.p_grid
    }

    pub fn readout(&self) -> Basis {
        self.readout
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    fn check_shift(&self, shift: f64, basis: Basis) -> Result<()> {
        let limit = match (basis, self.readout) {
            (Basis::P, _) => self.p_grid.half_width() / 2.0,
            (Basis::Q, Basis::Q) => self.grid.half_width() / 2.0,
            (Basis::Q, Basis::P) => self.grid.conjugate().half_width() / 2.0,
        };
        if !(shift.abs() <= limit) {
            return Err(Error::ShiftOutsideGrid { shift, limit });
        }
        Ok(())
    }

    /// Postselected, unnormalized meter amplitude on the P grid for a meter
    /// prepared with the given shift.
    pub fn amplitude_p(&self, shift: f64, basis: Basis) -> Result<Vec<Complex64>> {
        self.check_shift(shift, basis)?;
        let delta = self.meter.delta();
        let norm = (delta * delta / PI).powf(0.25);
        let (p0, q0) = match basis {
            Basis::P => (shift, 0.0),
            Basis::Q => (0.0, shift),
        };
        Ok(self
            .p_grid
            .points()
            .zip(&self.coupling)
            .map(|(p, &a)| {
                let env = norm * (-0.5 * (delta * (p - p0)).powi(2)).exp();
                a * Complex64::from_polar(env, -q0 * p)
            })
            .collect())
    }

    /// Postselected, unnormalized amplitude in the readout basis.
    pub fn readout_amplitude(&self, shift: f64, basis: Basis) -> Result<Vec<Complex64>> {
        let amp = self.amplitude_p(shift, basis)?;
        Ok(match &self.fft {
            None => amp,
            Some(fft) => centered_transform(fft.as_ref(), &self.p_grid, amp),
        })
    }

    /// `|ψ|²` in the readout basis; integrates to the postselection
    /// probability.
    pub fn unnormalized_density(&self, shift: f64, basis: Basis) -> Result<Vec<f64>> {
        Ok(self
            .readout_amplitude(shift, basis)?
            .iter()
            .map(|a| a.norm_sqr())
            .collect())
    }

    /// Postselection probability as the squared norm of the gridded
    /// postselected meter state.
    pub fn grid_probability(&self, shift: f64, basis: Basis) -> Result<f64> {
        let amp = self.amplitude_p(shift, basis)?;
        Ok(amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.p_grid.spacing())
    }

    /// Exact postselection probability from the Gaussian characteristic
    /// function: `Σ_jl ā_j a_l exp(ik(c_j-c_l)P₀ - k²(c_j-c_l)²/(4Δ²))`.
    /// A Q shift does not change it.
    pub fn postselect_probability(&self, shift: f64, basis: Basis) -> f64 {
        let p0 = match basis {
            Basis::P => shift,
            Basis::Q => 0.0,
        };
        let delta = self.meter.delta();
        let mut total = 0.0;
        for a in &self.branches {
            for b in &self.branches {
                let dc = a.eigenvalue - b.eigenvalue;
                let phase = Complex64::from_polar(1.0, self.k * dc * p0);
                let damp = (-(self.k * dc).powi(2) / (4.0 * delta * delta)).exp();
                total += (a.weight.conj() * b.weight * phase).re * damp;
            }
        }
        total.max(0.0)
    }

    /// Normalized readout density and postselection probability for one
    /// preparation shift.
    pub fn evolve(&self, shift: f64, basis: Basis) -> Result<(GridDensity, f64)> {
        let weights = self.unnormalized_density(shift, basis)?;
        GridDensity::normalized(self.grid, self.readout, weights)
    }

    /// Readout density averaged over the preparation noise.
    ///
    /// Per-node unnormalized densities are weighted by the quadrature
    /// weights and summed pairwise in node order before normalizing, which
    /// weights each shift by its postselection probability.
    pub fn noise_averaged(&self, noise: &NoiseModel, quad_points: usize) -> Result<(GridDensity, f64)> {
        if quad_points < MIN_QUAD_POINTS {
            return Err(Error::invalid(
                "quad_points",
                format!("must be at least {MIN_QUAD_POINTS}, got {quad_points}"),
            ));
        }
        let basis = match noise.basis() {
            Some(b) if !noise.is_trivial() => b,
            _ => return self.evolve(0.0, self.readout),
        };
        let rule = GaussHermite::new(quad_points)?;
        let nodes: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .zip(rule.probability_weights())
            .filter(|(_, w)| *w >= NODE_WEIGHT_CUTOFF)
            .map(|(&x, w)| (x * noise.width(), w))
            .collect();
        let terms: Vec<Vec<f64>> = nodes
            .par_iter()
            .map(|&(shift, weight)| {
                let mut d = self.unnormalized_density(shift, basis)?;
                for v in &mut d {
                    *v *= weight;
                }
                Ok(d)
            })
            .collect::<Result<_>>()?;
        let weights = pairwise_vector_sum(&terms);
        GridDensity::normalized(self.grid, self.readout, weights)
    }

    /// [`density_moments`] with the postselection probability filled in.
    pub fn report(&self, density: &GridDensity, probability: f64) -> Result<SnrReport> {
        let mut r = density_moments(density)?;
        r.postselect_fraction = probability;
        Ok(r)
    }
}

fn check_resolution(meter: &GaussianMeter, readout: Basis, grid: &MeterGrid, p_grid: &MeterGrid) -> Result<()> {
    let p_width = meter.p_width();
    if p_grid.spacing() * POINTS_PER_WIDTH > p_width {
        return Err(Error::GridResolution(format!(
            "P spacing {} gives fewer than {POINTS_PER_WIDTH} points per Δ⁻¹ = {p_width}",
            p_grid.spacing()
        )));
    }
    if readout == Basis::Q && grid.spacing() * POINTS_PER_WIDTH > meter.delta() {
        return Err(Error::GridResolution(format!(
            "Q spacing {} gives fewer than {POINTS_PER_WIDTH} points per Δ = {}",
            grid.spacing(),
            meter.delta()
        )));
    }
    Ok(())
}

/// `ψ(Q_m) = (2π)^{-1/2} Σ_j exp(i·P_j·Q_m)·ψ(P_j)·dP` for grids centered on
/// zero. With `dP·dQ = 2π/n` the kernel factors into an unnormalized inverse
/// DFT between two `(-1)^index` twists.
fn centered_transform(fft: &dyn Fft<f64>, p_grid: &MeterGrid, mut amp: Vec<Complex64>) -> Vec<Complex64> {
    for (j, a) in amp.iter_mut().enumerate() {
        if j % 2 == 1 {
            *a = -*a;
        }
    }
    fft.process(&mut amp);
    let scale = p_grid.spacing() / (2.0 * PI).sqrt();
    for (m, a) in amp.iter_mut().enumerate() {
        *a *= if m % 2 == 1 { -scale } else { scale };
    }
    amp
}

fn pairwise_vector_sum(terms: &[Vec<f64>]) -> Vec<f64> {
    match terms.len() {
        0 => Vec::new(),
        1 => terms[0].clone(),
        n => {
            let (a, b) = rayon::join(
                || pairwise_vector_sum(&terms[..n / 2]),
                || pairwise_vector_sum(&terms[n / 2..]),
            );
            a.iter().zip(&b).map(|(x, y)| x + y).collect()
        }
    }
}

/// Single-shot exact evolution: normalized readout density and the exact
/// postselection probability for a meter prepared with `shift` in
/// `shift_basis`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_and_postselect(
    tsv: &TwoStateVector,
    obs: &Observable,
    k: f64,
    meter: &GaussianMeter,
    shift: f64,
    shift_basis: Basis,
    readout_basis: Basis,
    params: &GridParams,
) -> Result<(GridDensity, f64)> {
    let sizing = match shift_basis {
        Basis::Q => NoiseModel::q_shift(0.0)?,
        Basis::P => NoiseModel::p_shift(0.0)?,
    };
    let oracle = Oracle::new(tsv, obs, k, meter, readout_basis, params, &sizing)?;
    oracle.evolve(shift, shift_basis)
}

/// Readout density averaged over `noise`, with the averaged postselection
/// probability.
#[allow(clippy::too_many_arguments)]
pub fn noise_averaged_density(
    tsv: &TwoStateVector,
    obs: &Observable,
    k: f64,
    meter: &GaussianMeter,
    noise: &NoiseModel,
    readout_basis: Basis,
    params: &GridParams,
    quad_points: usize,
) -> Result<(GridDensity, f64)> {
    let oracle = Oracle::new(tsv, obs, k, meter, readout_basis, params, noise)?;
    oracle.noise_averaged(noise, quad_points)
}

/// Standard deviation of a Gaussian readout of width `w` in the
/// `exp(-x²/w²)` convention.
pub fn gaussian_std(width: f64) -> f64 {
    width / SQRT_2
}
