//! Gaussian meter states and the preparation-noise models.
//!
//! All widths use the `exp(-x²/Δ²)` convention for densities: the bare meter
//! has Q-readout density `(Δ√π)⁻¹ exp(-Q²/Δ²)` (variance `Δ²/2`) and
//! P-readout density `(Δ⁻¹√π)⁻¹ exp(-Δ²P²)` (variance `Δ⁻²/2`). A noise
//! model of width `w` shifts the meter by a zero-mean Gaussian with density
//! `(w√π)⁻¹ exp(-x²/w²)`, i.e. standard deviation `w/√2`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Readout or shift basis of the meter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Q,
    P,
}

/// A meter prepared in the Gaussian state of Q-width `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMeter {
    delta: f64,
}

impl GaussianMeter {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta", format!("must be positive and finite, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Quantum uncertainty in P, `Δ⁻¹`.
    pub fn p_width(&self) -> f64 {
        1.0 / self.delta
    }

    pub fn q_variance(&self) -> f64 {
        self.delta * self.delta / 2.0
    }

    pub fn p_variance(&self) -> f64 {
        1.0 / (2.0 * self.delta * self.delta)
    }

    /// Width of the bare readout density in `basis`.
    pub fn width(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Q => self.delta,
            Basis::P => self.p_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    None,
    QShift,
    PShift,
}

/// Per-run random preparation shift of the meter.
///
/// Nonzero-mean shifts (systematic errors) are not modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    width: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, width: f64) -> Result<Self> {
        if !(width >= 0.0) || !width.is_finite() {
            return Err(Error::invalid("noise width", format!("must be nonnegative, got {width}")));
        }
        let width = if kind == NoiseKind::None { 0.0 } else { width };
        Ok(Self { kind, width })
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            width: 0.0,
        }
    }

    pub fn q_shift(width: f64) -> Result<Self> {
        Self::new(NoiseKind::QShift, width)
    }

    pub fn p_shift(width: f64) -> Result<Self> {
        Self::new(NoiseKind::PShift, width)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// `Δ_Q` or `Δ_P`; always 0 for [`NoiseKind::None`].
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Basis in which the shift displaces the meter, if any.
    pub fn basis(&self) -> Option<Basis> {
        match self.kind {
            NoiseKind::None => None,
            NoiseKind::QShift => Some(Basis::Q),
            NoiseKind::PShift => Some(Basis::P),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.kind == NoiseKind::None || self.width == 0.0
    }

    pub fn std_dev(&self) -> f64 {
        self.width / std::f64::consts::SQRT_2
    }

    /// Probability density of a shift `x`.
    pub fn density(&self, x: f64) -> f64 {
        let w = self.width;
        (-(x / w).powi(2)).exp() / (w * std::f64::consts::PI.sqrt())
    }
}

/// Integrated coupling `k = ∫g(t)dt` of `H = g(t)·P·C` in the impulsive limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    k: f64,
}

impl Interaction {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::invalid("k", "must be finite"));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

/// Draws one preparation shift from `noise`. A zero-width model returns 0
/// without consuming randomness.
pub fn sample_shift<R: Rng + ?Sized>(noise: &NoiseModel, rng: &mut R) -> f64 {
    if noise.is_trivial() {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z * noise.std_dev()
}

/// Total P-space spread `Δ_T = √(Δ⁻² + Δ_P²)`.
pub fn effective_width(meter: &GaussianMeter, noise: &NoiseModel) -> Result<f64> {
    match noise.kind {
        NoiseKind::QShift => Err(Error::Unsupported(
            "Δ_T is a P-space width; Q-shift noise does not enter it".into(),
        )),
        NoiseKind::None | NoiseKind::PShift => {
            Ok((meter.delta.powi(-2) + noise.width * noise.width).sqrt())
        }
    }
}
