//! Closed-form shifts, moments and signal-to-noise ratios.
//!
//! Every Gaussian-regime report carries two S/N values. `snr_per_event` is
//! always `mean / std` of a single postselected readout. The published
//! formulas write the S/N of `N` events as `√N·shift/Δ` while the readout
//! standard deviation is `Δ/√2`, so `snr_paper_convention` differs from
//! `√n_events · snr_per_event` by exactly `√2`. Cross-path comparisons use
//! `snr_per_event`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::meter::{effective_width, GaussianMeter, NoiseKind, NoiseModel};
use crate::quadrature;
use crate::quantum::{Observable, TwoStateVector};

/// Default upper bound on [`validity_lhs`] for the weak-value regime to be
/// considered valid.
pub const DEFAULT_VALIDITY_THRESHOLD: f64 = 0.05;

/// Absolute tolerance of the adaptive moment quadrature.
pub const MOMENT_TOLERANCE: f64 = 1e-12;

/// Moments and signal-to-noise figures of a readout distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrReport {
    pub mean: f64,
    pub second_moment: f64,
    pub std: f64,
    pub snr_per_event: f64,
    /// The published closed-form S/N for `n_events`, where one exists.
    pub snr_paper_convention: Option<f64>,
    pub postselect_fraction: f64,
    pub n_events: f64,
}

impl SnrReport {
    pub fn from_moments(mean: f64, variance: f64, postselect_fraction: f64, n_events: f64) -> Self {
        let std = variance.max(0.0).sqrt();
        Self {
            mean,
            second_moment: variance + mean * mean,
            std,
            snr_per_event: mean / std,
            snr_paper_convention: None,
            postselect_fraction,
            n_events,
        }
    }

    fn with_paper_snr(mut self, snr: f64) -> Self {
        self.snr_paper_convention = Some(snr);
        self
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    /// `√n_events · snr_per_event`.
    pub fn ensemble_snr(&self) -> f64 {
        self.n_events.sqrt() * self.snr_per_event
    }
}

fn check_runs(n: f64) -> Result<()> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::invalid("n_runs", format!("must be nonnegative, got {n}")));
    }
    Ok(())
}

/// Ordinary measurement with the system in an eigenstate of eigenvalue `c`:
/// Q shift `k·c`, S/N `√N·k·c/Δ`.
pub fn snr_direct(k: f64, c: f64, meter: &GaussianMeter, n_runs: f64) -> Result<SnrReport> {
    check_runs(n_runs)?;
    let delta = meter.delta();
    Ok(SnrReport::from_moments(k * c, meter.q_variance(), 1.0, n_runs)
        .with_paper_snr(n_runs.sqrt() * k * c / delta))
}

/// Q readout of a postselected meter: shift `k·Re C_w`, S/N
/// `√N_Φ·k·Re C_w/Δ` with `N_Φ = N·|⟨Φ|Ψ⟩|²`.
pub fn snr_real_wv(
    k: f64,
    tsv: &TwoStateVector,
    obs: &Observable,
    meter: &GaussianMeter,
    n_total: f64,
) -> Result<SnrReport> {
    snr_q_readout_with_qnoise(k, tsv, obs, meter, n_total, 0.0)
}

/// Q readout averaged over Q-shift noise of width `Δ_Q`: same shift, variance
/// `(Δ² + Δ_Q²)/2`.
pub fn snr_q_readout_with_qnoise(
    k: f64,
    tsv: &TwoStateVector,
    obs: &Observable,
    meter: &GaussianMeter,
    n_total: f64,
    delta_q: f64,
) -> Result<SnrReport> {
    check_runs(n_total)?;
    if !(delta_q >= 0.0) {
        return Err(Error::invalid("delta_q", "must be nonnegative"));
    }
    let cw = tsv.weak_value(obs)?;
    let fraction = tsv.overlap_probability();
    let n_phi = n_total * fraction;
    let width_sq = meter.delta().powi(2) + delta_q * delta_q;
    let mean = k * cw.re;
    Ok(SnrReport::from_moments(mean, width_sq / 2.0, fraction, n_phi)
        .with_paper_snr(n_phi.sqrt() * mean / width_sq.sqrt()))
}

/// P readout of a postselected meter (imaginary part of the weak value).
///
/// Q-shift noise leaves the P readout untouched, so `None` and `QShift`
/// produce identical reports. P-shift noise of width `Δ_P` gives mean
/// `k·Δ_T²·Im C_w` and variance `Δ_T²/2` with `Δ_T² = Δ⁻² + Δ_P²`.
pub fn snr_imag_wv(
    k: f64,
    tsv: &TwoStateVector,
    obs: &Observable,
    meter: &GaussianMeter,
    n_total: f64,
    noise: &NoiseModel,
) -> Result<SnrReport> {
    check_runs(n_total)?;
    let cw = tsv.weak_value(obs)?;
    let fraction = tsv.overlap_probability();
    let n_phi = n_total * fraction;
    let p_noise = match noise.kind() {
        NoiseKind::PShift => *noise,
        NoiseKind::None | NoiseKind::QShift => NoiseModel::none(),
    };
    let delta_t = effective_width(meter, &p_noise)?;
    let spread_sq = delta_t * delta_t;
    let mean = k * spread_sq * cw.im;
    Ok(SnrReport::from_moments(mean, spread_sq / 2.0, fraction, n_phi)
        .with_paper_snr(n_phi.sqrt() * k * cw.im * delta_t))
}

/// Leading-order postselection probability for a meter prepared with
/// P-shift `p0`: `|⟨Φ|Ψ⟩|²·exp[k·Im C_w·(2p0 + k·Im C_w·Δ⁻²)]`.
///
/// Returns [`Error::RegimeViolation`] when the estimate exceeds one.
pub fn postselect_prob_given_p0(
    tsv: &TwoStateVector,
    obs: &Observable,
    k: f64,
    meter: &GaussianMeter,
    p0: f64,
) -> Result<f64> {
    let im = tsv.weak_value(obs)?.im;
    let probability =
        tsv.overlap_probability() * (k * im * (2.0 * p0 + k * im * meter.delta().powi(-2))).exp();
    if probability > 1.0 {
        return Err(Error::RegimeViolation { probability });
    }
    Ok(probability)
}

/// Distribution of the P shift among postselected runs.
///
/// Bayes' rule on the Gaussian prior of width `Δ_P` and the leading-order
/// likelihood gives a Gaussian with mean `k·Im C_w·Δ_P²` and the prior's
/// variance `Δ_P²/2`. The density is normalized as
/// `(Δ_P√π)⁻¹·exp(-(x - mean)²/Δ_P²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorShiftDensity {
    mean: f64,
    delta_p: f64,
}

impl PosteriorShiftDensity {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.delta_p * self.delta_p / 2.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.delta_p;
        (-z * z).exp() / (self.delta_p * PI.sqrt())
    }
}

pub fn posterior_p0_density(delta_p: f64, k: f64, im_cw: f64) -> Result<PosteriorShiftDensity> {
    if !(delta_p > 0.0) || !delta_p.is_finite() {
        return Err(Error::invalid("delta_p", format!("must be positive, got {delta_p}")));
    }
    Ok(PosteriorShiftDensity {
        mean: k * im_cw * delta_p * delta_p,
        delta_p,
    })
}

/// `|k·C_w|²·⟨P²⟩`-type validity measure of the weak-value expansion:
/// `|k·C_w|²·(Δ⁻² + Δ_P²)`. Q-shift noise does not enter.
pub fn validity_lhs(
    k: f64,
    tsv: &TwoStateVector,
    obs: &Observable,
    meter: &GaussianMeter,
    noise: &NoiseModel,
) -> Result<f64> {
    let cw = tsv.weak_value(obs)?;
    let p_width = match noise.kind() {
        NoiseKind::PShift => noise.width(),
        NoiseKind::None | NoiseKind::QShift => 0.0,
    };
    Ok((k * cw).norm_sqr() * (meter.delta().powi(-2) + p_width * p_width))
}

pub fn regime_ok(validity: f64, threshold: f64) -> bool {
    validity <= threshold
}

/// The two-level example with `C_w = i·w`, coupling `k` and total P spread
/// `Δ_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitExample {
    pub w: f64,
    pub k: f64,
    pub delta_t: f64,
}

impl QubitExample {
    pub fn new(w: f64, k: f64, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0) || !delta_t.is_finite() {
            return Err(Error::invalid("delta_t", format!("must be positive, got {delta_t}")));
        }
        if !w.is_finite() || !k.is_finite() {
            return Err(Error::invalid("w/k", "must be finite"));
        }
        Ok(Self { w, k, delta_t })
    }

    pub fn from_meter(w: f64, k: f64, meter: &GaussianMeter, noise: &NoiseModel) -> Result<Self> {
        Self::new(w, k, effective_width(meter, noise)?)
    }

    /// `exp(-k²Δ_T²)`.
    fn damping(&self) -> f64 {
        (-(self.k * self.delta_t).powi(2)).exp()
    }

    /// `[(1+w²) + (1-w²)·exp(-k²Δ_T²)] / 2`.
    fn normalizer(&self) -> f64 {
        let w2 = self.w * self.w;
        0.5 * ((1.0 + w2) + (1.0 - w2) * self.damping())
    }

    /// Exact P-readout density of the postselected meter.
    ///
    /// Numerator and denominator of the textbook expression are both scaled
    /// by `exp(-k²Δ_T²)`, so nothing overflows for large `kΔ_T`.
    pub fn rho_p(&self, p: f64) -> f64 {
        let amp = (self.k * p).cos() + self.w * (self.k * p).sin();
        let gauss = (-(p / self.delta_t).powi(2)).exp();
        amp * amp * gauss / (self.normalizer() * PI.sqrt() * self.delta_t)
    }

    /// Noise-averaged probability that postselection succeeds.
    pub fn postselect_probability(&self) -> f64 {
        self.normalizer() / (1.0 + self.w * self.w)
    }

    /// Mean and second moment of [`rho_p`](Self::rho_p) in closed form.
    pub fn closed_form_moments(&self) -> (f64, f64) {
        let s2 = self.delta_t * self.delta_t / 2.0;
        let e = self.damping();
        let z = self.normalizer();
        let w2 = self.w * self.w;
        let mean = self.w * self.k * self.delta_t * self.delta_t * e / z;
        let second = (0.5 * (1.0 + w2) * s2
            + 0.5 * (1.0 - w2) * (s2 - 4.0 * self.k * self.k * s2 * s2) * e)
            / z;
        (mean, second)
    }

    /// Half-width of the integration interval for the moments.
    pub fn support(&self) -> f64 {
        8.0 * self.delta_t + (self.w * self.k).abs() * self.delta_t * self.delta_t
    }

    /// Moments of [`rho_p`](Self::rho_p) by adaptive quadrature.
    pub fn rho_p_moments(&self) -> Result<SnrReport> {
        let l = self.support();
        let mean = quadrature::integrate(|p| p * self.rho_p(p), -l, l, MOMENT_TOLERANCE)?;
        let second = quadrature::integrate(|p| p * p * self.rho_p(p), -l, l, MOMENT_TOLERANCE)?;
        let variance = second - mean * mean;
        if !(variance > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let mut report = SnrReport::from_moments(mean, variance, self.postselect_probability(), 1.0);
        report.second_moment = second;
        Ok(report)
    }
}

/// Reversed-role protocol: the meter variable is fixed at `p0` and the signal
/// is the shift of the postselection probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackactionReport {
    /// Per-trial shift of the success probability and its binomial spread;
    /// `snr_paper_convention` is the first-order S/N for `n_events` trials.
    pub report: SnrReport,
    pub snr: f64,
    /// `|⟨Φ|exp(-i·k·p0·C)|Ψ⟩|²`.
    pub exact_probability: f64,
    /// `|⟨Φ|Ψ⟩|²·(1 + 2k·Im C_w·p0)`.
    pub first_order_probability: f64,
    /// `|⟨Φ|Ψ⟩|²`.
    pub baseline_probability: f64,
}

impl BackactionReport {
    /// `|first-order - exact|` in units of the baseline probability, the
    /// scale on which the expansion is written. Second-order size
    /// `|k·p0·C_w|²`.
    pub fn first_order_gap(&self) -> f64 {
        (self.first_order_probability - self.exact_probability).abs() / self.baseline_probability
    }
}

/// `S/N = 2k·Im C_w·p0·√(N|⟨Φ|Ψ⟩|² / (1 - |⟨Φ|Ψ⟩|²))`.
pub fn backaction_snr(
    tsv: &TwoStateVector,
    obs: &Observable,
    k: f64,
    p0: f64,
    n_runs: f64,
) -> Result<BackactionReport> {
    check_runs(n_runs)?;
    let cw: Complex64 = tsv.weak_value(obs)?;
    let base = tsv.overlap_probability();
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::invalid(
            "postselection",
            format!("|<Φ|Ψ>|² = {base} must lie strictly inside (0, 1)"),
        ));
    }
    let shift = 2.0 * k * cw.im * p0;
    let snr = shift * (n_runs * base / (1.0 - base)).sqrt();
    let exact_probability = tsv.transition_amplitude(obs, k, p0)?.norm_sqr();
    let report = SnrReport::from_moments(shift * base, base * (1.0 - base), base, n_runs)
        .with_paper_snr(snr);
    Ok(BackactionReport {
        report,
        snr,
        exact_probability,
        first_order_probability: base * (1.0 + shift),
        baseline_probability: base,
    })
}

/// `√2` times the per-event closed-form S/N `k·Im C_w·Δ_T`, i.e. the
/// `mean/std` value implied by the Gaussian-regime moments.
pub fn gaussian_regime_snr_per_event(k: f64, im_cw: f64, delta_t: f64) -> f64 {
    SQRT_2 * k * im_cw * delta_t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::SystemState;

    fn meter(d: f64) -> GaussianMeter {
        GaussianMeter::new(d).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// pre ∝ (3, -2), post ∝ (1, 1), C = σz: C_w = 5, |⟨Φ|Ψ⟩|² = 1/26.
    fn real_five() -> (TwoStateVector, Observable) {
        let tsv = TwoStateVector::new(
            SystemState::from_real(&[3.0, -2.0]).unwrap(),
            SystemState::from_real(&[1.0, 1.0]).unwrap(),
        )
        .unwrap();
        (tsv, Observable::pauli_z())
    }

    #[test]
    fn direct_examples() {
        assert_eq!(snr_direct(0.0, 1.0, &meter(1.0), 100.0).unwrap().snr_paper_convention, Some(0.0));
        let r = snr_direct(0.1, 1.0, &meter(1.0), 100.0).unwrap();
        assert!((r.snr_paper_convention.unwrap() - 1.0).abs() < 1e-14);
        assert!((r.std - 1.0 / SQRT_2).abs() < 1e-15);
        let r4 = snr_direct(0.1, 1.0, &meter(1.0), 400.0).unwrap();
        assert!((r4.snr_paper_convention.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(r.postselect_fraction, 1.0);
    }

    #[test]
    fn real_weak_value_examples() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let r = snr_real_wv(0.01, &tsv, &obs, &meter(1.0), 1e4).unwrap();
        assert!(r.snr_paper_convention.unwrap().abs() < 1e-15);

        let (tsv, obs) = real_five();
        // N_Φ = 400 needs N = 400·26
        let r = snr_real_wv(0.01, &tsv, &obs, &meter(1.0), 400.0 * 26.0).unwrap();
        assert!((r.n_events - 400.0).abs() < 1e-9);
        assert!((r.snr_paper_convention.unwrap() - 1.0).abs() < 1e-12);

        let e = SystemState::basis(2, 0).unwrap();
        let tsv = TwoStateVector::new(e.clone(), e).unwrap();
        let a = snr_real_wv(0.1, &tsv, &obs, &meter(1.0), 100.0).unwrap();
        let b = snr_direct(0.1, 1.0, &meter(1.0), 100.0).unwrap();
        assert!((a.snr_paper_convention.unwrap() - b.snr_paper_convention.unwrap()).abs() < 1e-14);
        assert_eq!(a.n_events, 100.0);
    }

    #[test]
    fn imaginary_weak_value_examples() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(1.0);
        let none = snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &NoiseModel::none()).unwrap();
        let p0 = snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &NoiseModel::p_shift(0.0).unwrap()).unwrap();
        assert_eq!(none, p0);
        for dq in [0.0, 1.0, 4.0, 17.0] {
            let q = snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &NoiseModel::q_shift(dq).unwrap()).unwrap();
            assert_eq!(none, q);
        }
        let p1 = snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &NoiseModel::p_shift(1.0).unwrap()).unwrap();
        assert!((p1.mean - 0.16).abs() < 1e-14);
        assert!((p1.variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_noise_snr_increases_q_noise_snr_decreases() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(1.0);
        let mut last = f64::NEG_INFINITY;
        for i in 0..30 {
            let noise = NoiseModel::p_shift(0.1 * i as f64).unwrap();
            let s = snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &noise).unwrap().snr_paper_convention.unwrap();
            assert!(s > last);
            last = s;
        }
        let (tsv, obs) = real_five();
        let mut last = f64::INFINITY;
        for i in 0..30 {
            let s = snr_q_readout_with_qnoise(0.01, &tsv, &obs, &m, 1e4, 0.2 * i as f64)
                .unwrap()
                .snr_paper_convention
                .unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn q_noise_examples() {
        let (tsv, obs) = real_five();
        let m = meter(1.3);
        let a = snr_q_readout_with_qnoise(0.01, &tsv, &obs, &m, 1e4, 0.0).unwrap();
        let b = snr_real_wv(0.01, &tsv, &obs, &m, 1e4).unwrap();
        assert_eq!(a, b);
        let c = snr_q_readout_with_qnoise(0.01, &tsv, &obs, &m, 1e4, 1.3).unwrap();
        let ratio = c.snr_paper_convention.unwrap() / a.snr_paper_convention.unwrap();
        assert!((ratio - 1.0 / SQRT_2).abs() < 1e-14);
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let d = snr_q_readout_with_qnoise(0.01, &tsv, &obs, &m, 1e4, 3.0).unwrap();
        assert_eq!(d.snr_paper_convention.unwrap(), 0.0);
    }

    #[test]
    fn report_invariants() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(0.7);
        let reports = [
            snr_direct(0.3, -2.0, &m, 50.0).unwrap(),
            snr_imag_wv(0.01, &tsv, &obs, &m, 1e4, &NoiseModel::p_shift(1.3).unwrap()).unwrap(),
            snr_q_readout_with_qnoise(0.02, &tsv, &obs, &m, 1e3, 0.4).unwrap(),
        ];
        for r in reports {
            assert!(rel(r.std * r.std, r.second_moment - r.mean * r.mean) < 1e-10 || r.mean == 0.0);
            assert_eq!(r.snr_per_event, r.mean / r.std);
            let paper = r.snr_paper_convention.unwrap();
            if paper != 0.0 {
                assert!(rel(paper * SQRT_2, r.ensemble_snr()) < 1e-10);
            }
        }
    }

    #[test]
    fn postselection_probability_examples() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(1.0);
        assert_eq!(postselect_prob_given_p0(&tsv, &obs, 0.0, &m, 0.7).unwrap(), tsv.overlap_probability());
        let p = postselect_prob_given_p0(&tsv, &obs, 0.01, &m, 0.0).unwrap();
        assert!(rel(p, 0.0064f64.exp() / 65.0) < 1e-14);
        // odd first-order term: log(P(p0)/P(-p0)) = 4k·Im C_w·p0
        let a = postselect_prob_given_p0(&tsv, &obs, 0.01, &m, 0.3).unwrap();
        let b = postselect_prob_given_p0(&tsv, &obs, 0.01, &m, -0.3).unwrap();
        assert!(((a / b).ln() - 4.0 * 0.01 * 8.0 * 0.3).abs() < 1e-13);
        assert!(matches!(
            postselect_prob_given_p0(&tsv, &obs, 0.5, &m, 5.0),
            Err(Error::RegimeViolation { .. })
        ));
    }

    #[test]
    fn posterior_density_examples() {
        let prior = posterior_p0_density(1.3, 0.0, 8.0).unwrap();
        let noise = NoiseModel::p_shift(1.3).unwrap();
        for x in [-2.0, 0.0, 0.4, 3.0] {
            assert!(rel(prior.eval(x), noise.density(x)) < 1e-14);
        }
        let post = posterior_p0_density(1.0, 0.01, 8.0).unwrap();
        assert!((post.mean() - 0.08).abs() < 1e-15);
        let total = quadrature::integrate(|x| post.eval(x), -12.0, 12.0, 1e-13).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(posterior_p0_density(0.0, 0.01, 8.0).is_err());
    }

    #[test]
    fn posterior_matches_bayes_combination() {
        // prior × leading-order likelihood, normalized numerically
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(1.0);
        let noise = NoiseModel::p_shift(1.0).unwrap();
        let joint = |x: f64| noise.density(x) * postselect_prob_given_p0(&tsv, &obs, 0.01, &m, x).unwrap();
        let z = quadrature::integrate(joint, -10.0, 10.0, 1e-14).unwrap();
        let mean = quadrature::integrate(|x| x * joint(x), -10.0, 10.0, 1e-14).unwrap() / z;
        let post = posterior_p0_density(1.0, 0.01, 8.0).unwrap();
        assert!((mean - post.mean()).abs() < 1e-10);
        for x in [-1.0, 0.08, 1.5] {
            assert!(rel(joint(x) / z, post.eval(x)) < 1e-9);
        }
    }

    #[test]
    fn validity_examples() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let m = meter(1.0);
        assert_eq!(validity_lhs(0.0, &tsv, &obs, &m, &NoiseModel::none()).unwrap(), 0.0);
        let v = validity_lhs(0.01, &tsv, &obs, &m, &NoiseModel::p_shift(1.0).unwrap()).unwrap();
        assert!((v - 0.0128).abs() < 1e-15);
        let base = validity_lhs(0.01, &tsv, &obs, &m, &NoiseModel::none()).unwrap();
        for dq in [0.0, 1.0, 10.0] {
            let v = validity_lhs(0.01, &tsv, &obs, &m, &NoiseModel::q_shift(dq).unwrap()).unwrap();
            assert_eq!(v, base);
        }
        assert!(regime_ok(0.0128, DEFAULT_VALIDITY_THRESHOLD));
        assert!(!regime_ok(0.0128, 1e-2));
    }

    #[test]
    fn rho_p_reduces_to_gaussian_at_zero_coupling() {
        for w in [0.0, 1.0, 8.0] {
            let ex = QubitExample::new(w, 0.0, 1.7).unwrap();
            for p in [-3.0, -0.5, 0.0, 1.2, 4.0] {
                let g = (-(p / 1.7f64).powi(2)).exp() / (PI.sqrt() * 1.7);
                assert!(rel(ex.rho_p(p), g) < 1e-14);
            }
        }
    }

    #[test]
    fn rho_p_normalized_and_nonnegative() {
        for w in [0.0, 1.0, 8.0, 20.0] {
            for kdt in [0.0, 0.05, 0.5, 1.0, 2.0, 3.0] {
                let ex = QubitExample::new(w, kdt / 1.3, 1.3).unwrap();
                let l = ex.support();
                let total = quadrature::integrate(|p| ex.rho_p(p), -l, l, 1e-13).unwrap();
                assert!((total - 1.0).abs() < 1e-10, "w={w} kdt={kdt} total={total}");
                for i in -100..=100 {
                    assert!(ex.rho_p(i as f64 * 0.1) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn rho_p_large_coupling_stays_finite() {
        let ex = QubitExample::new(8.0, 10.0, 2.0).unwrap();
        let v = ex.rho_p(0.3);
        assert!(v.is_finite() && v >= 0.0);
        let total = quadrature::integrate(|p| ex.rho_p(p), -ex.support(), ex.support(), 1e-12).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn moments_closed_form_agrees_with_quadrature() {
        for (w, k, dt) in [(8.0, 0.2, 1.0), (1.0, 0.3, 2.0), (20.0, 0.01, 1.4), (0.0, 0.5, 1.0)] {
            let ex = QubitExample::new(w, k, dt).unwrap();
            let r = ex.rho_p_moments().unwrap();
            let (m, m2) = ex.closed_form_moments();
            assert!((r.mean - m).abs() < 1e-11, "{w} {k} {dt}");
            assert!((r.second_moment - m2).abs() < 1e-11);
        }
        let r = QubitExample::new(8.0, 0.0, 1.0).unwrap().rho_p_moments().unwrap();
        assert!(r.mean.abs() < 1e-12);
    }

    #[test]
    fn small_coupling_mean_matches_weak_value_shift() {
        for dt in [0.2, 0.5, 1.0] {
            let k = 0.05 / (8.0 * dt);
            let ex = QubitExample::new(8.0, k, dt).unwrap();
            let r = ex.rho_p_moments().unwrap();
            assert!(rel(r.mean, k * dt * dt * 8.0) < 5e-3);
            let pred = gaussian_regime_snr_per_event(k, 8.0, dt);
            assert!(rel(r.snr_per_event, pred) < 1e-2);
        }
    }

    #[test]
    fn snr_maximum_near_unit_wk_delta_t() {
        let (w, k) = (8.0, 0.2);
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 1..=300 {
            let x = 0.01 * i as f64;
            let r = QubitExample::new(w, k, x / (w * k)).unwrap().rho_p_moments().unwrap();
            if r.snr_per_event > best.1 {
                best = (x, r.snr_per_event);
            }
        }
        assert!(best.0 >= 0.5 && best.0 <= 2.0, "max at {}", best.0);
    }

    #[test]
    fn backaction_examples() {
        let (tsv, obs) = TwoStateVector::qubit_example(8.0);
        let r = backaction_snr(&tsv, &obs, 0.01, 1.0, 65e4).unwrap();
        let expected = 2.0 * 0.01 * 8.0 * (65e4_f64 / 65.0 / (64.0 / 65.0)).sqrt();
        assert!(rel(r.snr, expected) < 1e-12);
        assert!(rel(r.report.ensemble_snr(), r.snr) < 1e-12);
        let neg = backaction_snr(&tsv, &obs, -0.01, 1.0, 65e4).unwrap();
        assert_eq!(neg.snr, -r.snr);
        assert!(r.first_order_gap() < (0.01f64 * 8.0).powi(2));
        assert!(neg.first_order_gap() < (0.01f64 * 8.0).powi(2));

        let (tsv, obs) = real_five();
        assert_eq!(backaction_snr(&tsv, &obs, 0.01, 1.0, 1e4).unwrap().snr, 0.0);
        let e = SystemState::basis(2, 0).unwrap();
        let tsv = TwoStateVector::new(e.clone(), e).unwrap();
        assert!(backaction_snr(&tsv, &obs, 0.01, 1.0, 1e4).is_err());
    }
}
