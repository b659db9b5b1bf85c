//! The five run modes. Each produces a CSV table and summary lines.

use weakmeter::analytic::{
    backaction_snr, regime_ok, snr_imag_wv, snr_q_readout_with_qnoise, validity_lhs, QubitExample, SnrReport,
};
use weakmeter::meter::{effective_width, Basis, NoiseKind, NoiseModel};
use weakmeter::montecarlo::{simulate_backaction, sweep_seed, run_ensemble, SimConfig};
use weakmeter::oracle::{density_moments, Oracle};

use crate::config::{ExperimentConfig, Mode, System};
use crate::output::{short, Field, Table};
use crate::CliError;

/// Points of the distribution table.
pub const DISTRIBUTION_POINTS: usize = 2001;
/// Half-range of the distribution table in units of `Δ_T`.
pub const DISTRIBUTION_RANGE: f64 = 6.0;
/// Relative analytic-vs-oracle tolerance in units of validity_lhs.
pub const AGREEMENT_FACTOR: f64 = 2.0;
/// Floor on the analytic-vs-oracle tolerance.
pub const AGREEMENT_FLOOR: f64 = 1e-9;
/// Monte Carlo agreement window in standard errors.
pub const MC_SIGMAS: f64 = 3.0;

pub fn execute(config: &ExperimentConfig) -> Result<Table, CliError> {
    match config.mode {
        Mode::Distribution => distribution(config),
        Mode::SnrCurve => snr_curve(config),
        Mode::Montecarlo => montecarlo(config),
        Mode::Validity => validity(config),
        Mode::Backaction => backaction(config),
    }
}

fn verdict(v: f64, threshold: f64) -> &'static str {
    if regime_ok(v, threshold) {
        "OK"
    } else {
        "VIOLATED"
    }
}

fn regime_lines(v: f64, threshold: f64) -> [String; 2] {
    [
        format!("validity_lhs = {}", short(v)),
        format!("AAV regime: {} (threshold {})", verdict(v, threshold), short(threshold)),
    ]
}

fn kind_name(noise: &NoiseModel) -> &'static str {
    match noise.kind() {
        NoiseKind::None => "none",
        NoiseKind::QShift => "q",
        NoiseKind::PShift => "p",
    }
}

/// `Δ_T` for P-sensitive quantities; `None` under Q-shift noise.
fn delta_t_of(config: &ExperimentConfig, noise: &NoiseModel) -> Option<f64> {
    effective_width(&config.meter(), noise).ok()
}

/// Closed-form report for the configured readout, where one exists.
fn analytic_report(config: &ExperimentConfig, sys: &System, noise: &NoiseModel) -> Result<Option<SnrReport>, CliError> {
    let meter = config.meter();
    let n = config.runs as f64;
    Ok(match (config.readout, noise.kind()) {
        (Basis::P, _) => Some(snr_imag_wv(config.k, &sys.tsv, &sys.obs, &meter, n, noise)?),
        (Basis::Q, NoiseKind::QShift) => Some(snr_q_readout_with_qnoise(
            config.k,
            &sys.tsv,
            &sys.obs,
            &meter,
            n,
            noise.width(),
        )?),
        (Basis::Q, NoiseKind::None) => Some(snr_q_readout_with_qnoise(config.k, &sys.tsv, &sys.obs, &meter, n, 0.0)?),
        (Basis::Q, NoiseKind::PShift) if noise.is_trivial() => {
            Some(snr_q_readout_with_qnoise(config.k, &sys.tsv, &sys.obs, &meter, n, 0.0)?)
        }
        (Basis::Q, NoiseKind::PShift) => None,
    })
}

fn rho_report(config: &ExperimentConfig, sys: &System, noise: &NoiseModel) -> Result<Option<SnrReport>, CliError> {
    match (sys.w, config.readout, delta_t_of(config, noise)) {
        (Some(w), Basis::P, Some(dt)) => Ok(Some(QubitExample::new(w, config.k, dt)?.rho_p_moments()?)),
        _ => Ok(None),
    }
}

fn oracle_report(config: &ExperimentConfig, sys: &System, noise: &NoiseModel) -> Result<SnrReport, CliError> {
    let oracle = Oracle::new(
        &sys.tsv,
        &sys.obs,
        config.k,
        &config.meter(),
        config.readout,
        &config.grid,
        noise,
    )?;
    let (density, probability) = oracle.noise_averaged(noise, config.quad_points)?;
    Ok(oracle.report(&density, probability)?)
}

/// Analytic S/N within `AGREEMENT_FACTOR·validity_lhs` (relative) of the oracle.
pub fn analytic_agrees(analytic: f64, oracle: f64, validity: f64) -> bool {
    let tol = (AGREEMENT_FACTOR * validity).max(AGREEMENT_FLOOR);
    (analytic - oracle).abs() <= tol * oracle.abs().max(AGREEMENT_FLOOR)
}

fn distribution(config: &ExperimentConfig) -> Result<Table, CliError> {
    let sys = config.system()?;
    let meter = config.meter();
    let delta_t = match config.delta_t {
        Some(dt) => dt,
        None => effective_width(&meter, &config.noise)?,
    };
    let cw = sys.tsv.weak_value(&sys.obs)?;
    let validity = (config.k * cw).norm_sqr() * delta_t * delta_t;
    let l = DISTRIBUTION_RANGE * delta_t;
    let points: Vec<f64> = (0..DISTRIBUTION_POINTS)
        .map(|i| -l + 2.0 * l * i as f64 / (DISTRIBUTION_POINTS - 1) as f64)
        .collect();
    let mut table = Table::new(vec!["p", "rho"]);
    let report = match sys.w {
        Some(w) => {
            let ex = QubitExample::new(w, config.k, delta_t)?;
            for &p in &points {
                table.push(vec![Field::Real(p), Field::Real(ex.rho_p(p))]);
            }
            ex.rho_p_moments()?
        }
        None => {
            // explicit system: P noise chosen so the total width is Δ_T
            let extra = delta_t * delta_t - meter.delta().powi(-2);
            if extra < -1e-12 * delta_t * delta_t {
                return Err(CliError::Config(format!(
                    "delta-t {delta_t} is below the quantum width 1/delta = {}",
                    meter.p_width()
                )));
            }
            let noise = NoiseModel::p_shift(extra.max(0.0).sqrt())?;
            let oracle = Oracle::new(&sys.tsv, &sys.obs, config.k, &meter, Basis::P, &config.grid, &noise)?;
            let (density, _) = oracle.noise_averaged(&noise, config.quad_points)?;
            for &p in &points {
                table.push(vec![Field::Real(p), Field::Real(density.eval(p))]);
            }
            density_moments(&density)?
        }
    };
    table.summary.push(format!("Delta_T = {}", short(delta_t)));
    table.summary.extend(regime_lines(validity, config.threshold));
    table.summary.push(format!("mean P = {}", report.mean));
    table.summary.push(format!("S/N per event = {}", report.snr_per_event));
    Ok(table)
}

fn validity(config: &ExperimentConfig) -> Result<Table, CliError> {
    let sys = config.system()?;
    let v = validity_lhs(config.k, &sys.tsv, &sys.obs, &config.meter(), &config.noise)?;
    let mut table = Table::new(vec![
        "k",
        "delta",
        "noise_kind",
        "noise_width",
        "validity_lhs",
        "threshold",
        "regime_ok",
    ]);
    table.push(vec![
        Field::Real(config.k),
        Field::Real(config.delta),
        Field::Text(kind_name(&config.noise).into()),
        Field::Real(config.noise.width()),
        Field::Real(v),
        Field::Real(config.threshold),
        Field::Bool(regime_ok(v, config.threshold)),
    ]);
    table.summary.extend(regime_lines(v, config.threshold));
    Ok(table)
}

fn snr_curve(config: &ExperimentConfig) -> Result<Table, CliError> {
    if config.sweep.is_none() {
        return Err(CliError::Config("snr-curve needs --sweep".into()));
    }
    let sys = config.system()?;
    let mut table = Table::new(vec![
        "noise_kind",
        "noise_width",
        "delta_t",
        "validity_lhs",
        "regime_ok",
        "snr_analytic",
        "snr_rho",
        "snr_oracle",
        "mean_analytic",
        "mean_oracle",
        "postselect_analytic",
        "postselect_oracle",
    ]);
    for noise in config.sweep_noises()? {
        let v = validity_lhs(config.k, &sys.tsv, &sys.obs, &config.meter(), &noise)?;
        let analytic = analytic_report(config, &sys, &noise)?;
        let rho = rho_report(config, &sys, &noise)?;
        let oracle = oracle_report(config, &sys, &noise)?;
        table.push(vec![
            Field::Text(kind_name(&noise).into()),
            Field::Real(noise.width()),
            Field::opt(delta_t_of(config, &noise)),
            Field::Real(v),
            Field::Bool(regime_ok(v, config.threshold)),
            Field::opt(analytic.map(|r| r.snr_per_event)),
            Field::opt(rho.map(|r| r.snr_per_event)),
            Field::Real(oracle.snr_per_event),
            Field::opt(analytic.map(|r| r.mean)),
            Field::Real(oracle.mean),
            Field::opt(analytic.map(|r| r.postselect_fraction)),
            Field::Real(oracle.postselect_fraction),
        ]);
        table.summary.push(format!(
            "{} width {}: S/N per event oracle {}, analytic {}; validity_lhs = {}, AAV regime: {}",
            kind_name(&noise),
            short(noise.width()),
            oracle.snr_per_event,
            analytic.map_or("n/a".to_string(), |r| r.snr_per_event.to_string()),
            short(v),
            verdict(v, config.threshold),
        ));
    }
    Ok(table)
}

fn montecarlo(config: &ExperimentConfig) -> Result<Table, CliError> {
    let sys = config.system()?;
    let mut table = Table::new(vec![
        "noise_kind",
        "noise_width",
        "delta_t",
        "validity_lhs",
        "snr_analytic",
        "snr_oracle",
        "snr_mc",
        "snr_mc_stderr",
        "postselect_analytic",
        "postselect_oracle",
        "postselect_mc",
        "postselect_mc_stderr",
        "shift_mean_mc",
        "shift_mean_mc_stderr",
        "n_total",
        "n_accepted",
        "agree",
    ]);
    for (i, noise) in config.sweep_noises()?.into_iter().enumerate() {
        let v = validity_lhs(config.k, &sys.tsv, &sys.obs, &config.meter(), &noise)?;
        let analytic = analytic_report(config, &sys, &noise)?;
        let oracle = oracle_report(config, &sys, &noise)?;
        let sim = SimConfig {
            tsv: sys.tsv.clone(),
            obs: sys.obs.clone(),
            k: config.k,
            meter: config.meter(),
            noise,
            readout: config.readout,
            n_runs: config.runs,
            seed: sweep_seed(config.seed, i as u64),
            grid: config.grid,
        };
        let mc = run_ensemble(&sim)?;
        let acc = mc.accepted;
        let analytic_ok = analytic.is_none_or(|a| analytic_agrees(a.snr_per_event, oracle.snr_per_event, v));
        let mc_ok = acc.is_some_and(|a| {
            (a.report.snr_per_event - oracle.snr_per_event).abs() <= MC_SIGMAS * a.snr_stderr
        });
        let agree = analytic_ok && mc_ok;
        table.push(vec![
            Field::Text(kind_name(&noise).into()),
            Field::Real(noise.width()),
            Field::opt(delta_t_of(config, &noise)),
            Field::Real(v),
            Field::opt(analytic.map(|r| r.snr_per_event)),
            Field::Real(oracle.snr_per_event),
            Field::opt(acc.map(|a| a.report.snr_per_event)),
            Field::opt(acc.map(|a| a.snr_stderr)),
            Field::opt(analytic.map(|r| r.postselect_fraction)),
            Field::Real(oracle.postselect_fraction),
            Field::Real(mc.acceptance_fraction()),
            Field::Real(mc.acceptance_stderr()),
            Field::opt(acc.map(|a| a.shift_mean)),
            Field::opt(acc.map(|a| a.shift_mean_stderr)),
            Field::Int(mc.n_total),
            Field::Int(mc.n_accepted),
            Field::Bool(agree),
        ]);
        table.summary.push(format!(
            "{} width {}: S/N per event MC {} ± {}, oracle {}, analytic {}; accepted {}/{}; validity_lhs = {}, AAV regime: {}; agree = {}",
            kind_name(&noise),
            short(noise.width()),
            acc.map_or("n/a".to_string(), |a| a.report.snr_per_event.to_string()),
            acc.map_or("n/a".to_string(), |a| short(a.snr_stderr)),
            oracle.snr_per_event,
            analytic.map_or("n/a".to_string(), |r| r.snr_per_event.to_string()),
            mc.n_accepted,
            mc.n_total,
            short(v),
            verdict(v, config.threshold),
            agree,
        ));
    }
    Ok(table)
}

fn backaction(config: &ExperimentConfig) -> Result<Table, CliError> {
    let sys = config.system()?;
    let cw = sys.tsv.weak_value(&sys.obs)?;
    let p0s = config.sweep.clone().unwrap_or_else(|| vec![config.p0]);
    if p0s.is_empty() {
        return Err(CliError::Config("sweep list is empty".into()));
    }
    let mut table = Table::new(vec![
        "k",
        "p0",
        "exact_probability",
        "first_order_probability",
        "baseline_probability",
        "relative_gap",
        "gap_bound",
        "snr_analytic",
        "snr_exact",
        "snr_mc",
        "snr_mc_stderr",
        "successes",
        "n_runs",
        "agree",
    ]);
    let v = validity_lhs(config.k, &sys.tsv, &sys.obs, &config.meter(), &config.noise)?;
    table.summary.extend(regime_lines(v, config.threshold));
    for (i, &p0) in p0s.iter().enumerate() {
        let a = backaction_snr(&sys.tsv, &sys.obs, config.k, p0, config.runs as f64)?;
        let mc = simulate_backaction(&sys.tsv, &sys.obs, config.k, p0, config.runs, sweep_seed(config.seed, i as u64))?;
        let gap = a.first_order_gap();
        let bound = (config.k * p0 * cw).norm_sqr();
        // the signal computed from the exact probability, the mean of the binomial draw
        let base = a.baseline_probability;
        let exact = (a.exact_probability - base) / (base * (1.0 - base) / config.runs as f64).sqrt();
        let agree = gap <= bound.max(AGREEMENT_FLOOR) && (mc.snr - exact).abs() <= MC_SIGMAS * mc.snr_stderr;
        table.push(vec![
            Field::Real(config.k),
            Field::Real(p0),
            Field::Real(a.exact_probability),
            Field::Real(a.first_order_probability),
            Field::Real(a.baseline_probability),
            Field::Real(gap),
            Field::Real(bound),
            Field::Real(a.snr),
            Field::Real(exact),
            Field::Real(mc.snr),
            Field::Real(mc.snr_stderr),
            Field::Int(mc.successes),
            Field::Int(mc.n_runs),
            Field::Bool(agree),
        ]);
        table.summary.push(format!(
            "p0 {}: S/N analytic {}, exact {}, binomial MC {} ± {}; agree = {}",
            short(p0),
            a.snr,
            exact,
            mc.snr,
            short(mc.snr_stderr),
            agree
        ));
    }
    Ok(table)
}
