use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use fluxnoise::fit::{
    extract_t2star_sweep, fit_beating_ramsey, fit_exponential_ramsey, FitFlag, FitResult, FitSettings,
    InitialGuess,
};
use fluxnoise::noise::psd::{averaged_periodogram, band_average};
use fluxnoise::noise::{
    build_flicker_bath_from_spec, estimate_psd, flicker_psd_theory, BathTraceSampler,
    CorrelationConvention, PsdOptions, TraceSampling,
};
use fluxnoise::ramsey::{amplitude_split_study, binomial_readout, decay_factor_mc, frequency_sweep, RamseyConfig};
use fluxnoise::rng::{domain, SeedTree};
use fluxnoise::stats::median;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, opt_num, Csv, OutputSet};

pub fn cmd_psd(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let p = &config.psd;
    let spec = config.psd_bath();
    let mut rng = SeedTree::new(config.seed).domain(domain::BATH_RATES).stream(0);
    let bath = build_flicker_bath_from_spec(&spec, &mut rng).map_err(|e| CliError::Config(format!("psd: {e}")))?;
    let dt = p.dt_ns * 1e-9;
    let n = (p.horizon_s / dt).round() as usize;
    let sampler = BathTraceSampler::new(&bath, dt, n, p.exact_rate_max_hz)
        .map_err(|e| CliError::Config(format!("psd: {e}")))?;
    log::info!(
        "psd: {} paths of {n} samples ({} exact members, {} in Gaussian surrogate)",
        p.paths,
        sampler.exact_members(),
        sampler.gaussian_members()
    );
    let traces = sampler.sample_many(&SeedTree::new(config.seed).domain(domain::PSD_TRACES), p.paths)?;
    let options = PsdOptions {
        window: p.window,
        sampling: TraceSampling::CellAverage,
        normalization_bandwidth: p.normalization_bandwidth,
    };

    let (freqs, estimated, normalized) = match estimate_psd(&traces, dt, p.normalization_hz, options) {
        Ok(est) => (est.frequencies, est.values, true),
        Err(fluxnoise::Error::Numerical(msg)) => {
            // e.g. a zero-amplitude bath: report the raw spectrum instead
            log::warn!("psd: {msg}; writing unnormalized values");
            let (f, v) = averaged_periodogram(&traces, dt)?;
            (f, v, false)
        }
        Err(e) => return Err(CliError::Config(format!("psd: {e}"))),
    };

    let mut lorentz = Vec::with_capacity(freqs.len());
    let mut ideal = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let th = flicker_psd_theory(&bath, 2.0 * PI * f, CorrelationConvention::PoissonSwitching)?;
        lorentz.push(th.lorentzian_sum);
        ideal.push(th.asymptote);
    }
    for curve in [&mut lorentz, &mut ideal] {
        let reference = band_average(&freqs, curve, p.normalization_hz, p.normalization_bandwidth);
        match reference {
            Some(r) if normalized && r > 0.0 => curve.iter_mut().for_each(|v| *v /= r),
            _ => {}
        }
    }

    let lo = 10.0 * freqs.first().copied().unwrap_or(0.0);
    let hi = 0.5 * freqs.last().copied().unwrap_or(0.0);
    let notes = [
        format!("normalization_hz: {}", num(p.normalization_hz)),
        format!("normalized: {normalized}"),
        format!("reliable_band_hz: {},{}", num(lo), num(hi)),
    ];
    let mut csv = Csv::with_notes(
        "psd",
        config,
        &notes,
        &["freq_hz", "psd_estimated", "psd_lorentzian_sum", "psd_ideal_1f"],
    );
    for k in 0..freqs.len() {
        csv.row([num(freqs[k]), num(estimated[k]), num(lorentz[k]), num(ideal[k])]);
    }
    let mut files = OutputSet::new(out)?;
    files.add("psd.csv", &csv.finish())?;
    files.commit()
}

#[derive(Serialize)]
struct FitOutcome {
    result: Option<FitResult>,
    error: Option<String>,
}

impl From<fluxnoise::Result<FitResult>> for FitOutcome {
    fn from(r: fluxnoise::Result<FitResult>) -> Self {
        match r {
            Ok(f) => Self { result: Some(f), error: None },
            Err(e) => Self { result: None, error: Some(e.to_string()) },
        }
    }
}

#[derive(Serialize)]
struct Provenance {
    tool: String,
    command: &'static str,
    seed: u64,
    config_sha256: String,
}

impl Provenance {
    fn new(command: &'static str, config: &RunConfig) -> Self {
        Self {
            tool: format!("fluxnoise {}", env!("CARGO_PKG_VERSION")),
            command,
            seed: config.seed,
            config_sha256: config.sha256(),
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    provenance: Provenance,
    samples: usize,
    exponential: FitOutcome,
    beating: FitOutcome,
    preferred: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    working_point: Option<WorkingPointReport>,
}

#[derive(Serialize)]
struct WorkingPointReport {
    phi_b_phi0: f64,
    f01_hz: f64,
    domega_dphi: f64,
    /// `2·|dω01/dΦb|·Σb` over strong fluctuators, rad/s.
    expected_delta_omega_split: f64,
}

fn fit_both(times: &[f64], p1: &[f64], provenance: Provenance, settings: &FitSettings) -> FitReport {
    let guess = InitialGuess::default();
    let exponential = FitOutcome::from(fit_exponential_ramsey(times, p1, &guess, settings));
    let beating = FitOutcome::from(fit_beating_ramsey(times, p1, &guess, settings));
    let beating_wins = beating
        .result
        .as_ref()
        .is_some_and(|b| b.converged && !b.has_flag(FitFlag::ModelNotPreferred));
    let preferred = match (&exponential.result, beating_wins) {
        (_, true) => "beating",
        (Some(_), false) => "exponential",
        (None, false) => "none",
    };
    FitReport {
        provenance,
        samples: times.len(),
        exponential,
        beating,
        preferred,
        working_point: None,
    }
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

pub fn cmd_ramsey(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rc = config.ramsey_config()?;
    log::info!("ramsey: {} repetitions, mode {:?}", rc.repetitions, rc.mode);
    let trace = decay_factor_mc(&rc)?;
    for f in &trace.failures {
        log::warn!("repetition {} dropped: {}", f.repetition, f.message);
    }
    let p1 = if config.ramsey.readout_shots > 0 {
        let mut rng = SeedTree::new(config.seed).domain(domain::READOUT).stream(0);
        binomial_readout(&trace.p1, config.ramsey.readout_shots, &mut rng)?
    } else {
        trace.p1.clone()
    };

    let mut csv = Csv::new("ramsey", config, &["time_s", "p1", "envelope", "decay_re", "decay_im"]);
    for k in 0..trace.times.len() {
        let d = trace.decay_factor[k];
        csv.row([num(trace.times[k]), num(p1[k]), num(trace.envelope[k]), num(d.re), num(d.im)]);
    }

    let mut report = fit_both(&trace.times, &p1, Provenance::new("ramsey", config), &config.fit_settings());
    let wp = rc.working_point()?;
    report.working_point = Some(WorkingPointReport {
        phi_b_phi0: rc.phi_b,
        f01_hz: wp.omega01 / (2.0 * PI),
        domega_dphi: wp.domega_dphi,
        expected_delta_omega_split: 2.0
            * wp.domega_dphi.abs()
            * rc.strong_rtns.iter().map(|s| s.amplitude()).sum::<f64>(),
    });

    let mut files = OutputSet::new(out)?;
    files.add("ramsey.csv", &csv.finish())?;
    files.add("fit.json", &json(&report))?;
    files.commit()
}

pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let grid = config.sweep_grid()?;
    let mut base = config.ramsey_config()?;
    base.repetitions = config.sweep.repetitions;
    if !config.sweep.include_strong_rtn {
        base.strong_rtns.clear();
    }
    log::info!("sweep: {} frequencies, {} repetitions each", grid.len(), base.repetitions);
    let sweep = frequency_sweep(&grid, &base)?;
    if sweep.rows.is_empty() {
        return Err(CliError::Runtime("no sweep frequency is reachable".into()));
    }
    let times = sweep.times().to_vec();
    let envelopes: Vec<Vec<f64>> = sweep.rows.iter().map(|r| r.trace.envelope.clone()).collect();
    let summary = extract_t2star_sweep(&times, &envelopes, &config.fit_settings())?;

    let mut long = Csv::new("sweep", config, &["f01_hz", "time_s", "envelope"]);
    for row in &sweep.rows {
        let f = num(row.f01_hz);
        for (t, e) in row.trace.times.iter().zip(&row.trace.envelope) {
            long.row([f.as_str(), &num(*t), &num(*e)]);
        }
    }
    let mut t2 = Csv::new("sweep", config, &["f01_hz", "t2star_s", "converged"]);
    for s in &sweep.skipped {
        t2.comment(&format!("skipped f01_hz={}: {}", num(s.f01_hz), s.reason));
    }
    for ((row, fit), t2star) in sweep.rows.iter().zip(&summary.fits).zip(&summary.t2star) {
        t2.row([num(row.f01_hz), opt_num(*t2star), fit.converged.to_string()]);
    }
    t2.row(["mean".to_string(), opt_num(summary.mean), String::new()]);
    t2.row(["max".to_string(), opt_num(summary.max), String::new()]);

    let mut files = OutputSet::new(out)?;
    files.add("sweep.csv", &long.finish())?;
    files.add("t2star.csv", &t2.finish())?;
    files.commit()
}

pub fn cmd_multi_rtn(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let m = &config.multi_rtn;
    let base = RamseyConfig {
        phi_b: m.phi_b_phi0,
        repetitions: m.repetitions,
        strong_rtns: Vec::new(),
        ..config.ramsey_config()?
    };
    base.validate().map_err(|e| CliError::Config(format!("multi_rtn: {e}")))?;
    let seeds: Vec<u64> = (0..m.seeds).map(|k| config.seed.wrapping_add(k)).collect();
    log::info!(
        "multi-rtn: counts {:?}, {} seeds, {} repetitions",
        m.source_counts,
        seeds.len(),
        m.repetitions
    );
    let trials = amplitude_split_study(&base, &m.source_counts, m.total_amplitude_phi0, m.rate_hz, &seeds)?;

    let mut long = Csv::new("multi-rtn", config, &["n_sources", "seed", "time_s", "envelope"]);
    let mut contrast = Csv::new("multi-rtn", config, &["n_sources", "seed", "beating_contrast"]);
    for t in &trials {
        let (n, s) = (t.n_sources.to_string(), t.seed.to_string());
        for (time, e) in t.trace.times.iter().zip(&t.trace.envelope) {
            long.row([n.as_str(), s.as_str(), &num(*time), &num(*e)]);
        }
        contrast.row([n, s, num(t.contrast)]);
    }
    for &n in &m.source_counts {
        let values: Vec<f64> = trials.iter().filter(|t| t.n_sources == n).map(|t| t.contrast).collect();
        contrast.comment(&format!("median n_sources={n}: {}", num(median(&values))));
    }

    let mut files = OutputSet::new(out)?;
    files.add("multi_rtn.csv", &long.finish())?;
    files.add("contrast.csv", &contrast.finish())?;
    files.commit()
}

/// Reads `time_s,p1` columns; `#` lines are comments.
pub fn read_fringe_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ti, pi) = (col("time_s")?, col("p1")?);
    let (mut times, mut p1) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: not a finite number", line + 1)))
        };
        times.push(field(ti)?);
        p1.push(field(pi)?);
    }
    Ok((times, p1))
}

pub fn cmd_fit(config: &RunConfig, input: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let path = match input {
        Some(p) => p.to_path_buf(),
        None if !config.fit.input.is_empty() => PathBuf::from(&config.fit.input),
        None => return Err(CliError::Config("fit needs --input or fit.input".into())),
    };
    let (times, p1) = read_fringe_csv(&path)?;
    log::info!("fit: {} samples from {}", times.len(), path.display());
    let report = fit_both(&times, &p1, Provenance::new("fit", config), &config.fit_settings());
    if report.exponential.result.is_none() && report.beating.result.is_none() {
        let msg = report.exponential.error.clone().unwrap_or_default();
        return Err(CliError::Runtime(format!("both fits failed: {msg}")));
    }
    let mut files = OutputSet::new(out)?;
    files.add("fit.json", &json(&report))?;
    files.commit()
}
