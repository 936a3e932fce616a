//! Subcommand implementations and the argv-to-exit-code dispatcher.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use mavbe::{
    compensate, dead_reckon, fit_ellipsoid, generate, heading, heading_rmse_deg,
    observability_gramian, preset_sim1, preset_sim2, roll_pitch, run_filter, sphere_coverage_metric,
    Attitude, CalibrationResult, FilterRun, Mat3, NavTrack, ScenarioSpec, SoftIronParams, Vec3,
};

use crate::config::RunConfig;
use crate::logfile::{self, ParsedLog, TruthRow};
use crate::record::{self, CalibrationRecord};
use crate::CliError;

/// Samples whose gravity projection leaves roll unobservable (gravity within
/// ~3 degrees of the x axis) are excluded from heading evaluation.
const GIMBAL_MASK_FRACTION: f64 = 0.05;

#[derive(Parser)]
#[command(
    name = "mavbe",
    version,
    about = "Online magnetometer/rate-sensor bias calibration, batch baseline, and heading/dead-reckoning evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: IMU log, ground truth, and a matching
    /// run configuration
    Simulate {
        /// Scenario preset: sim1 (full excursions) or sim2 (modest roll/pitch)
        #[arg(long)]
        preset: String,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the preset RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulated duration (s)
        #[arg(long)]
        duration: Option<f64>,
        /// Override the roll/pitch/heading sinusoid amplitudes (degrees)
        #[arg(long, num_args = 3, value_names = ["ROLL", "PITCH", "HEADING"])]
        amplitudes: Option<Vec<f64>>,
        /// Constant surge speed (m/s); adds DVL and GPS-truth columns
        #[arg(long)]
        dvl_speed: Option<f64>,
    },
    /// Run the online bias estimator over a log
    Calibrate {
        #[arg(long)]
        log: PathBuf,
        /// Run configuration (JSON); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write the state trace at full tick rate instead of 1 Hz
        #[arg(long)]
        trace_full: bool,
    },
    /// Magnetometer-only batch ellipsoid fit (comparison baseline)
    BatchFit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Per-sample attitude from a calibrated log, with heading RMSE when
    /// ground truth is available
    Heading {
        #[arg(long)]
        log: PathBuf,
        /// Calibration record from `calibrate` or `batch-fit`
        #[arg(long, required_unless_present = "uncalibrated", conflicts_with = "uncalibrated")]
        calib: Option<PathBuf>,
        /// Evaluate the raw magnetometer instead of a calibration
        #[arg(long)]
        uncalibrated: bool,
        /// Ground-truth CSV; defaults to truth.csv next to the log
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Only evaluate samples at or after this time (s); defaults to the
        /// calibration's convergence time
        #[arg(long)]
        since: Option<f64>,
        /// Magnetic declination override (rad)
        #[arg(long)]
        declination: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Doppler dead reckoning from DVL columns, with track error against GPS
    /// columns when present
    Navtrack {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, required_unless_present = "uncalibrated", conflicts_with = "uncalibrated")]
        calib: Option<PathBuf>,
        #[arg(long)]
        uncalibrated: bool,
        #[arg(long)]
        declination: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Observability-Gramian rank along the filter's own trajectory
    Observability {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Parses argv and runs the selected command, mapping every failure onto the
/// exit-code contract (0 success, 1 usage, 2 data, 3 numerics).
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let is_usage = e.use_stderr();
            let _ = e.print();
            return if is_usage { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            preset,
            out,
            seed,
            duration,
            amplitudes,
            dvl_speed,
        } => simulate(&preset, &out, seed, duration, amplitudes, dvl_speed),
        Command::Calibrate {
            log,
            config,
            out,
            trace_full,
        } => calibrate(&log, config.as_deref(), &out, trace_full),
        Command::BatchFit { log, config, out } => batch_fit(&log, config.as_deref(), &out),
        Command::Heading {
            log,
            calib,
            uncalibrated,
            truth,
            since,
            declination,
            out,
        } => heading_cmd(
            &log,
            calib.as_deref(),
            uncalibrated,
            truth.as_deref(),
            since,
            declination,
            &out,
        ),
        Command::Navtrack {
            log,
            calib,
            uncalibrated,
            declination,
            out,
        } => navtrack(&log, calib.as_deref(), uncalibrated, declination, &out),
        Command::Observability { log, config, out } => {
            observability(&log, config.as_deref(), &out)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::from_path(p),
        None => Ok(RunConfig::default()),
    }
}

fn preset_by_name(name: &str) -> Result<ScenarioSpec<f64>, CliError> {
    match name {
        "sim1" => Ok(preset_sim1()),
        "sim2" => Ok(preset_sim2()),
        other => Err(CliError::Usage(format!(
            "unknown preset {other:?} (expected sim1 or sim2)"
        ))),
    }
}

fn simulate(
    preset: &str,
    out: &Path,
    seed: Option<u64>,
    duration: Option<f64>,
    amplitudes: Option<Vec<f64>>,
    dvl_speed: Option<f64>,
) -> Result<(), CliError> {
    let mut spec = preset_by_name(preset)?;
    if let Some(seed) = seed {
        spec.rng_seed = seed;
    }
    if let Some(duration) = duration {
        spec.duration = duration;
    }
    if let Some(a) = amplitudes {
        spec.amplitudes_deg = [a[0], a[1], a[2]];
    }
    if let Some(v) = dvl_speed {
        spec.body_velocity = Some(Vec3::new(v, 0.0, 0.0));
    }

    std::fs::create_dir_all(out)?;
    let sim = generate(&spec)?;

    let dvl_rows: Option<Vec<Option<Vec3>>> =
        sim.dvl.as_ref().map(|d| d.iter().map(|v| Some(*v)).collect());
    let gps_rows: Option<Vec<Option<[f64; 2]>>> = sim
        .track
        .as_ref()
        .map(|t| t.positions.iter().map(|p| Some([p.x, p.y])).collect());
    logfile::write_log(
        &out.join("log.csv"),
        &sim.samples,
        dvl_rows.as_deref(),
        gps_rows.as_deref(),
    )?;

    let truth_rows: Vec<TruthRow> = sim
        .truth
        .iter()
        .map(|g| TruthRow {
            t: g.t,
            rotation: g.rotation,
            w_t: g.w_t,
            m_t: g.m_t,
            attitude: g.attitude,
        })
        .collect();
    logfile::write_truth(&out.join("truth.csv"), &truth_rows)?;

    // A matching run configuration so downstream commands agree on the
    // field magnitude and declination.
    let mut cfg = RunConfig {
        field_mag_sq: spec.field_mag_sq(),
        declination_rad: spec.implied_declination(),
        rng_seed: spec.rng_seed,
        preset: Some(preset.to_string()),
        ..RunConfig::default()
    };
    cfg.log = Some(out.join("log.csv").display().to_string());
    cfg.out = Some(out.display().to_string());
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Data(e.to_string()))? + "\n",
    )?;

    println!(
        "simulate: preset {preset}, {} samples over {} s, seed {} -> {}",
        sim.samples.len(),
        spec.duration,
        spec.rng_seed,
        out.display()
    );
    Ok(())
}

fn resolved_config(
    config: Option<&Path>,
    log: &Path,
    out: &Path,
) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(config)?;
    cfg.log = Some(log.display().to_string());
    cfg.out = Some(out.display().to_string());
    Ok(cfg)
}

fn filter_run(log: &Path, cfg: &RunConfig) -> Result<(FilterRun<f64>, ParsedLog), CliError> {
    let parsed = logfile::parse_log(log)?;
    let filter_cfg = cfg.to_filter_config()?;
    let run = run_filter(&parsed.samples, &filter_cfg)?;
    Ok((run, parsed))
}

const TRACE_HEADER: &str = "t,mt_x,mt_y,mt_z,mb_x,mb_y,mb_z,tp_a,tp_b,tp_c,tp_d,tp_e,tp_f,\
                            wb_x,wb_y,wb_z,var_mt_x,var_mt_y,var_mt_z,var_mb_x,var_mb_y,var_mb_z,\
                            var_tp_a,var_tp_b,var_tp_c,var_tp_d,var_tp_e,var_tp_f,var_wb_x,var_wb_y,var_wb_z";

fn write_trace(path: &Path, run: &FilterRun<f64>, tau: f64, full: bool) -> Result<(), CliError> {
    let stride = if full {
        1
    } else {
        ((1.0 / tau).round() as usize).max(1)
    };
    let mut text = String::from(TRACE_HEADER);
    text.push('\n');
    let last = run.trace.len() - 1;
    for (i, p) in run.trace.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        write!(text, "{}", p.t).expect("string write");
        for v in p.state.as_vector().iter() {
            write!(text, ",{v}").expect("string write");
        }
        for v in p.sigma_diag.iter() {
            write!(text, ",{v}").expect("string write");
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn calibrate(
    log: &Path,
    config: Option<&Path>,
    out: &Path,
    trace_full: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let cfg = resolved_config(config, log, out)?;
    let (run, _) = filter_run(log, &cfg)?;

    let record = CalibrationRecord {
        method: "mavbe".into(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: record::sha256_hex(log)?,
        m_b: run.result.m_b.into(),
        t_p: run.result.t_p.as_vector().into(),
        w_b: Some(run.result.w_b.into()),
        converged: run.result.converged,
        convergence_time_s: run.result.convergence_time,
        soft_iron_positive_definite: run.result.soft_iron_pd,
        sigma_diag: Some(run.result.sigma.diagonal().iter().copied().collect()),
        ticks: Some(run.ticks),
        skipped_updates: Some(run.skipped_updates),
        valid: None,
        condition_number: None,
        null_gap: None,
        sphere_coverage: None,
        config: cfg.clone(),
    };
    record::write_record(&out.join("calibration.json"), &record)?;
    write_trace(&out.join("trace.csv"), &run, cfg.tau, trace_full)?;

    println!(
        "calibrate: {} ticks, converged={} ({}), m_b=[{:.4} {:.4} {:.4}] G, w_b=[{:.5} {:.5} {:.5}] rad/s",
        run.ticks,
        run.result.converged,
        run.result
            .convergence_time
            .map(|t| format!("{t:.1} s"))
            .unwrap_or_else(|| "n/a".into()),
        record.m_b[0],
        record.m_b[1],
        record.m_b[2],
        record.w_b.unwrap()[0],
        record.w_b.unwrap()[1],
        record.w_b.unwrap()[2],
    );
    Ok(())
}

fn batch_fit(log: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let cfg = resolved_config(config, log, out)?;
    let parsed = logfile::parse_log(log)?;
    let mags: Vec<Vec3> = parsed.samples.iter().map(|s| s.mag).collect();
    let coverage = sphere_coverage_metric(&mags)?;
    let fit = fit_ellipsoid(&mags, cfg.field_mag_sq)?;

    if !fit.valid {
        eprintln!(
            "warning: batch fit is not usable (condition {:.3e}, null gap {:.2}); \
             sphere coverage {:.2} — reporting the failure instead of parameters",
            fit.condition_number, fit.null_gap, coverage
        );
    }
    let t_p = SoftIronParams::from_matrix(&fit.t_hat);
    let record = CalibrationRecord {
        method: "ellipsoid-fit".into(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: record::sha256_hex(log)?,
        m_b: fit.m_b_hat.into(),
        t_p: t_p.as_vector().into(),
        w_b: None, // magnetometer-only: no rate-bias estimate
        converged: fit.valid,
        convergence_time_s: None,
        soft_iron_positive_definite: fit.valid,
        sigma_diag: None,
        ticks: None,
        skipped_updates: None,
        valid: Some(fit.valid),
        condition_number: Some(fit.condition_number),
        null_gap: Some(fit.null_gap),
        sphere_coverage: Some(coverage),
        config: cfg,
    };
    record::write_record(&out.join("batchfit.json"), &record)?;
    println!(
        "batch-fit: valid={}, m_b=[{:.4} {:.4} {:.4}] G, coverage {:.2}, condition {:.3e}",
        fit.valid, record.m_b[0], record.m_b[1], record.m_b[2], coverage, fit.condition_number
    );
    Ok(())
}

fn load_calibration(
    calib: Option<&Path>,
    uncalibrated: bool,
) -> Result<(CalibrationResult<f64>, Option<CalibrationRecord>), CliError> {
    if uncalibrated {
        return Ok((CalibrationResult::identity(), None));
    }
    let path = calib.expect("clap enforces calib unless --uncalibrated");
    let record = record::read_record(path)?;
    Ok((record.calibration(), Some(record)))
}

fn default_truth_path(log: &Path) -> Option<PathBuf> {
    let sibling = log.with_file_name("truth.csv");
    sibling.exists().then_some(sibling)
}

#[derive(Serialize)]
struct HeadingSummary {
    samples: usize,
    masked: usize,
    since_s: f64,
    declination_rad: f64,
    rmse_deg: Option<f64>,
    truth: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn heading_cmd(
    log: &Path,
    calib: Option<&Path>,
    uncalibrated: bool,
    truth: Option<&Path>,
    since: Option<f64>,
    declination: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let parsed = logfile::parse_log(log)?;
    let (calibration, record) = load_calibration(calib, uncalibrated)?;
    let declination = declination
        .or_else(|| record.as_ref().map(|r| r.config.declination_rad))
        .unwrap_or(0.0);
    let since = since
        .or_else(|| record.as_ref().and_then(|r| r.convergence_time_s))
        .unwrap_or(0.0);
    let since = parsed.samples[0].t + since;

    let truth_path = truth.map(Path::to_path_buf).or_else(|| default_truth_path(log));
    let truth_rows = truth_path
        .as_deref()
        .map(logfile::parse_truth)
        .transpose()?;

    let mut text =
        String::from("t,roll,pitch,heading,masked\n");
    let mut est = Vec::new();
    let mut truth_headings = Vec::new();
    let mut masked = 0usize;
    let mut evaluated = 0usize;
    for (i, s) in parsed.samples.iter().enumerate() {
        let (roll, pitch) = roll_pitch(&s.accel)?;
        let gimbal_masked = s.accel.y.hypot(s.accel.z) < GIMBAL_MASK_FRACTION * s.accel.norm();
        let heading_val = if gimbal_masked {
            None
        } else {
            let (m_hat, _) = compensate(&s.mag, &s.gyro, &calibration)?;
            Some(heading(&m_hat, roll, pitch, declination)?)
        };
        match heading_val {
            Some(h) => {
                writeln!(text, "{},{roll},{pitch},{h},0", s.t).expect("string write")
            }
            None => writeln!(text, "{},{roll},{pitch},,1", s.t).expect("string write"),
        }
        if s.t < since {
            continue;
        }
        evaluated += 1;
        let Some(h) = heading_val else {
            masked += 1;
            continue;
        };
        if let Some(rows) = &truth_rows {
            if let Some(truth_row) = rows.get(i) {
                est.push(h);
                truth_headings.push(truth_row.attitude.heading);
            }
        }
    }
    std::fs::write(out.join("attitude.csv"), text)?;

    let rmse = if est.is_empty() {
        None
    } else {
        Some(heading_rmse_deg(&est, &truth_headings)?)
    };
    let summary = HeadingSummary {
        samples: evaluated,
        masked,
        since_s: since - parsed.samples[0].t,
        declination_rad: declination,
        rmse_deg: rmse,
        truth: truth_path.map(|p| p.display().to_string()),
    };
    std::fs::write(
        out.join("heading_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.to_string()))? + "\n",
    )?;
    match rmse {
        Some(r) => println!(
            "heading: RMSE {:.3} deg over {} samples ({} masked) since t0+{:.1} s",
            r, summary.samples, summary.masked, summary.since_s
        ),
        None => println!(
            "heading: {} samples ({} masked); no ground truth, RMSE not computed",
            summary.samples, summary.masked
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct NavtrackSummary {
    rows: usize,
    terminal_error_m: Option<f64>,
    max_error_m: Option<f64>,
}

fn navtrack(
    log: &Path,
    calib: Option<&Path>,
    uncalibrated: bool,
    declination: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let parsed = logfile::parse_log(log)?;
    let Some(dvl) = parsed.dvl.as_ref() else {
        return Err(CliError::Data("log carries no DVL columns".into()));
    };
    let (calibration, record) = load_calibration(calib, uncalibrated)?;
    let declination = declination
        .or_else(|| record.as_ref().map(|r| r.config.declination_rad))
        .unwrap_or(0.0);

    let mut times = Vec::new();
    let mut velocities = Vec::new();
    let mut attitudes = Vec::new();
    for (s, v) in parsed.samples.iter().zip(dvl) {
        let Some(v) = v else { continue };
        let (roll, pitch) = roll_pitch(&s.accel)?;
        let (m_hat, _) = compensate(&s.mag, &s.gyro, &calibration)?;
        let h = heading(&m_hat, roll, pitch, declination)?;
        times.push(s.t);
        velocities.push(*v);
        attitudes.push(Attitude::new(roll, pitch, h));
    }
    if times.is_empty() {
        return Err(CliError::Data("no DVL rows in the log".into()));
    }

    let gps_track = parsed.gps.as_ref().map(|gps| {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (s, g) in parsed.samples.iter().zip(gps) {
            if let Some([x, y]) = g {
                t.push(s.t);
                p.push(Vec3::new(*x, *y, 0.0));
            }
        }
        NavTrack {
            times: t,
            positions: p,
        }
    });
    let p0 = gps_track
        .as_ref()
        .and_then(|g| g.positions.first().copied())
        .unwrap_or_else(Vec3::zeros);

    let track = dead_reckon(&velocities, &attitudes, &Mat3::identity(), &p0, &times)?;

    let mut text = String::from("t,x,y,z\n");
    for (t, p) in track.times.iter().zip(&track.positions) {
        writeln!(text, "{t},{},{},{}", p.x, p.y, p.z).expect("string write");
    }
    std::fs::write(out.join("track.csv"), text)?;

    let mut summary = NavtrackSummary {
        rows: track.times.len(),
        terminal_error_m: None,
        max_error_m: None,
    };
    if let Some(gps_track) = &gps_track {
        if gps_track.times.len() >= 2 {
            let errors = mavbe::track_error(&track, gps_track)?;
            let mut text = String::from("t,error_m\n");
            for (t, e) in &errors {
                writeln!(text, "{t},{e}").expect("string write");
            }
            std::fs::write(out.join("nav_error.csv"), text)?;
            summary.terminal_error_m = errors.last().map(|(_, e)| *e);
            summary.max_error_m = errors
                .iter()
                .map(|(_, e)| *e)
                .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
        }
    }
    std::fs::write(
        out.join("navtrack_summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.to_string()))? + "\n",
    )?;
    match summary.terminal_error_m {
        Some(e) => println!(
            "navtrack: {} rows, terminal XY error {:.2} m (max {:.2} m)",
            summary.rows,
            e,
            summary.max_error_m.unwrap_or(e)
        ),
        None => println!("navtrack: {} rows, no GPS columns for error", summary.rows),
    }
    Ok(())
}

#[derive(Serialize)]
struct ObservabilitySummary {
    rank: usize,
    singular_values: Vec<f64>,
}

fn observability(log: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let cfg = resolved_config(config, log, out)?;
    let (run, _) = filter_run(log, &cfg)?;

    // Linearize along the filter's own trajectory: the rate that advanced
    // each step, the state it was advanced from.
    let n = run.trace.len();
    let states: Vec<_> = run.trace.iter().map(|p| p.state).collect();
    let rates: Vec<Vec3> = (0..n)
        .map(|k| run.trace[(k + 1).min(n - 1)].held_rate)
        .collect();
    let gramian = observability_gramian(&rates, &states, cfg.tau)?;

    let summary = ObservabilitySummary {
        rank: gramian.rank,
        singular_values: gramian.singular_values.iter().copied().collect(),
    };
    std::fs::write(
        out.join("observability.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.to_string()))? + "\n",
    )?;
    println!(
        "observability: rank {}/15, sigma_max {:.3e}, sigma_min {:.3e}",
        summary.rank,
        summary.singular_values[0],
        summary.singular_values[14]
    );
    Ok(())
}
