use mavbe::*;
use std::time::Instant;

fn heading_rmse(out: &SimOutput<f64>, spec: &ScenarioSpec, cal: &CalibrationResult, since: f64) -> (f64, usize) {
    let declination = spec.implied_declination();
    let mut est = Vec::new();
    let mut truth = Vec::new();
    let mut masked = 0;
    for (s, g) in out.samples.iter().zip(&out.truth) {
        if s.t < since { continue; }
        if s.accel.y.hypot(s.accel.z) < 0.05 * s.accel.norm() { masked += 1; continue; }
        let (roll, pitch) = roll_pitch(&s.accel).unwrap();
        let (m_hat, _) = compensate(&s.mag, &s.gyro, cal).unwrap();
        est.push(heading(&m_hat, roll, pitch, declination).unwrap());
        truth.push(g.attitude.heading);
    }
    (heading_rmse_deg(&est, &truth).unwrap(), masked)
}

fn main() {
    let t0 = Instant::now();
    let spec1: ScenarioSpec = preset_sim1();
    let spec2: ScenarioSpec = preset_sim2();
    let out1 = generate(&spec1).unwrap();
    let out2 = generate(&spec2).unwrap();
    let run1 = run_filter(&out1.samples, &FilterConfig::new(spec1.field_mag_sq())).unwrap();
    let run2 = run_filter(&out2.samples, &FilterConfig::new(spec2.field_mag_sq())).unwrap();
    println!("sim1+sim2 generate+filter: {:.2} s", t0.elapsed().as_secs_f64());

    for (name, spec, out, run) in [("sim1", &spec1, &out1, &run1), ("sim2", &spec2, &out2, &run2)] {
        let mb = (run.result.m_b - spec.m_b).amax();
        let tp = (run.result.t_p.as_vector() - spec.t_p.as_vector()).amax();
        let wb = (run.result.w_b - spec.w_b).amax();
        let conv = run.result.convergence_time.unwrap();
        let (rmse_cal, masked) = heading_rmse(out, spec, &run.result, conv);
        let (rmse_unc, _) = heading_rmse(out, spec, &CalibrationResult::identity(), conv);
        println!("{name}: conv {conv:.1} s | mb {mb:.5} tp {tp:.5} wb {wb:.6} | RMSE cal {rmse_cal:.3} unc {rmse_unc:.2} (masked {masked})");
    }
    let r = run2.result.convergence_time.unwrap() / run1.result.convergence_time.unwrap();
    println!("ratio {r:.2}");

    // batch contrast
    let mags1: Vec<Vec3> = out1.samples.iter().map(|s| s.mag).collect();
    let fit1 = fit_ellipsoid(&mags1, spec1.field_mag_sq()).unwrap();
    let mut low: ScenarioSpec = preset_sim1();
    low.amplitudes_deg = [5.0, 5.0, 180.0];
    let outl = generate(&low).unwrap();
    let magsl: Vec<Vec3> = outl.samples.iter().map(|s| s.mag).collect();
    let fitl = fit_ellipsoid(&magsl, low.field_mag_sq()).unwrap();
    println!(
        "batch sim1: valid {} mb_err {:.4} | low-excitation valid {} (cond {:.2e} gap {:.2})",
        fit1.valid,
        (fit1.m_b_hat - spec1.m_b).amax(),
        fitl.valid,
        fitl.condition_number,
        fitl.null_gap
    );
}
