//! Subcommand implementations. Each writes its CSV files, `plotdata.csv`
//! and `manifest.txt` into the output directory.

use std::path::Path;

use mfsync_core::fpf::run_fpf_experiment;
use mfsync_core::learning::{phase_portrait, run_learning_experiment, PolicyParams, Stability};
use mfsync_core::model::{circular_mean, order_parameter_sq, ControlLaw, CostSpec, Simulator};
use mfsync_core::oracles::{compare_with_oracle, ks_grid_filter, KsGridFilter};
use mfsync_core::spectral::{
    critical_kappa, critical_r_closed, critical_r_numeric, default_r_grid, discrete_eigenpath,
    geometric_grid, stability_report, collision_scale,
};
use mfsync_core::fpf::synthesize_observations;

use crate::config::{ControlKind, ExperimentConfig, Subcommand};
use crate::output::{emit_plotdata, CsvSink, Series};
use crate::CliError;

/// One line per run for the terminal.
pub type Summary = String;

pub fn dispatch(cmd: Subcommand, config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    match cmd {
        Subcommand::Simulate => simulate(config, out),
        Subcommand::Spectrum => spectrum(config, out),
        Subcommand::Bifurcation => bifurcation(config, out),
        Subcommand::Learn => learn(config, out),
        Subcommand::Fpf => fpf(config, out),
        Subcommand::OracleCompare => oracle_compare(config, out),
    }
}

fn simulate(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let s = &config.simulate;
    let params = s.model_params();
    let law = match s.control {
        ControlKind::Free => ControlLaw::Free,
        ControlKind::Kuramoto => ControlLaw::Kuramoto { kappa: s.kappa },
        ControlKind::Parameterized => ControlLaw::Parameterized {
            policy: PolicyParams::uniform(s.n, s.amplitude, s.phase),
            penalty: s.penalty,
        },
    };
    let steps = (s.horizon / s.dt).round() as usize;
    let stride = config.run.record_stride;
    let mut sim = Simulator::new(params, law, config.run.seed)?;

    let mut trajectory = if s.trajectory {
        let mut header = vec!["t".to_string()];
        header.extend((1..=s.n).map(|i| format!("theta_{i}")));
        Some(CsvSink::create(&out.join("trajectory.csv"), &header)?)
    } else {
        None
    };
    let mut summary = CsvSink::create(&out.join("summary.csv"), &["t", "gamma_sq", "circular_mean"])?;
    let (mut ts, mut gs) = (Vec::new(), Vec::new());
    let mut io_error = None;
    let mut k = 0usize;
    let mut record = |phases: &[f64], t: f64| -> std::io::Result<()> {
        let g = order_parameter_sq(phases);
        let mean = circular_mean(phases).unwrap_or(f64::NAN);
        if let Some(tr) = trajectory.as_mut() {
            let mut row = Vec::with_capacity(phases.len() + 1);
            row.push(t);
            row.extend_from_slice(phases);
            tr.row(&row)?;
        }
        summary.row(&[t, g, mean])?;
        ts.push(t);
        gs.push(g);
        Ok(())
    };
    sim.run(steps, stride, |ens, _| {
        let t = (k * stride) as f64 * s.dt;
        k += 1;
        if io_error.is_none() {
            io_error = record(ens.phases(), t).err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    if steps % stride == 0 {
        record(sim.ensemble().phases(), steps as f64 * s.dt)?;
    }
    drop(record);
    if let Some(tr) = trajectory {
        tr.finish()?;
    }
    summary.finish()?;
    let mean_g = gs.iter().sum::<f64>() / gs.len() as f64;
    emit_plotdata(&out.join("plotdata.csv"), &[Series::new("gamma_sq", ts, gs)])?;
    Ok(format!("time-averaged gamma_sq = {mean_g:.6}"))
}

fn spectrum(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let sp = &config.spectrum;
    let params = sp.model_params();
    let cost = CostSpec {
        fourier: sp.cost.clone(),
    };
    let grid = match (sp.r_max, sp.r_min) {
        (None, None) => default_r_grid(sp.k, &params, &cost)?,
        (hi, lo) => {
            let scale = collision_scale(sp.k, &params, &cost)?;
            let hi = hi.unwrap_or(10.0 * scale);
            let lo = lo.unwrap_or(0.25 * scale);
            geometric_grid(hi, lo)
        }
    };
    let paths = discrete_eigenpath(sp.k, &grid, &params, &cost)?;
    let mut csv = CsvSink::create(
        &out.join("eigenpath.csv"),
        &["R", "re_lambda_1", "im_lambda_1", "re_lambda_2", "im_lambda_2"],
    )?;
    let mut series: Vec<Series> = ["re_lambda_1", "im_lambda_1", "re_lambda_2", "im_lambda_2"]
        .iter()
        .map(|n| Series::new(*n, Vec::new(), Vec::new()))
        .collect();
    for (a, b) in paths[0].samples.iter().zip(&paths[1].samples) {
        let row = [a.r, a.lambda.re, a.lambda.im, b.lambda.re, b.lambda.im];
        csv.row(&row)?;
        for (s, &v) in series.iter_mut().zip(&row[1..]) {
            s.x.push(a.r);
            s.y.push(v);
        }
    }
    csv.finish()?;
    emit_plotdata(&out.join("plotdata.csv"), &series)?;
    let mut line = match paths[0].critical_r {
        Some(rc) => format!("pair meets the imaginary axis at R = {rc:.6}"),
        None => "no collision on the grid".to_string(),
    };
    if let Some(r) = sp.penalty {
        let report = stability_report(r, &params, &cost)?;
        let mut csv = CsvSink::create(&out.join("stability.csv"), &["R", "R_c", "max_re_lambda"])?;
        csv.row(&[r, report.critical_r, report.max_real_part.unwrap_or(f64::NAN)])?;
        csv.finish()?;
        line.push_str(&format!("; R = {r}: {}", report.verdict.as_str()));
    }
    Ok(line)
}

fn bifurcation(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let b = &config.bifurcation;
    let sigma = b.sigma_sq.sqrt();
    let cost = CostSpec {
        fourier: b.cost.clone(),
    };
    let mut csv = CsvSink::create(
        &out.join("bifurcation.csv"),
        &["gamma", "R_c_closed", "R_c_numeric", "kappa_c"],
    )?;
    let mut closed = Series::new("R_c_closed", Vec::new(), Vec::new());
    let mut numeric = Series::new("R_c_numeric", Vec::new(), Vec::new());
    for &g in &b.gammas {
        let rc = critical_r_closed(g, sigma);
        let rn = critical_r_numeric(g, sigma, b.k, &cost)?;
        csv.row(&[g, rc, rn, critical_kappa(g, sigma)])?;
        closed.x.push(g);
        closed.y.push(rc);
        numeric.x.push(g);
        numeric.y.push(rn);
    }
    csv.finish()?;
    emit_plotdata(&out.join("plotdata.csv"), &[closed, numeric])?;
    Ok(format!("{} values of gamma", b.gammas.len()))
}

fn stability_name(s: Stability) -> &'static str {
    match s {
        Stability::Attracting => "attracting",
        Stability::Unstable => "unstable",
        Stability::Marginal => "marginal",
    }
}

fn learn(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let l = &config.learn;
    let lc = l.learning_config(config.run.seed, config.run.record_stride);
    let run = run_learning_experiment(&lc)?;
    let mut csv = CsvSink::create(&out.join("learning.csv"), &["t", "A_1", "zeta_1", "gamma_sq"])?;
    for i in 0..run.t.len() {
        csv.row(&[run.t[i], run.amplitude[i], run.phase[i], run.gamma_sq[i]])?;
    }
    csv.finish()?;

    let mut eq = CsvSink::create(
        &out.join("equilibria.csv"),
        &["label", "A", "zeta", "re_mu_1", "im_mu_1", "re_mu_2", "im_mu_2", "stability"],
    )?;
    for e in &run.equilibria {
        let mut row: Vec<String> = [
            e.label as f64,
            e.amplitude,
            e.phase,
            e.eigenvalues[0].re,
            e.eigenvalues[0].im,
            e.eigenvalues[1].re,
            e.eigenvalues[1].im,
        ]
        .iter()
        .map(|&v| crate::output::fmt_num(v))
        .collect();
        row.push(stability_name(e.stability).to_string());
        eq.raw_row(&row)?;
    }
    eq.finish()?;

    if l.portrait {
        let params = lc.model_params();
        let points = phase_portrait(
            l.portrait_omega,
            &params,
            (l.portrait_amplitude[0], l.portrait_amplitude[1]),
            l.portrait_points[0],
            l.portrait_points[1],
        );
        let mut csv = CsvSink::create(&out.join("portrait.csv"), &["A", "zeta", "dA_dt", "dzeta_dt"])?;
        for p in &points {
            csv.row(&[p.amplitude, p.phase, p.d_amplitude, p.d_phase])?;
        }
        csv.finish()?;
    }

    emit_plotdata(
        &out.join("plotdata.csv"),
        &[
            Series::new("A_1", run.t.clone(), run.amplitude.clone()),
            Series::new("zeta_1", run.t.clone(), run.phase.clone()),
            Series::new("gamma_sq", run.t.clone(), run.gamma_sq.clone()),
        ],
    )?;
    Ok(match run.settling_time {
        Some(t) => format!("entered the 5% neighbourhood for good at t = {t:.2}"),
        None => "did not settle in the 5% neighbourhood".to_string(),
    })
}

fn fpf(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let f = &config.fpf;
    let exp = f.experiment(config.run.seed);
    let run = run_fpf_experiment(&exp)?;
    let stride = config.run.record_stride;
    let mut csv = CsvSink::create(
        &out.join("fpf.csv"),
        &["t", "theta_true", "theta_hat", "spread", "kappa1", "kappa2", "dZ"],
    )?;
    let mut truth = Series::new("theta_true", Vec::new(), Vec::new());
    let mut hat = Series::new("theta_hat", Vec::new(), Vec::new());
    for i in (0..run.t.len()).step_by(stride) {
        csv.row(&[
            run.t[i],
            run.theta_true[i],
            run.theta_hat[i],
            run.spread[i],
            run.kappa1[i],
            run.kappa2[i],
            run.dz[i],
        ])?;
        truth.x.push(run.t[i]);
        truth.y.push(run.theta_true[i]);
        hat.x.push(run.t[i]);
        hat.y.push(run.theta_hat[i]);
    }
    csv.finish()?;

    let width = mfsync_core::TAU / f.bins as f64;
    let mut hist = CsvSink::create(&out.join("histogram.csv"), &["t", "theta", "p"])?;
    for snap in &run.snapshots {
        for (j, &p) in snap.density.iter().enumerate() {
            hist.row(&[snap.t, (j as f64 + 0.5) * width, p])?;
        }
    }
    hist.finish()?;
    emit_plotdata(&out.join("plotdata.csv"), &[truth, hat])?;
    Ok(format!("post-transient circular RMSE = {:.4} rad", run.rmse))
}

fn oracle_compare(config: &ExperimentConfig, out: &Path) -> Result<Summary, CliError> {
    let o = &config.oracle_compare;
    let cfg = o.compare_config(config.run.seed);
    // Fail fast on the grid before running the particle filter.
    KsGridFilter::new(cfg.grid_points, &cfg.filter)?;
    let cmp = compare_with_oracle(&cfg)?;
    let mut csv = CsvSink::create(&out.join("oracle_compare.csv"), &["t", "tv_distance"])?;
    for (&t, &d) in cmp.t.iter().zip(&cmp.tv) {
        csv.row(&[t, d])?;
    }
    csv.finish()?;

    // Final oracle density in the original coordinate.
    let path = synthesize_observations(&cfg.filter, cfg.horizon, cfg.seed)?;
    let steps = path.steps();
    let snaps = ks_grid_filter(&path.increments, &cfg.filter, cfg.grid_points, steps.max(1))?;
    let (_, density) = snaps.last().expect("initial density is always recorded");
    let mut rows: Vec<(f64, f64)> = (0..density.len())
        .map(|i| (mfsync_core::model::wrap_phase(density.theta(i)).unwrap_or(0.0), density.values[i]))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut csv = CsvSink::create(&out.join("density.csv"), &["theta", "p"])?;
    for (t, p) in rows {
        csv.row(&[t, p])?;
    }
    csv.finish()?;
    emit_plotdata(&out.join("plotdata.csv"), &[Series::new("tv_distance", cmp.t, cmp.tv)])?;
    Ok(format!("time-averaged TV distance = {:.4}", cmp.mean_tv))
}
