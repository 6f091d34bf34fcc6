use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use magspec::correction::{
    bohr_sommerfeld_eigenvalues, census_count, correction_sweep, correction_term, critical_action, fd_eigencount,
    fd_eigenvalues, fit_closed_form, g_function, holder_half_quotient, AuxOperator1D, CorrectionParams,
    CorrectionSample, FitOptions, SpectralError, ACTION_ROOT_TOL,
};
use magspec::dynamics::{
    find_kstar, guiding_center_error_scan, integrate_trajectory, model_system, simulate_model, EffectiveModel,
    MagneticSystem, ModelRunOptions, PhasePoint, ScanHorizon, TrajectorySample, QUADRATURE_REL_TOL,
};
use magspec::field::{
    load_field, magnetic_line, parse_field, rank_stratum, ConstantScalar, LineOptions, LoadedField, ScalarField,
    DEFAULT_RANK_TOL,
};
use magspec::quadrature::pairwise_sum;
use magspec::weyl::{landau_density_2d, local_weyl_params, magnetic_weyl_density, WeylParams, MAX_LISTED_JUMPS};

use crate::grid::Momentum;
use crate::report::{num, to_value, Report, Table};
use crate::*;

/// A model trajectory is "periodic" when the mean x₂ increment per x₁-period,
/// measured in the `μ = 1` frame where the tilt α is defined, is below this.
pub const PERIODIC_DRIFT: f64 = 1e-3;

/// Ramp field `F₁₂ = 1 + 0.3 x₁` under the tilted potential `V = 1 − x₁/2`.
const DEFAULT_DRIFT_FIELD: &str = r#"{"potential": ["0", "x1 + 0.15*x1^2"], "scalar": "1 - 0.5*x1"}"#;

pub fn execute(command: &Command, tol: Option<f64>) -> Result<Report, CliError> {
    match command {
        Command::Trajectory(a) => trajectory(a, tol),
        Command::DriftScan(a) => drift_scan(a, tol),
        Command::Kstar(a) => kstar(a),
        Command::Period(a) => period(a),
        Command::Lines(a) => lines(a, tol),
        Command::Weyl(a) => weyl(a),
        Command::Landau(a) => landau(a),
        Command::Eigencount(a) => eigencount(a),
        Command::Correction(a) => correction(a),
        Command::Gfunc(a) => gfunc(a),
        Command::FitCorrection(a) => fit_correction(a),
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn load_source(src: &FieldArgs, default: Option<&str>) -> Result<LoadedField, CliError> {
    match (&src.field, &src.kind, default) {
        (Some(path), _, _) => Ok(load_field(path)?),
        (None, Some(kind), _) => Ok(parse_field(&json!({ "kind": kind }).to_string())?),
        (None, None, Some(doc)) => Ok(parse_field(doc)?),
        (None, None, None) => usage("a field is required: pass --field <file.json> or --kind <name>"),
    }
}

fn point(name: &str, grid: &Grid, dim: usize) -> Result<Vec<f64>, CliError> {
    if grid.values().len() != dim {
        return usage(format!("--{name} needs {dim} components, got {}", grid.values().len()));
    }
    Ok(grid.values().to_vec())
}

fn trajectory_table(traj: &TrajectorySample) -> Table {
    let d = traj.points.first().map_or(0, |p| p.x.len());
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=d).map(|j| format!("x{j}")));
    cols.extend((1..=d).map(|j| format!("xi{j}")));
    cols.push("energy".into());
    let mut table = Table::new(cols);
    for ((t, z), e) in traj.t.iter().zip(&traj.points).zip(&traj.energy) {
        let mut row = vec![num(*t)];
        row.extend(z.x.iter().chain(&z.xi).map(|v| num(*v)));
        row.push(num(*e));
        table.push(row);
    }
    table
}

fn energy_certificate(r: &mut Report, traj: &TrajectorySample) {
    r.set(
        "energy",
        json!({
            "max_drift": num(traj.max_energy_drift),
            "tolerance": num(traj.energy_tol),
            "ode_tol": num(traj.ode_tol),
        }),
    )
    .set("truncated", traj.truncated);
}

fn trajectory(a: &TrajectoryArgs, tol: Option<f64>) -> Result<Report, CliError> {
    let tol = tol.unwrap_or(1e-10);
    if let Some(dt) = a.dt {
        if !(dt > 0.0) {
            return usage("--dt must be positive");
        }
    }
    if let Some(spec) = a.model {
        let nu = spec.nu;
        let (k, k_tol) = match a.k {
            Momentum::Value(k) => (k, 0.0),
            Momentum::KStar => {
                let ks = find_kstar(nu, 1.0)?;
                (ks.kstar, ks.tol)
            }
        };
        let run = simulate_model(&ModelRunOptions {
            nu,
            mu: a.mu,
            k,
            t_end: a.t_end,
            alpha: a.alpha,
            tol,
        })?;
        let traj = match a.dt {
            Some(dt) => run.trajectory.resample(&model_system(nu, a.mu, a.alpha)?, dt),
            None => run.trajectory.clone(),
        };
        let frame_dx2 = run.mean_dx2 * a.mu.powf(1.0 / nu as f64);
        let mut r = Report::new();
        r.set("mode", "model")
            .set("nu", nu)
            .set_num("k", k)
            .set_num("k_tol", k_tol)
            .set_num("mu", a.mu)
            .set_num("alpha", a.alpha)
            .set_num("t_end", a.t_end)
            .set("periods", run.periods.len())
            .set_ser("period_durations", &run.periods)
            .set_ser("dx2_per_period", &run.dx2_per_period)
            .set_num("mean_dx2", run.mean_dx2)
            .set_num("mean_period", run.mean_period)
            .set_num("model_frame_dx2", frame_dx2)
            .set_num("drift_rate", run.mean_dx2 / run.mean_period)
            .set_num("path_length_per_period", run.path_length_per_period)
            .set("periodic", frame_dx2.abs() < PERIODIC_DRIFT)
            .set_num("periodic_threshold", PERIODIC_DRIFT)
            .set("sign_constant", run.sign_constant)
            .set_ser("sign_agrees", &run.sign_agrees)
            .set_ser("increment_i", &run.increment_i)
            .set_ser("period_t", &run.period_t)
            .set_ser("predicted_dx2", &run.predicted_dx2)
            .set_ser("predicted_period", &run.predicted_period)
            .set_num("quadrature_rel_tol", QUADRATURE_REL_TOL);
        energy_certificate(&mut r, &run.trajectory);
        return Ok(r.with_table(trajectory_table(&traj)));
    }
    let field = load_source(&a.source, None)?;
    let d = field.dim();
    let (Some(x0), Some(p0)) = (&a.x0, &a.p0) else {
        return usage("field trajectories need --x0 and --p0");
    };
    let (x0, p0) = (point("x0", x0, d)?, point("p0", p0, d)?);
    let scalar: Arc<dyn ScalarField> = field.scalar.clone().unwrap_or_else(|| Arc::new(ConstantScalar(0.0)));
    let sys = MagneticSystem::new(field.metric.clone(), field.potential.clone(), scalar, a.mu)?;
    let mut pot = vec![0.0; d];
    sys.potential.eval(&x0, &mut pot);
    let xi = p0.iter().zip(&pot).map(|(p, ai)| p + a.mu * ai).collect();
    let traj = integrate_trajectory(&sys, &PhasePoint::new(x0, xi), a.t_end, tol)?;
    let table = trajectory_table(&match a.dt {
        Some(dt) => traj.resample(&sys, dt),
        None => traj.clone(),
    });
    let mut r = Report::new();
    r.set("mode", "field").set_num("mu", a.mu).set_num("t_end", a.t_end).set("dim", d);
    energy_certificate(&mut r, &traj);
    Ok(r.with_table(table))
}

fn drift_scan(a: &DriftScanArgs, tol: Option<f64>) -> Result<Report, CliError> {
    let tol = tol.unwrap_or(1e-11);
    let field = load_source(&a.source, Some(DEFAULT_DRIFT_FIELD))?;
    let d = field.dim();
    let (x0, p0) = (point("x0", &a.x0, d)?, point("p0", &a.p0, d)?);
    if !a.mus.increasing() || a.mus.values().iter().any(|m| !(*m > 0.0)) {
        return usage("--mus must be positive and increasing");
    }
    let scalar: Arc<dyn ScalarField> = field.scalar.clone().unwrap_or_else(|| Arc::new(ConstantScalar(0.0)));
    let sys = MagneticSystem::new(field.metric.clone(), field.potential.clone(), scalar, a.mus.values()[0])?;
    let horizon = match a.horizon {
        Horizon::Fixed => ScanHorizon::Fixed,
        Horizon::DriftScaled => ScanHorizon::DriftScaled,
    };
    let scan = guiding_center_error_scan(&sys, &x0, &p0, a.mus.values(), a.t_end, horizon, tol)?;
    let mut table = Table::new([
        "mu",
        "t_end",
        "max_deviation",
        "centers",
        "mean_drift_speed",
        "max_energy_drift",
        "energy_tol",
    ]);
    for row in &scan.rows {
        table.push(vec![
            num(row.mu),
            num(row.t_end),
            num(row.max_deviation),
            row.centers.into(),
            num(row.mean_drift_speed),
            num(row.max_energy_drift),
            num(row.energy_tol),
        ]);
    }
    let mut r = Report::new();
    r.set_ser("horizon", &horizon)
        .set_ser("slope", &scan.slope)
        .set_ser("slope_rms", &scan.slope_rms)
        .set("no_drift", scan.no_drift)
        .set_num("tol", tol);
    Ok(r.with_table(table))
}

fn kstar(a: &KstarArgs) -> Result<Report, CliError> {
    let ks = find_kstar(a.nu, a.w)?;
    let mut r = Report::new();
    r.set("nu", a.nu)
        .set_num("w", a.w)
        .set_num("kstar", ks.kstar)
        .set_num("tol", ks.tol)
        .set_ser("slope", &ks.slope);
    Ok(r)
}

fn period(a: &PeriodArgs) -> Result<Report, CliError> {
    EffectiveModel::new(a.nu, 0.0, a.w)?;
    let rows: Vec<Vec<Value>> = a
        .k
        .values()
        .par_iter()
        .map(|&k| {
            let model = EffectiveModel::new(a.nu, k, a.w);
            let pair = model.as_ref().ok().and_then(|m| m.period_and_increment().ok());
            let action = model.as_ref().ok().and_then(|m| m.action().ok());
            let sign = model.as_ref().ok().and_then(|m| m.drift_increment_sign().ok());
            let status = match &model {
                Err(e) => e.to_string(),
                Ok(m) => match m.period_and_increment() {
                    Ok(_) => "ok".to_string(),
                    Err(e) => e.to_string(),
                },
            };
            vec![
                num(k),
                pair.map_or(Value::Null, |p| num(p.0)),
                pair.map_or(Value::Null, |p| num(p.1)),
                action.map_or(Value::Null, num),
                sign.map_or(Value::Null, num),
                status.into(),
            ]
        })
        .collect();
    let mut table = Table::new(["k", "period_t", "increment_i", "action", "sign_i", "status"]);
    rows.into_iter().for_each(|row| table.push(row));
    let mut r = Report::new();
    r.set("nu", a.nu)
        .set_num("w", a.w)
        .set_num("quadrature_rel_tol", QUADRATURE_REL_TOL)
        .set_ser("kstar", &find_kstar(a.nu, a.w).ok().map(|k| k.kstar));
    Ok(r.with_table(table))
}

fn lines(a: &LinesArgs, tol: Option<f64>) -> Result<Report, CliError> {
    let defaulted = a.source.field.is_none() && a.source.kind.is_none();
    let field = load_source(&a.source, Some(r#"{"kind": "roussarie4d"}"#))?;
    let d = field.dim();
    let x0 = match (&a.x0, defaulted) {
        (Some(g), _) => point("x0", g, d)?,
        (None, true) => vec![0.0, 0.0, 1.0, 0.0],
        (None, false) => return usage("--x0 is required with --field or --kind"),
    };
    if !(a.step > 0.0) {
        return usage("--step must be positive");
    }
    let opts = LineOptions {
        rank_tol: tol.unwrap_or(DEFAULT_RANK_TOL),
        ..LineOptions::default()
    };
    let rank = rank_stratum(&field.form, &x0, opts.rank_tol)?;
    let line = magnetic_line(&field.form, &x0, a.length, a.step, &opts)?;
    let mut cols = vec!["s".to_string()];
    cols.extend((1..=d).map(|j| format!("x{j}")));
    let mut table = Table::new(cols);
    for s in &line.samples {
        let mut row = vec![num(s.s)];
        row.extend(s.x.iter().map(|v| num(*v)));
        table.push(row);
    }
    let mut r = Report::new();
    r.set("dim", d)
        .set("rank_at_start", rank)
        .set_num("rank_tol", opts.rank_tol)
        .set_num("step", line.samples.get(1).map_or(a.step, |s| s.s.abs()))
        .set("integrator", "rk4")
        .set("used_surface_projection", line.used_surface_projection);
    Ok(r.with_table(table))
}

/// Sorted distinct thresholds `((Σ(2α_j+1) f_j μh) − V)/2` of the active
/// lattice points plus the next one, and whether the list was cut short.
fn weyl_jumps(p: &WeylParams) -> (Vec<f64>, bool) {
    const MAX_VISITED: usize = 1_000_000;
    if p.r == 0 {
        return (Vec::new(), false);
    }
    let levels: Vec<f64> = p.intensities.iter().map(|f| f * p.mu * p.h).collect();
    let budget = 2.0 * p.energy + p.v;
    let base: f64 = levels.iter().sum();
    let limit = budget.max(base) + 2.0 * levels.iter().fold(0.0_f64, |m, l| m.max(*l));
    let mut sums = Vec::new();
    let mut cut = false;
    let mut stack = vec![(0usize, base)];
    while let Some((j, s)) = stack.pop() {
        if j == levels.len() {
            sums.push(s);
            if sums.len() >= MAX_VISITED {
                cut = true;
                break;
            }
            continue;
        }
        let mut a = 0.0;
        while s + 2.0 * a * levels[j] <= limit {
            stack.push((j + 1, s + 2.0 * a * levels[j]));
            a += 1.0;
        }
    }
    sums.sort_by(f64::total_cmp);
    sums.dedup();
    let active = sums.iter().take_while(|s| budget - **s > 0.0).count();
    let mut jumps: Vec<f64> = sums[..(active + 1).min(sums.len())]
        .iter()
        .map(|s| 0.5 * (s - p.v))
        .collect();
    if jumps.len() > MAX_LISTED_JUMPS {
        jumps.truncate(MAX_LISTED_JUMPS);
        cut = true;
    }
    (jumps, cut)
}

fn weyl(a: &WeylArgs) -> Result<Report, CliError> {
    let field_mode = a.source.field.is_some() || a.source.kind.is_some();
    let params = if field_mode {
        if a.d.is_some() || a.r.is_some() || a.f.is_some() {
            return usage("--d, --r and --f cannot be combined with a field");
        }
        let field = load_source(&a.source, None)?;
        let Some(x) = &a.x else {
            return usage("field mode needs the point --x");
        };
        let x = point("x", x, field.dim())?;
        let scalar: Arc<dyn ScalarField> = match (a.v, &field.scalar) {
            (Some(v), _) => Arc::new(ConstantScalar(v)),
            (None, Some(s)) => s.clone(),
            (None, None) => return usage("the field has no scalar potential; pass --v"),
        };
        local_weyl_params(field.metric.as_ref(), &field.form, scalar.as_ref(), &x, a.energy, a.mu, a.h)?
    } else {
        let Some(d) = a.d else {
            return usage("pass --d (with --r, --f, --v) or a field with --x");
        };
        let f = a.f.as_ref().map(|g| g.values().to_vec()).unwrap_or_default();
        let Some(v) = a.v else {
            return usage("--v is required");
        };
        WeylParams {
            d,
            r: a.r.unwrap_or(f.len()),
            intensities: f,
            v,
            energy: a.energy,
            mu: a.mu,
            h: a.h,
            g: a.g,
        }
    };
    let value = magnetic_weyl_density(&params)?;
    let (jumps, cut) = weyl_jumps(&params);
    let mut r = Report::new();
    r.set_num("density", value.value)
        .set("terms", value.terms)
        .set_num("truncation_certificate", value.certificate)
        .set_ser("jumps", &jumps)
        .set("jumps_truncated", cut)
        .set_ser("params", &params);
    Ok(r)
}

fn landau(a: &LandauArgs) -> Result<Report, CliError> {
    let values = a
        .tau
        .values()
        .iter()
        .map(|&tau| landau_density_2d(a.f, a.v, a.g, a.mu, a.h, tau).map(|d| (tau, d)))
        .collect::<Result<Vec<_>, SpectralError>>()?;
    let mut table = Table::new(["tau", "density", "levels"]);
    for (tau, d) in &values {
        table.push(vec![num(*tau), num(d.value), d.levels.into()]);
    }
    let last = &values.last().expect("grids are nonempty").1;
    let mut r = Report::new();
    r.set_num("f", a.f)
        .set_num("v", a.v)
        .set_num("g", a.g)
        .set_num("mu", a.mu)
        .set_num("h", a.h)
        .set_num("jump_size", last.jump_size)
        .set_ser("jumps", &last.jumps)
        .set("exact", true);
    Ok(r.with_table(table))
}

fn eigencount(a: &EigencountArgs) -> Result<Report, CliError> {
    let op = AuxOperator1D::new(a.nu, a.hbar, a.xi2, a.w)?;
    let mut r = Report::new();
    r.set("nu", a.nu)
        .set_num("hbar", a.hbar)
        .set_num("xi2", a.xi2)
        .set_num("w", a.w)
        .set_num("tau", a.tau);
    let mut counts = Vec::new();
    if a.method != CountMethodArg::Bs {
        let mut v = if a.eigenvalues {
            let (c, ev) = fd_eigenvalues(&op, a.tau, a.n)?;
            let mut v = to_value(&c);
            v["eigenvalues"] = to_value(&ev);
            v
        } else {
            to_value(&fd_eigencount(&op, a.tau, a.n)?)
        };
        counts.push(v["count"].as_u64());
        v["method"] = "finite-difference".into();
        r.set("finite_difference", v);
    }
    if a.method != CountMethodArg::Fd {
        match bohr_sommerfeld_eigenvalues(&op, a.tau) {
            Ok(bs) => {
                let mut v = to_value(&bs.counting);
                if a.eigenvalues {
                    v["eigenvalues"] = to_value(&bs.eigenvalues);
                }
                counts.push(v["count"].as_u64());
                r.set("bohr_sommerfeld", v);
            }
            Err(e) if a.method == CountMethodArg::Both && !e.is_numerical() => {
                r.set("bohr_sommerfeld", json!({ "error": e.to_string() }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if let [Some(fd), Some(bs)] = counts[..] {
        r.set("difference", fd.abs_diff(bs));
    }
    Ok(r)
}

fn correction(a: &CorrectionArgs) -> Result<Report, CliError> {
    let p = CorrectionParams::new(a.nu, a.w, a.hbar, a.h).with_tau(a.tau);
    let term = correction_term(&p)?;
    let grid: Vec<f64> = match &a.xi2_grid {
        Some(g) => g.values().to_vec(),
        None => {
            let (lo, hi) = term.window;
            let pad = 0.05 * (hi - lo);
            (0..=200).map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / 200.0).collect()
        }
    };
    let n0 = grid
        .par_iter()
        .map(|&xi2| census_count(a.nu, a.hbar, xi2, p.lifted_w()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(["xi2_grid", "n0"]);
    for (x, n) in grid.iter().zip(&n0) {
        table.push(vec![num(*x), (*n).into()]);
    }
    let fit = if a.no_fit {
        Value::Null
    } else {
        if a.periods == 0 || a.samples < 4 {
            return usage("the fit needs --periods >= 1 and --samples >= 4");
        }
        let t: Vec<f64> = (0..a.periods * a.samples)
            .map(|j| term.action_variable + j as f64 / a.samples as f64)
            .collect();
        let samples: Vec<CorrectionSample> = correction_sweep(a.nu, a.hbar, a.h, a.tau, &t)?
            .iter()
            .map(|s| CorrectionSample {
                params: CorrectionParams::new(a.nu, s.w, a.hbar, a.h).with_tau(a.tau),
                value: s.term.value,
            })
            .collect();
        to_value(&fit_closed_form(&samples, &FitOptions::default())?)
    };
    let mut r = Report::new();
    r.set("nu", a.nu)
        .set_num("hbar", a.hbar)
        .set_num("w", a.w)
        .set_num("h", a.h)
        .set_num("tau", a.tau)
        .set_ser("correction", &term)
        .set_num("count_action_rel_tol", ACTION_ROOT_TOL)
        .set("fit", fit);
    Ok(r.with_table(table))
}

fn gfunc(a: &GfuncArgs) -> Result<Report, CliError> {
    let t = a.t_grid.values();
    let g: Vec<f64> = t.iter().map(|&x| g_function(x)).collect();
    let pieces: Vec<f64> = t.windows(2).zip(g.windows(2)).map(|(s, v)| 0.5 * (s[1] - s[0]) * (v[0] + v[1])).collect();
    let integral = pairwise_sum(&pieces);
    let span = t[t.len() - 1] - t[0];
    let periodicity = t.iter().map(|&x| (g_function(x + 1.0) - g_function(x)).abs()).fold(0.0, f64::max);
    let mut pairs: Vec<(f64, f64)> = t.windows(2).map(|w| (w[0], w[1])).collect();
    for gap in [1e-4, 1e-3, 1e-2, 1e-1] {
        pairs.extend(t.iter().map(|&x| (x, x + gap)));
    }
    let mut table = Table::new(["t", "G"]);
    for (x, v) in t.iter().zip(&g) {
        table.push(vec![num(*x), num(*v)]);
    }
    let mut r = Report::new();
    r.set_num("integral", integral)
        .set_num("span", span)
        .set_ser("mean", &(span > 0.0).then(|| integral / span))
        .set("quadrature", "trapezoid")
        .set("nodes", t.len())
        .set_num("max_abs", g.iter().fold(0.0, |m, v| m.max(v.abs())))
        .set_num("periodicity_defect", periodicity)
        .set_num("holder_half_quotient", holder_half_quotient(&pairs));
    Ok(r.with_table(table))
}

fn fit_correction(a: &FitCorrectionArgs) -> Result<Report, CliError> {
    if a.samples < 4 {
        return usage("--samples must be at least 4");
    }
    let (_, peak) = critical_action(a.nu)?;
    let mut samples = Vec::new();
    for &hbar in a.hbar.values() {
        let t0 = peak / (std::f64::consts::TAU * hbar);
        let t: Vec<f64> = (0..a.samples).map(|j| t0 + j as f64 / a.samples as f64).collect();
        for s in correction_sweep(a.nu, hbar, a.h, a.tau, &t)? {
            samples.push(CorrectionSample {
                params: CorrectionParams::new(a.nu, s.w, hbar, a.h).with_tau(a.tau),
                value: s.term.value,
            });
        }
    }
    let opts = FitOptions {
        s0_min: a.s0_min,
        s0_max: a.s0_max,
        ..FitOptions::default()
    };
    let fit = fit_closed_form(&samples, &opts)?;
    let mut table = Table::new(["hbar", "w", "action_variable", "value", "fitted"]);
    for s in &samples {
        let p = s.params;
        let fitted = fit.kappa * p.envelope() * g_function(fit.s0 * p.phase_scale());
        table.push(vec![
            num(p.hbar),
            num(p.w),
            num(peak * p.phase_scale()),
            num(s.value),
            num(fitted),
        ]);
    }
    let mut r = Report::new();
    r.set("nu", a.nu)
        .set_num("h", a.h)
        .set_num("tau", a.tau)
        .set_ser("fit", &fit)
        .set_num("critical_action", peak)
        .set_ser("fit_options", &opts);
    Ok(r.with_table(table))
}
