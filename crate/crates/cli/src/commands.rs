//! One function per subcommand. Each writes its tables into the output
//! directory and returns an error carrying the exit status class.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use levy_hjb::control::{fundamental_residual, write_verification_csv, VerificationRow};
use levy_hjb::functions::{FunctionPreset, TestFunction};
use levy_hjb::hjb::{analytic_contraction_factor, holder_seminorm, picard_solve, GridSpec, HJBSolution, McSpec};
use levy_hjb::ou::{generator_apply, geometric_grid, gradient_decay_check, semigroup_apply};
use levy_hjb::policy::{constant_family, extract_feedback, FeedbackPolicy, Policy};
use levy_hjb::quad::QuadSpec;
use levy_hjb::spectrum::validate_hypothesis;
use levy_hjb::stable::{ecf_check, levy_constant, levy_khintchine_integral, write_ecf_csv};
use levy_hjb::state::{solve_state_path, PicardSpec};
use levy_hjb::RngStream;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SOLUTION_FILE: &str = "solution.lvyhjb";

// Stream ids under the configured seed, one per consumer.
const NOISE_STREAM: u64 = 1;
const OU_STREAM: u64 = 2;
const CONTRACTION_STREAM: u64 = 5;
const VERIFY_STREAM: u64 = 8;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(dir.join(name), bytes).map_err(|e| CliError::Other(format!("writing {name}: {e}")))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn check_noise(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.checks;
    let base = RngStream::new(cfg.mc.seed, NOISE_STREAM);
    let reports = c
        .alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| ecf_check(a, &c.h_values, c.ecf_samples, base.substream(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_ecf_csv(&reports, &mut buf)?;
    write(out, "noise_ecf.csv", &buf)?;

    let mut s = String::from("alpha,c_alpha,integral,abs_error\n");
    for &a in &c.alphas {
        let ca = levy_constant(a)?;
        let v = levy_khintchine_integral(a, ca, &QuadSpec::default())?;
        writeln!(s, "{a},{ca},{v},{}", (v - 1.0).abs()).unwrap();
    }
    write(out, "levy_constant.csv", s.as_bytes())
}

pub fn check_hypothesis(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    validate_hypothesis(&cfg.model()?, 100)?.write_csv(&mut buf)?;
    write(out, "hypothesis.csv", &buf)
}

pub fn check_ou(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let problem = cfg.problem()?;
    let c = &cfg.checks;
    let n = model.n_modes();
    let base = RngStream::new(cfg.mc.seed, OU_STREAM);

    let origin = vec![0.0; n];
    let mut s = String::from("t,estimate,std_error\n");
    for (i, &t) in c.semigroup_times.iter().enumerate() {
        let e = semigroup_apply(&model, &*problem.terminal_cost, t, &origin, cfg.mc.n_mc, base.substream2(0, i as u64))?;
        writeln!(s, "{t},{},{}", e.estimate, e.std_error).unwrap();
    }
    write(out, "ou_semigroup.csv", s.as_bytes())?;

    let sigmoid = FunctionPreset::Tanh {
        coord: 0,
        scale: 1.0,
        steepness: c.decay_steepness,
    };
    let probes: Vec<Vec<f64>> = (0..c.decay_probes)
        .map(|i| {
            let mut x = vec![0.0; n];
            if c.decay_probes > 1 {
                x[0] = -1.0 + 2.0 * i as f64 / (c.decay_probes - 1) as f64;
            }
            x
        })
        .collect();
    let times = geometric_grid(c.decay_t_min, 1.0, c.decay_points);
    let fit = gradient_decay_check(&model, &sigmoid, &times, &probes, c.decay_n_mc, base.substream(1))?;
    let mut buf = Vec::new();
    fit.write_csv(&mut buf)?;
    write(out, "ou_decay.csv", &buf)?;
    write(out, "ou_decay_summary.txt", format!("{}\n", fit.summary_line()).as_bytes())?;

    let bump = FunctionPreset::CompactBump {
        coord: 0,
        amplitude: 1.0,
        radius: 1.0,
    };
    let t = c.generator_t;
    let gen = generator_apply(&model, &bump, &origin, n, &QuadSpec::default())?;
    let p = semigroup_apply(&model, &bump, t, &origin, c.generator_samples, base.substream(2))?;
    let quotient = (p.estimate - bump.eval(&origin)) / t;
    let rel = (quotient - gen).abs() / gen.abs();
    let s = format!(
        "t,generator,difference_quotient,std_error,relative_gap\n{t},{gen},{quotient},{},{rel}\n",
        p.std_error / t
    );
    write(out, "ou_generator.csv", s.as_bytes())
}

fn solve(cfg: &ExperimentConfig, nodes: usize) -> Result<HJBSolution, CliError> {
    let grid = GridSpec {
        nodes_per_axis: nodes,
        ..cfg.grid
    };
    let mc = McSpec {
        n_mc: cfg.mc.n_mc,
        seed: cfg.mc.seed,
    };
    Ok(picard_solve(&cfg.model()?, &cfg.problem()?, &grid, mc, &cfg.hjb_options())?)
}

pub fn solve_hjb(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let problem = cfg.problem()?;
    let sol = solve(cfg, cfg.grid.nodes_per_axis)?;
    sol.save(out.join(SOLUTION_FILE))?;

    let mut s = String::from("sweep,residual,ratio\n");
    for (i, r) in sol.residual_history.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            (r / sol.residual_history[i - 1]).to_string()
        };
        writeln!(s, "{},{r},{ratio}", i + 1).unwrap();
    }
    write(out, "residuals.csv", s.as_bytes())?;

    let terminal_exact = sol
        .grid_fn
        .grid
        .nodes()
        .iter()
        .zip(&sol.grid_fn.values[0])
        .all(|(x, v)| *v == problem.terminal_cost.eval(x));
    let s = format!(
        "converged,sweeps,tol,max_iter,contraction_factor,analytic_contraction_unit_c,c1gamma_norm,max_std_error,clipped_fraction,terminal_exact\n{},{},{},{},{},{},{},{},{},{}\n",
        sol.converged,
        sol.sweeps(),
        sol.options.tol,
        sol.options.max_iter,
        sol.contraction_factor(),
        analytic_contraction_factor(problem.horizon, sol.gamma_smooth, sol.hamiltonian_lipschitz),
        sol.c1gamma_norm,
        sol.max_std_error(),
        sol.clipped_fraction,
        terminal_exact
    );
    write(out, "hjb_summary.csv", s.as_bytes())?;

    let mut buf = Vec::new();
    sol.write_level_csv(sol.grid_fn.times.len() - 1, &mut buf)?;
    write(out, "value_final.csv", &buf)?;

    if sol.converged {
        let theta = cfg.solver.theta;
        let exponent = sol.gamma_smooth * (1.0 + theta);
        let mut s = String::from("level,t,seminorm,scaled\n");
        for k in 1..sol.grid_fn.times.len() {
            let t = sol.grid_fn.times[k];
            let h = holder_seminorm(&sol, k, theta)?;
            writeln!(s, "{k},{t},{h},{}", h * t.powf(exponent)).unwrap();
        }
        write(out, "holder.csv", s.as_bytes())?;
    }

    if cfg.solver.refinement_check && sol.converged {
        let fine = solve(cfg, 2 * cfg.grid.nodes_per_axis - 1)?;
        let mut s = String::from("t0,x,coarse,fine,abs_change\n");
        for p in cfg.probes()? {
            let tau = problem.horizon - p.t0;
            let (a, b) = (sol.grid_fn.value_at(tau, &p.x), fine.grid_fn.value_at(tau, &p.x));
            writeln!(s, "{},{},{a},{b},{}", p.t0, join(&p.x), (a - b).abs()).unwrap();
        }
        write(out, "refinement.csv", s.as_bytes())?;
    }

    if !sol.converged {
        return Err(CliError::NonConvergence(format!(
            "HJB iteration stopped after {} sweeps with residual {:.3e} > tol {:.1e}; partial solution written",
            sol.sweeps(),
            sol.residual_history.last().copied().unwrap_or(f64::NAN),
            sol.options.tol
        )));
    }
    Ok(())
}

pub fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let problem = cfg.problem()?;
    let path = out.join(SOLUTION_FILE);
    if !path.exists() {
        return Err(CliError::Other(format!("{} not found; run solve-hjb first", path.display())));
    }
    let sol = HJBSolution::load(&path)?;
    if sol.grid_fn.grid.dim != problem.dim || sol.radius != problem.radius || sol.horizon() != problem.horizon {
        return Err(CliError::Config("stored solution does not match the configured problem".into()));
    }
    if !sol.converged {
        return Err(CliError::NonConvergence("stored solution did not converge".into()));
    }
    let sol = Arc::new(sol);
    let feedback = extract_feedback(sol.clone())?;
    let family = constant_family(problem.dim, problem.radius, cfg.verify.family_points);
    let step = cfg.path_step();
    let n_paths = cfg.mc.n_paths;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, p) in cfg.probes()?.iter().enumerate() {
        let rng = RngStream::new(cfg.mc.seed, VERIFY_STREAM).substream(i as u64);
        let r = fundamental_residual(&model, &problem, &sol, &feedback, p.t0, &p.x, step, n_paths, rng)?;
        let row = VerificationRow::new(feedback.label(), p.t0, &p.x, &r);
        if !row.attainment_holds() {
            failures.push(format!("attainment at t0={} x={:?}", p.t0, p.x));
        }
        if !row.bracket_vanishes() {
            failures.push(format!("bracket at t0={} x={:?}", p.t0, p.x));
        }
        rows.push(row);
        for policy in &family {
            let r = fundamental_residual(&model, &problem, &sol, policy, p.t0, &p.x, step, n_paths, rng)?;
            let row = VerificationRow::new(policy.label(), p.t0, &p.x, &r);
            if !row.dominance_holds() {
                failures.push(format!("dominance for {} at t0={} x={:?}", row.policy, p.t0, p.x));
            }
            rows.push(row);
        }
    }
    let mut buf = Vec::new();
    write_verification_csv(&rows, &mut buf)?;
    write(out, "verification.csv", &buf)?;

    state_contraction(cfg, out)?;

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failures.join("; ")))
    }
}

/// Picard statistics of the state equation under the zero control, which
/// leaves the drift as the only state dependence.
fn state_contraction(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let problem = cfg.problem()?;
    let zero = FeedbackPolicy::constant(vec![0.0; problem.dim]);
    let picard = PicardSpec {
        tol: 1e-10,
        max_sweeps: 50,
    };
    let mut s = String::from("t0,x,paths,lip_span,max_contraction,max_sweeps\n");
    let base = RngStream::new(cfg.mc.seed, CONTRACTION_STREAM);
    for (i, p) in cfg.probes()?.iter().enumerate() {
        let (mut worst, mut sweeps) = (0.0f64, 0usize);
        for j in 0..cfg.verify.contraction_paths {
            let path = solve_state_path(
                &model,
                &problem,
                &zero,
                p.t0,
                &p.x,
                cfg.path_step(),
                base.substream2(i as u64, j as u64),
                picard,
            )?;
            worst = worst.max(path.contraction_factor());
            sweeps = sweeps.max(path.sweeps());
        }
        let lip_span = problem.drift.lipschitz() * (problem.horizon - p.t0);
        writeln!(
            s,
            "{},{},{},{lip_span},{worst},{sweeps}",
            p.t0,
            join(&p.x),
            cfg.verify.contraction_paths
        )
        .unwrap();
    }
    write(out, "state_contraction.csv", s.as_bytes())
}
