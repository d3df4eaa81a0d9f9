//! Subcommand implementations. Each returns the process exit code on
//! success: 0, 2 for numerical non-convergence, 3 for unreliable statistics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use towlab_core::game::write_trajectory_csv;
use towlab_core::io::{fmt_f64, write_json};
use towlab_core::mean_value::write_residual_csv;
use towlab_core::oracles::{write_grid_csv, write_walk_csv};
use towlab_core::regularity::gamblers_ruin_bottom;
use towlab_core::{
    build_lattice, discrete_2d_value, discrete_hitting_value, discrete_running_time, estimate_timed_value,
    estimate_value, exit_time_moment_check, fit_l, bottom_escape_probability, mv_limit, parabolic_defect, play,
    play_timed, solve, solve_parabolic, trial_rng, Builtin, CylinderConfig, DiscreteWalkSpec, Domain, GameParams,
    GameSetup, GridSpec, Lattice, LatticeField, Mode, MvOptions, Noise, SolveOptions, Sweep, ValueEstimate,
};

use crate::settings::{read_config_file, Settings};
use crate::specs::{parse_domain, parse_point, PayoffSpec, StrategySpec};
use crate::{Cli, Command, CylinderArgs, MvpArgs, OracleArgs, ParabolicArgs, ProblemArgs, SolveArgs, ValueArgs};
use crate::{DEFAULT_OUT_DIR, OUT_DIR_ENV};

pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_UNRELIABLE: u8 = 3;

/// Error with the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<towlab_core::Error>() {
            Some(towlab_core::Error::AllTrialsCapped(_)) => EXIT_UNRELIABLE,
            _ => 1,
        };
        Self { code, error }
    }
}

struct Output {
    dir: PathBuf,
    name: String,
}

impl Output {
    fn from_settings(s: &Settings) -> Result<Self> {
        let dir = PathBuf::from(s.text("out-dir")?);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir, name: s.text("name")? })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.name))
    }

    fn create(&self, suffix: &str) -> Result<BufWriter<File>> {
        let path = self.path(suffix);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn json(&self, suffix: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let mut w = self.create(suffix)?;
        write_json(&mut w, value)?;
        w.flush()?;
        Ok(self.path(suffix))
    }
}

pub fn run(cli: Cli) -> std::result::Result<u8, Failure> {
    let file = match &cli.config {
        Some(path) => Some(read_config_file(path)?),
        None => None,
    };
    let out_dir_default = std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| DEFAULT_OUT_DIR.to_string());
    let (command_name, mut defaults, flags) = layers(&cli.command);
    defaults.push(("out-dir", out_dir_default.as_str()));
    defaults.push(("name", command_name));
    let mut flags = flags;
    flags.push(("out-dir", cli.out_dir.clone()));
    flags.push(("name", cli.name.clone()));
    let settings = Settings::resolve(&defaults, file.as_ref(), flags)?;

    if cli.dump_config {
        print!("{settings}");
        return Ok(0);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(anyhow!("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let out = Output::from_settings(&settings)?;
    let mut snapshot = out.create("config.txt")?;
    write!(snapshot, "{settings}").context("writing config snapshot")?;
    snapshot.flush().context("writing config snapshot")?;

    let code = match &cli.command {
        Command::Solve(_) => cmd_solve(&settings, &out)?,
        Command::SolveParabolic(_) => cmd_solve_parabolic(&settings, &out)?,
        Command::Value(_) => cmd_value(&settings, &out)?,
        Command::Cylinder(_) => cmd_cylinder(&settings, &out)?,
        Command::Mvp(_) => cmd_mvp(&settings, &out)?,
        Command::Oracle(_) => cmd_oracle(&settings, &out)?,
    };
    Ok(code)
}

type Layers = (&'static str, Vec<(&'static str, &'static str)>, Vec<(&'static str, Option<String>)>);

const PROBLEM_DEFAULTS: [(&str, &str); 6] =
    [("domain", "interval:0,1"), ("p", "2"), ("eps", "0.1"), ("k", "4"), ("lattice", "ball"), ("payoff", "linear")];

fn problem_flags(a: &ProblemArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("domain", a.domain.clone()),
        ("p", a.p.clone()),
        ("eps", a.eps.clone()),
        ("k", a.k.clone()),
        ("lattice", a.lattice.clone()),
        ("payoff", a.payoff.clone()),
    ]
}

fn layers(command: &Command) -> Layers {
    match command {
        Command::Solve(SolveArgs { problem, tol, max_sweeps, sweep, sweep_eps }) => {
            let mut d = PROBLEM_DEFAULTS.to_vec();
            d.extend([("tol", "1e-10"), ("max-sweeps", ""), ("sweep", "jacobi"), ("sweep-eps", "")]);
            let mut f = problem_flags(problem);
            f.extend([
                ("tol", tol.clone()),
                ("max-sweeps", max_sweeps.clone()),
                ("sweep", sweep.clone()),
                ("sweep-eps", sweep_eps.clone()),
            ]);
            ("solve", d, f)
        }
        Command::SolveParabolic(ParabolicArgs { problem, horizon, tol }) => {
            let mut d = PROBLEM_DEFAULTS.to_vec();
            d.extend([("horizon", "1"), ("tol", "1e-10")]);
            let mut f = problem_flags(problem);
            f.extend([("horizon", horizon.clone()), ("tol", tol.clone())]);
            ("solve-parabolic", d, f)
        }
        Command::Value(a) => {
            let mut d = PROBLEM_DEFAULTS.to_vec();
            d.extend([
                ("start", ""),
                ("strategy-i", "greedy"),
                ("strategy-ii", "greedy"),
                ("noise", "ball"),
                ("trials", "10000"),
                ("seed", "0"),
                ("t0", ""),
                ("round-cap", ""),
                ("max-capped", "0.01"),
                ("trajectories", "0"),
                ("tol", "1e-10"),
            ]);
            let ValueArgs {
                problem,
                start,
                strategy_i,
                strategy_ii,
                noise,
                trials,
                seed,
                t0,
                round_cap,
                max_capped,
                trajectories,
                tol,
            } = a;
            let mut f = problem_flags(problem);
            f.extend([
                ("start", start.clone()),
                ("strategy-i", strategy_i.clone()),
                ("strategy-ii", strategy_ii.clone()),
                ("noise", noise.clone()),
                ("trials", trials.clone()),
                ("seed", seed.clone()),
                ("t0", t0.clone()),
                ("round-cap", round_cap.clone()),
                ("max-capped", max_capped.clone()),
                ("trajectories", trajectories.clone()),
                ("tol", tol.clone()),
            ]);
            ("value", d, f)
        }
        Command::Cylinder(CylinderArgs { n, r, eps, alpha, ells, trials, seed, moments, max_capped }) => {
            let d = vec![
                ("n", "1"),
                ("r", "1"),
                ("eps", "0.05"),
                ("alpha", "1"),
                ("ells", "0.05,0.1,0.2,0.4,0.8"),
                ("trials", "20000"),
                ("seed", "0"),
                ("moments", "false"),
                ("max-capped", "0.01"),
            ];
            let f = vec![
                ("n", n.clone()),
                ("r", r.clone()),
                ("eps", eps.clone()),
                ("alpha", alpha.clone()),
                ("ells", ells.clone()),
                ("trials", trials.clone()),
                ("seed", seed.clone()),
                ("moments", moments.clone()),
                ("max-capped", max_capped.clone()),
            ];
            ("cylinder", d, f)
        }
        Command::Mvp(MvpArgs { phi, x, p, eps, m, analytic }) => {
            let d = vec![
                ("phi", "aronsson"),
                ("x", "1,0"),
                ("p", "inf"),
                ("eps", "0.1,0.05,0.025,0.0125"),
                ("m", "16"),
                ("analytic", "false"),
            ];
            let f = vec![
                ("phi", phi.clone()),
                ("x", x.clone()),
                ("p", p.clone()),
                ("eps", eps.clone()),
                ("m", m.clone()),
                ("analytic", analytic.clone()),
            ];
            ("mvp", d, f)
        }
        Command::Oracle(OracleArgs { kind, a, b, eps, left, right, cost, nx, ny, h, origin, payoff }) => {
            let d = vec![
                ("kind", "hitting"),
                ("a", "0"),
                ("b", "1"),
                ("eps", "0.1"),
                ("left", "0"),
                ("right", "1"),
                ("cost", "1"),
                ("nx", "3"),
                ("ny", "3"),
                ("h", "1"),
                ("origin", "0,0"),
                ("payoff", "linear"),
            ];
            let f = vec![
                ("kind", kind.clone()),
                ("a", a.clone()),
                ("b", b.clone()),
                ("eps", eps.clone()),
                ("left", left.clone()),
                ("right", right.clone()),
                ("cost", cost.clone()),
                ("nx", nx.clone()),
                ("ny", ny.clone()),
                ("h", h.clone()),
                ("origin", origin.clone()),
                ("payoff", payoff.clone()),
            ];
            ("oracle", d, f)
        }
    }
}

/// Domain, parameters, lattice and payoff shared by the lattice commands.
struct Problem {
    domain: Domain,
    params: GameParams,
    k: usize,
    walk: bool,
    payoff: PayoffSpec,
}

impl Problem {
    fn from_settings(s: &Settings) -> Result<Self> {
        let domain = parse_domain(&s.text("domain")?)?;
        let p = s.f64("p")?;
        let eps = s.positive("eps")?;
        let params = GameParams::new(domain.dim(), p, eps)?;
        let k = s.usize("k")?;
        let walk = match s.raw("lattice") {
            "ball" => false,
            "walk" => true,
            other => bail!("lattice must be ball or walk, got '{other}'"),
        };
        let payoff = PayoffSpec::parse(s.raw("payoff"))?;
        Ok(Self { domain, params, k, walk, payoff })
    }

    fn lattice(&self, eps: f64) -> Result<Arc<Lattice>> {
        let lat =
            if self.walk { Lattice::discrete_walk(&self.domain, eps)? } else { build_lattice(&self.domain, eps, self.k)? };
        Ok(Arc::new(lat))
    }

    fn solve_options(s: &Settings) -> Result<SolveOptions> {
        let mut opts = SolveOptions::with_tol(s.positive("tol")?);
        if s.is_set("max-sweeps") {
            opts.max_sweeps = Some(s.usize("max-sweeps")?);
        }
        opts.sweep = match s.raw("sweep") {
            "" | "jacobi" => Sweep::Jacobi,
            "gauss-seidel" => Sweep::GaussSeidel,
            other => bail!("sweep must be jacobi or gauss-seidel, got '{other}'"),
        };
        Ok(opts)
    }
}

fn cmd_solve(s: &Settings, out: &Output) -> Result<u8> {
    let problem = Problem::from_settings(s)?;
    let opts = Problem::solve_options(s)?;
    let payoff = problem.payoff;
    let boundary = move |x: &[f64]| payoff.eval(x);

    let lattice = problem.lattice(problem.params.epsilon)?;
    let (field, report) = solve(lattice.clone(), &boundary, &problem.params, &opts)?;
    let mut w = out.create("field.csv")?;
    field.write_csv(&mut w)?;
    w.flush()?;
    out.json(
        "report.json",
        &json!({
            "report": report,
            "p": problem.params.p,
            "epsilon": problem.params.epsilon,
            "alpha": problem.params.alpha,
            "beta": problem.params.beta,
            "nodes": lattice.len(),
            "interior_nodes": lattice.interior_nodes().len(),
        }),
    )?;
    let mut converged = report.converged;
    if !converged {
        log::warn!("solve stopped after {} sweeps with defect {:e}", report.sweeps, report.final_defect);
    }

    if s.is_set("sweep-eps") {
        let list = s.list("sweep-eps")?;
        let mut w = out.create("sweep.csv")?;
        writeln!(w, "epsilon,sup_error,sweeps,converged")?;
        for eps in list {
            let params = problem.params.with_epsilon(eps)?;
            let lattice = problem.lattice(eps)?;
            let (field, report) = solve(lattice, &boundary, &params, &opts)?;
            writeln!(w, "{},{},{},{}", fmt_f64(eps), fmt_f64(sup_error(&field, &|x| x[0])), report.sweeps, report.converged)?;
            converged &= report.converged;
        }
        w.flush()?;
    }
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

/// Sup distance between a solved field and a reference at interior nodes.
fn sup_error(field: &LatticeField, reference: &dyn Fn(&[f64]) -> f64) -> f64 {
    let lat = field.lattice();
    lat.interior_nodes().iter().map(|&i| (field.value(i) - reference(lat.point(i))).abs()).fold(0.0, f64::max)
}

fn cmd_solve_parabolic(s: &Settings, out: &Output) -> Result<u8> {
    let problem = Problem::from_settings(s)?;
    let horizon = s.positive("horizon")?;
    let tol = s.positive("tol")?;
    let payoff = problem.payoff;
    let timed = move |x: &[f64], _t: f64| payoff.eval(x);
    let lattice = problem.lattice(problem.params.epsilon)?;
    let field = solve_parabolic(lattice.clone(), &timed, horizon, &problem.params)?;
    let defect = parabolic_defect(&field, &problem.params)?;
    let mut w = out.create("spacetime.csv")?;
    field.write_csv(&mut w)?;
    w.flush()?;
    let mut w = out.create("sidecar.json")?;
    field.write_sidecar(&mut w)?;
    w.flush()?;
    let converged = defect <= tol;
    out.json(
        "report.json",
        &json!({ "defect": defect, "tol": tol, "converged": converged, "slice_count": field.slice_count() }),
    )?;
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_value(s: &Settings, out: &Output) -> Result<u8> {
    let problem = Problem::from_settings(s)?;
    let n = problem.domain.dim();
    let start = if s.is_set("start") {
        parse_point(s.raw("start"), n, "start")?
    } else {
        let (lo, hi) = problem.domain.bounding_box();
        lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
    };
    let s1 = StrategySpec::parse(s.raw("strategy-i"), n)?;
    let s2 = StrategySpec::parse(s.raw("strategy-ii"), n)?;
    let payoff = problem.payoff;
    let boundary = move |x: &[f64]| payoff.eval(x);
    let lattice = problem.lattice(problem.params.epsilon)?;
    let solved = if s1.needs_solve() || s2.needs_solve() {
        let (field, report) = solve(lattice.clone(), &boundary, &problem.params, &SolveOptions::with_tol(s.positive("tol")?))?;
        if !report.converged {
            log::warn!("field behind the greedy strategies did not converge (defect {:e})", report.final_defect);
        }
        Some(field)
    } else {
        None
    };
    let p1 = s1.build(Mode::Maximize, &lattice, solved.as_ref())?;
    let p2 = s2.build(Mode::Minimize, &lattice, solved.as_ref())?;

    let noise = match s.raw("noise") {
        "ball" => Noise::UniformBall,
        "axis" => Noise::AxisSteps,
        "stencil" => Noise::Stencil(lattice.clone()),
        other => bail!("noise must be ball, axis or stencil, got '{other}'"),
    };
    let mut setup = GameSetup::new(problem.params, problem.domain.clone())?.with_noise(noise)?;
    if s.is_set("round-cap") {
        setup = setup.with_round_cap(s.usize("round-cap")?)?;
    }
    let trials = s.usize("trials")?;
    let seed = s.u64("seed")?;
    let max_capped = s.f64("max-capped")?;
    if !(0.0..=1.0).contains(&max_capped) {
        bail!("max-capped must lie in [0, 1], got {max_capped}");
    }
    let t0 = if s.is_set("t0") { Some(s.positive("t0")?) } else { None };
    let timed = move |x: &[f64], _t: f64| payoff.eval(x);

    let estimate: ValueEstimate = match t0 {
        None => estimate_value(&setup, &start, p1.as_ref(), p2.as_ref(), &boundary, trials, seed)?,
        Some(t0) => estimate_timed_value(&setup, &start, t0, p1.as_ref(), p2.as_ref(), &timed, trials, seed)?,
    };
    for i in 0..s.usize("trajectories")?.min(trials) {
        let mut rng = trial_rng(seed, i as u64);
        let traj = match t0 {
            None => play(&setup, &start, p1.as_ref(), p2.as_ref(), &boundary, &mut rng)?,
            Some(t0) => play_timed(&setup, &start, t0, p1.as_ref(), p2.as_ref(), &timed, &mut rng)?,
        };
        let mut w = out.create(&format!("trajectory_{i}.csv"))?;
        write_trajectory_csv(&traj, &mut w)?;
        w.flush()?;
    }
    out.json(
        "estimate.json",
        &json!({
            "estimate": estimate,
            "start": start,
            "p": problem.params.p,
            "epsilon": problem.params.epsilon,
            "t0": t0,
            "round_cap": setup.round_cap,
        }),
    )?;
    if estimate.capped_fraction > max_capped {
        log::warn!("capped fraction {} exceeds {max_capped}", estimate.capped_fraction);
        return Ok(EXIT_UNRELIABLE);
    }
    Ok(0)
}

fn cmd_cylinder(s: &Settings, out: &Output) -> Result<u8> {
    let n = s.usize("n")?;
    let r = s.positive("r")?;
    let eps = s.positive("eps")?;
    let alpha = s.f64("alpha")?;
    let ells = s.list("ells")?;
    if ells.is_empty() {
        bail!("ells must list at least one start height");
    }
    let trials = s.usize("trials")?;
    let seed = s.u64("seed")?;
    let moments = s.bool("moments")?;
    let max_capped = s.f64("max-capped")?;

    let mut rows = Vec::with_capacity(ells.len());
    let mut worst_capped = 0.0f64;
    let mut w = out.create("sweep.csv")?;
    writeln!(w, "ell,estimate,std_error,ci95_lo,ci95_hi,capped_fraction,escape,bound_abscissa,gamblers_ruin")?;
    for &ell in &ells {
        let config = CylinderConfig::new(n, r, ell, eps, alpha)?;
        let est = bottom_escape_probability(&config, trials, seed)?;
        let ruin = (alpha == 1.0).then(|| gamblers_ruin_bottom(&config));
        let abscissa = (ell + eps) / r;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(ell),
            fmt_f64(est.mean),
            fmt_f64(est.std_error),
            fmt_f64(est.ci95_lo),
            fmt_f64(est.ci95_hi),
            fmt_f64(est.capped_fraction),
            fmt_f64(1.0 - est.mean),
            fmt_f64(abscissa),
            ruin.map(fmt_f64).unwrap_or_default()
        )?;
        worst_capped = worst_capped.max(est.capped_fraction);
        let moment = if moments { Some(exit_time_moment_check(&config, trials, seed)?) } else { None };
        rows.push((ell, abscissa, est, ruin, moment));
    }
    w.flush()?;

    // escape = 1 - P(bottom), bounded by L (ell + eps) / r
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, 1.0 - r.2.mean)).collect();
    let l = fit_l(&points)?;
    let mut sorted = rows.iter().map(|r| (r.0, r.2.mean, r.2.std_error)).collect::<Vec<_>>();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1 + 3.0 * (w[0].2 + w[1].2));
    let table: Vec<_> = rows
        .iter()
        .map(|(ell, x, est, ruin, moment)| {
            json!({
                "ell": ell,
                "bound_abscissa": x,
                "estimate": est,
                "escape": 1.0 - est.mean,
                "gamblers_ruin": ruin,
                "moments": moment,
            })
        })
        .collect();
    out.json(
        "summary.json",
        &json!({
            "n": n, "r": r, "epsilon": eps, "alpha": alpha, "trials": trials, "seed": seed,
            "fitted_l": l, "monotone": monotone, "rows": table,
        }),
    )?;
    if worst_capped > max_capped {
        log::warn!("capped fraction {worst_capped} exceeds {max_capped}");
        return Ok(EXIT_UNRELIABLE);
    }
    Ok(0)
}

fn cmd_mvp(s: &Settings, out: &Output) -> Result<u8> {
    let phi = Builtin::parse(s.raw("phi"))?;
    let x = s.list("x")?;
    if x.is_empty() {
        bail!("x must have at least one coordinate");
    }
    let p = s.f64("p")?;
    let eps = s.list("eps")?;
    let opts = MvOptions { m: s.usize("m")?, analytic_extrema: s.bool("analytic")? };
    let table = mv_limit(&phi, &x, p, &eps, &opts)?;
    let mut w = out.create("residuals.csv")?;
    write_residual_csv(std::slice::from_ref(&table), &mut w)?;
    w.flush()?;
    out.json("limit.json", &serde_json::to_value(&table)?)?;
    if table.limit.is_none() {
        log::warn!("residual table is not monotone; no extrapolated limit");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

fn cmd_oracle(s: &Settings, out: &Output) -> Result<u8> {
    let kind = s.raw("kind").to_string();
    match kind.as_str() {
        "hitting" | "running" => {
            let cost = if kind == "running" { s.f64("cost")? } else { 0.0 };
            let spec =
                DiscreteWalkSpec::new(s.f64("a")?, s.f64("b")?, s.positive("eps")?, s.f64("left")?, s.f64("right")?, cost)?;
            let sol = if kind == "running" { discrete_running_time(&spec)? } else { discrete_hitting_value(&spec)? };
            let mut w = out.create(&format!("{kind}.csv"))?;
            write_walk_csv(&sol, &mut w)?;
            w.flush()?;
        }
        "grid" => {
            let origin = parse_point(s.raw("origin"), 2, "origin")?;
            let spec = GridSpec { nx: s.usize("nx")?, ny: s.usize("ny")?, h: s.positive("h")?, origin: [origin[0], origin[1]] };
            let payoff = PayoffSpec::parse(s.raw("payoff"))?;
            let boundary = move |x: &[f64]| payoff.eval(x);
            let sol = discrete_2d_value(&spec, &boundary)?;
            let mut w = out.create("grid.csv")?;
            write_grid_csv(&sol, &mut w)?;
            w.flush()?;
        }
        other => bail!("kind must be hitting, running or grid, got '{other}'"),
    }
    Ok(0)
}

