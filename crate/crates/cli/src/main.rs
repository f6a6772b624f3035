use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use levy_passage::first_passage::{closed_form_passage, pk_series_transform, scale_formula_passage, DEFAULT_K_MAX};
use levy_passage::io::{grids_to_table, RunManifest, Table};
use levy_passage::last_passage::{
    last_passage_cdf, last_passage_joint_density, last_passage_overshoot_mass, overshoot_bracket, reflected_last_passage_transform, Escape,
};
use levy_passage::lundberg::solve_lundberg;
use levy_passage::maintenance::{simulate_policy, KernelChain, PolicyKernels, PolicySpec};
use levy_passage::mc::{
    estimate_first_passage, first_passage_result, last_passage_result,
    simulate_last_passage, simulate_reflected_first_passage, FirstFunctional, LastFunctional, LastPassageMode, SimConfig,
    SimResult,
};
use levy_passage::penalty::PenaltySpec;
use levy_passage::reflected::{reflected_passage_density, ReflectedPassageKernel};
use levy_passage::scale::{scale_auto, scale_via_inversion, scale_via_ode_series, ScaleGrid};
use levy_passage::validate::{rows_to_table, run_suites, SuiteConfig};
use levy_passage::{Error, ModelSpec};

mod builtin;

#[derive(Parser, Debug)]
#[command(name = "levy-passage", version, about = "Passage laws of perturbed-subordinator degradation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a model file and print its summary.
    Model {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate W, W' and Z.
    Scale {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Grid covers [0, 4b].
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, value_enum, default_value_t = ScaleRouteArg::Auto)]
        route: ScaleRouteArg,
        /// Grid points per unit of b.
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discounted first-passage transform.
    FirstPassage {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated list.
        #[arg(long)]
        delta: String,
        /// Value, comma list or `start:stop:n`.
        #[arg(long)]
        b: String,
        #[arg(long, value_enum, default_value_t = RouteArg::All)]
        route: RouteArg,
        #[arg(long, default_value = "one")]
        penalty: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Last-passage laws of the free and reflected process.
    LastPassage {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        b: f64,
        /// Times (cdf) or the single time (joint).
        #[arg(long, default_value = "1")]
        t: String,
        /// Discount rates (overshoot, reflected).
        #[arg(long, default_value = "0")]
        delta: String,
        #[arg(long, value_enum)]
        what: LastWhat,
        /// Grid of levels `a` for `joint`, or of `y` for `overshoot`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Jump-crossing density of the reflected process.
    Reflected {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        b: f64,
        #[arg(long = "grid-y")]
        grid_y: String,
        #[arg(long = "grid-z")]
        grid_z: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo pair P(D*_t > b), P(T_b <= t).
    Duality {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        b: String,
        #[arg(long)]
        t: String,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maintenance policy kernels, joint laws and simulation.
    Maintenance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum)]
        what: MaintWhat,
        #[arg(long = "i-max", default_value_t = 10)]
        i_max: usize,
        /// Idle-time level for `idle`.
        #[arg(long, default_value_t = 0.0)]
        z: f64,
        /// State grid for `kernels`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = levy_passage::maintenance::STATE_POINTS)]
        points: usize,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of one functional.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Evaluate the cdf at this time instead of a transform.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Route-agreement and Monte Carlo agreement suites.
    Validate {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Model files; the shipped examples when omitted.
        #[arg(long, num_args = 1..)]
        models: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long = "t-max", default_value_t = 50.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    bridge: OnOff,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum OnOff {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ScaleRouteArg {
    Auto,
    Closed,
    Inversion,
    Ode,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum RouteArg {
    Pk,
    Scale,
    Closed,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LastWhat {
    Cdf,
    Joint,
    Overshoot,
    Reflected,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum MaintWhat {
    Kernels,
    Joint,
    Idle,
    Expected,
    Simulate,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Target {
    First,
    Last,
    ReflectedFirst,
    ReflectedLast,
    Policy,
}

/// Failure classes mapped to exit codes 2 and 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidModel(_) | Error::InvalidPolicy(_) | Error::InvalidConfig(_) | Error::Domain(_) | Error::OutOfDomain(_) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Numeric(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<ModelSpec> {
    ModelSpec::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> CliResult<PolicySpec> {
    PolicySpec::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Parses `v`, `v1,v2,...` or `start:stop:n`.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("bad grid `{s}`: expected a number, a comma list or start:stop:n"));
    if let [a, b, n] = s.split(':').collect::<Vec<_>>()[..] {
        let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        return Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    std::io::Write::write_all(&mut tmp, contents.as_bytes()).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_table(out: Option<&Path>, manifest: &RunManifest, table: &Table) -> CliResult<()> {
    emit(out, &table.to_csv(manifest))
}

fn emit_json(out: Option<&Path>, manifest: &RunManifest, mut body: serde_json::Value) -> CliResult<()> {
    body["manifest"] = serde_json::to_value(manifest).expect("serializable manifest");
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&body).expect("serializable output")))
}

fn sim_json(r: &SimResult) -> serde_json::Value {
    json!({"estimate": r.estimate, "se": r.std_error, "n": r.n, "censored": r.censored, "estimator": r.meta})
}

fn sim_config(a: &SimArgs) -> CliResult<SimConfig> {
    Ok(SimConfig::new(a.dt, a.t_max, a.paths, a.seed)?.with_bridge(a.bridge == OnOff::On))
}

fn grid_for(b: f64, resolution: usize) -> CliResult<ScaleGrid> {
    Ok(ScaleGrid::new(b / resolution.max(4) as f64, 4.0 * b)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Model { model, out } => {
            let m = load_model(&model)?;
            let rho0 = if m.sigma() > 0.0 && m.mean() > 0.0 { Some(solve_lundberg(&m, 0.0)?.rho) } else { None };
            let man = RunManifest::new("model", Some(&m), json!({}), None);
            let us = [0.5, 1.0, 2.0];
            let body = json!({
                "model": m.to_json(),
                "kind": m.kind().name(),
                "mean": m.mean(),
                "rho0": rho0,
                "phi": us.iter().map(|u| json!({"u": u, "phi": m.phi(*u)})).collect::<Vec<_>>(),
            });
            emit_json(out.as_deref(), &man, body)
        }
        Command::Scale {
            model,
            delta,
            b,
            route,
            resolution,
            out,
        } => {
            let m = load_model(&model)?;
            if !(b > 0.0) {
                return Err(usage("--b must be > 0"));
            }
            let grid = grid_for(b, resolution)?;
            let s = match route {
                ScaleRouteArg::Auto => scale_auto(&m, delta, grid)?,
                ScaleRouteArg::Closed => levy_passage::scale::scale_closed(&m, delta, grid)?,
                ScaleRouteArg::Inversion => scale_via_inversion(&m, delta, grid, &Default::default())?,
                ScaleRouteArg::Ode => scale_via_ode_series(&m, delta, grid, DEFAULT_K_MAX)?,
            };
            let man = RunManifest::new(
                "scale",
                Some(&m),
                json!({"delta": delta, "b": b, "route": s.route.name(), "resolution": resolution}),
                None,
            );
            let t = grids_to_table("x", &[("W", &s.w), ("Wp", &s.w_prime), ("Z", &s.z)])?;
            emit_table(out.as_deref(), &man, &t)
        }
        Command::FirstPassage {
            model,
            delta,
            b,
            route,
            penalty,
            out,
        } => {
            let m = load_model(&model)?;
            let deltas = parse_grid(&delta)?;
            let bs = parse_grid(&b)?;
            let pen = PenaltySpec::parse(&penalty).map_err(|e| usage(e.to_string()))?;
            let b_max = bs.iter().cloned().fold(0.0, f64::max);
            if bs.iter().any(|x| *x < 0.0) || b_max <= 0.0 {
                return Err(usage("--b values must be >= 0 with at least one > 0"));
            }
            let grid = ScaleGrid::new(b_max / 2048.0, b_max)?;
            let routes: Vec<RouteArg> = match route {
                RouteArg::All => {
                    let mut r = vec![RouteArg::Pk, RouteArg::Scale];
                    let closed = matches!(
                        m.kind(),
                        levy_passage::ModelKind::BrownianDrift | levy_passage::ModelKind::PerturbedCompoundPoissonPh
                    );
                    if closed && matches!(pen, PenaltySpec::One) {
                        r.push(RouteArg::Closed);
                    }
                    r
                }
                r => vec![r],
            };
            let mut t = Table::new(&["b", "delta", "phi", "route"]);
            for &d in &deltas {
                for &r in &routes {
                    let pt = match r {
                        RouteArg::Pk => pk_series_transform(&m, d, &pen, grid, DEFAULT_K_MAX)?,
                        RouteArg::Scale | RouteArg::Closed if !matches!(pen, PenaltySpec::One) => {
                            return Err(usage("only the pk route supports a penalty other than `one`"))
                        }
                        RouteArg::Scale => scale_formula_passage(&scale_via_ode_series(&m, d, grid, DEFAULT_K_MAX)?)?,
                        RouteArg::Closed => closed_form_passage(&m, d, grid)?,
                        RouteArg::All => unreachable!("expanded above"),
                    };
                    for &bb in &bs {
                        t.push(vec![bb.into(), d.into(), pt.at(bb)?.into(), pt.route.name().into()]);
                    }
                }
            }
            let man = RunManifest::new("first-passage", Some(&m), json!({"delta": deltas, "b": bs, "penalty": penalty}), None);
            emit_table(out.as_deref(), &man, &t)
        }
        Command::LastPassage {
            model,
            b,
            t,
            delta,
            what,
            grid,
            out,
        } => {
            let m = load_model(&model)?;
            let e = Escape::new(&m)?;
            let ts = parse_grid(&t)?;
            let deltas = parse_grid(&delta)?;
            let mut tab;
            match what {
                LastWhat::Cdf => {
                    tab = Table::new(&["t", "cdf"]);
                    for &tt in &ts {
                        tab.push(vec![tt.into(), last_passage_cdf(&m, &e, b, tt)?.into()]);
                    }
                }
                LastWhat::Joint => {
                    let a_grid = parse_grid(grid.as_deref().ok_or_else(|| usage("--grid (levels a) is required for joint"))?)?;
                    tab = Table::new(&["t", "a", "density"]);
                    for &tt in &ts {
                        for &a in &a_grid {
                            tab.push(vec![tt.into(), a.into(), last_passage_joint_density(&m, &e, b, tt, a)?.into()]);
                        }
                    }
                }
                LastWhat::Overshoot => {
                    let ys = match grid.as_deref() {
                        Some(g) => parse_grid(g)?,
                        None => (0..20).map(|k| b * k as f64 / 20.0).collect(),
                    };
                    tab = Table::new(&["delta", "y", "bracket", "mass"]);
                    for &d in &deltas {
                        let s = scale_auto(&m, d, ScaleGrid::new(b / 512.0, b)?)?;
                        let mass = last_passage_overshoot_mass(&m, &s, &e, b)?;
                        for &y in &ys {
                            tab.push(vec![d.into(), y.into(), overshoot_bracket(&m, &s, b - y)?.into(), mass.into()]);
                        }
                    }
                }
                LastWhat::Reflected => {
                    tab = Table::new(&["delta", "transform"]);
                    for &d in &deltas {
                        if !(d > 0.0) {
                            return Err(usage("reflected transform needs delta > 0"));
                        }
                        let a_max = b + 40.0 / e.rho0;
                        let phi = match m.kind() {
                            levy_passage::ModelKind::BrownianDrift | levy_passage::ModelKind::PerturbedCompoundPoissonPh => {
                                closed_form_passage(&m, d, ScaleGrid::new(a_max / 8192.0, a_max)?)?
                            }
                            _ => pk_series_transform(&m, d, &PenaltySpec::One, ScaleGrid::new(a_max / 8192.0, a_max)?, DEFAULT_K_MAX)?,
                        };
                        tab.push(vec![d.into(), reflected_last_passage_transform(&e, &phi, b)?.into()]);
                    }
                }
            }
            let man = RunManifest::new(
                "last-passage",
                Some(&m),
                json!({"b": b, "t": ts, "delta": deltas, "what": format!("{what:?}").to_lowercase()}),
                None,
            );
            emit_table(out.as_deref(), &man, &tab)
        }
        Command::Reflected {
            model,
            delta,
            b,
            grid_y,
            grid_z,
            out,
        } => {
            let m = load_model(&model)?;
            let s = scale_auto(&m, delta, ScaleGrid::new(b / 1024.0, b)?)?;
            let k = ReflectedPassageKernel::new(&s, b)?;
            let mut t = Table::new(&["y", "z", "density"]);
            for y in parse_grid(&grid_y)? {
                for z in parse_grid(&grid_z)? {
                    t.push(vec![y.into(), z.into(), reflected_passage_density(&m, &k, y, z)?.into()]);
                }
            }
            let man = RunManifest::new("reflected", Some(&m), json!({"delta": delta, "b": b}), None);
            emit_table(out.as_deref(), &man, &t)
        }
        Command::Duality { model, b, t, sim, out } => {
            let m = load_model(&model)?;
            let cfg = sim_config(&sim)?;
            let mut tab = Table::new(&["b", "t", "reflected", "reflected_se", "passage", "passage_se"]);
            let grid = levy_passage::mc::duality_grid(&m, &cfg, &parse_grid(&b)?, &parse_grid(&t)?)?;
            for (bb, tt, r, p) in grid {
                tab.push(vec![bb.into(), tt.into(), r.estimate.into(), r.std_error.into(), p.estimate.into(), p.std_error.into()]);
            }
            let man = RunManifest::new("duality", Some(&m), json!({"paths": sim.paths, "dt": sim.dt}), Some(sim.seed));
            emit_table(out.as_deref(), &man, &tab)
        }
        Command::Maintenance {
            model,
            policy,
            what,
            i_max,
            z,
            grid,
            points,
            sim,
            out,
        } => {
            let m = load_model(&model)?;
            let p = load_policy(&policy)?;
            let kernels = PolicyKernels::new(&m, p)?;
            let params = json!({"policy": p.to_json(), "what": format!("{what:?}").to_lowercase(), "i_max": i_max, "z": z});
            let mut tab;
            match what {
                MaintWhat::Kernels => {
                    let ys = match grid.as_deref() {
                        Some(g) => parse_grid(g)?,
                        None => (0..=20).map(|k| p.b * k as f64 / 20.0).collect(),
                    };
                    tab = Table::new(&["y", "C", "A_mass", "above_threshold"]);
                    for y in ys {
                        let flag = if y > p.b { "yes" } else { "no" };
                        tab.push(vec![y.into(), kernels.c(y)?.into(), kernels.a_mass(y)?.into(), flag.into()]);
                    }
                }
                MaintWhat::Joint | MaintWhat::Expected | MaintWhat::Idle => {
                    let chain = KernelChain::with_points(kernels, points)?;
                    let law = chain.joint_law_i_states(i_max)?;
                    match what {
                        MaintWhat::Idle => {
                            let idle = chain.joint_law_idle(i_max, z)?;
                            tab = Table::new(&["i", "z", "p_idle_exceeds_and_i"]);
                            for (k, v) in idle.iter().enumerate() {
                                tab.push(vec![(k + 1).into(), z.into(), (*v).into()]);
                            }
                        }
                        _ => {
                            tab = Table::new(&["i", "p_i", "expected_t_star_and_i"]);
                            for l in &law {
                                tab.push(vec![l.i.into(), l.p_i.into(), l.expected_time.into()]);
                            }
                        }
                    }
                }
                MaintWhat::Simulate => {
                    let cfg = sim_config(&sim)?;
                    let s = simulate_policy(&m, &p, &cfg)?;
                    tab = Table::new(&["quantity", "i", "estimate", "se"]);
                    for i in 1..=i_max {
                        let r = s.p_i(i);
                        tab.push(vec!["p_i".into(), i.into(), r.estimate.into(), r.std_error.into()]);
                    }
                    let r = s.mean_t_star();
                    tab.push(vec!["mean_t_star".into(), 0usize.into(), r.estimate.into(), r.std_error.into()]);
                    let r = s.mean_idle();
                    tab.push(vec!["mean_idle".into(), 0usize.into(), r.estimate.into(), r.std_error.into()]);
                }
            }
            let seed = (what == MaintWhat::Simulate).then_some(sim.seed);
            let man = RunManifest::new("maintenance", Some(&m), params, seed);
            emit_table(out.as_deref(), &man, &tab)
        }
        Command::Simulate {
            model,
            target,
            b,
            t,
            delta,
            policy,
            sim,
            out,
        } => {
            let m = load_model(&model)?;
            let cfg = sim_config(&sim)?;
            let needs = |name: &str| usage(format!("--{name} is required for this target"));
            let r = match target {
                Target::First => {
                    let f = match (t, delta) {
                        (Some(t), _) => FirstFunctional::CdfAt(t),
                        (None, Some(d)) => FirstFunctional::LaplaceAt(d),
                        _ => return Err(needs("t or --delta")),
                    };
                    estimate_first_passage(&m, &cfg, b, f)?
                }
                Target::ReflectedFirst => {
                    let s = simulate_reflected_first_passage(&m, &cfg, b)?;
                    match (t, delta) {
                        (Some(t), _) => first_passage_result(&s, FirstFunctional::CdfAt(t)),
                        (None, Some(d)) => first_passage_result(&s, FirstFunctional::LaplaceAt(d)),
                        _ => return Err(needs("t or --delta")),
                    }
                }
                Target::Last | Target::ReflectedLast => {
                    let mode = LastPassageMode::Escape(Escape::new(&m)?);
                    let f = match (t, delta) {
                        (Some(t), _) => LastFunctional::CdfAt(t),
                        (None, Some(d)) => LastFunctional::LaplaceAt(d),
                        _ => return Err(needs("t or --delta")),
                    };
                    let s = simulate_last_passage(&m, &cfg, b, mode, target == Target::ReflectedLast)?;
                    last_passage_result(&s, f)
                }
                Target::Policy => {
                    let p = load_policy(policy.as_deref().ok_or_else(|| needs("policy"))?)?;
                    simulate_policy(&m, &p, &cfg)?.mean_t_star()
                }
            };
            let man = RunManifest::new(
                "simulate",
                Some(&m),
                json!({"target": format!("{target:?}"), "b": b, "t": t, "delta": delta, "paths": sim.paths, "dt": sim.dt}),
                Some(sim.seed),
            );
            emit_json(out.as_deref(), &man, sim_json(&r))
        }
        Command::Validate { quick, seed, models, out } => {
            let list: Vec<(String, ModelSpec)> = if models.is_empty() {
                builtin::models()?
            } else {
                models
                    .iter()
                    .map(|p| Ok((p.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned()), load_model(p)?)))
                    .collect::<CliResult<_>>()?
            };
            let rows = run_suites(&list, &SuiteConfig { quick, seed })?;
            let man = RunManifest::new("validate", None, json!({"quick": quick, "models": list.iter().map(|m| &m.0).collect::<Vec<_>>()}), Some(seed));
            let table = rows_to_table(&rows);
            emit_table(out.as_deref(), &man, &table)?;
            if out.is_some() {
                for r in &rows {
                    eprintln!("{:<5} {:<18} {}", if r.pass { "PASS" } else { "FAIL" }, r.model, r.suite);
                }
            }
            if rows.iter().all(|r| r.pass) {
                Ok(())
            } else {
                Err(CliError::Numeric(Error::Domain(format!(
                    "{} of {} checks failed",
                    rows.iter().filter(|r| !r.pass).count(),
                    rows.len()
                ))))
            }
        }
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("LEVY_PASSAGE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| usage(format!("LEVY_PASSAGE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = configure_threads().and_then(|_| run(cli));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
