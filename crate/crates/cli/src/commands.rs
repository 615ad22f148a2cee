use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lienet::equilibria::{self, EnergyCasimirReport, EquilibriumRecord};
use lienet::exec::Execution;
use lienet::statmech::{MeanFieldConfig, MeanFieldSolution, meanfield_ht, meanfield_rb};
use lienet::sweep::{self, OrbitLevels, SweepResult};
use lienet::{Coupling, Network, integrate};
use serde::Serialize;

use crate::config::{self, Config, MeanFieldSection};
use crate::output::{self, Manifest};
use crate::{Cli, CliError, Command};

/// Mixed into the seed used for initial states so they are not correlated
/// with the noise streams.
const INITIAL_SEED_SALT: u64 = 0x1a5e_0f0c_a11e_d5ee;

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let threads = configure_threads(cli.threads)?;
    if let Command::Detect { input, column } = &cli.command {
        return detect(cli, input.as_deref(), column);
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = config::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = Context { cfg: &cfg, base, seed, threads, out: cli.out_dir.clone(), started: Instant::now() };
    // Validate the network before creating any output.
    let net = cfg.network.build(&ctx.base)?;
    std::fs::create_dir_all(&ctx.out)?;
    match cli.command {
        Command::Simulate => simulate(&ctx, &net),
        Command::Equilibria => equilibria(&ctx, &net, false),
        Command::Stability => equilibria(&ctx, &net, true),
        Command::Meanfield => meanfield(&ctx, &net),
        Command::Sweep => sweep(&ctx, &net),
        Command::Detect { .. } => unreachable!(),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<usize, CliError> {
    if threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(1)
    }
}

struct Context<'a> {
    cfg: &'a Config,
    base: PathBuf,
    seed: u64,
    threads: usize,
    out: PathBuf,
    started: Instant,
}

impl Context<'_> {
    fn manifest(&self, dir: &Path, command: &str, outputs: Vec<PathBuf>) -> Result<(), CliError> {
        let now = chrono::Utc::now();
        let elapsed = self.started.elapsed();
        let started = now - chrono::Duration::from_std(elapsed).unwrap_or_default();
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            threads: self.threads,
            parallel: cfg!(feature = "parallel"),
            started: started.to_rfc3339(),
            finished: now.to_rfc3339(),
            wall_time_s: elapsed.as_secs_f64(),
            config: self.cfg,
            outputs,
        };
        output::write_json(&dir.join("manifest.json"), &m)
    }
}

fn simulate(ctx: &Context, net: &Network) -> Result<(), CliError> {
    let sec = ctx.cfg.simulate.as_ref().ok_or_else(|| CliError::Config("missing [simulate] section".into()))?;
    let icfg = sec.integrator(ctx.seed)?;
    let initial = sec.initial.resolve(&ctx.base)?;
    let s0 = sweep::initial_state(net, ctx.cfg.model.coupling, &initial, &ctx.cfg.levels, ctx.seed ^ INITIAL_SEED_SALT)?;
    let traj = integrate::run(net, &s0, &icfg)?;
    let table = ctx.out.join("trajectory.csv");
    output::write_trajectory(&table, &traj)?;
    let final_state = ctx.out.join("final_state.json");
    output::write_json(&final_state, traj.final_state().expect("trajectory holds the initial state"))?;
    let initial_state = ctx.out.join("initial_state.json");
    output::write_json(&initial_state, &s0)?;
    println!(
        "simulated {} steps, {} samples; energy drift {:.3e}, Casimir drift {:.3e}",
        icfg.steps,
        traj.len(),
        traj.max_energy_drift(),
        traj.max_casimir_drift()
    );
    ctx.manifest(&ctx.out, "simulate", vec![table, initial_state, final_state])
}

#[derive(Serialize)]
struct EquilibriaDump<'a> {
    records: &'a [EquilibriumRecord],
    energy_casimir: &'a [Option<EnergyCasimirReport>],
}

fn equilibria(ctx: &Context, net: &Network, stability: bool) -> Result<(), CliError> {
    let sec = ctx.cfg.equilibria.clone().unwrap_or(config::EquilibriaSection {
        level: 1.0,
        lambda1: None,
        records: Default::default(),
        casimir_curvature: None,
    });
    let mut records = match ctx.cfg.model.coupling {
        Coupling::Momentum => equilibria::momentum_equilibria(net, sec.level)?,
        Coupling::Position => {
            let l1 = sec
                .lambda1
                .ok_or_else(|| CliError::Config("position coupling requires [equilibria] lambda1".into()))?;
            equilibria::position_equilibria(net, l1, sec.level)?
        }
    };
    let mut reports = vec![None; records.len()];
    if stability {
        equilibria::assess_stability(net, &mut records, sec.records, Execution::Parallel)?;
        // The energy-Casimir test applies to the extremal records.
        if let Some(curv) = sec.casimir_curvature {
            let last = records.len() - 1;
            for k in [0, last] {
                reports[k] = Some(match ctx.cfg.model.coupling {
                    Coupling::Momentum => equilibria::energy_casimir_momentum(net, &records[k], curv)?,
                    Coupling::Position => equilibria::energy_casimir_position(net, &records[k], curv)?,
                });
            }
        }
    }
    let json = ctx.out.join("equilibria.json");
    output::write_json(&json, &EquilibriaDump { records: &records, energy_casimir: &reports })?;
    let table = ctx.out.join("equilibria.csv");
    output::write_equilibria(&table, &records, &reports)?;
    let stable = records.iter().filter(|r| r.is_linearly_stable() == Some(true)).count();
    let assessed = records.iter().filter(|r| r.spectral_abscissa.is_some()).count();
    println!("{} equilibria; {stable} of {assessed} assessed records linearly stable", records.len());
    ctx.manifest(&ctx.out, if stability { "stability" } else { "equilibria" }, vec![json, table])
}

fn solve_meanfield(
    net: &Network,
    coupling: Coupling,
    levels: &OrbitLevels,
    temps: &[f64],
    solver: &MeanFieldConfig,
    cfg: &Config,
) -> Result<Vec<MeanFieldSolution>, CliError> {
    let (inertia, interaction) = cfg.network.uniform_tensors(net)?;
    temps
        .iter()
        .map(|&t| {
            Ok(match coupling {
                Coupling::Momentum => meanfield_rb(&inertia, &interaction, levels.radius, t, solver, Execution::Parallel)?,
                Coupling::Position => meanfield_ht(&inertia, &interaction, levels.c1, levels.c2, t, solver, Execution::Parallel)?,
            })
        })
        .collect()
}

fn meanfield(ctx: &Context, net: &Network) -> Result<(), CliError> {
    let sec = ctx.cfg.meanfield.as_ref().ok_or_else(|| CliError::Config("missing [meanfield] section".into()))?;
    let temps = sec.temperatures.values()?;
    let sols = solve_meanfield(net, ctx.cfg.model.coupling, &ctx.cfg.levels, &temps, &sec.solver(ctx.seed), ctx.cfg)?;
    let table = ctx.out.join("meanfield.csv");
    sweep::write_meanfield_csv(&sols, std::fs::File::create(&table)?)?;
    println!("solved mean field at {} temperatures", sols.len());
    ctx.manifest(&ctx.out, "meanfield", vec![table])
}

#[derive(Serialize)]
struct SweepDump<'a> {
    config: &'a lienet::sweep::SweepConfig,
    result: &'a SweepResult,
    transitions: &'a [sweep::Transition],
}

fn sweep(ctx: &Context, net: &Network) -> Result<(), CliError> {
    let sec = ctx.cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    let coupling = ctx.cfg.model.coupling;
    let runs: Vec<(PathBuf, OrbitLevels)> = match (&sec.casimir_ratios, coupling) {
        (Some(ratios), Coupling::Position) => ratios
            .iter()
            .map(|r| {
                let levels = OrbitLevels { c1: r * ctx.cfg.levels.c2, ..ctx.cfg.levels };
                (ctx.out.join(format!("ratio_{r}")), levels)
            })
            .collect(),
        (Some(_), Coupling::Momentum) => {
            return Err(CliError::Config("casimir_ratios applies to position coupling only".into()));
        }
        (None, _) => vec![(ctx.out.clone(), ctx.cfg.levels)],
    };
    for (dir, levels) in runs {
        std::fs::create_dir_all(&dir)?;
        let scfg = sec.to_config(coupling, levels, ctx.seed, &ctx.base)?;
        let result = sweep::run_sweep(net, &scfg, Execution::Parallel)?;
        let curve: Vec<f64> = result.aggregates.iter().map(|a| a.mean_magnitude).collect();
        let transitions = if result.temperatures.len() >= 3 && curve.iter().all(|v| v.is_finite()) {
            let mut order: Vec<usize> = (0..curve.len()).collect();
            order.sort_by(|&a, &b| result.temperatures[a].total_cmp(&result.temperatures[b]));
            let t: Vec<f64> = order.iter().map(|&k| result.temperatures[k]).collect();
            let v: Vec<f64> = order.iter().map(|&k| curve[k]).collect();
            sweep::detect_transitions(&t, &v).unwrap_or_default()
        } else {
            Vec::new()
        };
        let table = dir.join("sweep.csv");
        sweep::write_sweep_csv(&result, std::fs::File::create(&table)?)?;
        let json = dir.join("sweep.json");
        output::write_json(&json, &SweepDump { config: &scfg, result: &result, transitions: &transitions })?;
        let mut outputs = vec![table, json];
        if sec.meanfield {
            let mf = ctx.cfg.meanfield.clone().unwrap_or(MeanFieldSection {
                temperatures: scfg.temperatures.clone(),
                samples: 200_000,
                damping: 0.5,
                tolerance: 1e-7,
                max_iterations: 2000,
            });
            let sols = solve_meanfield(net, coupling, &levels, &result.temperatures, &mf.solver(ctx.seed), ctx.cfg)?;
            let path = dir.join("meanfield.csv");
            sweep::write_meanfield_csv(&sols, std::fs::File::create(&path)?)?;
            outputs.push(path);
        }
        let failed = result.rows.iter().filter(|r| r.observables.is_none()).count();
        let flagged = result.rows.iter().filter(|r| r.drift_flagged).count();
        println!(
            "{}: {} cells, {failed} failed, {flagged} flagged for Casimir drift, {} strong transitions",
            dir.display(),
            result.rows.len(),
            transitions.iter().filter(|t| t.strong).count()
        );
        ctx.manifest(&dir, "sweep", outputs)?;
    }
    Ok(())
}

fn detect(cli: &Cli, input: Option<&Path>, column: &str) -> Result<(), CliError> {
    let path = input.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("sweep.csv"));
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Config(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: no column `{name}`", path.display())))
    };
    let t_col = find("temperature").or_else(|_| find("T"))?;
    let v_col = find(column)?;
    let mut by_t: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
        let t: f64 = rec[t_col].parse().map_err(|_| CliError::Config(format!("bad temperature `{}`", &rec[t_col])))?;
        // Failed cells leave the value empty.
        let Ok(v) = rec[v_col].parse::<f64>() else { continue };
        let e = by_t.entry(t.to_bits()).or_insert((t, 0.0, 0));
        e.1 += v;
        e.2 += 1;
    }
    let mut points: Vec<(f64, f64)> = by_t.values().map(|&(t, s, n)| (t, s / n as f64)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let v: Vec<f64> = points.iter().map(|p| p.1).collect();
    let found = sweep::detect_transitions(&t, &v)?;
    for tr in &found {
        println!(
            "T = {:.6} ± {:.6}  slope {:.4e}  {}",
            tr.temperature,
            tr.uncertainty,
            tr.slope,
            if tr.strong { "strong" } else { "weak" }
        );
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.join("transitions.json");
    output::write_json(&out, &found)?;
    Ok(())
}
