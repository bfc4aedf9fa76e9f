//! `redmf` command-line front end.
//!
//! Exit codes: 0 on success, 2 on argument or scenario errors, 1 on
//! numerical failures. Every CSV written carries a header row, and output is
//! byte-identical for identical inputs.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use redmf::equilibrium::{solve_equilibrium, EquilibriumOutcome};
use redmf::model::{LossModel, NetworkParams, RedConfig, WindowDistribution};
use redmf::oracle::{default_burn_in, run_oracle};
use redmf::scenario::parse_scenario;
use redmf::sim::{InitCondition, SimConfig, Simulator};
use redmf::stability::{analyze_stability, analyze_with_epsilon, tune_red, StabilityReport};
use redmf::steady::{default_n_max, solve_steady, taylor_mass};
use redmf::{Error, Scenario64};

#[derive(Parser)]
#[command(
    name = "redmf",
    version,
    about = "Mean-field fluid model of TCP flows through a RED or drop-tail bottleneck",
    long_about = "Mean-field fluid model of TCP flows through a RED or drop-tail bottleneck.\n\
                  Subcommands compute the closed-form steady-state window distribution,\n\
                  solve the network operating point, evaluate stability and tuning\n\
                  criteria, integrate the delayed fluid equations in time, sweep load\n\
                  levels, and cross-check against a per-flow Monte Carlo chain."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form steady-state window distribution at a fixed loss probability
    #[command(after_help = "CSV columns (--out): w (window midpoint, packets), \
                            density (probability per unit window).\n\
                            The mass pinned at the window cap is the stdout line M.")]
    SteadyState {
        /// Per-packet loss probability, in [0, 1)
        #[arg(long)]
        k: f64,
        /// Window cap (packets)
        #[arg(long, default_value_t = 64.0)]
        wmax: f64,
        /// Grid cells for the CSV density (power of two)
        #[arg(long, default_value_t = 1024)]
        cells: usize,
        /// Write the gridded density as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the RED operating point of a scenario
    #[command(after_help = "CSV columns (--out): name, value. One row per state \
                            variable and per residual of the balance equalities.")]
    Equilibrium {
        /// Scenario file
        #[arg(long)]
        scenario: PathBuf,
        /// Also write the table as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stability verdicts and explicit roots at a scenario's operating point
    Stability {
        /// Scenario file
        #[arg(long)]
        scenario: PathBuf,
        /// Override the RED p_max before solving
        #[arg(long, conflicts_with = "epsilon")]
        pmax: Option<f64>,
        /// Analyze this ramp slope (1/s) instead of the scenario's
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// RED parameters stable at every load level comfortably past onset
    #[command(after_help = "The bound is load-independent but inherits the closed forms' \
                            blind spot: loads barely past the congestion onset (most \
                            flows pinned at the window cap) can keep a slow escape mode. \
                            Check `stability` per load level there.")]
    Tune {
        /// Scenario file
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Integrate the delayed fluid equations in time
    #[command(after_help = "CSV columns (--out): t (s), queue (s), avg_queue (s), \
                            mean_window (packets), mass_at_cap, b_in (pkt/s per \
                            user), b_out (pkt/s per user), loss_prob, utilization.\n\
                            Default start: the scenario's own operating point (RED), \
                            or the loss model's k (constant loss); drop-tail needs \
                            --k0 or --cold.")]
    Simulate {
        /// Scenario file
        #[arg(long)]
        scenario: PathBuf,
        /// Stop time (seconds); overrides run.t_end_s
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Write the sampled trace as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start with every flow at one packet in flight
        #[arg(long)]
        cold: bool,
        /// Warm start from the steady state at this loss probability
        #[arg(long, conflicts_with = "cold")]
        k0: Option<f64>,
        /// Initial queueing delay (seconds)
        #[arg(long)]
        q0: Option<f64>,
        /// Window grid cells (power of two); overrides run.grid_cells
        #[arg(long)]
        cells: Option<usize>,
        /// CFL number in (0, 1]; overrides run.courant
        #[arg(long)]
        courant: Option<f64>,
        /// Average utilization from this time onward (seconds)
        #[arg(long = "measure-from", default_value_t = 0.0)]
        measure_from: f64,
        /// Trace sampling period (seconds); overrides run.output_dt_s
        #[arg(long = "out-dt")]
        out_dt: Option<f64>,
    },
    /// Repeat simulations (or analytic verdicts) across load levels
    #[command(after_help = "Simulation CSV columns: n_users, utilization, queue_min \
                            (s), queue_max (s), queue_mean (s), measured over \
                            [measure-from, t-end].\n\
                            With --pmax-grid the sweep is analytic instead; columns: \
                            n_users, p_max, outcome, q_e (s), k_e, damping_u, \
                            max_root_real (1/s), roots_negative, \
                            sufficient_slope_bound, universal_bound.\n\
                            REDMF_THREADS caps worker threads. Without --k0 each run \
                            warm-starts from a load-dependent loss guess \
                            (0.0005 below 35 users, 0.002 below 70, 0.004 above).")]
    Sweep {
        /// Scenario file (n_users is replaced per run)
        #[arg(long)]
        scenario: PathBuf,
        /// Inclusive user range, e.g. 25..130
        #[arg(long)]
        users: String,
        /// Stride through the user range
        #[arg(long, default_value_t = 5)]
        step: u32,
        /// Comma-separated p_max values; switches to the analytic verdict sweep
        #[arg(long = "pmax-grid")]
        pmax_grid: Option<String>,
        /// Stop time per run (seconds)
        #[arg(long = "t-end", default_value_t = 20.0)]
        t_end: f64,
        /// Average utilization from this time onward (seconds)
        #[arg(long = "measure-from", default_value_t = 4.0)]
        measure_from: f64,
        /// Warm-start loss probability for every run
        #[arg(long)]
        k0: Option<f64>,
        /// Initial queueing delay for every run (seconds)
        #[arg(long, default_value_t = 1e-3)]
        q0: f64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-flow Monte Carlo cross-check of the steady state
    #[command(after_help = "CSV columns (--out): w (window midpoint, packets), \
                            density (probability per unit window).")]
    Oracle {
        /// Per-packet loss probability, in [0, 1)
        #[arg(long)]
        k: f64,
        /// Window cap (packets)
        #[arg(long, default_value_t = 64.0)]
        wmax: f64,
        /// Histogram cells
        #[arg(long, default_value_t = 128)]
        cells: usize,
        /// Independent flows (split of the event budget)
        #[arg(long)]
        flows: u32,
        /// Total events after burn-in
        #[arg(long)]
        events: u64,
        /// RNG seed; identical seeds give identical output
        #[arg(long)]
        seed: u64,
        /// Burn-in events per flow (default scales with wmax^2)
        #[arg(long = "burn-in")]
        burn_in: Option<u64>,
        /// Write the histogram density as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite (delegates to cargo)
    Validate,
}

enum CliError {
    Lib(Error),
    Read(PathBuf, std::io::Error),
    Write(PathBuf, std::io::Error),
    Acceptance(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Read(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            CliError::Write(p, e) => write!(f, "cannot write {}: {e}", p.display()),
            CliError::Acceptance(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            // Bad inputs (arguments, files, scenario text) follow usage
            // errors; everything that failed while computing is 1.
            CliError::Lib(Error::InvalidParameter(_)) => 2,
            CliError::Lib(Error::ScenarioParse { .. }) => 2,
            CliError::Lib(Error::Numeric(_)) => 1,
            CliError::Read(..) => 2,
            CliError::Write(..) => 1,
            CliError::Acceptance(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    // Die quietly when a pipe closes (e.g. `redmf ... | head`) instead of
    // panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::SteadyState { k, wmax, cells, out } => steady_state(k, wmax, cells, out),
        Cmd::Equilibrium { scenario, out } => equilibrium(&scenario, out),
        Cmd::Stability {
            scenario,
            pmax,
            epsilon,
        } => stability(&scenario, pmax, epsilon),
        Cmd::Tune { scenario } => tune(&scenario),
        Cmd::Simulate {
            scenario,
            t_end,
            out,
            cold,
            k0,
            q0,
            cells,
            courant,
            measure_from,
            out_dt,
        } => simulate(
            &scenario,
            t_end,
            out,
            cold,
            k0,
            q0,
            cells,
            courant,
            measure_from,
            out_dt,
        ),
        Cmd::Sweep {
            scenario,
            users,
            step,
            pmax_grid,
            t_end,
            measure_from,
            k0,
            q0,
            out,
        } => sweep(
            &scenario,
            &users,
            step,
            pmax_grid.as_deref(),
            t_end,
            measure_from,
            k0,
            q0,
            &out,
        ),
        Cmd::Oracle {
            k,
            wmax,
            cells,
            flows,
            events,
            seed,
            burn_in,
            out,
        } => oracle(k, wmax, cells, flows, events, seed, burn_in, out),
        Cmd::Validate => validate(),
    }
}

fn load_scenario(path: &PathBuf) -> Result<Scenario64, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Read(path.clone(), e))?;
    Ok(parse_scenario(&text)?)
}

fn red_config(loss: &LossModel<f64>) -> Result<&RedConfig<f64>, CliError> {
    match loss {
        LossModel::Red { config, .. } => Ok(config),
        other => Err(CliError::Lib(Error::InvalidParameter(format!(
            "this operation needs a RED scenario, got {other:?}"
        )))),
    }
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Write(path.clone(), e))
}

fn density_csv(dist: &WindowDistribution<f64>) -> String {
    let mut csv = String::from("w,density\n");
    for (j, p) in dist.density().iter().enumerate() {
        csv.push_str(&format!("{},{}\n", dist.cell_center(j), p));
    }
    csv
}

fn steady_state(k: f64, wmax: f64, cells: usize, out: Option<PathBuf>) -> Result<(), CliError> {
    let st = solve_steady(k, wmax, default_n_max(wmax))?;
    println!("k {k}");
    println!("w_max {wmax}");
    println!("M {}", st.mass_at_cap());
    println!("mean {}", st.mean());
    println!("second_moment {}", st.second_moment());
    println!("taylor_mass {}", taylor_mass(k, wmax));
    if k > 0.0 {
        let theta = k * wmax * wmax * 0.5;
        println!("taylor_ratio {}", st.mass_at_cap().ln() / -theta);
    }
    if let Some(path) = out {
        write_file(&path, &density_csv(&st.to_distribution(cells)?))?;
    }
    Ok(())
}

/// (name, value) rows for a congested operating point plus the residuals of
/// its defining equalities.
fn equilibrium_rows(
    state: &redmf::EquilibriumState64,
    params: &NetworkParams<f64>,
    red: &RedConfig<f64>,
) -> Vec<(&'static str, f64)> {
    let c = params.capacity_per_user;
    vec![
        ("q_e", state.q_e),
        ("k_e", state.k_e),
        ("r_e", state.r_e),
        ("f_e", state.f_e),
        ("f2_e", state.f2_e),
        ("m_e", state.m_e),
        ("b_i_e", state.b_i_e),
        ("b_o_e", state.b_o_e),
        ("a_e", state.a_e),
        ("capacity_per_user", c),
        ("residual_departure", state.b_o_e - c),
        ("residual_rtt", state.r_e - (params.prop_delay + state.q_e)),
        ("residual_arrival_window", state.b_i_e - state.f_e / state.r_e),
        ("residual_arrival_loss", state.b_i_e - c / (1.0 - state.k_e)),
        ("residual_advance", state.a_e - 1.0 / state.r_e),
        (
            "residual_second_moment",
            state.f2_e - 2.0 * (1.0 - state.m_e) / state.k_e,
        ),
        ("residual_ramp", state.k_e - red.drop_probability(state.q_e)),
    ]
}

fn equilibrium(path: &PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let sc = load_scenario(path)?;
    let red = red_config(&sc.loss)?.clone();
    let rows: Vec<(&'static str, f64)> = match solve_equilibrium(&sc.params, &sc.loss)? {
        EquilibriumOutcome::Congested(state) => {
            println!("outcome congested");
            equilibrium_rows(&state, &sc.params, &red)
        }
        EquilibriumOutcome::NoCongestion { queue } => {
            println!("outcome no_congestion");
            vec![("queue", queue)]
        }
        EquilibriumOutcome::RampSaturated { residual_at_max } => {
            println!("outcome ramp_saturated");
            vec![("residual_at_max", residual_at_max)]
        }
    };
    for (name, value) in &rows {
        println!("{name} {value}");
    }
    if let Some(path) = out {
        let mut csv = String::from("name,value\n");
        for (name, value) in &rows {
            csv.push_str(&format!("{name},{value}\n"));
        }
        write_file(&path, &csv)?;
    }
    Ok(())
}

fn congested_or_fail(sc: &Scenario64) -> Result<redmf::EquilibriumState64, CliError> {
    match solve_equilibrium(&sc.params, &sc.loss)? {
        EquilibriumOutcome::Congested(state) => Ok(state),
        other => Err(CliError::Lib(Error::Numeric(format!(
            "stability analysis needs a congested operating point; solver reported {other:?}"
        )))),
    }
}

fn print_report(report: &StabilityReport<f64>) {
    println!("epsilon {}", report.epsilon);
    println!("y {}", report.coefficients.y);
    println!("damping_u {}", report.coefficients.u);
    println!("a {}", report.coefficients.a);
    println!("b {}", report.coefficients.b);
    println!("c {}", report.coefficients.c);
    for (i, root) in report.roots.all().iter().enumerate() {
        println!("root_{} {} {}", i + 1, root.re, root.im);
    }
    println!("max_root_real {}", report.roots.max_real());
    for (i, x) in report.x.iter().enumerate() {
        println!("window_amplitude_{} {} {}", i + 1, x.re, x.im);
    }
    println!("small_phi {}", report.small_phi);
    println!("small_phi_ok {}", report.small_phi_ok);
    println!("verdict_roots_negative {}", report.verdicts.roots_negative);
    println!(
        "verdict_sufficient_slope_bound {}",
        report.verdicts.sufficient_slope_bound
    );
    println!("verdict_weak_damping {}", report.verdicts.weak_damping);
    match report.verdicts.uncapped_bound {
        Some(v) => println!("verdict_uncapped_bound {v}"),
        None => println!("verdict_uncapped_bound out_of_range"),
    }
    println!("verdict_universal_bound {}", report.verdicts.universal_bound);
    println!("eps_slope_bound {}", report.thresholds.eps_slope_bound);
    match report.thresholds.eps_uncapped {
        Some(v) => println!("eps_uncapped {v}"),
        None => println!("eps_uncapped out_of_range"),
    }
    println!("eps_universal {}", report.thresholds.eps_universal);
    println!("p_max_universal {}", report.thresholds.p_max_universal);
}

fn stability(path: &PathBuf, pmax: Option<f64>, epsilon: Option<f64>) -> Result<(), CliError> {
    let mut sc = load_scenario(path)?;
    if let Some(p) = pmax {
        sc = sc.with_p_max(p)?;
    }
    let red = red_config(&sc.loss)?.clone();
    let eq = congested_or_fail(&sc)?;
    println!("q_e {}", eq.q_e);
    println!("k_e {}", eq.k_e);
    println!("f_e {}", eq.f_e);
    println!("m_e {}", eq.m_e);
    let report = match epsilon {
        Some(e) => analyze_with_epsilon(&sc.params, &red, &eq, e)?,
        None => analyze_stability(&sc.params, &red, &eq)?,
    };
    print_report(&report);
    Ok(())
}

fn tune(path: &PathBuf) -> Result<(), CliError> {
    let sc = load_scenario(path)?;
    let red = red_config(&sc.loss)?;
    let t = tune_red(
        sc.params.prop_delay,
        sc.params.buffer_delay,
        red.min_th,
        sc.params.w_max,
    )?;
    println!("beta {}", t.beta);
    println!("gamma {}", t.gamma);
    println!("p_max_bound {}", t.p_max_bound);
    println!("epsilon_bound {}", t.epsilon_bound);
    println!("alpha_sq {}", t.alpha_sq);
    Ok(())
}

/// Default warm-start loss guess for a given load, used when no explicit
/// k0 is provided and no RED operating point is available.
fn k0_guess(n_users: u32) -> f64 {
    if n_users < 35 {
        0.0005
    } else if n_users < 70 {
        0.002
    } else {
        0.004
    }
}

fn initial_condition(
    sc: &Scenario64,
    cold: bool,
    k0: Option<f64>,
    q0: Option<f64>,
) -> Result<InitCondition<f64>, CliError> {
    if cold {
        return Ok(InitCondition::ColdStart {
            q0: q0.unwrap_or(0.0),
        });
    }
    if let Some(k0) = k0 {
        return Ok(InitCondition::WarmAnalytic {
            k0,
            q0: q0.unwrap_or(1e-3),
        });
    }
    match &sc.loss {
        LossModel::Red { .. } => match solve_equilibrium(&sc.params, &sc.loss)? {
            EquilibriumOutcome::Congested(state) => Ok(InitCondition::WarmAnalytic {
                k0: state.k_e,
                q0: q0.unwrap_or(state.q_e),
            }),
            other => Err(CliError::Lib(Error::InvalidParameter(format!(
                "scenario has no congested operating point ({other:?}); \
                 pass --k0 or --cold to choose a start"
            )))),
        },
        LossModel::ConstantLoss { k } => Ok(InitCondition::WarmAnalytic {
            k0: *k,
            q0: q0.unwrap_or(0.0),
        }),
        LossModel::DropTail => Err(CliError::Lib(Error::InvalidParameter(
            "drop-tail has no analytic operating point; pass --k0 or --cold".into(),
        ))),
    }
}

fn sim_config(
    sc: &Scenario64,
    t_end: Option<f64>,
    cells: Option<usize>,
    courant: Option<f64>,
    measure_from: f64,
    out_dt: Option<f64>,
) -> Result<SimConfig<f64>, CliError> {
    let t_end = t_end.or(sc.run.t_end).ok_or_else(|| {
        CliError::Lib(Error::InvalidParameter(
            "no stop time: pass --t-end or set run.t_end_s in the scenario".into(),
        ))
    })?;
    let mut config = SimConfig::new(t_end);
    config.grid_cells = cells.or(sc.run.grid_cells).unwrap_or(config.grid_cells);
    config.courant = courant.or(sc.run.courant).unwrap_or(config.courant);
    config.output_interval = out_dt.or(sc.run.output_dt).unwrap_or(config.output_interval);
    config.measure_from = measure_from;
    Ok(config)
}

fn trace_csv(result: &redmf::sim::SimResult<f64>) -> String {
    let mut csv = String::from(
        "t,queue,avg_queue,mean_window,mass_at_cap,b_in,b_out,loss_prob,utilization\n",
    );
    for row in &result.trace {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.t,
            row.queue,
            row.avg_queue,
            row.mean_window,
            row.mass_at_cap,
            row.b_in,
            row.b_out,
            row.loss_prob,
            row.utilization
        ));
    }
    csv
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    path: &PathBuf,
    t_end: Option<f64>,
    out: Option<PathBuf>,
    cold: bool,
    k0: Option<f64>,
    q0: Option<f64>,
    cells: Option<usize>,
    courant: Option<f64>,
    measure_from: f64,
    out_dt: Option<f64>,
) -> Result<(), CliError> {
    let sc = load_scenario(path)?;
    let config = sim_config(&sc, t_end, cells, courant, measure_from, out_dt)?;
    let init = initial_condition(&sc, cold, k0, q0)?;
    let t_stop = config.t_end;
    let mut sim = Simulator::new(&sc.params, &sc.loss, config, init)?;
    let result = sim.run()?;
    println!("t_end {t_stop}");
    println!("steps {}", result.steps);
    println!("utilization {}", result.utilization);
    println!("max_mass_drift {}", result.max_mass_drift);
    println!("final_queue {}", sim.queue());
    println!("final_mean_window {}", sim.mean_window());
    println!("final_mass_at_cap {}", sim.mass_at_cap());
    if let Some(path) = out {
        write_file(&path, &trace_csv(&result))?;
    }
    Ok(())
}

fn parse_users(spec: &str) -> Result<(u32, u32), CliError> {
    let invalid = || {
        CliError::Lib(Error::InvalidParameter(format!(
            "users range must look like a..b with 1 <= a <= b, got {spec:?}"
        )))
    };
    let (a, b) = spec.split_once("..").ok_or_else(invalid)?;
    let a: u32 = a.trim().parse().map_err(|_| invalid())?;
    let b: u32 = b.trim().parse().map_err(|_| invalid())?;
    if a == 0 || a > b {
        return Err(invalid());
    }
    Ok((a, b))
}

fn parse_pmax_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let mut grid = Vec::new();
    for part in spec.split(',') {
        let p: f64 = part.trim().parse().map_err(|_| {
            CliError::Lib(Error::InvalidParameter(format!(
                "pmax-grid entries must be numbers, got {part:?}"
            )))
        })?;
        grid.push(p);
    }
    Ok(grid)
}

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("REDMF_THREADS") {
        let n: usize = raw.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::Lib(Error::InvalidParameter(format!(
                "REDMF_THREADS must be a positive integer, got {raw:?}"
            )))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Lib(Error::Numeric(format!("cannot build worker pool: {e}"))))
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    path: &PathBuf,
    users: &str,
    step: u32,
    pmax_grid: Option<&str>,
    t_end: f64,
    measure_from: f64,
    k0: Option<f64>,
    q0: f64,
    out: &PathBuf,
) -> Result<(), CliError> {
    let sc = load_scenario(path)?;
    let (lo, hi) = parse_users(users)?;
    if step == 0 {
        return Err(CliError::Lib(Error::InvalidParameter(
            "step must be positive".into(),
        )));
    }
    let loads: Vec<u32> = (lo..=hi).step_by(step as usize).collect();
    let csv = match pmax_grid {
        Some(spec) => verdict_sweep(&sc, &loads, &parse_pmax_grid(spec)?)?,
        None => {
            use rayon::prelude::*;
            let pool = worker_pool()?;
            let rows: Result<Vec<String>, Error> = pool.install(|| {
                loads
                    .par_iter()
                    .map(|&n| simulate_one_load(&sc, n, t_end, measure_from, k0, q0))
                    .collect()
            });
            let mut csv =
                String::from("n_users,utilization,queue_min,queue_max,queue_mean\n");
            for row in rows? {
                csv.push_str(&row);
            }
            csv
        }
    };
    write_file(out, &csv)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn simulate_one_load(
    sc: &Scenario64,
    n: u32,
    t_end: f64,
    measure_from: f64,
    k0: Option<f64>,
    q0: f64,
) -> Result<String, Error> {
    let sc = sc.with_n_users(n)?;
    let mut config = SimConfig::new(t_end);
    config.grid_cells = sc.run.grid_cells.unwrap_or(512);
    config.courant = sc.run.courant.unwrap_or(0.5);
    config.measure_from = measure_from;
    let init = InitCondition::WarmAnalytic {
        k0: k0.unwrap_or_else(|| k0_guess(n)),
        q0,
    };
    let mut sim = Simulator::new(&sc.params, &sc.loss, config, init)?;
    let result = sim.run()?;
    let (mut q_min, mut q_max, mut q_sum, mut samples) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0u64);
    for row in result.trace.iter().filter(|r| r.t >= measure_from) {
        q_min = q_min.min(row.queue);
        q_max = q_max.max(row.queue);
        q_sum += row.queue;
        samples += 1;
    }
    let q_mean = if samples > 0 { q_sum / samples as f64 } else { 0.0 };
    if samples == 0 {
        (q_min, q_max) = (0.0, 0.0);
    }
    Ok(format!(
        "{n},{},{q_min},{q_max},{q_mean}\n",
        result.utilization
    ))
}

fn verdict_sweep(sc: &Scenario64, loads: &[u32], grid: &[f64]) -> Result<String, CliError> {
    let mut csv = String::from(
        "n_users,p_max,outcome,q_e,k_e,damping_u,max_root_real,roots_negative,\
         sufficient_slope_bound,universal_bound\n",
    );
    for &n in loads {
        for &p_max in grid {
            let sc = sc.with_n_users(n)?.with_p_max(p_max)?;
            let red = red_config(&sc.loss)?.clone();
            match solve_equilibrium(&sc.params, &sc.loss)? {
                EquilibriumOutcome::Congested(eq) => {
                    let report = analyze_stability(&sc.params, &red, &eq)?;
                    csv.push_str(&format!(
                        "{n},{p_max},congested,{},{},{},{},{},{},{}\n",
                        eq.q_e,
                        eq.k_e,
                        report.coefficients.u,
                        report.roots.max_real(),
                        report.verdicts.roots_negative,
                        report.verdicts.sufficient_slope_bound,
                        report.verdicts.universal_bound
                    ));
                }
                EquilibriumOutcome::NoCongestion { .. } => {
                    csv.push_str(&format!("{n},{p_max},no_congestion,,,,,,,\n"));
                }
                EquilibriumOutcome::RampSaturated { .. } => {
                    csv.push_str(&format!("{n},{p_max},ramp_saturated,,,,,,,\n"));
                }
            }
        }
    }
    Ok(csv)
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    k: f64,
    wmax: f64,
    cells: usize,
    flows: u32,
    events: u64,
    seed: u64,
    burn_in: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let burn = burn_in.unwrap_or_else(|| default_burn_in(wmax));
    let mc = run_oracle(k, wmax, cells, flows, events, burn, seed)?;
    println!("k {k}");
    println!("w_max {wmax}");
    println!("events {}", mc.events);
    println!("mean {}", mc.mean);
    println!("second_moment {}", mc.second_moment);
    println!("mass_at_cap {}", mc.mass_at_cap);
    println!("thin_cells {}", mc.insufficient_cells.len());
    if let Some(path) = out {
        write_file(&path, &density_csv(&mc.histogram))?;
    }
    Ok(())
}

fn validate() -> Result<(), CliError> {
    println!("running the acceptance suite (cargo test -p redmf-cli --test acceptance)");
    let status = std::process::Command::new("cargo")
        .args([
            "test",
            "-p",
            "redmf-cli",
            "--test",
            "acceptance",
            "--",
            "--nocapture",
            "--test-threads=1",
        ])
        .status()
        .map_err(|e| {
            CliError::Acceptance(format!(
                "cannot launch cargo ({e}); from a source checkout run: \
                 cargo test -p redmf-cli --test acceptance -- --nocapture"
            ))
        })?;
    if status.success() {
        println!("acceptance suite passed");
        Ok(())
    } else {
        Err(CliError::Acceptance(
            "acceptance suite reported failures".into(),
        ))
    }
}
