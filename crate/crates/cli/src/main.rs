//! `amdi`: key-rate scans, parameter optimization, drift/HOM sweeps and
//! Monte Carlo validation for asynchronous MDI-QKD.
//!
//! Exit codes: 0 success, 2 nothing feasible, 3 configuration error,
//! 4 numeric failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use amdi_core::channel::fiber_transmittance;
use amdi_core::drift::{effective_misalignment, hom_curve, intrinsic_error, intrinsic_error_window_average};
use amdi_core::drift::detections_per_window;
use amdi_core::montecarlo::run_and_validate;
use amdi_core::optimizer::Candidate;
use amdi_core::{
    evaluate, optimize, Error, KeyRateResult, MatchingMode, PhaseMode, Scenario, SearchSpace, SourceConfig,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amdi", version, about = "Asynchronous MDI-QKD key-rate simulator")]
struct Cli {
    /// Scenario file (JSON). Defaults to the no-tracking preset at 300 km.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the matching mode of the scenario.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for the optimizer and the Monte Carlo run. Defaults to the
    /// scenario's optimizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Append source parameters and estimator diagnostics to the output.
    #[arg(long, global = true)]
    emit_diagnostics: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Arbitrary,
    Short,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 1 GHz, 50 μs, σ = π/10, tracked and locked.
    NoTracking,
    /// Free running, 1 GHz, 20 μs, δv = 3 kHz, fiber drift 8000 rad/s.
    Free1ghz,
    /// Free running, 4 GHz, 10 μs, δv = 10 kHz.
    Free4ghz,
    /// Free running, 10 GHz, 1 μs, δv = 100 kHz.
    Free10ghz,
    /// Arbitrary-time matching, σ = π/36, N = 1e13.
    Arbitrary,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate versus distance, one CSV row per distance.
    Scan {
        /// Total distance range in km, `START:END:STEP` (inclusive).
        #[arg(long, default_value = "100:460:10")]
        distance: String,
        /// Evaluate the scenario's own source parameters at every point.
        #[arg(long)]
        no_optimize: bool,
    },
    /// Optimize the source parameters at one distance; JSON report.
    Optimize {
        /// Total distance in km; defaults to the scenario's.
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long)]
        no_optimize: bool,
    },
    /// HOM visibility and error rate versus laser frequency offset.
    Hom {
        /// Frequency offset range in Hz, `START:END:STEP`.
        #[arg(long = "delta-v", default_value = "0:500000:10000")]
        delta_v: String,
        /// Pulse separation in seconds; defaults to the scenario's.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Interference error versus matching window for free-running lasers.
    Drift {
        /// Window range in seconds, `START:END:STEP`.
        #[arg(long, default_value = "0.000001:0.0001:0.000001")]
        window: String,
        /// Laser frequency offsets in Hz.
        #[arg(long = "delta-v", value_delimiter = ',', default_value = "1000,10000,100000")]
        delta_v: Vec<f64>,
        /// Fiber phase drift rate in rad/s.
        #[arg(long, default_value_t = 0.0)]
        fiber_rate: f64,
    },
    /// Monte Carlo run compared against the analytic model; CSV report.
    Mc {
        /// Simulated pulses; defaults to the scenario's `run.mc_pulses`.
        #[arg(long)]
        pulses: Option<u64>,
        /// Total distance in km; defaults to the scenario's.
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Print a preset scenario file.
    Config {
        #[arg(long, value_enum, default_value = "no-tracking")]
        preset: Preset,
        /// Total distance in km.
        #[arg(long, default_value_t = 300.0)]
        distance: f64,
    },
}

enum Failure {
    Infeasible(String),
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parameter(_) => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<String, Failure>;

fn preset(p: Preset, d: f64) -> Scenario {
    match p {
        Preset::NoTracking => Scenario::no_tracking(d),
        Preset::Free1ghz => Scenario::free_running(d, 1e9, 20e-6, 3e3, 8e3),
        Preset::Free4ghz => Scenario::free_running(d, 4e9, 10e-6, 1e4, 0.0),
        Preset::Free10ghz => Scenario::free_running(d, 1e10, 1e-6, 1e5, 0.0),
        Preset::Arbitrary => Scenario::arbitrary(d, 1e13),
    }
}

fn load(cli: &Cli) -> std::result::Result<Scenario, Failure> {
    let mut sc = match &cli.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::no_tracking(300.0),
    };
    if let Some(m) = cli.mode {
        sc.matching.mode = match m {
            ModeArg::Arbitrary => MatchingMode::Arbitrary,
            ModeArg::Short => MatchingMode::ShortTerm,
        };
    }
    if let Some(s) = cli.seed {
        sc.optimizer.seed = s;
    }
    sc.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(sc)
}

/// Parses `START:END:STEP` (inclusive) or a single value.
fn range(text: &str, what: &str) -> std::result::Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("invalid {what} range `{text}`; expected START:END:STEP"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x] if x.is_finite() => Ok(vec![x]),
        [a, b, step] if a.is_finite() && b.is_finite() && step > 0.0 && step.is_finite() => {
            if b < a {
                return Ok(Vec::new());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn source_columns(prefix: &str) -> String {
    ["mu", "nu", "p_mu", "p_nu", "p_o", "p_ohat"].map(|k| format!("{k}_{prefix}")).join(",")
}

fn source_values(s: &SourceConfig) -> String {
    [s.mu, s.nu, s.p_mu, s.p_nu, s.p_o, s.p_ohat].map(num).join(",")
}

struct Point {
    distance: f64,
    plob: f64,
    best: Option<Candidate>,
}

fn scan(cli: &Cli, distance: &str, no_optimize: bool) -> Outcome {
    let base = load(cli)?;
    let distances = range(distance, "distance")?;
    let space = SearchSpace::from(&base.optimizer);
    let mut points = Vec::with_capacity(distances.len());
    let mut warm: Vec<(SourceConfig, SourceConfig)> = Vec::new();
    for &d in &distances {
        let sc = base.at_distance(d);
        let plob = amdi_core::keyrate::plob_bound(amdi_core::keyrate::plob_transmittance(&sc))?;
        let best = if no_optimize {
            let result = evaluate(&sc)?;
            Some(Candidate { source_a: sc.source_a, source_b: sc.source_b, result })
        } else {
            let r = optimize(&sc, &space, &warm)?;
            if base.optimizer.warm_start {
                warm = r.best.iter().map(|c| (c.source_a, c.source_b)).collect();
            }
            r.best
        };
        points.push(Point { distance: d, plob, best });
    }

    let diag_keys: Vec<String> = points
        .iter()
        .find_map(|p| p.best.as_ref())
        .map(|c| c.result.diagnostics.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = String::from("distance_km,rate_per_pulse,rate_bps,ell_bits,e11x,phi11z,Ez,plob,feasible");
    if cli.emit_diagnostics {
        let _ = write!(out, ",{},{}", source_columns("a"), source_columns("b"));
        for k in &diag_keys {
            let _ = write!(out, ",{k}");
        }
    }
    out.push('\n');
    let mut any_feasible = false;
    for p in &points {
        let _ = write!(out, "{}", p.distance);
        match &p.best {
            Some(c) => {
                let r: &KeyRateResult = &c.result;
                any_feasible |= r.feasible;
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{},{},{}",
                    num(r.rate_per_pulse),
                    num(r.rate_bps),
                    num(r.ell),
                    num(r.bounds.e11_x_upper),
                    num(r.bounds.phi11_z_upper),
                    num(r.z.e_z),
                    num(p.plob),
                    r.feasible
                );
                if cli.emit_diagnostics {
                    let _ = write!(out, ",{},{}", source_values(&c.source_a), source_values(&c.source_b));
                    for k in &diag_keys {
                        let v = r.diagnostics.get(k).map(|v| num(*v)).unwrap_or_default();
                        let _ = write!(out, ",{v}");
                    }
                }
            }
            None => {
                let _ = write!(out, ",0e0,0e0,0e0,,,,{},false", num(p.plob));
                if cli.emit_diagnostics {
                    out.push_str(&",".repeat(12 + diag_keys.len()));
                }
            }
        }
        out.push('\n');
    }
    if !points.is_empty() && !any_feasible {
        return Err(Failure::Infeasible(out));
    }
    Ok(out)
}

fn optimize_cmd(cli: &Cli, distance: Option<f64>, no_optimize: bool) -> Outcome {
    let base = load(cli)?;
    let sc = match distance {
        Some(d) => base.at_distance(d),
        None => base,
    };
    let report = if no_optimize {
        let result = evaluate(&sc)?;
        let feasible = result.feasible;
        let c = Candidate { source_a: sc.source_a, source_b: sc.source_b, result };
        let mut text = serde_json::to_string_pretty(&c).expect("candidate serializes");
        text.push('\n');
        if !feasible {
            return Err(Failure::Infeasible(text));
        }
        return Ok(text);
    } else {
        optimize(&sc, &SearchSpace::from(&sc.optimizer), &[])?
    };
    let mut text = if cli.emit_diagnostics {
        serde_json::to_string_pretty(&report)
    } else {
        serde_json::to_string_pretty(&report.best)
    }
    .expect("result serializes");
    text.push('\n');
    match &report.best {
        Some(c) if c.result.feasible => Ok(text),
        _ => Err(Failure::Infeasible(text)),
    }
}

fn hom(cli: &Cli, delta_v: &str, tau: Option<f64>) -> Outcome {
    let sc = load(cli)?;
    let tau = tau.unwrap_or(sc.drift.tau);
    let mut out = String::from("delta_v_hz,tau_s,visibility,error_rate\n");
    for dv in range(delta_v, "delta-v")? {
        let (v, e) = hom_curve(dv, tau);
        let _ = writeln!(out, "{},{},{},{}", dv, num(tau), num(v), num(e));
    }
    Ok(out)
}

fn drift(cli: &Cli, window: &str, delta_v: &[f64], fiber_rate: f64) -> Outcome {
    let sc = load(cli)?;
    let windows = range(window, "window")?;
    let mu_bar = (sc.source_a.mu + sc.source_b.mu) / 2.0;
    let eta_ch = fiber_transmittance(sc.channel.alpha, sc.channel.total_length());
    let mut out = String::from(
        "window_s,delta_v_hz,sigma_eff,intrinsic_error,window_average_error,detections_per_window\n",
    );
    for &dv in delta_v {
        let d = amdi_core::DriftConfig { mode: PhaseMode::Free, delta_v: dv, fiber_drift_rate: fiber_rate, ..sc.drift };
        d.validate()?;
        for &t in &windows {
            let sigma = effective_misalignment(PhaseMode::Free, t, &d, 0.0);
            let det = detections_per_window(t, sc.matching.rep_rate, mu_bar, sc.channel.eta_d, eta_ch);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                num(t),
                dv,
                num(sigma),
                num(intrinsic_error(sigma)),
                num(intrinsic_error_window_average(2.0 * sigma)),
                num(det)
            );
        }
    }
    Ok(out)
}

fn mc(cli: &Cli, pulses: Option<u64>, distance: Option<f64>) -> Outcome {
    let base = load(cli)?;
    let sc = match distance {
        Some(d) => base.at_distance(d),
        None => base,
    };
    let seed = cli.seed.unwrap_or(sc.optimizer.seed);
    let (sim, report) = run_and_validate(&sc, pulses.unwrap_or(sc.run.mc_pulses), seed)?;
    eprintln!(
        "simulated {} pulses, {} detections; {} quantities, {} beyond {}σ",
        sim.pulses,
        sim.tallies.total_detections(),
        report.quantities.len(),
        report.failures().len(),
        report.threshold
    );
    if cli.emit_diagnostics {
        let mut text = serde_json::to_string_pretty(&serde_json::json!({ "run": sim, "report": report }))
            .expect("report serializes");
        text.push('\n');
        return Ok(text);
    }
    Ok(report.to_csv())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Scan { distance, no_optimize } => scan(cli, distance, *no_optimize),
        Command::Optimize { distance, no_optimize } => optimize_cmd(cli, *distance, *no_optimize),
        Command::Hom { delta_v, tau } => hom(cli, delta_v, *tau),
        Command::Drift { window, delta_v, fiber_rate } => drift(cli, window, delta_v, *fiber_rate),
        Command::Mc { pulses, distance } => mc(cli, *pulses, *distance),
        Command::Config { preset: p, distance } => {
            let mut sc = preset(*p, *distance);
            if let Some(s) = cli.seed {
                sc.optimizer.seed = s;
            }
            Ok(sc.to_json() + "\n")
        }
    }
}

fn emit(cli: &Cli, text: &str) -> std::result::Result<(), String> {
    match &cli.output {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let (text, code, message) = match run(&cli) {
        Ok(t) => (Some(t), 0, None),
        Err(Failure::Infeasible(t)) => (Some(t), 2, Some("no feasible point".to_string())),
        Err(Failure::Config(m)) => (None, 3, Some(format!("configuration error: {m}"))),
        Err(Failure::Numeric(m)) => (None, 4, Some(format!("numeric failure: {m}"))),
    };
    if let Some(t) = text {
        if let Err(e) = emit(&cli, &t) {
            eprintln!("amdi: cannot write output: {e}");
            return ExitCode::from(3);
        }
    }
    if let Some(m) = message {
        eprintln!("amdi: {m}");
    }
    ExitCode::from(code)
}
