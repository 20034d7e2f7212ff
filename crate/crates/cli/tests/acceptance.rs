//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion outside `KNOWN_GAPS` fails, or a known gap starts passing.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use amdi_core::channel::fiber_transmittance;
use amdi_core::drift::{detections_per_window, hom_curve, intrinsic_error};
use amdi_core::montecarlo::run_and_validate;
use amdi_core::optimizer::abort_probability;
use amdi_core::stats::{binary_entropy, chernoff_expected_bounds, chernoff_observed_bounds, sampling_gap};
use amdi_core::{evaluate, FailureProb, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the implemented model, with the reason.
const KNOWN_GAPS: &[(u32, &str)] = &[
    (2, "10 GHz / 1 us / 100 kHz stays below PLOB at every distance up to 280 km"),
    (4, "N=1e13 arbitrary matching reaches about 670 km, beyond 620 +- 30"),
];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

struct Row {
    distance: f64,
    rate: f64,
    rate_bps: f64,
    plob: f64,
    feasible: bool,
}

fn amdi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_amdi"))
}

fn scratch() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("amdi-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, sc: &Scenario) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, sc.to_json()).unwrap();
    path
}

fn scan(config: Option<&Path>, range: &str) -> Vec<Row> {
    let mut cmd = amdi();
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    let out = cmd.args(["scan", "--distance", range]).output().unwrap();
    let code = out.status.code();
    assert!(matches!(code, Some(0) | Some(2)), "scan {range} exited with {code:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                distance: f[0].parse().unwrap(),
                rate: f[1].parse().unwrap(),
                rate_bps: f[2].parse().unwrap(),
                plob: f[7].parse().unwrap(),
                feasible: f[8] == "true",
            }
        })
        .collect()
}

fn reach(rows: &[Row]) -> Option<f64> {
    rows.iter().filter(|r| r.feasible).map(|r| r.distance).reduce(f64::max)
}

fn first_crossing(rows: &[Row]) -> Option<f64> {
    rows.iter().find(|r| r.feasible && r.rate > r.plob).map(|r| r.distance)
}

fn at(rows: &[Row], d: f64) -> &Row {
    rows.iter().find(|r| r.distance == d).unwrap()
}

fn within_factor(x: f64, target: f64, factor: f64) -> bool {
    x >= target / factor && x <= target * factor
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v}"))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let rows = scan(None, "100:500:10");
    let elapsed = t.elapsed();
    let cross = first_crossing(&rows);
    let far = reach(&rows);
    let pass = cross.is_some_and(|d| d <= 290.0)
        && far.is_some_and(|d| (d - 450.0).abs() <= 20.0)
        && elapsed <= Duration::from_secs(15 * 60);
    Outcome {
        id: 1,
        pass,
        detail: format!(
            "no tracking: first PLOB crossing {} km, reach {} km, scan {:.1} s",
            fmt_opt(cross),
            fmt_opt(far),
            elapsed.as_secs_f64()
        ),
    }
}

fn free_running_scans(dir: &Path) -> Vec<(&'static str, Vec<Row>)> {
    [
        ("1GHz", Scenario::free_running(300.0, 1e9, 20e-6, 3e3, 8e3), "200:300:10"),
        ("4GHz", Scenario::free_running(300.0, 4e9, 10e-6, 1e4, 0.0), "200:300:10"),
        ("10GHz", Scenario::free_running(300.0, 1e10, 1e-6, 1e5, 0.0), "200:420:10"),
    ]
    .into_iter()
    .map(|(name, sc, range)| (name, scan(Some(&write_config(dir, name, &sc)), range)))
    .collect()
}

fn criterion_2(scans: &[(&str, Vec<Row>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, rows) in scans {
        let beats = rows.iter().any(|r| r.distance <= 280.0 && r.feasible && r.rate > r.plob);
        let r270 = at(rows, 270.0).rate;
        let near = within_factor(r270, 2e-5, 3.0);
        pass &= beats && near;
        parts.push(format!("{name} beats PLOB<=280: {beats}, R(270)={r270:.3e}"));
    }
    let red = &scans.iter().find(|(n, _)| *n == "10GHz").unwrap().1;
    let far = reach(red);
    pass &= far.is_some_and(|d| (d - 380.0).abs() <= 20.0);
    parts.push(format!("10GHz reach {} km", fmt_opt(far)));
    Outcome { id: 2, pass, detail: parts.join("; ") }
}

fn criterion_3(scans: &[(&str, Vec<Row>)]) -> Outcome {
    let red = &scans.iter().find(|(n, _)| *n == "10GHz").unwrap().1;
    let bps = at(red, 300.0).rate_bps;
    Outcome {
        id: 3,
        pass: within_factor(bps, 0.15e6, 3.0),
        detail: format!("10GHz at 300 km: {:.4} Mbps", bps / 1e6),
    }
}

fn criterion_4(dir: &Path) -> Outcome {
    let big = scan(Some(&write_config(dir, "arb13", &Scenario::arbitrary(500.0, 1e13))), "500:700:10");
    let small = scan(Some(&write_config(dir, "arb11", &Scenario::arbitrary(400.0, 1e11))), "400:600:10");
    let (r13, r11) = (reach(&big), reach(&small));
    Outcome {
        id: 4,
        pass: r13.is_some_and(|d| (d - 620.0).abs() <= 30.0) && r11.is_some_and(|d| d > 500.0),
        detail: format!("reach N=1e13 {} km, N=1e11 {} km", fmt_opt(r13), fmt_opt(r11)),
    }
}

fn criterion_5() -> Outcome {
    let e1 = intrinsic_error(0.2);
    let e2 = intrinsic_error(0.1 * std::f64::consts::PI);
    let (_, h0) = hom_curve(0.0, 1e-6);
    let (_, h1) = hom_curve(1e5, 1e-6);
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let pass = round4(e1) == 0.0100
        && round4(e2) == 0.0245
        && (h0 - 0.25).abs() <= 0.001
        && (h1 - 0.297).abs() <= 0.005;
    Outcome {
        id: 5,
        pass,
        detail: format!("E(0.2)={e1:.6} E(0.1pi)={e2:.6} HOM E(0)={h0:.4} E(100kHz,1us)={h1:.4}"),
    }
}

fn criterion_6() -> Outcome {
    let eta = |l: f64| fiber_transmittance(0.165, l);
    let d400 = detections_per_window(50e-6, 1e9, 0.5, 0.7, eta(400.0));
    let d300 = detections_per_window(1e-6, 1e10, 0.5, 0.7, eta(300.0));
    let ok = |x: f64, t: f64| (x / t - 1.0).abs() <= 0.25;
    Outcome {
        id: 6,
        pass: ok(d400, 9.3) && ok(d300, 11.7),
        detail: format!("400 km/1GHz/50us: {d400:.2}, 300 km/10GHz/1us: {d300:.2}"),
    }
}

fn criterion_7() -> Outcome {
    let p = abort_probability(1.0, 10).unwrap();
    Outcome { id: 7, pass: within_factor(p, 1e-8, 2.0), detail: format!("P(case2 > 10 | mean 1) = {p:.4e}") }
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, seed) in [(100.0, 11u64), (300.0, 12)] {
        let (_, report) = run_and_validate(&Scenario::no_tracking(d), 100_000_000, seed).unwrap();
        let worst = report.quantities.iter().map(|q| q.z.abs()).fold(0.0, f64::max);
        pass &= report.passed();
        parts.push(format!(
            "{d} km: {}/{} within 5 SE, max |z| {worst:.2}",
            report.quantities.len() - report.failures().len(),
            report.quantities.len()
        ));
    }
    let elapsed = t.elapsed();
    pass &= elapsed <= Duration::from_secs(600);
    parts.push(format!("{:.1} s", elapsed.as_secs_f64()));
    Outcome { id: 8, pass, detail: parts.join("; ") }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = Vec::new();
    for i in 0..1000 {
        let eps = FailureProb::new(10f64.powf(rng.random_range(-30.0..-2.0))).unwrap();
        let looser = FailureProb::new(eps.value() * 10.0).unwrap();
        let x = 10f64.powf(rng.random_range(0.0..12.0));

        let o = chernoff_observed_bounds(x, eps).unwrap();
        let contained = o.lower <= x && x <= o.upper;
        let obs = o.lower + rng.random::<f64>() * (o.upper - o.lower);
        let e = chernoff_expected_bounds(obs, eps).unwrap();
        let slack = 1e-9 * x.max(1.0);
        let round_trip = e.lower <= x + slack && x <= e.upper + slack;
        let lo = chernoff_observed_bounds(x, looser).unwrap();
        let chernoff_monotone = o.lower <= lo.lower && lo.upper <= o.upper;

        let n = 10f64.powf(rng.random_range(0.0..12.0));
        let k = 10f64.powf(rng.random_range(0.0..12.0));
        let lam = rng.random_range(0.001..0.999);
        let g = sampling_gap(n, k, lam, eps).unwrap();
        let gamma_ok = g >= 0.0 && g >= sampling_gap(n, k, lam, looser).unwrap();

        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let h = |v: f64| binary_entropy(v).unwrap();
        let entropy_ok =
            (h(a) - h(1.0 - a)).abs() < 1e-12 && h((a + b) / 2.0) + 1e-12 >= (h(a) + h(b)) / 2.0;

        if !(contained && round_trip && chernoff_monotone && gamma_ok && entropy_ok) {
            bad.push(i);
        }
    }
    let sym = evaluate(&Scenario::no_tracking(200.0)).unwrap().bounds.failure_uses;
    let mut asym = Scenario::no_tracking(200.0);
    asym.channel.l_b += 10.0;
    let asym = evaluate(&asym).unwrap().bounds.failure_uses;
    Outcome {
        id: 9,
        pass: bad.is_empty() && sym == 14 && asym == 13,
        detail: format!("{} of 1000 draws violated; Chernoff uses {sym} symmetric, {asym} asymmetric", bad.len()),
    }
}

fn criterion_10(dir: &Path) -> Outcome {
    let cfg = write_config(dir, "det", &Scenario::no_tracking(300.0));
    let cfg = cfg.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["--config", cfg, "scan", "--distance", "280:300:10"],
        vec!["--config", cfg, "--emit-diagnostics", "scan", "--distance", "300"],
        vec!["--config", cfg, "optimize", "--distance", "300"],
        vec!["--config", cfg, "--emit-diagnostics", "optimize", "--distance", "300"],
        vec!["--config", cfg, "--mode", "arbitrary", "scan", "--distance", "300"],
        vec!["hom"],
        vec!["drift"],
        vec!["--config", cfg, "--seed", "5", "mc", "--pulses", "2000000", "--distance", "150"],
        vec!["--config", cfg, "--emit-diagnostics", "mc", "--pulses", "2000000"],
        vec!["config", "--preset", "free10ghz"],
    ];
    let mut differing = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
            .map(|r| {
                let file = dir.join(format!("det-{i}-{r}.out"));
                let out = amdi().args(args).arg("--output").arg(&file).output().unwrap();
                let stdout = amdi().args(args).output().unwrap().stdout;
                assert!(out.status.success(), "{args:?} failed");
                (std::fs::read(&file).unwrap(), stdout)
            })
            .collect();
        if runs[0] != runs[1] || runs[0].0 != runs[0].1 {
            differing.push(args.join(" "));
        }
    }
    Outcome {
        id: 10,
        pass: differing.is_empty(),
        detail: format!("{} commands run twice, {} differing {:?}", commands.len(), differing.len(), differing),
    }
}

fn main() {
    let dir = scratch();
    let free = free_running_scans(&dir);
    let outcomes = vec![
        criterion_1(),
        criterion_2(&free),
        criterion_3(&free),
        criterion_4(&dir),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(&dir),
    ];
    let _ = std::fs::remove_dir_all(&dir);

    let mut unexpected = 0;
    for o in &outcomes {
        let gap = KNOWN_GAPS.iter().find(|(id, _)| *id == o.id);
        let status = if o.pass { "PASS" } else { "FAIL" };
        match (o.pass, gap) {
            (false, Some((_, why))) => println!("criterion {:>2}: {status} (known gap: {why}) | {}", o.id, o.detail),
            (true, Some(_)) => {
                unexpected += 1;
                println!("criterion {:>2}: {status} (listed as a known gap) | {}", o.id, o.detail);
            }
            (false, None) => {
                unexpected += 1;
                println!("criterion {:>2}: {status} | {}", o.id, o.detail);
            }
            (true, None) => println!("criterion {:>2}: {status} | {}", o.id, o.detail),
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
