//! Pulse-level Monte Carlo simulation of the protocol.
//!
//! Every time bin draws both users' intensity settings, phases and bit
//! flips, then samples a single-click outcome from the click model at the
//! realized phase difference. Both-click and no-click bins are discarded.
//! Short-term runs classify each detection by its neighbors, then match
//! case-1 events inside each window; arbitrary-time runs pool all events.
//!
//! Randomness is counter based: window (or block) `w` uses a ChaCha8 stream
//! `w` of the master seed, so results do not depend on thread scheduling.
//!
//! When `σ ≠ 0` the detector of the later event of each X pair is redrawn at
//! the phase shifted by `σ`, which reproduces the per-pair error model of
//! the analytics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ClickModel, GainTable, Intensity};
use crate::decoy::BACKGROUND_ERROR;
use crate::drift::PhaseMode;
use crate::error::{ensure, Error, Result};
use crate::keyrate::expected_run;
use crate::matching::{pair_error_ratio, MatchingMode};
use crate::scenario::Scenario;

const CHUNK_BINS: u64 = 1 << 22;
const BLOCK_BINS: u64 = 1 << 20;
const MATCH_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const FINAL_STREAM: u64 = u64::MAX;

/// Significance, in standard errors, at which a quantity fails validation.
pub const Z_THRESHOLD: f64 = 5.0;

const MU: usize = Intensity::Signal as usize;
const NU: usize = Intensity::Decoy as usize;
const O: usize = Intensity::PreserveVacuum as usize;
const OH: usize = Intensity::DeclareVacuum as usize;

/// Integer tallies of one simulated run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tallies {
    /// Bins sent per intensity pair, `[alice][bob]`.
    pub sent: [[u64; 4]; 4],
    /// Single-click detections per intensity pair.
    pub detections: [[u64; 4]; 4],
    /// Detections classified as case 1.
    pub case1: [[u64; 4]; 4],
    pub case2: u64,
    pub z_correct: u64,
    pub z_error: u64,
    /// X-basis `{ν_a, ν_b}` pairs per phase class.
    pub x_pairs: Vec<u64>,
    pub x_errors: Vec<u64>,
    /// X pairs formed from declared-vacuum events.
    pub vacuum_pairs: u64,
    pub vacuum_errors: u64,
}

impl Tallies {
    fn empty(classes: usize) -> Self {
        Self { x_pairs: vec![0; classes], x_errors: vec![0; classes], ..Self::default() }
    }

    /// Adds another set of tallies. Merging is associative and commutative.
    pub fn merge(&mut self, o: &Tallies) {
        for i in 0..4 {
            for j in 0..4 {
                self.sent[i][j] += o.sent[i][j];
                self.detections[i][j] += o.detections[i][j];
                self.case1[i][j] += o.case1[i][j];
            }
        }
        self.case2 += o.case2;
        self.z_correct += o.z_correct;
        self.z_error += o.z_error;
        if self.x_pairs.len() < o.x_pairs.len() {
            self.x_pairs.resize(o.x_pairs.len(), 0);
            self.x_errors.resize(o.x_errors.len(), 0);
        }
        for (c, (p, e)) in o.x_pairs.iter().zip(&o.x_errors).enumerate() {
            self.x_pairs[c] += p;
            self.x_errors[c] += e;
        }
        self.vacuum_pairs += o.vacuum_pairs;
        self.vacuum_errors += o.vacuum_errors;
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().flatten().sum()
    }

    pub fn total_detections(&self) -> u64 {
        self.detections.iter().flatten().sum()
    }

    pub fn total_case1(&self) -> u64 {
        self.case1.iter().flatten().sum()
    }
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    /// Bins actually simulated; short-term runs are rounded to whole windows.
    pub pulses: u64,
    pub seed: u64,
    pub bins_per_window: u64,
    pub scenario: Scenario,
    pub tallies: Tallies,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    pos: i64,
    ka: u8,
    kb: u8,
    right: bool,
    dtheta: u32,
    ra: bool,
    rb: bool,
    psi: f64,
}

struct Ctx {
    thr_a: [u64; 3],
    thr_b: [u64; 3],
    models: [[ClickModel; 4]; 4],
    bound: [[f64; 4]; 4],
    slices: u32,
    n_tc: u64,
    drifting: bool,
    laser_per_bin: f64,
    fiber_per_bin: f64,
    sigma: f64,
    seed: u64,
}

fn thresholds(p: [f64; 4]) -> [u64; 3] {
    let scale = (1u64 << 32) as f64;
    let mut acc = 0.0;
    let mut t = [0u64; 3];
    for i in 0..3 {
        acc += p[i];
        t[i] = (acc * scale).round().min(scale) as u64;
    }
    if p[3] == 0.0 {
        t[2] = 1 << 32;
    }
    t
}

fn pick(t: &[u64; 3], x: u64) -> usize {
    if x < t[0] {
        0
    } else if x < t[1] {
        1
    } else if x < t[2] {
        2
    } else {
        3
    }
}

fn unit(r: u64) -> f64 {
    (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl Ctx {
    fn new(sc: &Scenario, n_tc: u64, seed: u64) -> Self {
        let g = GainTable::new(&sc.source_a, &sc.source_b, &sc.channel);
        let short = sc.matching.mode == MatchingMode::ShortTerm;
        let f = sc.matching.rep_rate;
        let (drifting, laser) = match sc.drift.mode {
            PhaseMode::TrackedLocked => (false, 0.0),
            PhaseMode::LockedOnly => (short, 0.0),
            PhaseMode::Free => (short, 2.0 * PI * sc.drift.delta_v / f),
        };
        Self {
            thr_a: thresholds(sc.source_a.probabilities()),
            thr_b: thresholds(sc.source_b.probabilities()),
            models: g.models,
            bound: g.models.map(|r| r.map(|m| m.max_gain() * (1.0 + 1e-12))),
            slices: sc.matching.slices as u32,
            n_tc,
            drifting,
            laser_per_bin: laser,
            fiber_per_bin: sc.drift.fiber_drift_rate / f,
            sigma: sc.matching.sigma,
            seed,
        }
    }

    fn classes(&self) -> usize {
        self.slices as usize / 2
    }

    /// Simulates `len` bins of stream `stream`, placing them at `offset`.
    fn generate(&self, stream: u64, len: u64, offset: i64, sent: Option<&mut [[u64; 4]; 4]>) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let (phi0, slope) = if self.drifting {
            let phi0 = rng.random::<f64>() * 2.0 * PI;
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (phi0, self.laser_per_bin + s * self.fiber_per_bin)
        } else {
            (0.0, 0.0)
        };
        let mut local = [[0u64; 4]; 4];
        let mut events = Vec::new();
        let m = self.slices;
        for b in 0..len {
            let r = rng.next_u64();
            let ka = pick(&self.thr_a, r >> 32);
            let kb = pick(&self.thr_b, r & 0xFFFF_FFFF);
            local[ka][kb] += 1;
            let u = unit(rng.next_u64());
            if u >= self.bound[ka][kb] {
                continue;
            }
            let ta = rng.random_range(0..m);
            let tb = rng.random_range(0..m);
            let ra = rng.random::<bool>();
            let rb = rng.random::<bool>();
            let dtheta = (ta + m - tb) % m;
            let flip = if ra != rb { PI } else { 0.0 };
            let psi = 2.0 * PI * dtheta as f64 / m as f64 + flip + phi0 + slope * b as f64;
            let model = &self.models[ka][kb];
            let ql = model.q_l(psi);
            let right = if u < ql {
                false
            } else if u < ql + model.q_r(psi) {
                true
            } else {
                continue;
            };
            events.push(Event { pos: offset + b as i64, ka: ka as u8, kb: kb as u8, right, dtheta, ra, rb, psi });
        }
        if let Some(s) = sent {
            for i in 0..4 {
                for j in 0..4 {
                    s[i][j] += local[i][j];
                }
            }
        }
        events
    }

    /// Sifting of one X pair; returns whether the bits disagree.
    fn pair_error(&self, e1: &Event, e2: &Event, rng: &mut ChaCha8Rng) -> bool {
        let (i, j) = if e1.pos <= e2.pos { (e1, e2) } else { (e2, e1) };
        let mut right_j = j.right;
        if self.sigma != 0.0 {
            let m = &self.models[j.ka as usize][j.kb as usize];
            let phi = j.psi + self.sigma;
            let q = m.q(phi);
            if q > 0.0 {
                right_j = rng.random::<f64>() < m.q_r(phi) / q;
            }
        }
        let same_relation = i.dtheta == j.dtheta;
        let same_detector = i.right == right_j;
        let flip = same_relation != same_detector;
        let alice = i.ra ^ j.ra;
        let bob = i.rb ^ j.rb ^ flip;
        alice != bob
    }

    /// Random X-basis pairing within phase classes and intensity types.
    fn x_match(&self, pool: &[Event], rng: &mut ChaCha8Rng, t: &mut Tallies) {
        let classes = self.classes();
        let mut groups: Vec<Vec<&Event>> = vec![Vec::new(); 4 * classes];
        for e in pool {
            let kind = match (e.ka as usize, e.kb as usize) {
                (NU, NU) => 0,
                (OH, OH) => 1,
                (OH, O) => 2,
                (O, OH) => 3,
                _ => continue,
            };
            groups[kind * classes + e.dtheta as usize % classes].push(e);
        }
        for (g, members) in groups.iter_mut().enumerate() {
            members.shuffle(rng);
            let class = g % classes;
            for p in members.chunks_exact(2) {
                let err = self.pair_error(p[0], p[1], rng) as u64;
                if g < classes {
                    t.x_pairs[class] += 1;
                    t.x_errors[class] += err;
                } else {
                    t.vacuum_pairs += 1;
                    t.vacuum_errors += err;
                }
            }
        }
    }
}

fn hypergeometric(rng: &mut ChaCha8Rng, total: u64, marked: u64, draws: u64) -> u64 {
    if draws == 0 || marked == 0 {
        0
    } else if marked == total {
        draws
    } else if draws == total {
        marked
    } else {
        Hypergeometric::new(total, marked, draws).expect("valid hypergeometric parameters").sample(rng)
    }
}

/// Z-basis pairing from case-1 counts `[μo, oμ, μμ, oo]`.
fn z_match(rng: &mut ChaCha8Rng, c: [u64; 4], t: &mut Tallies) {
    let [mu_o, o_mu, mu_mu, o_o] = c;
    let x1 = mu_o + mu_mu;
    let x0 = o_mu + o_o;
    let m = x0.min(x1);
    if m == 0 {
        return;
    }
    let g1 = hypergeometric(rng, x1, mu_o, m);
    let g0 = hypergeometric(rng, x0, o_mu, m);
    let gg = hypergeometric(rng, m, g1, g0);
    t.z_correct += gg;
    t.z_error += m + gg - g1 - g0;
}

fn z_counts(c: &[[u64; 4]; 4]) -> [u64; 4] {
    [c[MU][O], c[O][MU], c[MU][MU], c[O][O]]
}

fn match_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ MATCH_SALT);
    rng.set_stream(stream);
    rng
}

fn simulate_short(ctx: &Ctx, windows: u64) -> Tallies {
    let n_tc = ctx.n_tc;
    let per_chunk = (CHUNK_BINS / n_tc).max(1);
    let chunks = windows.div_ceil(per_chunk);
    let gap = n_tc as i64 - 1;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let w0 = c * per_chunk;
            let w1 = (w0 + per_chunk).min(windows);
            let mut t = Tallies::empty(ctx.classes());
            let prev = ctx.generate((w0 + windows - 1) % windows, n_tc, (w0 as i64 - 1) * n_tc as i64, None);
            let mut all = prev;
            let start = all.len();
            for w in w0..w1 {
                all.extend(ctx.generate(w, n_tc, (w * n_tc) as i64, Some(&mut t.sent)));
            }
            let end = all.len();
            all.extend(ctx.generate(w1 % windows, n_tc, (w1 * n_tc) as i64, None));

            let mut idx = start;
            for w in w0..w1 {
                let hi = ((w + 1) * n_tc) as i64;
                let mut pool = Vec::new();
                let mut z = [[0u64; 4]; 4];
                while idx < end && all[idx].pos < hi {
                    let e = all[idx];
                    let (ka, kb) = (e.ka as usize, e.kb as usize);
                    t.detections[ka][kb] += 1;
                    let near = (idx > 0 && e.pos - all[idx - 1].pos <= gap)
                        || (idx + 1 < all.len() && all[idx + 1].pos - e.pos <= gap);
                    if near {
                        t.case1[ka][kb] += 1;
                        z[ka][kb] += 1;
                        pool.push(e);
                    } else {
                        t.case2 += 1;
                    }
                    idx += 1;
                }
                let mut rng = match_rng(ctx.seed, w);
                z_match(&mut rng, z_counts(&z), &mut t);
                ctx.x_match(&pool, &mut rng, &mut t);
            }
            t
        })
        .reduce(|| Tallies::empty(ctx.classes()), |mut a, b| {
            a.merge(&b);
            a
        })
}

fn simulate_arbitrary(ctx: &Ctx, pulses: u64) -> Tallies {
    let blocks = pulses.div_ceil(BLOCK_BINS);
    let parts: Vec<(Tallies, Vec<Event>)> = (0..blocks)
        .into_par_iter()
        .map(|k| {
            let mut t = Tallies::empty(ctx.classes());
            let len = BLOCK_BINS.min(pulses - k * BLOCK_BINS);
            let events = ctx.generate(k, len, (k * BLOCK_BINS) as i64, Some(&mut t.sent));
            let mut keep = Vec::new();
            for e in events {
                let (ka, kb) = (e.ka as usize, e.kb as usize);
                t.detections[ka][kb] += 1;
                t.case1[ka][kb] += 1;
                if matches!((ka, kb), (NU, NU) | (OH, OH) | (OH, O) | (O, OH)) {
                    keep.push(e);
                }
            }
            (t, keep)
        })
        .collect();
    let mut t = Tallies::empty(ctx.classes());
    let mut pool = Vec::new();
    for (part, events) in parts {
        t.merge(&part);
        pool.extend(events);
    }
    let mut rng = match_rng(ctx.seed, FINAL_STREAM);
    z_match(&mut rng, z_counts(&t.case1), &mut t);
    ctx.x_match(&pool, &mut rng, &mut t);
    t
}

/// Bins per window used by the simulation: `round(T_c·F)`, at least 1.
pub fn simulated_window(sc: &Scenario) -> u64 {
    sc.matching.bins_per_window().round().max(1.0) as u64
}

/// Simulates a run of about `pulses` bins.
///
/// Short-term runs are rounded down to whole windows (at least one).
/// Arbitrary-time runs ignore phase drift: they model tracked, locked
/// systems only.
pub fn simulate(sc: &Scenario, pulses: u64, seed: u64) -> Result<SimRun> {
    sc.validate()?;
    ensure(pulses >= 1, || "need at least one pulse".into())?;
    let n_tc = simulated_window(sc);
    let ctx = Ctx::new(sc, n_tc, seed);
    let (simulated, tallies) = match sc.matching.mode {
        MatchingMode::ShortTerm => {
            let windows = (pulses / n_tc).max(1);
            (windows * n_tc, simulate_short(&ctx, windows))
        }
        MatchingMode::Arbitrary => (pulses, simulate_arbitrary(&ctx, pulses)),
    };
    Ok(SimRun { pulses: simulated, seed, bins_per_window: n_tc, scenario: *sc, tallies })
}

/// Analytic expectations for the quantities a [`SimRun`] tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scenario: Scenario,
    pub pulses: u64,
    pub gains: [[f64; 4]; 4],
    pub case1: f64,
    pub case2: f64,
    pub n_c: f64,
    pub n_e: f64,
    pub e_z: f64,
    pub x_pairs: f64,
    pub x_error: f64,
    pub x_class_error: Vec<f64>,
    pub vacuum_error: f64,
}

/// Analytic predictions for a run of `pulses` bins of `sc`, using the
/// simulation's whole-bin window length.
pub fn predict(sc: &Scenario, pulses: u64) -> Result<Prediction> {
    let mut s = *sc;
    s.run.pulses = pulses as f64;
    if s.matching.mode == MatchingMode::ShortTerm {
        s.matching.window = simulated_window(sc) as f64 / s.matching.rep_rate;
    }
    let run = expected_run(&s)?;
    let gains = GainTable::new(&s.source_a, &s.source_b, &s.channel);
    let n = pulses as f64;
    let model = gains.models[NU][NU];
    let slices = s.matching.slices;
    let x_class_error = (0..slices / 2)
        .map(|c| pair_error_ratio(&model, 2.0 * PI * c as f64 / slices as f64, run.sigma_eff))
        .collect();
    let total_pairs = run.observed.x_slices.total_pairs();
    let z = run.z;
    Ok(Prediction {
        scenario: *sc,
        pulses,
        gains: gains.gains,
        case1: n * run.p_bar * run.p_c1,
        case2: run.expected_case2,
        n_c: z.n_c,
        n_e: z.n_e,
        e_z: if z.n_z > 0.0 { z.n_e / z.n_z } else { 0.0 },
        x_pairs: total_pairs,
        x_error: if total_pairs > 0.0 { run.observed.x_slices.errors / total_pairs } else { 0.0 },
        x_class_error,
        vacuum_error: BACKGROUND_ERROR,
    })
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub empirical: f64,
    pub analytic: f64,
    pub std_err: f64,
    pub z: f64,
}

impl Quantity {
    pub fn new(name: impl Into<String>, empirical: f64, analytic: f64, std_err: f64) -> Self {
        let diff = empirical - analytic;
        let z = if diff == 0.0 {
            0.0
        } else if std_err > 0.0 {
            diff / std_err
        } else {
            diff.signum() * f64::INFINITY
        };
        Self { name: name.into(), empirical, analytic, std_err, z }
    }

    pub fn passed(&self) -> bool {
        self.z.abs() <= Z_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub quantities: Vec<Quantity>,
    pub threshold: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.quantities.iter().all(Quantity::passed)
    }

    pub fn failures(&self) -> Vec<&Quantity> {
        self.quantities.iter().filter(|q| !q.passed()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    /// CSV with columns `quantity,empirical,analytic,z_score`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,empirical,analytic,z_score\n");
        for q in &self.quantities {
            let _ = writeln!(out, "{},{:e},{:e},{:.6}", q.name, q.empirical, q.analytic, q.z);
        }
        out
    }
}

fn count_se(expected: f64) -> f64 {
    expected.max(1.0).sqrt()
}

fn fraction_se(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) * n).max(1.0).sqrt() / n
}

/// Compares a run against analytic predictions at [`Z_THRESHOLD`].
///
/// Gains and ratios use the binomial error of their sample size, counts the
/// Poisson one. Every error is floored at one event.
/// Quantities without samples are skipped.
pub fn validate(sim: &SimRun, pred: &Prediction) -> Result<ValidationReport> {
    if sim.scenario != pred.scenario || sim.pulses != pred.pulses {
        return Err(Error::Inconsistent(format!(
            "prediction for {} pulses does not match simulated run of {} pulses or its scenario",
            pred.pulses, sim.pulses
        )));
    }
    let t = &sim.tallies;
    let mut qs = Vec::new();
    for ka in Intensity::ALL {
        for kb in Intensity::ALL {
            let (i, j) = (ka.index(), kb.index());
            let sent = t.sent[i][j] as f64;
            if sent == 0.0 {
                continue;
            }
            let q = pred.gains[i][j];
            let emp = t.detections[i][j] as f64 / sent;
            let name = format!("gain_{}_{}", ka.symbol(), kb.symbol());
            qs.push(Quantity::new(name, emp, q, fraction_se(q, sent)));
        }
    }
    if sim.scenario.matching.mode == MatchingMode::ShortTerm {
        qs.push(Quantity::new("case1_count", t.total_case1() as f64, pred.case1, count_se(pred.case1)));
        qs.push(Quantity::new("case2_count", t.case2 as f64, pred.case2, count_se(pred.case2)));
    }
    qs.push(Quantity::new("n_c", t.z_correct as f64, pred.n_c, count_se(pred.n_c)));
    qs.push(Quantity::new("n_e", t.z_error as f64, pred.n_e, count_se(pred.n_e)));
    let n_z = (t.z_correct + t.z_error) as f64;
    if n_z > 0.0 {
        qs.push(Quantity::new("e_z", t.z_error as f64 / n_z, pred.e_z, fraction_se(pred.e_z, n_z)));
    }
    let pairs: u64 = t.x_pairs.iter().sum();
    let errors: u64 = t.x_errors.iter().sum();
    qs.push(Quantity::new("x_pairs", pairs as f64, pred.x_pairs, count_se(pred.x_pairs)));
    if pairs > 0 {
        let n = pairs as f64;
        qs.push(Quantity::new("x_error_rate", errors as f64 / n, pred.x_error, fraction_se(pred.x_error, n)));
    }
    for (c, (&p, &e)) in t.x_pairs.iter().zip(&t.x_errors).enumerate() {
        if p == 0 || c >= pred.x_class_error.len() {
            continue;
        }
        let (n, a) = (p as f64, pred.x_class_error[c]);
        qs.push(Quantity::new(format!("x_error_class_{c}"), e as f64 / n, a, fraction_se(a, n)));
    }
    if t.vacuum_pairs > 0 {
        let n = t.vacuum_pairs as f64;
        let a = pred.vacuum_error;
        qs.push(Quantity::new("vacuum_x_error", t.vacuum_errors as f64 / n, a, fraction_se(a, n)));
    }
    Ok(ValidationReport { quantities: qs, threshold: Z_THRESHOLD })
}

/// Simulates `pulses` bins and validates them against the analytics.
pub fn run_and_validate(sc: &Scenario, pulses: u64, seed: u64) -> Result<(SimRun, ValidationReport)> {
    let sim = simulate(sc, pulses, seed)?;
    let pred = predict(sc, sim.pulses)?;
    let report = validate(&sim, &pred)?;
    Ok((sim, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SourceConfig;
    use crate::matching::MatchingConfig;

    fn short(distance: f64, window: f64) -> Scenario {
        let mut s = Scenario::standard(
            distance,
            MatchingConfig {
                mode: MatchingMode::ShortTerm,
                rep_rate: 1e9,
                window,
                slices: 16,
                sigma: PI / 10.0,
                abort_threshold: 10,
            },
        );
        let src = SourceConfig { mu: 0.4, nu: 0.1, p_mu: 0.4, p_nu: 0.4, p_o: 0.1, p_ohat: 0.1 };
        s.source_a = src;
        s.source_b = src;
        s
    }

    #[test]
    fn vacuum_sources_never_click() {
        let mut s = short(100.0, 1e-6);
        s.channel.p_d = 0.0;
        let vac = SourceConfig { mu: 0.4, nu: 0.1, p_mu: 0.0, p_nu: 0.0, p_o: 1.0, p_ohat: 0.0 };
        s.source_a = vac;
        s.source_b = vac;
        let run = simulate(&s, 1_000_000, 1).unwrap();
        assert_eq!(run.tallies.total_detections(), 0);
        assert_eq!(run.tallies.sent[O][O], run.pulses);
    }

    #[test]
    fn conservation_and_determinism() {
        let s = short(100.0, 0.1e-6);
        let a = simulate(&s, 3_000_000, 7).unwrap();
        assert_eq!(a.tallies.total_sent(), a.pulses);
        assert_eq!(a.pulses, 3_000_000);
        assert_eq!(a.tallies.total_case1() + a.tallies.case2, a.tallies.total_detections());
        assert_eq!(a, simulate(&s, 3_000_000, 7).unwrap());
        assert_ne!(a.tallies, simulate(&s, 3_000_000, 8).unwrap().tallies);
    }

    #[test]
    fn single_window_wraps_around() {
        let s = short(100.0, 1e-3);
        let run = simulate(&s, 10, 3).unwrap();
        assert_eq!(run.pulses, 1_000_000);
        assert_eq!(run.tallies.total_case1() + run.tallies.case2, run.tallies.total_detections());
    }

    #[test]
    fn gains_match_at_100km() {
        let mut s = Scenario::no_tracking(100.0);
        s.source_a.mu = 0.25;
        s.source_b.mu = 0.25;
        let (_, report) = run_and_validate(&s, 20_000_000, 11).unwrap();
        assert!(report.quantities.iter().filter(|q| q.name.starts_with("gain_")).count() == 16);
        assert!(report.passed(), "{}", report.to_csv());
    }

    #[test]
    fn case_counts_match_with_short_window() {
        let s = short(100.0, 0.1e-6);
        let (sim, report) = run_and_validate(&s, 20_000_000, 12).unwrap();
        assert!(sim.tallies.case2 > 100, "{}", report.to_csv());
        for name in ["case1_count", "case2_count"] {
            let q = report.get(name).unwrap();
            assert!(q.passed(), "{q:?}");
        }
    }

    #[test]
    fn noiseless_x_errors_match_ratio() {
        let mut s = Scenario::arbitrary(60.0, 1e7);
        s.channel.p_d = 0.0;
        s.matching.sigma = 0.0;
        let src = SourceConfig { mu: 0.4, nu: 0.2, p_mu: 0.1, p_nu: 0.7, p_o: 0.1, p_ohat: 0.1 };
        s.source_a = src;
        s.source_b = src;
        let (sim, report) = run_and_validate(&s, 10_000_000, 5).unwrap();
        assert!(sim.tallies.x_pairs.iter().sum::<u64>() > 10_000);
        let q = report.get("x_error_rate").unwrap();
        assert!(q.passed(), "{q:?}");
        assert!(report.passed(), "{}", report.to_csv());
    }

    #[test]
    fn identical_tallies_give_zero_scores() {
        let s = short(100.0, 0.1e-6);
        let sim = simulate(&s, 1_000_000, 2).unwrap();
        let mut pred = predict(&s, sim.pulses).unwrap();
        let t = &sim.tallies;
        for i in 0..4 {
            for j in 0..4 {
                pred.gains[i][j] = t.detections[i][j] as f64 / t.sent[i][j] as f64;
            }
        }
        pred.case1 = t.total_case1() as f64;
        pred.case2 = t.case2 as f64;
        pred.n_c = t.z_correct as f64;
        pred.n_e = t.z_error as f64;
        pred.e_z = t.z_error as f64 / (t.z_correct + t.z_error) as f64;
        let pairs: u64 = t.x_pairs.iter().sum();
        pred.x_pairs = pairs as f64;
        pred.x_error = t.x_errors.iter().sum::<u64>() as f64 / pairs as f64;
        for c in 0..pred.x_class_error.len() {
            if t.x_pairs[c] > 0 {
                pred.x_class_error[c] = t.x_errors[c] as f64 / t.x_pairs[c] as f64;
            }
        }
        pred.vacuum_error = t.vacuum_errors as f64 / t.vacuum_pairs as f64;
        let report = validate(&sim, &pred).unwrap();
        assert!(report.quantities.len() > 20);
        assert!(report.quantities.iter().all(|q| q.z == 0.0));
    }

    #[test]
    fn corrupted_gain_is_flagged() {
        let s = short(100.0, 0.1e-6);
        let mut sim = simulate(&s, 5_000_000, 4).unwrap();
        let d = &mut sim.tallies.detections[MU][MU];
        *d = (*d as f64 * 1.1).round() as u64;
        let report = validate(&sim, &predict(&s, sim.pulses).unwrap()).unwrap();
        assert!(!report.passed());
        assert!(report.failures().iter().any(|q| q.name == "gain_mu_mu"));
    }

    #[test]
    fn lone_dark_click_is_not_flagged() {
        let s = Scenario::no_tracking(100.0);
        let mut sim = simulate(&s, 1_000_000, 4).unwrap();
        sim.tallies.detections[O][O] = 1;
        let report = validate(&sim, &predict(&s, sim.pulses).unwrap()).unwrap();
        assert!(report.get("gain_o_o").unwrap().passed());
    }

    #[test]
    fn mismatched_scenario_rejected() {
        let s = short(100.0, 0.1e-6);
        let sim = simulate(&s, 100_000, 4).unwrap();
        let pred = predict(&short(120.0, 0.1e-6), sim.pulses).unwrap();
        assert!(matches!(validate(&sim, &pred), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn csv_layout() {
        let r = ValidationReport { quantities: vec![Quantity::new("n_c", 10.0, 10.0, 1.0)], threshold: 5.0 };
        assert_eq!(r.to_csv(), "quantity,empirical,analytic,z_score\nn_c,1e1,1e1,0.000000\n");
    }
}
