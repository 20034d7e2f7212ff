//! Seeded evolutionary search over source intensities and probabilities.
//!
//! Genome per user: `[g_μ, g_ν, l_μ, l_ν, l_o, l_ô]`. The first two genes lie
//! in `[0, 1]` and are mapped into the search intervals, with `ν` kept below
//! `μ`. The four logits are passed through a softmax, so any blend of two
//! genomes decodes to a valid probability vector.
//!
//! In short-term matching a candidate expecting more than one case-2 event
//! is repaired before evaluation: its signal intensities are raised by
//! bisection until the constraint holds. Candidates that cannot be repaired
//! are redrawn a few times and otherwise discarded, so every candidate that
//! competes satisfies the constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SourceConfig;
use crate::error::{ensure, Result};
use crate::keyrate::{case2_expectation, evaluate, KeyRateResult};
use crate::matching::MatchingMode;
use crate::scenario::{OptimizerConfig, Scenario};

const LOGIT_RANGE: f64 = 8.0;
const USER_GENES: usize = 6;
const REDRAWS: usize = 4;

/// Probability that a Poisson(`varsigma`) case-2 count exceeds `lambda`.
pub fn abort_probability(varsigma: f64, lambda: u32) -> Result<f64> {
    ensure(varsigma >= 0.0 && varsigma.is_finite(), || {
        format!("expected case-2 count must be finite and nonnegative, got {varsigma}")
    })?;
    if varsigma == 0.0 {
        return Ok(0.0);
    }
    let log_term = |j: u32| j as f64 * varsigma.ln() - varsigma - ln_factorial(j);
    if varsigma <= lambda as f64 + 1.0 {
        // Tail terms decrease monotonically; sum them directly.
        let mut j = lambda + 1;
        let mut t = log_term(j).exp();
        let mut sum = 0.0;
        while t > 0.0 && t >= sum * 1e-17 {
            sum += t;
            j += 1;
            t *= varsigma / j as f64;
        }
        Ok(sum.min(1.0))
    } else {
        let head: f64 = (0..=lambda).map(|j| log_term(j).exp()).sum();
        Ok((1.0 - head).max(0.0))
    }
}

fn ln_factorial(j: u32) -> f64 {
    (2..=j).map(|k| (k as f64).ln()).sum()
}

/// Bounds and settings of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub mu: [f64; 2],
    pub nu: [f64; 2],
    /// Hold the selection probabilities fixed instead of searching them.
    pub probabilities: Option<[f64; 4]>,
    pub tie_users: bool,
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
}

impl From<&OptimizerConfig> for SearchSpace {
    fn from(o: &OptimizerConfig) -> Self {
        Self {
            mu: o.mu,
            nu: o.nu,
            probabilities: None,
            tie_users: o.tie_users,
            seed: o.seed,
            population: o.population,
            generations: o.generations,
        }
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        ensure(self.mu[0] > 0.0 && self.mu[0] <= self.mu[1] && self.mu[1] <= 10.0, || {
            format!("invalid mu bounds {:?}", self.mu)
        })?;
        ensure(self.nu[0] > 0.0 && self.nu[0] <= self.nu[1], || {
            format!("invalid nu bounds {:?}", self.nu)
        })?;
        ensure(self.nu[0] < self.mu[1], || "nu bounds leave no room below mu".into())?;
        if let Some(p) = self.probabilities {
            ensure(p.iter().all(|x| *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9, || {
                format!("fixed probabilities must form a distribution, got {p:?}")
            })?;
        }
        ensure(self.population >= 4, || "population must be at least 4".into())
    }

    fn users(&self) -> usize {
        if self.tie_users {
            1
        } else {
            2
        }
    }

    fn genome_len(&self) -> usize {
        USER_GENES * self.users()
    }

    fn gene_bounds(&self, i: usize) -> (f64, f64) {
        if i % USER_GENES < 2 {
            (0.0, 1.0)
        } else {
            (-LOGIT_RANGE, LOGIT_RANGE)
        }
    }

    fn decode_user(&self, g: &[f64]) -> SourceConfig {
        let lerp = |lo: f64, hi: f64, t: f64| lo + (hi - lo) * t.clamp(0.0, 1.0);
        let mu = lerp(self.mu[0], self.mu[1], g[0]);
        let nu_hi = self.nu[1].min(mu * (1.0 - 1e-6));
        let nu_lo = self.nu[0].min(nu_hi * 0.5);
        let nu = lerp(nu_lo, nu_hi, g[1]);
        let p = match self.probabilities {
            Some(p) => p,
            None => softmax(&g[2..6]),
        };
        SourceConfig { mu, nu, p_mu: p[0], p_nu: p[1], p_o: p[2], p_ohat: p[3] }
    }

    /// Source parameters of both users encoded by a genome.
    pub fn decode(&self, genes: &[f64]) -> (SourceConfig, SourceConfig) {
        let a = self.decode_user(&genes[..USER_GENES]);
        let b = if self.tie_users { a } else { self.decode_user(&genes[USER_GENES..]) };
        (a, b)
    }

    fn encode_user(&self, s: &SourceConfig, out: &mut Vec<f64>) {
        let inv = |lo: f64, hi: f64, x: f64| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        let mu_g = inv(self.mu[0], self.mu[1], s.mu);
        out.push(mu_g);
        let mu = self.mu[0] + (self.mu[1] - self.mu[0]) * mu_g;
        let nu_hi = self.nu[1].min(mu * (1.0 - 1e-6));
        out.push(inv(self.nu[0].min(nu_hi * 0.5), nu_hi, s.nu));
        for p in s.probabilities() {
            out.push(p.max(1e-12).ln().clamp(-LOGIT_RANGE, LOGIT_RANGE));
        }
    }

    /// Genome approximately decoding to the given parameters.
    pub fn encode(&self, a: &SourceConfig, b: &SourceConfig) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.genome_len());
        self.encode_user(a, &mut g);
        if !self.tie_users {
            self.encode_user(b, &mut g);
        }
        g
    }
}

fn softmax(l: &[f64]) -> [f64; 4] {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp(), (l[3] - m).exp()];
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

/// A decoded, evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source_a: SourceConfig,
    pub source_b: SourceConfig,
    pub result: KeyRateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    /// Best candidate; `None` when no candidate met the case-2 constraint.
    pub best: Option<Candidate>,
    /// Best fitness after each generation: `ℓ/N`, or a value below −1 while
    /// no candidate yields a key.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub notes: Vec<String>,
}

impl OptimizeResult {
    pub fn rate(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |c| c.result.rate_per_pulse)
    }
}

struct Scored {
    genes: Vec<f64>,
    fitness: f64,
}

struct Search<'a> {
    base: &'a Scenario,
    space: SearchSpace,
}

impl Search<'_> {
    fn scenario(&self, genes: &[f64]) -> Scenario {
        let (a, b) = self.space.decode(genes);
        let mut s = *self.base;
        s.source_a = a;
        s.source_b = b;
        s
    }

    fn case2_ok(&self, genes: &[f64]) -> bool {
        self.base.matching.mode == MatchingMode::Arbitrary
            || case2_expectation(&self.scenario(genes)).is_ok_and(|(_, c)| c <= 1.0)
    }

    /// Raises the μ genes toward 1 until the case-2 constraint holds.
    fn repair_mu(&self, genes: &mut [f64]) -> bool {
        if self.case2_ok(genes) {
            return true;
        }
        let users = self.space.users();
        let start: Vec<f64> = (0..users).map(|u| genes[u * USER_GENES]).collect();
        let shifted = |t: f64, g: &mut [f64]| {
            for (u, s) in start.iter().enumerate() {
                g[u * USER_GENES] = s + t * (1.0 - s);
            }
        };
        let mut probe = genes.to_vec();
        shifted(1.0, &mut probe);
        if !self.case2_ok(&probe) {
            return false;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            shifted(mid, &mut probe);
            if self.case2_ok(&probe) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        shifted(hi, genes);
        true
    }

    fn random_genome(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.space.genome_len())
            .map(|i| {
                let (lo, hi) = self.space.gene_bounds(i);
                rng.random_range(lo..=hi)
            })
            .collect()
    }

    /// `ℓ/N` when a key is produced, otherwise `−(1 + t̄₁₁/s̲₁₁ˣ)`.
    fn fitness(&self, genes: &[f64]) -> f64 {
        match evaluate(&self.scenario(genes)) {
            Ok(r) if r.ell > 0.0 => r.ell / self.base.run.pulses,
            Ok(r) => {
                let b = &r.bounds;
                let e = if b.s11_x_lower > 0.0 { b.t11_x_upper / b.s11_x_lower } else { f64::INFINITY };
                -1.0 - e.min(1e6)
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Repairs (redrawing if needed) and scores a genome.
    fn score(&self, mut genes: Vec<f64>, stream: u64) -> Scored {
        let mut rng = ChaCha8Rng::seed_from_u64(self.space.seed);
        rng.set_stream(stream);
        for attempt in 0..=REDRAWS {
            if self.repair_mu(&mut genes) {
                let fitness = self.fitness(&genes);
                return Scored { genes, fitness };
            }
            if attempt < REDRAWS {
                genes = self.random_genome(&mut rng);
            }
        }
        Scored { genes, fitness: f64::NEG_INFINITY }
    }
}

fn tournament<'a>(pop: &'a [Scored], rng: &mut ChaCha8Rng) -> &'a Scored {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 0..2 {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.fitness > best.fitness {
            best = c;
        }
    }
    best
}

fn by_fitness(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.fitness.total_cmp(&a.fitness)
}

/// Maximizes `ℓ/N` over the search space. `warm` genomes (e.g. the previous
/// scan point's optimum) and the sources of `base` seed the initial
/// population.
pub fn optimize(base: &Scenario, space: &SearchSpace, warm: &[(SourceConfig, SourceConfig)]) -> Result<OptimizeResult> {
    base.validate()?;
    space.validate()?;
    let search = Search { base, space: *space };
    let len = space.genome_len();
    let pop_size = space.population;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let mut stream = 1u64;
    let mut next_streams = |n: usize| {
        let s = stream;
        stream += n as u64;
        s
    };

    let mut init: Vec<Vec<f64>> = warm
        .iter()
        .chain(std::iter::once(&(base.source_a, base.source_b)))
        .take(pop_size)
        .map(|(a, b)| space.encode(a, b))
        .collect();
    while init.len() < pop_size {
        init.push(search.random_genome(&mut rng));
    }
    let s0 = next_streams(pop_size);
    let mut pop: Vec<Scored> = init
        .into_par_iter()
        .enumerate()
        .map(|(i, g)| search.score(g, s0 + i as u64))
        .collect();
    let mut evaluations = pop_size;
    pop.sort_by(by_fitness);
    let mut history = vec![pop[0].fitness];

    let gens = space.generations.max(1);
    for gen in 1..gens {
        let anneal = 1.0 - 0.9 * gen as f64 / gens as f64;
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
        for elite in pop.iter().take(2) {
            children.push(elite.genes.clone());
        }
        while children.len() < pop_size {
            let p1 = &tournament(&pop, &mut rng).genes;
            let p2 = &tournament(&pop, &mut rng).genes;
            let mut child = Vec::with_capacity(len);
            for i in 0..len {
                let (lo, hi) = space.gene_bounds(i);
                let (x, y) = (p1[i], p2[i]);
                let mut g = if rng.random_bool(0.9) {
                    let (a, b) = (x.min(y), x.max(y));
                    let d = b - a;
                    rng.random_range((a - 0.3 * d)..=(b + 0.3 * d))
                } else {
                    x
                };
                if rng.random_bool(0.2) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    g += z * 0.1 * (hi - lo) * anneal;
                }
                child.push(g.clamp(lo, hi));
            }
            children.push(child);
        }
        let elites: Vec<Scored> = pop.drain(..2).collect();
        let s = next_streams(pop_size);
        let mut next: Vec<Scored> = children
            .into_par_iter()
            .enumerate()
            .skip(2)
            .map(|(i, g)| search.score(g, s + i as u64))
            .collect();
        evaluations += next.len();
        next.extend(elites);
        next.sort_by(by_fitness);
        pop = next;
        history.push(pop[0].fitness);
    }

    let mut notes = Vec::new();
    let (best_genes, best_fit) = polish(&search, &pop[0], &mut evaluations);
    if best_fit > pop[0].fitness {
        notes.push(format!("pattern search improved fitness {:e} -> {best_fit:e}", pop[0].fitness));
    }
    if !best_fit.is_finite() {
        notes.push("no candidate satisfied the case-2 constraint".into());
        return Ok(OptimizeResult { best: None, history, evaluations, notes });
    }
    let sc = search.scenario(&best_genes);
    let result = evaluate(&sc)?;
    Ok(OptimizeResult {
        best: Some(Candidate { source_a: sc.source_a, source_b: sc.source_b, result }),
        history,
        evaluations,
        notes,
    })
}

/// Deterministic compass search around the best genome.
fn polish(search: &Search, best: &Scored, evaluations: &mut usize) -> (Vec<f64>, f64) {
    let mut genes = best.genes.clone();
    let mut fit = best.fitness;
    if !fit.is_finite() {
        return (genes, fit);
    }
    let mut step = 0.05;
    while step > 1e-4 && *evaluations < usize::MAX {
        let mut improved = false;
        for i in 0..genes.len() {
            let (lo, hi) = search.space.gene_bounds(i);
            for dir in [1.0, -1.0] {
                let mut trial = genes.clone();
                trial[i] = (trial[i] + dir * step * (hi - lo)).clamp(lo, hi);
                if trial[i] == genes[i] || !search.case2_ok(&trial) {
                    continue;
                }
                *evaluations += 1;
                let f = search.fitness(&trial);
                if f > fit {
                    genes = trial;
                    fit = f;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (genes, fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abort_examples() {
        assert_eq!(abort_probability(0.0, 10).unwrap(), 0.0);
        let p = abort_probability(1.0, 10).unwrap();
        assert!((p - 1.004_776_637_569_093_7e-8).abs() < 1e-20, "{p}");
        assert!((abort_probability(1.0, 0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(abort_probability(50.0, 3).unwrap() > 0.999_999);
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[8.0, -8.0, 0.5, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn decode_respects_ordering() {
        let space = SearchSpace {
            mu: [0.01, 0.05],
            nu: [0.04, 0.5],
            probabilities: None,
            tie_users: false,
            seed: 1,
            population: 8,
            generations: 2,
        };
        for g in [[0.0; 12], [1.0; 12], [0.5; 12]] {
            let (a, b) = space.decode(&g);
            assert!(a.validate().is_ok() && b.validate().is_ok(), "{a:?}");
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let space = SearchSpace::from(&OptimizerConfig::default());
        let s = SourceConfig { mu: 0.5, nu: 0.03, p_mu: 0.2, p_nu: 0.3, p_o: 0.45, p_ohat: 0.05 };
        let (a, _) = space.decode(&space.encode(&s, &s));
        assert!((a.mu - 0.5).abs() < 1e-12 && (a.nu - 0.03).abs() < 1e-12);
        assert!((a.p_o - 0.45).abs() < 1e-12);
    }
}
