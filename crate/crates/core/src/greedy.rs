//! Monte-Carlo greedy baseline with optional lazy (CELF) evaluation.
//!
//! The spread of a candidate set is estimated with `r` forward cascades. The
//! random stream of an estimate is derived from the sorted node set being
//! estimated, so different sets get independent streams.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::{SimScratch, Simulator};
use crate::graph::Graph;
use crate::models::DiffusionModel;
use crate::rng::StreamKey;
use crate::tim::{PhaseTimings, SeedResult};

/// Trials per estimate used by the classic experimental setup.
pub const DEFAULT_R: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyConfig {
    pub r: usize,
    pub lazy: bool,
    pub master_seed: u64,
    /// Abort with [`Error::TimeBudgetExceeded`] once this much wall time has
    /// passed.
    pub time_budget: Option<Duration>,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { r: DEFAULT_R, lazy: true, master_seed: 0, time_budget: None }
    }
}

/// Smallest `r` for which greedy is `(1 - 1/e - eps)`-approximate with
/// probability `1 - n^-ell`:
/// `(8k^2 + 2k eps) n ((ell + 1) ln n + ln k) / (eps^2 OPT)`.
pub fn required_r(n: usize, k: usize, ell: f64, epsilon: f64, opt: f64) -> Result<f64> {
    if !(opt > 0.0) {
        return Err(Error::InvalidParameter(format!("OPT must be positive, got {opt}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok((8.0 * kf * kf + 2.0 * kf * epsilon) * nf * ((ell + 1.0) * nf.ln() + kf.ln()) / (epsilon * epsilon * opt))
}

/// Gain with a total order, so it can live in a heap.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Gain(f64);

impl Eq for Gain {}

impl PartialOrd for Gain {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Gain {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Estimator<'a> {
    sim: Simulator<'a>,
    graph: &'a Graph,
    r: usize,
    key: StreamKey,
    deadline: Option<Instant>,
    start: Instant,
}

impl Estimator<'_> {
    fn set_key(&self, set: &[usize]) -> StreamKey {
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        sorted.iter().fold(self.key.derive(sorted.len() as u64), |k, &v| k.derive(v as u64 + 1))
    }

    fn spread(&self, scratch: &mut SimScratch, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        self.sim.estimate_serial(scratch, set, self.r, self.set_key(set)).mean
    }

    /// Single estimate with the trials themselves spread over workers; equal
    /// to `spread` bit for bit.
    fn spread_wide(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        self.sim.estimate(set, self.r, self.set_key(set)).mean
    }

    /// Spread of `base ∪ {v}` for every candidate, in parallel.
    fn spreads_with(&self, base: &[usize], candidates: &[usize]) -> Result<Vec<f64>> {
        let out: Vec<Option<f64>> = candidates
            .par_iter()
            .map_init(
                || (SimScratch::new(self.graph), base.to_vec()),
                |(scratch, set), &v| {
                    if self.expired() {
                        return None;
                    }
                    set.push(v);
                    let s = self.spread(scratch, set);
                    set.pop();
                    Some(s)
                },
            )
            .collect();
        out.into_iter().collect::<Option<Vec<_>>>().ok_or_else(|| self.budget_error())
    }

    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn budget_error(&self) -> Error {
        Error::TimeBudgetExceeded { seconds: self.start.elapsed().as_secs_f64() }
    }
}

/// Picks `k` seeds by repeatedly adding the node with the largest estimated
/// marginal gain (smallest id on ties).
pub fn greedy_select(graph: &Graph, model: &DiffusionModel, k: usize, config: &GreedyConfig) -> Result<SeedResult> {
    let n = graph.node_count();
    if k > n {
        return Err(Error::InvalidParameter(format!("k must be at most {n}, got {k}")));
    }
    if config.r == 0 {
        return Err(Error::InvalidParameter("r must be at least 1".into()));
    }
    model.validate(graph)?;
    let start = Instant::now();
    let est = Estimator {
        sim: Simulator::new(graph, model),
        graph,
        r: config.r,
        key: StreamKey::new(config.master_seed),
        deadline: config.time_budget.map(|b| start + b),
        start,
    };

    let (seeds, spread) = if config.lazy { lazy_greedy(&est, n, k)? } else { eager_greedy(&est, n, k)? };

    Ok(SeedResult {
        labels: seeds.iter().map(|&s| graph.label(s).to_string()).collect(),
        seeds,
        covered_fraction: None,
        estimated_spread: spread,
        trace: None,
        timings: PhaseTimings { selection: start.elapsed().as_secs_f64(), total: start.elapsed().as_secs_f64(), ..Default::default() },
        rr_sets_generated: 0,
    })
}

fn eager_greedy(est: &Estimator, n: usize, k: usize) -> Result<(Vec<usize>, f64)> {
    let mut seeds: Vec<usize> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let mut current = 0.0;
    for _ in 0..k {
        let candidates: Vec<usize> = (0..n).filter(|&v| !chosen[v]).collect();
        let spreads = est.spreads_with(&seeds, &candidates)?;
        // Max spread of S ∪ {v} is max gain; first index wins ties.
        let (best, value) = candidates
            .iter()
            .zip(&spreads)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (&v, &s)| if s > acc.1 { (v, s) } else { acc });
        chosen[best] = true;
        seeds.push(best);
        current = value;
    }
    Ok((seeds, current))
}

fn lazy_greedy(est: &Estimator, n: usize, k: usize) -> Result<(Vec<usize>, f64)> {
    let mut seeds: Vec<usize> = Vec::with_capacity(k);
    if k == 0 {
        return Ok((seeds, 0.0));
    }
    let all: Vec<usize> = (0..n).collect();
    let initial = est.spreads_with(&[], &all)?;
    // (upper bound on gain, smallest id first, round the bound was computed in)
    let mut heap: BinaryHeap<(Gain, Reverse<usize>, usize)> =
        initial.iter().enumerate().map(|(v, &s)| (Gain(s), Reverse(v), 0)).collect();
    let mut current = 0.0;
    while seeds.len() < k {
        let (_, Reverse(v), round) = heap.pop().expect("candidates remain while seeds < k <= n");
        if round == seeds.len() {
            seeds.push(v);
            if seeds.len() < k {
                // Spread of the new base, for gains measured in the next round.
                current = est.spread_wide(&seeds);
            }
            continue;
        }
        if est.expired() {
            return Err(est.budget_error());
        }
        seeds.push(v);
        let with_v = est.spread_wide(&seeds);
        seeds.pop();
        heap.push((Gain(with_v - current), Reverse(v), seeds.len()));
    }
    let spread = est.spread_wide(&seeds);
    Ok((seeds, spread))
}

#[cfg(test)]
mod tests {
    use super::*;

    const IC: DiffusionModel = DiffusionModel::IndependentCascade;

    fn chain() -> Graph {
        Graph::from_weighted_edges(3, [(0, 1, 0.5), (1, 2, 0.5)]).unwrap()
    }

    #[test]
    fn required_r_value() {
        let expected = 3240.0 * (2.0 * 100f64.ln() + 2f64.ln()) / 0.1;
        let got = required_r(100, 2, 1.0, 0.1, 10.0).unwrap();
        assert!((got - expected).abs() < 1e-6);
        assert!((got - 320_873.0).abs() < 1.0, "{got}");
        assert!(required_r(100, 2, 1.0, 0.1, 0.0).is_err());
        // Decreasing in OPT, quadratic in 1/eps.
        assert!(required_r(100, 2, 1.0, 0.1, 100.0).unwrap() < got);
        let a = required_r(50, 1, 1.0, 0.01, 5.0).unwrap();
        let b = required_r(50, 1, 1.0, 0.02, 5.0).unwrap();
        assert!((a / b - 4.0 * 8.02 / 8.04).abs() < 1e-9);
    }

    #[test]
    fn trivial_cases() {
        let g = chain();
        let r = greedy_select(&g, &IC, 0, &GreedyConfig { r: 10, ..Default::default() }).unwrap();
        assert!(r.seeds.is_empty());
        let single = Graph::from_weighted_edges(1, []).unwrap();
        let r = greedy_select(&single, &IC, 1, &GreedyConfig { r: 10, ..Default::default() }).unwrap();
        assert_eq!(r.seeds, vec![0]);
        assert!(greedy_select(&g, &IC, 4, &GreedyConfig::default()).is_err());
    }

    #[test]
    fn chain_picks_head_both_modes() {
        let g = chain();
        for lazy in [true, false] {
            let cfg = GreedyConfig { r: 100_000, lazy, master_seed: 4, time_budget: None };
            let r = greedy_select(&g, &IC, 1, &cfg).unwrap();
            assert_eq!(r.seeds, vec![0], "lazy = {lazy}");
            assert!((r.estimated_spread - 1.75).abs() < 0.02);
        }
    }

    #[test]
    fn chain_two_seeds() {
        // a->b (0.9), b->c (0.5): {a, b} spreads 2.5, {a, c} spreads 2.9.
        let g = Graph::from_weighted_edges(3, [(0, 1, 0.9), (1, 2, 0.5)]).unwrap();
        for lazy in [true, false] {
            let cfg = GreedyConfig { r: 50_000, lazy, master_seed: 1, time_budget: None };
            let r = greedy_select(&g, &IC, 2, &cfg).unwrap();
            assert_eq!(r.seeds, vec![0, 2], "lazy = {lazy}");
        }
    }

    #[test]
    fn budget_expires() {
        let g = crate::models::assign_weighted_cascade(
            &Graph::from_edges(200, (0..200).flat_map(|u| [(u, (u + 1) % 200), (u, (u * 13 + 5) % 200)])).unwrap(),
        );
        let cfg = GreedyConfig { r: 10_000, lazy: false, master_seed: 0, time_budget: Some(Duration::ZERO) };
        assert!(matches!(greedy_select(&g, &IC, 5, &cfg), Err(Error::TimeBudgetExceeded { .. })));
    }
}
