//! Ground truth for expected spread.
//!
//! [`Simulator`] runs forward Monte-Carlo cascades. [`ExactOracle`]
//! enumerates every joint trigger realization of a tiny graph (for the
//! cascade models these are exactly the live-edge graphs) and answers spread,
//! EPT, KPT and OPT queries exactly.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ForwardAdjacency, Graph};
use crate::models::DiffusionModel;
use crate::rng::{chunks, StreamKey};
use crate::sampler::kappa;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub trials: usize,
    pub std_error: f64,
}

/// Forward cascade simulator with a prebuilt forward adjacency.
pub struct Simulator<'a> {
    graph: &'a Graph,
    model: &'a DiffusionModel,
    forward: ForwardAdjacency,
}

/// Per-worker scratch for [`Simulator::run_once`].
pub struct SimScratch {
    active: Vec<u32>,
    sampled: Vec<u32>,
    live: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
    trigger: Vec<usize>,
}

impl SimScratch {
    pub fn new(graph: &Graph) -> Self {
        SimScratch {
            active: vec![0; graph.node_count()],
            sampled: vec![0; graph.node_count()],
            live: vec![0; graph.edge_count()],
            epoch: 0,
            queue: Vec::new(),
            trigger: Vec::new(),
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.active.fill(0);
            self.sampled.fill(0);
            self.live.fill(0);
            self.epoch = 1;
        }
        self.epoch
    }
}

impl<'a> Simulator<'a> {
    pub fn new(graph: &'a Graph, model: &'a DiffusionModel) -> Self {
        Simulator { graph, model, forward: graph.forward() }
    }

    /// One cascade from `seeds`; returns the number of activated nodes.
    ///
    /// Cascade models flip each edge once, when its source activates. Other
    /// models sample a node's trigger set the first time an active
    /// in-neighbor reaches it and keep it for the rest of the run.
    pub fn run_once<R: Rng>(&self, scratch: &mut SimScratch, seeds: &[usize], rng: &mut R) -> usize {
        let epoch = scratch.next_epoch();
        scratch.queue.clear();
        for &s in seeds {
            if scratch.active[s] != epoch {
                scratch.active[s] = epoch;
                scratch.queue.push(s as u32);
            }
        }
        let mut head = 0;
        match self.model {
            DiffusionModel::IndependentCascade => {
                let p = self.graph.payload().expect("validated payload");
                while head < scratch.queue.len() {
                    let u = scratch.queue[head] as usize;
                    head += 1;
                    for (v, e) in self.forward.out_edges(u) {
                        if scratch.active[v] != epoch && rng.gen::<f64>() < p[e] {
                            scratch.active[v] = epoch;
                            scratch.queue.push(v as u32);
                        }
                    }
                }
            }
            _ => {
                while head < scratch.queue.len() {
                    let u = scratch.queue[head] as usize;
                    head += 1;
                    for (v, e) in self.forward.out_edges(u) {
                        if scratch.active[v] == epoch {
                            continue;
                        }
                        if scratch.sampled[v] != epoch {
                            scratch.sampled[v] = epoch;
                            scratch.trigger.clear();
                            self.model.sample_trigger_set(self.graph, v, rng, &mut scratch.trigger);
                            for &t in &scratch.trigger {
                                scratch.live[t] = epoch;
                            }
                        }
                        if scratch.live[e] == epoch {
                            scratch.active[v] = epoch;
                            scratch.queue.push(v as u32);
                        }
                    }
                }
            }
        }
        scratch.queue.len()
    }

    /// Mean activated count over `trials` independent cascades.
    pub fn estimate(&self, seeds: &[usize], trials: usize, key: StreamKey) -> SpreadEstimate {
        let (sum, sum_sq) = chunks(trials)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map_init(
                || SimScratch::new(self.graph),
                |scratch, (chunk, len)| {
                    let mut rng = key.chunk_rng(chunk);
                    let mut acc = (0u64, 0u128);
                    for _ in 0..len {
                        let x = self.run_once(scratch, seeds, &mut rng) as u64;
                        acc.0 += x;
                        acc.1 += (x as u128) * (x as u128);
                    }
                    acc
                },
            )
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        summarize(sum, sum_sq, trials)
    }

    /// Like [`Simulator::estimate`] but single-threaded, for callers that
    /// already parallelize across estimates.
    pub fn estimate_serial(&self, scratch: &mut SimScratch, seeds: &[usize], trials: usize, key: StreamKey) -> SpreadEstimate {
        let (mut sum, mut sum_sq) = (0u64, 0u128);
        for (chunk, len) in chunks(trials) {
            let mut rng = key.chunk_rng(chunk);
            for _ in 0..len {
                let x = self.run_once(scratch, seeds, &mut rng) as u64;
                sum += x;
                sum_sq += (x as u128) * (x as u128);
            }
        }
        summarize(sum, sum_sq, trials)
    }
}

fn summarize(sum: u64, sum_sq: u128, trials: usize) -> SpreadEstimate {
    if trials == 0 {
        return SpreadEstimate { mean: 0.0, trials, std_error: 0.0 };
    }
    let t = trials as f64;
    let mean = sum as f64 / t;
    let var = if trials > 1 {
        ((sum_sq as f64 - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    SpreadEstimate { mean, trials, std_error: (var / t).sqrt() }
}

/// Monte-Carlo estimate of the expected spread of `seeds`.
pub fn simulate_spread(
    graph: &Graph,
    model: &DiffusionModel,
    seeds: &[usize],
    trials: usize,
    key: StreamKey,
) -> Result<SpreadEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= graph.node_count()) {
        return Err(Error::NodeOutOfRange { node: bad, n: graph.node_count() });
    }
    Ok(Simulator::new(graph, model).estimate(seeds, trials, key))
}

/// Cap on joint realizations enumerated by [`ExactOracle`].
pub const MAX_REALIZATIONS: usize = 1 << 20;
/// Cap on seed sets enumerated by [`exhaustive_opt`].
pub const MAX_SEED_SETS: u64 = 10_000;

/// Exact spread oracle for graphs with at most 64 nodes.
///
/// Each distinct realization is stored as its probability plus, for every
/// node `u`, the bitmask of nodes reachable from `u` in that realization.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    n: usize,
    m: usize,
    in_degree: Vec<usize>,
    worlds: Vec<(f64, Vec<u64>)>,
}

impl ExactOracle {
    pub fn new(graph: &Graph, model: &DiffusionModel) -> Result<Self> {
        let n = graph.node_count();
        if n > 64 {
            return Err(Error::TooLarge(format!("{n} nodes; the exact oracle handles at most 64")));
        }
        model.validate(graph)?;
        let mut per_node = Vec::with_capacity(n);
        let mut total: usize = 1;
        for v in 0..n {
            let outcomes = model.trigger_outcomes(graph, v).ok_or_else(|| {
                Error::TooLarge(format!("trigger distribution of node {v} is not enumerable"))
            })?;
            total = total.saturating_mul(outcomes.len());
            if total > MAX_REALIZATIONS {
                return Err(Error::TooLarge(format!(
                    "more than {MAX_REALIZATIONS} joint trigger realizations"
                )));
            }
            per_node.push(outcomes);
        }

        let mut merged: HashMap<Vec<u64>, f64> = HashMap::new();
        let mut digits = vec![0usize; n];
        let mut succ = vec![0u64; n];
        for _ in 0..total {
            let mut prob = 1.0;
            succ.iter_mut().for_each(|s| *s = 0);
            for v in 0..n {
                let outcome = &per_node[v][digits[v]];
                prob *= outcome.probability;
                for &e in &outcome.edges {
                    succ[graph.edge_source(e)] |= 1 << v;
                }
            }
            let reach = closure(&succ);
            *merged.entry(reach).or_insert(0.0) += prob;
            // Mixed-radix increment.
            for v in 0..n {
                digits[v] += 1;
                if digits[v] < per_node[v].len() {
                    break;
                }
                digits[v] = 0;
            }
        }
        let mut worlds: Vec<(f64, Vec<u64>)> = merged.into_iter().map(|(r, p)| (p, r)).collect();
        worlds.sort_by(|a, b| a.1.cmp(&b.1));
        let in_degree = (0..n).map(|v| graph.in_edge_range(v).len()).collect();
        Ok(ExactOracle { n, m: graph.edge_count(), in_degree, worlds })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.m
    }

    /// Number of distinct reachability structures kept.
    pub fn distinct_realizations(&self) -> usize {
        self.worlds.len()
    }

    /// Exact expected spread of the node set encoded by `mask`.
    pub fn spread_mask(&self, mask: u64) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        self.worlds
            .iter()
            .map(|(p, reach)| {
                let mut r = 0u64;
                let mut bits = mask;
                while bits != 0 {
                    let u = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    r |= reach[u];
                }
                p * r.count_ones() as f64
            })
            .sum()
    }

    pub fn spread(&self, seeds: &[usize]) -> Result<f64> {
        Ok(self.spread_mask(self.mask_of(seeds)?))
    }

    fn mask_of(&self, seeds: &[usize]) -> Result<u64> {
        let mut mask = 0u64;
        for &s in seeds {
            if s >= self.n {
                return Err(Error::NodeOutOfRange { node: s, n: self.n });
            }
            mask |= 1 << s;
        }
        Ok(mask)
    }

    /// Visits `(probability, width)` for the RR set of every root in every
    /// realization, with the `1/n` root probability folded in.
    fn for_each_rr_width(&self, mut f: impl FnMut(f64, u64)) {
        let root_p = 1.0 / self.n as f64;
        for (p, reach) in &self.worlds {
            for root in 0..self.n {
                let width: usize = (0..self.n)
                    .filter(|&u| reach[u] & (1 << root) != 0)
                    .map(|u| self.in_degree[u])
                    .sum();
                f(p * root_p, width as u64);
            }
        }
    }

    /// Exact probability that a random RR set (uniform root) intersects the
    /// seeds encoded by `mask`.
    pub fn rr_hit_probability(&self, mask: u64) -> f64 {
        self.spread_mask(mask) / self.n as f64
    }

    /// Expected width of a random RR set.
    pub fn ept(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_rr_width(|p, w| acc += p * w as f64);
        acc
    }

    /// `n * E[kappa(R)]` for seed-set size `k`.
    pub fn kpt_via_kappa(&self, k: usize) -> f64 {
        let mut acc = 0.0;
        self.for_each_rr_width(|p, w| acc += p * kappa(w, self.m as u64, k));
        self.n as f64 * acc
    }

    /// Distribution of the node set formed by `k` independent draws with
    /// probability proportional to in-degree, as `mask -> probability`.
    pub fn in_degree_sample_sets(&self, k: usize) -> Result<BTreeMap<u64, f64>> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("in-degree sampling needs at least one edge".into()));
        }
        let mut dist: BTreeMap<u64, f64> = BTreeMap::from([(0, 1.0)]);
        for _ in 0..k {
            let mut next = BTreeMap::new();
            for (&mask, &p) in &dist {
                for v in 0..self.n {
                    if self.in_degree[v] == 0 {
                        continue;
                    }
                    let q = p * self.in_degree[v] as f64 / self.m as f64;
                    *next.entry(mask | (1 << v)).or_insert(0.0) += q;
                }
            }
            dist = next;
        }
        Ok(dist)
    }

    /// Expected spread of `k` in-degree-proportional node samples, computed
    /// from its definition.
    pub fn kpt_by_definition(&self, k: usize) -> Result<f64> {
        Ok(self
            .in_degree_sample_sets(k)?
            .into_iter()
            .map(|(mask, p)| p * self.spread_mask(mask))
            .sum())
    }

    /// `E[I({v*})]` with `v*` drawn proportionally to in-degree.
    pub fn in_degree_node_spread(&self) -> Result<f64> {
        self.kpt_by_definition(1)
    }

    /// Maximum expected spread over all size-`k` sets and the first maximizer
    /// in lexicographic order.
    pub fn opt(&self, k: usize) -> Result<(f64, Vec<usize>, BTreeMap<Vec<usize>, f64>)> {
        if k > self.n {
            return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {}", self.n)));
        }
        if binomial(self.n, k) > MAX_SEED_SETS {
            return Err(Error::TooLarge(format!("C({}, {k}) seed sets", self.n)));
        }
        let mut table = BTreeMap::new();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for set in combinations(self.n, k) {
            let s = self.spread(&set)?;
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, set.clone()));
            }
            table.insert(set, s);
        }
        let (value, set) = best.expect("at least one subset");
        Ok((value, set, table))
    }
}

/// Transitive closure over successor bitmasks; entry `u` includes `u`.
fn closure(succ: &[u64]) -> Vec<u64> {
    (0..succ.len())
        .map(|u| {
            let mut reach = 1u64 << u;
            let mut frontier = reach;
            while frontier != 0 {
                let mut next = 0u64;
                let mut bits = frontier;
                while bits != 0 {
                    let w = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    next |= succ[w];
                }
                frontier = next & !reach;
                reach |= next;
            }
            reach
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

/// All size-`k` subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                current = Some(next);
                break;
            }
        }
        Some(out)
    })
}

/// Exact expected spread of `seeds`.
pub fn exact_spread(graph: &Graph, model: &DiffusionModel, seeds: &[usize]) -> Result<f64> {
    ExactOracle::new(graph, model)?.spread(seeds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactOracleResult {
    pub opt_value: f64,
    pub opt_set: Vec<usize>,
    /// Exact spread of every size-`k` set.
    pub exact_spread: BTreeMap<Vec<usize>, f64>,
    /// `None` when the graph has no edges.
    pub kpt_exact: Option<f64>,
    pub ept_exact: f64,
}

/// Exhaustive OPT search plus exact EPT and KPT.
pub fn exhaustive_opt(graph: &Graph, model: &DiffusionModel, k: usize) -> Result<ExactOracleResult> {
    let oracle = ExactOracle::new(graph, model)?;
    let (opt_value, opt_set, exact_spread) = oracle.opt(k)?;
    let kpt_exact = if graph.edge_count() > 0 { Some(oracle.kpt_via_kappa(k)) } else { None };
    Ok(ExactOracleResult { opt_value, opt_set, exact_spread, kpt_exact, ept_exact: oracle.ept() })
}
