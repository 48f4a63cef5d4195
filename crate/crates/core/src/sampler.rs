//! Random reverse-reachable (RR) sets.
//!
//! An RR set is grown by a randomized BFS over incoming edges from a root
//! drawn uniformly at random. Each visited node samples its trigger set once,
//! the first time it is dequeued, which is the lazy equivalent of drawing a
//! whole live-edge graph up front.

use rand::Rng;

use crate::graph::Graph;
use crate::models::DiffusionModel;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RrSet {
    pub root: u32,
    /// Distinct members in BFS order; `members[0] == root`.
    pub members: Vec<u32>,
    /// Number of edges pointing into members.
    pub width: u64,
}

/// Reusable RR-set generator. Holds scratch buffers sized to the graph so
/// repeated sampling does not allocate.
pub struct RrSampler<'a> {
    graph: &'a Graph,
    model: &'a DiffusionModel,
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<u32>,
    trigger: Vec<usize>,
}

impl<'a> RrSampler<'a> {
    pub fn new(graph: &'a Graph, model: &'a DiffusionModel) -> Self {
        RrSampler {
            graph,
            model,
            stamp: vec![0; graph.node_count()],
            epoch: 0,
            queue: Vec::new(),
            trigger: Vec::new(),
        }
    }

    pub fn graph(&self) -> &'a Graph {
        self.graph
    }

    /// Samples an RR set for a uniformly random root.
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> RrSet {
        let root = rng.gen_range(0..self.graph.node_count());
        self.sample_from(root, rng)
    }

    /// Samples an RR set for a fixed root.
    pub fn sample_from<R: Rng>(&mut self, root: usize, rng: &mut R) -> RrSet {
        let width = self.fill(root, rng);
        RrSet { root: root as u32, members: self.queue.clone(), width }
    }

    /// Runs the BFS for a uniform root and returns the members (borrowed
    /// from scratch space) and the width.
    pub fn sample_into<R: Rng>(&mut self, rng: &mut R) -> (&[u32], u64) {
        let root = rng.gen_range(0..self.graph.node_count());
        let width = self.fill(root, rng);
        (&self.queue, width)
    }

    fn fill<R: Rng>(&mut self, root: usize, rng: &mut R) -> u64 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        self.queue.clear();
        self.queue.push(root as u32);
        self.stamp[root] = epoch;
        let mut width = 0u64;
        let mut head = 0;
        while head < self.queue.len() {
            let v = self.queue[head] as usize;
            head += 1;
            width += self.graph.in_degree_of(v) as u64;
            self.trigger.clear();
            self.model.sample_trigger_set(self.graph, v, rng, &mut self.trigger);
            for &e in &self.trigger {
                let u = self.graph.edge_source(e);
                if self.stamp[u] != epoch {
                    self.stamp[u] = epoch;
                    self.queue.push(u as u32);
                }
            }
        }
        width
    }
}

/// Samples one RR set with a throwaway sampler.
pub fn generate_rr_set<R: Rng>(graph: &Graph, model: &DiffusionModel, rng: &mut R) -> RrSet {
    RrSampler::new(graph, model).sample(rng)
}

/// `1 - (1 - width/m)^k`, the probability that `k` uniformly drawn edges hit
/// at least one edge counted by `width`.
///
/// Evaluated as `-expm1(k * ln1p(-width/m))` so tiny ratios with large `k`
/// keep full precision. Edgeless graphs (`m = 0`) give 0.
pub fn kappa(width: u64, m: u64, k: usize) -> f64 {
    if m == 0 || width == 0 {
        return 0.0;
    }
    if width >= m {
        return 1.0;
    }
    let ratio = width as f64 / m as f64;
    -(k as f64 * (-ratio).ln_1p()).exp_m1()
}
