//! Diffusion models expressed as per-node triggering distributions.
//!
//! A trigger set of `v` is a subset of `v`'s incoming edges, identified by
//! their reverse-layout edge indices (so parallel edges stay distinct). Under
//! the cascade models each incoming edge joins independently with its
//! probability; under linear threshold at most one incoming edge is picked,
//! with probability equal to its weight.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-node weights must sum to one within this tolerance under LT.
pub const LT_WEIGHT_TOLERANCE: f64 = 1e-9;

/// Largest in-degree for which an independent-edge trigger distribution is
/// enumerated outcome by outcome.
const MAX_ENUMERATED_IN_DEGREE: usize = 20;

/// One outcome of a triggering distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerOutcome {
    pub probability: f64,
    /// Reverse-layout indices of the incoming edges in the trigger set.
    pub edges: Vec<usize>,
}

/// A user-supplied triggering distribution.
///
/// Sampling cost should be proportional to the number of incoming edges
/// examined; RR-set generation calls `sample` once per visited node.
pub trait TriggerDistribution: Send + Sync + fmt::Debug {
    /// Appends the sampled trigger set of `v` to `out`.
    fn sample(&self, graph: &Graph, v: usize, rng: &mut dyn RngCore, out: &mut Vec<usize>);

    /// The complete outcome list for `v`, if it is small enough to enumerate.
    /// Exact oracles require this; sampling does not.
    fn outcomes(&self, _graph: &Graph, _v: usize) -> Option<Vec<TriggerOutcome>> {
        None
    }
}

#[derive(Clone, Debug)]
pub enum DiffusionModel {
    /// Edge payloads are propagation probabilities.
    IndependentCascade,
    /// Edge payloads are normalized incoming weights.
    LinearThreshold,
    Triggering(Arc<dyn TriggerDistribution>),
}

impl DiffusionModel {
    /// Checks that `graph` carries the payload this model reads.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        match self {
            DiffusionModel::IndependentCascade => {
                let p = graph.payload().ok_or_else(|| {
                    Error::Validation("independent cascade needs edge probabilities".into())
                })?;
                if let Some(bad) = p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Validation(format!("probability {bad} outside [0, 1]")));
                }
                Ok(())
            }
            DiffusionModel::LinearThreshold => {
                if graph.edge_count() > 0 && !graph.has_payload() {
                    return Err(Error::Validation("linear threshold needs edge weights".into()));
                }
                for v in 0..graph.node_count() {
                    let Some(w) = graph.in_payload(v) else { continue };
                    if w.is_empty() {
                        continue;
                    }
                    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                        return Err(Error::Validation(format!("negative weight into node {v}")));
                    }
                    let sum: f64 = w.iter().sum();
                    if (sum - 1.0).abs() > LT_WEIGHT_TOLERANCE {
                        return Err(Error::Validation(format!(
                            "weights into node {v} sum to {sum}, expected 1"
                        )));
                    }
                }
                Ok(())
            }
            DiffusionModel::Triggering(_) => Ok(()),
        }
    }

    /// Samples the trigger set of `v`, appending reverse-layout edge indices
    /// to `out`.
    #[inline]
    pub fn sample_trigger_set<R: Rng>(&self, graph: &Graph, v: usize, rng: &mut R, out: &mut Vec<usize>) {
        match self {
            DiffusionModel::IndependentCascade => {
                let p = graph.payload().expect("validated payload");
                for e in graph.in_edge_range(v) {
                    if rng.gen::<f64>() < p[e] {
                        out.push(e);
                    }
                }
            }
            DiffusionModel::LinearThreshold => {
                if let Some(e) = pick_weighted_edge(graph, v, rng.gen::<f64>()) {
                    out.push(e);
                }
            }
            DiffusionModel::Triggering(dist) => dist.sample(graph, v, rng, out),
        }
    }

    /// Enumerates the trigger distribution of `v`, dropping zero-probability
    /// outcomes.
    pub fn trigger_outcomes(&self, graph: &Graph, v: usize) -> Option<Vec<TriggerOutcome>> {
        match self {
            DiffusionModel::IndependentCascade => independent_outcomes(graph, v),
            DiffusionModel::LinearThreshold => {
                let mut out = Vec::new();
                let mut total = 0.0;
                if let Some(w) = graph.in_payload(v) {
                    for (e, &x) in graph.in_edge_range(v).zip(w) {
                        total += x;
                        if x > 0.0 {
                            out.push(TriggerOutcome { probability: x, edges: vec![e] });
                        }
                    }
                }
                let rest = 1.0 - total;
                if rest > LT_WEIGHT_TOLERANCE {
                    out.push(TriggerOutcome { probability: rest, edges: Vec::new() });
                }
                if out.is_empty() {
                    out.push(TriggerOutcome { probability: 1.0, edges: Vec::new() });
                }
                Some(out)
            }
            DiffusionModel::Triggering(dist) => dist.outcomes(graph, v),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiffusionModel::IndependentCascade => "ic",
            DiffusionModel::LinearThreshold => "lt",
            DiffusionModel::Triggering(_) => "trigger",
        }
    }
}

/// Walks the cumulative weights of `v`'s incoming edges with `x ∈ [0, 1)`.
/// Returns `None` when `v` has no incoming edges or `x` falls past the total.
#[inline]
fn pick_weighted_edge(graph: &Graph, v: usize, x: f64) -> Option<usize> {
    let w = graph.in_payload(v)?;
    let mut acc = 0.0;
    for (e, &wi) in graph.in_edge_range(v).zip(w) {
        acc += wi;
        if x < acc {
            return Some(e);
        }
    }
    None
}

fn independent_outcomes(graph: &Graph, v: usize) -> Option<Vec<TriggerOutcome>> {
    let range = graph.in_edge_range(v);
    if range.len() > MAX_ENUMERATED_IN_DEGREE {
        return None;
    }
    let p = graph.payload()?;
    let edges: Vec<usize> = range.collect();
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << edges.len()) {
        let mut prob = 1.0;
        let mut chosen = Vec::new();
        for (bit, &e) in edges.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                prob *= p[e];
                chosen.push(e);
            } else {
                prob *= 1.0 - p[e];
            }
        }
        if prob > 0.0 {
            out.push(TriggerOutcome { probability: prob, edges: chosen });
        }
    }
    Some(out)
}

/// Independent-cascade semantics packaged as a plug-in triggering
/// distribution: every incoming edge joins the trigger set independently
/// with the probability stored in the graph payload.
#[derive(Clone, Copy, Debug, Default)]
pub struct IndependentTrigger;

impl TriggerDistribution for IndependentTrigger {
    fn sample(&self, graph: &Graph, v: usize, rng: &mut dyn RngCore, out: &mut Vec<usize>) {
        let p = graph.payload().expect("independent trigger needs edge probabilities");
        for e in graph.in_edge_range(v) {
            if rng.gen::<f64>() < p[e] {
                out.push(e);
            }
        }
    }

    fn outcomes(&self, graph: &Graph, v: usize) -> Option<Vec<TriggerOutcome>> {
        independent_outcomes(graph, v)
    }
}

/// Weighted cascade: every edge into `v` gets probability `1 / in_degree(v)`.
pub fn assign_weighted_cascade(graph: &Graph) -> Graph {
    let mut payload = vec![0.0; graph.edge_count()];
    for v in 0..graph.node_count() {
        let range = graph.in_edge_range(v);
        let p = 1.0 / range.len() as f64;
        for e in range {
            payload[e] = p;
        }
    }
    graph.with_payload(payload).expect("payload sized to edge count")
}

/// Random linear-threshold weights: each incoming edge draws from
/// Uniform[0, 1), then the draws of every node are normalized to sum to one.
pub fn assign_lt_uniform<R: Rng>(graph: &Graph, rng: &mut R) -> Graph {
    let mut payload = vec![0.0; graph.edge_count()];
    for v in 0..graph.node_count() {
        let range = graph.in_edge_range(v);
        if range.is_empty() {
            continue;
        }
        let slot = &mut payload[range];
        loop {
            for x in slot.iter_mut() {
                *x = rng.gen::<f64>();
            }
            let sum: f64 = slot.iter().sum();
            if sum > 0.0 {
                slot.iter_mut().for_each(|x| *x /= sum);
                break;
            }
        }
    }
    graph.with_payload(payload).expect("payload sized to edge count")
}

/// Model names accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Independent cascade with probabilities read from the input.
    Ic,
    /// Weighted cascade, `p = 1 / in-degree`.
    Wc,
    /// Linear threshold with uniform random normalized weights.
    Lt,
    /// Independent cascade routed through the plug-in triggering interface.
    Trigger,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ic" => Ok(ModelKind::Ic),
            "wc" => Ok(ModelKind::Wc),
            "lt" => Ok(ModelKind::Lt),
            "trigger" => Ok(ModelKind::Trigger),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ic => "ic",
            ModelKind::Wc => "wc",
            ModelKind::Lt => "lt",
            ModelKind::Trigger => "trigger",
        })
    }
}

impl ModelKind {
    /// Attaches the payload `self` needs to a freshly loaded graph and returns
    /// the model to run with it.
    pub fn prepare<R: Rng>(self, graph: &Graph, rng: &mut R) -> Result<(Graph, DiffusionModel)> {
        let (graph, model) = match self {
            ModelKind::Ic | ModelKind::Trigger => {
                if !graph.has_payload() && graph.edge_count() > 0 {
                    return Err(Error::Validation(format!(
                        "model `{self}` requires a probability column in the edge list"
                    )));
                }
                let model = if self == ModelKind::Ic {
                    DiffusionModel::IndependentCascade
                } else {
                    DiffusionModel::Triggering(Arc::new(IndependentTrigger))
                };
                let g = if graph.has_payload() { graph.clone() } else { assign_weighted_cascade(graph) };
                (g, model)
            }
            ModelKind::Wc => {
                if graph.has_payload() {
                    return Err(Error::Validation(
                        "model `wc` derives probabilities from in-degrees; remove the probability column".into(),
                    ));
                }
                (assign_weighted_cascade(graph), DiffusionModel::IndependentCascade)
            }
            ModelKind::Lt => {
                let g = if graph.has_payload() { graph.clone() } else { assign_lt_uniform(graph, rng) };
                (g, DiffusionModel::LinearThreshold)
            }
        };
        model.validate(&graph)?;
        Ok((graph, model))
    }
}
