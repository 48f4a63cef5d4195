//! The two-phase TIM / TIM+ pipeline.
//!
//! 1. Parameter estimation: adaptive sampling of `kappa(R)` until its running
//!    mean clears `2^-i`, giving `KPT*`, a lower bound on OPT.
//! 2. (TIM+ only) Refinement: greedy seeds on the last estimation batch are
//!    validated on fresh RR sets, giving a tighter bound `KPT+`.
//! 3. Node selection: `theta = ceil(lambda / bound)` fresh RR sets and greedy
//!    maximum coverage over them.
//!
//! All counts are rounded up. `ell` is inflated by `1 + ln 2 / ln n` (TIM)
//! or `1 + ln 3 / ln n` (TIM+) before any phase runs.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::coverage::{sample_covered_count, RrCollection};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::DiffusionModel;
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[serde(rename = "tim")]
    Tim,
    #[serde(rename = "tim+")]
    TimPlus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimParams {
    pub k: usize,
    pub epsilon: f64,
    pub ell: f64,
    /// Overrides the default refinement accuracy (TIM+ only).
    pub epsilon_prime: Option<f64>,
    pub variant: Variant,
    pub master_seed: u64,
}

impl TimParams {
    pub fn new(k: usize, epsilon: f64, ell: f64, variant: Variant) -> Self {
        TimParams { k, epsilon, ell, epsilon_prime: None, variant, master_seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidParameter(format!("k must be in [1, {n}], got {}", self.k)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be in (0, 1], got {}", self.epsilon)));
        }
        if !(self.ell >= 0.5) {
            return Err(Error::InvalidParameter(format!("ell must be at least 0.5, got {}", self.ell)));
        }
        if let Some(e) = self.epsilon_prime {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidParameter(format!("epsilon' must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

/// Quantities computed along the way, for diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EstimationTrace {
    pub kpt_star: f64,
    pub kpt_plus: Option<f64>,
    /// `ell` after the success-probability inflation.
    pub ell_effective: f64,
    pub lambda: f64,
    pub epsilon_prime: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub theta_prime: Option<u64>,
    pub theta: u64,
    /// Estimation iteration that produced `kpt_star`; 0 if none did.
    pub iteration_reached: usize,
    /// Per-iteration sums of `kappa` and RR-set counts.
    pub iteration_sums: Vec<f64>,
    pub iteration_counts: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub estimation: f64,
    pub refinement: f64,
    pub selection: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    /// Dense node indices in pick order.
    pub seeds: Vec<usize>,
    /// Original ids of `seeds`.
    pub labels: Vec<String>,
    pub covered_fraction: Option<f64>,
    pub estimated_spread: f64,
    pub trace: Option<EstimationTrace>,
    pub timings: PhaseTimings,
    pub rr_sets_generated: u64,
}

/// `ln C(n, k)` as a sum of `min(k, n - k)` logarithms.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// `lambda = (8 + 2 eps) n (ell ln n + ln C(n, k) + ln 2) / eps^2`.
pub fn compute_lambda(n: usize, k: usize, epsilon: f64, ell: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must be in [1, {n}], got {k}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("lambda needs n >= 2".into()));
    }
    let nf = n as f64;
    Ok((8.0 + 2.0 * epsilon) * nf * (ell * nf.ln() + ln_binomial(n, k) + 2f64.ln()) / (epsilon * epsilon))
}

/// Default refinement accuracy `5 * cbrt(ell * eps^2 / (k + ell))`, never
/// below `eps / sqrt(k)`.
pub fn default_epsilon_prime(k: usize, epsilon: f64, ell: f64) -> f64 {
    let heuristic = 5.0 * (ell * epsilon * epsilon / (k as f64 + ell)).cbrt();
    heuristic.max(epsilon / (k as f64).sqrt())
}

/// Batch size of estimation iteration `i`:
/// `ceil((6 ell ln n + 6 ln log2 n) * 2^i)`.
pub fn iteration_size(n: usize, ell: f64, i: usize) -> u64 {
    let nf = n as f64;
    ((6.0 * ell * nf.ln() + 6.0 * nf.log2().ln()) * 2f64.powi(i as i32)).ceil() as u64
}

/// Number of estimation iterations, `floor(log2 n) - 1` (possibly zero).
pub fn iteration_limit(n: usize) -> usize {
    (n.max(1).ilog2() as usize).saturating_sub(1)
}

#[derive(Clone, Debug)]
pub struct KptEstimate {
    pub kpt_star: f64,
    /// RR sets of the final iteration run; empty when no iteration ran.
    pub last_iteration_sets: RrCollection,
    pub iteration_reached: usize,
    pub iteration_sums: Vec<f64>,
    pub iteration_counts: Vec<u64>,
}

impl KptEstimate {
    pub fn rr_sets_generated(&self) -> u64 {
        self.iteration_counts.iter().sum()
    }
}

/// Adaptive estimation of `KPT*`.
pub fn kpt_estimation(graph: &Graph, model: &DiffusionModel, k: usize, ell: f64, key: StreamKey) -> KptEstimate {
    let n = graph.node_count();
    let m = graph.edge_count() as u64;
    let mut est = KptEstimate {
        kpt_star: 1.0,
        last_iteration_sets: RrCollection::new(n),
        iteration_reached: 0,
        iteration_sums: Vec::new(),
        iteration_counts: Vec::new(),
    };
    for i in 1..=iteration_limit(n) {
        let count = iteration_size(n, ell, i);
        let sets = RrCollection::sample(graph, model, count as usize, key.derive(i as u64));
        let sum = sets.kappa_sum(m, k);
        est.iteration_sums.push(sum);
        est.iteration_counts.push(count);
        est.last_iteration_sets = sets;
        if sum / count as f64 > 0.5f64.powi(i as i32) {
            est.kpt_star = (n as f64 * sum / (2.0 * count as f64)).max(1.0);
            est.iteration_reached = i;
            return est;
        }
    }
    est
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub kpt_plus: f64,
    pub kpt_prime: f64,
    pub lambda_prime: f64,
    pub theta_prime: u64,
    pub fraction: f64,
    /// Greedy seeds chosen on the reused sets.
    pub candidate_seeds: Vec<usize>,
}

/// Tightens `kpt_star` by validating greedy seeds from the last estimation
/// batch on `ceil(lambda' / kpt_star)` fresh RR sets.
#[allow(clippy::too_many_arguments)]
pub fn refine_kpt(
    graph: &Graph,
    model: &DiffusionModel,
    k: usize,
    ell: f64,
    kpt_star: f64,
    last_iteration_sets: &RrCollection,
    epsilon_prime: f64,
    key: StreamKey,
) -> Refinement {
    let n = graph.node_count() as f64;
    let lambda_prime = (2.0 + epsilon_prime) * ell * n * n.ln() / (epsilon_prime * epsilon_prime);
    if last_iteration_sets.is_empty() {
        return Refinement {
            kpt_plus: kpt_star,
            kpt_prime: 0.0,
            lambda_prime,
            theta_prime: 0,
            fraction: 0.0,
            candidate_seeds: Vec::new(),
        };
    }
    let candidate_seeds = last_iteration_sets.greedy_max_coverage(k).seeds;
    let theta_prime = (lambda_prime / kpt_star).ceil().max(1.0) as u64;
    let covered = sample_covered_count(graph, model, theta_prime as usize, &candidate_seeds, key);
    let fraction = covered as f64 / theta_prime as f64;
    let kpt_prime = fraction * n / (1.0 + epsilon_prime);
    Refinement {
        kpt_plus: kpt_prime.max(kpt_star),
        kpt_prime,
        lambda_prime,
        theta_prime,
        fraction,
        candidate_seeds,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub seeds: Vec<usize>,
    pub covered: usize,
    pub theta: u64,
}

impl Selection {
    pub fn covered_fraction(&self) -> f64 {
        self.covered as f64 / self.theta as f64
    }
}

/// Greedy seed selection over an existing collection.
pub fn select_from_collection(collection: &RrCollection, k: usize) -> Result<Selection> {
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let cover = collection.greedy_max_coverage(k);
    Ok(Selection { seeds: cover.seeds, covered: cover.covered, theta: collection.len() as u64 })
}

/// Samples `theta` fresh RR sets and picks `k` seeds by greedy coverage.
pub fn node_selection(
    graph: &Graph,
    model: &DiffusionModel,
    k: usize,
    theta: u64,
    key: StreamKey,
) -> Result<Selection> {
    if theta == 0 {
        return Err(Error::InvalidParameter("theta must be at least 1".into()));
    }
    let sets = RrCollection::sample(graph, model, theta as usize, key);
    select_from_collection(&sets, k)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Runs TIM or TIM+ end to end.
pub fn run_tim(graph: &Graph, model: &DiffusionModel, params: &TimParams) -> Result<SeedResult> {
    let n = graph.node_count();
    params.validate(n)?;
    model.validate(graph)?;
    let start = Instant::now();
    if n == 1 {
        return Ok(SeedResult {
            seeds: vec![0],
            labels: vec![graph.label(0).to_string()],
            covered_fraction: Some(1.0),
            estimated_spread: 1.0,
            trace: None,
            timings: PhaseTimings { total: secs(start.elapsed()), ..Default::default() },
            rr_sets_generated: 0,
        });
    }

    let nf = n as f64;
    let inflation = match params.variant {
        Variant::Tim => 1.0 + 2f64.ln() / nf.ln(),
        Variant::TimPlus => 1.0 + 3f64.ln() / nf.ln(),
    };
    let ell = params.ell * inflation;
    let key = StreamKey::new(params.master_seed);
    let lambda = compute_lambda(n, params.k, params.epsilon, ell)?;

    let t0 = Instant::now();
    let estimate = kpt_estimation(graph, model, params.k, ell, key.derive(1));
    let estimation_time = t0.elapsed();
    let mut rr_sets = estimate.rr_sets_generated();

    let mut trace = EstimationTrace {
        kpt_star: estimate.kpt_star,
        ell_effective: ell,
        lambda,
        iteration_reached: estimate.iteration_reached,
        iteration_sums: estimate.iteration_sums.clone(),
        iteration_counts: estimate.iteration_counts.clone(),
        ..Default::default()
    };

    let t1 = Instant::now();
    let bound = match params.variant {
        Variant::Tim => estimate.kpt_star,
        Variant::TimPlus => {
            let eps_prime = params
                .epsilon_prime
                .unwrap_or_else(|| default_epsilon_prime(params.k, params.epsilon, ell));
            let r = refine_kpt(
                graph,
                model,
                params.k,
                ell,
                estimate.kpt_star,
                &estimate.last_iteration_sets,
                eps_prime,
                key.derive(2),
            );
            rr_sets += r.theta_prime;
            trace.kpt_plus = Some(r.kpt_plus);
            trace.epsilon_prime = Some(eps_prime);
            trace.lambda_prime = Some(r.lambda_prime);
            trace.theta_prime = Some(r.theta_prime);
            r.kpt_plus
        }
    };
    let refinement_time = t1.elapsed();
    drop(estimate);

    let theta = (lambda / bound).ceil().max(1.0) as u64;
    trace.theta = theta;
    let t2 = Instant::now();
    let selection = node_selection(graph, model, params.k, theta, key.derive(3))?;
    let selection_time = t2.elapsed();
    rr_sets += theta;

    let covered_fraction = selection.covered_fraction();
    Ok(SeedResult {
        labels: selection.seeds.iter().map(|&s| graph.label(s).to_string()).collect(),
        seeds: selection.seeds,
        covered_fraction: Some(covered_fraction),
        estimated_spread: nf * covered_fraction,
        trace: Some(trace),
        timings: PhaseTimings {
            estimation: secs(estimation_time),
            refinement: secs(refinement_time),
            selection: secs(selection_time),
            total: secs(start.elapsed()),
        },
        rr_sets_generated: rr_sets,
    })
}
