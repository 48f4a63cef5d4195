use proptest::prelude::*;

use influmax::coverage::RrCollection;
use influmax::evaluator::ExactOracle;
use influmax::greedy::{greedy_select, GreedyConfig};
use influmax::models::assign_weighted_cascade;
use influmax::rng::StreamKey;
use influmax::tim::{run_tim, SeedResult, TimParams, Variant};
use influmax::{DiffusionModel, Graph};

const IC: DiffusionModel = DiffusionModel::IndependentCascade;

/// Small IC graph: `n` nodes, distinct edges, probabilities in {0.2, ..., 1}.
fn arb_ic_graph(max_n: usize, max_m: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::btree_map((0..n, 0..n), 1usize..=5, 0..=max_m).prop_map(move |edges| {
            let edges = edges.into_iter().filter(|((u, v), _)| u != v).map(|((u, v), p)| (u, v, p as f64 / 5.0));
            Graph::from_weighted_edges(n, edges).unwrap()
        })
    })
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn strip_timings(mut r: SeedResult) -> SeedResult {
    r.timings = Default::default();
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rr_coverage_estimates_spread(g in arb_ic_graph(6, 10), pick in any::<u64>(), seed in any::<u64>()) {
        const SETS: usize = 20_000;
        let n = g.node_count();
        let seeds: Vec<usize> = (0..n).filter(|v| pick >> v & 1 == 1).collect();
        prop_assume!(!seeds.is_empty());
        let exact = ExactOracle::new(&g, &IC).unwrap().spread(&seeds).unwrap();
        let f = RrCollection::sample(&g, &IC, SETS, StreamKey::new(seed)).fraction_covered(&seeds).unwrap();
        let se = n as f64 * (f * (1.0 - f) / SETS as f64).sqrt();
        prop_assert!((n as f64 * f - exact).abs() <= 5.0 * se + 1e-9, "n·F = {} exact = {exact}", n as f64 * f);
    }

    #[test]
    fn exact_spread_is_monotone_and_submodular(g in arb_ic_graph(6, 10), a in any::<u8>(), b in any::<u8>(), x in 0usize..6) {
        let n = g.node_count();
        let oracle = ExactOracle::new(&g, &IC).unwrap();
        let x = x % n;
        let small = a as u64 & b as u64 & ((1 << n) - 1) & !(1 << x);
        let large = (a as u64 | small) & ((1 << n) - 1) & !(1 << x);
        let f = |m: u64| oracle.spread_mask(m);
        prop_assert!(f(small) <= f(large) + 1e-12);
        let gain_small = f(small | 1 << x) - f(small);
        let gain_large = f(large | 1 << x) - f(large);
        prop_assert!(gain_large <= gain_small + 1e-12);
    }

    #[test]
    fn tim_output_shape(g in arb_ic_graph(12, 24), k in 1usize..4, plus in any::<bool>(), seed in any::<u64>()) {
        let k = k.min(g.node_count());
        let variant = if plus { Variant::TimPlus } else { Variant::Tim };
        let r = run_tim(&g, &IC, &TimParams::new(k, 0.5, 1.0, variant).with_seed(seed)).unwrap();
        let mut sorted = r.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        prop_assert!(r.seeds.iter().all(|&s| s < g.node_count()));
        prop_assert!(r.estimated_spread <= g.node_count() as f64);
        let t = r.trace.unwrap();
        prop_assert!(t.kpt_star >= 1.0);
        prop_assert!(t.theta >= 1);
        if plus {
            prop_assert!(t.kpt_plus.unwrap() >= t.kpt_star);
        }
    }

    #[test]
    fn coverage_picks_are_nested(sets in prop::collection::vec(prop::collection::vec(0u32..8, 1..5), 0..15), k in 1usize..8) {
        let c = RrCollection::from_sets(8, &sets);
        let shorter = c.greedy_max_coverage(k);
        let longer = c.greedy_max_coverage(k + 1);
        prop_assert_eq!(&longer.seeds[..k], &shorter.seeds[..]);
        prop_assert!(longer.covered >= shorter.covered);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let edges: Vec<(usize, usize)> = (0..400).flat_map(|u| [(u, (u * 7 + 1) % 400), (u, (u * 31 + 3) % 400)]).collect();
    let g = assign_weighted_cascade(&Graph::from_edges(400, edges).unwrap());
    for variant in [Variant::Tim, Variant::TimPlus] {
        let params = TimParams::new(5, 0.3, 1.0, variant).with_seed(17);
        let one = strip_timings(in_pool(1, || run_tim(&g, &IC, &params).unwrap()));
        let four = strip_timings(in_pool(4, || run_tim(&g, &IC, &params).unwrap()));
        assert_eq!(one, four);
    }
    let cfg = GreedyConfig { r: 500, lazy: false, master_seed: 3, time_budget: None };
    let one = strip_timings(in_pool(1, || greedy_select(&g, &IC, 3, &cfg).unwrap()));
    let four = strip_timings(in_pool(4, || greedy_select(&g, &IC, 3, &cfg).unwrap()));
    assert_eq!(one, four);
}

#[test]
fn lazy_and_eager_greedy_reach_the_same_spread() {
    let g = Graph::from_weighted_edges(
        7,
        [(0, 1, 0.6), (0, 2, 0.3), (1, 3, 0.5), (2, 3, 0.4), (3, 4, 0.7), (5, 6, 0.9), (6, 4, 0.2)],
    )
    .unwrap();
    let oracle = ExactOracle::new(&g, &IC).unwrap();
    let spread = |lazy| {
        let cfg = GreedyConfig { r: 20_000, lazy, master_seed: 5, time_budget: None };
        let r = greedy_select(&g, &IC, 2, &cfg).unwrap();
        oracle.spread(&r.seeds).unwrap()
    };
    let (lazy, eager) = (spread(true), spread(false));
    let (opt, _, _) = oracle.opt(2).unwrap();
    assert!((lazy - eager).abs() <= 0.02 * opt, "lazy {lazy} eager {eager}");
}
