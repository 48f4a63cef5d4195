//! Collections of RR sets and greedy maximum coverage over them.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::DiffusionModel;
use crate::rng::{chunks, StreamKey};
use crate::sampler::{kappa, RrSampler};

/// A bag of RR sets in flat storage: set `j` occupies
/// `members[offsets[j]..offsets[j + 1]]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RrCollection {
    node_count: usize,
    offsets: Vec<usize>,
    members: Vec<u32>,
    widths: Vec<u64>,
}

/// Result of greedy maximum coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    /// Picked nodes in pick order.
    pub seeds: Vec<usize>,
    /// Number of sets intersecting the picked nodes.
    pub covered: usize,
    /// `(node, set)` incidences touched while indexing and covering.
    pub incidence_visits: usize,
}

impl RrCollection {
    pub fn new(node_count: usize) -> Self {
        RrCollection { node_count, offsets: vec![0], members: Vec::new(), widths: Vec::new() }
    }

    /// Builds a collection from explicit member lists with zero widths.
    pub fn from_sets<I, S>(node_count: usize, sets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u32]>,
    {
        let mut c = RrCollection::new(node_count);
        for s in sets {
            c.push(s.as_ref(), 0);
        }
        c
    }

    pub fn push(&mut self, members: &[u32], width: u64) {
        self.members.extend_from_slice(members);
        self.offsets.push(self.members.len());
        self.widths.push(width);
    }

    pub fn append(&mut self, other: RrCollection) {
        let base = self.members.len();
        self.members.extend(other.members);
        self.offsets.extend(other.offsets[1..].iter().map(|o| o + base));
        self.widths.extend(other.widths);
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn set(&self, j: usize) -> &[u32] {
        &self.members[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn width(&self, j: usize) -> u64 {
        self.widths[j]
    }

    pub fn widths(&self) -> &[u64] {
        &self.widths
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |j| self.set(j))
    }

    /// Total number of `(node, set)` incidences.
    pub fn total_size(&self) -> usize {
        self.members.len()
    }

    /// Samples `count` fresh random RR sets. Chunk `c` of the work draws from
    /// stream `c` of `key`, so the output is independent of thread count.
    pub fn sample(graph: &Graph, model: &DiffusionModel, count: usize, key: StreamKey) -> Self {
        let parts: Vec<RrCollection> = chunks(count)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map_init(
                || RrSampler::new(graph, model),
                |sampler, (chunk, len)| {
                    let mut rng = key.chunk_rng(chunk);
                    let mut part = RrCollection::new(graph.node_count());
                    for _ in 0..len {
                        let (members, width) = sampler.sample_into(&mut rng);
                        part.push(members, width);
                    }
                    part
                },
            )
            .collect();
        let mut out = RrCollection::new(graph.node_count());
        out.members.reserve(parts.iter().map(|p| p.members.len()).sum());
        for p in parts {
            out.append(p);
        }
        out
    }

    /// Sum of `kappa` over all sets.
    pub fn kappa_sum(&self, m: u64, k: usize) -> f64 {
        self.widths.iter().map(|&w| kappa(w, m, k)).sum()
    }

    /// Number of sets that intersect `seeds`.
    pub fn covered_by(&self, seeds: &[usize]) -> usize {
        let mut mask = vec![false; self.node_count];
        for &s in seeds {
            if s < self.node_count {
                mask[s] = true;
            }
        }
        self.iter().filter(|set| set.iter().any(|&u| mask[u as usize])).count()
    }

    /// Fraction of sets that intersect `seeds`.
    pub fn fraction_covered(&self, seeds: &[usize]) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyCollection);
        }
        Ok(self.covered_by(seeds) as f64 / self.len() as f64)
    }

    /// Greedy maximum coverage: `min(k, n)` rounds, each picking the node in
    /// the most still-uncovered sets, smallest id first on ties. Once every
    /// set is covered the remaining picks are the smallest unused ids.
    ///
    /// Runs a lazy max-heap over `(count, Reverse(node))`; stale entries are
    /// refreshed on pop. Each incidence is visited at most four times: twice
    /// to build the node-to-set index, once when its set is covered, and once
    /// when the index of the picked node is scanned.
    pub fn greedy_max_coverage(&self, k: usize) -> Coverage {
        let n = self.node_count;
        let quota = k.min(n);

        // node -> set index, CSR.
        let mut count = vec![0usize; n];
        let mut visits = 0usize;
        for &u in &self.members {
            count[u as usize] += 1;
            visits += 1;
        }
        let mut index_offsets = vec![0usize; n + 1];
        for u in 0..n {
            index_offsets[u + 1] = index_offsets[u] + count[u];
        }
        let mut cursor = index_offsets.clone();
        let mut index = vec![0u32; self.members.len()];
        for j in 0..self.len() {
            for &u in self.set(j) {
                index[cursor[u as usize]] = j as u32;
                cursor[u as usize] += 1;
                visits += 1;
            }
        }

        let mut heap: BinaryHeap<(usize, Reverse<u32>)> =
            (0..n).map(|u| (count[u], Reverse(u as u32))).collect();
        let mut covered_set = vec![false; self.len()];
        let mut picked = vec![false; n];
        let mut seeds = Vec::with_capacity(quota);
        let mut covered = 0usize;

        while seeds.len() < quota {
            let (c, Reverse(u)) = heap.pop().expect("heap holds every unpicked node");
            let u = u as usize;
            if picked[u] {
                continue;
            }
            if c != count[u] {
                heap.push((count[u], Reverse(u as u32)));
                continue;
            }
            picked[u] = true;
            seeds.push(u);
            for &j in &index[index_offsets[u]..index_offsets[u + 1]] {
                visits += 1;
                let j = j as usize;
                if covered_set[j] {
                    continue;
                }
                covered_set[j] = true;
                covered += 1;
                for &w in self.set(j) {
                    count[w as usize] -= 1;
                    visits += 1;
                }
            }
        }
        Coverage { seeds, covered, incidence_visits: visits }
    }
}

/// Counts, over `count` fresh random RR sets, how many intersect `seeds`.
/// Nothing is stored; used for validation passes.
pub fn sample_covered_count(
    graph: &Graph,
    model: &DiffusionModel,
    count: usize,
    seeds: &[usize],
    key: StreamKey,
) -> usize {
    let mut mask = vec![false; graph.node_count()];
    for &s in seeds {
        mask[s] = true;
    }
    let mask = &mask;
    chunks(count)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map_init(
            || RrSampler::new(graph, model),
            |sampler, (chunk, len)| {
                let mut rng = key.chunk_rng(chunk);
                (0..len)
                    .filter(|_| sampler.sample_into(&mut rng).0.iter().any(|&u| mask[u as usize]))
                    .count()
            },
        )
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Four sets over v1..v4 (nodes 0..3); v4 appears in two of them.
    fn example_collection() -> RrCollection {
        RrCollection::from_sets(4, [vec![0u32, 3], vec![1], vec![2], vec![3]])
    }

    #[test]
    fn fraction_covered_examples() {
        let c = example_collection();
        assert_eq!(c.fraction_covered(&[3]).unwrap(), 0.5);
        assert_eq!(c.fraction_covered(&[]).unwrap(), 0.0);
        assert_eq!(c.fraction_covered(&[0, 1, 2, 3]).unwrap(), 1.0);
        assert!(matches!(RrCollection::new(4).fraction_covered(&[0]), Err(Error::EmptyCollection)));
    }

    #[test]
    fn greedy_examples() {
        let c = example_collection();
        let one = c.greedy_max_coverage(1);
        assert_eq!((one.seeds, one.covered), (vec![3], 2));
        let two = c.greedy_max_coverage(2);
        assert_eq!((two.seeds, two.covered), (vec![3, 1], 3));

        let single = RrCollection::from_sets(1, [vec![0u32]]);
        let r = single.greedy_max_coverage(3);
        assert_eq!((r.seeds, r.covered), (vec![0], 1));
    }

    #[test]
    fn saturated_coverage_pads_with_smallest_ids() {
        let c = RrCollection::from_sets(6, [vec![4u32], vec![4, 5]]);
        let r = c.greedy_max_coverage(4);
        assert_eq!(r.seeds, vec![4, 0, 1, 2]);
        assert_eq!(r.covered, 2);
    }

    #[test]
    fn append_preserves_sets() {
        let mut a = RrCollection::from_sets(4, [vec![0u32, 1]]);
        a.append(RrCollection::from_sets(4, [vec![2u32], vec![3, 0]]));
        let sets: Vec<Vec<u32>> = a.iter().map(|s| s.to_vec()).collect();
        assert_eq!(sets, vec![vec![0, 1], vec![2], vec![3, 0]]);
    }

    fn arb_collection() -> impl Strategy<Value = (RrCollection, usize)> {
        (1usize..=8, 1usize..=3).prop_flat_map(|(n, k)| {
            prop::collection::vec(prop::collection::btree_set(0..n as u32, 1..=n), 0..=12).prop_map(
                move |sets| (RrCollection::from_sets(n, sets.iter().map(|s| s.iter().copied().collect::<Vec<_>>())), k),
            )
        })
    }

    proptest! {
        #[test]
        fn incidence_visits_linear((c, k) in arb_collection()) {
            let r = c.greedy_max_coverage(k);
            prop_assert!(r.incidence_visits <= 4 * c.total_size());
            prop_assert_eq!(r.seeds.len(), k.min(c.node_count()));
            prop_assert_eq!(r.covered, c.covered_by(&r.seeds));
            let again = c.greedy_max_coverage(k);
            prop_assert_eq!(again, r);
        }
    }
}
