//! Immutable directed graph stored in reverse (in-neighbor) CSR layout.
//!
//! Reverse reachable sets only ever walk incoming edges, so the primary
//! layout groups every edge `u -> v` under its head `v`. A forward view for
//! Monte-Carlo simulation is built on demand with [`Graph::forward`].
//!
//! Every edge may carry one `f64` payload (a propagation probability for the
//! cascade models, a normalized weight for linear threshold). Payloads are
//! stored parallel to the in-adjacency array, so edge `j` of the reverse
//! layout is `(in_sources[j], payload[j])`.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::ops::Range;

use crate::error::{Error, Result};

/// How each input line maps to directed edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Directedness {
    Directed,
    /// Every line `u v` yields both `u -> v` and `v -> u`.
    Undirected,
}

/// How textual node ids are turned into dense indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdPolicy {
    /// Ids are arbitrary tokens, numbered `0..n` in order of first appearance.
    FirstAppearance,
    /// Ids are non-negative integers used verbatim; `n = max id + 1`.
    Numeric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    in_offsets: Vec<usize>,
    in_sources: Vec<u32>,
    payload: Option<Vec<f64>>,
    out_degree: Vec<u32>,
    labels: Vec<String>,
}

/// Forward adjacency. `in_edge[j]` is the reverse-layout index of the same
/// edge, so payloads and trigger choices can be looked up from either side.
#[derive(Clone, Debug)]
pub struct ForwardAdjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    in_edge: Vec<usize>,
}

impl ForwardAdjacency {
    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.targets[range.clone()]
            .iter()
            .zip(&self.in_edge[range])
            .map(|(&t, &e)| (t as usize, e))
    }
}

impl Graph {
    /// Builds a graph over nodes `0..n` from `(source, target)` pairs.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        Self::build(n, &edges, None, default_labels(n))
    }

    /// Builds a graph whose edges carry a payload, typically a propagation
    /// probability.
    pub fn from_weighted_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut pairs = Vec::new();
        let mut payload = Vec::new();
        for (u, v, p) in edges {
            pairs.push((u, v));
            payload.push(p);
        }
        Self::build(n, &pairs, Some(payload), default_labels(n))
    }

    fn build(
        n: usize,
        edges: &[(usize, usize)],
        payload: Option<Vec<f64>>,
        labels: Vec<String>,
    ) -> Result<Graph> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if n > u32::MAX as usize {
            return Err(Error::Validation(format!("{n} nodes exceeds the u32 index space")));
        }
        let mut in_offsets = vec![0usize; n + 1];
        let mut out_degree = vec![0u32; n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            in_offsets[v + 1] += 1;
            out_degree[u] += 1;
        }
        for v in 0..n {
            in_offsets[v + 1] += in_offsets[v];
        }
        // Stable counting sort by head keeps input order within each node.
        let mut cursor = in_offsets.clone();
        let mut in_sources = vec![0u32; edges.len()];
        let mut sorted_payload = payload.as_ref().map(|p| vec![0.0; p.len()]);
        for (i, &(u, v)) in edges.iter().enumerate() {
            let slot = cursor[v];
            cursor[v] += 1;
            in_sources[slot] = u as u32;
            if let (Some(dst), Some(src)) = (sorted_payload.as_mut(), payload.as_ref()) {
                dst[slot] = src[i];
            }
        }
        Ok(Graph { in_offsets, in_sources, payload: sorted_payload, out_degree, labels })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_sources.len()
    }

    /// Number of edges pointing to `v`.
    pub fn in_degree(&self, v: usize) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.in_degree_of(v))
    }

    pub fn out_degree(&self, v: usize) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.out_degree[v] as usize)
    }

    #[inline]
    pub(crate) fn in_degree_of(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    /// Range of reverse-layout edge indices whose head is `v`.
    #[inline]
    pub fn in_edge_range(&self, v: usize) -> Range<usize> {
        self.in_offsets[v]..self.in_offsets[v + 1]
    }

    #[inline]
    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        &self.in_sources[self.in_edge_range(v)]
    }

    /// Source node of reverse-layout edge `e`.
    #[inline]
    pub fn edge_source(&self, e: usize) -> usize {
        self.in_sources[e] as usize
    }

    pub fn has_payload(&self) -> bool {
        self.payload.is_some()
    }

    pub fn payload(&self) -> Option<&[f64]> {
        self.payload.as_deref()
    }

    /// Payloads of the edges entering `v`, in adjacency order.
    pub fn in_payload(&self, v: usize) -> Option<&[f64]> {
        self.payload.as_deref().map(|p| &p[self.in_edge_range(v)])
    }

    /// Returns a copy of this graph carrying `payload` (one value per edge,
    /// in reverse-layout order).
    pub fn with_payload(&self, payload: Vec<f64>) -> Result<Graph> {
        if payload.len() != self.edge_count() {
            return Err(Error::Validation(format!(
                "payload has {} entries for {} edges",
                payload.len(),
                self.edge_count()
            )));
        }
        Ok(Graph { payload: Some(payload), ..self.clone() })
    }

    pub fn without_payload(&self) -> Graph {
        Graph { payload: None, ..self.clone() }
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Iterates `(source, target, payload)` over every edge in reverse-layout
    /// order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        (0..self.node_count()).flat_map(move |v| {
            self.in_edge_range(v).map(move |e| {
                (self.edge_source(e), v, self.payload.as_ref().map(|p| p[e]))
            })
        })
    }

    pub fn forward(&self) -> ForwardAdjacency {
        let n = self.node_count();
        let mut offsets = vec![0usize; n + 1];
        for u in 0..n {
            offsets[u + 1] = offsets[u] + self.out_degree[u] as usize;
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; self.edge_count()];
        let mut in_edge = vec![0usize; self.edge_count()];
        for v in 0..n {
            for e in self.in_edge_range(v) {
                let u = self.edge_source(e);
                let slot = cursor[u];
                cursor[u] += 1;
                targets[slot] = v as u32;
                in_edge[slot] = e;
            }
        }
        ForwardAdjacency { offsets, targets, in_edge }
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v < self.node_count() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: v, n: self.node_count() })
        }
    }

    /// Writes the graph as an edge list using node labels, one edge per line,
    /// with a probability column when the graph carries payloads.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v, p) in self.edges() {
            match p {
                Some(p) => writeln!(out, "{} {} {}", self.labels[u], self.labels[v], p)?,
                None => writeln!(out, "{} {}", self.labels[u], self.labels[v])?,
            }
        }
        Ok(())
    }
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|v| v.to_string()).collect()
}

/// Parses an edge list: one `u v` or `u v p` per line, whitespace separated.
/// Blank lines and lines starting with `#` are skipped. Either every edge
/// line carries a probability or none does.
pub fn load_edge_list<R: BufRead>(
    input: R,
    directedness: Directedness,
    ids: IdPolicy,
) -> Result<Graph> {
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut max_numeric: Option<usize> = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    let mut with_probability: Option<bool> = None;

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let has_p = fields.len() == 3;
        match with_probability {
            None => with_probability = Some(has_p),
            Some(prev) if prev != has_p => {
                return Err(parse_err("probability column present on some lines only".into()))
            }
            _ => {}
        }
        let mut endpoint = |token: &str| -> Result<usize> {
            match ids {
                IdPolicy::FirstAppearance => Ok(*index.entry(token.to_string()).or_insert_with(|| {
                    labels.push(token.to_string());
                    labels.len() - 1
                })),
                IdPolicy::Numeric => {
                    let id: usize = token
                        .parse()
                        .map_err(|_| parse_err(format!("`{token}` is not a node number")))?;
                    max_numeric = Some(max_numeric.map_or(id, |m| m.max(id)));
                    Ok(id)
                }
            }
        };
        let u = endpoint(fields[0])?;
        let v = endpoint(fields[1])?;
        let p = if has_p {
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("`{}` is not a number", fields[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "line {line_no}: probability {p} outside [0, 1]"
                )));
            }
            Some(p)
        } else {
            None
        };
        edges.push((u, v));
        payload.extend(p);
        if directedness == Directedness::Undirected {
            edges.push((v, u));
            payload.extend(p);
        }
    }

    let labels = match ids {
        IdPolicy::FirstAppearance => labels,
        IdPolicy::Numeric => default_labels(max_numeric.map_or(0, |m| m + 1)),
    };
    if labels.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let payload = (with_probability == Some(true)).then_some(payload);
    Graph::build(labels.len(), &edges, payload, labels)
}

const CACHE_MAGIC: &[u8; 4] = b"IMXG";
const CACHE_VERSION: u32 = 1;

impl Graph {
    /// Serializes the graph to the versioned binary cache format.
    ///
    /// Layout (little endian): magic `IMXG`, version `u32`, `n: u64`,
    /// `m: u64`, payload flag `u8`, `n + 1` offsets, `m` sources as `u32`,
    /// `m` payloads as `f64` bits when flagged, then `n` length-prefixed UTF-8
    /// labels.
    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&(self.node_count() as u64).to_le_bytes())?;
        out.write_all(&(self.edge_count() as u64).to_le_bytes())?;
        out.write_all(&[self.payload.is_some() as u8])?;
        for &o in &self.in_offsets {
            out.write_all(&(o as u64).to_le_bytes())?;
        }
        for &s in &self.in_sources {
            out.write_all(&s.to_le_bytes())?;
        }
        if let Some(p) = &self.payload {
            for &x in p {
                out.write_all(&x.to_bits().to_le_bytes())?;
            }
        }
        for label in &self.labels {
            out.write_all(&(label.len() as u64).to_le_bytes())?;
            out.write_all(label.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut input: R) -> Result<Graph> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("version {version}, expected {CACHE_VERSION}")));
        }
        let n = read_u64(&mut input)? as usize;
        let m = read_u64(&mut input)? as usize;
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        let in_offsets = (0..=n).map(|_| read_u64(&mut input).map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        let in_sources = (0..m).map(|_| read_u32(&mut input)).collect::<Result<Vec<_>>>()?;
        let payload = if flag[0] != 0 {
            Some((0..m).map(|_| read_u64(&mut input).map(f64::from_bits)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u64(&mut input)? as usize;
            let mut buf = vec![0u8; len];
            input.read_exact(&mut buf)?;
            labels.push(String::from_utf8(buf).map_err(|e| Error::Cache(e.to_string()))?);
        }
        if n == 0 || in_offsets[n] != m || in_sources.iter().any(|&s| s as usize >= n) {
            return Err(Error::Cache("inconsistent adjacency".into()));
        }
        let mut out_degree = vec![0u32; n];
        for &s in &in_sources {
            out_degree[s as usize] += 1;
        }
        Ok(Graph { in_offsets, in_sources, payload, out_degree, labels })
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, d: Directedness) -> Result<Graph> {
        load_edge_list(text.as_bytes(), d, IdPolicy::FirstAppearance)
    }

    #[test]
    fn two_edge_chain() {
        let g = parse("0 1\n1 2\n", Directedness::Directed).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let degrees: Vec<usize> = (0..3).map(|v| g.in_degree(v).unwrap()).collect();
        assert_eq!(degrees, vec![0, 1, 1]);
        assert_eq!(g.in_degree(0).unwrap(), 0);
        assert_eq!(g.in_degree(1).unwrap(), 1);
    }

    #[test]
    fn undirected_doubles_edges() {
        let g = parse("0 1\n", Directedness::Undirected).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 2));
        assert_eq!(g.in_degree(0).unwrap(), 1);
    }

    #[test]
    fn parallel_edges_kept() {
        let g = parse("0 1 0.5\n0 1 0.5\n", Directedness::Directed).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 2));
        assert_eq!(g.in_degree(1).unwrap(), 2);
        assert_eq!(g.in_payload(1).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn ids_remapped_in_first_appearance_order() {
        let g = parse("# comment\nx y\n\ny z\n", Directedness::Directed).unwrap();
        assert_eq!(g.labels(), &["x", "y", "z"]);
        assert_eq!(g.node_by_label("z"), Some(2));
        assert_eq!(g.in_neighbors(2), &[1]);
    }

    #[test]
    fn numeric_ids_keep_gaps() {
        let g = load_edge_list("0 3\n".as_bytes(), Directedness::Directed, IdPolicy::Numeric).unwrap();
        assert_eq!(g.node_count(), 4);
        assert!(load_edge_list("a b\n".as_bytes(), Directedness::Directed, IdPolicy::Numeric).is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("0 1\n0 1 2 3\n", Directedness::Directed) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0 1\n0 x7 abc\n", Directedness::Directed) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probability_out_of_range_rejected() {
        assert!(matches!(parse("0 1 1.5\n", Directedness::Directed), Err(Error::Validation(_))));
        assert!(matches!(parse("0 1 -0.1\n", Directedness::Directed), Err(Error::Validation(_))));
    }

    #[test]
    fn mixed_columns_rejected() {
        assert!(matches!(parse("0 1 0.5\n1 2\n", Directedness::Directed), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(parse("", Directedness::Directed), Err(Error::EmptyGraph)));
        assert!(matches!(parse("# only comments\n", Directedness::Directed), Err(Error::EmptyGraph)));
    }

    #[test]
    fn in_degree_out_of_range() {
        let g = parse("0 1\n", Directedness::Directed).unwrap();
        assert!(matches!(g.in_degree(2), Err(Error::NodeOutOfRange { node: 2, n: 2 })));
    }

    #[test]
    fn self_loops_allowed() {
        let g = Graph::from_edges(1, [(0, 0)]).unwrap();
        assert_eq!(g.in_degree(0).unwrap(), 1);
        assert_eq!(g.out_degree(0).unwrap(), 1);
    }

    #[test]
    fn forward_view_maps_back_to_reverse_edges() {
        let g = Graph::from_weighted_edges(3, [(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)]).unwrap();
        let fwd = g.forward();
        let out: Vec<(usize, f64)> =
            fwd.out_edges(0).map(|(t, e)| (t, g.payload().unwrap()[e])).collect();
        assert_eq!(out, vec![(1, 0.1), (2, 0.2)]);
        for (t, e) in fwd.out_edges(1) {
            assert_eq!(t, 2);
            assert_eq!(g.edge_source(e), 1);
        }
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..12).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 0.0f64..=1.0), 0..40)
                .prop_map(move |edges| Graph::from_weighted_edges(n, edges).unwrap())
        })
    }

    proptest! {
        #[test]
        fn degree_sums_match_edge_count(g in arb_graph()) {
            let n = g.node_count();
            let ins: usize = (0..n).map(|v| g.in_degree(v).unwrap()).sum();
            let outs: usize = (0..n).map(|v| g.out_degree(v).unwrap()).sum();
            prop_assert_eq!(ins, g.edge_count());
            prop_assert_eq!(outs, g.edge_count());
            // Each reverse-layout edge is visited exactly once.
            let mut seen = vec![0u8; g.edge_count()];
            for v in 0..n {
                for e in g.in_edge_range(v) {
                    seen[e] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn cache_round_trip(g in arb_graph()) {
            let mut buf = Vec::new();
            g.write_cache(&mut buf).unwrap();
            let back = Graph::read_cache(buf.as_slice()).unwrap();
            prop_assert_eq!(back, g);
        }

        #[test]
        fn edge_list_round_trip(g in arb_graph()) {
            prop_assume!(g.edge_count() > 0);
            let mut text = Vec::new();
            g.write_edge_list(&mut text).unwrap();
            let back = load_edge_list(text.as_slice(), Directedness::Directed, IdPolicy::FirstAppearance).unwrap();
            // Labels are renumbered by first appearance; compare edge multisets by label.
            let mut a: Vec<(String, String, u64)> = g.edges()
                .map(|(u, v, p)| (g.label(u).to_string(), g.label(v).to_string(), p.unwrap().to_bits())).collect();
            let mut b: Vec<(String, String, u64)> = back.edges()
                .map(|(u, v, p)| (back.label(u).to_string(), back.label(v).to_string(), p.unwrap().to_bits())).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
