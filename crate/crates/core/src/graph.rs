//! Graph data model and sparse-representation conversions.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("empty input: no edges found")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("edge ({src}, {dst}) references a vertex >= {num_vertices}")]
    VertexOutOfRange {
        src: VertexId,
        dst: VertexId,
        num_vertices: usize,
    },
    #[error("edge ({src}, {dst}) has invalid weight {weight}")]
    InvalidWeight { src: VertexId, dst: VertexId, weight: f64 },
    #[error("too many vertices: {0}")]
    TooManyVertices(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: VertexId, dst: VertexId, weight: f64) -> Self {
        Edge { src, dst, weight }
    }
}

/// A directed edge list. Edges are deduplicated (last weight wins) and kept
/// in row-major order: by source, then destination. An undirected graph is
/// stored with both arc directions.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeListGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    directed: bool,
}

impl EdgeListGraph {
    pub fn new(
        num_vertices: usize,
        edges: impl IntoIterator<Item = Edge>,
        directed: bool,
    ) -> Result<Self, GraphError> {
        if num_vertices > u32::MAX as usize {
            return Err(GraphError::TooManyVertices(num_vertices));
        }
        let mut dedup: BTreeMap<(VertexId, VertexId), f64> = BTreeMap::new();
        for e in edges {
            if e.src as usize >= num_vertices || e.dst as usize >= num_vertices {
                return Err(GraphError::VertexOutOfRange {
                    src: e.src,
                    dst: e.dst,
                    num_vertices,
                });
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(GraphError::InvalidWeight {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                });
            }
            dedup.insert((e.src, e.dst), e.weight);
            if !directed {
                dedup.insert((e.dst, e.src), e.weight);
            }
        }
        let edges = dedup
            .into_iter()
            .map(|((src, dst), weight)| Edge { src, dst, weight })
            .collect();
        Ok(EdgeListGraph {
            num_vertices,
            edges,
            directed,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Fraction of the V×V adjacency matrix that holds an edge.
    pub fn density(&self) -> f64 {
        if self.num_vertices == 0 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.num_vertices as f64 * self.num_vertices as f64)
    }

    pub fn out_degrees(&self) -> Vec<u32> {
        out_degrees(self)
    }
}

/// Parse a whitespace-separated edge list: `src dst [weight]` per line,
/// `#` starts a comment. Missing weights (or all weights, when `weighted` is
/// false) default to 1.
pub fn parse_edge_list<R: BufRead>(reader: R, weighted: bool) -> Result<EdgeListGraph, GraphError> {
    let mut edges = Vec::new();
    let mut max_id: Option<VertexId> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(GraphError::Parse {
                line: lineno,
                reason: format!("expected `src dst [weight]`, got {} fields", fields.len()),
            });
        }
        let parse_id = |s: &str| {
            s.parse::<VertexId>().map_err(|e| GraphError::Parse {
                line: lineno,
                reason: format!("bad vertex id {s:?}: {e}"),
            })
        };
        let src = parse_id(fields[0])?;
        let dst = parse_id(fields[1])?;
        let weight = match (weighted, fields.get(2)) {
            (true, Some(w)) => w.parse::<f64>().map_err(|e| GraphError::Parse {
                line: lineno,
                reason: format!("bad weight {w:?}: {e}"),
            })?,
            _ => 1.0,
        };
        if !weight.is_finite() || weight < 0.0 {
            return Err(GraphError::Parse {
                line: lineno,
                reason: format!("weight {weight} must be finite and non-negative"),
            });
        }
        max_id = Some(max_id.map_or(src.max(dst), |m| m.max(src).max(dst)));
        edges.push(Edge { src, dst, weight });
    }
    let Some(max_id) = max_id else {
        return Err(GraphError::EmptyInput);
    };
    EdgeListGraph::new(max_id as usize + 1, edges, true)
}

pub fn parse_edge_str(text: &str, weighted: bool) -> Result<EdgeListGraph, GraphError> {
    parse_edge_list(text.as_bytes(), weighted)
}

pub fn out_degrees(g: &EdgeListGraph) -> Vec<u32> {
    let mut deg = vec![0u32; g.num_vertices];
    for e in &g.edges {
        deg[e.src as usize] += 1;
    }
    deg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparseKind {
    Coo,
    Csr,
    Csc,
}

/// Compressed layout shared by CSR (major = row) and CSC (major = column).
/// `ptr` has `major_dim + 1` entries; `minor[ptr[k]..ptr[k+1]]` are the
/// minor indices of line `k`, with `values` parallel to `minor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressed {
    pub major_dim: usize,
    pub ptr: Vec<usize>,
    pub minor: Vec<VertexId>,
    pub values: Vec<f64>,
}

impl Compressed {
    pub fn nnz(&self) -> usize {
        self.minor.len()
    }

    pub fn line(&self, k: usize) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        let range = self.ptr[k]..self.ptr[k + 1];
        self.minor[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn from_triples(major_dim: usize, mut triples: Vec<(VertexId, VertexId, f64)>) -> Self {
        triples.sort_by_key(|&(major, minor, _)| (major, minor));
        let mut ptr = vec![0usize; major_dim + 1];
        for &(major, _, _) in &triples {
            ptr[major as usize + 1] += 1;
        }
        for k in 0..major_dim {
            ptr[k + 1] += ptr[k];
        }
        let (minor, values) = triples.into_iter().map(|(_, m, v)| (m, v)).unzip();
        Compressed {
            major_dim,
            ptr,
            minor,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparseRep {
    /// (row, col, value) tuples in row-major order.
    Coo { dim: usize, tuples: Vec<(VertexId, VertexId, f64)> },
    Csr(Compressed),
    Csc(Compressed),
}

impl SparseRep {
    pub fn kind(&self) -> SparseKind {
        match self {
            SparseRep::Coo { .. } => SparseKind::Coo,
            SparseRep::Csr(_) => SparseKind::Csr,
            SparseRep::Csc(_) => SparseKind::Csc,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SparseRep::Coo { dim, .. } => *dim,
            SparseRep::Csr(c) | SparseRep::Csc(c) => c.major_dim,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            SparseRep::Coo { tuples, .. } => tuples.len(),
            SparseRep::Csr(c) | SparseRep::Csc(c) => c.nnz(),
        }
    }

    /// Row-major (row, col, value) tuples.
    pub fn to_triples(&self) -> Vec<(VertexId, VertexId, f64)> {
        let mut out = match self {
            SparseRep::Coo { tuples, .. } => tuples.clone(),
            SparseRep::Csr(c) => (0..c.major_dim)
                .flat_map(|r| c.line(r).map(move |(col, v)| (r as VertexId, col, v)))
                .collect(),
            SparseRep::Csc(c) => (0..c.major_dim)
                .flat_map(|col| c.line(col).map(move |(r, v)| (r, col as VertexId, v)))
                .collect(),
        };
        out.sort_by_key(|&(r, c, _)| (r, c));
        out
    }

    pub fn from_triples(dim: usize, triples: Vec<(VertexId, VertexId, f64)>, kind: SparseKind) -> Self {
        match kind {
            SparseKind::Coo => {
                let mut tuples = triples;
                tuples.sort_by_key(|&(r, c, _)| (r, c));
                SparseRep::Coo { dim, tuples }
            }
            SparseKind::Csr => SparseRep::Csr(Compressed::from_triples(dim, triples)),
            SparseKind::Csc => SparseRep::Csc(Compressed::from_triples(
                dim,
                triples.into_iter().map(|(r, c, v)| (c, r, v)).collect(),
            )),
        }
    }

    pub fn convert(&self, kind: SparseKind) -> SparseRep {
        if self.kind() == kind {
            return self.clone();
        }
        SparseRep::from_triples(self.dim(), self.to_triples(), kind)
    }
}

/// Adjacency matrix of `g` (row = source, column = destination) in the
/// requested layout.
pub fn convert_representation(g: &EdgeListGraph, kind: SparseKind) -> SparseRep {
    let triples = g.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect();
    SparseRep::from_triples(g.num_vertices, triples, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_unit_weights() {
        let g = parse_edge_str("0 1\n0 2", true).unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.num_edges(), 2);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn parse_weighted_single() {
        let g = parse_edge_str("2 3 5", true).unwrap();
        assert_eq!(g.num_vertices(), 4);
        assert_eq!(g.edges(), &[Edge::new(2, 3, 5.0)]);
    }

    #[test]
    fn parse_empty_is_error() {
        assert!(matches!(parse_edge_str("", true), Err(GraphError::EmptyInput)));
        assert!(matches!(
            parse_edge_str("# only a comment\n\n", true),
            Err(GraphError::EmptyInput)
        ));
    }

    #[test]
    fn parse_reports_line_number() {
        let err = parse_edge_str("0 1\n# c\n1 x\n", true).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err}");
        let err = parse_edge_str("0 1 2 3", true).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let err = parse_edge_str("0 1 -2", true).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }

    #[test]
    fn unweighted_ignores_third_column() {
        let g = parse_edge_str("0 1 9 # trailing", false).unwrap();
        assert_eq!(g.edges()[0].weight, 1.0);
    }

    #[test]
    fn duplicates_keep_last_weight_and_self_loops_stay() {
        let g = parse_edge_str("0 1 3\n1 1 2\n0 1 7\n", true).unwrap();
        assert_eq!(g.edges(), &[Edge::new(0, 1, 7.0), Edge::new(1, 1, 2.0)]);
    }

    #[test]
    fn undirected_stores_both_arcs() {
        let g = EdgeListGraph::new(3, [Edge::new(0, 2, 1.0)], false).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.out_degrees(), vec![1, 0, 1]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(EdgeListGraph::new(2, [Edge::new(0, 2, 1.0)], true).is_err());
        assert!(EdgeListGraph::new(2, [Edge::new(0, 1, f64::NAN)], true).is_err());
        assert!(EdgeListGraph::new(2, [Edge::new(0, 1, -1.0)], true).is_err());
    }

    #[test]
    fn out_degree_examples() {
        // Transfer matrix of the 4-vertex PageRank example: column sums of
        // 1/3, 1/2, 1, 1/2 mean out-degrees 3, 2, 1, 2.
        let g = EdgeListGraph::new(
            4,
            [(0, 1), (0, 2), (0, 3), (1, 0), (1, 3), (2, 0), (3, 1), (3, 2)]
                .map(|(s, d)| Edge::new(s, d, 1.0)),
            true,
        )
        .unwrap();
        assert_eq!(out_degrees(&g), vec![3, 2, 1, 2]);

        let isolated = EdgeListGraph::new(3, [Edge::new(0, 1, 1.0)], true).unwrap();
        assert_eq!(out_degrees(&isolated)[2], 0);

        let star = EdgeListGraph::new(6, (1..6).map(|d| Edge::new(0, d, 1.0)), true).unwrap();
        assert_eq!(out_degrees(&star)[0], 5);
    }

    #[test]
    fn csc_column_pointer_marks_column_start() {
        // Columns 0..2 hold four non-zeros, so the pair (0, 8) that opens
        // column 3 sits at index 4 of the (row, val) list.
        let triples = vec![
            (1, 0, 5.0),
            (3, 0, 2.0),
            (2, 1, 1.0),
            (0, 2, 4.0),
            (0, 3, 8.0),
            (2, 3, 6.0),
        ];
        let SparseRep::Csc(csc) = SparseRep::from_triples(4, triples, SparseKind::Csc) else {
            unreachable!()
        };
        assert_eq!(csc.ptr, vec![0, 2, 3, 4, 6]);
        assert_eq!(csc.ptr[3], 4);
        assert_eq!((csc.minor[4], csc.values[4]), (0, 8.0));
        assert_eq!(csc.ptr.len(), 4 + 1);
    }

    #[test]
    fn empty_graph_csc() {
        let g = EdgeListGraph::new(5, [], true).unwrap();
        let SparseRep::Csc(csc) = convert_representation(&g, SparseKind::Csc) else {
            unreachable!()
        };
        assert_eq!(csc.ptr, vec![0; 6]);
        assert!(csc.minor.is_empty());
    }

    fn arb_graph() -> impl Strategy<Value = EdgeListGraph> {
        (1usize..24).prop_flat_map(|n| {
            proptest::collection::vec((0..n as u32, 0..n as u32, 0u32..100), 0..60).prop_map(
                move |es| {
                    EdgeListGraph::new(n, es.into_iter().map(|(s, d, w)| Edge::new(s, d, w as f64)), true)
                        .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn representation_roundtrip(g in arb_graph()) {
            let coo = convert_representation(&g, SparseKind::Coo);
            let back = coo.convert(SparseKind::Csr).convert(SparseKind::Csc).convert(SparseKind::Coo);
            let expected: Vec<_> = g.edges().iter().map(|e| (e.src, e.dst, e.weight)).collect();
            prop_assert_eq!(back.to_triples(), expected);
        }

        #[test]
        fn pointer_law(g in arb_graph()) {
            for kind in [SparseKind::Csr, SparseKind::Csc] {
                let (SparseRep::Csr(c) | SparseRep::Csc(c)) = convert_representation(&g, kind) else {
                    unreachable!()
                };
                prop_assert_eq!(c.ptr.len(), g.num_vertices() + 1);
                prop_assert!(c.ptr.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(*c.ptr.last().unwrap(), g.num_edges());
                for k in 0..g.num_vertices() {
                    let count = g.edges().iter().filter(|e| {
                        let major = if kind == SparseKind::Csr { e.src } else { e.dst };
                        major as usize == k
                    }).count();
                    prop_assert_eq!(c.ptr[k + 1] - c.ptr[k], count);
                }
            }
        }
    }
}
