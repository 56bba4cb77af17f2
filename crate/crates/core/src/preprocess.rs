//! Edge-list preprocessing into the accelerator's global tile order.
//!
//! The adjacency matrix (row = source, column = destination) is cut into
//! `B × B` blocks, each block into `C × (C·N·G)` subgraphs, and each subgraph
//! into cells. Blocks, subgraphs within a block and cells within a subgraph
//! are all walked column-major. The rank of a cell under that walk is its
//! global order ID `I`; sorting edges by `I` lets the controller stream
//! subgraphs sequentially.
//!
//! All ranks here are zero-based.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{FxFormat, Fx16};
use crate::graph::{EdgeListGraph, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("tiling parameter {name} must be positive")]
    ZeroParameter { name: &'static str },
    #[error("padded vertex count {0} does not fit in 32 bits")]
    TooManyVertices(u64),
    #[error("graph has {graph} vertices but tiling covers only {padded}")]
    GraphTooLarge { graph: usize, padded: usize },
    #[error("edge list out of order at entry {index}: id {id} follows {prev}")]
    OutOfOrder { index: usize, prev: u64, id: u64 },
    #[error("entry {index} ({src}, {dst}) stores id {stored} but its cell has id {expected}")]
    IdMismatch {
        index: usize,
        src: VertexId,
        dst: VertexId,
        stored: u64,
        expected: u64,
    },
    #[error("tile has {got:?} shape, expected {expected:?}")]
    ShapeMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },
}

/// Architectural and partitioning constants. `v` is the padded vertex count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingParams {
    /// Crossbar dimension.
    pub c: usize,
    /// Crossbars per graph engine.
    pub n: usize,
    /// Graph engines per node.
    pub g: usize,
    /// Vertices per block.
    pub b: usize,
    /// Padded vertex count.
    pub v: usize,
}

/// Pad `raw_v` and `b` so that every divisibility condition holds: `b` is
/// rounded up to a multiple of `C·N·G` (which is itself a multiple of `C`),
/// and `V` to the smallest multiple of `b` that is at least `raw_v` (and at
/// least one block).
pub fn pad_params(
    raw_v: usize,
    c: usize,
    n: usize,
    g: usize,
    b: usize,
) -> Result<TilingParams, PreprocessError> {
    for (name, value) in [("C", c), ("N", n), ("G", g), ("B", b)] {
        if value == 0 {
            return Err(PreprocessError::ZeroParameter { name });
        }
    }
    let stripe = c * n * g;
    let b = b.div_ceil(stripe) * stripe;
    let v = raw_v.max(1).div_ceil(b) * b;
    if v > u32::MAX as usize {
        return Err(PreprocessError::TooManyVertices(v as u64));
    }
    Ok(TilingParams { c, n, g, b, v })
}

impl TilingParams {
    /// Destination columns covered by one subgraph (`C·N·G`).
    #[inline]
    pub fn stripe(&self) -> usize {
        self.c * self.n * self.g
    }

    #[inline]
    pub fn crossbars(&self) -> usize {
        self.n * self.g
    }

    #[inline]
    pub fn blocks_per_side(&self) -> usize {
        self.v / self.b
    }

    #[inline]
    pub fn sub_rows_per_block(&self) -> usize {
        self.b / self.c
    }

    #[inline]
    pub fn sub_cols_per_block(&self) -> usize {
        self.b / self.stripe()
    }

    /// `B² / (C²·N·G)`.
    #[inline]
    pub fn subgraphs_per_block(&self) -> u64 {
        (self.sub_rows_per_block() * self.sub_cols_per_block()) as u64
    }

    /// `C²·N·G`.
    #[inline]
    pub fn cells_per_subgraph(&self) -> u64 {
        (self.c * self.stripe()) as u64
    }

    pub fn total_subgraphs(&self) -> u64 {
        let bps = self.blocks_per_side() as u64;
        bps * bps * self.subgraphs_per_block()
    }

    /// Number of `C·N·G`-wide destination chunks.
    pub fn dst_chunks(&self) -> usize {
        self.v / self.stripe()
    }

    /// Location of a subgraph given its global rank.
    pub fn subgraph_location(&self, si: u64) -> SubgraphLocation {
        let per_block = self.subgraphs_per_block();
        let block_rank = si / per_block;
        let within = si % per_block;
        let rows = self.sub_rows_per_block() as u64;
        let bps = self.blocks_per_side() as u64;
        let loc = SubgraphLocation {
            block_row: (block_rank % bps) as usize,
            block_col: (block_rank / bps) as usize,
            sub_row: (within % rows) as usize,
            sub_col: (within / rows) as usize,
        };
        debug_assert!(loc.block_col < self.blocks_per_side());
        loc
    }

    pub fn row_base(&self, loc: &SubgraphLocation) -> usize {
        loc.block_row * self.b + loc.sub_row * self.c
    }

    pub fn col_base(&self, loc: &SubgraphLocation) -> usize {
        loc.block_col * self.b + loc.sub_col * self.stripe()
    }

    /// Index of the destination chunk a subgraph writes to.
    pub fn dst_chunk(&self, loc: &SubgraphLocation) -> usize {
        self.col_base(loc) / self.stripe()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubgraphLocation {
    pub block_row: usize,
    pub block_col: usize,
    /// Subgraph row inside its block (`SI_i'`).
    pub sub_row: usize,
    /// Subgraph column inside its block (`SI_j'`).
    pub sub_col: usize,
}

#[inline]
pub fn block_coords(i: u64, j: u64, b: u64) -> (u64, u64) {
    (i / b, j / b)
}

/// Column-major block rank: `B(0,0) → B(1,0) → B(0,1) → B(1,1)`.
#[inline]
pub fn block_order(block_row: u64, block_col: u64, v: u64, b: u64) -> u64 {
    block_row + (v / b) * block_col
}

/// Global subgraph rank of the subgraph holding cell `(i, j)`.
pub fn subgraph_order(i: u64, j: u64, p: &TilingParams) -> u64 {
    let b = p.b as u64;
    let (bi, bj) = block_coords(i, j, b);
    let block_rank = block_order(bi, bj, p.v as u64, b);
    let (ri, rj) = (i - bi * b, j - bj * b);
    let (si, sj) = (ri / p.c as u64, rj / p.stripe() as u64);
    si + sj * p.sub_rows_per_block() as u64 + block_rank * p.subgraphs_per_block()
}

/// Column-major rank of cell `(i, j)` inside its subgraph.
pub fn intra_order(i: u64, j: u64, p: &TilingParams) -> u64 {
    let c = p.c as u64;
    let stripe = p.stripe() as u64;
    let local_row = i % p.b as u64 % c;
    let local_col = j % p.b as u64 % stripe;
    local_row + local_col * c
}

/// Global order ID of cell `(i, j)`: a bijection from the padded `V × V` grid
/// onto `0..V²`.
#[inline]
pub fn global_edge_id(i: u64, j: u64, p: &TilingParams) -> u64 {
    subgraph_order(i, j, p) * p.cells_per_subgraph() + intra_order(i, j, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedEdge {
    pub id: u64,
    pub src: VertexId,
    pub dst: VertexId,
    /// Edge weight in INT format.
    pub weight: Fx16,
}

/// Edges sorted by global order ID.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedEdgeList {
    params: TilingParams,
    entries: Vec<OrderedEdge>,
    /// Weights that had to be clamped or rounded into the INT range.
    clamped_weights: u64,
}

impl OrderedEdgeList {
    /// Build from already-ordered entries without checking them. Use
    /// [`OrderedEdgeList::validate`] for untrusted input.
    pub fn from_parts(params: TilingParams, entries: Vec<OrderedEdge>) -> Self {
        OrderedEdgeList {
            params,
            entries,
            clamped_weights: 0,
        }
    }

    /// Recompute ids from coordinates and sort. Used when reading records
    /// whose id is implicit.
    pub fn from_records(
        params: TilingParams,
        records: impl IntoIterator<Item = (VertexId, VertexId, Fx16)>,
    ) -> Result<Self, PreprocessError> {
        let entries = records
            .into_iter()
            .map(|(src, dst, weight)| OrderedEdge {
                id: global_edge_id(src as u64, dst as u64, &params),
                src,
                dst,
                weight,
            })
            .collect();
        let list = OrderedEdgeList::from_parts(params, entries);
        list.validate()?;
        Ok(list)
    }

    pub fn params(&self) -> &TilingParams {
        &self.params
    }

    pub fn entries(&self) -> &[OrderedEdge] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clamped_weights(&self) -> u64 {
        self.clamped_weights
    }

    /// Number of real vertices implied by the entries (one past the largest id).
    pub fn implied_vertices(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.src.max(e.dst) as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn out_degrees(&self, num_vertices: usize) -> Vec<u32> {
        let mut deg = vec![0u32; num_vertices];
        for e in &self.entries {
            deg[e.src as usize] += 1;
        }
        deg
    }

    /// Check coordinates, stored ids and strict ordering.
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let mut prev: Option<u64> = None;
        for (index, e) in self.entries.iter().enumerate() {
            if e.src as usize >= self.params.v || e.dst as usize >= self.params.v {
                return Err(PreprocessError::GraphTooLarge {
                    graph: e.src.max(e.dst) as usize + 1,
                    padded: self.params.v,
                });
            }
            let expected = global_edge_id(e.src as u64, e.dst as u64, &self.params);
            if expected != e.id {
                return Err(PreprocessError::IdMismatch {
                    index,
                    src: e.src,
                    dst: e.dst,
                    stored: e.id,
                    expected,
                });
            }
            if let Some(p) = prev {
                if e.id <= p {
                    return Err(PreprocessError::OutOfOrder {
                        index,
                        prev: p,
                        id: e.id,
                    });
                }
            }
            prev = Some(e.id);
        }
        Ok(())
    }
}

/// Compute each edge's global order ID and sort by it. Weights are stored as
/// INT values (rounded, clamped to `0..=0xFFFE`).
pub fn preprocess_edges(
    g: &EdgeListGraph,
    params: &TilingParams,
) -> Result<OrderedEdgeList, PreprocessError> {
    if g.num_vertices() > params.v {
        return Err(PreprocessError::GraphTooLarge {
            graph: g.num_vertices(),
            padded: params.v,
        });
    }
    let mut clamped = 0u64;
    let mut entries: Vec<OrderedEdge> = g
        .edges()
        .iter()
        .map(|e| {
            let (weight, was_clamped) = Fx16::encode_clamped(e.weight, FxFormat::Int);
            clamped += was_clamped as u64;
            OrderedEdge {
                id: 0,
                src: e.src,
                dst: e.dst,
                weight,
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} edge weights clamped into the 16-bit integer range");
    }
    entries
        .par_iter_mut()
        .for_each(|e| e.id = global_edge_id(e.src as u64, e.dst as u64, params));
    entries.par_sort_by_key(|e| e.id);
    // The graph is deduplicated, so each grid cell holds at most one edge.
    assert!(
        entries.windows(2).all(|w| w[0].id < w[1].id),
        "duplicate grid cell after deduplication"
    );
    Ok(OrderedEdgeList {
        params: *params,
        entries,
        clamped_weights: clamped,
    })
}

/// A maximal run of entries sharing one subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSpan {
    pub si: u64,
    pub range: Range<usize>,
}

/// Split an ordered list into per-subgraph runs, in ascending subgraph rank.
pub fn tile_spans(ol: &OrderedEdgeList) -> Result<Vec<TileSpan>, PreprocessError> {
    let cells = ol.params.cells_per_subgraph();
    let mut spans: Vec<TileSpan> = Vec::new();
    let mut prev: Option<u64> = None;
    for (index, e) in ol.entries.iter().enumerate() {
        if let Some(p) = prev {
            if e.id <= p {
                return Err(PreprocessError::OutOfOrder {
                    index,
                    prev: p,
                    id: e.id,
                });
            }
        }
        prev = Some(e.id);
        let si = e.id / cells;
        match spans.last_mut() {
            Some(span) if span.si == si => span.range.end = index + 1,
            _ => spans.push(TileSpan {
                si,
                range: index..index + 1,
            }),
        }
    }
    Ok(spans)
}

/// A cell in tile-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCell {
    pub row: u32,
    pub col: u32,
    pub value: Fx16,
}

/// A dense `C × (C·N·G)` subgraph, zero-filled where there is no edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphTile {
    pub si: u64,
    pub location: SubgraphLocation,
    pub row_base: usize,
    pub col_base: usize,
    rows: usize,
    cols: usize,
    /// Row-major dense matrix.
    dense: Vec<Fx16>,
    /// Non-zero cells in column-major (global id) order.
    cells: Vec<TileCell>,
}

impl SubgraphTile {
    pub fn from_entries(params: &TilingParams, si: u64, entries: &[OrderedEdge]) -> Self {
        let location = params.subgraph_location(si);
        let row_base = params.row_base(&location);
        let col_base = params.col_base(&location);
        let (rows, cols) = (params.c, params.stripe());
        let mut dense = vec![Fx16::ZERO; rows * cols];
        let cells: Vec<TileCell> = entries
            .iter()
            .map(|e| {
                let row = e.src as usize - row_base;
                let col = e.dst as usize - col_base;
                debug_assert!(row < rows && col < cols);
                dense[row * cols + col] = e.weight;
                TileCell {
                    row: row as u32,
                    col: col as u32,
                    value: e.weight,
                }
            })
            .collect();
        SubgraphTile {
            si,
            location,
            row_base,
            col_base,
            rows,
            cols,
            dense,
            cells,
        }
    }

    /// Build a tile from tile-local cells; used for hand-written tiles.
    pub fn from_cells(params: &TilingParams, si: u64, mut cells: Vec<TileCell>) -> Self {
        let location = params.subgraph_location(si);
        let (rows, cols) = (params.c, params.stripe());
        cells.sort_by_key(|c| (c.col, c.row));
        let mut dense = vec![Fx16::ZERO; rows * cols];
        for c in &cells {
            dense[c.row as usize * cols + c.col as usize] = c.value;
        }
        SubgraphTile {
            si,
            location,
            row_base: params.row_base(&location),
            col_base: params.col_base(&location),
            rows,
            cols,
            dense,
            cells,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> Fx16 {
        self.dense[row * self.cols + col]
    }

    pub fn nnz(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[TileCell] {
        &self.cells
    }

    /// Global `(src, dst, weight)` triples in column-major order.
    pub fn to_edges(&self) -> Vec<(VertexId, VertexId, Fx16)> {
        self.cells
            .iter()
            .map(|c| {
                (
                    (self.row_base + c.row as usize) as VertexId,
                    (self.col_base + c.col as usize) as VertexId,
                    c.value,
                )
            })
            .collect()
    }
}

/// Iterator over the non-empty subgraphs of an ordered list, densified, in
/// ascending subgraph rank. Yields an error (and stops) on out-of-order input.
pub struct TileStream<'a> {
    list: &'a OrderedEdgeList,
    pos: usize,
    prev: Option<u64>,
    failed: bool,
}

pub fn tile_stream(ol: &OrderedEdgeList) -> TileStream<'_> {
    TileStream {
        list: ol,
        pos: 0,
        prev: None,
        failed: false,
    }
}

impl Iterator for TileStream<'_> {
    type Item = Result<SubgraphTile, PreprocessError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.pos >= self.list.entries.len() {
            return None;
        }
        let params = &self.list.params;
        let cells = params.cells_per_subgraph();
        let entries = &self.list.entries;
        let start = self.pos;
        let si = entries[start].id / cells;
        let mut end = start;
        while end < entries.len() {
            let id = entries[end].id;
            if let Some(p) = self.prev {
                if id <= p {
                    self.failed = true;
                    return Some(Err(PreprocessError::OutOfOrder {
                        index: end,
                        prev: p,
                        id,
                    }));
                }
            }
            if id / cells != si {
                break;
            }
            self.prev = Some(id);
            end += 1;
        }
        self.pos = end;
        Some(Ok(SubgraphTile::from_entries(params, si, &entries[start..end])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn small_tiling() -> TilingParams {
        pad_params(64, 4, 2, 2, 32).unwrap()
    }

    #[test]
    fn pad_examples() {
        let p = small_tiling();
        assert_eq!(p.v, 64);
        assert_eq!(p.blocks_per_side() * p.blocks_per_side(), 4);
        assert_eq!(p.subgraphs_per_block(), 16);
        assert_eq!(pad_params(100, 4, 2, 2, 32).unwrap().v, 128);
        assert_eq!(pad_params(1, 4, 2, 2, 32).unwrap().v, 32);
        assert_eq!(pad_params(0, 4, 2, 2, 32).unwrap().v, 32);
        // B rounds up to a multiple of C·N·G first.
        let p = pad_params(10, 4, 2, 2, 20).unwrap();
        assert_eq!((p.b, p.v), (32, 32));
        assert_eq!(
            pad_params(10, 0, 2, 2, 32),
            Err(PreprocessError::ZeroParameter { name: "C" })
        );
        assert!(pad_params(10, 4, 2, 2, 0).is_err());
    }

    #[test]
    fn block_examples() {
        assert_eq!(block_coords(5, 12, 32), (0, 0));
        assert_eq!(block_coords(33, 2, 32), (1, 0));
        assert_eq!(block_coords(63, 63, 32), (1, 1));
        assert_eq!(block_order(0, 0, 64, 32), 0);
        assert_eq!(block_order(1, 0, 64, 32), 1);
        assert_eq!(block_order(0, 1, 64, 32), 2);
        assert_eq!(block_order(1, 1, 64, 32), 3);
    }

    #[test]
    fn worked_example_ids() {
        let p = small_tiling();
        assert_eq!(subgraph_order(0, 0, &p), 0);
        assert_eq!(subgraph_order(5, 1, &p), 1);
        assert_eq!(subgraph_order(33, 2, &p), 16);
        assert_eq!(intra_order(0, 0, &p), 0);
        assert_eq!(intra_order(5, 1, &p), 5);
        assert_eq!(intra_order(33, 2, &p), 9);
        assert_eq!(global_edge_id(0, 0, &p), 0);
        assert_eq!(global_edge_id(5, 1, &p), 69);
        assert_eq!(global_edge_id(33, 2, &p), 1033);
    }

    #[test]
    fn location_inverts_rank() {
        let p = small_tiling();
        for i in 0..64u64 {
            for j in 0..64u64 {
                let si = subgraph_order(i, j, &p);
                let loc = p.subgraph_location(si);
                let rb = p.row_base(&loc) as u64;
                let cb = p.col_base(&loc) as u64;
                assert!((rb..rb + 4).contains(&i) && (cb..cb + 16).contains(&j));
            }
        }
    }

    fn three_edge_graph() -> EdgeListGraph {
        EdgeListGraph::new(
            64,
            [(33, 2), (0, 0), (5, 1)].map(|(s, d)| Edge::new(s, d, 1.0)),
            true,
        )
        .unwrap()
    }

    #[test]
    fn preprocess_orders_by_id() {
        let ol = preprocess_edges(&three_edge_graph(), &small_tiling()).unwrap();
        let ids: Vec<u64> = ol.entries().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![0, 69, 1033]);
        ol.validate().unwrap();

        let empty = EdgeListGraph::new(8, [], true).unwrap();
        assert!(preprocess_edges(&empty, &small_tiling()).unwrap().is_empty());
    }

    #[test]
    fn preprocess_rejects_oversized_graph() {
        let g = EdgeListGraph::new(65, [], true).unwrap();
        assert!(matches!(
            preprocess_edges(&g, &small_tiling()),
            Err(PreprocessError::GraphTooLarge { .. })
        ));
    }

    #[test]
    fn tiles_in_rank_order() {
        let g = EdgeListGraph::new(64, [(0, 0), (5, 1)].map(|(s, d)| Edge::new(s, d, 1.0)), true)
            .unwrap();
        let ol = preprocess_edges(&g, &small_tiling()).unwrap();
        let tiles: Vec<_> = tile_stream(&ol).collect::<Result<_, _>>().unwrap();
        assert_eq!(tiles.iter().map(|t| t.si).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn single_edge_tile() {
        let g = EdgeListGraph::new(64, [Edge::new(0, 0, 3.0)], true).unwrap();
        let ol = preprocess_edges(&g, &small_tiling()).unwrap();
        let tiles: Vec<_> = tile_stream(&ol).collect::<Result<_, _>>().unwrap();
        assert_eq!(tiles.len(), 1);
        let t = &tiles[0];
        assert_eq!(t.shape(), (4, 16));
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(0, 0), Fx16(3));
        let nonzero = (0..4)
            .flat_map(|r| (0..16).map(move |c| (r, c)))
            .filter(|&(r, c)| t.get(r, c) != Fx16::ZERO)
            .count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn out_of_order_stream_errors() {
        let p = small_tiling();
        let mk = |src, dst| OrderedEdge {
            id: global_edge_id(src as u64, dst as u64, &p),
            src,
            dst,
            weight: Fx16(1),
        };
        let ol = OrderedEdgeList::from_parts(p, vec![mk(33, 2), mk(0, 0)]);
        let results: Vec<_> = tile_stream(&ol).collect();
        assert!(results.iter().any(|r| matches!(r, Err(PreprocessError::OutOfOrder { .. }))));
        assert!(tile_spans(&ol).is_err());
        assert!(ol.validate().is_err());
    }

    #[test]
    fn spans_match_stream() {
        let ol = preprocess_edges(&three_edge_graph(), &small_tiling()).unwrap();
        let spans = tile_spans(&ol).unwrap();
        assert_eq!(
            spans,
            vec![
                TileSpan { si: 0, range: 0..1 },
                TileSpan { si: 1, range: 1..2 },
                TileSpan { si: 16, range: 2..3 },
            ]
        );
    }
}
