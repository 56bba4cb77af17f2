use proptest::prelude::*;

use graphr::algorithms::{run_pagerank, run_program, run_sssp, ProgramParams, SimConfig};
use graphr::costmodel::{tally_costs, CostParams};
use graphr::crossbar::{AdcModel, CrossbarMode, GeCluster};
use graphr::fixed::Fx16;
use graphr::graph::{Edge, EdgeListGraph};
use graphr::oracle;
use graphr::preprocess::{global_edge_id, pad_params, preprocess_edges, tile_stream, TileCell, TilingParams};
use graphr::program::Program;
use graphr::synth;

fn shape() -> impl Strategy<Value = (usize, usize, usize, usize, usize)> {
    (0u32..=3, 0u32..=2, 0u32..=2, 1usize..=64, 1usize..=96).prop_map(|(c, n, g, b, v)| (1 << c, 1 << n, 1 << g, b, v))
}

fn params((c, n, g, b, v): (usize, usize, usize, usize, usize)) -> TilingParams {
    pad_params(v, c, n, g, b).unwrap()
}

fn edges_for(v: usize) -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
    proptest::collection::vec((0..v as u32, 0..v as u32, 1u32..=15), 0..(4 * v).max(1))
}

fn build(v: usize, edges: &[(u32, u32, u32)]) -> EdgeListGraph {
    EdgeListGraph::new(v, edges.iter().map(|&(s, d, w)| Edge::new(s, d, w as f64)), true).unwrap()
}

fn graph_and_shape() -> impl Strategy<Value = (EdgeListGraph, TilingParams)> {
    shape().prop_flat_map(|sh| {
        let v = sh.4;
        edges_for(v).prop_map(move |e| (build(v, &e), params(sh)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ids_are_a_bijection(sh in shape()) {
        let p = params(sh);
        let n = p.v * p.v;
        let mut seen = vec![false; n];
        for i in 0..p.v as u64 {
            for j in 0..p.v as u64 {
                let id = global_edge_id(i, j, &p) as usize;
                prop_assert!(id < n && !seen[id]);
                seen[id] = true;
            }
        }
    }

    #[test]
    fn gaps_count_empty_cells((g, p) in graph_and_shape()) {
        let ol = preprocess_edges(&g, &p).unwrap();
        let occupied: std::collections::HashSet<u64> = ol.entries().iter().map(|e| e.id).collect();
        for w in ol.entries().windows(2) {
            let empty = (w[0].id + 1..w[1].id).filter(|id| !occupied.contains(id)).count() as u64;
            prop_assert_eq!(w[1].id - w[0].id, empty + 1);
        }
    }

    #[test]
    fn tile_stream_flattens_to_sorted_list((g, p) in graph_and_shape()) {
        let ol = preprocess_edges(&g, &p).unwrap();
        let mut flat = Vec::new();
        for tile in tile_stream(&ol) {
            flat.extend(tile.unwrap().to_edges());
        }
        let want: Vec<_> = ol.entries().iter().map(|e| (e.src, e.dst, e.weight)).collect();
        prop_assert_eq!(flat, want);
    }

    #[test]
    fn visit_once_and_column_writes((g, p) in graph_and_shape(), skip in any::<bool>()) {
        let mut cfg = SimConfig::with_shape(p.c, p.n, p.g, None);
        cfg.engine.skip_empty = skip;
        let out = run_pagerank(&g, 0.85, 0.0, 3, &cfg).unwrap();
        let k = out.counters;
        prop_assert_eq!(k.tiles_processed + k.tiles_skipped, 3 * out.params.total_subgraphs());
        if !skip {
            // With a single block every destination chunk is written once per iteration.
            prop_assert_eq!(k.dst_chunk_writes, 3 * out.params.dst_chunks() as u64);
            prop_assert_eq!(k.tiles_skipped, 0);
        }
    }

    #[test]
    fn skip_and_workers_do_not_change_results((g, p) in graph_and_shape(), prog in 0usize..4) {
        let program = Program::ALL[prog];
        let mut req = ProgramParams::new(program);
        req.max_iter = if program == Program::PageRank { 4 } else { req.max_iter };
        req.epsilon = 0.0;
        if program == Program::Spmv {
            req.x = Some(synth::uniform_vector(g.num_vertices(), 0.2, 1));
        }
        let mut base = None;
        for (workers, skip) in [(1, true), (1, false), (3, true), (3, false)] {
            let mut cfg = SimConfig::with_shape(p.c, p.n, p.g, Some(p.b));
            cfg.engine.workers = workers;
            cfg.engine.skip_empty = skip;
            let out = run_program(&g, &req, &cfg).unwrap();
            let raw = out.raw().to_vec();
            match &base {
                None => base = Some(raw),
                Some(b) => prop_assert_eq!(b, &raw),
            }
        }
    }

    #[test]
    fn sssp_matches_oracle_and_relaxes_monotonically((g, p) in graph_and_shape(), src in 0u32..96) {
        let src = src % g.num_vertices() as u32;
        let cfg = SimConfig::with_shape(p.c, p.n, p.g, Some(p.b));
        let out = run_sssp(&g, src, &cfg).unwrap();
        prop_assert_eq!(out.distances(), oracle::exact_sssp(&g, src));
        let mut prev: Option<Vec<u16>> = None;
        for k in 1..=out.iterations {
            let mut req = ProgramParams::new(Program::Sssp);
            req.source = src;
            req.max_iter = k;
            let step: Vec<u16> = run_program(&g, &req, &cfg).unwrap().raw().iter().map(|v| v.raw()).collect();
            if let Some(prev) = &prev {
                prop_assert!(step.iter().zip(prev).all(|(a, b)| a <= b));
            }
            prev = Some(step);
        }
    }

    #[test]
    fn mac_is_linear_up_to_rounding(
        cells in proptest::collection::vec((0u32..4, 0u32..16, any::<u16>()), 0..40),
        a in proptest::collection::vec(0u16..0x8000, 4),
        b in proptest::collection::vec(0u16..0x8000, 4),
    ) {
        let p = pad_params(1, 4, 2, 2, 1).unwrap();
        let cells: Vec<TileCell> = cells.into_iter().map(|(row, col, v)| TileCell { row, col, value: Fx16(v) }).collect();
        let mut ge = GeCluster::new(&p, AdcModel::default());
        ge.program_cells(CrossbarMode::Mac, &cells, None).unwrap();
        let fx = |v: &[u16]| v.iter().map(|&x| Fx16(x)).collect::<Vec<_>>();
        let ab: Vec<u16> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ya = ge.mvm_mac(&fx(&a), Fx16::ZERO).unwrap();
        let yb = ge.mvm_mac(&fx(&b), Fx16::ZERO).unwrap();
        let yab = ge.mvm_mac(&fx(&ab), Fx16::ZERO).unwrap();
        for col in 0..p.stripe() {
            if yab[col] == Fx16(u16::MAX) {
                continue;
            }
            let split = ya[col].raw() as i64 + yb[col].raw() as i64;
            prop_assert!((split - yab[col].raw() as i64).abs() <= 1);
        }
    }

    #[test]
    fn row_add_absorbs_on_empty_cells(
        cells in proptest::collection::vec((0u32..4, 0u32..16, 1u16..0xFFFF), 0..30),
        dist in any::<u16>(),
        row in 0usize..4,
    ) {
        let p = pad_params(1, 4, 2, 2, 1).unwrap();
        let cells: Vec<TileCell> = cells.into_iter().map(|(row, col, v)| TileCell { row, col, value: Fx16(v) }).collect();
        let mut ge = GeCluster::new(&p, AdcModel::default());
        ge.program_cells(CrossbarMode::Add, &cells, None).unwrap();
        let out = ge.row_add(row, Fx16(dist)).unwrap();
        for (col, v) in out.iter().enumerate() {
            if ge.cell(row, col) == Fx16::M {
                prop_assert_eq!(*v, Fx16::M);
            }
        }
    }
}

#[test]
fn pagerank_conserves_probability_without_dangling_vertices() {
    let v = 600;
    // Every vertex links to its successor, plus random extra edges.
    let mut edges: Vec<Edge> = (0..v as u32).map(|i| Edge::new(i, (i + 1) % v as u32, 1.0)).collect();
    edges.extend(synth::uniform_graph_edges(v, 3 * v, 1, 12).unwrap().edges().iter().copied());
    let g = EdgeListGraph::new(v, edges, true).unwrap();
    let cfg = SimConfig::with_shape(8, 4, 2, Some(256));
    for iters in [1, 5, 10] {
        let out = run_pagerank(&g, 0.85, 0.0, iters, &cfg).unwrap();
        let sum: f64 = out.values().iter().sum();
        let bound = iters as f64 * v as f64 / 65536.0;
        assert!((sum - 1.0).abs() <= bound, "{iters} iterations: sum {sum}");
    }
}

#[test]
fn skipping_strictly_reduces_cost() {
    let g = synth::uniform_graph(256, 0.01, 15, 4).unwrap();
    let costs = CostParams::default();
    for program in Program::ALL {
        let mut req = ProgramParams::new(program);
        if program == Program::Spmv {
            req.x = Some(vec![0.01; 256]);
        }
        let mut totals = Vec::new();
        for skip in [true, false] {
            let mut cfg = SimConfig::with_shape(4, 2, 2, Some(128));
            cfg.engine.skip_empty = skip;
            let out = run_program(&g, &req, &cfg).unwrap();
            assert!(out.counters.tiles_skipped > 0 || !skip);
            let r = tally_costs(&out.counters, &out.params, &costs).unwrap();
            totals.push((r.total_time_s, r.total_energy_j));
        }
        assert!(totals[0].0 < totals[1].0, "{program}: {totals:?}");
        assert!(totals[0].1 < totals[1].1, "{program}: {totals:?}");
    }
}

#[test]
fn identical_runs_cost_the_same() {
    let g = synth::uniform_graph(200, 0.02, 15, 8).unwrap();
    let cfg = SimConfig::with_shape(4, 2, 2, None);
    let a = run_pagerank(&g, 0.85, 0.0, 5, &cfg).unwrap();
    let b = run_pagerank(&g, 0.85, 0.0, 5, &cfg).unwrap();
    let p = CostParams::default();
    assert_eq!(
        tally_costs(&a.counters, &a.params, &p).unwrap(),
        tally_costs(&b.counters, &b.params, &p).unwrap()
    );
}

#[test]
fn programming_energy_dominates_write_heavy_runs() {
    let g = synth::uniform_graph(200, 0.05, 15, 2).unwrap();
    let out = run_pagerank(&g, 0.85, 0.0, 3, &SimConfig::with_shape(4, 2, 2, None)).unwrap();
    let r = tally_costs(&out.counters, &out.params, &CostParams::default()).unwrap();
    assert!(r.energy.programming_j > 0.9 * r.total_energy_j);
}
