//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphr::algorithms::{run_bfs, run_pagerank, run_program, run_spmv, run_sssp, ProgramParams, SimConfig};
use graphr::config::RunConfig;
use graphr::costmodel::{ge_cycle_budget, tally_costs, CostParams};
use graphr::crossbar::{recompose, shift_add, slice_digits, AdcModel, CrossbarMode, GeCluster};
use graphr::engine::{add_op_step, RegFile};
use graphr::fixed::Fx16;
use graphr::graph::{Edge, EdgeListGraph};
use graphr::oracle;
use graphr::preprocess::{global_edge_id, pad_params, TileCell, TilingParams};
use graphr::program::Program;
use graphr::report::{GraphSummary, RunReport};
use graphr::synth;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn graph(n: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> EdgeListGraph {
    EdgeListGraph::new(n, edges.into_iter().map(|(s, d, w)| Edge::new(s, d, w)), true).unwrap()
}

fn small_tiling() -> TilingParams {
    pad_params(64, 4, 2, 2, 32).unwrap()
}

// 1. PageRank micro-example, one iteration from the uniform vector.
fn pagerank_micro() -> Outcome {
    const TOL: f64 = 1.0 / 4096.0;
    const SUM_TOL: f64 = 4.0 / 65536.0;
    // Column-stochastic transfer matrix, m[dst][src].
    let h = |n| Ratio::new(1i64, n);
    let z = Ratio::from_integer(0);
    let m = [
        [z, h(2), h(1), z],
        [h(3), z, z, h(2)],
        [h(3), z, z, h(2)],
        [h(3), h(2), z, z],
    ];
    let r = Ratio::new(4i64, 5);
    let quarter = h(4);
    let exact: Vec<f64> = m
        .iter()
        .map(|row| {
            let x = row.iter().fold(z, |acc, &p| acc + r * p * quarter) + (Ratio::from_integer(1) - r) * quarter;
            *x.numer() as f64 / *x.denom() as f64
        })
        .collect();

    let mut edges = Vec::new();
    for (dst, row) in m.iter().enumerate() {
        for (src, p) in row.iter().enumerate() {
            if *p != z {
                edges.push((src as u32, dst as u32, 1.0));
            }
        }
    }
    let g = graph(4, edges);
    let out = run_pagerank(&g, 0.8, 0.0, 1, &SimConfig::with_shape(4, 2, 2, None)).map_err(|e| e.to_string())?;
    let got = out.values();
    let err = got.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sum: f64 = got.iter().sum();
    ensure(out.iterations == 1, || format!("{} iterations", out.iterations))?;
    ensure(err <= TOL, || format!("max error {err:.3e} > 2^-12; got {got:?}, want {exact:?}"))?;
    ensure((sum - 1.0).abs() <= SUM_TOL, || format!("sum {sum} off by more than 4*2^-16"))?;
    Ok(format!("values {got:.5?}, max error {err:.2e}, |sum-1| {:.2e}", (sum - 1.0).abs()))
}

// 2. Shortest-path micro-example on one add-mode tile.
fn sssp_micro() -> Outcome {
    let p = small_tiling();
    let m = u16::MAX as u32;
    let cells: Vec<TileCell> = [(0, 1, 1), (0, 2, 5), (1, 2, 3), (1, 3, 1), (3, 2, 1)]
        .into_iter()
        .map(|(row, col, w)| TileCell { row, col, value: Fx16(w) })
        .collect();
    let mut ge = GeCluster::new(&p, AdcModel::default());
    ge.program_cells(CrossbarMode::Add, &cells, None).map_err(|e| e.to_string())?;
    let mut regs = RegFile::new(&p);
    let mut seed = vec![m; p.stripe()];
    seed[..4].copy_from_slice(&[7, 6, m, m]);
    regs.seed(seed);
    regs.load_input(&[Fx16(4), Fx16(3), Fx16(1), Fx16(2)]);

    add_op_step(&mut ge, &mut regs, 0, Fx16(4)).map_err(|e| e.to_string())?;
    let t1 = regs.reg_o[..4].to_vec();
    ensure(t1 == [7, 5, 9, m], || format!("after t=1: {t1:?}"))?;
    add_op_step(&mut ge, &mut regs, 1, Fx16(3)).map_err(|e| e.to_string())?;
    let t2 = regs.reg_o[..4].to_vec();
    ensure(t2 == [7, 5, 6, 4], || format!("after t=2: {t2:?}"))?;
    let flags = regs.updated[..4].to_vec();
    ensure(flags == [false, true, true, true], || format!("active flags {flags:?}"))?;
    Ok("t=1 [7,5,9,M], t=2 [7,5,6,4], active j1 j2 j3".into())
}

/// Ranks every cell of the padded grid by walking blocks column-major,
/// subgraphs column-major within a block and cells column-major within a
/// subgraph.
fn enumerate_order(p: &TilingParams) -> Vec<u64> {
    let (v, b, c, stripe) = (p.v, p.b, p.c, p.stripe());
    let mut rank = vec![u64::MAX; v * v];
    let mut next = 0u64;
    for bj in 0..v / b {
        for bi in 0..v / b {
            for sj in 0..b / stripe {
                for si in 0..b / c {
                    for cj in 0..stripe {
                        for ci in 0..c {
                            let i = bi * b + si * c + ci;
                            let j = bj * b + sj * stripe + cj;
                            rank[i * v + j] = next;
                            next += 1;
                        }
                    }
                }
            }
        }
    }
    rank
}

// 3. Global edge order is a bijection and matches the brute-force walk.
fn preprocessing_bijection() -> Outcome {
    let p = small_tiling();
    let n = p.v * p.v;
    let mut seen = vec![false; n];
    for i in 0..p.v as u64 {
        for j in 0..p.v as u64 {
            let id = global_edge_id(i, j, &p) as usize;
            ensure(id < n && !seen[id], || format!("id {id} for ({i},{j}) out of range or repeated"))?;
            seen[id] = true;
        }
    }
    ensure(seen.iter().all(|&s| s), || "ids do not cover 0..4095".into())?;
    let spot = [(0, 0), (5, 1), (33, 2)].map(|(i, j)| global_edge_id(i, j, &p));
    ensure(spot == [0, 69, 1033], || format!("spot ids {spot:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut shapes = Vec::new();
    while shapes.len() < 5 {
        let c = 1 << rng.gen_range(0..=3);
        let n = 1 << rng.gen_range(0..=2);
        let g = 1 << rng.gen_range(0..=2);
        let b = rng.gen_range(1..=128);
        let v = rng.gen_range(1..=256);
        let Ok(p) = pad_params(v, c, n, g, b) else { continue };
        if p.v > 256 {
            continue;
        }
        let want = enumerate_order(&p);
        for i in 0..p.v {
            for j in 0..p.v {
                let got = global_edge_id(i as u64, j as u64, &p);
                ensure(got == want[i * p.v + j], || {
                    format!("{p:?}: ({i},{j}) id {got}, enumerator {}", want[i * p.v + j])
                })?;
            }
        }
        shapes.push((p.c, p.n, p.g, p.b, p.v));
    }
    Ok(format!("4096 distinct ids; enumerator agrees on (C,N,G,B,V) {shapes:?}"))
}

fn random_shape(rng: &mut ChaCha8Rng, v: usize) -> SimConfig {
    let c = [2, 4, 8][rng.gen_range(0..3)];
    let n = [1, 2, 4][rng.gen_range(0..3)];
    let g = [1, 2, 4][rng.gen_range(0..3)];
    let b = if rng.gen_bool(0.5) { None } else { Some(rng.gen_range(1..=v)) };
    SimConfig::with_shape(c, n, g, b)
}

// 4. BFS and SSSP equal their reference implementations exactly.
fn integer_programs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked_edges = 0;
    for trial in 0..100u64 {
        let v = rng.gen_range(2..=512);
        let edges = rng.gen_range(v..=6 * v);
        let g = synth::uniform_graph_edges(v, edges, 15, 1000 + trial).unwrap();
        let cfg = random_shape(&mut rng, v);
        let src = rng.gen_range(0..v) as u32;
        let sssp = run_sssp(&g, src, &cfg).map_err(|e| e.to_string())?;
        let want = oracle::exact_sssp(&g, src);
        ensure(sssp.distances() == want, || format!("trial {trial}: SSSP differs (V={v}, {cfg:?})"))?;
        ensure(sssp.converged, || format!("trial {trial}: SSSP did not converge"))?;
        let bfs = run_bfs(&g, src, &cfg).map_err(|e| e.to_string())?;
        ensure(bfs.distances() == oracle::exact_bfs(&g, src), || {
            format!("trial {trial}: BFS differs (V={v}, {cfg:?})")
        })?;
        let unit = graph(v, g.edges().iter().map(|e| (e.src, e.dst, 1.0)));
        let unit_sssp = run_sssp(&unit, src, &cfg).map_err(|e| e.to_string())?;
        ensure(unit_sssp.distances() == bfs.distances(), || {
            format!("trial {trial}: BFS and unit-weight SSSP disagree")
        })?;
        checked_edges += g.num_edges();
    }
    Ok(format!("100 graphs, {checked_edges} edges: SSSP, BFS exact; BFS == unit SSSP"))
}

// 5. PageRank and SpMV within tolerance of double precision.
fn fractional_programs() -> Outcome {
    const PR_TOL: f64 = 1e-3;
    const SPMV_TOL: f64 = 1.0 / 4096.0;
    let mut worst_pr: f64 = 0.0;
    let shapes = [
        (1000, SimConfig::default()),
        (3000, SimConfig::with_shape(8, 4, 4, Some(1024))),
        (5000, SimConfig::with_shape(8, 8, 8, None)),
    ];
    for (k, (v, mut cfg)) in shapes.into_iter().enumerate() {
        cfg.engine.workers = 4;
        let g = synth::uniform_graph_edges(v, 8 * v, 1, 50 + k as u64).unwrap();
        let out = run_pagerank(&g, 0.85, 0.0, 20, &cfg).map_err(|e| e.to_string())?;
        ensure(out.iterations == 20, || format!("{} iterations", out.iterations))?;
        let want = oracle::exact_pagerank(&g, 0.85, 20);
        let err = out.values().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= PR_TOL, || format!("PageRank V={v}: L-inf {err:.3e} > 1e-3"))?;
        worst_pr = worst_pr.max(err);
    }

    let mut worst_spmv: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (k, v) in [500usize, 2000, 5000].into_iter().enumerate() {
        // Out-degree 4 everywhere keeps the programmed values exact (w/4).
        let mut edges = Vec::with_capacity(4 * v);
        for src in 0..v {
            let mut dsts = std::collections::BTreeSet::new();
            while dsts.len() < 4.min(v) {
                dsts.insert(rng.gen_range(0..v));
            }
            edges.extend(dsts.into_iter().map(|d| (src as u32, d as u32, 1.0)));
        }
        let g = graph(v, edges);
        let x = synth::uniform_vector(v, 0.1, 70 + k as u64);
        let cfg = SimConfig::with_shape(8, 4, 4, Some(v.div_ceil(2)));
        let out = run_spmv(&g, &x, &cfg).map_err(|e| e.to_string())?;
        let want = oracle::dense_spmv(&g, &x, true);
        let err = out.values().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= SPMV_TOL, || format!("SpMV V={v}: L-inf {err:.3e} > 2^-12"))?;
        worst_spmv = worst_spmv.max(err);
    }
    Ok(format!("PageRank L-inf {worst_pr:.2e} (<= 1e-3), SpMV L-inf {worst_spmv:.2e} (<= 2^-12)"))
}

fn rne16(sum: u128) -> u16 {
    let q = sum >> 16;
    let rem = sum & 0xFFFF;
    let q = if rem > 0x8000 || (rem == 0x8000 && q & 1 == 1) { q + 1 } else { q };
    q.min(0xFFFF) as u16
}

// 6. Bit slicing is lossless and MAC evaluation is bit-exact.
fn bit_slicing() -> Outcome {
    for raw in 0..=u16::MAX {
        let d = slice_digits(raw);
        ensure(recompose(d) == raw, || format!("recompose failed for {raw:#06x}"))?;
        ensure(shift_add(d.map(u64::from)) == raw as u64, || format!("shift_add failed for {raw:#06x}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shapes = [(4, 2, 2), (8, 1, 1), (8, 4, 2), (2, 1, 4)];
    for call in 0..1000 {
        let (c, n, g) = shapes[call % shapes.len()];
        let p = pad_params(1, c, n, g, 1).unwrap();
        let width = p.stripe();
        let fill = rng.gen_range(0.0..=1.0);
        let mut matrix = vec![vec![0u16; width]; c];
        let mut cells = Vec::new();
        for (row, line) in matrix.iter_mut().enumerate() {
            for (col, w) in line.iter_mut().enumerate() {
                if rng.gen_bool(fill) {
                    *w = rng.gen();
                    cells.push(TileCell {
                        row: row as u32,
                        col: col as u32,
                        value: Fx16(*w),
                    });
                }
            }
        }
        let bias: Vec<u16> = (0..width).map(|_| if rng.gen_bool(0.5) { rng.gen() } else { 0 }).collect();
        let input: Vec<u16> = (0..c).map(|_| rng.gen()).collect();
        let bias_in: u16 = rng.gen();

        let mut ge = GeCluster::new(&p, AdcModel::default());
        let bias_fx: Vec<Fx16> = bias.iter().map(|&b| Fx16(b)).collect();
        ge.program_cells(CrossbarMode::Mac, &cells, Some(&bias_fx)).map_err(|e| e.to_string())?;
        let input_fx: Vec<Fx16> = input.iter().map(|&x| Fx16(x)).collect();
        let got = ge.mvm_mac(&input_fx, Fx16(bias_in)).map_err(|e| e.to_string())?;
        for col in 0..width {
            let sum: u128 = (0..c).map(|r| input[r] as u128 * matrix[r][col] as u128).sum::<u128>()
                + bias_in as u128 * bias[col] as u128;
            let want = rne16(sum);
            ensure(got[col].raw() == want, || {
                format!("call {call} ({c},{n},{g}) column {col}: got {:#06x}, want {want:#06x}", got[col].raw())
            })?;
        }
    }
    Ok("65536 values round-trip; 1000 random MAC evaluations bit-exact".into())
}

fn report_for(g: &EdgeListGraph, program: Program, workers: usize, skip: bool) -> Result<(Vec<Fx16>, RunReport), String> {
    let cfg = RunConfig {
        program,
        c: Some(4),
        n: Some(2),
        g: Some(2),
        b: Some(96),
        workers,
        skip_empty: skip,
        max_iter: Some(12),
        epsilon: 0.0,
        source: 1,
        seed: 9,
        ..RunConfig::default()
    };
    let sim = cfg.sim_config(None);
    let mut req: ProgramParams = cfg.program_params();
    if program == Program::Spmv {
        req.x = Some(synth::uniform_vector(g.num_vertices(), 0.1, cfg.seed));
    }
    let out = run_program(g, &req, &sim).map_err(|e| e.to_string())?;
    let cost = tally_costs(&out.counters, &out.params, &cfg.cost).map_err(|e| e.to_string())?;
    let summary = GraphSummary {
        vertices: g.num_vertices(),
        edges: g.num_edges(),
        density: g.density(),
    };
    Ok((out.raw().to_vec(), RunReport::new(&cfg, summary, &out, cost, false)))
}

// 7. Worker count and empty-tile skipping do not change results.
fn determinism() -> Outcome {
    let g = synth::uniform_graph(300, 0.01, 15, 77).unwrap();
    for program in Program::ALL {
        let (base_state, base) = report_for(&g, program, 1, true)?;
        for workers in [1, 2, 8] {
            for skip in [true, false] {
                let (state, r) = report_for(&g, program, workers, skip)?;
                ensure(state == base_state, || format!("{program}: state differs at workers={workers} skip={skip}"))?;
                ensure(r.report_hash == base.report_hash, || {
                    format!("{program}: report hash differs at workers={workers} skip={skip}")
                })?;
                if skip {
                    ensure(r.cost.counters == base.cost.counters, || {
                        format!("{program}: counters differ at workers={workers}")
                    })?;
                } else {
                    let (a, b) = (&r.cost.counters, &base.cost.counters);
                    ensure(a.tiles_processed + a.tiles_skipped == b.tiles_processed + b.tiles_skipped, || {
                        format!("{program}: tile accounting differs with skipping off")
                    })?;
                }
            }
        }
    }
    Ok("4 programs x workers {1,2,8} x skip {on,off}: identical states and report hashes".into())
}

// 8. ADC throughput budget at the published design point.
fn adc_budget() -> Outcome {
    let params = CostParams {
        adcs_per_ge: Some(1),
        ..CostParams::default()
    };
    let b = ge_cycle_budget(&params, 8, 8);
    ensure(b.conversions_per_cycle == 64, || format!("{} conversions per cycle", b.conversions_per_cycle))?;
    ensure(b.capacity_per_cycle == 64.0, || format!("capacity {}", b.capacity_per_cycle))?;
    ensure(b.feasible && b.headroom == 0.0, || format!("{b:?}"))?;
    let over = ge_cycle_budget(&params, 8, 16);
    ensure(!over.feasible && over.deficit == 64.0, || format!("{over:?}"))?;
    Ok("C=8, 8 crossbars per ADC, 64 ns at 1.0 GS/s: 64 conversions = 64 capacity, exactly feasible".into())
}

// 9. Sparsity trend across densities.
fn density_trend() -> Outcome {
    let cfg = SimConfig::with_shape(4, 1, 2, None);
    let cost = CostParams::default();
    let mut rows = Vec::new();
    for (k, density) in [1e-4, 1e-3, 1e-2, 1e-1].into_iter().enumerate() {
        let g = synth::uniform_graph(4096, density, 15, 900 + k as u64).unwrap();
        let out = run_pagerank(&g, 0.85, 0.0, 1, &cfg).map_err(|e| e.to_string())?;
        let tally = tally_costs(&out.counters, &out.params, &cost).map_err(|e| e.to_string())?;
        let p = out.params;
        let nonempty = out.nonempty_tiles as f64;
        let fraction = nonempty / p.total_subgraphs() as f64;
        let utilization = g.num_edges() as f64 / (nonempty * (p.c * p.stripe()) as f64);
        let per_edge = tally.total_energy_j / g.num_edges() as f64;
        rows.push((density, fraction, utilization, per_edge));
    }
    for w in rows.windows(2) {
        let (a, b) = (w[0], w[1]);
        ensure(b.1 > a.1, || format!("non-empty fraction not increasing: {rows:?}"))?;
        ensure(b.2 > a.2, || format!("cell utilization not increasing: {rows:?}"))?;
        ensure(b.3 <= a.3, || format!("energy per edge increased: {rows:?}"))?;
    }
    let text: Vec<String> = rows
        .iter()
        .map(|(d, f, u, e)| format!("d={d:e}: nonempty {f:.4}, util {u:.4}, {:.3} nJ/edge", e * 1e9))
        .collect();
    Ok(text.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 pagerank micro-example", pagerank_micro, Some(Duration::from_secs(1))),
        ("2 sssp micro-example", sssp_micro, Some(Duration::from_secs(1))),
        ("3 preprocessing bijection", preprocessing_bijection, Some(Duration::from_secs(5))),
        ("4 integer programs vs oracle", integer_programs, Some(Duration::from_secs(60))),
        ("5 fractional programs vs oracle", fractional_programs, Some(Duration::from_secs(60))),
        ("6 bit-slice identity", bit_slicing, Some(Duration::from_secs(10))),
        ("7 determinism and skip invariance", determinism, None),
        ("8 adc budget", adc_budget, None),
        ("9 density trend", density_trend, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, budget) {
            if elapsed > limit {
                result = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS  criterion {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
