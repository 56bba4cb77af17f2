//! End-to-end drivers: map a vertex program onto the engine and iterate it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    check_convergence, configure_salu, DstInit, Engine, EngineCounters, EngineError,
    EngineOptions, IterationState, SaluMode, VertexState,
};
use crate::fixed::{FxFormat, Fx16};
use crate::graph::EdgeListGraph;
use crate::preprocess::{pad_params, preprocess_edges, OrderedEdgeList, PreprocessError, TilingParams};
use crate::program::Program;

/// Default convergence threshold for sum programs: 7 ulps of Q0.16.
pub const DEFAULT_EPSILON: f64 = 7.0 / 65536.0;

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("damping factor {0} must lie in (0, 1)")]
    Damping(f64),
    #[error("source vertex {src} out of range for {num_vertices} vertices")]
    SourceOutOfRange { src: u32, num_vertices: usize },
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("input vector has {got} entries, graph has {expected} vertices")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("edge ({src}, {dst}) has weight 0; shortest-path weights must be in 1..=65534")]
    ZeroWeight { src: u32, dst: u32 },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Hardware shape. `b = None` means one block spanning the whole (padded)
/// graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub c: usize,
    pub n: usize,
    pub g: usize,
    pub b: Option<usize>,
    pub engine: EngineOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            c: 8,
            n: 32,
            g: 64,
            b: None,
            engine: EngineOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn with_shape(c: usize, n: usize, g: usize, b: Option<usize>) -> Self {
        SimConfig {
            c,
            n,
            g,
            b,
            ..SimConfig::default()
        }
    }

    pub fn tiling(&self, raw_vertices: usize) -> Result<TilingParams, PreprocessError> {
        let b = self.b.unwrap_or(raw_vertices.max(1));
        pad_params(raw_vertices, self.c, self.n, self.g, b)
    }
}

/// Deliberate corruption used to check that verification catches faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// Perturb the value programmed into every crossbar cell.
    CorruptWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramParams {
    pub program: Program,
    /// PageRank damping `r`.
    pub damping: f64,
    pub epsilon: f64,
    pub max_iter: u64,
    /// Root vertex for BFS/SSSP.
    pub source: u32,
    /// SpMV: divide by the source out-degree, as in the vertex-program
    /// table. Off gives the textbook product.
    pub scale_by_outdegree: bool,
    /// SpMV input vector (real values in [0, 1)); defaults to all zeros.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

impl ProgramParams {
    pub fn new(program: Program) -> Self {
        ProgramParams {
            program,
            damping: 0.85,
            epsilon: DEFAULT_EPSILON,
            max_iter: match program {
                Program::PageRank => 100,
                Program::Spmv => 1,
                // Enough for any shortest-path tree; replaced by V + 1 below.
                Program::Bfs | Program::Sssp => 0,
            },
            source: 0,
            scale_by_outdegree: true,
            x: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u64,
    /// Largest decoded property change (sum programs).
    pub max_delta: f64,
    /// Active vertices after the iteration (min programs).
    pub active: usize,
    pub tiles_processed: u64,
    pub tiles_skipped: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub program: Program,
    pub params: TilingParams,
    pub state: VertexState,
    pub iterations: u64,
    pub converged: bool,
    pub counters: EngineCounters,
    pub trace: Vec<IterationTrace>,
    pub nonempty_tiles: usize,
    /// Cell values that had to be clamped into the 16-bit format.
    pub clamped_cells: u64,
    pub clamped_inputs: u64,
}

impl RunOutcome {
    /// Properties of the real vertices, decoded.
    pub fn values(&self) -> Vec<f64> {
        self.state.values()
    }

    /// Raw properties of the real vertices.
    pub fn raw(&self) -> &[Fx16] {
        &self.state.prop[..self.state.real_vertices]
    }

    /// Integer results with `None` for `M` (min programs).
    pub fn distances(&self) -> Vec<Option<u64>> {
        self.raw()
            .iter()
            .map(|v| (!v.is_m()).then_some(v.raw() as u64))
            .collect()
    }
}

fn check_source(src: u32, num_vertices: usize) -> Result<(), AlgoError> {
    if src as usize >= num_vertices {
        return Err(AlgoError::SourceOutOfRange { src, num_vertices });
    }
    Ok(())
}

/// Run `req` on a preprocessed edge list over `num_vertices` real vertices.
pub fn simulate(
    ol: &OrderedEdgeList,
    num_vertices: usize,
    req: &ProgramParams,
    options: EngineOptions,
) -> Result<RunOutcome, AlgoError> {
    if num_vertices == 0 {
        return Err(AlgoError::EmptyGraph);
    }
    let params = *ol.params();
    let v = params.v;
    let mode = configure_salu(req.program);
    let format = mode.format();
    let outdeg = ol.out_degrees(v);
    let corrupt = req.fault == Some(Fault::CorruptWeights);

    let mut clamped_cells = 0u64;
    let mut clamped_inputs = 0u64;
    let mut frac_cell = |x: f64| {
        let (f, c) = Fx16::encode_clamped(x, FxFormat::Frac);
        clamped_cells += c as u64;
        f
    };

    let engine = match req.program {
        Program::PageRank => {
            if !(req.damping > 0.0 && req.damping < 1.0) {
                return Err(AlgoError::Damping(req.damping));
            }
            let r = req.damping;
            Engine::new(ol, mode, options, |e| {
                let cell = frac_cell(r / outdeg[e.src as usize] as f64);
                if corrupt { Fx16(cell.raw() / 2) } else { cell }
            })?
        }
        Program::Spmv => {
            let scale = req.scale_by_outdegree;
            Engine::new(ol, mode, options, |e| {
                let mut w = e.weight.raw() as f64;
                if scale {
                    w /= outdeg[e.src as usize] as f64;
                }
                let cell = frac_cell(w);
                if corrupt { Fx16(cell.raw() / 2) } else { cell }
            })?
        }
        Program::Bfs => {
            check_source(req.source, num_vertices)?;
            Engine::new(ol, mode, options, |_| if corrupt { Fx16(2) } else { Fx16(1) })?
        }
        Program::Sssp => {
            check_source(req.source, num_vertices)?;
            if let Some(e) = ol.entries().iter().find(|e| e.weight == Fx16::ZERO) {
                return Err(AlgoError::ZeroWeight { src: e.src, dst: e.dst });
            }
            Engine::new(ol, mode, options, |e| {
                if corrupt { Fx16(e.weight.raw().saturating_add(1).min(0xFFFE)) } else { e.weight }
            })?
        }
    };

    // Initial source state and per-iteration destination initialization.
    let mut src = VertexState::new(format, v, num_vertices, Fx16::ZERO);
    src.outdegree.clone_from(&outdeg);
    let init = match req.program {
        Program::PageRank => {
            let (start, c) = Fx16::encode_clamped(1.0 / num_vertices as f64, format);
            clamped_inputs += c as u64;
            src.prop[..num_vertices].fill(start);
            let (teleport, _) = Fx16::encode_clamped((1.0 - req.damping) / num_vertices as f64, format);
            let mut fixed = vec![Fx16::ZERO; v];
            fixed[..num_vertices].fill(teleport);
            DstInit::Fixed(fixed)
        }
        Program::Spmv => {
            if let Some(x) = &req.x {
                if x.len() != num_vertices {
                    return Err(AlgoError::DimensionMismatch {
                        got: x.len(),
                        expected: num_vertices,
                    });
                }
                for (slot, &xi) in src.prop.iter_mut().zip(x) {
                    let (f, c) = Fx16::encode_clamped(xi, format);
                    clamped_inputs += c as u64;
                    *slot = f;
                }
            }
            DstInit::Fixed(vec![Fx16::ZERO; v])
        }
        Program::Bfs | Program::Sssp => {
            src.prop.fill(Fx16::M);
            src.prop[req.source as usize] = Fx16::ZERO;
            src.active[req.source as usize] = true;
            DstInit::CopySrc
        }
    };

    let max_iter = match (req.program, req.max_iter) {
        (Program::Bfs | Program::Sssp, 0) => num_vertices as u64 + 1,
        (_, m) => m,
    };
    let mut state = IterationState::new(src);
    let mut trace = Vec::new();
    let mut converged = false;
    while state.iteration < max_iter {
        let before = state.counters;
        state = engine.run_iteration(state, &init)?;
        let fmt = state.src.format;
        let max_delta = state
            .src
            .prop
            .iter()
            .zip(&state.dst.prop)
            .map(|(a, b)| (a.decode(fmt) - b.decode(fmt)).abs())
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max);
        trace.push(IterationTrace {
            iteration: state.iteration,
            max_delta,
            active: state.src.active_count(),
            tiles_processed: state.counters.tiles_processed - before.tiles_processed,
            tiles_skipped: state.counters.tiles_skipped - before.tiles_skipped,
        });
        log::debug!("{} iteration {}: {:?}", req.program, state.iteration, trace.last());
        if req.program == Program::Spmv {
            converged = true;
            break;
        }
        if check_convergence(&state, mode, req.epsilon) {
            converged = true;
            break;
        }
    }
    if mode == SaluMode::Min && state.iteration == 0 {
        converged = check_convergence(&state, mode, req.epsilon);
    }
    Ok(RunOutcome {
        program: req.program,
        params,
        nonempty_tiles: engine.nonempty_tiles(),
        iterations: state.iteration,
        converged,
        counters: state.counters,
        state: state.src,
        trace,
        clamped_cells,
        clamped_inputs,
    })
}

/// Preprocess `g` for `cfg` and run `req`.
pub fn run_program(g: &EdgeListGraph, req: &ProgramParams, cfg: &SimConfig) -> Result<RunOutcome, AlgoError> {
    if g.num_vertices() == 0 {
        return Err(AlgoError::EmptyGraph);
    }
    let params = cfg.tiling(g.num_vertices())?;
    let ol = preprocess_edges(g, &params)?;
    simulate(&ol, g.num_vertices(), req, cfg.engine)
}

pub fn run_pagerank(
    g: &EdgeListGraph,
    damping: f64,
    epsilon: f64,
    max_iter: u64,
    cfg: &SimConfig,
) -> Result<RunOutcome, AlgoError> {
    let req = ProgramParams {
        damping,
        epsilon,
        max_iter,
        ..ProgramParams::new(Program::PageRank)
    };
    run_program(g, &req, cfg)
}

pub fn run_spmv(g: &EdgeListGraph, x: &[f64], cfg: &SimConfig) -> Result<RunOutcome, AlgoError> {
    if x.len() != g.num_vertices() {
        return Err(AlgoError::DimensionMismatch {
            got: x.len(),
            expected: g.num_vertices(),
        });
    }
    let req = ProgramParams {
        x: Some(x.to_vec()),
        ..ProgramParams::new(Program::Spmv)
    };
    run_program(g, &req, cfg)
}

pub fn run_bfs(g: &EdgeListGraph, src: u32, cfg: &SimConfig) -> Result<RunOutcome, AlgoError> {
    check_source(src, g.num_vertices())?;
    let req = ProgramParams {
        source: src,
        ..ProgramParams::new(Program::Bfs)
    };
    run_program(g, &req, cfg)
}

pub fn run_sssp(g: &EdgeListGraph, src: u32, cfg: &SimConfig) -> Result<RunOutcome, AlgoError> {
    check_source(src, g.num_vertices())?;
    let req = ProgramParams {
        source: src,
        ..ProgramParams::new(Program::Sssp)
    };
    run_program(g, &req, cfg)
}
