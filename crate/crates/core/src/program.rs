//! Vertex programs supported by the accelerator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::FxFormat;

#[derive(Debug, Error, PartialEq)]
#[error("unknown program {0:?} (expected pagerank, spmv, bfs or sssp)")]
pub struct UnknownProgram(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Program {
    PageRank,
    Spmv,
    Bfs,
    Sssp,
}

impl Program {
    pub const ALL: [Program; 4] = [Program::PageRank, Program::Spmv, Program::Bfs, Program::Sssp];

    pub fn name(self) -> &'static str {
        match self {
            Program::PageRank => "pagerank",
            Program::Spmv => "spmv",
            Program::Bfs => "bfs",
            Program::Sssp => "sssp",
        }
    }

    pub fn spec(self) -> VertexProgram {
        match self {
            Program::PageRank => VertexProgram {
                program: self,
                process_edge: EdgeRule::Multiply,
                reduce: ReduceRule::Sum,
                format: FxFormat::Frac,
                needs_active_list: false,
                constant_term: ConstantTerm::Teleport,
            },
            Program::Spmv => VertexProgram {
                program: self,
                process_edge: EdgeRule::Multiply,
                reduce: ReduceRule::Sum,
                format: FxFormat::Frac,
                needs_active_list: false,
                constant_term: ConstantTerm::None,
            },
            Program::Bfs | Program::Sssp => VertexProgram {
                program: self,
                process_edge: EdgeRule::Add,
                reduce: ReduceRule::Min,
                format: FxFormat::Int,
                needs_active_list: true,
                constant_term: ConstantTerm::None,
            },
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Program {
    type Err = UnknownProgram;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pagerank" | "pr" => Ok(Program::PageRank),
            "spmv" => Ok(Program::Spmv),
            "bfs" => Ok(Program::Bfs),
            "sssp" => Ok(Program::Sssp),
            _ => Err(UnknownProgram(s.to_string())),
        }
    }
}

/// `processEdge`: multiply (weights pre-scaled into the cells) or add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeRule {
    Multiply,
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReduceRule {
    Sum,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantTerm {
    None,
    /// `(1 - r) / V` added once per vertex.
    Teleport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexProgram {
    pub program: Program,
    pub process_edge: EdgeRule,
    pub reduce: ReduceRule,
    pub format: FxFormat,
    pub needs_active_list: bool,
    pub constant_term: ConstantTerm,
}
