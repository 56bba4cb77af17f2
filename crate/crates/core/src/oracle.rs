//! Reference implementations used to verify the simulator. They share no
//! code with the engine: plain double-precision or exact-integer arithmetic
//! over the edge list.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::graph::EdgeListGraph;

/// Synchronous power iteration `PR ← r·M·PR + (1-r)/V`, starting from the
/// uniform vector. Dangling vertices leak their mass.
pub fn exact_pagerank(g: &EdgeListGraph, r: f64, iterations: usize) -> Vec<f64> {
    let n = g.num_vertices();
    if n == 0 {
        return Vec::new();
    }
    let deg = g.out_degrees();
    let base = (1.0 - r) / n as f64;
    let mut pr = vec![1.0 / n as f64; n];
    for _ in 0..iterations {
        let mut next = vec![base; n];
        for e in g.edges() {
            next[e.dst as usize] += r * pr[e.src as usize] / deg[e.src as usize] as f64;
        }
        pr = next;
    }
    pr
}

/// Hop distance from `src`, `None` where unreachable.
pub fn exact_bfs(g: &EdgeListGraph, src: u32) -> Vec<Option<u64>> {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.src as usize].push(e.dst as usize);
    }
    let mut level = vec![None; n];
    let mut queue = VecDeque::new();
    level[src as usize] = Some(0);
    queue.push_back(src as usize);
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Dijkstra over integer weights (fractional weights are truncated).
pub fn exact_sssp(g: &EdgeListGraph, src: u32) -> Vec<Option<u64>> {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.src as usize].push((e.dst as usize, e.weight as u64));
    }
    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src as usize] = Some(0);
    heap.push(Reverse((0u64, src as usize)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|best| d > best) {
            continue;
        }
        for &(v, w) in &adj[u] {
            let cand = d + w;
            if dist[v].is_none_or(|cur| cand < cur) {
                dist[v] = Some(cand);
                heap.push(Reverse((cand, v)));
            }
        }
    }
    dist
}

/// `y[j] = Σ_{i→j} x[i] · w(i,j) / outdeg(i)` (or without the out-degree
/// scaling).
pub fn dense_spmv(g: &EdgeListGraph, x: &[f64], scale_by_outdegree: bool) -> Vec<f64> {
    let deg = g.out_degrees();
    let mut y = vec![0.0; g.num_vertices()];
    for e in g.edges() {
        let mut v = x[e.src as usize] * e.weight;
        if scale_by_outdegree {
            v /= deg[e.src as usize] as f64;
        }
        y[e.dst as usize] += v;
    }
    y
}
