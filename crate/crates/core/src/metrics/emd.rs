//! Exact earth mover's distance via the transportation simplex.

use crate::error::{Error, Result};
use crate::grid::SaliencyGrid;

pub const DEFAULT_EMD_SIDE: usize = 32;

const MAX_PIVOTS: usize = 5_000_000;

/// Optimal transport cost between `a` and `b` after sum-normalizing both and
/// area-averaging them to at most `side × side` cells. The ground distance is
/// Euclidean, in downsampled cell units.
pub fn emd(a: &SaliencyGrid, b: &SaliencyGrid, side: usize) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Validation(format!(
            "map shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let a = a.to_sum_one()?.downsample(side)?.to_sum_one()?;
    let b = b.to_sum_one()?.downsample(side)?.to_sum_one()?;
    let w = a.width();
    let pos = |k: usize| ((k % w) as f64, (k / w) as f64);
    transport_cost(a.values(), b.values(), |i, j| {
        let (p, q) = (pos(i), pos(j));
        (p.0 - q.0).hypot(p.1 - q.1)
    })
}

/// Minimum cost of moving `supply` onto `demand` (equal totals) with a metric
/// ground cost. Mass present in both is left in place, which is optimal for
/// metric costs, and the remaining disjoint problem is solved exactly.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if supply.len() != demand.len() {
        return Err(Error::Validation("supply and demand must have the same length".into()));
    }
    if supply.iter().chain(demand).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation("masses must be finite and non-negative".into()));
    }
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (k, (&s, &d)) in supply.iter().zip(demand).enumerate() {
        if s > d {
            src.push((k, s - d));
        } else if d > s {
            dst.push((k, d - s));
        }
    }
    let total_s: f64 = src.iter().map(|x| x.1).sum();
    let total_d: f64 = dst.iter().map(|x| x.1).sum();
    if total_s <= 1e-15 || total_d <= 1e-15 {
        return Ok(0.0);
    }
    // Rebalance rounding so both sides carry exactly the same total.
    let scale = total_s / total_d;
    let s: Vec<f64> = src.iter().map(|x| x.1).collect();
    let d: Vec<f64> = dst.iter().map(|x| x.1 * scale).collect();
    let c: Vec<f64> = src
        .iter()
        .flat_map(|&(i, _)| dst.iter().map(move |&(j, _)| (i, j)))
        .map(|(i, j)| cost(i, j))
        .collect();
    Transport::new(s, d, c).solve()
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    row: usize,
    col: usize,
    flow: f64,
}

/// Transportation simplex on a dense `m × n` cost matrix. Rows are tree nodes
/// `0..m`, columns are nodes `m..m+n`; the basis is a spanning tree.
struct Transport {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    potential: Vec<f64>,
    parent: Vec<usize>,
    depth: Vec<usize>,
}

impl Transport {
    fn new(mut supply: Vec<f64>, mut demand: Vec<f64>, cost: Vec<f64>) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut t = Self {
            m,
            n,
            cost,
            edges: Vec::with_capacity(m + n - 1),
            adj: vec![Vec::new(); m + n],
            potential: vec![0.0; m + n],
            parent: vec![usize::MAX; m + n],
            depth: vec![0; m + n],
        };
        // Northwest corner start: m + n − 1 basic cells forming a tree.
        let (mut i, mut j) = (0, 0);
        loop {
            let q = supply[i].min(demand[j]);
            t.add_edge(Edge { row: i, col: j, flow: q });
            supply[i] -= q;
            demand[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    fn add_edge(&mut self, e: Edge) {
        let id = self.edges.len();
        self.edges.push(e);
        self.adj[e.row].push(id);
        self.adj[self.m + e.col].push(id);
    }

    fn replace_edge(&mut self, id: usize, e: Edge) {
        let old = self.edges[id];
        for node in [old.row, self.m + old.col] {
            let pos = self.adj[node].iter().position(|&x| x == id).expect("edge in adjacency");
            self.adj[node].swap_remove(pos);
        }
        self.edges[id] = e;
        self.adj[e.row].push(id);
        self.adj[self.m + e.col].push(id);
    }

    #[inline]
    fn c(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n + j]
    }

    /// Dual potentials `u_i + v_j = c_ij` on basic cells, plus tree parents.
    fn update_tree(&mut self) {
        let m = self.m;
        self.parent[0] = usize::MAX;
        self.potential[0] = 0.0;
        self.depth[0] = 0;
        let mut stack = vec![0usize];
        let mut seen = vec![false; m + self.n];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for k in 0..self.adj[node].len() {
                let id = self.adj[node][k];
                let e = self.edges[id];
                let other = if node < m { m + e.col } else { e.row };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                self.potential[other] = self.c(e.row, e.col) - self.potential[node];
                self.parent[other] = id;
                self.depth[other] = self.depth[node] + 1;
                stack.push(other);
            }
        }
    }

    fn other_end(&self, id: usize, node: usize) -> usize {
        let e = self.edges[id];
        if node < self.m {
            self.m + e.col
        } else {
            e.row
        }
    }

    fn solve(mut self) -> Result<f64> {
        let (m, n) = (self.m, self.n);
        let cells = m * n;
        let block = ((cells as f64).sqrt().ceil() as usize).max(32).min(cells);
        let scale = self.cost.iter().copied().fold(0.0, f64::max).max(1.0);
        let eps = 1e-12 * scale;
        let mut cursor = 0usize;
        for _ in 0..MAX_PIVOTS {
            self.update_tree();
            // Block pricing: the most negative reduced cost in the first block that has one.
            let mut best: Option<(usize, f64)> = None;
            let mut scanned = 0;
            while scanned < cells {
                let end = (scanned + block).min(cells);
                for _ in scanned..end {
                    let (i, j) = (cursor / n, cursor % n);
                    let r = self.c(i, j) - self.potential[i] - self.potential[m + j];
                    if r < -eps && best.is_none_or(|b| r < b.1) {
                        best = Some((cursor, r));
                    }
                    cursor = if cursor + 1 == cells { 0 } else { cursor + 1 };
                }
                scanned = end;
                if best.is_some() {
                    break;
                }
            }
            let Some((cell, _)) = best else {
                return Ok(self.edges.iter().map(|e| e.flow * self.c(e.row, e.col)).sum());
            };
            let (ei, ej) = (cell / n, cell % n);

            // Tree path from column node to row node; the entering cell closes the cycle.
            let (mut a, mut b) = (m + ej, ei);
            let mut from_col = Vec::new();
            let mut from_row = Vec::new();
            while a != b {
                if self.depth[a] >= self.depth[b] {
                    let id = self.parent[a];
                    from_col.push(id);
                    a = self.other_end(id, a);
                } else {
                    let id = self.parent[b];
                    from_row.push(id);
                    b = self.other_end(id, b);
                }
            }
            from_col.extend(from_row.into_iter().rev());
            // Signs alternate along the path starting with a decrease.
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for (k, &id) in from_col.iter().enumerate() {
                if k % 2 == 0 && self.edges[id].flow < theta {
                    theta = self.edges[id].flow;
                    leaving = id;
                }
            }
            for (k, &id) in from_col.iter().enumerate() {
                if k % 2 == 0 {
                    self.edges[id].flow -= theta;
                } else {
                    self.edges[id].flow += theta;
                }
            }
            self.replace_edge(leaving, Edge { row: ei, col: ej, flow: theta });
        }
        Err(Error::Estimation("transportation simplex did not converge".into()))
    }
}
