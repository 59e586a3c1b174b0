//! Exact discrete optimal transport (the transportation problem) by the
//! primal network simplex method on the bipartite supply/demand graph.

use crate::error::{Error, Result};

/// Minimum of `Σ c(s, d) x(s, d)` over transport plans moving `supply` onto
/// `demand` (equal totals). `cost(s, d)` is queried on demand.
pub fn min_cost(supply: &[f64], demand: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Ok(0.0);
    }
    let mut tree = Tree::northwest_corner(supply, demand);
    let cells = m * n;
    let block = ((cells as f64).sqrt() as usize).clamp(64, cells.max(64));
    let max_pivots = 200 * (m + n) + 10_000;
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    tree.potentials(&cost);
    loop {
        let tol = 1e-12 * (1.0 + tree.cost_scale);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut scanned = 0usize;
        while scanned < cells {
            let end = (scanned + block).min(cells);
            for _ in scanned..end {
                let (s, d) = (cursor / n, cursor % n);
                cursor += 1;
                if cursor == cells {
                    cursor = 0;
                }
                let reduced = cost(s, d) - tree.potential[s] - tree.potential[m + d];
                if reduced < -tol && best.is_none_or(|b| reduced < b.2) {
                    best = Some((s, d, reduced));
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        let Some((s, d, _)) = best else {
            break;
        };
        tree.pivot(s, d, &cost);
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Convergence {
                iterations: pivots,
                residual: f64::NAN,
                trace: Vec::new(),
            });
        }
    }
    let total: f64 = tree.arcs.iter().map(|a| a.flow.max(0.0) * cost(a.source, a.sink)).sum();
    Ok(total.max(0.0))
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    source: usize,
    sink: usize,
    flow: f64,
}

/// Spanning tree of basic arcs. Node ids: sources `0..m`, sinks `m..m+n`.
struct Tree {
    m: usize,
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
    potential: Vec<f64>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    cost_scale: f64,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn northwest_corner(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut arcs = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]).max(0.0);
            arcs.push(Arc {
                source: i,
                sink: j,
                flow: x,
            });
            s[i] -= x;
            d[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (s[i] <= d[j] && i < m - 1) || j == n - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut adjacency = vec![Vec::new(); m + n];
        for (k, a) in arcs.iter().enumerate() {
            adjacency[a.source].push(k);
            adjacency[m + a.sink].push(k);
        }
        Self {
            m,
            arcs,
            adjacency,
            potential: vec![0.0; m + n],
            parent_arc: vec![NONE; m + n],
            parent: vec![NONE; m + n],
            depth: vec![0; m + n],
            cost_scale: 0.0,
        }
    }

    fn other(&self, arc: usize, node: usize) -> usize {
        let a = self.arcs[arc];
        if node == a.source {
            self.m + a.sink
        } else {
            a.source
        }
    }

    /// Roots the tree at source 0 and solves `u_s + v_d = c(s, d)` on every
    /// basic arc.
    fn potentials(&mut self, cost: &impl Fn(usize, usize) -> f64) {
        let total = self.adjacency.len();
        self.parent_arc.iter_mut().for_each(|p| *p = NONE);
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.potential[0] = 0.0;
        self.depth[0] = 0;
        self.cost_scale = 0.0;
        let mut stack = vec![0usize];
        let mut seen = vec![false; total];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &arc in &self.adjacency[node] {
                let next = self.other(arc, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let a = self.arcs[arc];
                let c = cost(a.source, a.sink);
                self.cost_scale = self.cost_scale.max(c.abs());
                self.potential[next] = c - self.potential[node];
                self.parent[next] = node;
                self.parent_arc[next] = arc;
                self.depth[next] = self.depth[node] + 1;
                stack.push(next);
            }
        }
    }

    /// Brings arc `(s, d)` into the basis, drops a blocking arc and
    /// re-roots the subtree cut off by the dropped arc.
    fn pivot(&mut self, s: usize, d: usize, cost: &impl Fn(usize, usize) -> f64) {
        // Tree path from the sink back to the source; arcs alternate between
        // losing and gaining flow, starting with a loss next to the sink.
        let (mut a, mut b) = (self.m + d, s);
        let mut from_sink = Vec::new();
        let mut from_source = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                from_sink.push(self.parent_arc[a]);
                a = self.parent[a];
            } else {
                from_source.push(self.parent_arc[b]);
                b = self.parent[b];
            }
        }
        let sink_side = from_sink.len();
        let path: Vec<usize> = from_sink.into_iter().chain(from_source.into_iter().rev()).collect();
        let mut leave_pos = 0;
        let mut theta = f64::INFINITY;
        for (k, &arc) in path.iter().enumerate() {
            if k % 2 == 0 && self.arcs[arc].flow < theta {
                theta = self.arcs[arc].flow;
                leave_pos = k;
            }
        }
        let leave = path[leave_pos];
        let theta = theta.max(0.0);
        for (k, &arc) in path.iter().enumerate() {
            if k % 2 == 0 {
                self.arcs[arc].flow -= theta;
            } else {
                self.arcs[arc].flow += theta;
            }
        }
        let old = self.arcs[leave];
        for node in [old.source, self.m + old.sink] {
            let list = &mut self.adjacency[node];
            let pos = list.iter().position(|&x| x == leave).expect("arc in adjacency");
            list.swap_remove(pos);
        }
        self.arcs[leave] = Arc {
            source: s,
            sink: d,
            flow: theta,
        };
        self.adjacency[s].push(leave);
        self.adjacency[self.m + d].push(leave);
        // The endpoint of the entering arc on the dropped arc's side now
        // hangs from the other endpoint.
        let (inner, outer) = if leave_pos < sink_side {
            (self.m + d, s)
        } else {
            (s, self.m + d)
        };
        self.reroot(inner, outer, leave, cost);
    }

    fn reroot(&mut self, start: usize, parent: usize, arc: usize, cost: &impl Fn(usize, usize) -> f64) {
        let mut stack = vec![(start, parent, arc)];
        while let Some((node, up, via)) = stack.pop() {
            let a = self.arcs[via];
            let c = cost(a.source, a.sink);
            self.cost_scale = self.cost_scale.max(c.abs());
            self.potential[node] = c - self.potential[up];
            self.parent[node] = up;
            self.parent_arc[node] = via;
            self.depth[node] = self.depth[up] + 1;
            for &next_arc in &self.adjacency[node] {
                if next_arc != via {
                    stack.push((self.other(next_arc, node), node, next_arc));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive optimum over permutations for unit masses.
    fn brute_assignment(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for c in 0..cost.len() {
                if !used[c] {
                    used[c] = true;
                    go(cost, row + 1, used, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best
    }

    #[test]
    fn matches_brute_force_assignment() {
        let pts = [(0.1, 0.7), (0.9, 0.2), (0.4, 0.4), (0.8, 0.9), (0.0, 0.0), (0.5, 1.0)];
        let qts = [(0.3, 0.3), (0.6, 0.8), (0.2, 0.9), (1.0, 0.1), (0.7, 0.5), (0.1, 0.1)];
        let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let cost: Vec<Vec<f64>> = pts.iter().map(|&p| qts.iter().map(|&q| dist(p, q)).collect()).collect();
        let want = brute_assignment(&cost) / 6.0;
        let got = min_cost(&[1.0 / 6.0; 6], &[1.0 / 6.0; 6], |s, d| cost[s][d]).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn one_dimensional_transport_matches_cdf_formula() {
        let a = [0.1, 0.4, 0.0, 0.3, 0.2];
        let b = [0.3, 0.0, 0.25, 0.05, 0.4];
        let lp = min_cost(&a, &b, |s, d| (s as f64 - d as f64).abs()).unwrap();
        let mut cdf = 0.0;
        let mut exact = 0.0;
        for k in 0..5 {
            cdf += a[k] - b[k];
            exact += cdf.abs();
        }
        assert!((lp - exact).abs() < 1e-12);
    }

    #[test]
    fn single_pair() {
        assert_eq!(min_cost(&[1.0], &[1.0], |_, _| 2.5).unwrap(), 2.5);
        assert_eq!(min_cost(&[], &[], |_, _| 1.0).unwrap(), 0.0);
    }
}
