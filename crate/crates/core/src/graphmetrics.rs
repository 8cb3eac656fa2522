//! Graph measurements on connectomes: proportional thresholding, the six
//! binary/weighted metrics, and the per-subject error report.

use std::collections::VecDeque;

use serde::Serialize;

use crate::conndata::Connectome;
use crate::error::{Error, Result};

/// Undirected simple graph as a dense boolean adjacency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGraph {
    n: usize,
    adj: Vec<bool>,
}

impl BinaryGraph {
    pub fn empty(n: usize) -> Self {
        BinaryGraph {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = BinaryGraph::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut g = BinaryGraph::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.adj[i * self.n + j] = true;
            self.adj[j * self.n + i] = true;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adj[i * self.n + j])
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count() / 2
    }

    /// Subgraph induced by `nodes`, relabeled 0..nodes.len() in the given order.
    pub fn induced(&self, nodes: &[usize]) -> BinaryGraph {
        let mut g = BinaryGraph::empty(nodes.len());
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate().skip(a + 1) {
                if self.has_edge(i, j) {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }
}

/// Keeps the ⌊density·n(n−1)/2⌋ strongest upper-triangle edges. Equal
/// weights are taken in (i, j) lexicographic order.
pub fn binarize(a: &Connectome, density: f64) -> Result<BinaryGraph> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    let n = a.n();
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((a.get(i, j), i, j));
        }
    }
    let keep = (density * edges.len() as f64).floor() as usize;
    // Stable sort on weight alone keeps lexicographic order within ties.
    edges.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut g = BinaryGraph::empty(n);
    for &(_, i, j) in &edges[..keep] {
        g.add_edge(i, j);
    }
    Ok(g)
}

pub fn degree(g: &BinaryGraph) -> Vec<f64> {
    (0..g.n()).map(|i| g.neighbors(i).count() as f64).collect()
}

pub fn strength(a: &Connectome) -> Vec<f64> {
    (0..a.n()).map(|i| (0..a.n()).map(|j| a.get(i, j)).sum()).collect()
}

/// Triangles through i over k_i(k_i − 1)/2; 0 when k_i < 2.
pub fn clustering(g: &BinaryGraph) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            let nb: Vec<usize> = g.neighbors(i).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut tri = 0usize;
            for (a, &u) in nb.iter().enumerate() {
                tri += nb[a + 1..].iter().filter(|&&v| g.has_edge(u, v)).count();
            }
            tri as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

/// Brandes' algorithm on the unweighted graph, endpoints excluded, each
/// unordered pair counted once, normalized by (n−1)(n−2)/2.
pub fn betweenness(g: &BinaryGraph) -> Vec<f64> {
    let n = g.n();
    let mut bc = vec![0.0; n];
    if n < 3 {
        return bc;
    }
    let nbrs: Vec<Vec<usize>> = (0..n).map(|i| g.neighbors(i).collect()).collect();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &nbrs[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &nbrs[w] {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Every unordered pair was visited from both ends.
    let norm = 2.0 * ((n - 1) * (n - 2) / 2) as f64;
    bc.iter_mut().for_each(|b| *b /= norm);
    bc
}

/// All-pairs hop counts by BFS; `None` for unreachable pairs.
pub fn hop_distances(g: &BinaryGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.n();
    (0..n)
        .map(|s| {
            let mut d = vec![None; n];
            d[s] = Some(0);
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                let dv = d[v].unwrap();
                for w in g.neighbors(v) {
                    if d[w].is_none() {
                        d[w] = Some(dv + 1);
                        q.push_back(w);
                    }
                }
            }
            d
        })
        .collect()
}

/// Mean of 1/d(i, j) over ordered pairs i ≠ j; unreachable pairs add 0.
pub fn global_efficiency(g: &BinaryGraph) -> f64 {
    let n = g.n();
    if n < 2 {
        return 0.0;
    }
    let d = hop_distances(g);
    let mut sum = 0.0;
    for (i, row) in d.iter().enumerate() {
        for (j, dij) in row.iter().enumerate() {
            if i != j {
                if let Some(h) = dij {
                    sum += 1.0 / *h as f64;
                }
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Global efficiency of each node's neighbor-induced subgraph; 0 when k < 2.
pub fn local_efficiency(g: &BinaryGraph) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            let nb: Vec<usize> = g.neighbors(i).collect();
            if nb.len() < 2 {
                0.0
            } else {
                global_efficiency(&g.induced(&nb))
            }
        })
        .collect()
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// The eight per-subject evaluation numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub mae: f64,
    pub cc: f64,
    pub degree: f64,
    pub strength: f64,
    pub clustering: f64,
    pub betweenness: f64,
    pub local_efficiency: f64,
    pub global_efficiency: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 8] = [
        "mae",
        "cc",
        "degree_err",
        "strength_err",
        "clustering_err",
        "betweenness_err",
        "local_eff_err",
        "global_eff_err",
    ];

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.mae,
            self.cc,
            self.degree,
            self.strength,
            self.clustering,
            self.betweenness,
            self.local_efficiency,
            self.global_efficiency,
        ]
    }
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn metric_errors(pred: &Connectome, emp: &Connectome, density: f64) -> Result<MetricReport> {
    if pred.n() != emp.n() {
        return Err(Error::Dimension {
            op: "metric_errors",
            left: vec![pred.n(), pred.n()],
            right: vec![emp.n(), emp.n()],
        });
    }
    let (pu, eu) = (pred.upper(), emp.upper());
    let (gp, ge) = (binarize(pred, density)?, binarize(emp, density)?);
    Ok(MetricReport {
        mae: mean_abs_diff(&pu, &eu),
        cc: pearson(&pu, &eu),
        degree: mean_abs_diff(&degree(&gp), &degree(&ge)),
        strength: mean_abs_diff(&strength(pred), &strength(emp)),
        clustering: mean_abs_diff(&clustering(&gp), &clustering(&ge)),
        betweenness: mean_abs_diff(&betweenness(&gp), &betweenness(&ge)),
        local_efficiency: mean_abs_diff(&local_efficiency(&gp), &local_efficiency(&ge)),
        global_efficiency: (global_efficiency(&gp) - global_efficiency(&ge)).abs(),
    })
}
