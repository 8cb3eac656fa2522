//! Group-difference analysis of connectomes: MCI mean minus NC mean,
//! per-ROI summed absolute change, and the strongest changed connections.

use std::fmt::Write as _;

use serde::Serialize;

use crate::conndata::{Connectome, Group};
use crate::error::{Error, Result};

/// Connections listed in each direction.
pub const TOP_EDGES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeChange {
    pub i: usize,
    pub j: usize,
    pub diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    /// (roi, Σ_j |MCI − NC|), descending; equal values in ROI order.
    pub roi_ranking: Vec<(usize, f64)>,
    pub top10: Vec<usize>,
    pub top20: Vec<usize>,
    /// Largest positive differences, strictly above zero.
    pub increased: Vec<EdgeChange>,
    /// Largest negative differences, strictly below zero.
    pub reduced: Vec<EdgeChange>,
}

/// Mean matrix of each group, (NC, MCI).
pub fn group_means(scs: &[(Group, &Connectome)]) -> Result<(Connectome, Connectome)> {
    let n = scs
        .first()
        .map(|(_, a)| a.n())
        .ok_or_else(|| Error::Data("no subjects to analyze".into()))?;
    let mean_of = |g: Group| -> Result<Connectome> {
        let members: Vec<&Connectome> = scs.iter().filter(|(h, _)| *h == g).map(|(_, a)| *a).collect();
        if members.is_empty() {
            return Err(Error::Data(format!("group {g} has no subjects")));
        }
        let mut up = vec![0.0; n * (n - 1) / 2];
        for a in &members {
            if a.n() != n {
                return Err(Error::Dimension {
                    op: "group_means",
                    left: vec![n, n],
                    right: vec![a.n(), a.n()],
                });
            }
            up.iter_mut().zip(a.upper()).for_each(|(s, v)| *s += v);
        }
        let k = members.len() as f64;
        up.iter_mut().for_each(|s| *s /= k);
        Connectome::from_upper(n, &up)
    };
    Ok((mean_of(Group::Nc)?, mean_of(Group::Mci)?))
}

/// Number of ROIs in a top-`pct` percent set: ⌈pct·n/100⌉.
pub fn top_count(n: usize, pct: usize) -> usize {
    (pct * n).div_ceil(100)
}

pub fn analyze(scs: &[(Group, &Connectome)]) -> Result<AnalysisReport> {
    let (nc, mci) = group_means(scs)?;
    let n = nc.n();
    let diff = |i: usize, j: usize| mci.get(i, j) - nc.get(i, j);

    let mut roi_ranking: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, (0..n).filter(|&j| j != i).map(|j| diff(i, j).abs()).sum()))
        .collect();
    roi_ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top = |pct| roi_ranking[..top_count(n, pct)].iter().map(|r| r.0).collect();

    let mut edges: Vec<EdgeChange> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(EdgeChange { i, j, diff: diff(i, j) });
        }
    }
    let key = |e: &EdgeChange| (e.i, e.j);
    let mut increased: Vec<EdgeChange> = edges.iter().filter(|e| e.diff > 0.0).cloned().collect();
    increased.sort_by(|a, b| b.diff.total_cmp(&a.diff).then(key(a).cmp(&key(b))));
    increased.truncate(TOP_EDGES);
    let mut reduced: Vec<EdgeChange> = edges.into_iter().filter(|e| e.diff < 0.0).collect();
    reduced.sort_by(|a, b| a.diff.total_cmp(&b.diff).then(key(a).cmp(&key(b))));
    reduced.truncate(TOP_EDGES);

    Ok(AnalysisReport {
        n,
        top10: top(10),
        top20: top(20),
        roi_ranking,
        increased,
        reduced,
    })
}

/// Fraction of `reference` also present in `other`.
pub fn overlap(reference: &[usize], other: &[usize]) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    reference.iter().filter(|r| other.contains(r)).count() as f64 / reference.len() as f64
}

impl AnalysisReport {
    /// rank,roi,change
    pub fn roi_csv(&self) -> String {
        let mut s = String::from("rank,roi,change\n");
        for (k, (roi, c)) in self.roi_ranking.iter().enumerate() {
            writeln!(s, "{k},{roi},{c}").expect("string write");
        }
        s
    }

    /// direction,rank,i,j,diff
    pub fn edge_csv(&self) -> String {
        let mut s = String::from("direction,rank,i,j,diff\n");
        for (dir, list) in [("increased", &self.increased), ("reduced", &self.reduced)] {
            for (k, e) in list.iter().enumerate() {
                writeln!(s, "{dir},{k},{},{},{}", e.i, e.j, e.diff).expect("string write");
            }
        }
        s
    }

    pub fn text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        writeln!(s, "ROIs: {}", self.n).unwrap();
        writeln!(s, "top 10% ROIs: {}", list(&self.top10)).unwrap();
        writeln!(s, "top 20% ROIs: {}", list(&self.top20)).unwrap();
        for (name, edges) in [("increased", &self.increased), ("reduced", &self.reduced)] {
            writeln!(s, "{name} connections (MCI - NC):").unwrap();
            for e in edges.iter() {
                writeln!(s, "  {:>3} - {:<3} {:+.6}", e.i, e.j, e.diff).unwrap();
            }
        }
        s
    }
}

/// Upper-triangle entries of the group-mean predicted and empirical
/// matrices side by side: group,i,j,predicted,empirical.
pub fn scatter_table(pred: &[(Group, &Connectome)], emp: &[(Group, &Connectome)]) -> Result<String> {
    let (pn, pm) = group_means(pred)?;
    let (en, em) = group_means(emp)?;
    if pn.n() != en.n() {
        return Err(Error::Dimension {
            op: "scatter_table",
            left: vec![pn.n(), pn.n()],
            right: vec![en.n(), en.n()],
        });
    }
    let mut s = String::from("group,i,j,predicted,empirical\n");
    for (g, p, e) in [(Group::Nc, &pn, &en), (Group::Mci, &pm, &em)] {
        for i in 0..p.n() {
            for j in i + 1..p.n() {
                writeln!(s, "{g},{i},{j},{},{}", p.get(i, j), e.get(i, j)).expect("string write");
            }
        }
    }
    Ok(s)
}
