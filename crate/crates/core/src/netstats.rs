//! Topology statistics on the layer-collapsed simple graph.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netgen::ContactGraph;

/// Simple undirected graph as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    pub adj: Vec<Vec<u32>>,
}

impl SimpleGraph {
    pub fn from_contact(g: &ContactGraph) -> Self {
        SimpleGraph {
            adj: g.simple_neighbors(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u != v {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        SimpleGraph { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Triangles through each vertex.
    pub fn triangles(&self) -> Vec<u64> {
        (0..self.n())
            .into_par_iter()
            .map_init(
                || vec![false; self.n()],
                |mark, v| {
                    let nb = &self.adj[v];
                    for &u in nb {
                        mark[u as usize] = true;
                    }
                    let mut t = 0u64;
                    for &u in nb {
                        t += self.adj[u as usize].iter().filter(|&&w| w > u && mark[w as usize]).count() as u64;
                    }
                    for &u in nb {
                        mark[u as usize] = false;
                    }
                    t
                },
            )
            .collect()
    }
}

/// (mean local clustering, global clustering). Local is 0 for degree < 2;
/// global is `None` without any connected triple.
pub fn clustering(g: &SimpleGraph) -> (Option<f64>, Option<f64>) {
    if g.n() == 0 {
        return (None, None);
    }
    let tri = g.triangles();
    let mut local_sum = 0.0;
    let (mut closed, mut triples) = (0u64, 0u64);
    for (v, &t) in tri.iter().enumerate() {
        let d = g.adj[v].len() as u64;
        let pairs = d * d.saturating_sub(1) / 2;
        if pairs > 0 {
            local_sum += t as f64 / pairs as f64;
        }
        closed += t;
        triples += pairs;
    }
    let global = (triples > 0).then(|| closed as f64 / triples as f64);
    (Some(local_sum / g.n() as f64), global)
}

/// Newman degree assortativity; `None` when there are no edges or the
/// degrees at edge ends have zero variance.
pub fn degree_assortativity(g: &SimpleGraph) -> Option<f64> {
    let (mut m, mut prod, mut sum, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for (u, nb) in g.adj.iter().enumerate() {
        let du = nb.len() as f64;
        for &v in nb.iter().filter(|&&v| v as usize > u) {
            let dv = g.adj[v as usize].len() as f64;
            m += 1.0;
            prod += du * dv;
            sum += 0.5 * (du + dv);
            sq += 0.5 * (du * du + dv * dv);
        }
    }
    if m == 0.0 {
        return None;
    }
    let mean = sum / m;
    let var = sq / m - mean * mean;
    if var.abs() <= 1e-12 * (sq / m).max(1.0) {
        return None;
    }
    Some((prod / m - mean * mean) / var)
}

/// Σd² / Σd.
pub fn tmh(g: &SimpleGraph) -> Option<f64> {
    let (s1, s2) = g.adj.iter().fold((0.0, 0.0), |(a, b), nb| {
        let d = nb.len() as f64;
        (a + d, b + d * d)
    });
    (s1 > 0.0).then(|| s2 / s1)
}

/// Σ d log₂ d / (2E log₂ 2E).
pub fn ir_vd(g: &SimpleGraph) -> Option<f64> {
    let two_e: f64 = g.adj.iter().map(|nb| nb.len() as f64).sum();
    if two_e == 0.0 {
        return None;
    }
    let num: f64 = g
        .adj
        .iter()
        .map(|nb| nb.len() as f64)
        .filter(|&d| d > 0.0)
        .map(|d| d * d.log2())
        .sum();
    Some(num / (two_e * two_e.log2()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub mean_degree: Option<f64>,
    pub mean_local_clustering: Option<f64>,
    pub global_clustering: Option<f64>,
    pub degree_assortativity: Option<f64>,
    pub tmh: Option<f64>,
    pub ir_vd: Option<f64>,
}

pub fn stats_for(name: &str, g: &SimpleGraph) -> StatsReport {
    let (local, global) = clustering(g);
    let m = g.edge_count();
    StatsReport {
        name: name.to_string(),
        n: g.n(),
        m,
        mean_degree: (g.n() > 0).then(|| 2.0 * m as f64 / g.n() as f64),
        mean_local_clustering: local,
        global_clustering: global,
        degree_assortativity: degree_assortativity(g),
        tmh: tmh(g),
        ir_vd: ir_vd(g),
    }
}

/// All statistics on the layer-de-duplicated graph.
pub fn stats_report(name: &str, g: &ContactGraph) -> StatsReport {
    stats_for(name, &SimpleGraph::from_contact(g))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

pub fn write_stats(path: &Path, rows: &[StatsReport]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut w = || -> std::io::Result<()> {
        writeln!(f, "name,n,m,mean_degree,mean_local_c,global_c,r,tmh,ir_vd")?;
        for r in rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{}",
                r.name,
                r.n,
                r.m,
                cell(r.mean_degree),
                cell(r.mean_local_clustering),
                cell(r.global_clustering),
                cell(r.degree_assortativity),
                cell(r.tmh),
                cell(r.ir_vd)
            )?;
        }
        f.flush()
    };
    w().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, e: &[(u32, u32)]) -> SimpleGraph {
        SimpleGraph::from_edges(n, e.iter().copied())
    }

    fn star(leaves: u32) -> SimpleGraph {
        g(leaves as usize + 1, &(1..=leaves).map(|l| (0, l)).collect::<Vec<_>>())
    }

    fn complete(n: u32) -> SimpleGraph {
        let e: Vec<(u32, u32)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        g(n as usize, &e)
    }

    fn ring(n: u32, half: u32) -> SimpleGraph {
        let e: Vec<(u32, u32)> = (0..n).flat_map(|i| (1..=half).map(move |j| (i, (i + j) % n))).collect();
        g(n as usize, &e)
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(clustering(&complete(3)), (Some(1.0), Some(1.0)));
        assert_eq!(clustering(&g(3, &[(0, 1), (1, 2)])), (Some(0.0), Some(0.0)));
        assert_eq!(clustering(&complete(4)), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn assortativity_examples() {
        assert!((degree_assortativity(&star(4)).unwrap() + 1.0).abs() < 1e-12);
        assert!((degree_assortativity(&g(3, &[(0, 1), (1, 2)])).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(degree_assortativity(&ring(10, 2)), None);
        assert_eq!(degree_assortativity(&g(3, &[])), None);
    }

    #[test]
    fn tmh_examples() {
        assert_eq!(tmh(&ring(12, 3)), Some(6.0));
        assert_eq!(tmh(&star(4)), Some(2.5));
        assert_eq!(tmh(&g(2, &[])), None);
    }

    #[test]
    fn ir_vd_examples() {
        let r = ir_vd(&ring(8192, 4)).unwrap();
        assert!((r - 0.1875).abs() < 1e-12, "{r}");
        assert_eq!(ir_vd(&g(2, &[(0, 1)])), Some(0.0));
        let k6 = ir_vd(&ring(100, 3)).unwrap();
        assert!((k6 - 6f64.log2() / 600f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_report() {
        let r = stats_for("empty", &g(5, &[]));
        assert_eq!(r.m, 0);
        assert_eq!(r.mean_degree, Some(0.0));
        assert_eq!(r.global_clustering, None);
        assert_eq!(r.degree_assortativity, None);
        assert_eq!(r.tmh, None);
        assert_eq!(r.ir_vd, None);
    }

    #[test]
    fn layers_are_collapsed() {
        use crate::netgen::Layer;
        let mut c = ContactGraph::new(3);
        c.extend([(0, 1), (1, 2), (0, 2)], Layer::Home);
        c.extend([(0, 1)], Layer::Work);
        c.finalize();
        let r = stats_report("x", &c);
        assert_eq!(r.m, 3);
        assert_eq!(r.global_clustering, Some(1.0));
    }

    #[test]
    fn stats_csv_marks_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_stats(&p, &[stats_for("e", &g(2, &[]))]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "e,2,0,0,0,NA,NA,NA,NA");
    }
}
