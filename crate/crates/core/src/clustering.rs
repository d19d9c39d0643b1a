//! Score-aware density clustering and static-cluster removal.
//!
//! Points within `r_t` of each other are joined by an edge weighted with the
//! absolute difference of their persistency scores. DBSCAN then runs over the
//! edges whose weight is at most `score_eps`, so a cluster never crosses a
//! jump in persistency even when the points touch.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::VoxelGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Edge radius in meters.
    pub r_t: f64,
    /// Largest admissible edge weight.
    pub score_eps: f64,
    /// Admissible neighbors (self excluded) required for a core node.
    pub min_pts: usize,
    /// Static score threshold.
    pub alpha: f64,
    /// Percentage of highest-scoring points inspected by the static test.
    pub k_percent: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            r_t: 0.5,
            score_eps: 0.1,
            min_pts: 5,
            alpha: 0.7,
            k_percent: 20.0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("cluster.{m}")));
        if !(self.r_t > 0.0 && self.r_t.is_finite()) {
            return bad("r_t must be > 0");
        }
        if !(self.score_eps > 0.0 && self.score_eps <= 1.0) {
            return bad("score_eps must lie in (0, 1]");
        }
        if self.min_pts < 1 {
            return bad("min_pts must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.k_percent > 0.0 && self.k_percent < 100.0) {
            return bad("k_percent must lie in (0, 100)");
        }
        Ok(())
    }
}

/// Undirected radius graph in compressed adjacency form. Each edge is
/// stored once per endpoint; neighbor lists are ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl ClusterGraph {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// `(neighbor, weight)` pairs of `node`.
    pub fn edges(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[node]..self.offsets[node + 1];
        self.neighbors[span.clone()]
            .iter()
            .zip(&self.weights[span])
            .map(|(&n, &w)| (n as usize, w))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }
}

pub fn build_graph(cloud: &PointCloud, r_t: f64) -> Result<ClusterGraph> {
    let scores = cloud
        .scores
        .as_ref()
        .ok_or_else(|| Error::Precondition("graph construction needs persistency scores".into()))?;
    cloud.validate()?;
    if !(r_t > 0.0 && r_t.is_finite()) {
        return Err(Error::Config("r_t must be > 0".into()));
    }
    let grid = VoxelGrid::new(&cloud.points, r_t);
    let rows: Vec<Vec<(u32, f64)>> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            grid.within(p, r_t)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| (j as u32, (scores[i] - scores[j]).abs()))
                .collect()
        })
        .collect();

    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let total: usize = rows.iter().map(Vec::len).sum();
    let mut neighbors = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for row in rows {
        for (n, w) in row {
            neighbors.push(n);
            weights.push(w);
        }
        offsets.push(neighbors.len());
    }
    Ok(ClusterGraph {
        offsets,
        neighbors,
        weights,
    })
}

/// DBSCAN over admissible edges (`weight <= score_eps`). Returns one entry
/// per node: `Some(cluster)` or `None` for noise. Clusters are numbered in
/// discovery order; seeds are visited by ascending node index, so a border
/// node belongs to the first cluster that reaches it.
pub fn graph_dbscan(graph: &ClusterGraph, score_eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = graph.node_count();
    let admissible = |i: usize| graph.edges(i).filter(move |&(_, w)| w <= score_eps).map(|(j, _)| j);
    let core: Vec<bool> = (0..n).map(|i| admissible(i).count() >= min_pts).collect();

    let mut labels = vec![None; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(next);
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            for j in admissible(q) {
                if labels[j].is_none() {
                    labels[j] = Some(next);
                    if core[j] {
                        queue.push_back(j);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Member indices per cluster id, ascending; noise is dropped.
pub fn clusters_from_labels(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let count = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let mut clusters = vec![Vec::new(); count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            clusters[*c].push(i);
        }
    }
    clusters
}

/// Smallest score among the top `k_percent` of `scores` (nearest rank).
pub fn top_percent_floor(scores: &[f64], k_percent: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = ((k_percent / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// A cluster is static when all of its top-`k_percent` scores exceed `alpha`.
pub fn is_static(scores: &[f64], alpha: f64, k_percent: f64) -> bool {
    top_percent_floor(scores, k_percent).is_some_and(|floor| floor > alpha)
}

/// Drop static clusters, keeping the others in input order.
pub fn filter_static(clusters: Vec<Vec<usize>>, scores: &[f64], alpha: f64, k_percent: f64) -> Vec<Vec<usize>> {
    clusters
        .into_iter()
        .filter(|members| {
            let taus: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
            !is_static(&taus, alpha, k_percent)
        })
        .collect()
}

/// Graph construction, clustering and static removal in one call.
pub fn foreground_clusters(cloud: &PointCloud, params: &ClusterParams) -> Result<Vec<Vec<usize>>> {
    params.validate()?;
    let graph = build_graph(cloud, params.r_t)?;
    let labels = graph_dbscan(&graph, params.score_eps, params.min_pts);
    let scores = cloud.scores.as_deref().unwrap_or_default();
    Ok(filter_static(
        clusters_from_labels(&labels),
        scores,
        params.alpha,
        params.k_percent,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use approx::assert_abs_diff_eq;

    fn scored(pts: &[(f64, f64, f64)], taus: &[f64]) -> PointCloud {
        PointCloud::with_scores(
            pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect(),
            taus.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn edges_respect_radius_and_weight() {
        let g = build_graph(&scored(&[(0.0, 0.0, 0.0), (0.4, 0.0, 0.0)], &[0.9, 0.2]), 0.5).unwrap();
        assert_eq!(g.edge_count(), 1);
        let (n, w) = g.edges(0).next().unwrap();
        assert_eq!(n, 1);
        assert_abs_diff_eq!(w, 0.7, epsilon = 1e-12);

        let g = build_graph(&scored(&[(0.0, 0.0, 0.0), (0.6, 0.0, 0.0)], &[0.5, 0.5]), 0.5).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn graph_requires_scores() {
        let cloud = PointCloud::new(vec![Point3::origin()]);
        assert!(matches!(build_graph(&cloud, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn no_core_nodes_means_all_noise() {
        let pts: Vec<_> = (0..6).map(|i| (i as f64 * 0.3, 0.0, 0.0)).collect();
        let cloud = scored(&pts, &[0.1; 6]);
        let g = build_graph(&cloud, 0.5).unwrap();
        let max_deg = (0..6).map(|i| g.degree(i)).max().unwrap();
        let labels = graph_dbscan(&g, 0.1, max_deg + 1);
        assert!(labels.iter().all(Option::is_none));
    }

    #[test]
    fn empty_graph_gives_empty_labels() {
        let g = build_graph(&scored(&[], &[]), 0.5).unwrap();
        assert!(graph_dbscan(&g, 0.1, 5).is_empty());
    }

    #[test]
    fn score_jump_splits_touching_blob() {
        let mut pts = Vec::new();
        let mut taus = Vec::new();
        for i in 0..20 {
            for j in 0..4 {
                pts.push((i as f64 * 0.2, j as f64 * 0.2, 0.0));
                taus.push(if i < 10 { 0.9 } else { 0.1 });
            }
        }
        let cloud = scored(&pts, &taus);
        let g = build_graph(&cloud, 0.5).unwrap();
        let clusters = clusters_from_labels(&graph_dbscan(&g, 0.1, 5));
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn static_filter_examples() {
        assert!(is_static(&[0.9; 12], 0.7, 20.0));
        assert!(!is_static(&[0.1; 12], 0.7, 20.0));
        let mut mixed = vec![0.9, 0.9];
        mixed.extend([0.1; 8]);
        // Explicit sort: descending, ceil(0.2 * 10) = 2nd value.
        let mut oracle = mixed.clone();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(oracle[1], 0.9);
        assert_eq!(top_percent_floor(&mixed, 20.0), Some(0.9));
        assert!(is_static(&mixed, 0.7, 20.0));
    }

    #[test]
    fn filter_keeps_dynamic_clusters_in_order() {
        let scores = [0.9, 0.9, 0.1, 0.2, 0.95, 0.3];
        let out = filter_static(vec![vec![0, 1], vec![2, 3], vec![4], vec![5]], &scores, 0.7, 20.0);
        assert_eq!(out, vec![vec![2, 3], vec![5]]);
    }

    #[test]
    fn raising_alpha_never_removes_more() {
        let scores: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).fract()).collect();
        let clusters: Vec<Vec<usize>> = (0..8).map(|c| (c * 5..c * 5 + 5).collect()).collect();
        let mut prev = 0;
        for alpha in [0.05, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let kept = filter_static(clusters.clone(), &scores, alpha, 20.0).len();
            assert!(kept >= prev);
            prev = kept;
        }
    }
}
