//! Isomap with a raw-stress embedding step.
//!
//! 1. Build a localization graph (radius rule or symmetrized K-NN rule) whose
//!    edges are weighted by Euclidean length.
//! 2. Compute all shortest-path distances on it.
//! 3. Initialize a configuration by classical MDS and refine it with Guttman
//!    transforms, which monotonically decrease raw stress.
//!
//! In one dimension the Guttman transform of an ordered configuration is the
//! stationary point of raw stress for that order, see
//! [`stationary_line_solution`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Distances at or below this are treated as coincident points by the
/// Guttman transform.
pub const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", deny_unknown_fields)]
pub enum GraphRule {
    Epsilon { radius: f64 },
    Knn { neighbors: usize },
}

/// Undirected graph on feature vectors, weighted by Euclidean distance.
#[derive(Clone, Debug)]
pub struct LocalizationGraph {
    rule: GraphRule,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl LocalizationGraph {
    pub fn rule(&self) -> GraphRule {
        self.rule
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i]
            .binary_search_by(|&(v, _)| v.cmp(&j))
            .is_ok()
    }

    /// Edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            label[start] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for &(w, _) in &self.adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Subgraph induced by `vertices` (which must be sorted), relabelled
    /// `0..vertices.len()`.
    pub fn induced(&self, vertices: &[usize]) -> LocalizationGraph {
        let mut index = vec![usize::MAX; self.n()];
        for (new, &old) in vertices.iter().enumerate() {
            index[old] = new;
        }
        let adjacency = vertices
            .iter()
            .map(|&old| {
                self.adjacency[old]
                    .iter()
                    .filter(|(w, _)| index[*w] != usize::MAX)
                    .map(|&(w, d)| (index[w], d))
                    .collect()
            })
            .collect();
        LocalizationGraph {
            rule: self.rule,
            adjacency,
        }
    }

    fn from_pairs(rule: GraphRule, n: usize, pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j, w) in pairs {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0));
            list.dedup_by_key(|e| e.0);
        }
        LocalizationGraph { rule, adjacency }
    }
}

/// Euclidean distance between rows `i` and `j` of a column-per-point matrix.
fn column_distance(cols: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    cols.column(i)
        .iter()
        .zip(cols.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between two rows of a point matrix.
pub fn point_distance(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (points.row(i) - points.row(j)).norm()
}

fn check_points(points: &DMatrix<f64>) -> Result<()> {
    if points.nrows() < 2 {
        return Err(Error::Argument("a localization graph needs at least 2 points".into()));
    }
    Ok(())
}

/// Connects rows `i` and `j` iff `|x_i - x_j| <= radius`.
pub fn build_epsilon_graph(points: &DMatrix<f64>, radius: f64) -> Result<LocalizationGraph> {
    check_points(points)?;
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("graph radius must be positive, got {radius}")));
    }
    let cols = points.transpose();
    let n = points.nrows();
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let d = column_distance(&cols, i, j);
            (d <= radius).then_some((i, j, d))
        })
        .collect();
    Ok(LocalizationGraph::from_pairs(
        GraphRule::Epsilon { radius },
        n,
        pairs,
    ))
}

/// Connects `i` and `j` iff one is among the `k` nearest of the other.
/// Distance ties are broken toward the smaller vertex index.
pub fn build_knn_graph(points: &DMatrix<f64>, k: usize) -> Result<LocalizationGraph> {
    check_points(points)?;
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::Argument(format!(
            "K-NN graph needs 1 <= K < n, got K = {k} with n = {n}"
        )));
    }
    let cols = points.transpose();
    let mut pairs = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (column_distance(&cols, i, j), j))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &candidates[..k] {
            pairs.push((i.min(j), i.max(j), d));
        }
    }
    Ok(LocalizationGraph::from_pairs(
        GraphRule::Knn { neighbors: k },
        n,
        pairs,
    ))
}

/// All-pairs shortest-path distances.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicMatrix {
    distances: DMatrix<f64>,
}

impl GeodesicMatrix {
    /// Wraps a dissimilarity matrix after checking it is square, symmetric,
    /// hollow, finite and non-negative.
    pub fn from_matrix(distances: DMatrix<f64>) -> Result<Self> {
        let n = distances.nrows();
        if distances.ncols() != n {
            return Err(Error::Argument("distance matrix must be square".into()));
        }
        for i in 0..n {
            if distances[(i, i)] != 0.0 {
                return Err(Error::Argument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = distances[(i, j)];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Argument(format!("invalid distance {d} at ({i}, {j})")));
                }
                if d != distances[(j, i)] {
                    return Err(Error::Argument(format!("asymmetric distance at ({i}, {j})")));
                }
            }
        }
        Ok(GeodesicMatrix { distances })
    }

    /// Euclidean distances between the rows of `points`.
    pub fn euclidean(points: &DMatrix<f64>) -> Self {
        let n = points.nrows();
        let cols = points.transpose();
        let mut distances = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = column_distance(&cols, i, j);
                distances[(i, j)] = d;
                distances[(j, i)] = d;
            }
        }
        GeodesicMatrix { distances }
    }

    pub fn n(&self) -> usize {
        self.distances.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.distances
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.distances
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    vertex: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(g: &LocalizationGraph, source: usize, dist: &mut [f64]) {
    dist.iter_mut().for_each(|d| *d = f64::INFINITY);
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier {
        dist: 0.0,
        vertex: source,
    });
    while let Some(Frontier { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &g.adjacency[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Frontier { dist: nd, vertex: w });
            }
        }
    }
}

/// Shortest-path distances between all vertex pairs by Dijkstra from every
/// source. Fails with [`Error::Disconnected`] if the graph is not connected.
pub fn shortest_path_matrix(g: &LocalizationGraph) -> Result<GeodesicMatrix> {
    let components = g.components();
    if components.len() > 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(all_pairs(g))
}

/// Restricts to the largest connected component (ties: the one holding the
/// smallest vertex) and returns its distance matrix together with the
/// original index of each retained vertex.
pub fn shortest_path_matrix_largest_component(
    g: &LocalizationGraph,
) -> Result<(GeodesicMatrix, Vec<usize>)> {
    let components = g.components();
    let largest = components
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(_, c)| c.clone())
        .ok_or_else(|| Error::Argument("empty graph".into()))?;
    if largest.len() < 2 {
        return Err(Error::Disconnected { components });
    }
    let sub = g.induced(&largest);
    Ok((all_pairs(&sub), largest))
}

fn all_pairs(g: &LocalizationGraph) -> GeodesicMatrix {
    let n = g.n();
    let missing = n * (n - 1) / 2 - g.edge_count();
    let rows: Vec<Vec<f64>> = if n >= 64 && 4 * missing <= n * n {
        dense_relaxation(g).chunks(n).map(<[f64]>::to_vec).collect()
    } else {
        (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, source| {
                    dijkstra(g, source, buf);
                    buf.clone()
                },
            )
            .collect()
    };
    // mirror the upper triangle so the result is exactly symmetric
    let mut distances = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for j in (i + 1)..n {
            distances[(i, j)] = row[j];
            distances[(j, i)] = row[j];
        }
    }
    GeodesicMatrix { distances }
}

/// Edge weights are Euclidean lengths, so an edge is already a shortest
/// path. Only non-adjacent pairs are relaxed, by repeated min-plus passes
/// `d_ij = min_k d_ik + d_kj` until nothing changes.
fn dense_relaxation(g: &LocalizationGraph) -> Vec<f64> {
    let n = g.n();
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
        for &(j, len) in &g.adjacency[i] {
            d[i * n + j] = len;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| d[i * n + j].is_infinite())
        .collect();
    loop {
        let mut changed = false;
        for &(i, j) in &pairs {
            let best = min_plus(&d[i * n..(i + 1) * n], &d[j * n..(j + 1) * n]);
            if best < d[i * n + j] {
                d[i * n + j] = best;
                d[j * n + i] = best;
                changed = true;
            }
        }
        if !changed {
            return d;
        }
    }
}

fn min_plus(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [f64::INFINITY; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let v = x[l] + y[l];
            acc[l] = if v < acc[l] { v } else { acc[l] };
        }
    }
    let mut best = acc[0].min(acc[1]).min(acc[2].min(acc[3]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        best = best.min(x + y);
    }
    best
}

/// Classical MDS of `delta` into `d` dimensions (rows are points).
///
/// Eigenvalues at or below zero among the top `d` contribute zero columns.
/// If all of them are nonpositive and `delta` is not identically zero the
/// embedding is reported as degenerate.
pub fn cmds_embed(delta: &GeodesicMatrix, d: usize) -> Result<DMatrix<f64>> {
    let n = delta.n();
    if d == 0 || d + 1 > n {
        return Err(Error::Argument(format!(
            "CMDS dimension must satisfy 1 <= d <= n - 1, got d = {d}, n = {n}"
        )));
    }
    if delta.matrix().iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, d));
    }
    let sq = delta.matrix().map(|v| v * v);
    let row_means: Vec<f64> = sq.column_iter().map(|c| c.sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - (row_means[i] + row_means[j]) + grand));
    let pairs = linalg::top_eigenpairs(&b, d)?;
    if pairs.values.iter().all(|&v| v <= 0.0) {
        return Err(Error::Degenerate(format!(
            "top {d} eigenvalues of the double-centered matrix are nonpositive: {:?}",
            pairs.values
        )));
    }
    let mut coords = pairs.vectors;
    for (mut col, &lambda) in coords.column_iter_mut().zip(&pairs.values) {
        col *= lambda.max(0.0).sqrt();
    }
    Ok(coords)
}

fn check_configuration(z: &DMatrix<f64>, delta: &GeodesicMatrix, weights: Option<&DMatrix<f64>>) -> Result<()> {
    if z.nrows() != delta.n() {
        return Err(Error::Argument(format!(
            "configuration has {} points but the distance matrix has {}",
            z.nrows(),
            delta.n()
        )));
    }
    if let Some(u) = weights {
        if u.shape() != delta.matrix().shape() {
            return Err(Error::Argument("weight matrix shape mismatch".into()));
        }
        if u.iter().any(|&w| !(w >= 0.0)) || linalg::asymmetry(u) > 0.0 {
            return Err(Error::Argument("weights must be symmetric and nonnegative".into()));
        }
    }
    Ok(())
}

/// Raw stress `1/2 sum_{i,j} u_ij (|z_i - z_j| - delta_ij)^2`; `None` means
/// unit weights.
pub fn raw_stress(z: &DMatrix<f64>, delta: &GeodesicMatrix, weights: Option<&DMatrix<f64>>) -> Result<f64> {
    check_configuration(z, delta, weights)?;
    Ok(stress_unchecked(&z.transpose(), delta, weights))
}

fn stress_unchecked(cols: &DMatrix<f64>, delta: &GeodesicMatrix, weights: Option<&DMatrix<f64>>) -> f64 {
    let n = delta.n();
    let mut total = 0.0;
    for j in 0..n {
        let dj = delta.matrix().column(j);
        for i in 0..j {
            let u = weights.map_or(1.0, |u| u[(i, j)]);
            let r = column_distance(cols, i, j) - dj[i];
            total += u * r * r;
        }
    }
    // each unordered pair appears twice in the full double sum
    total
}

/// One Guttman transform `z' = V^+ B(z) z`. With unit weights this is
/// `z' = B(z) z / n`.
pub fn guttman_step(
    z: &DMatrix<f64>,
    delta: &GeodesicMatrix,
    weights: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    check_configuration(z, delta, weights)?;
    let bz = b_times_z(&z.transpose(), delta, weights);
    let n = delta.n();
    match weights {
        None => Ok(bz.transpose() / n as f64),
        Some(u) => {
            let v_plus = weights_pseudo_inverse(u)?;
            Ok(v_plus * bz.transpose())
        }
    }
}

/// `B(z) z` returned column-per-point.
fn b_times_z(cols: &DMatrix<f64>, delta: &GeodesicMatrix, weights: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let (dim, n) = cols.shape();
    let mut out = DMatrix::zeros(dim, n);
    for i in 0..n {
        let di = delta.matrix().column(i);
        let zi = cols.column(i);
        let mut acc = vec![0.0; dim];
        for j in 0..n {
            if j == i {
                continue;
            }
            let dist = column_distance(cols, i, j);
            if dist <= COINCIDENT_TOL {
                continue;
            }
            let u = weights.map_or(1.0, |u| u[(i, j)]);
            let b = u * di[j] / dist;
            for (a, (x, y)) in acc.iter_mut().zip(zi.iter().zip(cols.column(j).iter())) {
                *a += b * (x - y);
            }
        }
        out.column_mut(i).copy_from_slice(&acc);
    }
    out
}

fn weights_pseudo_inverse(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    let mut v = -u.clone();
    for i in 0..n {
        v[(i, i)] = 0.0;
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| u[(i, j)]).sum();
        v[(i, i)] = s;
    }
    let ones = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = (v + &ones)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("weight matrix is not connected; V is singular".into()))?;
    Ok(inv - ones)
}

/// Controls for [`embed_line`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedParams {
    pub max_iters: usize,
    /// Stop once the relative stress decrease drops below this.
    pub tol: f64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        EmbedParams {
            max_iters: 200,
            tol: 1e-8,
        }
    }
}

/// One-dimensional raw-stress embedding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineEmbedding {
    pub coordinates: Vec<f64>,
    pub stress: f64,
    pub iterations: usize,
}

/// CMDS initialization followed by unit-weight Guttman iterations.
pub fn embed_line(delta: &GeodesicMatrix, max_iters: usize, tol: f64) -> Result<LineEmbedding> {
    let mut z = cmds_embed(delta, 1)?.transpose();
    let mut stress = stress_unchecked(&z, delta, None);
    let mut iterations = 0;
    let n = delta.n() as f64;
    while iterations < max_iters && stress > 0.0 {
        let next = b_times_z(&z, delta, None) / n;
        let next_stress = stress_unchecked(&next, delta, None);
        iterations += 1;
        let decrease = (stress - next_stress) / stress;
        z = next;
        stress = next_stress;
        if decrease < tol {
            break;
        }
    }
    let mean = z.sum() / n;
    let coordinates = z.iter().map(|v| v - mean).collect();
    Ok(LineEmbedding {
        coordinates,
        stress,
        iterations,
    })
}

/// Closed-form stationary point of one-dimensional raw stress for a given
/// ordering: `z_k = (1/n) [sum_{i before k} delta_ik - sum_{i after k} delta_ik]`.
///
/// `order` lists vertices from smallest to largest coordinate. The result is
/// indexed by vertex and sums to zero.
pub fn stationary_line_solution(delta: &GeodesicMatrix, order: &[usize]) -> Result<Vec<f64>> {
    let n = delta.n();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
        return Err(Error::Argument(format!(
            "order must be a permutation of 0..{n}"
        )));
    }
    let mut z = vec![0.0; n];
    for (p, &k) in order.iter().enumerate() {
        let before: f64 = order[..p].iter().map(|&i| delta.get(i, k)).sum();
        let after: f64 = order[p + 1..].iter().map(|&i| delta.get(i, k)).sum();
        z[k] = (before - after) / n as f64;
    }
    Ok(z)
}

/// Vertex order by increasing coordinate (ties by index).
pub fn coordinate_order(coordinates: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coordinates.len()).collect();
    order.sort_by(|&a, &b| coordinates[a].total_cmp(&coordinates[b]).then(a.cmp(&b)));
    order
}

/// Absolute slack on both sandwich inequalities.
pub const SANDWICH_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairBound {
    pub i: usize,
    pub j: usize,
    pub graph_distance: f64,
    pub manifold_distance: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    pub delta: f64,
    pub epsilon: f64,
    pub pairs: usize,
    pub passing: usize,
    pub pass_fraction: f64,
    /// Pairs violating at least one bound.
    pub violations: Vec<PairBound>,
}

/// Checks `d_M - 2 delta <= d_G <= (1 + 4 delta / epsilon) d_M` for every pair.
pub fn sandwich_check(
    graph: &GeodesicMatrix,
    manifold: &DMatrix<f64>,
    delta: f64,
    epsilon: f64,
) -> Result<SandwichReport> {
    if manifold.shape() != graph.matrix().shape() {
        return Err(Error::Argument("sandwich check needs matrices of equal shape".into()));
    }
    if !(delta >= 0.0) || !(epsilon > 0.0) || 2.0 * delta > epsilon {
        return Err(Error::Argument(format!(
            "sandwich check needs delta >= 0, epsilon > 0 and 2 delta <= epsilon; got {delta}, {epsilon}"
        )));
    }
    let n = graph.n();
    let factor = 1.0 + 4.0 * delta / epsilon;
    let mut pairs = 0;
    let mut passing = 0;
    let mut violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dg = graph.get(i, j);
            let dm = manifold[(i, j)];
            let lower = dm - 2.0 * delta;
            let upper = factor * dm;
            let lower_ok = dg >= lower - SANDWICH_SLACK;
            let upper_ok = dg <= upper + SANDWICH_SLACK;
            pairs += 1;
            if lower_ok && upper_ok {
                passing += 1;
            } else {
                violations.push(PairBound {
                    i,
                    j,
                    graph_distance: dg,
                    manifold_distance: dm,
                    lower,
                    upper,
                    lower_ok,
                    upper_ok,
                });
            }
        }
    }
    let pass_fraction = if pairs == 0 { 1.0 } else { passing as f64 / pairs as f64 };
    Ok(SandwichReport {
        delta,
        epsilon,
        pairs,
        passing,
        pass_fraction,
        violations,
    })
}
