//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rdpg_isomap::curve::ParametricCurve;
use rdpg_isomap::manifold::LocalizationGraph;

/// Shortest path length by exhaustive depth-first enumeration of simple
/// paths, pruned only by the best length found so far.
pub fn enumerate_paths(g: &LocalizationGraph, from: usize, to: usize) -> f64 {
    fn walk(g: &LocalizationGraph, v: usize, to: usize, len: f64, seen: &mut Vec<bool>, best: &mut f64) {
        if len >= *best {
            return;
        }
        if v == to {
            *best = len;
            return;
        }
        for &(w, l) in g.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                walk(g, w, to, len + l, seen, best);
                seen[w] = false;
            }
        }
    }
    if from == to {
        return 0.0;
    }
    let mut seen = vec![false; g.n()];
    seen[from] = true;
    let mut best = f64::INFINITY;
    walk(g, from, to, 0.0, &mut seen, &mut best);
    best
}

/// Minimizer of the squared Euclidean distance to `y` over a uniform grid
/// of `points` parameter values.
pub fn grid_oracle(c: &ParametricCurve, y: &[f64], points: usize) -> f64 {
    let mut best = (0.0, f64::INFINITY);
    let mut buf = vec![0.0; c.dim()];
    for i in 0..points {
        let tau = i as f64 / (points - 1) as f64;
        c.evaluate_into(tau, &mut buf).unwrap();
        let d: f64 = buf.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (tau, d);
        }
    }
    best.0
}

/// Covering radius from the gaps between sorted samples.
pub fn gap_covering_radius(length: f64, t: &[f64]) -> f64 {
    let mut s = t.to_vec();
    s.sort_by(f64::total_cmp);
    let mut r = s[0].max(length - s[s.len() - 1]);
    for w in s.windows(2) {
        r = r.max(0.5 * (w[1] - w[0]));
    }
    r
}
