//! The three one-sample statistics for `H0: p* = p0`.
//!
//! * unrestricted: distance of the community centroid from `p0` in `R^k`;
//! * true manifold: arc-length distance between `p0` and the sample Frechet
//!   mean of the minimum-distance projections onto the known curve;
//! * learnt manifold: Isomap on `p0` and all estimates, then the distance
//!   between `p0` and the community mean on the learnt line.
//!
//! All three take estimates that are already rotated into the frame of `p0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curve::ParametricCurve;
use crate::error::{Error, Result};
use crate::manifold::{self, EmbedParams};

/// Grid size of the coarse scan in [`mde_fit`].
pub const MDE_GRID: usize = 2048;
/// Bracket width at which golden-section refinement stops.
pub const MDE_TOL: f64 = 1e-8;

/// Symmetric positive definite `k x k` matrix used in the quadratic forms.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl MetricMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let k = matrix.nrows();
        if k == 0 || matrix.ncols() != k {
            return Err(Error::Argument("metric matrix must be square and non-empty".into()));
        }
        if crate::linalg::asymmetry(&matrix) > 1e-12 {
            return Err(Error::Argument("metric matrix must be symmetric".into()));
        }
        let smallest = SymmetricEigen::new(matrix.clone()).eigenvalues.min();
        if !(smallest > 0.0) {
            return Err(Error::Argument(format!(
                "metric matrix must be positive definite (smallest eigenvalue {smallest})"
            )));
        }
        let inverse = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Argument("metric matrix is not positive definite".into()))?
            .inverse();
        Ok(MetricMatrix { matrix, inverse })
    }

    pub fn identity(k: usize) -> Self {
        MetricMatrix {
            matrix: DMatrix::identity(k, k),
            inverse: DMatrix::identity(k, k),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        MetricMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        form(&self.matrix, v)
    }

    /// `v^T M^{-1} v`.
    pub fn inverse_quadratic_form(&self, v: &[f64]) -> f64 {
        form(&self.inverse, v)
    }
}

fn form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        let col: f64 = m.column(j).iter().zip(v).map(|(a, b)| a * b).sum();
        total += vj * col;
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    Unrestricted,
    TrueManifold,
    LearntManifold,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arc_length_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_arc_length: Option<f64>,
    /// Line coordinates, vertex 0 being `p0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_coordinates: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stress: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub kind: StatisticKind,
    pub value: f64,
    pub diagnostics: Diagnostics,
}

impl TestOutcome {
    fn new(kind: StatisticKind, value: f64, diagnostics: Diagnostics) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Numerical(format!("{kind:?} statistic evaluated to {value}")));
        }
        Ok(TestOutcome {
            kind,
            value,
            diagnostics,
        })
    }
}

fn check_community(community: &DMatrix<f64>, k: usize) -> Result<()> {
    if community.nrows() == 0 {
        return Err(Error::Argument("community must contain at least one vertex".into()));
    }
    if community.ncols() != k {
        return Err(Error::Argument(format!(
            "estimates have dimension {} but {k} was expected",
            community.ncols()
        )));
    }
    Ok(())
}

/// `sqrt((X_bar - p0)^T M (X_bar - p0))` for the community centroid `X_bar`.
pub fn t_unrestricted(
    aligned_community: &DMatrix<f64>,
    p0: &DVector<f64>,
    metric: &MetricMatrix,
) -> Result<TestOutcome> {
    check_community(aligned_community, p0.len())?;
    if metric.dim() != p0.len() {
        return Err(Error::Argument("metric dimension differs from p0".into()));
    }
    let centroid = aligned_community.row_mean().transpose();
    let diff = &centroid - p0;
    let value = metric.quadratic_form(diff.as_slice()).max(0.0).sqrt();
    TestOutcome::new(
        StatisticKind::Unrestricted,
        value,
        Diagnostics {
            centroid: Some(centroid.as_slice().to_vec()),
            ..Diagnostics::default()
        },
    )
}

/// Minimum-distance estimate `argmin_tau (psi(tau) - y)^T M^{-1} (psi(tau) - y)`
/// over `[0, 1]`: a 2048-point scan, then golden-section refinement of the
/// best grid cell.
pub fn mde_fit(curve: &ParametricCurve, y: &[f64], metric: &MetricMatrix) -> Result<f64> {
    let k = curve.dim();
    if y.len() != k || metric.dim() != k {
        return Err(Error::Argument(format!(
            "MDE dimensions disagree: curve {k}, point {}, metric {}",
            y.len(),
            metric.dim()
        )));
    }
    let mut buf = vec![0.0; k];
    let mut objective = |tau: f64| -> Result<f64> {
        curve.evaluate_into(tau, &mut buf)?;
        for (b, yi) in buf.iter_mut().zip(y) {
            *b -= yi;
        }
        Ok(metric.inverse_quadratic_form(&buf))
    };

    let step = 1.0 / (MDE_GRID - 1) as f64;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..MDE_GRID {
        let tau = i as f64 * step;
        let q = objective(tau)?;
        if q < best.1 {
            best = (tau, q);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(0.0), (best.0 + step).min(1.0));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    while b - a > MDE_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d)?;
        }
    }
    let refined = 0.5 * (a + b);
    let fr = objective(refined)?;
    Ok(if fr < best.1 { refined } else { best.0 })
}

/// `|t_bar - t0|` where `t_bar` is the mean arc-length parameter of the
/// minimum-distance projections of the community rows.
pub fn t_true_manifold(
    curve: &ParametricCurve,
    aligned_community: &DMatrix<f64>,
    tau0: f64,
    metric: &MetricMatrix,
) -> Result<TestOutcome> {
    check_community(aligned_community, curve.dim())?;
    let t0 = curve.arc_length(0.0, tau0)?;
    let mut tau_hat = Vec::with_capacity(aligned_community.nrows());
    let mut t_hat = Vec::with_capacity(aligned_community.nrows());
    for row in aligned_community.row_iter() {
        let y: Vec<f64> = row.iter().copied().collect();
        let tau = mde_fit(curve, &y, metric)?;
        t_hat.push(curve.arc_length(0.0, tau)?);
        tau_hat.push(tau);
    }
    let t_bar = crate::curve::frechet_mean_arclength(&t_hat)?;
    TestOutcome::new(
        StatisticKind::TrueManifold,
        (t_bar - t0).abs(),
        Diagnostics {
            tau_hat: Some(tau_hat),
            arc_length_hat: Some(t_hat),
            null_arc_length: Some(t0),
            ..Diagnostics::default()
        },
    )
}

/// Controls for the learnt-manifold statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearntParams {
    /// Radius of the localization graph.
    pub radius: f64,
    pub embed: EmbedParams,
    /// Drop vertices outside the largest component instead of failing.
    /// `p0` and the whole community must remain.
    pub largest_component: bool,
}

impl Default for LearntParams {
    fn default() -> Self {
        LearntParams {
            radius: 1.0,
            embed: EmbedParams::default(),
            largest_component: false,
        }
    }
}

/// `|Z_bar_s - Z_0|` after embedding `p0` (vertex 0) together with all `n`
/// estimates on a line. The first `s` estimate rows are the community.
pub fn t_learnt_manifold(
    p0: &DVector<f64>,
    aligned_estimates: &DMatrix<f64>,
    s: usize,
    params: &LearntParams,
) -> Result<TestOutcome> {
    let n = aligned_estimates.nrows();
    if s == 0 || s > n {
        return Err(Error::Argument(format!("community size {s} invalid for {n} estimates")));
    }
    if aligned_estimates.ncols() != p0.len() {
        return Err(Error::Argument("estimate dimension differs from p0".into()));
    }
    let mut points = DMatrix::zeros(n + 1, p0.len());
    points.row_mut(0).copy_from(&p0.transpose());
    points.rows_mut(1, n).copy_from(aligned_estimates);

    let graph = manifold::build_epsilon_graph(&points, params.radius)?;
    let (delta, kept) = if params.largest_component {
        let (delta, kept) = manifold::shortest_path_matrix_largest_component(&graph)?;
        if kept.len() < s + 1 || kept[..=s] != (0..=s).collect::<Vec<_>>()[..] {
            return Err(Error::Disconnected {
                components: graph.components(),
            });
        }
        (delta, kept)
    } else {
        (manifold::shortest_path_matrix(&graph)?, (0..=n).collect())
    };
    let line = manifold::embed_line(&delta, params.embed.max_iters, params.embed.tol)?;
    let z = &line.coordinates;
    let z_bar = z[1..=s].iter().sum::<f64>() / s as f64;
    let value = (z_bar - z[0]).abs();
    let mut full = vec![f64::NAN; n + 1];
    for (pos, &v) in kept.iter().enumerate() {
        full[v] = z[pos];
    }
    TestOutcome::new(
        StatisticKind::LearntManifold,
        value,
        Diagnostics {
            line_coordinates: Some(full),
            stress: Some(line.stress),
            iterations: Some(line.iterations),
            ..Diagnostics::default()
        },
    )
}
