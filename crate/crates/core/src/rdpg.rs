//! Random dot product graphs: latent positions, adjacency sampling, adjacency
//! spectral embedding and orthogonal Procrustes alignment.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::curve::ParametricCurve;
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricOperator};

/// Slack allowed on the `[0, 1]` inner-product constraint.
pub const INNER_PRODUCT_SLACK: f64 = 1e-12;

/// `n x k` latent positions. The first `community` rows are the community of
/// interest; the remaining rows are auxiliary vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    positions: DMatrix<f64>,
    community: usize,
}

impl LatentMatrix {
    pub fn new(positions: DMatrix<f64>, community: usize) -> Result<Self> {
        if community > positions.nrows() {
            return Err(Error::Argument(format!(
                "community size {community} exceeds vertex count {}",
                positions.nrows()
            )));
        }
        Ok(LatentMatrix {
            positions,
            community,
        })
    }

    /// Stacks `psi(tau)` for the community parameters followed by the
    /// auxiliary parameters.
    pub fn from_curve(
        curve: &ParametricCurve,
        community_tau: &[f64],
        auxiliary_tau: &[f64],
    ) -> Result<Self> {
        let n = community_tau.len() + auxiliary_tau.len();
        let k = curve.dim();
        let mut positions = DMatrix::zeros(n, k);
        let mut buf = vec![0.0; k];
        for (i, &tau) in community_tau.iter().chain(auxiliary_tau).enumerate() {
            curve.evaluate_into(tau, &mut buf)?;
            for (c, v) in buf.iter().enumerate() {
                positions[(i, c)] = *v;
            }
        }
        LatentMatrix::new(positions, community_tau.len())
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn community_size(&self) -> usize {
        self.community
    }

    pub fn auxiliary_count(&self) -> usize {
        self.n() - self.community
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn into_positions(self) -> DMatrix<f64> {
        self.positions
    }
}

/// True iff every pairwise inner product (including self products) of the
/// rows lies in `[0, 1]` up to [`INNER_PRODUCT_SLACK`].
pub fn validate_latent(x: &LatentMatrix) -> bool {
    validate_positions(x.positions())
}

pub fn validate_positions(positions: &DMatrix<f64>) -> bool {
    let rows = positions.transpose();
    let n = rows.ncols();
    let range = -INNER_PRODUCT_SLACK..=1.0 + INNER_PRODUCT_SLACK;
    for i in 0..n {
        let a = rows.column(i);
        for j in i..n {
            if !range.contains(&a.dot(&rows.column(j))) {
                return false;
            }
        }
    }
    true
}

/// Symmetric hollow 0/1 adjacency matrix, stored as sorted neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds the graph from undirected edges. Duplicates are merged;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Argument(format!(
                    "edge ({i}, {j}) out of range for {n} vertices"
                )));
            }
            if i == j {
                return Err(Error::Argument(format!("self-loop at vertex {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Adjacency { neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

impl SymmetricOperator for Adjacency {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, list) in y.iter_mut().zip(&self.neighbors) {
            *yi = list.iter().map(|&j| x[j]).sum();
        }
    }
}

/// Samples `A ~ RDPG(X)`: independent Bernoulli(`X_i . X_j`) edges above the
/// diagonal, mirrored below, zero diagonal.
pub fn sample_adjacency<R: Rng + ?Sized>(x: &LatentMatrix, rng: &mut R) -> Result<Adjacency> {
    if !validate_latent(x) {
        return Err(Error::Precondition(
            "latent positions have inner products outside [0, 1]".into(),
        ));
    }
    let rows = x.positions().transpose();
    let n = x.n();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        let a = rows.column(i);
        for j in (i + 1)..n {
            let p = a.dot(&rows.column(j)).clamp(0.0, 1.0);
            if rng.gen::<f64>() < p {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    // each list is filled in increasing order already
    Ok(Adjacency { neighbors })
}

/// Adjacency spectral embedding `X_hat = U_r S_r`.
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    /// `n x r` embedding.
    pub embedding: DMatrix<f64>,
    /// `lambda_1 >= ... >= lambda_r`.
    pub eigenvalues: Vec<f64>,
    /// `sigma_i = sqrt(max(lambda_i, 0))`.
    pub scales: Vec<f64>,
    /// `n x r` orthonormal eigenvector factor `U_r`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralEmbedding {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Spectral embedding of a dense symmetric matrix.
pub fn ase(m: &DMatrix<f64>, r: usize) -> Result<SpectralEmbedding> {
    if m.nrows() != m.ncols() {
        return Err(Error::Argument("embedding needs a square matrix".into()));
    }
    let tol = 1e-10 * m.amax().max(1.0);
    if linalg::asymmetry(m) > tol {
        return Err(Error::Argument("embedding needs a symmetric matrix".into()));
    }
    ase_operator(m, r)
}

/// Spectral embedding of an adjacency matrix.
pub fn ase_adjacency(a: &Adjacency, r: usize) -> Result<SpectralEmbedding> {
    ase_operator(a, r)
}

pub fn ase_operator<O: SymmetricOperator + ?Sized>(op: &O, r: usize) -> Result<SpectralEmbedding> {
    let pairs = linalg::top_eigenpairs(op, r)?;
    let scales: Vec<f64> = pairs.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut embedding = pairs.vectors.clone();
    for (mut col, &s) in embedding.column_iter_mut().zip(&scales) {
        col *= s;
    }
    Ok(SpectralEmbedding {
        embedding,
        eigenvalues: pairs.values,
        scales,
        eigenvectors: pairs.vectors,
    })
}

/// Orthogonal matrix minimizing `sum_i |W source_i - target_i|^2`.
#[derive(Clone, Debug)]
pub struct ProcrustesFit {
    pub rotation: DMatrix<f64>,
    /// Set when the cross-product matrix vanished and the identity was returned.
    pub degenerate: bool,
}

impl ProcrustesFit {
    /// Maps each row `x` of `source` to `W x`.
    pub fn apply(&self, source: &DMatrix<f64>) -> DMatrix<f64> {
        source * self.rotation.transpose()
    }
}

pub fn procrustes_align(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<ProcrustesFit> {
    if source.shape() != target.shape() {
        return Err(Error::Argument(format!(
            "Procrustes shapes differ: {:?} vs {:?}",
            source.shape(),
            target.shape()
        )));
    }
    let (n, k) = source.shape();
    if n < k {
        return Err(Error::Argument(format!(
            "Procrustes needs at least as many points ({n}) as dimensions ({k})"
        )));
    }
    let cross = target.transpose() * source;
    if cross.amax() == 0.0 {
        log::warn!("Procrustes cross-product matrix is zero; returning the identity");
        return Ok(ProcrustesFit {
            rotation: DMatrix::identity(k, k),
            degenerate: true,
        });
    }
    // polar factor of target^T source
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed to produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD failed to produce V^T".into()))?;
    Ok(ProcrustesFit {
        rotation: u * v_t,
        degenerate: false,
    })
}

/// `sum_i |W source_i - target_i|^2`.
pub fn procrustes_loss(source: &DMatrix<f64>, target: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    (source * w.transpose() - target).norm_squared()
}

/// Row `i` of a point matrix as a vector.
pub fn row(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hw_grid(n: usize) -> LatentMatrix {
        let tau: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        LatentMatrix::from_curve(&ParametricCurve::hardy_weinberg(), &[], &tau).unwrap()
    }

    #[test]
    fn validate_examples() {
        let zero = LatentMatrix::new(DMatrix::zeros(4, 3), 1).unwrap();
        assert!(validate_latent(&zero));
        let mut bad = DMatrix::zeros(4, 3);
        bad[(2, 0)] = 2.0;
        assert!(!validate_latent(&LatentMatrix::new(bad, 0).unwrap()));
        assert!(validate_latent(&hw_grid(100)));
    }

    #[test]
    fn validate_matches_exhaustive_scan() {
        let x = hw_grid(100);
        let p = x.positions() * x.positions().transpose();
        let oracle = p.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v));
        assert_eq!(validate_latent(&x), oracle);
    }

    #[test]
    fn community_bounds() {
        assert!(LatentMatrix::new(DMatrix::zeros(2, 3), 3).is_err());
        let x = LatentMatrix::from_curve(&ParametricCurve::hardy_weinberg(), &[0.3; 5], &[0.1, 0.9])
            .unwrap();
        assert_eq!((x.n(), x.community_size(), x.auxiliary_count()), (7, 5, 2));
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = LatentMatrix::new(DMatrix::zeros(10, 2), 0).unwrap();
        assert_eq!(sample_adjacency(&zero, &mut rng).unwrap().edge_count(), 0);
        let mut ones = DMatrix::zeros(10, 2);
        ones.column_mut(0).fill(1.0);
        let full = sample_adjacency(&LatentMatrix::new(ones, 0).unwrap(), &mut rng).unwrap();
        assert_eq!(full.edge_count(), 45);
        assert!((0..10).all(|i| !full.contains(i, i)));
    }

    #[test]
    fn invalid_latent_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = LatentMatrix::new(DMatrix::from_element(3, 1, 1.5), 0).unwrap();
        assert!(matches!(sample_adjacency(&x, &mut rng), Err(Error::Precondition(_))));
    }

    #[test]
    fn edge_frequency_matches_probability() {
        // vertices 0 and 1 have inner product 0.37
        let mut pos = DMatrix::zeros(3, 2);
        pos[(0, 0)] = 1.0;
        pos[(1, 0)] = 0.37;
        pos[(2, 1)] = 0.5;
        let x = LatentMatrix::new(pos, 0).unwrap();
        let mut hits = 0;
        let draws = 10_000;
        for seed in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if sample_adjacency(&x, &mut rng).unwrap().contains(0, 1) {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.37).abs() <= 0.015, "frequency {freq}");
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let x = hw_grid(60);
        let a = sample_adjacency(&x, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_adjacency(&x, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ase_of_zero_is_zero() {
        let emb = ase(&DMatrix::zeros(5, 5), 2).unwrap();
        assert!(emb.embedding.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ase_reconstructs_gram_matrix() {
        let x = hw_grid(40);
        let p = x.positions() * x.positions().transpose();
        let emb = ase(&p, 3).unwrap();
        let rec = &emb.embedding * emb.embedding.transpose();
        assert!((rec - &p).amax() < 1e-8);
    }

    #[test]
    fn negative_eigenvalue_gives_zero_column() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, -2.0]));
        let emb = ase(&m, 3).unwrap();
        assert_eq!(emb.eigenvalues, vec![3.0, 1.0, -2.0]);
        assert!(emb.embedding.column(2).iter().all(|&v| v == 0.0));
        assert_eq!(emb.scales[2], 0.0);
    }

    #[test]
    fn ase_rejects_asymmetric() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(ase(&m, 1).is_err());
    }

    #[test]
    fn procrustes_identity_and_planted_rotation() {
        let x = hw_grid(30).into_positions();
        let fit = procrustes_align(&x, &x).unwrap();
        assert!((fit.rotation - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);

        let (a, b) = (0.7_f64, -1.1_f64);
        let rz = DMatrix::from_row_slice(3, 3, &[a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0]);
        let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, b.cos(), -b.sin(), 0.0, b.sin(), b.cos()]);
        let r = rz * rx;
        // target_i = R source_i, so the aligning map is W = R
        let target = &x * r.transpose();
        let fit = procrustes_align(&x, &target).unwrap();
        assert!((fit.rotation - &r).amax() < 1e-10);
    }

    #[test]
    fn procrustes_degenerate_cross_product() {
        let z = DMatrix::zeros(4, 2);
        let fit = procrustes_align(&z, &z).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.rotation, DMatrix::identity(2, 2));
    }

    #[test]
    fn procrustes_shape_checks() {
        assert!(procrustes_align(&DMatrix::zeros(4, 2), &DMatrix::zeros(4, 3)).is_err());
        assert!(procrustes_align(&DMatrix::zeros(1, 2), &DMatrix::zeros(1, 2)).is_err());
    }
}
