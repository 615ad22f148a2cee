//! Network topology, per-node inertia and per-edge interaction tensors, and
//! the block Laplacians built from them.
//!
//! Interaction sums are always degree-normalised: the neighbour `j` of node
//! `i` contributes with weight `1 / sqrt(d_i d_j)`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 3x3 tensor.
pub type Tensor = Matrix3<f64>;

/// Serialisable tensor description: a scalar multiple of the identity, a
/// diagonal, or a full 3x3 matrix given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Scalar(f64),
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl TensorSpec {
    pub fn to_matrix(&self) -> Tensor {
        match self {
            TensorSpec::Scalar(s) => Tensor::identity() * *s,
            TensorSpec::Diagonal(d) => Tensor::from_diagonal(&Vector3::new(d[0], d[1], d[2])),
            TensorSpec::Full(rows) => Tensor::from_fn(|r, c| rows[r][c]),
        }
    }
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec::Scalar(1.0)
    }
}

/// Checks that a tensor is symmetric and positive definite.
pub fn validate_spd(t: &Tensor, what: &str) -> Result<()> {
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidTensor(format!("{what} has non-finite entries")));
    }
    let scale = t.abs().max().max(1.0);
    if (t - t.transpose()).abs().max() > 1e-14 * scale {
        return Err(Error::InvalidTensor(format!("{what} is not symmetric")));
    }
    let min = SymmetricEigen::new(*t).eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::InvalidTensor(format!(
            "{what} is not positive definite (smallest eigenvalue {min})"
        )));
    }
    Ok(())
}

/// One entry of a node's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
    /// Degree normalisation `1 / sqrt(d_i d_j)`.
    pub weight: f64,
}

/// Undirected, connected network of coupled bodies.
#[derive(Debug, Clone)]
pub struct Network {
    edges: Vec<(usize, usize)>,
    couplings: Vec<Tensor>,
    inertia: Vec<Tensor>,
    inertia_inv: Vec<Tensor>,
    degrees: Vec<usize>,
    offsets: Vec<usize>,
    adjacency: Vec<Neighbor>,
    lattice: Option<(usize, usize)>,
}

impl Network {
    /// Builds a network from an edge list with uniform inertia and coupling.
    ///
    /// A single isolated node is accepted (a free body); larger graphs must be
    /// connected and free of self-loops and repeated edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], inertia: Tensor, coupling: Tensor) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("network has no nodes".into()));
        }
        validate_spd(&inertia, "inertia tensor")?;
        validate_spd(&coupling, "interaction tensor")?;

        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("repeated edge ({}, {})", e.0, e.1)));
            }
            normalized.push(e);
        }

        let mut degrees = vec![0usize; n];
        for &(a, b) in &normalized {
            degrees[a] += 1;
            degrees[b] += 1;
        }
        if n > 1 && !is_connected(n, &normalized) {
            return Err(Error::InvalidGraph("network is not connected".into()));
        }

        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degrees[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![Neighbor { node: 0, edge: 0, weight: 0.0 }; offsets[n]];
        for (k, &(a, b)) in normalized.iter().enumerate() {
            let w = 1.0 / ((degrees[a] * degrees[b]) as f64).sqrt();
            adjacency[fill[a]] = Neighbor { node: b, edge: k, weight: w };
            fill[a] += 1;
            adjacency[fill[b]] = Neighbor { node: a, edge: k, weight: w };
            fill[b] += 1;
        }

        let inv = inertia.try_inverse().expect("positive definite tensor is invertible");
        Ok(Network {
            couplings: vec![coupling; normalized.len()],
            edges: normalized,
            inertia: vec![inertia; n],
            inertia_inv: vec![inv; n],
            degrees,
            offsets,
            adjacency,
            lattice: None,
        })
    }

    /// Rectangular lattice with nearest-neighbour edges. Node `(x, y)` has
    /// index `y * width + x`.
    ///
    /// Periodic lattices need both sides of length at least 3, since shorter
    /// sides would wrap onto an existing edge.
    pub fn lattice_2d(width: usize, height: usize, periodic: bool, inertia: Tensor, coupling: Tensor) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGraph("lattice sides must be positive".into()));
        }
        if periodic && (width < 3 || height < 3) {
            return Err(Error::InvalidGraph(format!(
                "periodic {width}x{height} lattice would contain repeated edges; both sides must be at least 3"
            )));
        }
        let idx = |x: usize, y: usize| y * width + x;
        let mut edges = Vec::new();
        for y in 0..height {
            for x in 0..width {
                if x + 1 < width {
                    edges.push((idx(x, y), idx(x + 1, y)));
                } else if periodic {
                    edges.push((idx(x, y), idx(0, y)));
                }
                if y + 1 < height {
                    edges.push((idx(x, y), idx(x, y + 1)));
                } else if periodic {
                    edges.push((idx(x, y), idx(x, 0)));
                }
            }
        }
        let mut net = Self::from_edges(width * height, &edges, inertia, coupling)?;
        net.lattice = Some((width, height));
        Ok(net)
    }

    /// Replaces the inertia tensor of one node.
    pub fn with_node_inertia(mut self, node: usize, inertia: Tensor) -> Result<Self> {
        if node >= self.len() {
            return Err(Error::InvalidGraph(format!("node {node} out of range")));
        }
        validate_spd(&inertia, "inertia tensor")?;
        self.inertia_inv[node] = inertia.try_inverse().expect("positive definite tensor is invertible");
        self.inertia[node] = inertia;
        Ok(self)
    }

    /// Replaces the interaction tensor of the edge `{a, b}`.
    pub fn with_edge_coupling(mut self, a: usize, b: usize, coupling: Tensor) -> Result<Self> {
        let k = self
            .edge_index(a, b)
            .ok_or_else(|| Error::InvalidGraph(format!("no edge between {a} and {b}")))?;
        validate_spd(&coupling, "interaction tensor")?;
        self.couplings[k] = coupling;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn inertia(&self, i: usize) -> &Tensor {
        &self.inertia[i]
    }

    pub fn inertia_inv(&self, i: usize) -> &Tensor {
        &self.inertia_inv[i]
    }

    pub fn coupling(&self, edge: usize) -> &Tensor {
        &self.couplings[edge]
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Lattice dimensions when the network was built by [`Network::lattice_2d`].
    pub fn lattice_shape(&self) -> Option<(usize, usize)> {
        self.lattice
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.len() || b >= self.len() {
            return None;
        }
        self.neighbors(a).iter().find(|nb| nb.node == b).map(|nb| nb.edge)
    }

    /// True when every node carries the same inertia and every edge the same
    /// interaction tensor.
    pub fn is_homogeneous(&self) -> bool {
        self.inertia.iter().all(|t| *t == self.inertia[0])
            && self.couplings.first().is_none_or(|c0| self.couplings.iter().all(|t| t == c0))
    }

    /// True when all inertia and interaction tensors are diagonal.
    pub fn is_axis_aligned(&self) -> bool {
        let diag = |t: &Tensor| (0..3).all(|r| (0..3).all(|c| r == c || t[(r, c)] == 0.0));
        self.inertia.iter().all(diag) && self.couplings.iter().all(diag)
    }

    /// Normalised interaction field `sum_j J_ij v_j / sqrt(d_i d_j)`.
    pub fn coupling_field(&self, v: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..self.len()).map(|i| self.coupling_field_at(i, v)).collect()
    }

    #[inline]
    pub fn coupling_field_at(&self, i: usize, v: &[Vector3<f64>]) -> Vector3<f64> {
        self.neighbors(i)
            .iter()
            .fold(Vector3::zeros(), |acc, nb| acc + self.couplings[nb.edge] * v[nb.node] * nb.weight)
    }

    /// Applies the momentum-coupled Laplacian without forming it.
    pub fn apply_momentum_laplacian(&self, v: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..self.len())
            .map(|i| self.inertia_inv[i] * v[i] - self.coupling_field_at(i, v))
            .collect()
    }

    /// Dense normalised block adjacency: block `(i, j)` is `J_ij / sqrt(d_i d_j)`.
    pub fn normalized_adjacency(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(3 * n, 3 * n);
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            let w = 1.0 / ((self.degrees[a] * self.degrees[b]) as f64).sqrt();
            let block = self.couplings[k] * w;
            m.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(&block);
            m.fixed_view_mut::<3, 3>(3 * b, 3 * a).copy_from(&block);
        }
        m
    }
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Which coupling a Laplacian describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LaplacianKind {
    /// `blockdiag(I_i^-1) - D^-1/2 A D^-1/2`.
    Momentum,
    /// `-lambda1^2 blockdiag(I_i) - D^-1/2 A D^-1/2`.
    Position { lambda1: f64 },
}

/// Dense symmetric `3N x 3N` block Laplacian.
#[derive(Debug, Clone)]
pub struct ExtendedLaplacian {
    pub kind: LaplacianKind,
    pub matrix: DMatrix<f64>,
}

/// Laplacian of the momentum-coupled (rigid-body) network.
pub fn momentum_laplacian(net: &Network) -> ExtendedLaplacian {
    let mut m = -net.normalized_adjacency();
    for i in 0..net.len() {
        let mut block = m.fixed_view_mut::<3, 3>(3 * i, 3 * i);
        block += net.inertia_inv(i);
    }
    ExtendedLaplacian { kind: LaplacianKind::Momentum, matrix: m }
}

/// Laplacian of the position-coupled (heavy-top) network at multiplier `lambda1`.
pub fn position_laplacian(net: &Network, lambda1: f64) -> ExtendedLaplacian {
    let mut m = -net.normalized_adjacency();
    let s = lambda1 * lambda1;
    for i in 0..net.len() {
        let mut block = m.fixed_view_mut::<3, 3>(3 * i, 3 * i);
        block -= net.inertia(i) * s;
    }
    ExtendedLaplacian { kind: LaplacianKind::Position { lambda1 }, matrix: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(a: f64, b: f64, c: f64) -> Tensor {
        Tensor::from_diagonal(&Vector3::new(a, b, c))
    }

    #[test]
    fn two_node_momentum_laplacian() {
        let net = Network::from_edges(2, &[(0, 1)], Tensor::identity(), Tensor::identity()).unwrap();
        let l = momentum_laplacian(&net).matrix;
        let i3 = Tensor::identity();
        assert_eq!(l.fixed_view::<3, 3>(0, 0).clone_owned(), i3);
        assert_eq!(l.fixed_view::<3, 3>(0, 3).clone_owned(), -i3);
        assert_eq!(l.fixed_view::<3, 3>(3, 0).clone_owned(), -i3);
        assert_eq!(l.fixed_view::<3, 3>(3, 3).clone_owned(), i3);
    }

    #[test]
    fn torus_degrees_and_weights() {
        let net = Network::lattice_2d(20, 20, true, Tensor::identity(), Tensor::identity()).unwrap();
        assert_eq!(net.len(), 400);
        assert_eq!(net.edges().len(), 800);
        assert!(net.degrees().iter().all(|&d| d == 4));
        assert!(net.neighbors(0).iter().all(|nb| nb.weight == 0.25));
    }

    #[test]
    fn position_laplacian_diagonal_blocks() {
        let net = Network::lattice_2d(3, 3, true, diag(1.0, 2.0, 3.0), Tensor::identity()).unwrap();
        let l = position_laplacian(&net, 0.5).matrix;
        let block = l.fixed_view::<3, 3>(6, 6).clone_owned();
        assert!((block - diag(-0.25, -0.5, -0.75)).norm() < 1e-15);
        let off = l.fixed_view::<3, 3>(0, 3).clone_owned();
        assert!((off + Tensor::identity() * 0.25).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_graphs() {
        let i3 = Tensor::identity();
        assert!(matches!(Network::from_edges(3, &[(0, 1)], i3, i3), Err(Error::InvalidGraph(_))));
        assert!(matches!(Network::from_edges(2, &[(0, 0)], i3, i3), Err(Error::InvalidGraph(_))));
        assert!(matches!(Network::from_edges(2, &[(0, 1), (1, 0)], i3, i3), Err(Error::InvalidGraph(_))));
        assert!(matches!(Network::from_edges(2, &[(0, 2)], i3, i3), Err(Error::InvalidGraph(_))));
        assert!(Network::lattice_2d(2, 5, true, i3, i3).is_err());
        assert!(Network::lattice_2d(2, 5, false, i3, i3).is_ok());
        assert!(Network::from_edges(1, &[], i3, i3).is_ok());
    }

    #[test]
    fn rejects_bad_tensors() {
        let i3 = Tensor::identity();
        let mut asym = i3;
        asym[(0, 1)] = 0.1;
        assert!(matches!(Network::from_edges(1, &[], asym, i3), Err(Error::InvalidTensor(_))));
        assert!(matches!(Network::from_edges(1, &[], diag(1.0, -1.0, 1.0), i3), Err(Error::InvalidTensor(_))));
        let net = Network::from_edges(2, &[(0, 1)], i3, i3).unwrap();
        assert!(net.clone().with_edge_coupling(1, 0, diag(1.0, 2.0, 3.0)).is_ok());
        assert!(net.with_node_inertia(5, i3).is_err());
    }

    #[test]
    fn tensor_spec_forms() {
        assert_eq!(TensorSpec::Scalar(2.0).to_matrix(), Tensor::identity() * 2.0);
        assert_eq!(TensorSpec::Diagonal([1.0, 2.0, 3.0]).to_matrix(), diag(1.0, 2.0, 3.0));
        let full = TensorSpec::Full([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 1.0]]).to_matrix();
        assert_eq!(full[(0, 1)], 0.5);
    }

    proptest! {
        #[test]
        fn laplacians_are_symmetric(w in 3usize..6, h in 3usize..6, a in 0.5..3.0f64, b in 0.5..3.0f64, l1 in -2.0..2.0f64) {
            let net = Network::lattice_2d(w, h, true, diag(a, b, 1.0), diag(b, 1.0, a)).unwrap();
            let lm = momentum_laplacian(&net).matrix;
            prop_assert!((&lm - lm.transpose()).abs().max() == 0.0);
            let lp = position_laplacian(&net, l1).matrix;
            prop_assert!((&lp - lp.transpose()).abs().max() == 0.0);
        }

        #[test]
        fn sparse_and_dense_laplacian_agree(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let net = Network::lattice_2d(4, 3, false, diag(1.0, 2.0, 3.0), diag(0.5, 1.0, 1.5)).unwrap();
            let v: Vec<Vector3<f64>> = (0..net.len())
                .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let sparse = net.apply_momentum_laplacian(&v);
            let flat = nalgebra::DVector::from_iterator(3 * v.len(), v.iter().flat_map(|x| x.iter().copied()));
            let dense = momentum_laplacian(&net).matrix * flat;
            for i in 0..net.len() {
                let d = Vector3::new(dense[3 * i], dense[3 * i + 1], dense[3 * i + 2]);
                prop_assert!((d - sparse[i]).norm() < 1e-13);
            }
        }
    }
}
