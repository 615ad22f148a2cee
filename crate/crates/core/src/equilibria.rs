//! Relative equilibria of the networks and their stability.
//!
//! For momentum coupling every eigenvector `mu_e` of the momentum Laplacian
//! is an equilibrium, with Lagrange multiplier `lambda_e` equal to its
//! eigenvalue. For position coupling at a chosen multiplier `lambda1` every
//! eigenvector `Gamma_e` of the position Laplacian, with eigenvalue
//! `-lambda2`, gives an equilibrium with `Pi_e = -lambda1 I Gamma_e`.
//!
//! Linear stability is judged from the spectrum of `B(x_e) Hess(h_aug)`,
//! with `B` the Lie-Poisson tensor and `h_aug` the energy augmented by the
//! Casimirs with the equilibrium's multipliers. The spectrum is computed on
//! the range of `B` (the tangent space of the orbit), which drops the
//! trivial Casimir directions and shrinks the eigenproblem.

use nalgebra::{Complex, DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::graph::{Network, momentum_laplacian, position_laplacian};
use crate::model::LatticeState;

type V3 = Vector3<f64>;

/// Relative tolerance for grouping eigenvalues into degenerate groups.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Real parts below this magnitude count as zero.
pub const ABSCISSA_ZERO: f64 = 1e-8;
/// Relative tolerance of the ferromagnetic and anti-ferromagnetic tests.
pub const CLASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumClass {
    /// `mu_i / sqrt(d_i)` is the same vector at every node.
    Ferromagnetic,
    /// `sum_i sqrt(d_i) mu_i = 0`.
    AntiFerromagnetic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multipliers {
    Momentum { lambda: f64 },
    Position { lambda1: f64, lambda2: f64 },
}

impl Multipliers {
    /// The multiplier that orders the records: `lambda` or `lambda2`.
    pub fn primary(&self) -> f64 {
        match *self {
            Multipliers::Momentum { lambda } => lambda,
            Multipliers::Position { lambda2, .. } => lambda2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub index: usize,
    pub state: LatticeState,
    pub multipliers: Multipliers,
    /// Size of the degenerate eigenvalue group the record belongs to.
    pub multiplicity: usize,
    /// Index of that group, in record order.
    pub group: usize,
    pub class: EquilibriumClass,
    /// Largest real part of the linearised spectrum, once computed.
    pub spectral_abscissa: Option<f64>,
}

impl EquilibriumRecord {
    pub fn is_linearly_stable(&self) -> Option<bool> {
        self.spectral_abscissa.map(|a| a < ABSCISSA_ZERO)
    }
}

fn node_weights(net: &Network) -> Vec<f64> {
    if net.len() == 1 {
        return vec![1.0];
    }
    net.degrees().iter().map(|&d| (d as f64).sqrt()).collect()
}

/// Classifies an order-parameter field (momenta or positions).
pub fn classify(net: &Network, field: &[V3]) -> Result<EquilibriumClass> {
    if field.len() != net.len() {
        return Err(Error::StateMismatch(format!("field has {} nodes, network has {}", field.len(), net.len())));
    }
    let norm = field.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroState);
    }
    let w = node_weights(net);
    let scaled: Vec<V3> = field.iter().zip(&w).map(|(v, wi)| v / *wi).collect();
    let scale = scaled.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scaled.iter().all(|v| (v - scaled[0]).norm() <= CLASS_TOL * scale) {
        return Ok(EquilibriumClass::Ferromagnetic);
    }
    let total: V3 = field.iter().zip(&w).map(|(v, wi)| v * *wi).sum();
    if total.norm() < CLASS_TOL * norm {
        return Ok(EquilibriumClass::AntiFerromagnetic);
    }
    Ok(EquilibriumClass::Mixed)
}

/// Sorted eigen-decomposition with degenerate groups split into their
/// ferromagnetic and anti-ferromagnetic parts, and aligned with the body
/// axes where the group allows it.
struct GroupedSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    groups: Vec<(usize, usize)>,
}

fn grouped_spectrum(net: &Network, matrix: DMatrix<f64>) -> GroupedSpectrum {
    let n = matrix.nrows();
    let (values, mut vectors) = symmetric_eigen(&matrix);

    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || values[k] - values[k - 1] > DEGENERACY_TOL * scale {
            groups.push((start, k - start));
            start = k;
        }
    }

    let w = node_weights(net);
    let wsum: f64 = w.iter().map(|x| x * x).sum();
    let ferro_projector = |u: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(u.nrows(), u.ncols());
        for c in 0..u.ncols() {
            let mut s = V3::zeros();
            for (i, wi) in w.iter().enumerate() {
                s += u.fixed_view::<3, 1>(3 * i, c) * *wi;
            }
            s /= wsum;
            for (i, wi) in w.iter().enumerate() {
                out.fixed_view_mut::<3, 1>(3 * i, c).copy_from(&(s * *wi));
            }
        }
        out
    };
    let axis_weight = |u: &DMatrix<f64>| -> DMatrix<f64> {
        DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, c)] * (1 + r % 3) as f64)
    };

    for &(s, m) in &groups {
        if m < 2 {
            continue;
        }
        let u = vectors.columns(s, m).clone_owned();
        let refined = refine(&u, &[&ferro_projector, &axis_weight]);
        vectors.columns_mut(s, m).copy_from(&refined);
    }
    GroupedSpectrum { values, vectors, groups }
}

/// Eigenpairs of a symmetric matrix in ascending order.
fn symmetric_eigen(matrix: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    let a = faer::Mat::<f64>::from_fn(n, n, |r, c| matrix[(r, c)]);
    match a.self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            let (s, u) = (eig.S(), eig.U());
            let values = (0..n).map(|k| s[k]).collect();
            (values, DMatrix::from_fn(n, n, |r, c| u[(r, c)]))
        }
        Err(_) => {
            let eig = SymmetricEigen::new(matrix.clone());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let mut vectors = DMatrix::zeros(n, n);
            for (c, &k) in order.iter().enumerate() {
                vectors.set_column(c, &eig.eigenvectors.column(k));
            }
            (order.iter().map(|&k| eig.eigenvalues[k]).collect(), vectors)
        }
    }
}

/// Rotates an orthonormal basis so that it diagonalises each operator in
/// turn, restricted to the clusters left by the previous one.
fn refine(u: &DMatrix<f64>, ops: &[&dyn Fn(&DMatrix<f64>) -> DMatrix<f64>]) -> DMatrix<f64> {
    let Some((op, rest)) = ops.split_first() else {
        return u.clone();
    };
    let g = u.transpose() * op(u);
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..u.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut rotation = DMatrix::zeros(u.ncols(), u.ncols());
    for (c, &k) in order.iter().enumerate() {
        rotation.set_column(c, &eig.eigenvectors.column(k));
    }
    let rotated = u * rotation;
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut out = rotated.clone();
    let mut start = 0;
    for k in 1..=vals.len() {
        if k == vals.len() || vals[k] - vals[k - 1] > 1e-6 {
            let block = rotated.columns(start, k - start).clone_owned();
            out.columns_mut(start, k - start).copy_from(&refine(&block, rest));
            start = k;
        }
    }
    out
}

fn column_vectors(v: &DMatrix<f64>, c: usize) -> Vec<V3> {
    (0..v.nrows() / 3).map(|i| V3::new(v[(3 * i, c)], v[(3 * i + 1, c)], v[(3 * i + 2, c)])).collect()
}

/// Equilibria of the rigid-body network on the total Casimir level
/// `sum_i 1/2 |Pi_i|^2 = level`, one record per Laplacian eigenvector,
/// ordered by increasing `lambda_e`.
pub fn momentum_equilibria(net: &Network, level: f64) -> Result<Vec<EquilibriumRecord>> {
    if !(level.is_finite() && level > 0.0) {
        return Err(Error::InvalidConfig(format!("Casimir level must be positive, got {level}")));
    }
    let spec = grouped_spectrum(net, momentum_laplacian(net).matrix);
    let radius = (2.0 * level).sqrt();
    let mut out = Vec::with_capacity(spec.values.len());
    for (g, &(s, m)) in spec.groups.iter().enumerate() {
        for c in s..s + m {
            let pi: Vec<V3> = column_vectors(&spec.vectors, c).into_iter().map(|v| v * radius).collect();
            let class = classify(net, &pi)?;
            out.push(EquilibriumRecord {
                index: c,
                state: LatticeState::Momentum { pi },
                multipliers: Multipliers::Momentum { lambda: spec.values[c] },
                multiplicity: m,
                group: g,
                class,
                spectral_abscissa: None,
            });
        }
    }
    Ok(out)
}

/// Equilibria of the heavy-top network for multiplier `lambda1`, normalised
/// to `sum_i |Gamma_i|^2 = level`, ordered by increasing `lambda2`.
pub fn position_equilibria(net: &Network, lambda1: f64, level: f64) -> Result<Vec<EquilibriumRecord>> {
    if !lambda1.is_finite() {
        return Err(Error::InvalidConfig("lambda1 must be finite".into()));
    }
    if !(level.is_finite() && level > 0.0) {
        return Err(Error::InvalidConfig(format!("Casimir level must be positive, got {level}")));
    }
    let spec = grouped_spectrum(net, position_laplacian(net, lambda1).matrix);
    let radius = level.sqrt();
    let n = spec.values.len();
    let mut out = Vec::with_capacity(n);
    // Largest Laplacian eigenvalue first, so that lambda2 = -eigenvalue increases.
    let groups: Vec<(usize, usize)> = spec.groups.iter().rev().copied().collect();
    for (g, &(s, m)) in groups.iter().enumerate() {
        for c in (s..s + m).rev() {
            let gamma: Vec<V3> = column_vectors(&spec.vectors, c).into_iter().map(|v| v * radius).collect();
            let pi: Vec<V3> = gamma.iter().enumerate().map(|(i, g)| net.inertia(i) * g * (-lambda1)).collect();
            let class = classify(net, &gamma)?;
            out.push(EquilibriumRecord {
                index: out.len(),
                state: LatticeState::HeavyTop { pi, gamma },
                multipliers: Multipliers::Position { lambda1, lambda2: -spec.values[c] },
                multiplicity: m,
                group: g,
                class,
                spectral_abscissa: None,
            });
        }
    }
    Ok(out)
}

/// Dense linearisation `hat(Pi_e) (L - lambda_e)` of the rigid-body network.
pub fn linearize_momentum(net: &Network, record: &EquilibriumRecord) -> Result<DMatrix<f64>> {
    let (pi, lambda) = momentum_parts(record)?;
    let h = momentum_hessian(net, lambda);
    let mut j = DMatrix::zeros(h.nrows(), h.ncols());
    for (i, p) in pi.iter().enumerate() {
        let rows = p.cross_matrix() * h.rows(3 * i, 3);
        j.rows_mut(3 * i, 3).copy_from(&rows);
    }
    Ok(j)
}

/// Dense `6N x 6N` linearisation of the heavy-top network, momenta first.
pub fn linearize_position(net: &Network, record: &EquilibriumRecord) -> Result<DMatrix<f64>> {
    let (pi, gamma, lambda1, lambda2) = position_parts(record)?;
    let h = position_hessian(net, lambda1, lambda2);
    let n = net.len();
    let mut j = DMatrix::zeros(6 * n, 6 * n);
    for i in 0..n {
        let ph = pi[i].cross_matrix();
        let gh = gamma[i].cross_matrix();
        let top = ph * h.rows(3 * i, 3) + gh * h.rows(3 * (n + i), 3);
        let bottom = gh * h.rows(3 * i, 3);
        j.rows_mut(3 * i, 3).copy_from(&top);
        j.rows_mut(3 * (n + i), 3).copy_from(&bottom);
    }
    Ok(j)
}

fn momentum_parts(record: &EquilibriumRecord) -> Result<(&[V3], f64)> {
    match (&record.state, record.multipliers) {
        (LatticeState::Momentum { pi }, Multipliers::Momentum { lambda }) => Ok((pi, lambda)),
        _ => Err(Error::StateMismatch("expected a rigid-body equilibrium".into())),
    }
}

fn position_parts(record: &EquilibriumRecord) -> Result<(&[V3], &[V3], f64, f64)> {
    match (&record.state, record.multipliers) {
        (LatticeState::HeavyTop { pi, gamma }, Multipliers::Position { lambda1, lambda2 }) => {
            Ok((pi, gamma, lambda1, lambda2))
        }
        _ => Err(Error::StateMismatch("expected a heavy-top equilibrium".into())),
    }
}

/// `L - lambda` (Hessian of the augmented rigid-body energy).
fn momentum_hessian(net: &Network, lambda: f64) -> DMatrix<f64> {
    let mut h = momentum_laplacian(net).matrix;
    for k in 0..h.nrows() {
        h[(k, k)] -= lambda;
    }
    h
}

/// `[[I^-1, lambda1], [lambda1, -A + lambda2]]` (Hessian of the augmented
/// heavy-top energy).
fn position_hessian(net: &Network, lambda1: f64, lambda2: f64) -> DMatrix<f64> {
    let n = net.len();
    let mut h = DMatrix::zeros(6 * n, 6 * n);
    h.view_mut((3 * n, 3 * n), (3 * n, 3 * n)).copy_from(&(-net.normalized_adjacency()));
    for i in 0..n {
        h.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(net.inertia_inv(i));
        for a in 0..3 {
            h[(3 * i + a, 3 * (n + i) + a)] = lambda1;
            h[(3 * (n + i) + a, 3 * i + a)] = lambda1;
            h[(3 * (n + i) + a, 3 * (n + i) + a)] += lambda2;
        }
    }
    h
}

/// Per-node Poisson block restricted to its range: the coordinates it acts
/// on, an orthonormal basis of its range, and the compressed block.
struct RangeBlock {
    coords: Vec<usize>,
    basis: DMatrix<f64>,
    compressed: DMatrix<f64>,
}

fn range_block(coords: Vec<usize>, b: DMatrix<f64>) -> Option<RangeBlock> {
    let scale = b.abs().max();
    if scale == 0.0 {
        return None;
    }
    let gram = b.transpose() * &b;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.max();
    let cols: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > 1e-20 * top).collect();
    let basis = DMatrix::from_fn(b.nrows(), cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
    let compressed = basis.transpose() * &b * &basis;
    Some(RangeBlock { coords, basis, compressed })
}

/// Spectrum of `B H` on the range of a block-diagonal skew `B`.
fn compressed_spectrum(blocks: &[RangeBlock], h: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let dim: usize = blocks.iter().map(|b| b.basis.ncols()).sum();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut acc = 0;
    for b in blocks {
        offsets.push(acc);
        acc += b.basis.ncols();
    }
    // H Q, column by column.
    let mut hq = DMatrix::zeros(h.nrows(), dim);
    for (b, &off) in blocks.iter().zip(&offsets) {
        for c in 0..b.basis.ncols() {
            let mut col = hq.column_mut(off + c);
            for (a, &coord) in b.coords.iter().enumerate() {
                let w = b.basis[(a, c)];
                if w != 0.0 {
                    col.axpy(w, &h.column(coord), 1.0);
                }
            }
        }
    }
    // K Q^T H Q.
    let mut m = DMatrix::zeros(dim, dim);
    for (b, &off) in blocks.iter().zip(&offsets) {
        let r = b.basis.ncols();
        let mut qthq = DMatrix::zeros(r, dim);
        for c in 0..r {
            for (a, &coord) in b.coords.iter().enumerate() {
                let w = b.basis[(a, c)];
                if w != 0.0 {
                    let mut row = qthq.row_mut(c);
                    row += hq.row(coord) * w;
                }
            }
        }
        m.rows_mut(off, r).copy_from(&(&b.compressed * qthq));
    }
    eigenvalues(m)
}

/// Eigenvalues of a general real matrix.
fn eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let a = faer::Mat::<f64>::from_fn(n, n, |r, c| m[(r, c)]);
    let values = a
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
    Ok(values.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

fn abscissa(spectrum: &[Complex<f64>]) -> f64 {
    let a = spectrum.iter().map(|z| z.re).fold(0.0, f64::max);
    if a < ABSCISSA_ZERO { 0.0 } else { a }
}

/// Nonzero part of the linearised spectrum of a rigid-body equilibrium.
pub fn momentum_spectrum(net: &Network, record: &EquilibriumRecord) -> Result<Vec<Complex<f64>>> {
    let (pi, lambda) = momentum_parts(record)?;
    let h = momentum_hessian(net, lambda);
    if let Some(spec) = collinear_spectrum(pi, &h) {
        return Ok(spec);
    }
    let blocks: Vec<RangeBlock> = pi
        .iter()
        .enumerate()
        .filter_map(|(i, p)| range_block((3 * i..3 * i + 3).collect(), DMatrix::from_column_slice(3, 3, p.cross_matrix().as_slice())))
        .collect();
    compressed_spectrum(&blocks, &h)
}

/// Nonzero part of the linearised spectrum of a heavy-top equilibrium.
pub fn position_spectrum(net: &Network, record: &EquilibriumRecord) -> Result<Vec<Complex<f64>>> {
    let (pi, gamma, lambda1, lambda2) = position_parts(record)?;
    let n = net.len();
    let h = position_hessian(net, lambda1, lambda2);
    let blocks: Vec<RangeBlock> = (0..n)
        .filter_map(|i| {
            let mut b = DMatrix::zeros(6, 6);
            let ph = pi[i].cross_matrix();
            let gh = gamma[i].cross_matrix();
            b.fixed_view_mut::<3, 3>(0, 0).copy_from(&ph);
            b.fixed_view_mut::<3, 3>(0, 3).copy_from(&gh);
            b.fixed_view_mut::<3, 3>(3, 0).copy_from(&gh);
            let coords = (3 * i..3 * i + 3).chain(3 * (n + i)..3 * (n + i) + 3).collect();
            range_block(coords, b)
        })
        .collect();
    compressed_spectrum(&blocks, &h)
}

/// Rigid-body equilibria whose momenta all lie on one line, with a Hessian
/// that does not couple the two transverse directions, reduce to an
/// eigenproblem of half the size: `omega^2` are the eigenvalues of
/// `-U S_qq U S_pp`, with `U` the signed momentum magnitudes and `S_pp`,
/// `S_qq` the Hessian restricted to the transverse axes `p`, `q`.
fn collinear_spectrum(pi: &[V3], h: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let scale = pi.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let axis = pi.iter().find(|p| p.norm() > 1e-8 * scale)?.normalize();
    let support: Vec<usize> = (0..pi.len()).filter(|&i| pi[i].norm() > 1e-12 * scale).collect();
    if support.iter().any(|&i| pi[i].cross(&axis).norm() > 1e-10 * scale) {
        return None;
    }
    let helper = if axis.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let p = axis.cross(&helper).normalize();
    let q = axis.cross(&p);
    let m = support.len();
    let hmax = h.abs().max();
    let proj = |i: usize, j: usize, a: &V3, b: &V3| -> f64 {
        let block: Matrix3<f64> = h.fixed_view::<3, 3>(3 * i, 3 * j).clone_owned();
        a.dot(&(block * b))
    };
    let mut spp = DMatrix::zeros(m, m);
    let mut sqq = DMatrix::zeros(m, m);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            if proj(i, j, &p, &q).abs() > 1e-13 * hmax || proj(i, j, &q, &p).abs() > 1e-13 * hmax {
                return None;
            }
            spp[(a, b)] = proj(i, j, &p, &p);
            sqq[(a, b)] = proj(i, j, &q, &q);
        }
    }
    let u: Vec<f64> = support.iter().map(|&i| pi[i].dot(&axis)).collect();
    let usq = DMatrix::from_fn(m, m, |a, b| -u[a] * sqq[(a, b)] * u[b]);
    let squares = eigenvalues(usq * spp).ok()?;
    Some(
        squares
            .iter()
            .flat_map(|nu| {
                let w = nu.sqrt();
                [w, -w]
            })
            .collect(),
    )
}

/// Spectral abscissa of an equilibrium, with `|Re| < 1e-8` reported as zero.
pub fn spectral_abscissa(net: &Network, record: &EquilibriumRecord) -> Result<f64> {
    let spectrum = match record.multipliers {
        Multipliers::Momentum { .. } => momentum_spectrum(net, record)?,
        Multipliers::Position { .. } => position_spectrum(net, record)?,
    };
    Ok(abscissa(&spectrum))
}

/// Which records a stability scan should visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSelection {
    #[default]
    All,
    /// One record per degenerate group.
    GroupRepresentatives,
    /// Lowest and highest records only.
    Extremal,
}

/// Fills `spectral_abscissa` for the selected records.
pub fn assess_stability(
    net: &Network,
    records: &mut [EquilibriumRecord],
    selection: RecordSelection,
    execution: Execution,
) -> Result<()> {
    let last = records.len().saturating_sub(1);
    let mut seen_groups = std::collections::HashSet::new();
    let chosen: Vec<usize> = (0..records.len())
        .filter(|&k| match selection {
            RecordSelection::All => true,
            RecordSelection::Extremal => k == 0 || k == last,
            RecordSelection::GroupRepresentatives => seen_groups.insert(records[k].group),
        })
        .collect();
    let values = exec::map_slice(execution, &chosen, |&k| spectral_abscissa(net, &records[k]));
    for (&k, v) in chosen.iter().zip(values) {
        records[k].spectral_abscissa = Some(v?);
    }
    Ok(())
}

/// Sign structure of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    PositiveSemidefinite { kernel: usize },
    NegativeSemidefinite { kernel: usize },
    Indefinite,
}

impl Definiteness {
    pub fn of(m: &DMatrix<f64>) -> (Definiteness, f64, f64) {
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        let min = eig.min();
        let max = eig.max();
        let tol = 1e-9 * min.abs().max(max.abs()).max(f64::MIN_POSITIVE);
        let pos = eig.iter().filter(|&&x| x > tol).count();
        let neg = eig.iter().filter(|&&x| x < -tol).count();
        let zero = eig.len() - pos - neg;
        let d = match (pos, neg, zero) {
            (_, 0, 0) => Definiteness::PositiveDefinite,
            (0, _, 0) => Definiteness::NegativeDefinite,
            (_, 0, k) => Definiteness::PositiveSemidefinite { kernel: k },
            (0, _, k) => Definiteness::NegativeSemidefinite { kernel: k },
            _ => Definiteness::Indefinite,
        };
        (d, min, max)
    }

    pub fn is_definite(self) -> bool {
        matches!(self, Definiteness::PositiveDefinite | Definiteness::NegativeDefinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCasimirVerdict {
    /// The augmented Hessian is definite: nonlinearly stable.
    Stable,
    /// Not definite, so the test says nothing.
    Inconclusive,
    /// The record sits in a degenerate group, where the test does not apply.
    Untested,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCasimirReport {
    pub definiteness: Definiteness,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// For heavy tops: whether the momentum block `I^-1` is positive definite.
    pub momentum_block_positive: bool,
    pub verdict: EnergyCasimirVerdict,
}

/// Energy-Casimir test for a rigid-body equilibrium with Casimir function
/// `Phi(1/2 |mu|^2)`, `curvature = Phi''`: checks the definiteness of
/// `(L - lambda_e) + Phi'' mu_e mu_e^T`.
pub fn energy_casimir_momentum(net: &Network, record: &EquilibriumRecord, curvature: f64) -> Result<EnergyCasimirReport> {
    let (_, lambda) = momentum_parts(record)?;
    let mut m = momentum_hessian(net, lambda);
    let mu = record.state.to_flat();
    m.ger(curvature, &mu, &mu, 1.0);
    let (definiteness, min, max) = Definiteness::of(&m);
    Ok(EnergyCasimirReport {
        definiteness,
        min_eigenvalue: min,
        max_eigenvalue: max,
        momentum_block_positive: true,
        verdict: verdict(record, definiteness.is_definite()),
    })
}

/// Energy-Casimir test for a heavy-top equilibrium: `I^-1` must be positive
/// definite and the Schur complement `L(lambda1) + lambda2 + c Gamma_e
/// Gamma_e^T` definite, with `c = curvature` the second derivative of the
/// Casimir function of `|Gamma|^2`.
pub fn energy_casimir_position(net: &Network, record: &EquilibriumRecord, curvature: f64) -> Result<EnergyCasimirReport> {
    let (_, gamma, lambda1, lambda2) = position_parts(record)?;
    let positive = (0..net.len()).all(|i| net.inertia_inv(i).cholesky().is_some());
    let mut m = position_laplacian(net, lambda1).matrix;
    for k in 0..m.nrows() {
        m[(k, k)] += lambda2;
    }
    let g = DVector::from_iterator(3 * gamma.len(), gamma.iter().flat_map(|v| v.iter().copied()));
    m.ger(curvature, &g, &g, 1.0);
    let (definiteness, min, max) = Definiteness::of(&m);
    Ok(EnergyCasimirReport {
        definiteness,
        min_eigenvalue: min,
        max_eigenvalue: max,
        momentum_block_positive: positive,
        verdict: verdict(record, positive && definiteness == Definiteness::PositiveDefinite),
    })
}

fn verdict(record: &EquilibriumRecord, definite: bool) -> EnergyCasimirVerdict {
    if record.multiplicity > 1 {
        EnergyCasimirVerdict::Untested
    } else if definite {
        EnergyCasimirVerdict::Stable
    } else {
        EnergyCasimirVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Tensor;
    use crate::model::{Coupling, rhs};

    fn diag(a: f64, b: f64, c: f64) -> Tensor {
        Tensor::from_diagonal(&V3::new(a, b, c))
    }

    fn fd_jacobian(net: &Network, state: &LatticeState) -> DMatrix<f64> {
        let x = state.to_flat();
        let n = x.len();
        let c = state.coupling();
        let h = 1e-6;
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = rhs(net, &LatticeState::from_flat(c, &xp)).to_flat();
            let fm = rhs(net, &LatticeState::from_flat(c, &xm)).to_flat();
            j.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn two_node_ferro_records() {
        let net = Network::from_edges(2, &[(0, 1)], Tensor::identity(), Tensor::identity()).unwrap();
        let recs = momentum_equilibria(&net, 1.0).unwrap();
        assert_eq!(recs.len(), 6);
        let ferro: Vec<_> = recs.iter().filter(|r| r.class == EquilibriumClass::Ferromagnetic).collect();
        assert_eq!(ferro.len(), 3);
        for r in ferro {
            assert!(r.multipliers.primary().abs() < 1e-14);
            let pi = r.state.pi();
            assert!((pi[0] - pi[1]).norm() < 1e-14);
            assert!((r.state.norm() - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn classification_cases() {
        let net = Network::lattice_2d(3, 3, true, Tensor::identity(), Tensor::identity()).unwrap();
        let ferro = vec![V3::new(0.0, 1.0, 0.0); 9];
        assert_eq!(classify(&net, &ferro).unwrap(), EquilibriumClass::Ferromagnetic);
        let mut af = vec![V3::zeros(); 9];
        af[0] = V3::x();
        af[1] = -V3::x();
        assert_eq!(classify(&net, &af).unwrap(), EquilibriumClass::AntiFerromagnetic);
        af[2] = V3::y();
        assert_eq!(classify(&net, &af).unwrap(), EquilibriumClass::Mixed);
        assert_eq!(classify(&net, &vec![V3::zeros(); 9]), Err(Error::ZeroState));
    }

    #[test]
    fn records_are_stationary_and_counted() {
        for (inertia, coupling) in [(Tensor::identity(), diag(1.0, 2.0, 3.0)), (diag(1.0, 2.0, 3.0), Tensor::identity())] {
            let net = Network::lattice_2d(6, 6, true, inertia, coupling).unwrap();
            for recs in [momentum_equilibria(&net, 0.5).unwrap(), position_equilibria(&net, 0.5, 1.0).unwrap()] {
                let ferro = recs.iter().filter(|r| r.class == EquilibriumClass::Ferromagnetic).count();
                let af = recs.iter().filter(|r| r.class == EquilibriumClass::AntiFerromagnetic).count();
                assert_eq!((ferro, af), (3, 3 * 35));
                for r in &recs {
                    assert!(rhs(&net, &r.state).norm() < 1e-8 * r.state.norm());
                }
            }
        }
    }

    #[test]
    fn momentum_linearization_matches_fd() {
        let net = Network::lattice_2d(3, 4, false, diag(1.0, 2.0, 3.0), diag(0.5, 1.0, 2.0)).unwrap();
        let recs = momentum_equilibria(&net, 1.0).unwrap();
        for r in recs.iter().step_by(5) {
            let j = linearize_momentum(&net, r).unwrap();
            assert!((j - fd_jacobian(&net, &r.state)).abs().max() < 1e-7);
        }
    }

    #[test]
    fn position_linearization_matches_fd() {
        let net = Network::lattice_2d(3, 3, true, diag(1.0, 2.0, 3.0), diag(1.5, 1.0, 0.7)).unwrap();
        let recs = position_equilibria(&net, 0.7, 2.0).unwrap();
        for r in recs.iter().step_by(4) {
            let j = linearize_position(&net, r).unwrap();
            assert!((j - fd_jacobian(&net, &r.state)).abs().max() < 1e-7);
        }
    }

    /// The compressed spectrum agrees with the full dense spectrum.
    #[test]
    fn compressed_abscissa_matches_dense() {
        let net = Network::lattice_2d(3, 3, true, diag(1.0, 2.0, 3.0), diag(1.5, 1.0, 0.7)).unwrap();
        let dense_abscissa = |j: DMatrix<f64>| abscissa(&eigenvalues(j).unwrap());
        for r in momentum_equilibria(&net, 1.0).unwrap() {
            let full = dense_abscissa(linearize_momentum(&net, &r).unwrap());
            let fast = spectral_abscissa(&net, &r).unwrap();
            assert!((full - fast).abs() < 1e-6, "{full} vs {fast}");
        }
        for r in position_equilibria(&net, 0.5, 1.0).unwrap() {
            let full = dense_abscissa(linearize_position(&net, &r).unwrap());
            let fast = spectral_abscissa(&net, &r).unwrap();
            assert!((full - fast).abs() < 1e-6, "{full} vs {fast}");
        }
    }

    /// The collinear reduction gives the same nonzero spectrum as the
    /// generic range compression.
    #[test]
    fn collinear_reduction_matches_generic() {
        let net = Network::lattice_2d(4, 3, true, diag(1.0, 2.0, 3.0), Tensor::identity()).unwrap();
        for r in momentum_equilibria(&net, 1.0).unwrap() {
            let (pi, lambda) = momentum_parts(&r).unwrap();
            let h = momentum_hessian(&net, lambda);
            let Some(fast) = collinear_spectrum(pi, &h) else { continue };
            let blocks: Vec<RangeBlock> = pi
                .iter()
                .enumerate()
                .filter_map(|(i, p)| range_block((3 * i..3 * i + 3).collect(), DMatrix::from_column_slice(3, 3, p.cross_matrix().as_slice())))
                .collect();
            let generic = compressed_spectrum(&blocks, &h).unwrap();
            assert!((abscissa(&fast) - abscissa(&generic)).abs() < 1e-6);
        }
    }

    #[test]
    fn lowest_record_passes_energy_casimir() {
        let net = Network::lattice_2d(4, 4, true, Tensor::identity(), diag(1.0, 2.0, 3.0)).unwrap();
        let recs = momentum_equilibria(&net, 0.5).unwrap();
        let low = &recs[0];
        assert_eq!(low.multiplicity, 1);
        let rep = energy_casimir_momentum(&net, low, 1.0).unwrap();
        assert_eq!(rep.verdict, EnergyCasimirVerdict::Stable);
        let flat = energy_casimir_momentum(&net, low, 0.0).unwrap();
        assert_eq!(flat.definiteness, Definiteness::PositiveSemidefinite { kernel: 1 });
        let high = recs.last().unwrap();
        let rep = energy_casimir_momentum(&net, high, -1.0).unwrap();
        assert_eq!(rep.definiteness, Definiteness::NegativeDefinite);
    }

    #[test]
    fn heavy_top_lowest_schur_complement_kernel() {
        let net = Network::lattice_2d(4, 4, true, diag(1.0, 2.0, 3.0), Tensor::identity()).unwrap();
        let recs = position_equilibria(&net, 0.5, 1.0).unwrap();
        let top = recs.last().unwrap();
        assert_eq!(top.multiplicity, 1);
        let rep = energy_casimir_position(&net, top, 0.0).unwrap();
        assert_eq!(rep.definiteness, Definiteness::PositiveSemidefinite { kernel: 1 });
        let rep = energy_casimir_position(&net, top, 1.0).unwrap();
        assert_eq!(rep.verdict, EnergyCasimirVerdict::Stable);
        assert!(spectral_abscissa(&net, top).unwrap() == 0.0);
    }

    #[test]
    fn state_roundtrip_of_records() {
        let net = Network::lattice_2d(3, 3, true, Tensor::identity(), Tensor::identity()).unwrap();
        let recs = position_equilibria(&net, 0.3, 1.0).unwrap();
        let x = recs[0].state.to_flat();
        assert_eq!(LatticeState::from_flat(Coupling::Position, &x), recs[0].state);
    }
}
