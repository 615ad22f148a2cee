//! Network states, Hamiltonians, conservative vector fields and the
//! Casimir-preserving dissipative corrections.
//!
//! Two couplings are supported:
//!
//! * momentum coupling (rigid-body network), `h = 1/2 <Pi, L Pi>` with `L`
//!   the momentum Laplacian;
//! * position coupling (heavy-top network), `h = 1/2 sum Pi.I^-1 Pi - 1/2
//!   <Gamma, A Gamma>` with `A` the normalised block adjacency.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;

type V3 = Vector3<f64>;

/// Which interaction the network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Momentum,
    Position,
}

/// Phase-space point of the whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeState {
    Momentum { pi: Vec<V3> },
    HeavyTop { pi: Vec<V3>, gamma: Vec<V3> },
}

impl LatticeState {
    pub fn coupling(&self) -> Coupling {
        match self {
            LatticeState::Momentum { .. } => Coupling::Momentum,
            LatticeState::HeavyTop { .. } => Coupling::Position,
        }
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.pi().len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi().is_empty()
    }

    pub fn pi(&self) -> &[V3] {
        match self {
            LatticeState::Momentum { pi } | LatticeState::HeavyTop { pi, .. } => pi,
        }
    }

    pub fn gamma(&self) -> Option<&[V3]> {
        match self {
            LatticeState::Momentum { .. } => None,
            LatticeState::HeavyTop { gamma, .. } => Some(gamma),
        }
    }

    /// Checks that the state fits the network.
    pub fn check(&self, net: &Network) -> Result<()> {
        let ok = match self {
            LatticeState::Momentum { pi } => pi.len() == net.len(),
            LatticeState::HeavyTop { pi, gamma } => pi.len() == net.len() && gamma.len() == net.len(),
        };
        if !ok {
            return Err(Error::StateMismatch(format!("state has {} nodes, network has {}", self.len(), net.len())));
        }
        if !self.is_finite() {
            return Err(Error::StateMismatch("state contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.vectors().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// All 3-vectors of the state: momenta first, then positions.
    pub fn vectors(&self) -> impl Iterator<Item = &V3> {
        let (pi, gamma): (&[V3], &[V3]) = match self {
            LatticeState::Momentum { pi } => (pi, &[]),
            LatticeState::HeavyTop { pi, gamma } => (pi, gamma),
        };
        pi.iter().chain(gamma.iter())
    }

    fn vectors_mut(&mut self) -> impl Iterator<Item = &mut V3> {
        let (pi, gamma): (&mut [V3], &mut [V3]) = match self {
            LatticeState::Momentum { pi } => (pi, &mut []),
            LatticeState::HeavyTop { pi, gamma } => (pi, gamma),
        };
        pi.iter_mut().chain(gamma.iter_mut())
    }

    /// Euclidean norm of the stacked state vector.
    pub fn norm(&self) -> f64 {
        self.vectors().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &LatticeState) -> LatticeState {
        let mut out = self.clone();
        out.add_scaled(a, other);
        out
    }

    /// `self += a * other` in place.
    pub fn add_scaled(&mut self, a: f64, other: &LatticeState) {
        debug_assert_eq!(self.coupling(), other.coupling());
        for (x, y) in self.vectors_mut().zip(other.vectors()) {
            *x += y * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.vectors_mut() {
            *x *= a;
        }
    }

    /// Node average of the order-parameter field: momenta for the
    /// rigid-body network, positions for the heavy-top network.
    pub fn magnetisation(&self) -> V3 {
        let field = match self {
            LatticeState::Momentum { pi } => pi,
            LatticeState::HeavyTop { gamma, .. } => gamma,
        };
        field.iter().sum::<V3>() / field.len().max(1) as f64
    }

    /// Order-parameter field: momenta or positions.
    pub fn order_field(&self) -> &[V3] {
        match self {
            LatticeState::Momentum { pi } => pi,
            LatticeState::HeavyTop { gamma, .. } => gamma,
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(self.vectors().count() * 3, self.vectors().flat_map(|v| v.iter().copied()))
    }

    /// Inverse of [`LatticeState::to_flat`].
    pub fn from_flat(coupling: Coupling, x: &DVector<f64>) -> LatticeState {
        let vecs: Vec<V3> = x.as_slice().chunks_exact(3).map(|c| V3::new(c[0], c[1], c[2])).collect();
        match coupling {
            Coupling::Momentum => LatticeState::Momentum { pi: vecs },
            Coupling::Position => {
                let n = vecs.len() / 2;
                LatticeState::HeavyTop { pi: vecs[..n].to_vec(), gamma: vecs[n..].to_vec() }
            }
        }
    }

    pub fn zeros_like(&self) -> LatticeState {
        let mut z = self.clone();
        z.scale(0.0);
        z
    }
}

/// Per-node Casimir values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CasimirLevels {
    /// `1/2 |Pi_i|^2`.
    Momentum { c: Vec<f64> },
    /// `Pi_i . Gamma_i` and `|Gamma_i|^2`.
    HeavyTop { c1: Vec<f64>, c2: Vec<f64> },
}

impl CasimirLevels {
    pub fn of(state: &LatticeState) -> CasimirLevels {
        match state {
            LatticeState::Momentum { pi } => CasimirLevels::Momentum { c: pi.iter().map(|p| 0.5 * p.norm_squared()).collect() },
            LatticeState::HeavyTop { pi, gamma } => CasimirLevels::HeavyTop {
                c1: pi.iter().zip(gamma).map(|(p, g)| p.dot(g)).collect(),
                c2: gamma.iter().map(|g| g.norm_squared()).collect(),
            },
        }
    }

    /// Sum over nodes of the first Casimir.
    pub fn total(&self) -> f64 {
        match self {
            CasimirLevels::Momentum { c } => c.iter().sum(),
            CasimirLevels::HeavyTop { c1, .. } => c1.iter().sum(),
        }
    }

    /// Sum over nodes of `|Gamma_i|^2`, if present.
    pub fn total_secondary(&self) -> Option<f64> {
        match self {
            CasimirLevels::Momentum { .. } => None,
            CasimirLevels::HeavyTop { c2, .. } => Some(c2.iter().sum()),
        }
    }

    /// Largest per-node deviation from `reference`, relative to the
    /// reference magnitude (absolute when the reference value is tiny).
    pub fn max_relative_drift(&self, reference: &CasimirLevels) -> f64 {
        let rel = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, r)| (x - r).abs() / r.abs().max(1e-12)).fold(0.0, f64::max)
        };
        match (self, reference) {
            (CasimirLevels::Momentum { c }, CasimirLevels::Momentum { c: r }) => rel(c, r),
            (CasimirLevels::HeavyTop { c1, c2 }, CasimirLevels::HeavyTop { c1: r1, c2: r2 }) => {
                // c1 may legitimately sit at zero; measure it against the orbit scale instead.
                let d1 = c1
                    .iter()
                    .zip(r1)
                    .zip(r2)
                    .map(|((x, r), s)| (x - r).abs() / r.abs().max(*s).max(1e-12))
                    .fold(0.0, f64::max);
                d1.max(rel(c2, r2))
            }
            _ => f64::INFINITY,
        }
    }
}

/// Energy of the rigid-body network, `1/2 <Pi, L Pi>`.
pub fn rb_hamiltonian(net: &Network, pi: &[V3]) -> f64 {
    (0..net.len())
        .map(|i| 0.5 * pi[i].dot(&(net.inertia_inv(i) * pi[i] - net.coupling_field_at(i, pi))))
        .sum()
}

/// Energy of the heavy-top network.
pub fn ht_hamiltonian(net: &Network, pi: &[V3], gamma: &[V3]) -> f64 {
    (0..net.len())
        .map(|i| 0.5 * pi[i].dot(&(net.inertia_inv(i) * pi[i])) - 0.5 * gamma[i].dot(&net.coupling_field_at(i, gamma)))
        .sum()
}

/// Energy of either network.
pub fn energy(net: &Network, state: &LatticeState) -> f64 {
    match state {
        LatticeState::Momentum { pi } => rb_hamiltonian(net, pi),
        LatticeState::HeavyTop { pi, gamma } => ht_hamiltonian(net, pi, gamma),
    }
}

/// Conservative rigid-body field `Pi_i x (L Pi)_i`.
pub fn rb_rhs(net: &Network, pi: &[V3]) -> Vec<V3> {
    (0..net.len())
        .map(|i| pi[i].cross(&(net.inertia_inv(i) * pi[i] - net.coupling_field_at(i, pi))))
        .collect()
}

/// Conservative heavy-top field; returns the momentum and position rates.
pub fn ht_rhs(net: &Network, pi: &[V3], gamma: &[V3]) -> (Vec<V3>, Vec<V3>) {
    (0..net.len())
        .map(|i| {
            let omega = net.inertia_inv(i) * pi[i];
            let chi = net.coupling_field_at(i, gamma);
            (pi[i].cross(&omega) - gamma[i].cross(&chi), gamma[i].cross(&omega))
        })
        .unzip()
}

/// Conservative field of either network.
pub fn rhs(net: &Network, state: &LatticeState) -> LatticeState {
    drift(net, state, 0.0)
}

/// Unscaled rigid-body dissipation `Pi_i x (Pi_i x (L Pi)_i)`.
///
/// Scaled by `theta >= 0` it decreases the energy at rate
/// `theta * sum |Pi_i x (L Pi)_i|^2` while keeping every `|Pi_i|` fixed.
pub fn rb_dissipation(net: &Network, pi: &[V3]) -> Vec<V3> {
    rb_rhs(net, pi).iter().zip(pi).map(|(r, p)| p.cross(r)).collect()
}

/// Unscaled heavy-top dissipation.
///
/// With `m = Gamma x Omega` and `n = Pi x Omega - Gamma x chi` (the two
/// conservative rates, `chi` the interaction field) the correction is
/// `(-(m x Gamma + n x Pi), -(n x Gamma))`. Both Casimirs are preserved and
/// the energy decreases at rate `theta (|m|^2 + |n|^2)`.
pub fn ht_dissipation(net: &Network, pi: &[V3], gamma: &[V3]) -> (Vec<V3>, Vec<V3>) {
    let (n, m) = ht_rhs(net, pi, gamma);
    (0..net.len())
        .map(|i| (-(m[i].cross(&gamma[i]) + n[i].cross(&pi[i])), -n[i].cross(&gamma[i])))
        .unzip()
}

/// Unscaled dissipation of either network.
pub fn dissipation(net: &Network, state: &LatticeState) -> LatticeState {
    match state {
        LatticeState::Momentum { pi } => LatticeState::Momentum { pi: rb_dissipation(net, pi) },
        LatticeState::HeavyTop { pi, gamma } => {
            let (p, g) = ht_dissipation(net, pi, gamma);
            LatticeState::HeavyTop { pi: p, gamma: g }
        }
    }
}

/// Deterministic drift `rhs + theta * dissipation`, fused into one pass.
pub fn drift(net: &Network, state: &LatticeState, theta: f64) -> LatticeState {
    let mut out = state.zeros_like();
    drift_into(net, state, theta, &mut out);
    out
}

/// As [`drift`], writing into a preallocated state of the same shape.
pub fn drift_into(net: &Network, state: &LatticeState, theta: f64, out: &mut LatticeState) {
    match (state, out) {
        (LatticeState::Momentum { pi }, LatticeState::Momentum { pi: dpi }) => {
            for i in 0..net.len() {
                let grad = net.inertia_inv(i) * pi[i] - net.coupling_field_at(i, pi);
                let r = pi[i].cross(&grad);
                dpi[i] = r + pi[i].cross(&r) * theta;
            }
        }
        (LatticeState::HeavyTop { pi, gamma }, LatticeState::HeavyTop { pi: dpi, gamma: dgamma }) => {
            for i in 0..net.len() {
                let omega = net.inertia_inv(i) * pi[i];
                let chi = net.coupling_field_at(i, gamma);
                let m = gamma[i].cross(&omega);
                let n = pi[i].cross(&omega) - gamma[i].cross(&chi);
                dpi[i] = n - (m.cross(&gamma[i]) + n.cross(&pi[i])) * theta;
                dgamma[i] = m - n.cross(&gamma[i]) * theta;
            }
        }
        _ => panic!("drift output must have the same variant as the state"),
    }
}

/// Rate of energy loss per unit `theta` produced by the dissipation.
pub fn dissipation_rate(net: &Network, state: &LatticeState) -> f64 {
    match state {
        LatticeState::Momentum { pi } => rb_rhs(net, pi).iter().map(|r| r.norm_squared()).sum(),
        LatticeState::HeavyTop { pi, gamma } => {
            let (n, m) = ht_rhs(net, pi, gamma);
            n.iter().chain(m.iter()).map(|r| r.norm_squared()).sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Tensor, momentum_laplacian};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(a: f64, b: f64, c: f64) -> Tensor {
        Tensor::from_diagonal(&V3::new(a, b, c))
    }

    fn random_vecs(rng: &mut ChaCha8Rng, n: usize) -> Vec<V3> {
        (0..n)
            .map(|_| V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn small_net() -> Network {
        Network::lattice_2d(4, 3, true, diag(1.0, 2.0, 3.0), diag(0.7, 1.1, 1.9))
            .unwrap()
            .with_node_inertia(5, diag(2.0, 1.5, 0.8))
            .unwrap()
            .with_edge_coupling(0, 1, diag(0.3, 0.4, 2.0))
            .unwrap()
    }

    #[test]
    fn single_body_energy() {
        let net = Network::from_edges(1, &[], diag(1.0, 2.0, 3.0), Tensor::identity()).unwrap();
        assert_eq!(rb_hamiltonian(&net, &[V3::x()]), 0.5);
    }

    #[test]
    fn two_node_ferro_is_stationary() {
        let net = Network::from_edges(2, &[(0, 1)], Tensor::identity(), Tensor::identity()).unwrap();
        let v = V3::new(0.3, -0.2, 0.9);
        let r = rb_rhs(&net, &[v, v]);
        assert!(r.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn isolated_heavy_top_has_no_interaction() {
        let net = Network::from_edges(1, &[], diag(1.0, 2.0, 3.0), Tensor::identity()).unwrap();
        let pi = [V3::new(0.1, 0.2, 0.3)];
        let gamma = [V3::new(0.0, 0.0, 1.0)];
        let (dp, dg) = ht_rhs(&net, &pi, &gamma);
        let omega = net.inertia_inv(0) * pi[0];
        assert_eq!(dp[0], pi[0].cross(&omega));
        assert_eq!(dg[0], gamma[0].cross(&omega));
    }

    #[test]
    fn dense_laplacian_energy_matches() {
        let net = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pi = random_vecs(&mut rng, net.len());
        let flat = LatticeState::Momentum { pi: pi.clone() }.to_flat();
        let dense = 0.5 * flat.dot(&(momentum_laplacian(&net).matrix * &flat));
        assert!((dense - rb_hamiltonian(&net, &pi)).abs() < 1e-13);
    }

    /// The energy gradient obtained by central differences is the `(L Pi)` or
    /// `(Omega, -chi)` used in the vector fields.
    #[test]
    fn fields_are_lie_poisson_with_fd_gradient() {
        let net = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pi = random_vecs(&mut rng, net.len());
        let gamma = random_vecs(&mut rng, net.len());
        let state = LatticeState::HeavyTop { pi: pi.clone(), gamma: gamma.clone() };
        let x = state.to_flat();
        let h = 1e-6;
        let mut grad = DVector::zeros(x.len());
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            grad[k] = (energy(&net, &LatticeState::from_flat(Coupling::Position, &xp))
                - energy(&net, &LatticeState::from_flat(Coupling::Position, &xm)))
                / (2.0 * h);
        }
        let n = net.len();
        let (dp, dg) = ht_rhs(&net, &pi, &gamma);
        for i in 0..n {
            let gp = V3::new(grad[3 * i], grad[3 * i + 1], grad[3 * i + 2]);
            let gg = V3::new(grad[3 * (n + i)], grad[3 * (n + i) + 1], grad[3 * (n + i) + 2]);
            // Pi' = Pi x dh/dPi + Gamma x dh/dGamma, Gamma' = Gamma x dh/dPi.
            assert!((dp[i] - (pi[i].cross(&gp) + gamma[i].cross(&gg))).norm() < 1e-8);
            assert!((dg[i] - gamma[i].cross(&gp)).norm() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn rb_energy_and_casimirs_conserved_by_rhs(seed in 0u64..500) {
            let net = small_net();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = random_vecs(&mut rng, net.len());
            let r = rb_rhs(&net, &pi);
            let grad = net.apply_momentum_laplacian(&pi);
            let dh: f64 = grad.iter().zip(&r).map(|(g, x)| g.dot(x)).sum();
            prop_assert!(dh.abs() < 1e-12);
            prop_assert!(pi.iter().zip(&r).all(|(p, x)| p.dot(x).abs() < 1e-13));
        }

        #[test]
        fn rb_dissipation_decreases_energy(seed in 0u64..500) {
            let net = small_net();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = random_vecs(&mut rng, net.len());
            let d = rb_dissipation(&net, &pi);
            let grad = net.apply_momentum_laplacian(&pi);
            let dh: f64 = grad.iter().zip(&d).map(|(g, x)| g.dot(x)).sum();
            let rate = dissipation_rate(&net, &LatticeState::Momentum { pi: pi.clone() });
            prop_assert!(dh <= 1e-14);
            prop_assert!((dh + rate).abs() < 1e-12 * (1.0 + rate));
            prop_assert!(pi.iter().zip(&d).all(|(p, x)| p.dot(x).abs() < 1e-13));
        }

        #[test]
        fn ht_fields_preserve_casimirs_and_dissipate(seed in 0u64..500) {
            let net = small_net();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = random_vecs(&mut rng, net.len());
            let gamma = random_vecs(&mut rng, net.len());
            let (rp, rg) = ht_rhs(&net, &pi, &gamma);
            let (dp, dg) = ht_dissipation(&net, &pi, &gamma);
            let chi = net.coupling_field(&gamma);
            let mut dh_rhs = 0.0;
            let mut dh_diss = 0.0;
            for i in 0..net.len() {
                let omega = net.inertia_inv(i) * pi[i];
                dh_rhs += omega.dot(&rp[i]) - chi[i].dot(&rg[i]);
                dh_diss += omega.dot(&dp[i]) - chi[i].dot(&dg[i]);
                for (fp, fg) in [(rp[i], rg[i]), (dp[i], dg[i])] {
                    prop_assert!((gamma[i].dot(&fp) + pi[i].dot(&fg)).abs() < 1e-12);
                    prop_assert!(gamma[i].dot(&fg).abs() < 1e-12);
                }
            }
            let rate = dissipation_rate(&net, &LatticeState::HeavyTop { pi, gamma });
            prop_assert!(dh_rhs.abs() < 1e-12);
            prop_assert!((dh_diss + rate).abs() < 1e-12 * (1.0 + rate));
        }

        #[test]
        fn fused_drift_matches_parts(seed in 0u64..200, theta in 0.0..3.0f64) {
            let net = small_net();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = LatticeState::HeavyTop { pi: random_vecs(&mut rng, net.len()), gamma: random_vecs(&mut rng, net.len()) };
            let parts = rhs(&net, &s).axpy(theta, &dissipation(&net, &s));
            let fused = drift(&net, &s, theta);
            prop_assert!(parts.axpy(-1.0, &fused).norm() < 1e-13);
        }
    }
}
