//! Kernels of the rotation algebra so(3).
//!
//! Algebra elements and their duals are both represented as 3-vectors; the
//! pairing between them is the Euclidean dot product.

use nalgebra::{Matrix3, Vector3};

/// Element of so(3) or of its dual, in body coordinates.
pub type AlgebraVector = Vector3<f64>;

/// Adjoint action: `ad(x, y) = x × y`.
#[inline]
pub fn ad(x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
    x.cross(y)
}

/// Coadjoint action of `x` on the dual element `m`: `coad(x, m) = m × x`.
#[inline]
pub fn coad(x: &AlgebraVector, m: &AlgebraVector) -> AlgebraVector {
    m.cross(x)
}

/// Duality pairing between a dual element and an algebra element.
#[inline]
pub fn pairing(m: &AlgebraVector, x: &AlgebraVector) -> f64 {
    m.dot(x)
}

/// Skew-symmetric matrix representing `w ↦ v × w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatMatrix(Matrix3<f64>);

impl HatMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix3<f64> {
        self.0
    }

    pub fn apply(&self, w: &AlgebraVector) -> AlgebraVector {
        self.0 * w
    }

    /// Recovers the vector the matrix was built from.
    pub fn vee(&self) -> AlgebraVector {
        Vector3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }
}

/// Builds the hat matrix of `v`.
pub fn hat(v: &AlgebraVector) -> HatMatrix {
    HatMatrix(v.cross_matrix())
}
