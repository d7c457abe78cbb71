#pragma once

#include "fedsg/linalg.hpp"

namespace fedsg {

/// A point on the Grassmann manifold G(n, k), held by an orthonormal
/// n x k representative. Two points whose bases differ by a right k x k
/// orthogonal factor denote the same subspace.
class GrassmannPoint {
 public:
  static constexpr double kFeasibilityTolerance = 1e-8;

  /// Validates k < n and ||B^T B - I||_F <= kFeasibilityTolerance.
  /// Throws Error{kInfeasiblePoint} otherwise.
  explicit GrassmannPoint(DataMatrix basis);

  const DataMatrix& basis() const noexcept { return basis_; }
  Eigen::Index n() const noexcept { return basis_.rows(); }
  Eigen::Index k() const noexcept { return basis_.cols(); }

  friend bool operator==(const GrassmannPoint& a, const GrassmannPoint& b) {
    return a.basis_ == b.basis_;
  }

 private:
  DataMatrix basis_;
};

/// (I - A A^T) g. Throws Error{kShapeMismatch}.
DataMatrix project_tangent(const GrassmannPoint& a, const DataMatrix& g);

/// QR retraction: the Q factor of thin_qr(m). Throws Error{kRankDeficient}.
GrassmannPoint retract(const DataMatrix& m);

/// retract(A - eta * project_tangent(A, euclidean_grad)).
GrassmannPoint riemannian_step(const GrassmannPoint& a, const DataMatrix& euclidean_grad, double eta);

/// Orthogonal k x k factor Q minimizing ||basis * Q - target||_F.
DataMatrix procrustes_rotation(const DataMatrix& basis, const DataMatrix& target);

/// ||A A^T - B B^T||_F, zero iff both bases span the same subspace.
double projector_distance(const DataMatrix& a, const DataMatrix& b);

}  // namespace fedsg
