#include "fedsg/grassmann.hpp"

#include <string>

#include "fedsg/error.hpp"

namespace fedsg {

namespace {

std::string shape(const DataMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

GrassmannPoint::GrassmannPoint(DataMatrix basis) : basis_(std::move(basis)) {
  if (basis_.cols() <= 0 || basis_.cols() >= basis_.rows()) {
    throw Error(ErrorCode::kInfeasiblePoint, "Grassmann basis must satisfy 0 < k < n, got " + shape(basis_));
  }
  const double defect = orthonormality_defect(basis_);
  if (!(defect <= kFeasibilityTolerance)) {
    throw Error(ErrorCode::kInfeasiblePoint,
                "basis is not orthonormal (||B^T B - I||_F = " + std::to_string(defect) + ")");
  }
}

DataMatrix project_tangent(const GrassmannPoint& a, const DataMatrix& g) {
  const DataMatrix& basis = a.basis();
  if (g.rows() != basis.rows() || g.cols() != basis.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                "tangent projection of " + shape(g) + " at a " + shape(basis) + " point");
  }
  // Never form the n x n projector.
  const DataMatrix coeffs = basis.transpose() * g;
  DataMatrix t = g;
  t.noalias() -= basis * coeffs;
  return t;
}

GrassmannPoint retract(const DataMatrix& m) {
  return GrassmannPoint(thin_qr(m).q);
}

GrassmannPoint riemannian_step(const GrassmannPoint& a, const DataMatrix& euclidean_grad, double eta) {
  if (!(eta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step size must be positive");
  }
  DataMatrix moved = a.basis();
  moved.noalias() -= eta * project_tangent(a, euclidean_grad);
  return retract(moved);
}

DataMatrix procrustes_rotation(const DataMatrix& basis, const DataMatrix& target) {
  if (basis.rows() != target.rows() || basis.cols() != target.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "procrustes of " + shape(basis) + " onto " + shape(target));
  }
  const DataMatrix cross = basis.transpose() * target;
  const SvdTriple svd = truncated_svd(cross, static_cast<std::size_t>(cross.cols()));
  return svd.u * svd.v.transpose();
}

double projector_distance(const DataMatrix& a, const DataMatrix& b) {
  return (a * a.transpose() - b * b.transpose()).norm();
}

}  // namespace fedsg
