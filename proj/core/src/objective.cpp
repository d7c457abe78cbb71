#include "fedsg/objective.hpp"

#include <string>

#include "fedsg/error.hpp"

namespace fedsg {

namespace {

void check_shapes(const DataMatrix& u, const DataMatrix& v, const DataMatrix& x) {
  if (u.cols() != v.cols() || x.rows() != u.rows() || x.cols() != v.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "U " + std::to_string(u.rows()) + "x" + std::to_string(u.cols()) + ", X " +
                    std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + ", V " +
                    std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
  }
}

// R = X - U (U^T X V) V^T
DataMatrix residual(const DataMatrix& u, const DataMatrix& v, const DataMatrix& x) {
  const DataMatrix core = u.transpose() * (x * v);
  DataMatrix r = x;
  r.noalias() -= (u * core) * v.transpose();
  return r;
}

}  // namespace

FactorPair::FactorPair(GrassmannPoint u_in, GrassmannPoint v_in) : u(std::move(u_in)), v(std::move(v_in)) {
  if (u.k() != v.k()) {
    throw Error(ErrorCode::kShapeMismatch, "factor pair with different subspace dimensions");
  }
}

SigmaMatrix optimal_sigma(const GrassmannPoint& u, const DataMatrix& x, const GrassmannPoint& v) {
  check_shapes(u.basis(), v.basis(), x);
  return u.basis().transpose() * x * v.basis();
}

DataMatrix reconstruct(const GrassmannPoint& u, const DataMatrix& x, const GrassmannPoint& v) {
  const SigmaMatrix sigma = optimal_sigma(u, x, v);
  return (u.basis() * sigma) * v.basis().transpose();
}

double shard_loss(const DataMatrix& u, const DataMatrix& v, const DataMatrix& x) {
  check_shapes(u, v, x);
  return residual(u, v, x).squaredNorm();
}

double loss(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards) {
  double total = 0.0;
  for (const DataMatrix& x : shards) total += shard_loss(u, v, x);
  return total;
}

double loss(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards) {
  return loss(u.basis(), v.basis(), shards);
}

// f(U) = ||R||^2 with R = X - U U^T M, M = X V V^T:
//   df = -2 <R, dU U^T M + U dU^T M>  =>  grad = -2 (R M^T U + M R^T U).
// On the manifold the second term vanishes, leaving -2 (I - UU^T) X VV^T X^T U.
DataMatrix grad_u(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards) {
  DataMatrix g = DataMatrix::Zero(u.rows(), u.cols());
  for (const DataMatrix& x : shards) {
    check_shapes(u, v, x);
    const DataMatrix r = residual(u, v, x);
    const DataMatrix xv = x * v;
    const DataMatrix mt_u = v * (xv.transpose() * u);    // M^T U, B x k
    const DataMatrix rt_u = r.transpose() * u;           // R^T U, B x k
    g.noalias() += r * mt_u;
    g.noalias() += xv * (v.transpose() * rt_u);          // M R^T U
  }
  return -2.0 * g;
}

DataMatrix grad_u(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards) {
  return grad_u(u.basis(), v.basis(), shards);
}

// Transposed problem: ||X^T - V V^T N^T||^2 with N = U U^T X, so
//   grad = -2 (R^T N V + N^T R V).
DataMatrix grad_v(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards) {
  DataMatrix g = DataMatrix::Zero(v.rows(), v.cols());
  for (const DataMatrix& x : shards) {
    check_shapes(u, v, x);
    const DataMatrix r = residual(u, v, x);
    const DataMatrix ut_x = u.transpose() * x;           // k x B
    const DataMatrix n_v = u * (ut_x * v);               // N V, d x k
    const DataMatrix r_v = r * v;                        // d x k
    g.noalias() += r.transpose() * n_v;
    g.noalias() += ut_x.transpose() * (u.transpose() * r_v);  // N^T R V
  }
  return -2.0 * g;
}

DataMatrix grad_v(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards) {
  return grad_v(u.basis(), v.basis(), shards);
}

}  // namespace fedsg
