#pragma once

#include <span>

#include "fedsg/grassmann.hpp"

namespace fedsg {

/// The shared global model: U on G(d, k) and V on G(B, k).
struct FactorPair {
  GrassmannPoint u;
  GrassmannPoint v;

  FactorPair(GrassmannPoint u_in, GrassmannPoint v_in);
};

/// k x k, not necessarily diagonal.
using SigmaMatrix = DataMatrix;

/// Closed-form minimizer of ||X - U S V^T||_F^2 over S: U^T X V.
SigmaMatrix optimal_sigma(const GrassmannPoint& u, const DataMatrix& x, const GrassmannPoint& v);

/// U U^T X V V^T.
DataMatrix reconstruct(const GrassmannPoint& u, const DataMatrix& x, const GrassmannPoint& v);

// The objective is sum_i ||X_i - U U^T X_i V V^T||_F^2, the form obtained by
// substituting the optimal sigma. The DataMatrix overloads evaluate it for
// arbitrary (not necessarily orthonormal) U, V; gradients are exact for
// that unconstrained expression, so they can be checked by finite
// differences in any ambient direction.

double loss(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards);
double loss(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards);

/// Single-shard term ||X - U U^T X V V^T||_F^2.
double shard_loss(const DataMatrix& u, const DataMatrix& v, const DataMatrix& x);

DataMatrix grad_u(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards);
DataMatrix grad_u(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards);

DataMatrix grad_v(const GrassmannPoint& u, const GrassmannPoint& v, std::span<const DataMatrix> shards);
DataMatrix grad_v(const DataMatrix& u, const DataMatrix& v, std::span<const DataMatrix> shards);

}  // namespace fedsg
