#include "fedsg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fedsg/error.hpp"

namespace fedsg {

void require_valid(const DataMatrix& m, const char* what) {
  if (m.rows() <= 0 || m.cols() <= 0) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " has an empty dimension");
  }
  if (!m.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " contains NaN or Inf");
  }
}

double frobenius_norm(const DataMatrix& m) {
  // Scaled accumulation so large entries do not overflow the sum of squares.
  double scale = 0.0;
  double ssq = 1.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double a = std::abs(m(i, j));
      if (a == 0.0) continue;
      if (scale < a) {
        ssq = 1.0 + ssq * (scale / a) * (scale / a);
        scale = a;
      } else {
        ssq += (a / scale) * (a / scale);
      }
    }
  }
  return scale * std::sqrt(ssq);
}

QrFactors thin_qr(const DataMatrix& m, double rank_threshold) {
  const Eigen::Index n = m.rows();
  const Eigen::Index k = m.cols();
  if (n < k || k == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "thin_qr needs rows >= cols > 0, got " + std::to_string(n) + "x" + std::to_string(k));
  }

  const double norm = frobenius_norm(m);
  DataMatrix work = m;
  std::vector<Vector> reflectors;
  std::vector<double> betas;
  reflectors.reserve(static_cast<std::size_t>(k));
  betas.reserve(static_cast<std::size_t>(k));

  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index len = n - j;
    Vector v = work.col(j).tail(len);
    const double alpha = v.norm();
    double beta = 0.0;
    if (alpha > 0.0) {
      const double sign = v(0) >= 0.0 ? 1.0 : -1.0;
      v(0) += sign * alpha;
      const double vnorm2 = v.squaredNorm();
      beta = 2.0 / vnorm2;
      auto block = work.bottomRightCorner(len, k - j);
      const Eigen::RowVectorXd w = v.transpose() * block;
      block.noalias() -= beta * v * w;
    }
    reflectors.push_back(std::move(v));
    betas.push_back(beta);
  }

  DataMatrix r = work.topRows(k).triangularView<Eigen::Upper>();

  // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of I.
  DataMatrix q = DataMatrix::Identity(n, k);
  for (Eigen::Index j = k - 1; j >= 0; --j) {
    const double beta = betas[static_cast<std::size_t>(j)];
    if (beta == 0.0) continue;
    const Vector& v = reflectors[static_cast<std::size_t>(j)];
    auto block = q.bottomRows(n - j);
    const Eigen::RowVectorXd w = v.transpose() * block;
    block.noalias() -= beta * v * w;
  }

  for (Eigen::Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) {
      r.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  }

  for (Eigen::Index j = 0; j < k; ++j) {
    if (norm == 0.0 || std::abs(r(j, j)) < rank_threshold * norm) {
      throw Error(ErrorCode::kRankDeficient,
                  "column " + std::to_string(j) + " is numerically dependent (|r_jj| = " +
                      std::to_string(std::abs(r(j, j))) + ")");
    }
  }
  return {std::move(q), std::move(r)};
}

namespace {

struct JacobiResult {
  DataMatrix left;   // tall x n, columns = sigma_j * u_j
  DataMatrix right;  // n x n, orthogonal
};

// One-sided Jacobi on a tall matrix (rows >= cols): A V = U S.
JacobiResult one_sided_jacobi(DataMatrix a) {
  const Eigen::Index n = a.cols();
  DataMatrix v = DataMatrix::Identity(n, n);
  constexpr double kRotateThreshold = 1e-15;

  double worst = 0.0;
  for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (alpha == 0.0 || beta == 0.0) continue;
        const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, ratio);
        if (ratio <= kRotateThreshold) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return {std::move(a), std::move(v)};
  }
  if (worst > tolerance::kSvdConvergence) {
    throw Error(ErrorCode::kConvergenceFailure,
                "Jacobi SVD did not converge in " + std::to_string(kJacobiMaxSweeps) +
                    " sweeps (residual coupling " + std::to_string(worst) + ")");
  }
  return {std::move(a), std::move(v)};
}

// Fills columns of u flagged in `missing` with an orthonormal completion.
void complete_basis(DataMatrix& u, const std::vector<bool>& missing) {
  const Eigen::Index rows = u.rows();
  Eigen::Index candidate = 0;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    while (candidate < rows) {
      Vector e = Vector::Unit(rows, candidate++);
      // Two passes of Gram-Schmidt against every filled column.
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < u.cols(); ++i) {
          if (i == j || (missing[static_cast<std::size_t>(i)] && i > j)) continue;
          e -= u.col(i).dot(e) * u.col(i);
        }
      }
      const double norm = e.norm();
      if (norm > 1e-6) {
        u.col(j) = e / norm;
        break;
      }
    }
  }
}

}  // namespace

SvdTriple truncated_svd(const DataMatrix& m, std::size_t k) {
  require_valid(m, "truncated_svd input");
  const auto kk = static_cast<Eigen::Index>(k);
  if (kk == 0 || kk > std::min(m.rows(), m.cols())) {
    throw Error(ErrorCode::kInvalidArgument,
                "truncated_svd rank " + std::to_string(k) + " outside [1, min(rows, cols)]");
  }

  const bool transposed = m.rows() < m.cols();
  JacobiResult jr = transposed ? one_sided_jacobi(m.transpose()) : one_sided_jacobi(m);

  const Eigen::Index n = jr.left.cols();
  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = jr.left.col(j).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  const double largest = norms(order.front());
  const double zero_cut = largest * static_cast<double>(std::max(m.rows(), m.cols())) * 1e-15;

  DataMatrix tall_u(jr.left.rows(), kk);
  DataMatrix short_v(n, kk);
  Vector sigma(kk);
  std::vector<bool> missing(static_cast<std::size_t>(kk), false);
  for (Eigen::Index j = 0; j < kk; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    sigma(j) = norms(src);
    short_v.col(j) = jr.right.col(src);
    if (sigma(j) > zero_cut) {
      tall_u.col(j) = jr.left.col(src) / sigma(j);
    } else {
      sigma(j) = 0.0;
      tall_u.col(j).setZero();
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  complete_basis(tall_u, missing);

  if (transposed) return {std::move(short_v), std::move(sigma), std::move(tall_u)};
  return {std::move(tall_u), std::move(sigma), std::move(short_v)};
}

double orthonormality_defect(const DataMatrix& a) {
  return (a.transpose() * a - DataMatrix::Identity(a.cols(), a.cols())).norm();
}

}  // namespace fedsg
