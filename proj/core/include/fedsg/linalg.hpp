#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace fedsg {

// Dense real matrix, column-major (Eigen default). Columns are samples when
// the matrix holds data (d features x m records).
using DataMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace tolerance {
inline constexpr double kFeasibility = 1e-10;
inline constexpr double kRankThreshold = 1e-12;
inline constexpr double kSvdConvergence = 1e-10;
}  // namespace tolerance

/// Checks the DataMatrix invariants (positive dimensions, finite entries).
/// Throws Error{kInvalidArgument} on violation.
void require_valid(const DataMatrix& m, const char* what);

double frobenius_norm(const DataMatrix& m);

struct QrFactors {
  DataMatrix q;  // n x k, orthonormal columns
  DataMatrix r;  // k x k, upper triangular, positive diagonal
};

/// Thin Householder QR of an n x k matrix (n >= k).
///
/// The diagonal of r is made strictly positive by flipping the matching
/// column of q and row of r, so the factorization is a pure function of the
/// input. Throws Error{kRankDeficient} when some |r_jj| falls below
/// rank_threshold * ||m||_F.
QrFactors thin_qr(const DataMatrix& m, double rank_threshold = tolerance::kRankThreshold);

struct SvdTriple {
  DataMatrix u;  // rows x k
  Vector sigma;  // k, non-increasing, non-negative
  DataMatrix v;  // cols x k
};

inline constexpr int kJacobiMaxSweeps = 80;

/// Rank-k truncated SVD by one-sided (Hestenes) Jacobi rotations.
///
/// The full decomposition is computed on whichever of m / m^T is taller and
/// then truncated. Left singular vectors belonging to numerically zero
/// singular values are completed to an orthonormal set. Throws
/// Error{kConvergenceFailure} if the largest normalized column inner product
/// is still above tolerance::kSvdConvergence after kJacobiMaxSweeps sweeps.
SvdTriple truncated_svd(const DataMatrix& m, std::size_t k);

/// ||A^T A - I||_F
double orthonormality_defect(const DataMatrix& a);

}  // namespace fedsg
