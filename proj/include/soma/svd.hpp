#pragma once

#include <cstddef>
#include <vector>

#include "soma/matrix.hpp"

namespace soma {

/// Full thin SVD of a real matrix: W = U diag(sigma) Vt with k = min(m, n),
/// sigma nonincreasing. Sign convention: the largest-magnitude entry of each
/// left singular vector is positive (ties broken by lowest row index), so
/// identical input bytes always yield identical factors.
struct SvdFactors {
    Matrix u;                   // m x k, orthonormal columns
    std::vector<double> sigma;  // length k, descending, >= 0
    Matrix vt;                  // k x n, orthonormal rows

    std::size_t k() const { return sigma.size(); }

    /// Count of singular values above the relative rank tolerance
    /// sigma[i] > 1e-12 * sigma[0].
    std::size_t numerical_rank() const;
};

/// Half-open index range [start, end) into the descending singular order.
struct ComponentRange {
    std::size_t start = 0;
    std::size_t end = 0;
};

/// One-sided Jacobi SVD, cyclic-by-row sweep order. Deterministic for
/// byte-identical inputs. Throws on non-convergence after the sweep cap,
/// carrying the final normalized off-diagonal measure.
SvdFactors svd(const Matrix& w);

/// Sum of sigma[i] * u_i * v_i^T over i in [range.start, range.end).
Matrix reconstruct(const SvdFactors& f, const ComponentRange& range);

}  // namespace soma
