#include "soma/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace soma {

namespace {

constexpr double kJacobiTol = 1e-14;
constexpr int kSweepCap = 60;
constexpr double kZeroSigma = 1e-290;  // below this a column carries no direction

// One-sided Jacobi for m >= n. Returns unsorted thin factors; U columns with
// zero norm are filled by deterministic Gram-Schmidt against the rest so U is
// always orthonormal.
void jacobi_core(const Matrix& a, Matrix& u, std::vector<double>& sigma, Matrix& v) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix b = a;
    v = Matrix::identity(n);

    bool converged = false;
    double off = 0.0;
    for (int sweep = 0; sweep < kSweepCap; ++sweep) {
        off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    app += bp * bp;
                    aqq += bq * bq;
                    apq += bp * bq;
                }
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0) continue;
                off = std::max(off, std::abs(apq) / denom);
                if (std::abs(apq) <= kJacobiTol * denom) continue;

                const double tau = (aqq - app) / (2.0 * apq);
                const double t =
                    (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (off <= kJacobiTol) {
            converged = true;
            break;
        }
    }
    if (!converged && n > 1) {
        throw std::runtime_error("svd: Jacobi sweeps did not converge, off-diagonal measure " +
                                 std::to_string(off));
    }

    sigma.assign(n, 0.0);
    u = Matrix(m, n);
    std::vector<std::size_t> dead;
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += b(i, j) * b(i, j);
        norm = std::sqrt(norm);
        sigma[j] = norm;
        if (norm > kZeroSigma) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = b(i, j) / norm;
        } else {
            sigma[j] = 0.0;
            dead.push_back(j);
        }
    }

    // Fill dead columns from canonical basis vectors, orthogonalized against
    // everything already in U. Deterministic: first basis vector with enough
    // residual wins.
    std::size_t next_basis = 0;
    for (std::size_t j : dead) {
        for (; next_basis < m; ++next_basis) {
            std::vector<double> cand(m, 0.0);
            cand[next_basis] = 1.0;
            for (std::size_t col = 0; col < n; ++col) {
                if (sigma[col] == 0.0 && col >= j) continue;  // not yet filled
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, col);
                for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, col);
            }
            double norm = 0.0;
            for (double x : cand) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / norm;
                ++next_basis;
                break;
            }
        }
    }
}

void apply_sign_convention(Matrix& u, Matrix& vt) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) > std::abs(u(best, j))) best = i;
        }
        if (u(best, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < vt.cols(); ++i) vt(j, i) = -vt(j, i);
        }
    }
}

}  // namespace

std::size_t SvdFactors::numerical_rank() const {
    if (sigma.empty()) return 0;
    const double cutoff = 1e-12 * sigma[0];
    std::size_t r = 0;
    while (r < sigma.size() && sigma[r] > cutoff) ++r;
    return r;
}

SvdFactors svd(const Matrix& w) {
    if (w.empty()) throw std::invalid_argument("svd: empty matrix");
    for (double x : w.data()) {
        if (!std::isfinite(x)) throw std::invalid_argument("svd: non-finite entry");
    }

    Matrix u, v;
    std::vector<double> sig;
    const bool wide = w.rows() < w.cols();
    if (!wide) {
        jacobi_core(w, u, sig, v);
    } else {
        // W = (V' S U'^T)^T of the transposed problem.
        Matrix ut, vt_side;
        jacobi_core(w.transposed(), ut, sig, vt_side);
        u = vt_side;
        v = ut;
    }

    const std::size_t k = sig.size();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sig[a] > sig[b]; });

    SvdFactors f;
    f.sigma.resize(k);
    f.u = Matrix(w.rows(), k);
    f.vt = Matrix(k, w.cols());
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t src = order[j];
        f.sigma[j] = sig[src];
        for (std::size_t i = 0; i < w.rows(); ++i) f.u(i, j) = u(i, src);
        for (std::size_t i = 0; i < w.cols(); ++i) f.vt(j, i) = v(i, src);
    }
    apply_sign_convention(f.u, f.vt);
    return f;
}

Matrix reconstruct(const SvdFactors& f, const ComponentRange& range) {
    if (range.start > range.end || range.end > f.k()) {
        throw std::invalid_argument("reconstruct: invalid range [" +
                                    std::to_string(range.start) + ", " +
                                    std::to_string(range.end) + ") for k=" +
                                    std::to_string(f.k()));
    }
    Matrix out(f.u.rows(), f.vt.cols());
    for (std::size_t c = range.start; c < range.end; ++c) {
        const double s = f.sigma[c];
        for (std::size_t i = 0; i < out.rows(); ++i) {
            const double su = s * f.u(i, c);
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += su * f.vt(c, j);
        }
    }
    return out;
}

}  // namespace soma
