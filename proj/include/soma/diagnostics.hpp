#pragma once

#include <functional>
#include <string>
#include <vector>

#include "soma/matrix.hpp"
#include "soma/svd.hpp"

namespace soma {

/// Per-direction interference of a weight update with the base spectrum:
/// values[i] = |u_i^T dW v_i| / sigma_i in descending-sigma order. Directions
/// whose sigma falls below the rank tolerance are excluded (counted in
/// `excluded`) instead of producing near-infinite ratios.
struct SmrReport {
    std::vector<double> values;
    std::vector<double> group_means;
    std::size_t n_groups = 0;
    std::size_t excluded = 0;
};

SmrReport smr(const Matrix& w0, const Matrix& delta_w);

/// Reuses an already-computed spectrum of w0 (truncation studies and layer
/// sweeps hit the same SVD many times).
SmrReport smr_with_factors(const SvdFactors& f, const Matrix& delta_w);

/// Contiguous equal partition of `values`, group 0 = largest singular values.
/// If n_groups does not divide the length, the last group absorbs the
/// remainder.
std::vector<double> group_smr(const std::vector<double>& values, std::size_t n_groups);

struct TruncationStudy {
    std::vector<ComponentRange> ranges;
    double metric_before = 0.0;
    std::vector<double> metric_after;
    std::vector<std::string> labels;
};

/// For each range, every selected weight W is replaced by W - reconstruct(range)
/// (the chosen component group removed), eval_fn is run, and the weights are
/// restored bit-exactly — also when eval_fn throws.
TruncationStudy truncation_study(const std::vector<Matrix*>& layers,
                                 const std::vector<ComponentRange>& ranges,
                                 const std::function<double()>& eval_fn);

}  // namespace soma
