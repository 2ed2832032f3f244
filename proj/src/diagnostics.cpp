#include "soma/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

namespace soma {

SmrReport smr_with_factors(const SvdFactors& f, const Matrix& delta_w) {
    if (f.u.rows() != delta_w.rows() || f.vt.cols() != delta_w.cols())
        throw std::invalid_argument("smr: shape mismatch between base factors and delta");
    if (f.sigma.empty() || f.sigma[0] == 0.0)
        throw std::invalid_argument("smr: base matrix has no spectrum");

    const std::size_t rank = f.numerical_rank();
    SmrReport rep;
    rep.excluded = f.k() - rank;
    rep.values.resize(rank);
    // dv = dW * v_i, then u_i . dv, per retained direction.
    for (std::size_t c = 0; c < rank; ++c) {
        double udv = 0.0;
        for (std::size_t i = 0; i < delta_w.rows(); ++i) {
            double dv = 0.0;
            for (std::size_t j = 0; j < delta_w.cols(); ++j) dv += delta_w(i, j) * f.vt(c, j);
            udv += f.u(i, c) * dv;
        }
        rep.values[c] = std::abs(udv) / f.sigma[c];
    }
    return rep;
}

SmrReport smr(const Matrix& w0, const Matrix& delta_w) {
    if (w0.rows() != delta_w.rows() || w0.cols() != delta_w.cols())
        throw std::invalid_argument("smr: shape mismatch " + shape_string(w0) + " vs " +
                                    shape_string(delta_w));
    return smr_with_factors(svd(w0), delta_w);
}

std::vector<double> group_smr(const std::vector<double>& values, std::size_t n_groups) {
    if (n_groups < 1) throw std::invalid_argument("group_smr: n_groups must be >= 1");
    if (values.empty()) return {};
    const std::size_t groups = std::min(n_groups, values.size());
    const std::size_t base = values.size() / groups;
    std::vector<double> means(groups, 0.0);
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        // last group absorbs the remainder
        const std::size_t len = (g + 1 == groups) ? values.size() - pos : base;
        double sum = 0.0;
        for (std::size_t i = 0; i < len; ++i) sum += values[pos + i];
        means[g] = sum / static_cast<double>(len);
        pos += len;
    }
    return means;
}

TruncationStudy truncation_study(const std::vector<Matrix*>& layers,
                                 const std::vector<ComponentRange>& ranges,
                                 const std::function<double()>& eval_fn) {
    std::vector<SvdFactors> factors;
    factors.reserve(layers.size());
    for (const Matrix* w : layers) {
        SvdFactors f = svd(*w);
        for (const auto& r : ranges) {
            if (r.start > r.end || r.end > f.k())
                throw std::invalid_argument("truncation_study: range invalid for layer " +
                                            shape_string(*w));
        }
        factors.push_back(std::move(f));
    }

    std::vector<Matrix> saved;
    saved.reserve(layers.size());
    for (const Matrix* w : layers) saved.push_back(*w);
    // restore on every exit path, including eval_fn throwing
    struct Restore {
        const std::vector<Matrix*>& layers;
        const std::vector<Matrix>& saved;
        ~Restore() {
            for (std::size_t i = 0; i < layers.size(); ++i) *layers[i] = saved[i];
        }
    } restore{layers, saved};

    TruncationStudy study;
    study.ranges = ranges;
    study.metric_before = eval_fn();
    for (const auto& range : ranges) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            *layers[i] = saved[i] - reconstruct(factors[i], range);
        }
        study.metric_after.push_back(eval_fn());
        study.labels.push_back("[" + std::to_string(range.start) + "," +
                               std::to_string(range.end) + ")");
        for (std::size_t i = 0; i < layers.size(); ++i) *layers[i] = saved[i];
    }
    return study;
}

}  // namespace soma
