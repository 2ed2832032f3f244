#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soma/matrix.hpp"

namespace soma {

enum class AdapterKind {
    SoMA,   // minor singular components trainable
    PiSSA,  // principal components trainable
    LoRA,   // random A, zero B
    None,   // full fine-tuning of W itself
};

std::string to_string(AdapterKind kind);
AdapterKind adapter_kind_from_string(const std::string& s);

/// Low-rank adapter over a frozen base weight: the layer computes
/// (w_res + b*a) x. (b0, a0) are the frozen initial factors, so the update
/// contributed by training is b*a - b0*a0.
struct LinearAdapter {
    Matrix w_res;  // m x n, frozen
    Matrix b;      // m x r, trainable
    Matrix a;      // r x n, trainable
    Matrix b0;     // frozen copy of b at init
    Matrix a0;     // frozen copy of a at init
    std::size_t rank = 0;
    AdapterKind kind = AdapterKind::None;
    double scale = 1.0;  // multiplier on b*a; default 1, no alpha/r scaling

    std::size_t out_dim() const { return w_res.rows(); }
    std::size_t in_dim() const { return w_res.cols(); }
};

struct MergedLinear {
    Matrix w;
};

LinearAdapter soma_init(const Matrix& w, std::size_t r);
LinearAdapter pissa_init(const Matrix& w, std::size_t r);
LinearAdapter lora_init(const Matrix& w, std::size_t r, std::uint64_t seed);

/// Dispatch on kind; LoRA draws from `seed`, the spectral kinds ignore it.
LinearAdapter adapter_init(AdapterKind kind, const Matrix& w, std::size_t r, std::uint64_t seed);

/// w_res*x + b*(a*x); the b*a product is never materialized.
Matrix adapter_forward(const LinearAdapter& ad, const Matrix& x);

MergedLinear merge(const LinearAdapter& ad);

/// Trained update b*a - b0*a0 (for LoRA just b*a, since b0 = 0).
Matrix delta(const LinearAdapter& ad);

/// Sum of r*(m+n) over the given weight shapes.
std::size_t count_trainable(const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                            std::size_t r);

}  // namespace soma
