#include "soma/adapter.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "soma/svd.hpp"

namespace soma {

namespace {

void check_rank(const Matrix& w, std::size_t r) {
    const std::size_t k = std::min(w.rows(), w.cols());
    if (r < 1 || r > k) {
        throw std::invalid_argument("adapter init: rank " + std::to_string(r) +
                                    " out of range [1, " + std::to_string(k) + "] for " +
                                    shape_string(w));
    }
}

// b = U_range * sqrt(S_range), a = sqrt(S_range) * Vt_range; w_res by explicit
// subtraction of the computed product rather than spectral reconstruction.
LinearAdapter spectral_init(const Matrix& w, std::size_t r, bool minor, AdapterKind kind) {
    check_rank(w, r);
    const SvdFactors f = svd(w);
    const std::size_t k = f.k();
    const std::size_t lo = minor ? k - r : 0;

    LinearAdapter ad;
    ad.rank = r;
    ad.kind = kind;
    ad.b = Matrix(w.rows(), r);
    ad.a = Matrix(r, w.cols());
    for (std::size_t j = 0; j < r; ++j) {
        const std::size_t c = lo + j;
        const double root = std::sqrt(f.sigma[c]);
        for (std::size_t i = 0; i < w.rows(); ++i) ad.b(i, j) = f.u(i, c) * root;
        for (std::size_t i = 0; i < w.cols(); ++i) ad.a(j, i) = root * f.vt(c, i);
    }
    ad.w_res = w - matmul(ad.b, ad.a);
    ad.b0 = ad.b;
    ad.a0 = ad.a;
    return ad;
}

// [0, 1) from the top 53 bits, identical on every platform.
double unit_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::string to_string(AdapterKind kind) {
    switch (kind) {
        case AdapterKind::SoMA: return "soma";
        case AdapterKind::PiSSA: return "pissa";
        case AdapterKind::LoRA: return "lora";
        case AdapterKind::None: return "none";
    }
    return "none";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "soma") return AdapterKind::SoMA;
    if (s == "pissa") return AdapterKind::PiSSA;
    if (s == "lora") return AdapterKind::LoRA;
    if (s == "none") return AdapterKind::None;
    throw std::invalid_argument("unknown adapter kind: " + s);
}

LinearAdapter soma_init(const Matrix& w, std::size_t r) {
    return spectral_init(w, r, /*minor=*/true, AdapterKind::SoMA);
}

LinearAdapter pissa_init(const Matrix& w, std::size_t r) {
    return spectral_init(w, r, /*minor=*/false, AdapterKind::PiSSA);
}

LinearAdapter lora_init(const Matrix& w, std::size_t r, std::uint64_t seed) {
    check_rank(w, r);
    LinearAdapter ad;
    ad.rank = r;
    ad.kind = AdapterKind::LoRA;
    ad.w_res = w;
    ad.b = Matrix(w.rows(), r);  // zero
    ad.a = Matrix(r, w.cols());
    // Kaiming uniform on A: bound sqrt(6 / fan_in), fan_in = n.
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    std::mt19937_64 rng(seed);
    for (double& v : ad.a.data()) v = (2.0 * unit_double(rng) - 1.0) * bound;
    ad.b0 = ad.b;
    ad.a0 = ad.a;
    return ad;
}

LinearAdapter adapter_init(AdapterKind kind, const Matrix& w, std::size_t r, std::uint64_t seed) {
    switch (kind) {
        case AdapterKind::SoMA: return soma_init(w, r);
        case AdapterKind::PiSSA: return pissa_init(w, r);
        case AdapterKind::LoRA: return lora_init(w, r, seed);
        case AdapterKind::None: break;
    }
    throw std::invalid_argument("adapter_init: kind None carries no adapter");
}

Matrix adapter_forward(const LinearAdapter& ad, const Matrix& x) {
    if (x.rows() != ad.in_dim()) {
        throw std::invalid_argument("adapter_forward: input rows " + std::to_string(x.rows()) +
                                    " != layer input dim " + std::to_string(ad.in_dim()));
    }
    Matrix y = matmul(ad.w_res, x);
    Matrix low = matmul(ad.b, matmul(ad.a, x));
    if (ad.scale != 1.0) low *= ad.scale;
    y += low;
    return y;
}

MergedLinear merge(const LinearAdapter& ad) {
    Matrix ba = matmul(ad.b, ad.a);
    if (ad.scale != 1.0) ba *= ad.scale;
    return MergedLinear{ad.w_res + ba};
}

Matrix delta(const LinearAdapter& ad) {
    Matrix d = matmul(ad.b, ad.a) - matmul(ad.b0, ad.a0);
    if (ad.scale != 1.0) d *= ad.scale;
    return d;
}

std::size_t count_trainable(const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                            std::size_t r) {
    if (r < 1) throw std::invalid_argument("count_trainable: rank must be >= 1");
    std::size_t total = 0;
    for (const auto& [m, n] : shapes) total += r * (m + n);
    return total;
}

}  // namespace soma
