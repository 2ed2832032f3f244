#include "soma/train.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "soma/rng.hpp"

namespace soma {

namespace {

void add_bias(Matrix& y, const std::vector<double>& bias) {
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias[i];
}

std::vector<double> bias_grad(const Matrix& g) {
    std::vector<double> db(g.rows(), 0.0);
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db[i] += g(i, j);
    return db;
}

// Gradients for one layer plus the gradient w.r.t. its input. Adapter layers
// get dB = G X^T A^T and dA = B^T G X^T.
Matrix layer_backward(const LinearLayer& layer, const Matrix& x, const Matrix& g,
                      LayerGrads& out, bool need_dx) {
    if (!layer.frozen) {
        out.present = true;
        if (layer.adapter) {
            const LinearAdapter& ad = *layer.adapter;
            Matrix gxt = matmul(g, x.transposed());
            if (ad.scale != 1.0) gxt *= ad.scale;
            out.db = matmul(gxt, ad.a.transposed());
            out.da = matmul(ad.b.transposed(), gxt);
        } else {
            out.dw = matmul(g, x.transposed());
        }
        if (layer.train_bias) out.dbias = bias_grad(g);
    }
    if (!need_dx) return {};
    if (layer.adapter) {
        const LinearAdapter& ad = *layer.adapter;
        Matrix dx = matmul(ad.w_res.transposed(), g);
        Matrix low = matmul(ad.a.transposed(), matmul(ad.b.transposed(), g));
        if (ad.scale != 1.0) low *= ad.scale;
        dx += low;
        return dx;
    }
    return matmul(layer.w.transposed(), g);
}

Matrix apply_gelu(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = gelu(x.data()[i]);
    return y;
}

void fnv1a(std::uint64_t& h, std::span<const double> values) {
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
}

void hash_layer(std::uint64_t& h, const LinearLayer& layer) {
    fnv1a(h, layer.w.data());
    fnv1a(h, layer.bias);
    if (layer.adapter) {
        fnv1a(h, layer.adapter->w_res.data());
        fnv1a(h, layer.adapter->b.data());
        fnv1a(h, layer.adapter->a.data());
    }
}

void merge_layer(LinearLayer& layer) {
    if (layer.adapter) {
        layer.w = merge(*layer.adapter).w;
        layer.adapter.reset();
    }
}

}  // namespace

Matrix LinearLayer::forward(const Matrix& x) const {
    Matrix y = adapter ? adapter_forward(*adapter, x) : matmul(w, x);
    add_bias(y, bias);
    return y;
}

Matrix LinearLayer::effective_weight() const {
    return adapter ? merge(*adapter).w : w;
}

double gelu(double x) {
    const double c = 0.7978845608028654;  // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

BlockModel make_block_model(std::size_t d_in, std::size_t d_model, std::size_t d_hidden,
                            std::size_t n_blocks, std::size_t n_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto make_layer = [&](std::size_t out, std::size_t in) {
        LinearLayer layer;
        layer.w = Matrix(out, in);
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : layer.w.data()) v = gaussian(rng) * std_dev;
        layer.bias.assign(out, 0.0);
        return layer;
    };
    BlockModel model;
    model.embed = make_layer(d_model, d_in);
    model.blocks.resize(n_blocks);
    for (auto& block : model.blocks) {
        block.lin1 = make_layer(d_hidden, d_model);
        block.lin2 = make_layer(d_model, d_hidden);
    }
    model.head = make_layer(n_classes, d_model);
    return model;
}

Matrix forward(const BlockModel& model, const Matrix& x, ForwardCache* cache) {
    if (x.rows() != model.d_in())
        throw std::invalid_argument("forward: input rows " + std::to_string(x.rows()) +
                                    " != d_in " + std::to_string(model.d_in()));
    if (cache) {
        cache->input = x;
        cache->blocks.clear();
    }
    Matrix h = model.embed.forward(x);
    for (const Block& block : model.blocks) {
        Matrix pre = block.lin1.forward(h);
        Matrix act = apply_gelu(pre);
        Matrix out = block.lin2.forward(act);
        if (cache) cache->blocks.push_back({h, std::move(pre), act});
        h += out;
    }
    if (cache) cache->head_in = h;
    return model.head.forward(h);
}

std::pair<double, Matrix> loss_and_grad(const Matrix& logits,
                                        const std::vector<std::size_t>& labels) {
    const std::size_t batch = logits.cols();
    if (labels.size() != batch)
        throw std::invalid_argument("loss_and_grad: label count != batch");
    const std::size_t classes = logits.rows();
    Matrix grad(classes, batch);
    double loss = 0.0;
    for (std::size_t c = 0; c < batch; ++c) {
        if (labels[c] >= classes)
            throw std::invalid_argument("loss_and_grad: label " + std::to_string(labels[c]) +
                                        " out of range for " + std::to_string(classes) +
                                        " classes");
        double mx = logits(0, c);
        for (std::size_t i = 1; i < classes; ++i) mx = std::max(mx, logits(i, c));
        double sum = 0.0;
        for (std::size_t i = 0; i < classes; ++i) sum += std::exp(logits(i, c) - mx);
        loss += std::log(sum) + mx - logits(labels[c], c);
        const double inv = 1.0 / static_cast<double>(batch);
        for (std::size_t i = 0; i < classes; ++i)
            grad(i, c) = std::exp(logits(i, c) - mx) / sum * inv;
        grad(labels[c], c) -= inv;
    }
    return {loss / static_cast<double>(batch), grad};
}

Gradients backward(const BlockModel& model, const ForwardCache& cache, const Matrix& dlogits) {
    if (cache.blocks.size() != model.blocks.size())
        throw std::invalid_argument("backward: cache does not match model");
    Gradients grads;
    grads.blocks.resize(model.blocks.size());

    Matrix d = layer_backward(model.head, cache.head_in, dlogits, grads.head, true);
    for (std::size_t bi = model.blocks.size(); bi-- > 0;) {
        const Block& block = model.blocks[bi];
        const BlockCache& bc = cache.blocks[bi];
        Matrix d_act = layer_backward(block.lin2, bc.act, d, grads.blocks[bi].second, true);
        Matrix d_pre(d_act.rows(), d_act.cols());
        for (std::size_t i = 0; i < d_act.size(); ++i)
            d_pre.data()[i] = d_act.data()[i] * gelu_grad(bc.pre_act.data()[i]);
        Matrix d_in = layer_backward(block.lin1, bc.block_in, d_pre, grads.blocks[bi].first, true);
        d += d_in;  // residual path
    }
    layer_backward(model.embed, cache.input, d, grads.embed, false);
    return grads;
}

std::string to_string(AwdSchedule s) {
    switch (s) {
        case AwdSchedule::Cosine: return "cosine";
        case AwdSchedule::Constant: return "constant";
        case AwdSchedule::Off: return "off";
    }
    return "off";
}

AwdSchedule awd_schedule_from_string(const std::string& s) {
    if (s == "cosine") return AwdSchedule::Cosine;
    if (s == "constant") return AwdSchedule::Constant;
    if (s == "off") return AwdSchedule::Off;
    throw std::invalid_argument("unknown awd schedule: " + s);
}

std::string to_string(DecayReference r) {
    return r == DecayReference::Zero ? "zero" : "init";
}

DecayReference decay_reference_from_string(const std::string& s) {
    if (s == "zero") return DecayReference::Zero;
    if (s == "init") return DecayReference::Init;
    throw std::invalid_argument("unknown decay reference: " + s);
}

double awd_coefficient(std::size_t t, std::size_t total_steps, double wd0, AwdSchedule schedule) {
    switch (schedule) {
        case AwdSchedule::Constant: return wd0;
        case AwdSchedule::Off: return 0.0;
        case AwdSchedule::Cosine: break;
    }
    if (total_steps == 0) return wd0;
    const double frac = static_cast<double>(t) / static_cast<double>(total_steps);
    return wd0 * 0.5 * (1.0 + std::cos(3.141592653589793 * frac));
}

void for_each_trainable(
    BlockModel& model, const Gradients* grads,
    const std::function<void(const std::string&, std::span<double>, std::span<const double>, bool)>&
        f) {
    auto visit = [&](LinearLayer& layer, const LayerGrads* lg, const std::string& name,
                     bool backbone) {
        if (layer.frozen) return;
        const std::span<const double> none;
        if (layer.adapter) {
            f(name + ".b", layer.adapter->b.data(), lg ? std::span<const double>(lg->db.data()) : none,
              backbone);
            f(name + ".a", layer.adapter->a.data(), lg ? std::span<const double>(lg->da.data()) : none,
              backbone);
        } else {
            f(name + ".w", layer.w.data(), lg ? std::span<const double>(lg->dw.data()) : none,
              backbone);
        }
        if (layer.train_bias)
            f(name + ".bias", layer.bias, lg ? std::span<const double>(lg->dbias) : none, backbone);
    };
    visit(model.embed, grads ? &grads->embed : nullptr, "embed", true);
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const std::string base = "block" + std::to_string(i);
        visit(model.blocks[i].lin1, grads ? &grads->blocks[i].first : nullptr, base + ".lin1", true);
        visit(model.blocks[i].lin2, grads ? &grads->blocks[i].second : nullptr, base + ".lin2",
              true);
    }
    visit(model.head, grads ? &grads->head : nullptr, "head", false);
}

void adamw_step(BlockModel& model, const Gradients& grads, OptimizerState& opt,
                const TrainConfig& cfg, std::size_t t, std::size_t total_steps) {
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    const double decay = awd_coefficient(t, total_steps, cfg.wd0, cfg.awd);

    std::size_t idx = 0;
    for_each_trainable(
        model, &grads,
        [&](const std::string& name, std::span<double> value, std::span<const double> grad,
            bool backbone) {
            if (grad.size() != value.size())
                throw std::runtime_error("adamw_step: gradient missing for " + name);
            for (double g : grad) {
                if (!std::isfinite(g))
                    throw std::runtime_error("adamw_step: non-finite gradient in " + name);
            }
            if (!opt.initialized) {
                opt.m.emplace_back(value.size(), 0.0);
                opt.v.emplace_back(value.size(), 0.0);
                opt.init.emplace_back(value.begin(), value.end());
            }
            if (idx >= opt.m.size() || opt.m[idx].size() != value.size())
                throw std::runtime_error("adamw_step: optimizer state mismatch for " + name);
            auto& m = opt.m[idx];
            auto& v = opt.v[idx];
            const auto& init = opt.init[idx];
            const double lr_eff = backbone ? cfg.lr * cfg.backbone_lr_mult : cfg.lr;
            for (std::size_t i = 0; i < value.size(); ++i) {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= lr_eff * mhat / (std::sqrt(vhat) + opt.eps);
                if (decay != 0.0) {
                    const double ref =
                        cfg.decay_reference == DecayReference::Init ? init[i] : 0.0;
                    value[i] -= decay * lr_eff * (value[i] - ref);
                }
            }
            ++idx;
        });
    opt.initialized = true;
}

void apply_freeze_policy(BlockModel& model, const TrainConfig& cfg) {
    if (cfg.nfeb > model.blocks.size())
        throw std::invalid_argument("apply_freeze_policy: nfeb exceeds block count");
    auto freeze = [](LinearLayer& layer) {
        layer.frozen = true;
        layer.adapter.reset();
    };
    freeze(model.embed);
    std::size_t layer_idx = 0;
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        Block& block = model.blocks[i];
        if (i < cfg.nfeb) {
            freeze(block.lin1);
            freeze(block.lin2);
            continue;
        }
        auto wrap = [&](LinearLayer& layer, bool target) {
            layer.adapter.reset();
            layer.train_bias = cfg.train_bias;
            if (cfg.kind == AdapterKind::None) {
                layer.frozen = false;
                return;
            }
            if (!target) {
                layer.frozen = true;
                return;
            }
            layer.frozen = false;
            layer.adapter =
                adapter_init(cfg.kind, layer.w, cfg.rank, derive_seed(cfg.seed, layer_idx));
            layer.adapter->scale = cfg.lora_scale;
        };
        wrap(block.lin1, cfg.adapt_lin1);
        ++layer_idx;
        wrap(block.lin2, cfg.adapt_lin2);
        ++layer_idx;
    }
    model.head.frozen = false;
    model.head.train_bias = true;
    model.head.adapter.reset();
}

TrainResult train_loop(BlockModel& model, const TaskDataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw std::invalid_argument("train_loop: empty dataset");
    if (cfg.steps < 1) throw std::invalid_argument("train_loop: steps must be >= 1");

    const std::size_t n = data.size();
    const std::size_t batch = std::min(cfg.batch, n);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xda7aULL));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle_deterministic(order, rng);
    std::size_t pos = 0;

    OptimizerState opt;
    TrainResult result;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        if (pos + batch > n) {
            shuffle_deterministic(order, rng);
            pos = 0;
        }
        Matrix x(model.d_in(), batch);
        std::vector<std::size_t> labels(batch);
        for (std::size_t c = 0; c < batch; ++c) {
            const std::size_t s = order[pos + c];
            for (std::size_t i = 0; i < model.d_in(); ++i) x(i, c) = data.features(i, s);
            labels[c] = data.labels[s];
        }
        pos += batch;

        ForwardCache cache;
        Matrix logits = forward(model, x, &cache);
        auto [loss, dlogits] = loss_and_grad(logits, labels);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_loop: loss diverged at step " + std::to_string(t));
        Gradients grads = backward(model, cache, dlogits);
        adamw_step(model, grads, opt, cfg, t, cfg.steps);
        result.loss_trace.push_back(loss);
    }
    return result;
}

double accuracy(const BlockModel& model, const TaskDataset& data) {
    if (data.size() == 0) return 0.0;
    Matrix logits = forward(model, data.features);
    std::size_t correct = 0;
    for (std::size_t c = 0; c < data.size(); ++c) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.rows(); ++i)
            if (logits(i, c) > logits(best, c)) best = i;
        if (best == data.labels[c]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

BlockModel merged_copy(const BlockModel& model) {
    BlockModel out = model;
    merge_layer(out.embed);
    for (Block& block : out.blocks) {
        merge_layer(block.lin1);
        merge_layer(block.lin2);
    }
    merge_layer(out.head);
    return out;
}

std::uint64_t block_weight_hash(const BlockModel& model, std::size_t block_index) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    hash_layer(h, model.blocks.at(block_index).lin1);
    hash_layer(h, model.blocks.at(block_index).lin2);
    return h;
}

std::uint64_t model_weight_hash(const BlockModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    hash_layer(h, model.embed);
    for (const Block& block : model.blocks) {
        hash_layer(h, block.lin1);
        hash_layer(h, block.lin2);
    }
    hash_layer(h, model.head);
    return h;
}

}  // namespace soma
