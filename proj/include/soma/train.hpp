#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "soma/adapter.hpp"
#include "soma/matrix.hpp"

namespace soma {

/// One linear layer of the toy backbone. Exactly one of three states:
/// frozen-plain, trainable-plain, or adapter-wrapped (w then keeps the
/// original base weight and the adapter owns the effective one).
struct LinearLayer {
    Matrix w;                  // m x n base weight
    std::vector<double> bias;  // length m
    bool frozen = false;
    bool train_bias = true;
    std::optional<LinearAdapter> adapter;

    std::size_t out_dim() const { return w.rows(); }
    std::size_t in_dim() const { return w.cols(); }

    Matrix forward(const Matrix& x) const;
    /// w, or w_res + b*a when adapter-wrapped.
    Matrix effective_weight() const;
};

struct Block {
    LinearLayer lin1;  // d -> h
    LinearLayer lin2;  // h -> d
};

/// Residual MLP stack: embed, then blocks computing x + lin2(gelu(lin1(x))),
/// then a linear classifier head.
struct BlockModel {
    LinearLayer embed;  // d_in -> d
    std::vector<Block> blocks;
    LinearLayer head;  // d -> n_classes

    std::size_t d_in() const { return embed.in_dim(); }
    std::size_t d_model() const { return embed.out_dim(); }
    std::size_t n_classes() const { return head.out_dim(); }
};

BlockModel make_block_model(std::size_t d_in, std::size_t d_model, std::size_t d_hidden,
                            std::size_t n_blocks, std::size_t n_classes, std::uint64_t seed);

double gelu(double x);
double gelu_grad(double x);

struct BlockCache {
    Matrix block_in;
    Matrix pre_act;  // lin1 output
    Matrix act;      // gelu(pre_act)
};

struct ForwardCache {
    Matrix input;
    std::vector<BlockCache> blocks;
    Matrix head_in;
};

Matrix forward(const BlockModel& model, const Matrix& x, ForwardCache* cache = nullptr);

/// Mean softmax cross-entropy and its logit gradient (softmax - onehot)/batch.
std::pair<double, Matrix> loss_and_grad(const Matrix& logits,
                                        const std::vector<std::size_t>& labels);

struct LayerGrads {
    bool present = false;  // false for frozen layers
    Matrix dw;             // trainable-plain
    Matrix db, da;         // adapter factors
    std::vector<double> dbias;
};

struct Gradients {
    LayerGrads embed;
    std::vector<std::pair<LayerGrads, LayerGrads>> blocks;  // (lin1, lin2)
    LayerGrads head;
};

Gradients backward(const BlockModel& model, const ForwardCache& cache, const Matrix& dlogits);

enum class AwdSchedule { Cosine, Constant, Off };
enum class DecayReference { Zero, Init };

std::string to_string(AwdSchedule s);
AwdSchedule awd_schedule_from_string(const std::string& s);
std::string to_string(DecayReference r);
DecayReference decay_reference_from_string(const std::string& s);

struct TrainConfig {
    AdapterKind kind = AdapterKind::SoMA;
    std::size_t rank = 4;
    std::size_t nfeb = 0;  // number of frozen early blocks
    double lr = 1e-3;
    double backbone_lr_mult = 0.5;
    double wd0 = 0.01;
    AwdSchedule awd = AwdSchedule::Cosine;
    std::size_t steps = 200;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    bool adapt_lin1 = true;
    bool adapt_lin2 = true;
    DecayReference decay_reference = DecayReference::Zero;
    bool train_bias = true;
    double lora_scale = 1.0;
};

/// wd(t): cosine wd0*(1+cos(pi*t/T))/2, constant wd0, or 0.
double awd_coefficient(std::size_t t, std::size_t total_steps, double wd0, AwdSchedule schedule);

struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    // first/second moments per parameter, keyed by parameter name
    std::vector<std::vector<double>> m, v;
    std::vector<std::vector<double>> init;  // reference values for DecayReference::Init
    bool initialized = false;
};

/// Decoupled AdamW with bias correction. Backbone tensors use
/// lr*backbone_lr_mult, the head uses lr. The decay term is
/// awd(t)*lr_eff*(theta - ref). Frozen tensors are untouched.
void adamw_step(BlockModel& model, const Gradients& grads, OptimizerState& opt,
                const TrainConfig& cfg, std::size_t t, std::size_t total_steps);

/// Freezes embed and the first nfeb blocks; wraps the remaining blocks'
/// target layers per cfg.kind (None leaves them trainable-plain). The head is
/// always trainable.
void apply_freeze_policy(BlockModel& model, const TrainConfig& cfg);

struct TaskDataset {
    Matrix features;  // d_in x N
    std::vector<std::size_t> labels;
    std::vector<std::size_t> domain_ids;

    std::size_t size() const { return labels.size(); }
};

struct TrainResult {
    std::vector<double> loss_trace;
};

TrainResult train_loop(BlockModel& model, const TaskDataset& data, const TrainConfig& cfg);

double accuracy(const BlockModel& model, const TaskDataset& data);

/// Folds every adapter into a plain weight; the result has no adapters.
BlockModel merged_copy(const BlockModel& model);

/// FNV-1a over the exact weight bytes of one block (both layers + biases).
std::uint64_t block_weight_hash(const BlockModel& model, std::size_t block_index);
std::uint64_t model_weight_hash(const BlockModel& model);

/// Visits every trainable tensor in a fixed order:
/// f(name, values, grads-or-null, is_backbone).
void for_each_trainable(
    BlockModel& model, const Gradients* grads,
    const std::function<void(const std::string&, std::span<double>, std::span<const double>, bool)>&
        f);

}  // namespace soma
