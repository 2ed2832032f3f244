#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "soma/train.hpp"

namespace soma {

/// One synthetic domain: a fixed rotation of random 2-D feature subspaces,
/// a global scale, an additive per-feature style offset, and sample noise.
struct DomainSpec {
    std::size_t domain_id = 0;
    double rotation = 0.0;  // radians, base angle of the subspace rotations
    double scale = 1.0;
    std::vector<double> style_shift;
    double noise = 0.0;
    std::uint64_t seed = 0;  // picks the rotated subspaces
};

struct BenchProtocol {
    std::size_t n_domains = 8;
    std::size_t n_classes = 16;
    std::size_t d_in = 64;
    std::size_t n_per_class = 40;

    std::size_t d_model = 48;
    std::size_t d_hidden = 96;
    std::size_t n_blocks = 4;

    std::size_t pretrain_domains = 5;  // domains [0, pretrain_domains) are the "foundation" data
    std::size_t source_domain = 5;     // fine-tuning source; the rest are unseen targets

    std::uint64_t master_seed = 0;
    std::size_t n_seeds = 10;
    std::size_t smr_groups = 4;
    double eval_fraction = 0.25;

    std::size_t pretrain_steps = 800;
    double pretrain_lr = 3e-3;

    TrainConfig finetune;  // per-method fields (kind/awd/nfeb) overridden by the ladder
};

BenchProtocol default_protocol();

struct RunReport {
    std::string method;
    AdapterKind kind = AdapterKind::None;
    std::size_t rank = 0;
    std::size_t nfeb = 0;
    double source_acc = 0.0;
    std::vector<std::size_t> target_domains;
    std::vector<double> target_acc;
    double retention_acc = 0.0;
    std::vector<double> smr_group_means;  // averaged over probed layers
    std::size_t smr_excluded = 0;
    std::size_t trainable_param_count = 0;
    std::uint64_t seed = 0;
};

std::vector<DomainSpec> make_domain_specs(std::size_t n_domains, std::size_t d_in,
                                          std::uint64_t master_seed);

/// Class prototypes are drawn once from the master seed; each domain then
/// transforms prototype-conditioned samples through its DomainSpec. Samples
/// are emitted class-round-robin so any prefix split stays class-balanced.
std::vector<TaskDataset> gen_domains(std::size_t n_domains, std::size_t n_classes,
                                     std::size_t d_in, std::size_t n_per_class,
                                     std::uint64_t master_seed);

/// Dataset generated by an explicit spec list (the default path derives specs
/// from the master seed).
std::vector<TaskDataset> gen_domains_with_specs(const std::vector<DomainSpec>& specs,
                                                std::size_t n_classes, std::size_t d_in,
                                                std::size_t n_per_class,
                                                std::uint64_t master_seed);

std::pair<TaskDataset, TaskDataset> split_dataset(const TaskDataset& ds, double eval_fraction);

/// Full fine-tuning on the union of the pretraining domains. Throws if the
/// resulting model does not reach 0.9 mean accuracy on them (the benchmark
/// would be meaningless).
BlockModel pretrain_foundation(const std::vector<TaskDataset>& pretrain_sets,
                               const BenchProtocol& proto, std::uint64_t seed);

RunReport finetune_and_eval(const BlockModel& foundation, const TaskDataset& source_train,
                            const TaskDataset& source_eval,
                            const std::vector<std::size_t>& target_ids,
                            const std::vector<const TaskDataset*>& target_evals,
                            const std::vector<const TaskDataset*>& retention_evals,
                            const TrainConfig& cfg, std::size_t smr_groups);

struct MethodSummary {
    std::string method;
    double source_mean = 0.0, source_std = 0.0;
    double target_mean = 0.0, target_std = 0.0;
    double retention_mean = 0.0, retention_std = 0.0;
    double top_smr_mean = 0.0, top_smr_std = 0.0;
    std::size_t trainable_param_count = 0;
};

struct BenchResult {
    std::vector<RunReport> reports;
    std::vector<MethodSummary> summary;
};

/// The four-rung ladder {fft, fft+freeze, soma+freeze, soma+freeze+awd} plus
/// {lora, pissa} controls, replicated over protocol seeds.
BenchResult compare_methods(const BenchProtocol& proto);

}  // namespace soma
