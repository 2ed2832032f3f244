#include "soma/bench.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "soma/diagnostics.hpp"
#include "soma/rng.hpp"
#include "soma/svd.hpp"

namespace soma {

namespace {

constexpr double kPrototypeScale = 3.0;
constexpr double kIntraStd = 0.6;

Matrix domain_rotation(const DomainSpec& spec, std::size_t d_in) {
    Matrix r = Matrix::identity(d_in);
    if (d_in < 2) return r;
    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> coords(d_in);
    std::iota(coords.begin(), coords.end(), 0);
    shuffle_deterministic(coords, rng);
    for (std::size_t p = 0; p + 1 < d_in; p += 2) {
        const std::size_t i = coords[p], j = coords[p + 1];
        const double angle = spec.rotation * (0.5 + unit_double(rng));
        const double c = std::cos(angle), s = std::sin(angle);
        for (std::size_t row = 0; row < d_in; ++row) {
            const double a = r(row, i), b = r(row, j);
            r(row, i) = c * a - s * b;
            r(row, j) = s * a + c * b;
        }
    }
    return r;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

BenchProtocol default_protocol() {
    BenchProtocol proto;
    proto.finetune.kind = AdapterKind::SoMA;
    proto.finetune.rank = 4;
    proto.finetune.nfeb = 2;
    proto.finetune.lr = 2e-3;
    proto.finetune.backbone_lr_mult = 0.5;
    // strong decoupled decay (rate lr*mult*wd0 = 3e-3/step): compressing a
    // realistic training length into 300 desk-scale steps needs a matching
    // compression of cumulative decay, and it is the decay that separates the
    // ladder: full tuning erodes the pretrained weights themselves, adapters
    // only shrink their low-rank factors over the frozen residual
    proto.finetune.wd0 = 3.0;
    proto.finetune.awd = AwdSchedule::Cosine;
    proto.finetune.steps = 300;
    proto.finetune.batch = 32;
    return proto;
}

std::vector<DomainSpec> make_domain_specs(std::size_t n_domains, std::size_t d_in,
                                          std::uint64_t master_seed) {
    std::mt19937_64 rng(derive_seed(master_seed, 0x0d0eULL));
    std::vector<DomainSpec> specs(n_domains);
    for (std::size_t d = 0; d < n_domains; ++d) {
        DomainSpec& s = specs[d];
        s.domain_id = d;
        s.rotation = uniform_double(rng, 0.15, 0.65);
        s.scale = uniform_double(rng, 0.85, 1.2);
        s.style_shift.resize(d_in);
        for (double& x : s.style_shift) x = gaussian(rng) * 0.6;
        s.noise = 0.2;
        s.seed = rng();
    }
    return specs;
}

std::vector<TaskDataset> gen_domains_with_specs(const std::vector<DomainSpec>& specs,
                                                std::size_t n_classes, std::size_t d_in,
                                                std::size_t n_per_class,
                                                std::uint64_t master_seed) {
    if (n_classes < 1 || d_in < 1 || n_per_class < 1)
        throw std::invalid_argument("gen_domains: counts must be >= 1");
    for (const DomainSpec& s : specs) {
        if (s.rotation != 0.0 && d_in < 2)
            throw std::invalid_argument("gen_domains: rotations need d_in >= 2");
        if (s.scale <= 0.0) throw std::invalid_argument("gen_domains: scale must be positive");
        if (s.noise < 0.0) throw std::invalid_argument("gen_domains: negative noise");
        if (!s.style_shift.empty() && s.style_shift.size() != d_in)
            throw std::invalid_argument("gen_domains: style_shift length != d_in");
    }

    // Class prototypes are shared across domains, drawn once from the master
    // seed and placed on a sphere of radius kPrototypeScale*sqrt(d_in)/..
    std::mt19937_64 proto_rng(derive_seed(master_seed, 0x9c0ULL));
    std::vector<std::vector<double>> prototypes(n_classes, std::vector<double>(d_in));
    for (auto& p : prototypes) {
        double norm = 0.0;
        for (double& x : p) {
            x = gaussian(proto_rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : p) x = x / norm * kPrototypeScale;
    }

    std::vector<TaskDataset> out;
    out.reserve(specs.size());
    for (const DomainSpec& spec : specs) {
        const std::size_t n = n_classes * n_per_class;
        TaskDataset ds;
        ds.features = Matrix(d_in, n);
        ds.labels.resize(n);
        ds.domain_ids.assign(n, spec.domain_id);
        const Matrix rot = domain_rotation(spec, d_in);
        std::mt19937_64 rng(derive_seed(master_seed, 0x5a17ULL + spec.domain_id));
        std::size_t col = 0;
        // round-robin over classes so prefix splits stay balanced
        for (std::size_t rep = 0; rep < n_per_class; ++rep) {
            for (std::size_t c = 0; c < n_classes; ++c, ++col) {
                std::vector<double> z(d_in);
                for (std::size_t i = 0; i < d_in; ++i)
                    z[i] = prototypes[c][i] + kIntraStd * gaussian(rng);
                for (std::size_t i = 0; i < d_in; ++i) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < d_in; ++j) v += rot(i, j) * z[j];
                    const double shift = spec.style_shift.empty() ? 0.0 : spec.style_shift[i];
                    v = v * spec.scale + shift + spec.noise * gaussian(rng);
                    ds.features(i, col) = v;
                }
                ds.labels[col] = c;
            }
        }
        out.push_back(std::move(ds));
    }
    return out;
}

std::vector<TaskDataset> gen_domains(std::size_t n_domains, std::size_t n_classes,
                                     std::size_t d_in, std::size_t n_per_class,
                                     std::uint64_t master_seed) {
    if (n_domains < 1) throw std::invalid_argument("gen_domains: need at least one domain");
    return gen_domains_with_specs(make_domain_specs(n_domains, d_in, master_seed), n_classes,
                                  d_in, n_per_class, master_seed);
}

std::pair<TaskDataset, TaskDataset> split_dataset(const TaskDataset& ds, double eval_fraction) {
    const std::size_t n = ds.size();
    std::size_t n_eval = static_cast<std::size_t>(std::floor(n * eval_fraction));
    if (n_eval >= n) n_eval = n > 1 ? n - 1 : 0;
    const std::size_t n_train = n - n_eval;
    auto take = [&](std::size_t from, std::size_t count) {
        TaskDataset part;
        part.features = Matrix(ds.features.rows(), count);
        part.labels.resize(count);
        part.domain_ids.resize(count);
        for (std::size_t c = 0; c < count; ++c) {
            for (std::size_t i = 0; i < ds.features.rows(); ++i)
                part.features(i, c) = ds.features(i, from + c);
            part.labels[c] = ds.labels[from + c];
            part.domain_ids[c] = ds.domain_ids[from + c];
        }
        return part;
    };
    return {take(0, n_train), take(n_train, n_eval)};
}

BlockModel pretrain_foundation(const std::vector<TaskDataset>& pretrain_sets,
                               const BenchProtocol& proto, std::uint64_t seed) {
    if (pretrain_sets.size() < 2)
        throw std::invalid_argument("pretrain_foundation: need at least two domains");

    TaskDataset merged;
    std::size_t total = 0;
    for (const auto& ds : pretrain_sets) total += ds.size();
    merged.features = Matrix(proto.d_in, total);
    merged.labels.resize(total);
    merged.domain_ids.resize(total);
    std::size_t col = 0;
    for (const auto& ds : pretrain_sets) {
        for (std::size_t c = 0; c < ds.size(); ++c, ++col) {
            for (std::size_t i = 0; i < proto.d_in; ++i)
                merged.features(i, col) = ds.features(i, c);
            merged.labels[col] = ds.labels[c];
            merged.domain_ids[col] = ds.domain_ids[c];
        }
    }

    BlockModel model = make_block_model(proto.d_in, proto.d_model, proto.d_hidden, proto.n_blocks,
                                        proto.n_classes, derive_seed(seed, 0xf00dULL));
    TrainConfig cfg;
    cfg.kind = AdapterKind::None;
    cfg.lr = proto.pretrain_lr;
    cfg.backbone_lr_mult = 1.0;
    cfg.wd0 = 0.0;
    cfg.awd = AwdSchedule::Off;
    cfg.steps = proto.pretrain_steps;
    cfg.batch = 64;
    cfg.seed = derive_seed(seed, 0xbeefULL);
    train_loop(model, merged, cfg);

    double acc_sum = 0.0;
    for (const auto& ds : pretrain_sets) acc_sum += accuracy(model, ds);
    const double mean_acc = acc_sum / static_cast<double>(pretrain_sets.size());
    if (mean_acc < 0.9)
        throw std::runtime_error("pretrain_foundation: under-trained foundation, mean accuracy " +
                                 std::to_string(mean_acc));
    return model;
}

RunReport finetune_and_eval(const BlockModel& foundation, const TaskDataset& source_train,
                            const TaskDataset& source_eval,
                            const std::vector<std::size_t>& target_ids,
                            const std::vector<const TaskDataset*>& target_evals,
                            const std::vector<const TaskDataset*>& retention_evals,
                            const TrainConfig& cfg, std::size_t smr_groups) {
    for (std::size_t id : source_train.domain_ids) {
        for (std::size_t t : target_ids) {
            if (id == t)
                throw std::invalid_argument("finetune_and_eval: domain " + std::to_string(id) +
                                            " in both source and targets");
        }
    }

    BlockModel model = foundation;
    apply_freeze_policy(model, cfg);
    if (cfg.steps > 0) train_loop(model, source_train, cfg);

    RunReport rep;
    rep.method = to_string(cfg.kind);
    rep.kind = cfg.kind;
    rep.rank = cfg.rank;
    rep.nfeb = cfg.nfeb;
    rep.seed = cfg.seed;
    rep.source_acc = accuracy(model, source_eval);
    rep.target_domains = target_ids;
    for (const TaskDataset* t : target_evals) rep.target_acc.push_back(accuracy(model, *t));
    double ret = 0.0;
    for (const TaskDataset* r : retention_evals) ret += accuracy(model, *r);
    rep.retention_acc = retention_evals.empty()
                            ? 0.0
                            : ret / static_cast<double>(retention_evals.size());

    // Spectral interference of the realized update on every probed (adapted
    // or fully tuned, non-frozen) backbone layer against the foundation
    // weights.
    std::vector<double> group_acc;
    std::size_t n_probed = 0;
    for (std::size_t bi = 0; bi < model.blocks.size(); ++bi) {
        auto probe = [&](const LinearLayer& tuned, const Matrix& base_w) {
            if (tuned.frozen) return;
            Matrix dw = tuned.adapter ? delta(*tuned.adapter) : tuned.w - base_w;
            SmrReport r = smr(base_w, dw);
            rep.smr_excluded += r.excluded;
            std::vector<double> groups = group_smr(r.values, smr_groups);
            if (group_acc.size() < groups.size()) group_acc.resize(groups.size(), 0.0);
            for (std::size_t g = 0; g < groups.size(); ++g) group_acc[g] += groups[g];
            ++n_probed;
        };
        probe(model.blocks[bi].lin1, foundation.blocks[bi].lin1.w);
        probe(model.blocks[bi].lin2, foundation.blocks[bi].lin2.w);
    }
    if (n_probed > 0) {
        for (double g : group_acc)
            rep.smr_group_means.push_back(g / static_cast<double>(n_probed));
    }

    std::size_t params = 0;
    for_each_trainable(model, nullptr,
                       [&](const std::string& name, std::span<double> value,
                           std::span<const double>, bool backbone) {
                           if (backbone && name.find(".bias") == std::string::npos)
                               params += value.size();
                       });
    rep.trainable_param_count = params;
    return rep;
}

BenchResult compare_methods(const BenchProtocol& proto) {
    if (proto.source_domain >= proto.n_domains || proto.pretrain_domains + 1 >= proto.n_domains)
        throw std::invalid_argument("compare_methods: domain layout leaves no targets");

    struct Rung {
        std::string name;
        AdapterKind kind;
        std::size_t nfeb;
        AwdSchedule awd;
    };
    const std::vector<Rung> ladder = {
        {"fft", AdapterKind::None, 0, AwdSchedule::Constant},
        {"fft+freeze", AdapterKind::None, proto.finetune.nfeb, AwdSchedule::Constant},
        {"soma+freeze", AdapterKind::SoMA, proto.finetune.nfeb, AwdSchedule::Constant},
        {"soma+freeze+awd", AdapterKind::SoMA, proto.finetune.nfeb, AwdSchedule::Cosine},
        {"lora", AdapterKind::LoRA, proto.finetune.nfeb, AwdSchedule::Constant},
        {"pissa", AdapterKind::PiSSA, proto.finetune.nfeb, AwdSchedule::Constant},
    };

    BenchResult result;
    for (std::size_t s = 0; s < proto.n_seeds; ++s) {
        const std::uint64_t seed = derive_seed(proto.master_seed, s);
        auto domains = gen_domains(proto.n_domains, proto.n_classes, proto.d_in,
                                   proto.n_per_class, seed);
        std::vector<std::pair<TaskDataset, TaskDataset>> splits;
        splits.reserve(domains.size());
        for (const auto& d : domains) splits.push_back(split_dataset(d, proto.eval_fraction));

        std::vector<TaskDataset> pretrain_train;
        std::vector<const TaskDataset*> retention_evals;
        for (std::size_t d = 0; d < proto.pretrain_domains; ++d) {
            pretrain_train.push_back(splits[d].first);
            retention_evals.push_back(&splits[d].second);
        }
        std::vector<std::size_t> target_ids;
        std::vector<const TaskDataset*> target_evals;
        for (std::size_t d = 0; d < proto.n_domains; ++d) {
            if (d < proto.pretrain_domains || d == proto.source_domain) continue;
            target_ids.push_back(d);
            target_evals.push_back(&splits[d].second);
        }

        const BlockModel foundation = pretrain_foundation(pretrain_train, proto, seed);
        for (const Rung& rung : ladder) {
            TrainConfig cfg = proto.finetune;
            cfg.kind = rung.kind;
            cfg.nfeb = rung.nfeb;
            cfg.awd = rung.awd;
            cfg.seed = derive_seed(seed, 0xc0ffeeULL);
            RunReport rep = finetune_and_eval(
                foundation, splits[proto.source_domain].first, splits[proto.source_domain].second,
                target_ids, target_evals, retention_evals, cfg, proto.smr_groups);
            rep.method = rung.name;
            rep.seed = seed;
            result.reports.push_back(std::move(rep));
        }
    }

    for (const Rung& rung : ladder) {
        MethodSummary ms;
        ms.method = rung.name;
        std::vector<double> src, tgt, ret, smr0;
        for (const RunReport& r : result.reports) {
            if (r.method != rung.name) continue;
            src.push_back(r.source_acc);
            tgt.push_back(mean_of(r.target_acc));
            ret.push_back(r.retention_acc);
            if (!r.smr_group_means.empty()) smr0.push_back(r.smr_group_means.front());
            ms.trainable_param_count = r.trainable_param_count;
        }
        ms.source_mean = mean_of(src);
        ms.source_std = std_of(src);
        ms.target_mean = mean_of(tgt);
        ms.target_std = std_of(tgt);
        ms.retention_mean = mean_of(ret);
        ms.retention_std = std_of(ret);
        ms.top_smr_mean = mean_of(smr0);
        ms.top_smr_std = std_of(smr0);
        result.summary.push_back(ms);
    }
    return result;
}

}  // namespace soma
