#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "soma/adapter.hpp"
#include "soma/bench.hpp"
#include "soma/checkpoint.hpp"
#include "soma/config.hpp"
#include "soma/diagnostics.hpp"
#include "soma/report.hpp"
#include "soma/rng.hpp"
#include "soma/svd.hpp"
#include "soma/train.hpp"

namespace {

using namespace soma;

ComponentRange parse_range(const std::string& spec) {
    const std::size_t colon = spec.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--range", "expected start:end");
    try {
        ComponentRange r;
        r.start = std::stoull(spec.substr(0, colon));
        r.end = std::stoull(spec.substr(colon + 1));
        return r;
    } catch (const std::exception&) {
        throw CLI::ValidationError("--range", "expected start:end with integers");
    }
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Checkpoint model_checkpoint(const BlockModel& model) {
    Checkpoint ckpt;
    auto add_layer = [&](const std::string& name, const LinearLayer& layer) {
        ckpt.add_matrix(name + ".w", layer.effective_weight());
        ckpt.add_vector(name + ".bias", layer.bias);
    };
    add_layer("embed", model.embed);
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        add_layer("block" + std::to_string(i) + ".lin1", model.blocks[i].lin1);
        add_layer("block" + std::to_string(i) + ".lin2", model.blocks[i].lin2);
    }
    add_layer("head", model.head);
    return ckpt;
}

int cmd_svd(const std::string& in, const std::string& tensor, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(in);
    const Matrix w = ckpt.get_matrix(tensor);
    const SvdFactors f = svd(w);
    std::ostringstream csv;
    csv << "index,sigma\n";
    for (std::size_t i = 0; i < f.k(); ++i) csv << i << "," << fmt17(f.sigma[i]) << "\n";
    write_file_atomic(out, csv.str());
    return 0;
}

int cmd_init(const std::string& in, const std::string& kind_str, std::size_t rank,
             std::uint64_t seed, const std::string& out) {
    const AdapterKind kind = adapter_kind_from_string(kind_str);
    if (kind == AdapterKind::None)
        throw DataError("init: kind none carries no adapter");
    const Checkpoint ckpt = load_checkpoint(in);
    Checkpoint result;
    std::size_t layer_idx = 0;
    for (const TensorEntry& t : ckpt.tensors) {
        if (t.shape.size() != 2) {
            // non-matrix tensors (biases) pass through untouched
            result.add(t.name, t.shape, t.data);
            continue;
        }
        const Matrix w = ckpt.get_matrix(t.name);
        if (rank > std::min(w.rows(), w.cols()))
            throw DataError("init: rank " + std::to_string(rank) + " too large for layer " +
                            t.name + " (" + shape_string(w) + ")");
        const LinearAdapter ad =
            adapter_init(kind, w, rank, derive_seed(seed, layer_idx++));
        result.add_matrix(t.name + ".w_res", ad.w_res);
        result.add_matrix(t.name + ".b", ad.b);
        result.add_matrix(t.name + ".a", ad.a);
        result.add_matrix(t.name + ".b0", ad.b0);
        result.add_matrix(t.name + ".a0", ad.a0);
    }
    save_checkpoint(result, out);
    return 0;
}

int cmd_merge(const std::string& in, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(in);
    Checkpoint result;
    for (const TensorEntry& t : ckpt.tensors) {
        const std::string suffix = ".w_res";
        if (t.name.size() > suffix.size() &&
            t.name.compare(t.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            const std::string base = t.name.substr(0, t.name.size() - suffix.size());
            const Matrix w_res = ckpt.get_matrix(t.name);
            const Matrix b = ckpt.get_matrix(base + ".b");
            const Matrix a = ckpt.get_matrix(base + ".a");
            result.add_matrix(base, w_res + matmul(b, a));
        } else if (t.name.find(".b0") == std::string::npos &&
                   t.name.find(".a0") == std::string::npos &&
                   !(t.name.size() > 2 && (t.name.compare(t.name.size() - 2, 2, ".b") == 0 ||
                                           t.name.compare(t.name.size() - 2, 2, ".a") == 0))) {
            result.add(t.name, t.shape, t.data);
        }
    }
    save_checkpoint(result, out);
    return 0;
}

int cmd_smr(const std::string& base_path, const std::string& tuned_path, std::size_t groups,
            const std::string& out) {
    const Checkpoint base = load_checkpoint(base_path);
    const Checkpoint tuned = load_checkpoint(tuned_path);
    nlohmann::json j = nlohmann::json::object();
    for (const TensorEntry& t : base.tensors) {
        if (t.shape.size() != 2) continue;
        const TensorEntry* other = tuned.find(t.name);
        if (!other) continue;
        const Matrix w0 = base.get_matrix(t.name);
        const Matrix dw = tuned.get_matrix(t.name) - w0;
        const SmrReport rep = smr(w0, dw);
        nlohmann::json entry;
        entry["values"] = rep.values;
        entry["group_means"] = group_smr(rep.values, groups);
        entry["excluded"] = rep.excluded;
        j[t.name] = entry;
    }
    write_file_atomic(out, j.dump(2) + "\n");
    return 0;
}

int cmd_truncate(const std::string& in, const std::string& range_spec, const std::string& out) {
    const ComponentRange range = parse_range(range_spec);
    const Checkpoint ckpt = load_checkpoint(in);
    Checkpoint result;
    for (const TensorEntry& t : ckpt.tensors) {
        if (t.shape.size() != 2) {
            result.add(t.name, t.shape, t.data);
            continue;
        }
        const Matrix w = ckpt.get_matrix(t.name);
        const SvdFactors f = svd(w);
        ComponentRange clipped = range;  // end clamps to each tensor's k
        clipped.end = std::min<std::size_t>(clipped.end, f.k());
        clipped.start = std::min(clipped.start, clipped.end);
        result.add_matrix(t.name, w - reconstruct(f, clipped));
    }
    save_checkpoint(result, out);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    const BenchProtocol proto = load_config(config_path);
    std::filesystem::create_directories(out_dir);

    const std::uint64_t seed = derive_seed(proto.master_seed, 0);
    auto domains =
        gen_domains(proto.n_domains, proto.n_classes, proto.d_in, proto.n_per_class, seed);
    std::vector<std::pair<TaskDataset, TaskDataset>> splits;
    for (const auto& d : domains) splits.push_back(split_dataset(d, proto.eval_fraction));

    std::vector<TaskDataset> pretrain_train;
    std::vector<const TaskDataset*> retention;
    for (std::size_t d = 0; d < proto.pretrain_domains; ++d) {
        pretrain_train.push_back(splits[d].first);
        retention.push_back(&splits[d].second);
    }
    std::vector<std::size_t> target_ids;
    std::vector<const TaskDataset*> target_evals;
    for (std::size_t d = 0; d < proto.n_domains; ++d) {
        if (d < proto.pretrain_domains || d == proto.source_domain) continue;
        target_ids.push_back(d);
        target_evals.push_back(&splits[d].second);
    }

    const BlockModel foundation = pretrain_foundation(pretrain_train, proto, seed);
    save_checkpoint(model_checkpoint(foundation), out_dir + "/foundation.ckpt");

    TrainConfig cfg = proto.finetune;
    cfg.seed = derive_seed(seed, 0xc0ffeeULL);
    BlockModel model = foundation;
    apply_freeze_policy(model, cfg);
    train_loop(model, splits[proto.source_domain].first, cfg);
    save_checkpoint(model_checkpoint(merged_copy(model)), out_dir + "/merged.ckpt");

    RunReport rep = finetune_and_eval(foundation, splits[proto.source_domain].first,
                                      splits[proto.source_domain].second, target_ids,
                                      target_evals, retention, cfg, proto.smr_groups);
    BenchResult result;
    result.reports.push_back(rep);
    write_reports(out_dir, result);
    return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir) {
    const BenchProtocol proto = load_config(config_path);
    const BenchResult result = compare_methods(proto);
    write_reports(out_dir, result);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SoMA: minor singular component adapters, diagnostics and benchmark"};
    app.require_subcommand(1);

    std::string input, output, tensor, kind = "soma", base, tuned, range_spec, config;
    std::size_t rank = 4, groups = 4;
    std::uint64_t seed = 0;

    auto* sc_svd = app.add_subcommand("svd", "write the singular spectrum of a tensor as CSV");
    sc_svd->add_option("--input", input)->required();
    sc_svd->add_option("--tensor", tensor)->required();
    sc_svd->add_option("--output", output)->required();

    auto* sc_init = app.add_subcommand("init", "initialize adapters for every weight matrix");
    sc_init->add_option("--input", input)->required();
    sc_init->add_option("--kind", kind)->check(CLI::IsMember({"soma", "pissa", "lora"}));
    sc_init->add_option("--rank", rank);
    sc_init->add_option("--seed", seed);
    sc_init->add_option("--output", output)->required();

    auto* sc_merge = app.add_subcommand("merge", "fold adapter factors back into plain weights");
    sc_merge->add_option("--input", input)->required();
    sc_merge->add_option("--output", output)->required();

    auto* sc_smr = app.add_subcommand("smr", "singular modulation ratio of tuned vs base");
    sc_smr->add_option("--base", base)->required();
    sc_smr->add_option("--tuned", tuned)->required();
    sc_smr->add_option("--groups", groups);
    sc_smr->add_option("--output", output)->required();

    auto* sc_trunc = app.add_subcommand("truncate", "remove a singular component range");
    sc_trunc->add_option("--input", input)->required();
    sc_trunc->add_option("--range", range_spec)->required();
    sc_trunc->add_option("--output", output)->required();

    auto* sc_train = app.add_subcommand("train", "single fine-tuning run from a config file");
    sc_train->add_option("--config", config)->required();
    sc_train->add_option("--output", output)->required();

    auto* sc_bench = app.add_subcommand("bench", "full method-comparison benchmark");
    sc_bench->add_option("--config", config)->required();
    sc_bench->add_option("--output", output)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sc_svd->parsed()) return cmd_svd(input, tensor, output);
        if (sc_init->parsed()) return cmd_init(input, kind, rank, seed, output);
        if (sc_merge->parsed()) return cmd_merge(input, output);
        if (sc_smr->parsed()) return cmd_smr(base, tuned, groups, output);
        if (sc_trunc->parsed()) return cmd_truncate(input, range_spec, output);
        if (sc_train->parsed()) return cmd_train(config, output);
        if (sc_bench->parsed()) return cmd_bench(config, output);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
