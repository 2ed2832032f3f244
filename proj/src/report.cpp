#include "soma/report.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "soma/checkpoint.hpp"

namespace soma {

namespace {

nlohmann::json report_json(const RunReport& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["kind"] = to_string(r.kind);
    j["rank"] = r.rank;
    j["nfeb"] = r.nfeb;
    j["seed"] = r.seed;
    j["source_acc"] = r.source_acc;
    nlohmann::json targets = nlohmann::json::object();
    for (std::size_t i = 0; i < r.target_domains.size(); ++i)
        targets["target_" + std::to_string(r.target_domains[i])] = r.target_acc[i];
    j["target_acc"] = targets;
    j["retention_acc"] = r.retention_acc;
    j["smr_group_means"] = r.smr_group_means;
    j["smr_excluded"] = r.smr_excluded;
    j["trainable_param_count"] = r.trainable_param_count;
    return j;
}

}  // namespace

std::string reports_to_json(const BenchResult& result) {
    nlohmann::json j;
    j["reports"] = nlohmann::json::array();
    for (const RunReport& r : result.reports) j["reports"].push_back(report_json(r));
    j["summary"] = nlohmann::json::array();
    for (const MethodSummary& s : result.summary) {
        j["summary"].push_back({{"method", s.method},
                                {"source_mean", s.source_mean},
                                {"source_std", s.source_std},
                                {"target_mean", s.target_mean},
                                {"target_std", s.target_std},
                                {"retention_mean", s.retention_mean},
                                {"retention_std", s.retention_std},
                                {"top_smr_mean", s.top_smr_mean},
                                {"top_smr_std", s.top_smr_std},
                                {"trainable_param_count", s.trainable_param_count}});
    }
    return j.dump(2) + "\n";
}

std::string reports_to_csv(const BenchResult& result) {
    std::size_t n_targets = 0, n_groups = 0;
    for (const RunReport& r : result.reports) {
        n_targets = std::max(n_targets, r.target_domains.size());
        n_groups = std::max(n_groups, r.smr_group_means.size());
    }
    std::ostringstream out;
    out.precision(17);
    out << "method,kind,rank,nfeb,seed,source_acc,retention_acc,trainable_param_count";
    if (!result.reports.empty()) {
        for (std::size_t i = 0; i < n_targets; ++i)
            out << ",target_" << result.reports.front().target_domains[i];
    }
    for (std::size_t g = 0; g < n_groups; ++g) out << ",smr_g" << g;
    out << "\n";
    for (const RunReport& r : result.reports) {
        out << r.method << "," << to_string(r.kind) << "," << r.rank << "," << r.nfeb << ","
            << r.seed << "," << r.source_acc << "," << r.retention_acc << ","
            << r.trainable_param_count;
        for (std::size_t i = 0; i < n_targets; ++i)
            out << "," << (i < r.target_acc.size() ? r.target_acc[i] : 0.0);
        for (std::size_t g = 0; g < n_groups; ++g)
            out << "," << (g < r.smr_group_means.size() ? r.smr_group_means[g] : 0.0);
        out << "\n";
    }
    return out.str();
}

void write_reports(const std::string& out_dir, const BenchResult& result) {
    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir + "/report.json", reports_to_json(result));
    write_file_atomic(out_dir + "/report.csv", reports_to_csv(result));
}

}  // namespace soma
