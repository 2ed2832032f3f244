#pragma once

#include <string>

#include "soma/bench.hpp"

namespace soma {

/// JSON and CSV views of the same run reports; the CSV carries one row per
/// method x seed with the flattenable fields (per-target accuracies become
/// target_<id> columns, SMR group means become smr_g<k> columns).
std::string reports_to_json(const BenchResult& result);
std::string reports_to_csv(const BenchResult& result);

void write_reports(const std::string& out_dir, const BenchResult& result);

}  // namespace soma
