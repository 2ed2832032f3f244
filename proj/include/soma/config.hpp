#pragma once

#include <string>

#include "soma/bench.hpp"

namespace soma {

/// Plain-text `key = value` run configuration covering the training fields
/// and the benchmark protocol. `#` starts a comment, blank lines are
/// ignored, unknown keys are rejected. parse(serialize(x)) == x.
BenchProtocol parse_config(const std::string& text);

BenchProtocol load_config(const std::string& path);

std::string serialize_config(const BenchProtocol& proto);

}  // namespace soma
