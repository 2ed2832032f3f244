#include "soma/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "soma/checkpoint.hpp"

namespace soma {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw DataError("config: bad integer for " + key + ": " + v);
    }
}

double parse_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw DataError("config: bad real for " + key + ": " + v);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw DataError("config: bad boolean for " + key + ": " + v);
}

}  // namespace

BenchProtocol parse_config(const std::string& text) {
    BenchProtocol p = default_protocol();
    TrainConfig& t = p.finetune;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config: line " + std::to_string(line_no) + " is not key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "kind") t.kind = adapter_kind_from_string(val);
        else if (key == "rank") t.rank = parse_u64(key, val);
        else if (key == "nfeb") t.nfeb = parse_u64(key, val);
        else if (key == "lr") t.lr = parse_f64(key, val);
        else if (key == "backbone_lr_mult") t.backbone_lr_mult = parse_f64(key, val);
        else if (key == "wd0") t.wd0 = parse_f64(key, val);
        else if (key == "awd") t.awd = awd_schedule_from_string(val);
        else if (key == "steps") t.steps = parse_u64(key, val);
        else if (key == "batch") t.batch = parse_u64(key, val);
        else if (key == "seed") t.seed = parse_u64(key, val);
        else if (key == "adapt_lin1") t.adapt_lin1 = parse_bool(key, val);
        else if (key == "adapt_lin2") t.adapt_lin2 = parse_bool(key, val);
        else if (key == "decay_reference") t.decay_reference = decay_reference_from_string(val);
        else if (key == "train_bias") t.train_bias = parse_bool(key, val);
        else if (key == "lora_scale") t.lora_scale = parse_f64(key, val);
        else if (key == "n_domains") p.n_domains = parse_u64(key, val);
        else if (key == "n_classes") p.n_classes = parse_u64(key, val);
        else if (key == "d_in") p.d_in = parse_u64(key, val);
        else if (key == "n_per_class") p.n_per_class = parse_u64(key, val);
        else if (key == "d_model") p.d_model = parse_u64(key, val);
        else if (key == "d_hidden") p.d_hidden = parse_u64(key, val);
        else if (key == "n_blocks") p.n_blocks = parse_u64(key, val);
        else if (key == "pretrain_domains") p.pretrain_domains = parse_u64(key, val);
        else if (key == "source_domain") p.source_domain = parse_u64(key, val);
        else if (key == "master_seed") p.master_seed = parse_u64(key, val);
        else if (key == "n_seeds") p.n_seeds = parse_u64(key, val);
        else if (key == "smr_groups") p.smr_groups = parse_u64(key, val);
        else if (key == "eval_fraction") p.eval_fraction = parse_f64(key, val);
        else if (key == "pretrain_steps") p.pretrain_steps = parse_u64(key, val);
        else if (key == "pretrain_lr") p.pretrain_lr = parse_f64(key, val);
        else throw DataError("config: unknown key " + key);
    }
    return p;
}

BenchProtocol load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const BenchProtocol& p) {
    const TrainConfig& t = p.finetune;
    std::ostringstream out;
    out << "kind = " << to_string(t.kind) << "\n";
    out << "rank = " << t.rank << "\n";
    out << "nfeb = " << t.nfeb << "\n";
    out << "lr = " << fmt_double(t.lr) << "\n";
    out << "backbone_lr_mult = " << fmt_double(t.backbone_lr_mult) << "\n";
    out << "wd0 = " << fmt_double(t.wd0) << "\n";
    out << "awd = " << to_string(t.awd) << "\n";
    out << "steps = " << t.steps << "\n";
    out << "batch = " << t.batch << "\n";
    out << "seed = " << t.seed << "\n";
    out << "adapt_lin1 = " << (t.adapt_lin1 ? "true" : "false") << "\n";
    out << "adapt_lin2 = " << (t.adapt_lin2 ? "true" : "false") << "\n";
    out << "decay_reference = " << to_string(t.decay_reference) << "\n";
    out << "train_bias = " << (t.train_bias ? "true" : "false") << "\n";
    out << "lora_scale = " << fmt_double(t.lora_scale) << "\n";
    out << "n_domains = " << p.n_domains << "\n";
    out << "n_classes = " << p.n_classes << "\n";
    out << "d_in = " << p.d_in << "\n";
    out << "n_per_class = " << p.n_per_class << "\n";
    out << "d_model = " << p.d_model << "\n";
    out << "d_hidden = " << p.d_hidden << "\n";
    out << "n_blocks = " << p.n_blocks << "\n";
    out << "pretrain_domains = " << p.pretrain_domains << "\n";
    out << "source_domain = " << p.source_domain << "\n";
    out << "master_seed = " << p.master_seed << "\n";
    out << "n_seeds = " << p.n_seeds << "\n";
    out << "smr_groups = " << p.smr_groups << "\n";
    out << "eval_fraction = " << fmt_double(p.eval_fraction) << "\n";
    out << "pretrain_steps = " << p.pretrain_steps << "\n";
    out << "pretrain_lr = " << fmt_double(p.pretrain_lr) << "\n";
    return out.str();
}

}  // namespace soma
