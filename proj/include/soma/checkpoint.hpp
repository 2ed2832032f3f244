#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "soma/matrix.hpp"

namespace soma {

/// Bad bytes on disk: missing file, wrong magic, truncation, CRC mismatch,
/// missing tensor. Maps to exit code 2 in the CLI.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorEntry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<double> data;  // little-endian f64 on disk
};

/// Container format: magic "SOMA", version u32, tensor table, trailing CRC32
/// of all preceding bytes. Tensor names are unique.
struct Checkpoint {
    std::vector<TensorEntry> tensors;

    const TensorEntry* find(const std::string& name) const;
    void add(const std::string& name, std::vector<std::uint64_t> shape,
             std::vector<double> data);
    void add_matrix(const std::string& name, const Matrix& m);
    void add_vector(const std::string& name, const std::vector<double>& v);
    Matrix get_matrix(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Atomic: writes to a temp file in the same directory, then renames.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace soma
