#include "soma/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace soma {

namespace {

constexpr char kMagic[4] = {'S', 'O', 'M', 'A'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const std::size_t at = out.size();
    out.resize(at + sizeof(T));
    std::memcpy(out.data() + at, &value, sizeof(T));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > bytes.size()) throw DataError("checkpoint: truncated file");
        T value;
        std::memcpy(&value, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return value;
    }

    std::string get_string(std::size_t len) {
        if (pos + len > bytes.size()) throw DataError("checkpoint: truncated file");
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
        pos += len;
        return s;
    }
};

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

const TensorEntry* Checkpoint::find(const std::string& name) const {
    for (const TensorEntry& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void Checkpoint::add(const std::string& name, std::vector<std::uint64_t> shape,
                     std::vector<double> data) {
    if (find(name)) throw std::invalid_argument("checkpoint: duplicate tensor name " + name);
    std::uint64_t numel = 1;
    for (std::uint64_t d : shape) numel *= d;
    if (numel != data.size())
        throw std::invalid_argument("checkpoint: payload size mismatch for " + name);
    tensors.push_back({name, std::move(shape), std::move(data)});
}

void Checkpoint::add_matrix(const std::string& name, const Matrix& m) {
    add(name, {m.rows(), m.cols()}, {m.data().begin(), m.data().end()});
}

void Checkpoint::add_vector(const std::string& name, const std::vector<double>& v) {
    add(name, {v.size()}, v);
}

Matrix Checkpoint::get_matrix(const std::string& name) const {
    const TensorEntry* t = find(name);
    if (!t) throw DataError("checkpoint: tensor not found: " + name);
    if (t->shape.size() != 2)
        throw DataError("checkpoint: tensor " + name + " is not 2-D");
    return Matrix(t->shape[0], t->shape[1], t->data);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const TensorEntry& t : ckpt.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::uint64_t d : t.shape) put<std::uint64_t>(out, d);
        put<std::uint8_t>(out, 0);  // dtype: f64
        for (double v : t.data) put<double>(out, v);
    }
    put<std::uint32_t>(out, crc32(out.data(), out.size()));
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4) throw DataError("checkpoint: file too short");
    const std::uint32_t stored_crc = [&] {
        std::uint32_t c;
        std::memcpy(&c, bytes.data() + bytes.size() - 4, 4);
        return c;
    }();
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw DataError("checkpoint: CRC mismatch, file corrupted");

    Reader r{bytes};
    if (r.get_string(4) != std::string(kMagic, 4)) throw DataError("checkpoint: bad magic");
    const std::uint32_t version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint64_t count = r.get<std::uint64_t>();

    Checkpoint ckpt;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.get<std::uint32_t>();
        std::string name = r.get_string(name_len);
        const std::uint32_t ndims = r.get<std::uint32_t>();
        std::vector<std::uint64_t> shape(ndims);
        std::uint64_t numel = 1;
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            numel *= d;
        }
        if (r.get<std::uint8_t>() != 0) throw DataError("checkpoint: unknown dtype");
        if (numel > (bytes.size() - r.pos) / sizeof(double))
            throw DataError("checkpoint: truncated tensor payload for " + name);
        std::vector<double> data(numel);
        for (auto& v : data) v = r.get<double>();
        if (ckpt.find(name)) throw DataError("checkpoint: duplicate tensor name " + name);
        ckpt.tensors.push_back({std::move(name), std::move(shape), std::move(data)});
    }
    if (r.pos != bytes.size() - 4) throw DataError("checkpoint: trailing bytes");
    return ckpt;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_checkpoint(ckpt);
    write_file_atomic(path,
                      std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace soma
