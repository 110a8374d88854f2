#include "dmtrack/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <map>
#include <memory>

#include "dmtrack/errors.hpp"

namespace dmtrack {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'T', 'K'};
constexpr std::size_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::size_t kMaxElements = 1u << 30;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    std::fwrite(b, 1, 4, f);
}

void put_u64(std::FILE* f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    std::fwrite(b, 1, 8, f);
}

void put_f64(std::FILE* f, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(f, bits);
}

bool get_bytes(std::FILE* f, unsigned char* out, std::size_t n) {
    return std::fread(out, 1, n, f) == n;
}

bool get_u32(std::FILE* f, std::uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(f, b, 4)) return false;
    v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

bool get_u64(std::FILE* f, std::uint64_t& v) {
    unsigned char b[8];
    if (!get_bytes(f, b, 8)) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return true;
}

bool get_f64(std::FILE* f, double& v) {
    std::uint64_t bits;
    if (!get_u64(f, bits)) return false;
    std::memcpy(&v, &bits, 8);
    return true;
}

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
    throw DataError(path + ": " + what);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& records) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) {
        throw DataError(path + ": cannot open for writing");
    }
    std::fwrite(kMagic, 1, 4, f.get());
    put_u32(f.get(), kCheckpointVersion);
    for (const auto& [name, t] : records) {
        if (!t.defined()) {
            throw DataError(path + ": undefined tensor for record '" + name + "'");
        }
        put_u32(f.get(), static_cast<std::uint32_t>(name.size()));
        std::fwrite(name.data(), 1, name.size(), f.get());
        const Shape& shape = t.shape();
        put_u32(f.get(), static_cast<std::uint32_t>(shape.size()));
        for (const std::size_t d : shape) put_u64(f.get(), d);
        for (const double v : t.values()) put_f64(f.get(), v);
    }
    if (std::ferror(f.get()) != 0) {
        corrupt(path, "write failed");
    }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw DataError(path + ": cannot open");
    }
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        corrupt(path, "not a checkpoint file (bad magic)");
    }
    std::uint32_t version = 0;
    if (!get_u32(f.get(), version)) {
        corrupt(path, "truncated header");
    }
    if (version != kCheckpointVersion) {
        corrupt(path, "unsupported format version " + std::to_string(version));
    }

    std::vector<std::pair<std::string, Tensor>> records;
    for (;;) {
        std::uint32_t name_len = 0;
        if (!get_u32(f.get(), name_len)) {
            if (std::feof(f.get()) != 0) break;
            corrupt(path, "read failed");
        }
        if (name_len == 0 || name_len > kMaxNameLen) {
            corrupt(path, "implausible record name length " + std::to_string(name_len));
        }
        std::string name(name_len, '\0');
        if (std::fread(name.data(), 1, name_len, f.get()) != name_len) {
            corrupt(path, "truncated record name");
        }
        std::uint32_t rank = 0;
        if (!get_u32(f.get(), rank) || rank == 0 || rank > kMaxRank) {
            corrupt(path, "bad rank in record '" + name + "'");
        }
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t d = 0;
            if (!get_u64(f.get(), d) || d == 0 || d > kMaxElements ||
                numel > kMaxElements / d) {
                corrupt(path, "bad dimensions in record '" + name + "'");
            }
            shape[i] = static_cast<std::size_t>(d);
            numel *= static_cast<std::size_t>(d);
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            if (!get_f64(f.get(), data[i])) {
                corrupt(path, "truncated data in record '" + name + "'");
            }
        }
        records.emplace_back(std::move(name),
                             Tensor::from(std::move(shape), std::move(data)));
    }
    return records;
}

void load_checkpoint_into(const std::string& path,
                          const std::vector<std::pair<std::string, Tensor>>& dest) {
    const auto records = load_checkpoint(path);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : records) {
        by_name[name] = &t;
    }
    for (const auto& [name, t] : dest) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError(path + ": checkpoint has no record '" + name + "'");
        }
        const Tensor& src = *it->second;
        if (src.shape() != t.shape()) {
            throw DataError(path + ": shape mismatch for '" + name + "': stored " +
                            shape_str(src.shape()) + ", expected " +
                            shape_str(t.shape()));
        }
        Tensor handle = t;
        auto out = handle.values_mut();
        const auto in = src.values();
        std::memcpy(out.data(), in.data(), in.size() * sizeof(double));
    }
}

}  // namespace dmtrack
