#include "dygrag/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace dygrag {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'G', 'C'};

template <typename T>
void write_raw(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_raw<std::uint32_t>(os, kCheckpointVersion);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) write_raw<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

NamedParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const auto version = read_raw<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = read_raw<std::uint32_t>(is);
    NamedParams out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = read_raw<std::uint32_t>(is);
        Shape shape(ndim);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(read_raw<std::uint64_t>(is));
            total *= d;
        }
        std::vector<double> data(total);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

void restore_params(NamedParams& into, const NamedParams& from) {
    std::unordered_map<std::string, const Tensor*> index;
    for (const auto& [name, t] : from) index[name] = &t;
    for (auto& [name, t] : into) {
        auto it = index.find(name);
        if (it == index.end()) {
            throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
        }
        if (it->second->shape() != t.shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                                     shape_str(it->second->shape()) + " vs model " +
                                     shape_str(t.shape()));
        }
        t.data() = it->second->data();
    }
}

}  // namespace dygrag
