#include "feddpg/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "feddpg/digest.hpp"

namespace feddpg {

namespace {

const char kMagic[4] = {'F', 'D', 'P', 'G'};

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw std::runtime_error("param bundle: truncated input");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

std::vector<unsigned char> serialize_params(const ParamBundle& params) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put<uint32_t>(out, kParamFormatVersion);
    put<uint32_t>(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<uint32_t>(out, static_cast<uint32_t>(tensor.shape().size()));
        for (int64_t d : tensor.shape()) put<int64_t>(out, d);
        const auto& data = tensor.data();
        const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
        out.insert(out.end(), bytes, bytes + data.size() * sizeof(double));
    }
    return out;
}

ParamBundle deserialize_params(const std::vector<unsigned char>& bytes) {
    size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::runtime_error("param bundle: bad magic");
    }
    pos = 4;
    const auto version = get<uint32_t>(bytes, pos);
    if (version != kParamFormatVersion) {
        throw std::runtime_error("param bundle: unsupported version " + std::to_string(version));
    }
    const auto count = get<uint32_t>(bytes, pos);
    ParamBundle params;
    params.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<uint32_t>(bytes, pos);
        if (pos + name_len > bytes.size()) throw std::runtime_error("param bundle: truncated name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const auto ndim = get<uint32_t>(bytes, pos);
        Shape shape(ndim);
        for (auto& d : shape) d = get<int64_t>(bytes, pos);
        const auto numel = static_cast<size_t>(shape_numel(shape));
        if (pos + numel * sizeof(double) > bytes.size()) throw std::runtime_error("param bundle: truncated data");
        std::vector<double> data(numel);
        std::memcpy(data.data(), bytes.data() + pos, numel * sizeof(double));
        pos += numel * sizeof(double);
        params.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
    }
    if (pos != bytes.size()) throw std::runtime_error("param bundle: trailing bytes");
    return params;
}

void save_params(const ParamBundle& params, const std::string& path) {
    const auto bytes = serialize_params(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("save_params: write to " + path + " failed");
}

ParamBundle load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_params(bytes);
}

size_t serialized_size(const ParamBundle& params) {
    size_t n = 4 + 2 * sizeof(uint32_t);
    for (const auto& [name, tensor] : params) {
        n += sizeof(uint32_t) + name.size();
        n += sizeof(uint32_t) + tensor.shape().size() * sizeof(int64_t);
        n += tensor.data().size() * sizeof(double);
    }
    return n;
}

uint64_t params_digest(const ParamBundle& params) {
    Digest d;
    for (const auto& [name, tensor] : params) {
        d.update(name);
        for (int64_t dim : tensor.shape()) d.update_i64(dim);
        d.update(tensor.data());
    }
    return d.value();
}

}  // namespace feddpg
