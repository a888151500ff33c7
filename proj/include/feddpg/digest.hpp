#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace feddpg {

// FNV-1a 64-bit. Content fingerprints for frozen-parameter checks, dataset
// provenance and run-directory naming; not a cryptographic hash.
class Digest {
public:
    Digest() = default;

    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    void update(const std::vector<double>& v) { update(v.data(), v.size() * sizeof(double)); }

    void update_u64(uint64_t v) { update(&v, sizeof(v)); }
    void update_i64(int64_t v) { update(&v, sizeof(v)); }

    uint64_t value() const { return h_; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = h_;
        for (int i = 15; i >= 0; --i) {
            out[i] = digits[v & 0xf];
            v >>= 4;
        }
        return out;
    }

private:
    uint64_t h_ = 0xcbf29ce484222325ull;
};

inline uint64_t fnv1a64(const void* data, size_t len) {
    Digest d;
    d.update(data, len);
    return d.value();
}

inline std::string digest_hex(const std::string& s) {
    Digest d;
    d.update(s);
    return d.hex();
}

}  // namespace feddpg
