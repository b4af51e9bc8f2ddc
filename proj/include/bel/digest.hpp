#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace bel {

/// Incremental FNV-1a (64-bit). Used for config and content digests; not a
/// cryptographic hash.
class Digest {
public:
    Digest& update(std::string_view bytes) noexcept {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001B3ull;
        }
        return *this;
    }

    Digest& update(double v) noexcept {
        char raw[sizeof(double)];
        std::memcpy(raw, &v, sizeof v);
        return update(std::string_view(raw, sizeof raw));
    }

    Digest& update(std::uint64_t v) noexcept {
        char raw[sizeof v];
        std::memcpy(raw, &v, sizeof v);
        return update(std::string_view(raw, sizeof raw));
    }

    Digest& update(std::span<const double> vs) noexcept {
        for (double v : vs) update(v);
        return *this;
    }

    [[nodiscard]] std::uint64_t value() const noexcept { return state_; }

    [[nodiscard]] std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        return out;
    }

private:
    std::uint64_t state_ = 0xCBF29CE484222325ull;
};

[[nodiscard]] inline std::string digest_hex(std::string_view bytes) {
    return Digest{}.update(bytes).hex();
}

}  // namespace bel
