#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smartpubsub::overlay {

/// Fixed-capacity 256-bit identifier. Word 0 holds the most significant bits,
/// so the defaulted comparison is numeric order. Identifiers narrower than
/// 256 bits live in the low bits (see IdSpace).
class NodeId {
public:
    static constexpr unsigned kMaxBits = 256;
    static constexpr std::size_t kWords = kMaxBits / 64;

    constexpr NodeId() = default;
    constexpr explicit NodeId(std::array<std::uint64_t, kWords> words) : words_(words) {}

    static constexpr NodeId from_uint(std::uint64_t value) {
        NodeId id;
        id.words_[kWords - 1] = value;
        return id;
    }

    constexpr const std::array<std::uint64_t, kWords>& words() const { return words_; }

    /// Low 64 bits; handy for narrow test spaces.
    constexpr std::uint64_t low64() const { return words_[kWords - 1]; }

    constexpr bool is_zero() const {
        for (auto w : words_) {
            if (w != 0) return false;
        }
        return true;
    }

    /// Index of the highest set bit, or -1 for zero.
    int highest_bit() const;

    bool bit(unsigned index) const {
        return ((words_[kWords - 1 - index / 64] >> (index % 64)) & 1U) != 0;
    }

    friend constexpr NodeId operator^(const NodeId& a, const NodeId& b) {
        NodeId r;
        for (std::size_t i = 0; i < kWords; ++i) r.words_[i] = a.words_[i] ^ b.words_[i];
        return r;
    }
    friend constexpr NodeId operator&(const NodeId& a, const NodeId& b) {
        NodeId r;
        for (std::size_t i = 0; i < kWords; ++i) r.words_[i] = a.words_[i] & b.words_[i];
        return r;
    }

    friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
    friend constexpr bool operator==(const NodeId&, const NodeId&) = default;

    /// Hex rendering of the low `width` bits, zero padded.
    std::string hex(unsigned width = kMaxBits) const;

private:
    std::array<std::uint64_t, kWords> words_{};
};

/// Attribute keys share the identifier space with nodes.
using Key = NodeId;

/// XOR distance, ordered as an unsigned integer.
struct Distance {
    NodeId value;

    friend constexpr auto operator<=>(const Distance&, const Distance&) = default;
    friend constexpr bool operator==(const Distance&, const Distance&) = default;
};

inline Distance xor_distance(const NodeId& a, const NodeId& b) { return Distance{a ^ b}; }

class InvalidAttribute : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Trim + lowercase; inner whitespace runs become '-'.
std::string canonical_attribute(std::string_view name);

/// Identifier space of a given width (1..256 bits).
class IdSpace {
public:
    explicit IdSpace(unsigned width = NodeId::kMaxBits);

    unsigned width() const { return width_; }
    const NodeId& mask() const { return mask_; }

    NodeId clamp(const NodeId& id) const { return id & mask_; }
    NodeId from_uint(std::uint64_t value) const { return clamp(NodeId::from_uint(value)); }

    NodeId random(std::mt19937_64& rng) const;

    /// Stable digest of the canonicalized attribute name, truncated to the
    /// space width. Throws InvalidAttribute for an empty name.
    Key key_for_attribute(std::string_view name) const;

private:
    unsigned width_;
    NodeId mask_;
};

}  // namespace smartpubsub::overlay

template <>
struct std::hash<smartpubsub::overlay::NodeId> {
    std::size_t operator()(const smartpubsub::overlay::NodeId& id) const noexcept {
        std::size_t h = 0;
        for (auto w : id.words()) h = h * 0x9E3779B97F4A7C15ULL + w;
        return h;
    }
};
