#include "smartpubsub/overlay/node_id.hpp"

#include <algorithm>
#include <bit>
#include <cctype>

namespace smartpubsub::overlay {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

int NodeId::highest_bit() const {
    for (std::size_t i = 0; i < kWords; ++i) {
        if (words_[i] != 0) {
            int word_bits = 63 - std::countl_zero(words_[i]);
            return static_cast<int>((kWords - 1 - i) * 64) + word_bits;
        }
    }
    return -1;
}

std::string NodeId::hex(unsigned width) const {
    static constexpr char kDigits[] = "0123456789abcdef";
    unsigned nibbles = std::max(1U, (width + 3) / 4);
    std::string out(nibbles, '0');
    for (unsigned n = 0; n < nibbles; ++n) {
        unsigned bit = n * 4;
        auto word = words_[kWords - 1 - bit / 64];
        out[nibbles - 1 - n] = kDigits[(word >> (bit % 64)) & 0xF];
    }
    return out;
}

std::string canonical_attribute(std::string_view name) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!name.empty() && is_space(name.front())) name.remove_prefix(1);
    while (!name.empty() && is_space(name.back())) name.remove_suffix(1);

    std::string out;
    out.reserve(name.size());
    bool in_space = false;
    for (char c : name) {
        if (is_space(c)) {
            in_space = true;
            continue;
        }
        if (in_space) out.push_back('-');
        in_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

IdSpace::IdSpace(unsigned width) : width_(width) {
    if (width == 0 || width > NodeId::kMaxBits) {
        throw std::invalid_argument("id width must be in [1, 256]");
    }
    std::array<std::uint64_t, NodeId::kWords> words{};
    for (unsigned bit = 0; bit < width; ++bit) {
        words[NodeId::kWords - 1 - bit / 64] |= (std::uint64_t{1} << (bit % 64));
    }
    mask_ = NodeId(words);
}

NodeId IdSpace::random(std::mt19937_64& rng) const {
    std::array<std::uint64_t, NodeId::kWords> words{};
    for (auto& w : words) w = rng();
    return clamp(NodeId(words));
}

Key IdSpace::key_for_attribute(std::string_view name) const {
    std::string canonical = canonical_attribute(name);
    if (canonical.empty()) throw InvalidAttribute("attribute name is empty");

    // FNV-1a seeds a splitmix64 stream; the stream fills all 256 bits.
    std::uint64_t state = kFnvOffset;
    for (unsigned char c : canonical) {
        state ^= c;
        state *= kFnvPrime;
    }
    std::array<std::uint64_t, NodeId::kWords> words{};
    for (auto& w : words) w = splitmix64(state);
    return clamp(NodeId(words));
}

}  // namespace smartpubsub::overlay
