#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace smartpubsub::sim {

/// Simulator address of a node. Stable for the lifetime of a simulation.
struct Endpoint {
    std::uint32_t value = 0;

    friend constexpr auto operator<=>(const Endpoint&, const Endpoint&) = default;
    friend constexpr bool operator==(const Endpoint&, const Endpoint&) = default;
};

using RegionId = std::uint16_t;

/// Virtual time in microseconds.
using Time = std::int64_t;

constexpr Time from_ms(double ms) { return static_cast<Time>(ms * 1000.0); }
constexpr double to_ms(Time t) { return static_cast<double>(t) / 1000.0; }

}  // namespace smartpubsub::sim

template <>
struct std::hash<smartpubsub::sim::Endpoint> {
    std::size_t operator()(const smartpubsub::sim::Endpoint& e) const noexcept { return e.value; }
};
