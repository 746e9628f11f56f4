#pragma once

#include <cstddef>
#include <stdexcept>

#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub::fastdelivery {

struct FastConfig {
    /// Direct children per region before a helper is recruited.
    std::size_t threshold = 10;
    /// Publishers re-advertise every period; board entries live for two.
    sim::Time refresh_period = sim::from_ms(5000);
    /// Delay before a subscriber retries a join whose group was not listed.
    sim::Time join_retry = sim::from_ms(500);
    unsigned join_retry_cap = 20;
    unsigned hop_retry_cap = 8;
    /// Processing time per tree lookup or topic check.
    sim::Time match_cost = 5;
    bool audit = false;

    void validate() const {
        if (threshold == 0) throw std::invalid_argument("delegation threshold must be positive");
        if (refresh_period <= 0) throw std::invalid_argument("refresh period must be positive");
        if (join_retry <= 0) throw std::invalid_argument("join retry delay must be positive");
        if (match_cost < 0) throw std::invalid_argument("match cost must be non-negative");
    }
};

}  // namespace smartpubsub::fastdelivery
