#pragma once

#include <cstddef>
#include <stdexcept>

#include "smartpubsub/simnet/endpoint.hpp"

namespace smartpubsub::scoutsubs {

struct ScoutConfig {
    std::size_t f = 2;
    /// Resubscribe period t; filter tables swap every 2t.
    sim::Time refresh_period = sim::from_ms(5000);
    /// Default is 4x the p99 one-way latency of the four-region world.
    sim::Time ack_timeout = sim::from_ms(640);
    bool redirect = false;
    bool reliable = false;

    unsigned publish_resend_cap = 10;
    unsigned tracker_resend_cap = 10;
    /// Retries of one hop (transient drops) or reroutes before giving up.
    unsigned hop_retry_cap = 8;
    std::size_t dedupe_capacity = 4096;
    /// Processing time per filter evaluation.
    sim::Time match_cost = 5;
    /// Check counters and table shape after every handled message.
    bool audit = false;

    void validate() const {
        if (refresh_period <= 0) throw std::invalid_argument("refresh period must be positive");
        if (ack_timeout <= 0) throw std::invalid_argument("ack timeout must be positive");
        if (match_cost < 0) throw std::invalid_argument("match cost must be non-negative");
    }
};

}  // namespace smartpubsub::scoutsubs
