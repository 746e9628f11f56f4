#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smartpubsub/fastdelivery/range_tree.hpp"
#include "smartpubsub/metrics.hpp"
#include "smartpubsub/overlay/routing_table.hpp"
#include "smartpubsub/predicate/predicate.hpp"

namespace smartpubsub::fastdelivery {

using overlay::NodeId;
using overlay::PeerInfo;
using predicate::EventPredicate;
using predicate::Predicate;

struct GroupId {
    NodeId publisher;
    Predicate predicate;

    friend bool operator==(const GroupId&, const GroupId&) = default;
    friend bool operator<(const GroupId& a, const GroupId& b) {
        if (a.publisher != b.publisher) return a.publisher < b.publisher;
        return a.predicate < b.predicate;
    }
    std::string to_string() const;
};

struct SubscriberRecord {
    SubscriptionId id;
    PeerInfo peer;
    sim::RegionId region = 0;
    /// Number of other subscribers this one can manage as a helper.
    unsigned capacity = 0;
    Predicate predicate;
};

/// True when every attribute of sub has the same kind and name in group.
bool uses_group_attributes(const Predicate& group, const Predicate& sub);

/// Matching index over a set of subscriber records: a flat list when the
/// group predicate has no range attributes, otherwise one RangeTree per
/// range attribute whose per-tree results are intersected.
class SubscriberIndex {
public:
    explicit SubscriberIndex(Predicate group);

    void insert(const SubscriberRecord& rec);
    bool erase(const SubscriptionId& id);
    bool contains(const SubscriptionId& id) const { return records_.count(id) > 0; }
    const SubscriberRecord* find(const SubscriptionId& id) const;
    std::size_t size() const { return records_.size(); }
    const std::map<SubscriptionId, SubscriberRecord>& records() const { return records_; }

    /// Records whose predicate matches ev. `checks` counts tree lookups and
    /// topic checks.
    std::vector<const SubscriberRecord*> match(const EventPredicate& ev, std::size_t& checks) const;

    bool audit() const;

private:
    Predicate group_;
    std::map<SubscriptionId, SubscriberRecord> records_;
    std::map<std::string, RangeTree<SubscriptionId>> trees_;
    std::map<std::string, std::set<SubscriptionId>> unconstrained_;
};

struct HelperEntry {
    SubscriberRecord helper;
    std::vector<SubscriberRecord> delegated;
};

/// Publisher-side state of one multicast group.
class MulticastGroup {
public:
    MulticastGroup(GroupId id, std::size_t threshold);

    const GroupId& id() const { return id_; }
    std::size_t threshold() const { return threshold_; }

    enum class AddResult { Added, Duplicate, Rejected };
    AddResult add(const SubscriberRecord& rec);

    /// Direct children in a region: managed subscribers plus helpers.
    std::size_t fanout(sim::RegionId region) const;

    struct Delegation {
        SubscriptionId helper;
        std::vector<SubscriberRecord> delegated;  // full list for the helper
    };
    /// Brings the region back under the threshold: tops up helpers with
    /// spare capacity, then recruits the highest-capacity managed member.
    /// Candidates in `skip` are passed over. Returns changed delegations.
    std::vector<Delegation> rebalance(sim::RegionId region, const std::set<SubscriptionId>& skip = {});

    /// The helper is gone: its delegated records return to direct management
    /// and its own record is dropped. Returns the reabsorbed records.
    std::vector<SubscriberRecord> reabsorb(const SubscriptionId& helper);
    /// The helper could not be reached at recruitment: its delegation is
    /// undone and its own record is kept as a managed member.
    void undo_recruitment(const SubscriptionId& helper);
    /// Drops a directly managed record (dead subscriber).
    bool remove(const SubscriptionId& id);

    struct Plan {
        std::vector<const SubscriberRecord*> direct;
        std::vector<const HelperEntry*> helpers;
    };
    Plan route(const EventPredicate& ev, std::size_t& checks) const;

    const std::map<sim::RegionId, std::vector<SubscriptionId>>& regions() const { return regions_; }
    const std::map<SubscriptionId, HelperEntry>& helpers() const { return helpers_; }
    const SubscriberIndex& direct() const { return direct_; }
    /// Every record of the group, wherever it is managed.
    std::vector<SubscriberRecord> all_records() const;
    std::size_t size() const;

    /// Ownership (exactly once), region order, capacity bounds, same-region
    /// delegation and index consistency.
    bool audit() const;

private:
    const SubscriberRecord* record_of(const SubscriptionId& id) const;
    void insert_sorted(sim::RegionId region, const SubscriptionId& id);

    GroupId id_;
    std::size_t threshold_;
    SubscriberIndex direct_;
    std::map<SubscriptionId, HelperEntry> helpers_;
    std::map<sim::RegionId, std::vector<SubscriptionId>> regions_;
};

}  // namespace smartpubsub::fastdelivery
