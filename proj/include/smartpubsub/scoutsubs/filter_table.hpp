#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "smartpubsub/overlay/routing_table.hpp"
#include "smartpubsub/predicate/predicate.hpp"

namespace smartpubsub::scoutsubs {

using overlay::Key;
using overlay::NodeId;
using overlay::PeerInfo;
using predicate::EventPredicate;
using predicate::Predicate;

/// Filters one downstream peer routed toward one rendezvous key.
struct KeyedFilters {
    std::vector<Predicate> filters;  // merge-canonical
    std::optional<PeerInfo> shortcut;
    std::uint64_t shortcut_version = 0;
};

struct FilterEntry {
    PeerInfo peer;
    std::vector<PeerInfo> backups;
    std::map<Key, KeyedFilters> routes;

    std::size_t filter_count() const;
};

/// Reverse-path routing state: downstream peer -> filters, grouped by the
/// rendezvous key each filter was forwarded toward.
class FilterTable {
public:
    struct Match {
        const FilterEntry* entry;
        const KeyedFilters* route;
    };

    /// Adds f to the entry for `from` under key rv. Backups are replaced by
    /// the advertised list. Returns true when the stored filter set changed.
    bool insert(const PeerInfo& from, const std::vector<PeerInfo>& backups, const Key& rv, const Predicate& f);

    /// Records the shortcut advertised by `peer` for rv. Ignored when the
    /// entry or route is missing, or the version is not newer.
    bool set_shortcut(const NodeId& peer, const Key& rv, const std::optional<PeerInfo>& target, std::uint64_t version);

    /// Number of distinct entries holding at least one filter routed to rv.
    std::size_t counter(const Key& rv) const;

    /// Entries with a filter under rv that matches ev. `checks` accumulates
    /// the number of filter evaluations (the first match ends an entry).
    std::vector<Match> matching(const Key& rv, const EventPredicate& ev, std::size_t& checks) const;

    /// The entry when it is the only one routed to rv.
    const FilterEntry* sole_entry(const Key& rv) const;

    /// Copy containing only filters routed to rv.
    FilterTable restricted(const Key& rv) const;

    const FilterEntry* find(const NodeId& peer) const;
    const std::map<NodeId, FilterEntry>& entries() const { return entries_; }
    std::set<Key> keys() const;
    std::size_t entry_count() const { return entries_.size(); }
    std::size_t filter_count() const;
    bool empty() const { return entries_.empty(); }
    void clear();

    /// True when every counter equals a recount over the entries and no
    /// entry or route is empty.
    bool audit() const;

private:
    std::map<NodeId, FilterEntry> entries_;
    std::map<Key, std::size_t> counters_;
};

}  // namespace smartpubsub::scoutsubs
