#include "smartpubsub/scoutsubs/filter_table.hpp"

namespace smartpubsub::scoutsubs {

std::size_t FilterEntry::filter_count() const {
    std::size_t n = 0;
    for (const auto& [key, route] : routes) n += route.filters.size();
    return n;
}

bool FilterTable::insert(const PeerInfo& from, const std::vector<PeerInfo>& backups, const Key& rv,
                         const Predicate& f) {
    auto [it, created] = entries_.try_emplace(from.id);
    auto& entry = it->second;
    entry.peer = from;
    entry.backups = backups;

    auto [route_it, new_route] = entry.routes.try_emplace(rv);
    if (new_route) ++counters_[rv];
    auto& filters = route_it->second.filters;
    auto updated = predicate::filter_set_insert(filters, f);
    bool changed = updated != filters;
    filters = std::move(updated);
    return changed || created;
}

bool FilterTable::set_shortcut(const NodeId& peer, const Key& rv, const std::optional<PeerInfo>& target,
                               std::uint64_t version) {
    auto it = entries_.find(peer);
    if (it == entries_.end()) return false;
    auto route = it->second.routes.find(rv);
    if (route == it->second.routes.end()) return false;
    if (version <= route->second.shortcut_version) return false;
    route->second.shortcut_version = version;
    route->second.shortcut = target;
    return true;
}

std::size_t FilterTable::counter(const Key& rv) const {
    auto it = counters_.find(rv);
    return it == counters_.end() ? 0 : it->second;
}

std::vector<FilterTable::Match> FilterTable::matching(const Key& rv, const EventPredicate& ev,
                                                      std::size_t& checks) const {
    std::vector<Match> out;
    for (const auto& [id, entry] : entries_) {
        auto route = entry.routes.find(rv);
        if (route == entry.routes.end()) continue;
        for (const auto& f : route->second.filters) {
            ++checks;
            if (predicate::matches(f, ev)) {
                out.push_back(Match{&entry, &route->second});
                break;
            }
        }
    }
    return out;
}

const FilterEntry* FilterTable::sole_entry(const Key& rv) const {
    if (counter(rv) != 1) return nullptr;
    for (const auto& [id, entry] : entries_) {
        if (entry.routes.count(rv)) return &entry;
    }
    return nullptr;
}

FilterTable FilterTable::restricted(const Key& rv) const {
    FilterTable out;
    for (const auto& [id, entry] : entries_) {
        auto route = entry.routes.find(rv);
        if (route == entry.routes.end()) continue;
        FilterEntry copy;
        copy.peer = entry.peer;
        copy.backups = entry.backups;
        copy.routes.emplace(rv, route->second);
        out.entries_.emplace(id, std::move(copy));
    }
    if (!out.entries_.empty()) out.counters_[rv] = out.entries_.size();
    return out;
}

const FilterEntry* FilterTable::find(const NodeId& peer) const {
    auto it = entries_.find(peer);
    return it == entries_.end() ? nullptr : &it->second;
}

std::set<Key> FilterTable::keys() const {
    std::set<Key> out;
    for (const auto& [key, n] : counters_) {
        if (n > 0) out.insert(key);
    }
    return out;
}

std::size_t FilterTable::filter_count() const {
    std::size_t n = 0;
    for (const auto& [id, entry] : entries_) n += entry.filter_count();
    return n;
}

void FilterTable::clear() {
    entries_.clear();
    counters_.clear();
}

bool FilterTable::audit() const {
    std::map<Key, std::size_t> recount;
    for (const auto& [id, entry] : entries_) {
        if (entry.peer.id != id || entry.routes.empty()) return false;
        for (const auto& [key, route] : entry.routes) {
            if (route.filters.empty()) return false;
            ++recount[key];
        }
    }
    for (const auto& [key, n] : counters_) {
        auto it = recount.find(key);
        if ((it == recount.end() ? 0 : it->second) != n) return false;
    }
    for (const auto& [key, n] : recount) {
        if (counter(key) != n) return false;
    }
    return true;
}

}  // namespace smartpubsub::scoutsubs
