#include "smartpubsub/fastdelivery/group.hpp"

#include <algorithm>

namespace smartpubsub::fastdelivery {

std::string GroupId::to_string() const { return publisher.hex(64) + ":" + predicate.to_string(); }

bool uses_group_attributes(const Predicate& group, const Predicate& sub) {
    for (const auto& a : sub.attributes()) {
        if (!group.find(a.kind, a.name)) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

SubscriberIndex::SubscriberIndex(Predicate group) : group_(std::move(group)) {
    for (const auto& a : group_.attributes()) {
        if (!a.is_range()) continue;
        trees_[a.name];
        unconstrained_[a.name];
    }
}

void SubscriberIndex::insert(const SubscriberRecord& rec) {
    erase(rec.id);
    records_.insert_or_assign(rec.id, rec);
    for (auto& [name, tree] : trees_) {
        if (const auto* r = rec.predicate.range(name)) {
            tree.insert(rec.id, r->lo, r->hi);
        } else {
            unconstrained_[name].insert(rec.id);
        }
    }
}

bool SubscriberIndex::erase(const SubscriptionId& id) {
    if (records_.erase(id) == 0) return false;
    for (auto& [name, tree] : trees_) {
        tree.erase(id);
        unconstrained_[name].erase(id);
    }
    return true;
}

const SubscriberRecord* SubscriberIndex::find(const SubscriptionId& id) const {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
}

std::vector<const SubscriberRecord*> SubscriberIndex::match(const EventPredicate& ev, std::size_t& checks) const {
    std::optional<std::set<SubscriptionId>> candidates;
    for (const auto& [name, tree] : trees_) {
        ++checks;
        std::set<SubscriptionId> allowed = unconstrained_.at(name);
        if (const auto* r = ev.predicate().range(name)) {
            for (const auto& id : tree.query(r->lo)) allowed.insert(id);
        }
        if (!candidates) {
            candidates = std::move(allowed);
        } else {
            std::set<SubscriptionId> both;
            std::set_intersection(candidates->begin(), candidates->end(), allowed.begin(), allowed.end(),
                                  std::inserter(both, both.end()));
            candidates = std::move(both);
        }
    }

    auto topics_present = [&](const SubscriberRecord& rec) {
        ++checks;
        for (const auto& a : rec.predicate.attributes()) {
            if (a.is_topic() && !ev.predicate().topic(a.name)) return false;
        }
        return true;
    };
    std::vector<const SubscriberRecord*> out;
    if (candidates) {
        for (const auto& id : *candidates) {
            const auto& rec = records_.at(id);
            if (topics_present(rec)) out.push_back(&rec);
        }
    } else {
        for (const auto& [id, rec] : records_) {
            if (topics_present(rec)) out.push_back(&rec);
        }
    }
    return out;
}

bool SubscriberIndex::audit() const {
    for (const auto& [name, tree] : trees_) {
        if (!tree.audit()) return false;
        const auto& loose = unconstrained_.at(name);
        if (tree.size() + loose.size() != records_.size()) return false;
        for (const auto& item : tree.items()) {
            auto it = records_.find(item.id);
            if (it == records_.end()) return false;
            const auto* r = it->second.predicate.range(name);
            if (!r || r->lo != item.lo || r->hi != item.hi) return false;
        }
        for (const auto& id : loose) {
            auto it = records_.find(id);
            if (it == records_.end() || it->second.predicate.range(name)) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

MulticastGroup::MulticastGroup(GroupId id, std::size_t threshold)
    : id_(std::move(id)), threshold_(threshold), direct_(id_.predicate) {}

const SubscriberRecord* MulticastGroup::record_of(const SubscriptionId& id) const {
    if (const auto* r = direct_.find(id)) return r;
    auto it = helpers_.find(id);
    return it == helpers_.end() ? nullptr : &it->second.helper;
}

void MulticastGroup::insert_sorted(sim::RegionId region, const SubscriptionId& id) {
    auto& list = regions_[region];
    unsigned cap = record_of(id)->capacity;
    auto pos = std::find_if(list.begin(), list.end(), [&](const SubscriptionId& other) {
        unsigned c = record_of(other)->capacity;
        return c < cap || (c == cap && id < other);
    });
    list.insert(pos, id);
}

MulticastGroup::AddResult MulticastGroup::add(const SubscriberRecord& rec) {
    if (!uses_group_attributes(id_.predicate, rec.predicate)) return AddResult::Rejected;
    for (const auto& r : all_records()) {
        if (r.id == rec.id) return AddResult::Duplicate;
    }
    direct_.insert(rec);
    insert_sorted(rec.region, rec.id);
    return AddResult::Added;
}

std::size_t MulticastGroup::fanout(sim::RegionId region) const {
    auto it = regions_.find(region);
    return it == regions_.end() ? 0 : it->second.size();
}

std::vector<MulticastGroup::Delegation> MulticastGroup::rebalance(sim::RegionId region,
                                                                  const std::set<SubscriptionId>& skip) {
    std::set<SubscriptionId> changed;
    auto& list = regions_[region];

    // Lowest-capacity managed member other than `except`.
    auto tail_member = [&](const SubscriptionId& except) -> std::optional<SubscriptionId> {
        for (auto it = list.rbegin(); it != list.rend(); ++it) {
            if (*it != except && direct_.contains(*it)) return *it;
        }
        return std::nullopt;
    };
    auto delegate_one = [&](HelperEntry& h) {
        auto member = tail_member(h.helper.id);
        if (!member) return false;
        h.delegated.push_back(*direct_.find(*member));
        direct_.erase(*member);
        list.erase(std::find(list.begin(), list.end(), *member));
        changed.insert(h.helper.id);
        return true;
    };

    while (list.size() > threshold_) {
        bool progressed = false;
        for (const auto& id : list) {
            auto h = helpers_.find(id);
            if (h == helpers_.end() || h->second.delegated.size() >= h->second.helper.capacity) continue;
            progressed = delegate_one(h->second);
            break;
        }
        if (progressed) continue;

        std::optional<SubscriptionId> candidate;
        for (const auto& id : list) {
            const auto* r = direct_.find(id);
            if (r && r->capacity > 0 && !skip.count(id)) {
                candidate = id;
                break;
            }
        }
        if (!candidate) break;
        HelperEntry entry{*direct_.find(*candidate), {}};
        direct_.erase(*candidate);
        auto& h = helpers_.emplace(*candidate, std::move(entry)).first->second;
        while (h.delegated.size() < h.helper.capacity) {
            if (!delegate_one(h)) break;
        }
        if (h.delegated.empty()) {
            // Nobody left to delegate; recruiting would not reduce fanout.
            direct_.insert(h.helper);
            helpers_.erase(*candidate);
            break;
        }
    }

    std::vector<Delegation> out;
    for (const auto& id : changed) {
        auto it = helpers_.find(id);
        if (it != helpers_.end()) out.push_back(Delegation{id, it->second.delegated});
    }
    return out;
}

std::vector<SubscriberRecord> MulticastGroup::reabsorb(const SubscriptionId& helper) {
    auto it = helpers_.find(helper);
    if (it == helpers_.end()) return {};
    auto delegated = std::move(it->second.delegated);
    auto region = it->second.helper.region;
    helpers_.erase(it);
    auto& list = regions_[region];
    list.erase(std::remove(list.begin(), list.end(), helper), list.end());
    for (const auto& d : delegated) {
        direct_.insert(d);
        insert_sorted(d.region, d.id);
    }
    return delegated;
}

void MulticastGroup::undo_recruitment(const SubscriptionId& helper) {
    auto it = helpers_.find(helper);
    if (it == helpers_.end()) return;
    auto entry = std::move(it->second);
    helpers_.erase(it);
    direct_.insert(entry.helper);
    for (const auto& d : entry.delegated) {
        direct_.insert(d);
        insert_sorted(d.region, d.id);
    }
}

bool MulticastGroup::remove(const SubscriptionId& id) {
    if (const auto* r = direct_.find(id)) {
        auto& list = regions_[r->region];
        list.erase(std::remove(list.begin(), list.end(), id), list.end());
        direct_.erase(id);
        return true;
    }
    for (auto& [hid, h] : helpers_) {
        auto it = std::find_if(h.delegated.begin(), h.delegated.end(),
                               [&](const SubscriberRecord& r) { return r.id == id; });
        if (it != h.delegated.end()) {
            h.delegated.erase(it);
            return true;
        }
    }
    return false;
}

MulticastGroup::Plan MulticastGroup::route(const EventPredicate& ev, std::size_t& checks) const {
    Plan plan;
    plan.direct = direct_.match(ev, checks);
    for (const auto& [id, h] : helpers_) plan.helpers.push_back(&h);
    return plan;
}

std::vector<SubscriberRecord> MulticastGroup::all_records() const {
    std::vector<SubscriberRecord> out;
    for (const auto& [id, r] : direct_.records()) out.push_back(r);
    for (const auto& [id, h] : helpers_) {
        out.push_back(h.helper);
        out.insert(out.end(), h.delegated.begin(), h.delegated.end());
    }
    return out;
}

std::size_t MulticastGroup::size() const { return all_records().size(); }

bool MulticastGroup::audit() const {
    std::set<SubscriptionId> seen;
    for (const auto& r : all_records()) {
        if (!seen.insert(r.id).second) return false;
        if (!uses_group_attributes(id_.predicate, r.predicate)) return false;
    }
    for (const auto& [id, h] : helpers_) {
        if (h.helper.id != id || direct_.contains(id)) return false;
        if (h.delegated.size() > h.helper.capacity) return false;
        for (const auto& d : h.delegated) {
            if (d.region != h.helper.region) return false;
        }
    }
    std::size_t listed = 0;
    for (const auto& [region, list] : regions_) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto* r = record_of(list[i]);
            if (!r || r->region != region) return false;
            if (i > 0) {
                const auto* prev = record_of(list[i - 1]);
                if (prev->capacity < r->capacity) return false;
                if (prev->capacity == r->capacity && !(list[i - 1] < list[i])) return false;
            }
        }
        listed += list.size();
    }
    if (listed != direct_.size() + helpers_.size()) return false;
    return direct_.audit();
}

}  // namespace smartpubsub::fastdelivery
