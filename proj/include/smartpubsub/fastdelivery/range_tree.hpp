#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "smartpubsub/predicate/predicate.hpp"

namespace smartpubsub::fastdelivery {

using predicate::Number;

/// Interval tree over closed intervals of one numeric attribute. Items are
/// kept sorted by low endpoint; the tree is the implicit balanced binary
/// tree over that order, each node augmented with its subtree's max high.
template <typename Id>
class RangeTree {
public:
    struct Item {
        Number lo;
        Number hi;
        Id id;
    };

    void insert(const Id& id, const Number& lo, const Number& hi) {
        erase(id);
        Item item{lo, hi, id};
        auto pos = std::upper_bound(items_.begin(), items_.end(), item, [](const Item& a, const Item& b) {
            return a.lo != b.lo ? a.lo < b.lo : a.id < b.id;
        });
        items_.insert(pos, item);
        rebuild();
    }

    bool erase(const Id& id) {
        auto it = std::find_if(items_.begin(), items_.end(), [&](const Item& i) { return i.id == id; });
        if (it == items_.end()) return false;
        items_.erase(it);
        rebuild();
        return true;
    }

    /// Ids whose interval contains v, ascending.
    std::vector<Id> query(const Number& v) const {
        std::vector<Id> out;
        if (!items_.empty()) visit(0, items_.size(), v, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const std::vector<Item>& items() const { return items_; }

    /// Sorted by low endpoint and every subtree max equals a recount.
    bool audit() const {
        for (std::size_t i = 1; i < items_.size(); ++i) {
            if (items_[i].lo < items_[i - 1].lo) return false;
        }
        for (const auto& i : items_) {
            if (i.hi < i.lo) return false;
        }
        return items_.empty() || check(0, items_.size());
    }

private:
    // Node for range [b, e) is its midpoint; max_hi_ is indexed by midpoint.
    static std::size_t mid(std::size_t b, std::size_t e) { return b + (e - b) / 2; }

    Number build(std::size_t b, std::size_t e) {
        std::size_t m = mid(b, e);
        Number best = items_[m].hi;
        if (b < m) best = std::max(best, build(b, m));
        if (m + 1 < e) best = std::max(best, build(m + 1, e));
        max_hi_[m] = best;
        return best;
    }

    void rebuild() {
        max_hi_.assign(items_.size(), Number(0));
        if (!items_.empty()) build(0, items_.size());
    }

    void visit(std::size_t b, std::size_t e, const Number& v, std::vector<Id>& out) const {
        std::size_t m = mid(b, e);
        if (max_hi_[m] < v) return;
        if (b < m) visit(b, m, v, out);
        if (v < items_[m].lo) return;  // everything to the right starts later
        if (v <= items_[m].hi) out.push_back(items_[m].id);
        if (m + 1 < e) visit(m + 1, e, v, out);
    }

    bool check(std::size_t b, std::size_t e) const {
        std::size_t m = mid(b, e);
        Number best = items_[m].hi;
        for (std::size_t i = b; i < e; ++i) best = std::max(best, items_[i].hi);
        if (max_hi_[m] != best) return false;
        if (b < m && !check(b, m)) return false;
        if (m + 1 < e && !check(m + 1, e)) return false;
        return true;
    }

    std::vector<Item> items_;
    std::vector<Number> max_hi_;
};

}  // namespace smartpubsub::fastdelivery
