#include "smartpubsub/predicate/predicate.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <utility>

#include "smartpubsub/overlay/node_id.hpp"

namespace smartpubsub::predicate {

namespace {

constexpr std::size_t kMaxDigits = 15;

bool is_special(char c) { return c == '/' || c == '[' || c == ']' || c == ','; }

int compare_numbers(const Number& a, const Number& b) {
    if (a < b) return -1;
    if (b < a) return 1;
    return 0;
}

std::string canonical_token(std::string_view raw, std::size_t position) {
    std::string token = overlay::canonical_attribute(raw);
    if (token.empty()) throw PredicateError(PredicateErrc::Syntax, position, "empty attribute name");
    return token;
}

}  // namespace

Number parse_number(std::string_view text) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);

    bool negative = false;
    if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    if (text.empty()) throw PredicateError(PredicateErrc::Syntax, 0, "empty number");

    std::int64_t numerator = 0;
    std::int64_t denominator = 1;
    std::size_t digits = 0;
    bool seen_point = false;
    bool seen_digit = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.') {
            if (seen_point) throw PredicateError(PredicateErrc::Syntax, i, "second decimal point");
            seen_point = true;
            continue;
        }
        if (c < '0' || c > '9') throw PredicateError(PredicateErrc::Syntax, i, "bad character in number");
        seen_digit = true;
        if (++digits > kMaxDigits) throw PredicateError(PredicateErrc::Syntax, i, "number has too many digits");
        numerator = numerator * 10 + (c - '0');
        if (seen_point) denominator *= 10;
    }
    if (!seen_digit) throw PredicateError(PredicateErrc::Syntax, 0, "number without digits");
    return Number(negative ? -numerator : numerator, denominator);
}

std::string format_number(const Number& value) {
    std::int64_t num = value.numerator();
    std::int64_t den = value.denominator();
    std::string sign = num < 0 ? "-" : "";
    std::uint64_t mag = num < 0 ? static_cast<std::uint64_t>(-(num + 1)) + 1 : static_cast<std::uint64_t>(num);

    // Scale to a power-of-ten denominator; only 2s and 5s may remain.
    std::int64_t rest = den;
    unsigned twos = 0;
    unsigned fives = 0;
    while (rest % 2 == 0) { rest /= 2; ++twos; }
    while (rest % 5 == 0) { rest /= 5; ++fives; }
    if (rest != 1) throw std::domain_error("number has no terminating decimal form");

    unsigned places = std::max(twos, fives);
    std::uint64_t scaled = mag;
    for (unsigned i = twos; i < places; ++i) scaled *= 2;
    for (unsigned i = fives; i < places; ++i) scaled *= 5;

    std::string digits = std::to_string(scaled);
    if (places == 0) return sign + digits;
    if (digits.size() <= places) digits.insert(0, places - digits.size() + 1, '0');
    digits.insert(digits.size() - places, ".");
    return sign + digits;
}

Attribute Attribute::topic(std::string_view name) {
    Attribute a;
    a.kind = AttributeKind::Topic;
    a.name = canonical_token(name, 0);
    return a;
}

Attribute Attribute::range(std::string_view name, Number lo, Number hi) {
    Attribute a;
    a.kind = AttributeKind::Range;
    a.name = canonical_token(name, 0);
    a.lo = lo;
    a.hi = hi;
    return a;
}

std::string Attribute::to_string() const {
    if (is_topic()) return name;
    return name + "[" + format_number(lo) + "," + format_number(hi) + "]";
}

int compare(const Attribute& a, const Attribute& b) {
    if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
    if (int c = a.name.compare(b.name); c != 0) return c < 0 ? -1 : 1;
    if (int c = compare_numbers(a.lo, b.lo); c != 0) return c;
    return compare_numbers(a.hi, b.hi);
}

Predicate::Predicate(std::vector<Attribute> attributes, std::size_t max_attributes)
    : attributes_(std::move(attributes)) {
    if (attributes_.empty()) throw PredicateError(PredicateErrc::Empty, 0, "predicate has no attributes");
    if (attributes_.size() > max_attributes) {
        throw PredicateError(PredicateErrc::TooManyAttributes, 0, "predicate exceeds attribute limit");
    }
    for (const auto& a : attributes_) {
        if (a.name.empty()) throw PredicateError(PredicateErrc::Syntax, 0, "empty attribute name");
        if (a.is_range() && a.hi < a.lo) {
            throw PredicateError(PredicateErrc::InvalidRange, 0, "range '" + a.name + "' has lo > hi");
        }
    }
    std::sort(attributes_.begin(), attributes_.end(),
              [](const Attribute& a, const Attribute& b) { return compare(a, b) < 0; });
    for (std::size_t i = 1; i < attributes_.size(); ++i) {
        if (attributes_[i].kind == attributes_[i - 1].kind && attributes_[i].name == attributes_[i - 1].name) {
            throw PredicateError(PredicateErrc::DuplicateAttribute, 0,
                                 "duplicate attribute '" + attributes_[i].name + "'");
        }
    }
}

Predicate Predicate::parse(std::string_view text, std::size_t max_attributes) {
    std::vector<Attribute> attributes;
    std::set<std::pair<AttributeKind, std::string>> seen;
    std::size_t pos = 0;

    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw PredicateError(PredicateErrc::Empty, 0, "empty predicate text");
    }

    while (true) {
        std::size_t start = pos;
        while (pos < text.size() && !is_special(text[pos])) ++pos;
        std::string name = canonical_token(text.substr(start, pos - start), start);

        Attribute attr;
        if (pos < text.size() && text[pos] == '[') {
            std::size_t lo_start = ++pos;
            while (pos < text.size() && text[pos] != ',' && !is_special(text[pos])) ++pos;
            if (pos >= text.size() || text[pos] != ',') {
                throw PredicateError(PredicateErrc::Syntax, pos, "expected ',' in range");
            }
            std::size_t hi_start = ++pos;
            while (pos < text.size() && !is_special(text[pos])) ++pos;
            if (pos >= text.size() || text[pos] != ']') {
                throw PredicateError(PredicateErrc::Syntax, pos, "expected ']' closing range");
            }
            Number lo;
            Number hi;
            try {
                lo = parse_number(text.substr(lo_start, hi_start - 1 - lo_start));
                hi = parse_number(text.substr(hi_start, pos - hi_start));
            } catch (const PredicateError& e) {
                throw PredicateError(PredicateErrc::Syntax, lo_start, e.what());
            }
            ++pos;
            if (hi < lo) throw PredicateError(PredicateErrc::InvalidRange, start, "range '" + name + "' has lo > hi");
            attr.kind = AttributeKind::Range;
            attr.name = std::move(name);
            attr.lo = lo;
            attr.hi = hi;
            // Trailing blanks after ']' are tolerated.
            while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])) != 0) ++pos;
        } else {
            attr.kind = AttributeKind::Topic;
            attr.name = std::move(name);
        }

        if (!seen.emplace(attr.kind, attr.name).second) {
            throw PredicateError(PredicateErrc::DuplicateAttribute, start, "duplicate attribute '" + attr.name + "'");
        }
        attributes.push_back(std::move(attr));

        if (pos == text.size()) break;
        if (text[pos] != '/') throw PredicateError(PredicateErrc::Syntax, pos, "expected '/' between attributes");
        ++pos;
    }
    return Predicate(std::move(attributes), max_attributes);
}

const Attribute* Predicate::find(AttributeKind kind, std::string_view name) const {
    for (const auto& a : attributes_) {
        if (a.kind == kind && a.name == name) return &a;
    }
    return nullptr;
}

std::vector<std::string> Predicate::attribute_names() const {
    std::vector<std::string> names;
    for (const auto& a : attributes_) names.push_back(a.name);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

bool Predicate::is_point_valued() const {
    return std::all_of(attributes_.begin(), attributes_.end(),
                       [](const Attribute& a) { return a.is_topic() || a.is_point(); });
}

std::string Predicate::to_string() const {
    std::string out;
    for (const auto& a : attributes_) {
        if (!out.empty()) out.push_back('/');
        out += a.to_string();
    }
    return out;
}

bool operator<(const Predicate& a, const Predicate& b) {
    std::size_t n = std::min(a.attributes_.size(), b.attributes_.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (int c = compare(a.attributes_[i], b.attributes_[i]); c != 0) return c < 0;
    }
    return a.attributes_.size() < b.attributes_.size();
}

EventPredicate::EventPredicate(Predicate predicate) : predicate_(std::move(predicate)) {
    if (!predicate_.is_point_valued()) {
        throw PredicateError(PredicateErrc::InvalidRange, 0, "event ranges must be point values");
    }
}

bool matches(const Predicate& subscription, const EventPredicate& event) {
    const Predicate& ev = event.predicate();
    for (const auto& a : subscription.attributes()) {
        const Attribute* e = ev.find(a.kind, a.name);
        if (e == nullptr) return false;
        if (a.is_range() && (e->lo < a.lo || a.hi < e->lo)) return false;
    }
    return true;
}

bool covers(const Predicate& general, const Predicate& specific) {
    for (const auto& g : general.attributes()) {
        const Attribute* s = specific.find(g.kind, g.name);
        if (s == nullptr) return false;
        if (g.is_range() && (s->lo < g.lo || g.hi < s->hi)) return false;
    }
    return true;
}

std::optional<Predicate> try_merge(const Predicate& a, const Predicate& b) {
    if (covers(a, b)) return a;
    if (covers(b, a)) return b;

    const auto& xs = a.attributes();
    const auto& ys = b.attributes();
    if (xs.size() != ys.size()) return std::nullopt;

    std::optional<std::size_t> differing;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].kind != ys[i].kind || xs[i].name != ys[i].name) return std::nullopt;
        if (xs[i] == ys[i]) continue;
        if (differing) return std::nullopt;
        differing = i;
    }
    if (!differing) return a;

    const Attribute& x = xs[*differing];
    const Attribute& y = ys[*differing];
    // Closed intervals union to one interval iff they overlap or share an endpoint.
    if (std::max(x.lo, y.lo) > std::min(x.hi, y.hi)) return std::nullopt;

    std::vector<Attribute> merged = xs;
    merged[*differing].lo = std::min(x.lo, y.lo);
    merged[*differing].hi = std::max(x.hi, y.hi);
    std::size_t limit = std::max(merged.size(), Predicate::kDefaultMaxAttributes);
    return Predicate(std::move(merged), limit);
}

std::vector<Predicate> filter_set_insert(std::vector<Predicate> set, const Predicate& f) {
    Predicate candidate = f;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto it = set.begin(); it != set.end(); ++it) {
            if (auto merged = try_merge(*it, candidate)) {
                candidate = std::move(*merged);
                set.erase(it);
                changed = true;
                break;
            }
        }
    }
    auto pos = std::lower_bound(set.begin(), set.end(), candidate);
    set.insert(pos, std::move(candidate));
    return set;
}

}  // namespace smartpubsub::predicate
