#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

namespace smartpubsub::predicate {

/// Exact numeric value. Parsed from decimal literals, so every value has a
/// terminating decimal expansion.
using Number = boost::rational<std::int64_t>;

Number parse_number(std::string_view text);
std::string format_number(const Number& value);

enum class AttributeKind : std::uint8_t { Topic = 0, Range = 1 };

/// Topic(name) or Range(name, [lo, hi]); ranges are closed on both ends.
struct Attribute {
    AttributeKind kind = AttributeKind::Topic;
    std::string name;
    Number lo{0};
    Number hi{0};

    static Attribute topic(std::string_view name);
    static Attribute range(std::string_view name, Number lo, Number hi);

    bool is_topic() const { return kind == AttributeKind::Topic; }
    bool is_range() const { return kind == AttributeKind::Range; }
    bool is_point() const { return is_range() && lo == hi; }

    std::string to_string() const;

    friend bool operator==(const Attribute&, const Attribute&) = default;
};

/// Total order used for canonical layouts: topics before ranges, then name,
/// then bounds.
int compare(const Attribute& a, const Attribute& b);

enum class PredicateErrc { Syntax, InvalidRange, DuplicateAttribute, TooManyAttributes, Empty };

class PredicateError : public std::invalid_argument {
public:
    PredicateError(PredicateErrc code, std::size_t position, const std::string& what)
        : std::invalid_argument(what), code_(code), position_(position) {}

    PredicateErrc code() const { return code_; }
    std::size_t position() const { return position_; }

private:
    PredicateErrc code_;
    std::size_t position_;
};

/// Conjunction of attributes, kept in canonical order with at most one
/// attribute per (kind, name).
class Predicate {
public:
    static constexpr std::size_t kDefaultMaxAttributes = 16;

    /// Throws PredicateError on empty input, duplicates, lo > hi or more than
    /// max_attributes entries.
    explicit Predicate(std::vector<Attribute> attributes, std::size_t max_attributes = kDefaultMaxAttributes);

    /// Grammar: attr ('/' attr)* with attr := token | token '[' num ',' num ']'.
    static Predicate parse(std::string_view text, std::size_t max_attributes = kDefaultMaxAttributes);

    const std::vector<Attribute>& attributes() const { return attributes_; }
    std::size_t size() const { return attributes_.size(); }

    const Attribute* find(AttributeKind kind, std::string_view name) const;
    const Attribute* topic(std::string_view name) const { return find(AttributeKind::Topic, name); }
    const Attribute* range(std::string_view name) const { return find(AttributeKind::Range, name); }

    /// Distinct attribute names in canonical order; a topic and a range may
    /// share one name.
    std::vector<std::string> attribute_names() const;

    /// True when every range attribute is a point value.
    bool is_point_valued() const;

    std::string to_string() const;

    friend bool operator==(const Predicate&, const Predicate&) = default;
    friend bool operator<(const Predicate& a, const Predicate& b);

private:
    std::vector<Attribute> attributes_;
};

/// A predicate whose range attributes are point values (lo == hi).
class EventPredicate {
public:
    /// Throws PredicateError(InvalidRange) when a range is not a point.
    explicit EventPredicate(Predicate predicate);
    static EventPredicate parse(std::string_view text) { return EventPredicate(Predicate::parse(text)); }

    const Predicate& predicate() const { return predicate_; }
    std::string to_string() const { return predicate_.to_string(); }

    friend bool operator==(const EventPredicate&, const EventPredicate&) = default;

private:
    Predicate predicate_;
};

bool matches(const Predicate& subscription, const EventPredicate& event);

/// True iff every event matching `specific` also matches `general`.
bool covers(const Predicate& general, const Predicate& specific);

/// Single predicate whose match set is exactly the union of both inputs, when
/// one exists under the covering and range-union rules.
std::optional<Predicate> try_merge(const Predicate& a, const Predicate& b);

/// Inserts f into a merge-canonical set, merging until no pair combines.
/// Output is sorted; the union of match sets is preserved exactly.
std::vector<Predicate> filter_set_insert(std::vector<Predicate> set, const Predicate& f);

}  // namespace smartpubsub::predicate
