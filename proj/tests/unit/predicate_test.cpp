#include <doctest.h>

#include <random>

#include "smartpubsub/predicate/predicate.hpp"

using namespace smartpubsub::predicate;

namespace {

// Small event universe: any subset of three topics, and for two range
// attributes either absent or an integer point in 0..4.
std::vector<EventPredicate> event_universe() {
    const char* topics[] = {"football", "tom-brady", "apple"};
    std::vector<EventPredicate> out;
    for (int mask = 0; mask < 8; ++mask) {
        for (int price = -1; price <= 4; ++price) {
            for (int goals = -1; goals <= 4; ++goals) {
                std::vector<Attribute> attrs;
                for (int t = 0; t < 3; ++t) {
                    if ((mask >> t) & 1) attrs.push_back(Attribute::topic(topics[t]));
                }
                if (price >= 0) attrs.push_back(Attribute::range("price", price, price));
                if (goals >= 0) attrs.push_back(Attribute::range("goals", goals, goals));
                if (attrs.empty()) continue;
                out.emplace_back(Predicate(attrs));
            }
        }
    }
    return out;
}

// Independent oracle for set-level claims: match decisions over the universe.
bool covers_by_enumeration(const Predicate& general, const Predicate& specific) {
    for (const auto& e : event_universe()) {
        if (matches(specific, e) && !matches(general, e)) return false;
    }
    return true;
}

Predicate random_predicate(std::mt19937_64& rng) {
    const char* topics[] = {"football", "tom-brady", "apple"};
    const char* ranges[] = {"price", "goals"};
    std::vector<Attribute> attrs;
    for (const char* t : topics) {
        if (rng() % 3 == 0) attrs.push_back(Attribute::topic(t));
    }
    for (const char* r : ranges) {
        if (rng() % 2 == 0) {
            int lo = static_cast<int>(rng() % 5);
            int hi = lo + static_cast<int>(rng() % (5 - lo));
            attrs.push_back(Attribute::range(r, lo, hi));
        }
    }
    if (attrs.empty()) attrs.push_back(Attribute::topic(topics[rng() % 3]));
    return Predicate(attrs);
}

}  // namespace

TEST_CASE("parse_predicate") {
    auto p = Predicate::parse("apple/france/price[0,1]");
    REQUIRE(p.size() == 3);
    CHECK(p.topic("apple"));
    CHECK(p.topic("france"));
    REQUIRE(p.range("price"));
    CHECK(p.range("price")->lo == Number(0));
    CHECK(p.range("price")->hi == Number(1));
    CHECK(p.to_string() == "apple/france/price[0,1]");

    auto single = Predicate::parse("football");
    CHECK(single.size() == 1);
    CHECK(single.topic("football"));

    CHECK(Predicate::parse("  Tom Brady /Football").to_string() == "football/tom-brady");
    CHECK(Predicate::parse("price[0.5, 2.25]/x").to_string() == "x/price[0.5,2.25]");
    CHECK(Predicate::parse("t[-1.5,0]").range("t")->lo == Number(-3, 2));
}

TEST_CASE("parse_predicate errors") {
    auto code_of = [](const char* text) {
        try {
            Predicate::parse(text);
        } catch (const PredicateError& e) {
            return e.code();
        }
        FAIL("expected a parse error for ", text);
        return PredicateErrc::Syntax;
    };
    CHECK(code_of("price[3,1]") == PredicateErrc::InvalidRange);
    CHECK(code_of("a/a") == PredicateErrc::DuplicateAttribute);
    CHECK(code_of("p[0,1]/p[2,3]") == PredicateErrc::DuplicateAttribute);
    CHECK(code_of("") == PredicateErrc::Empty);
    CHECK(code_of("a//b") == PredicateErrc::Syntax);
    CHECK(code_of("a[1,2") == PredicateErrc::Syntax);
    CHECK(code_of("a[x,2]") == PredicateErrc::Syntax);
    CHECK(code_of("a]") == PredicateErrc::Syntax);
    CHECK(code_of("a/b/c/d/e/f/g/h/i/j/k/l/m/n/o/p/q") == PredicateErrc::TooManyAttributes);

    try {
        Predicate::parse("abc/d[1;2]");
        FAIL("expected error");
    } catch (const PredicateError& e) {
        CHECK(e.position() >= 4);
    }
    // Same name as topic and range is two distinct attributes.
    CHECK(Predicate::parse("price/price[1,2]").size() == 2);
}

TEST_CASE("event predicates need point values") {
    CHECK_NOTHROW(EventPredicate::parse("football/goals[2,2]"));
    CHECK_THROWS_AS(EventPredicate::parse("football/goals[2,3]"), PredicateError);
}

TEST_CASE("matches") {
    CHECK(matches(Predicate::parse("football/tom-brady"), EventPredicate::parse("football/tom-brady/goals[2,2]")));
    CHECK_FALSE(matches(Predicate::parse("apple/france/price[0,1]"), EventPredicate::parse("apple/france/price[2,2]")));
    CHECK(matches(Predicate::parse("apple/price[1,1]"), EventPredicate::parse("apple/price[1,1]")));
    CHECK(matches(Predicate::parse("apple/price[0,1]"), EventPredicate::parse("apple/price[1,1]")));
    CHECK_FALSE(matches(Predicate::parse("apple/price[0,1]"), EventPredicate::parse("apple")));
    CHECK_FALSE(matches(Predicate::parse("price"), EventPredicate::parse("price[1,1]")));
}

TEST_CASE("covers") {
    auto football = Predicate::parse("football");
    auto brady = Predicate::parse("football/tom-brady");
    CHECK(covers(football, brady));
    CHECK(covers_by_enumeration(football, brady));
    CHECK_FALSE(covers(brady, football));
    CHECK_FALSE(covers_by_enumeration(brady, football));
    CHECK(covers(brady, brady));
    CHECK(covers(Predicate::parse("price[0,4]"), Predicate::parse("price[1,2]/apple")));
    CHECK_FALSE(covers(Predicate::parse("price[1,4]"), Predicate::parse("price[0,2]")));
}

TEST_CASE("try_merge") {
    auto m1 = try_merge(Predicate::parse("football"), Predicate::parse("football/tom-brady"));
    REQUIRE(m1);
    CHECK(m1->to_string() == "football");

    auto m2 = try_merge(Predicate::parse("apple/price[0,1]"), Predicate::parse("apple/price[1,3]"));
    REQUIRE(m2);
    CHECK(m2->to_string() == "apple/price[0,3]");
    // Oracle: integer points 0..4 under the union of the inputs.
    for (int v = 0; v <= 4; ++v) {
        auto ev = EventPredicate(Predicate({Attribute::topic("apple"), Attribute::range("price", v, v)}));
        bool either = matches(Predicate::parse("apple/price[0,1]"), ev) || matches(Predicate::parse("apple/price[1,3]"), ev);
        CHECK(matches(*m2, ev) == either);
    }

    CHECK_FALSE(try_merge(Predicate::parse("football"), Predicate::parse("basketball")));
    CHECK_FALSE(try_merge(Predicate::parse("apple/price[0,1]"), Predicate::parse("apple/price[2,3]")));
    CHECK_FALSE(try_merge(Predicate::parse("a/price[0,1]/x[0,1]"), Predicate::parse("a/price[1,2]/x[1,2]")));
    CHECK_FALSE(try_merge(Predicate::parse("a/price[0,1]"), Predicate::parse("b/price[1,2]")));
}

TEST_CASE("filter_set_insert") {
    auto f = Predicate::parse("football");
    auto s1 = filter_set_insert({}, f);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0] == f);

    auto s2 = filter_set_insert({f}, Predicate::parse("football/tom-brady"));
    REQUIRE(s2.size() == 1);
    CHECK(s2[0] == f);

    auto s3 = filter_set_insert({Predicate::parse("apple/price[0,1]")}, Predicate::parse("apple/price[1,2]"));
    REQUIRE(s3.size() == 1);
    CHECK(s3[0].to_string() == "apple/price[0,2]");

    // Bridging interval collapses two stored filters into one.
    auto s4 = filter_set_insert({Predicate::parse("a/p[0,1]"), Predicate::parse("a/p[3,4]")}, Predicate::parse("a/p[1,3]"));
    REQUIRE(s4.size() == 1);
    CHECK(s4[0].to_string() == "a/p[0,4]");

    // Covering filter absorbs several specific ones.
    auto s5 = filter_set_insert({Predicate::parse("a/b"), Predicate::parse("a/c")}, Predicate::parse("a"));
    REQUIRE(s5.size() == 1);
    CHECK(s5[0].to_string() == "a");
}

TEST_CASE("number formatting") {
    CHECK(format_number(Number(0)) == "0");
    CHECK(format_number(Number(-3, 2)) == "-1.5");
    CHECK(format_number(Number(1, 8)) == "0.125");
    CHECK(format_number(Number(1, 100)) == "0.01");
    CHECK(format_number(parse_number("12.50")) == "12.5");
    CHECK_THROWS_AS(format_number(Number(1, 3)), std::domain_error);
}

TEST_CASE("property: covering implies matching") {
    std::mt19937_64 rng(1234);
    auto universe = event_universe();
    for (int i = 0; i < 400; ++i) {
        auto g = random_predicate(rng);
        auto s = random_predicate(rng);
        bool c = covers(g, s);
        CHECK(c == covers_by_enumeration(g, s));
        if (!c) continue;
        for (const auto& e : universe) {
            if (matches(s, e)) REQUIRE(matches(g, e));
        }
    }
}

TEST_CASE("property: merge soundness") {
    std::mt19937_64 rng(99);
    auto universe = event_universe();
    int merged_count = 0;
    for (int i = 0; i < 2000; ++i) {
        auto a = random_predicate(rng);
        auto b = random_predicate(rng);
        auto m = try_merge(a, b);
        if (!m) continue;
        ++merged_count;
        for (const auto& e : universe) {
            REQUIRE(matches(*m, e) == (matches(a, e) || matches(b, e)));
        }
    }
    CHECK(merged_count > 50);
}

TEST_CASE("property: filter_set_insert preserves the match union") {
    std::mt19937_64 rng(5);
    auto universe = event_universe();
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Predicate> raw;
        std::vector<Predicate> merged;
        for (int i = 0; i < 8; ++i) {
            auto p = random_predicate(rng);
            raw.push_back(p);
            merged = filter_set_insert(merged, p);
            REQUIRE(std::is_sorted(merged.begin(), merged.end()));
            for (std::size_t x = 0; x < merged.size(); ++x) {
                for (std::size_t y = x + 1; y < merged.size(); ++y) REQUIRE_FALSE(try_merge(merged[x], merged[y]));
            }
        }
        for (const auto& e : universe) {
            bool want = std::any_of(raw.begin(), raw.end(), [&](const Predicate& p) { return matches(p, e); });
            bool got = std::any_of(merged.begin(), merged.end(), [&](const Predicate& p) { return matches(p, e); });
            REQUIRE(want == got);
        }
    }
}

TEST_CASE("property: parse round-trip") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 500; ++i) {
        auto p = random_predicate(rng);
        REQUIRE(Predicate::parse(p.to_string()) == p);
    }
    auto frac = Predicate({Attribute::range("t", Number(-7, 4), Number(3, 5))});
    CHECK(Predicate::parse(frac.to_string()) == frac);
}
