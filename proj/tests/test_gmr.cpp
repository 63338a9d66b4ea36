#include <catch_amalgamated.hpp>

#include "djoin/gmr.hpp"
#include "testutil.hpp"

using namespace djoin;
using testutil::make_gmr;

namespace {

Gmr fig_R() {
    return make_gmr({"x", "y", "z"}, {{{1, 2, 2}, 2}, {{2, 4, 6}, 3}, {{1, 2, 3}, 3}});
}
Gmr fig_S() {
    return make_gmr({"u", "v"}, {{{4, 5}, 5}, {{2, 3}, 4}, {{1, 4}, 2}});
}
Gmr fig_T() {
    return make_gmr({"u", "v"}, {{{4, 5}, -4}, {{2, 1}, 6}, {{1, 4}, 3}});
}

}  // namespace

TEST_CASE("union reproduces the S+T table") {
    Gmr expect =
        make_gmr({"u", "v"}, {{{4, 5}, 1}, {{2, 3}, 4}, {{1, 4}, 5}, {{2, 1}, 6}});
    CHECK(gmr_union(fig_S(), fig_T()) == expect);
}

TEST_CASE("union identity and inverse") {
    Gmr s = fig_S();
    Gmr empty{s.schema()};
    CHECK(gmr_union(s, empty) == s);
    CHECK(gmr_union(s, negate(s)).empty());
}

TEST_CASE("union rejects mismatched schemas") {
    CHECK_THROWS_AS(gmr_union(fig_R(), fig_S()), SchemaMismatchError);
}

TEST_CASE("minus reproduces the S-T table") {
    Gmr expect =
        make_gmr({"u", "v"}, {{{4, 5}, 9}, {{2, 3}, 4}, {{1, 4}, -1}, {{2, 1}, -6}});
    CHECK(gmr_minus(fig_S(), fig_T()) == expect);
    CHECK(gmr_minus(fig_S(), fig_S()).empty());
    Gmr empty{fig_T().schema()};
    CHECK(gmr_minus(empty, fig_T()) == negate(fig_T()));
}

TEST_CASE("projection reproduces the pi_y(R) table") {
    Gmr expect = make_gmr({"y"}, {{{2}, 5}, {{4}, 3}});
    CHECK(project(fig_R(), Hyperedge{"y"}) == expect);
}

TEST_CASE("projection identity and empty-target cancellation") {
    Gmr r = fig_R();
    CHECK(project(r, r.schema()) == r);

    // Multiplicities of opposite sign cancel under the empty projection.
    Gmr mixed = make_gmr({"a", "b"}, {{{1, 2}, 4}, {{3, 4}, -4}});
    int64_t total = 0;
    for (const auto& [t, m] : mixed.entries()) total += m;
    REQUIRE(total == 0);
    CHECK(project(mixed, Hyperedge{}).empty());

    CHECK_THROWS_AS(project(fig_S(), Hyperedge{"y"}), SchemaMismatchError);
}

TEST_CASE("natural join reproduces the S join T table") {
    Gmr expect = make_gmr({"u", "v"}, {{{4, 5}, -20}, {{1, 4}, 6}});
    CHECK(join(fig_S(), fig_T()) == expect);
}

TEST_CASE("join with unit is the identity; disjoint schemas cross-multiply") {
    Gmr r = fig_R();
    CHECK(join(r, Gmr::unit()) == r);

    Gmr a = make_gmr({"a"}, {{{1}, 1}, {{2}, 2}});
    Gmr b = make_gmr({"b"}, {{{7}, 1}, {{8}, 1}, {{9}, 3}});
    Gmr prod = join(a, b);
    CHECK(prod.size() == 6);
    CHECK(prod.multiplicity(tuple_of(Hyperedge{"a", "b"}, {{"a", 2}, {"b", 9}})) == 6);
}

TEST_CASE("selection keeps exactly the satisfying entries") {
    Gmr t = fig_T();
    PredicateSet lt{Predicate::var_cmp_var("u", CmpOp::Lt, "v")};
    Gmr expect = make_gmr({"u", "v"}, {{{4, 5}, -4}, {{1, 4}, 3}});
    CHECK(select(t, lt) == expect);

    CHECK(select(t, {}) == t);

    PredicateSet none{Predicate::var_cmp_const("u", CmpOp::Gt, Value(100))};
    CHECK(select(t, none).empty());

    PredicateSet unbound{Predicate::var_cmp_var("u", CmpOp::Lt, "w")};
    CHECK_THROWS_AS(select(t, unbound), UnboundPredicateVariableError);
}

TEST_CASE("theta join reproduces the R join_{y<u} S table") {
    PredicateSet theta{Predicate::var_cmp_var("y", CmpOp::Lt, "u")};
    Gmr expect = make_gmr({"x", "y", "z", "u", "v"},
                          {{{1, 2, 2, 4, 5}, 10}, {{1, 2, 3, 4, 5}, 15}});
    CHECK(theta_join(fig_R(), fig_S(), theta) == expect);
}

TEST_CASE("theta join with no predicates is the natural join") {
    CHECK(theta_join(fig_S(), fig_T(), {}) == join(fig_S(), fig_T()));
}

TEST_CASE("theta join equals select-after-join on random inputs") {
    testutil::Rng rng(20240117);
    for (int trial = 0; trial < 20; ++trial) {
        Gmr r = testutil::random_gmr(rng, Hyperedge{"a", "b"}, 50, 8, false);
        Gmr s = testutil::random_gmr(rng, Hyperedge{"b", "c"}, 50, 8, false);
        PredicateSet theta{Predicate::var_cmp_var("a", CmpOp::Lt, "c")};
        CHECK(theta_join(r, s, theta) == select(join(r, s), theta));
    }
}

TEST_CASE("semijoin composes theta join and projection") {
    // rho_{y,z,w} and rho_u from the worked reduct, joined under w<u.
    Gmr lhs = make_gmr({"y", "z", "w"}, {{{1, 3, 3}, 12}, {{2, 4, 6}, 15}});
    Gmr rhs = make_gmr({"u"}, {{{4}, 7}, {{2}, 4}});
    PredicateSet theta{Predicate::var_cmp_var("w", CmpOp::Lt, "u")};
    Gmr expect = make_gmr({"y", "z", "w"}, {{{1, 3, 3}, 84}});
    CHECK(semijoin(lhs, rhs, theta) == expect);
    CHECK(semijoin(lhs, rhs, theta) == project(theta_join(lhs, rhs, theta), lhs.schema()));

    Gmr none = make_gmr({"u"}, {{{1}, 5}});
    CHECK(semijoin(lhs, none, theta).empty());

    // Empty predicate set over a shared schema scales multiplicities by the
    // total matching multiplicity.
    Gmr a = make_gmr({"k"}, {{{1}, 2}, {{2}, 5}});
    Gmr b = make_gmr({"k"}, {{{1}, 3}, {{3}, 9}});
    CHECK(semijoin(a, b, {}) == make_gmr({"k"}, {{{1}, 6}}));
}

TEST_CASE("apply_single inserts, accumulates and evicts") {
    Gmr t = fig_T();
    Tuple nt = tuple_of(t.schema(), {{"u", 4}, {"v", 9}});
    t.apply_single(nt, 3);
    CHECK(t.multiplicity(nt) == 3);

    t.apply_single(nt, -3);
    CHECK(t == fig_T());

    Tuple existing = tuple_of(t.schema(), {{"u", 2}, {"v", 1}});
    t.apply_single(existing, -t.multiplicity(existing));
    CHECK_FALSE(t.contains(existing));

    CHECK_THROWS_AS(t.apply_single(nt, 0), ZeroDeltaError);
    CHECK_THROWS_AS(t.apply_single(Tuple({Value(1)}), 1), SchemaMismatchError);
}

TEST_CASE("algebraic laws on random GMRs") {
    testutil::Rng rng(7);
    Hyperedge sch{"a", "b"};
    for (int trial = 0; trial < 25; ++trial) {
        Gmr r = testutil::random_gmr(rng, sch, 30, 6, false);
        Gmr s = testutil::random_gmr(rng, sch, 30, 6, false);
        CHECK(gmr_union(r, s) == gmr_union(s, r));
        CHECK(gmr_minus(r, s) == gmr_union(r, negate(s)));
        CHECK(gmr_union(gmr_minus(r, s), s) == r);
        // Projection distributes over union.
        Hyperedge z{"a"};
        CHECK(project(gmr_union(r, s), z) == gmr_union(project(r, z), project(s, z)));
    }
}

TEST_CASE("no operation output carries a zero multiplicity") {
    testutil::Rng rng(99);
    Hyperedge sch{"a", "b"};
    for (int trial = 0; trial < 10; ++trial) {
        Gmr r = testutil::random_gmr(rng, sch, 25, 4, false);
        Gmr s = testutil::random_gmr(rng, sch, 25, 4, false);
        for (const Gmr* g : {&r, &s}) CHECK(g->multiplicity(Tuple({Value(0), Value(0)})) == 0);
        for (const auto& [t, m] : gmr_union(r, s).entries()) CHECK(m != 0);
        for (const auto& [t, m] : join(r, s).entries()) CHECK(m != 0);
        for (const auto& [t, m] : project(r, Hyperedge{"b"}).entries()) CHECK(m != 0);
    }
}

TEST_CASE("multiplicity overflow is a checked error") {
    Gmr g{Hyperedge{"a"}};
    Tuple t({Value(1)});
    g.add(t, INT64_MAX);
    CHECK_THROWS_AS(g.apply_single(t, 1), MultiplicityOverflowError);
}

TEST_CASE("text serialization round-trips and sorts canonically") {
    Gmr s = fig_S();
    std::string text = s.to_text();
    CHECK(text == "vars: u,v\n1|4|2\n2|3|4\n4|5|5\n");
    CHECK(Gmr::from_text(text) == s);

    Gmr empty_schema = Gmr::unit();
    CHECK(Gmr::from_text(empty_schema.to_text()) == empty_schema);
}

TEST_CASE("mixed-type ordered comparison is a type error") {
    CHECK_THROWS_AS(Value(1).compare(Value("a")), ValueTypeError);
    CHECK(Value(1) != Value("1"));
    // Container order is total regardless of type.
    CHECK(ValueContainerLess{}(Value(1), Value("a")));
}
