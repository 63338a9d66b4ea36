#include <catch_amalgamated.hpp>

#include "djoin/gyo.hpp"
#include "djoin/parser.hpp"
#include "testutil.hpp"

using namespace djoin;

namespace {

Gcq running_full() {
    return parse_query("SELECT * FROM r(x,y), s(y,z,w), t(u,v) WHERE x<z AND w<u");
}
Gcq running_projected() {
    return parse_query("SELECT y,z,w,u FROM r(x,y), s(y,z,w), t(u,v) WHERE x<z AND w<u");
}
Gcq triangle() { return parse_query("SELECT * FROM r(x,y), s(y,z), t(x,z)"); }

}  // namespace

TEST_CASE("equijoin variables") {
    HypergraphTriplet tri = hypertrip(triangle());
    tri.free = Hyperedge{};
    CHECK(tri.equijoin_vars_of(Hyperedge{"x", "y"}) == Hyperedge{"x", "y"});

    HypergraphTriplet single{{Hyperedge{"a", "b"}}, {}, {}};
    CHECK(single.equijoin_vars_of(Hyperedge{"a", "b"}).empty());

    HypergraphTriplet run = hypertrip(running_projected());
    CHECK(run.equijoin_vars_of(Hyperedge{"u", "v"}) == Hyperedge{"u"});
}

TEST_CASE("isolated and extended variables") {
    HypergraphTriplet run = hypertrip(running_projected());
    CHECK(run.isolated_vars_of(Hyperedge{"u", "v"}) == Hyperedge{"v"});
    CHECK(run.ext(Hyperedge{"x"}) == Hyperedge{"z"});
    CHECK(run.ext(Hyperedge{}).empty());
}

TEST_CASE("conditional subset test") {
    HypergraphTriplet run = hypertrip(running_projected());
    // Stage 1: u is free, hence an equijoin variable outside {y,z,w}.
    HypergraphTriplet afteriso = apply_step(
        run, ReductionStep{ReductionStep::Kind::Iso, Hyperedge{"u", "v"}, Hyperedge{"v"}, {}, {}});
    CHECK_FALSE(afteriso.cse(Hyperedge{"u"}, Hyperedge{"y", "z", "w"}));
    // Stage 2 (free cleared): it becomes a conditional subset.
    CHECK(residual(afteriso).cse(Hyperedge{"u"}, Hyperedge{"y", "z", "w"}));

    // Classical subset: always a conditional subset.
    HypergraphTriplet t{{Hyperedge{"a"}, Hyperedge{"a", "b"}}, {}, {}};
    CHECK(t.cse(Hyperedge{"a"}, Hyperedge{"a", "b"}));

    // Equijoin variable outside the target breaks it.
    HypergraphTriplet t2{{Hyperedge{"a", "c"}, Hyperedge{"a", "b"}, Hyperedge{"c", "d"}}, {}, {}};
    CHECK_FALSE(t2.cse(Hyperedge{"a", "c"}, Hyperedge{"a", "b"}));
}

TEST_CASE("applicable steps") {
    HypergraphTriplet empty;
    CHECK(applicable_steps(empty).empty());

    HypergraphTriplet run = hypertrip(running_projected());
    bool found_iso = false;
    for (const auto& s : applicable_steps(run))
        if (s.kind == ReductionStep::Kind::Iso && s.edge == Hyperedge{"u", "v"} &&
            s.iso_vars == Hyperedge{"v"})
            found_iso = true;
    CHECK(found_iso);

    HypergraphTriplet tri = residual(hypertrip(triangle()));
    CHECK(applicable_steps(tri).empty());
}

TEST_CASE("apply_step semantics and validation") {
    HypergraphTriplet run = hypertrip(running_projected());
    HypergraphTriplet after = apply_step(
        run, ReductionStep{ReductionStep::Kind::Iso, Hyperedge{"u", "v"}, Hyperedge{"v"}, {}, {}});
    CHECK(after.hyper.count(Hyperedge{"u"}) == 1);
    CHECK(after.hyper.count(Hyperedge{"u", "v"}) == 0);

    // Classical CSE keeps predicates when e is inside f.
    HypergraphTriplet t{{Hyperedge{"a"}, Hyperedge{"a", "b"}},
                        {},
                        PredicateSet{Predicate::var_cmp_var("a", CmpOp::Lt, "b")}};
    HypergraphTriplet t2 = apply_step(
        t, ReductionStep{ReductionStep::Kind::Cse, Hyperedge{"a"}, {}, Hyperedge{"a", "b"}, {}});
    CHECK(t2.hyper == std::set<Hyperedge>{Hyperedge{"a", "b"}});
    CHECK(t2.preds.size() == 1);

    // FLT drops exactly the selected filters.
    HypergraphTriplet t3 = apply_step(
        t2, ReductionStep{ReductionStep::Kind::Flt, Hyperedge{"a", "b"}, {}, {}, t2.preds});
    CHECK(t3.preds.empty());
    CHECK(t3.hyper == t2.hyper);

    CHECK_THROWS_AS(
        apply_step(t3, ReductionStep{ReductionStep::Kind::Iso, Hyperedge{"z"}, Hyperedge{"z"}, {}, {}}),
        NotApplicableError);
}

TEST_CASE("normal form of the running query") {
    HypergraphTriplet nf = normal_form(hypertrip(running_projected()));
    CHECK(nf.all_vars() == Hyperedge{"y", "z", "w", "u"});
    CHECK(normal_form(HypergraphTriplet{}).is_empty());
}

TEST_CASE("confluence on random triplets") {
    testutil::Rng rng(20240204);
    for (int i = 0; i < 60; ++i) {
        HypergraphTriplet t = testutil::random_triplet(rng);
        HypergraphTriplet nf = normal_form(t);
        for (int k = 0; k < 3; ++k) CHECK(testutil::random_order_normal_form(rng, t) == nf);
    }
}

TEST_CASE("reduction never touches free variables") {
    testutil::Rng rng(5150);
    for (int i = 0; i < 60; ++i) {
        HypergraphTriplet t = testutil::random_triplet(rng);
        // Keep only triplets whose free vars appear in the hypergraph.
        if (!t.free.subset_of(t.all_vars())) t.free = t.free.intersect(t.all_vars());
        HypergraphTriplet nf = normal_form(t);
        CHECK(nf.free == t.free);
        CHECK(t.free.subset_of(nf.all_vars().union_with(nf.free)));
        if (!t.free.empty() && !t.hyper.empty()) CHECK(t.free.subset_of(nf.all_vars()));
    }
}

TEST_CASE("classification goldens") {
    CHECK(classify(running_projected()).verdict == QueryClass::FreeConnex);
    CHECK(classify(running_full()).verdict == QueryClass::FreeConnex);

    Gcq pxu = parse_query("SELECT x,u FROM r(x,y), s(y,z,w), t(u,v) WHERE x<z AND w<u");
    Classification c = classify(pxu);
    CHECK(c.verdict == QueryClass::Acyclic);
    CHECK(pxu.out.subset_of(c.minimal_out));
    CHECK(c.minimal_out != pxu.out);
    CHECK(c.minimal_out == Hyperedge{"x", "y", "z", "w", "u"});

    CHECK(classify(triangle()).verdict == QueryClass::Cyclic);
}

TEST_CASE("classify agrees with classical GYO on plain conjunctive queries") {
    testutil::Rng rng(777);
    for (int i = 0; i < 200; ++i) {
        HypergraphTriplet t = testutil::random_triplet(rng);
        t.preds.clear();
        t.free = Hyperedge{};
        // Build a full CQ whose hypergraph is exactly t.hyper.
        Gcq q;
        int k = 0;
        for (const auto& e : t.hyper) q.atoms.push_back({"R" + std::to_string(k++), e.vars()});
        q.out = q.all_vars();
        bool acyclic = classify(q).acyclic();
        CHECK(acyclic == testutil::classical_gyo_acyclic(t.hyper));
    }
}

TEST_CASE("forest enactment commutes with triplet reduction") {
    testutil::Rng rng(31337);
    int checked = 0;
    for (int i = 0; i < 80; ++i) {
        Gcq q = testutil::random_gcq(rng);
        ForestTriplet f = forest_of(q);
        while (true) {
            auto steps = applicable_steps(f.hypertrip());
            if (steps.empty()) break;
            const ReductionStep& s =
                steps[static_cast<size_t>(rng.uniform(0, static_cast<int64_t>(steps.size()) - 1))];
            HypergraphTriplet expect = apply_step(f.hypertrip(), s);
            f = enact(std::move(f), s);
            CHECK(f.hypertrip() == expect);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("ISO enactment adds a parent labeled e minus X") {
    Gcq q = parse_query("SELECT x FROM r(x,y)");
    ForestTriplet f = forest_of(q);
    ReductionStep iso{ReductionStep::Kind::Iso, Hyperedge{"x", "y"}, Hyperedge{"y"}, {}, {}};
    f = enact(std::move(f), iso);
    REQUIRE(f.roots.size() == 1);
    CHECK(f.arena.node(f.roots[0]).label == Hyperedge{"x"});
    const auto& top = f.arena.node(f.roots[0]);
    REQUIRE(top.children.size() == 1);
    CHECK(f.arena.node(top.children[0]).label == Hyperedge{"x", "y"});
}

TEST_CASE("FLT enactment merges same-label roots with the filters on edges") {
    Gcq q = parse_query("SELECT * FROM r(x,y), r(x,y) WHERE x < y");
    ForestTriplet f = forest_of(q);
    PredicateSet theta{Predicate::var_cmp_var("x", CmpOp::Lt, "y")};
    ReductionStep flt{ReductionStep::Kind::Flt, Hyperedge{"x", "y"}, {}, {}, theta};
    f = enact(std::move(f), flt);
    REQUIRE(f.roots.size() == 1);
    const auto& top = f.arena.node(f.roots[0]);
    CHECK(top.label == Hyperedge{"x", "y"});
    REQUIRE(top.children.size() == 2);
    for (NodeId c : top.children) CHECK(f.arena.node(c).edge_preds == theta);
    CHECK(f.preds.empty());
}

TEST_CASE("build_plan on the projected running query") {
    Gcq q2 = running_projected();
    GjtPair pair = build_plan(q2);
    CHECK(pair.tree.validate().empty());
    CHECK(is_gjt_for(pair.tree, q2));
    CHECK(find_violators(pair).empty());
    for (NodeId id : pair.tree.node_ids()) CHECK(pair.tree.node(id).children.size() <= 2);
    CHECK(var_of(pair.tree, pair.connex) == q2.out);
    CHECK(is_compatible(pair, q2));
}

TEST_CASE("build_plan on a single-atom full query") {
    Gcq q = parse_query("SELECT * FROM r(x,y)");
    GjtPair pair = build_plan(q);
    CHECK(pair.tree.validate().empty());
    CHECK(is_compatible(pair, q));
    // The leaf hangs under an interior twin labeled by its variables.
    for (NodeId l : pair.tree.leaves()) {
        NodeId p = pair.tree.node(l).parent;
        CHECK(pair.tree.node(p).label == pair.tree.node(l).label);
    }
}

TEST_CASE("build_plan rejects cyclic queries") {
    CHECK_THROWS_AS(build_plan(triangle()), CyclicQueryError);
}

TEST_CASE("build_plan invariants on random acyclic queries") {
    testutil::Rng rng(60601);
    int planned = 0;
    for (int i = 0; i < 150 && planned < 80; ++i) {
        Gcq q = testutil::random_gcq(rng);
        Classification c = classify(q);
        if (!c.acyclic()) {
            CHECK_THROWS_AS(build_plan(q), CyclicQueryError);
            continue;
        }
        ++planned;
        GjtPair pair = build_plan(q);
        CHECK(pair.tree.validate().empty());
        CHECK(is_gjt_for(pair.tree, q));
        CHECK(find_violators(pair).empty());
        for (NodeId id : pair.tree.node_ids())
            CHECK(pair.tree.node(id).children.size() <= 2);
        CHECK(var_of(pair.tree, pair.connex) == c.minimal_out);
        CHECK((c.verdict == QueryClass::FreeConnex) ==
              (var_of(pair.tree, pair.connex) == q.out));
    }
    CHECK(planned >= 50);
}

TEST_CASE("minimal out is contained in every connex set's variables") {
    // Exhaustively enumerate connex subsets of the built plan for small
    // random acyclic queries and check var(H(I)) is a lower bound.
    testutil::Rng rng(424242);
    int checked = 0;
    for (int i = 0; i < 60 && checked < 25; ++i) {
        Gcq q = testutil::random_gcq(rng, 3);
        Classification c = classify(q);
        if (!c.acyclic()) continue;
        GjtPair pair = build_plan(q);
        if (pair.tree.size() > 14) continue;
        ++checked;
        std::vector<NodeId> ids = pair.tree.node_ids();
        for (size_t mask = 0; mask < (1u << ids.size()); ++mask) {
            ConnexSet n;
            for (size_t b = 0; b < ids.size(); ++b)
                if (mask & (1u << b)) n.insert(ids[b]);
            if (n.empty() || !is_connex(pair.tree, n)) continue;
            // The lower bound applies to sets that could serve enumeration,
            // i.e. those covering the output variables.
            if (!q.out.subset_of(var_of(pair.tree, n))) continue;
            CHECK(c.minimal_out.subset_of(var_of(pair.tree, n)));
        }
    }
    CHECK(checked >= 10);
}
