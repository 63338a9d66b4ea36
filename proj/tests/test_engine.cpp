#include <catch_amalgamated.hpp>

#include <sstream>

#include "djoin/engine.hpp"
#include "testutil.hpp"

using namespace djoin;
using testutil::make_gmr;

namespace {

const char* kRunningQuery = "SELECT y,z,w,u FROM r(x,y), s(y,z,w), t(u,v) WHERE x<z AND w<u";

// The worked-example database as nine insertion events.
std::vector<StreamEvent> example_events() {
    std::istringstream is(
        "+,r,2,2,2\n"
        "+,r,3,3,2\n"
        "+,r,4,2,1\n"
        "+,s,2,1,2,2\n"
        "+,s,3,1,3,3\n"
        "+,s,3,2,4,6\n"
        "+,t,4,2,3\n"
        "+,t,2,4,6\n"
        "+,t,5,4,5\n");
    return read_stream(is);
}

Database final_example_db() {
    Database db;
    db.set("r", make_relation(2, {{{2, 2}, 2}, {{3, 2}, 3}, {{2, 1}, 4}}));
    db.set("s", make_relation(3, {{{1, 2, 2}, 2}, {{1, 3, 3}, 3}, {{2, 4, 6}, 3}}));
    db.set("t", make_relation(2, {{{2, 3}, 4}, {{4, 6}, 2}, {{4, 5}, 5}}));
    return db;
}

/// Parses push-mode sink output into the cumulative delta GMR.
Gmr fold_push_output(const std::string& text, const Hyperedge& schema) {
    Gmr out{schema};
    std::istringstream is(text);
    std::string line, header;
    std::getline(is, header);  // vars: ...
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        Gmr one = Gmr::from_text(header + "\n" + line + "\n");
        out.add_all(one);
    }
    return out;
}

/// Parses pull-mode sink output into (after_event, snapshot GMR) pairs.
std::vector<std::pair<int64_t, Gmr>> parse_snapshots(const std::string& text) {
    std::istringstream is(text);
    std::string line, header;
    std::getline(is, header);
    std::vector<std::pair<int64_t, Gmr>> out;
    std::string body;
    int64_t at = -1;
    auto flush = [&]() {
        if (at >= 0) out.emplace_back(at, Gmr::from_text(header + "\n" + body));
        body.clear();
    };
    while (std::getline(is, line)) {
        if (line.rfind("#snapshot", 0) == 0) {
            flush();
            at = std::stoll(line.substr(10));
        } else if (!line.empty() && line[0] != '#') {
            body += line + "\n";
        }
    }
    flush();
    return out;
}

}  // namespace

TEST_CASE("stream files round-trip") {
    std::vector<StreamEvent> events = example_events();
    REQUIRE(events.size() == 9);
    CHECK(events[0].relation == "r");
    CHECK(events[0].mult == 2);

    std::ostringstream os;
    write_stream(os, events);
    std::istringstream is(os.str());
    std::vector<StreamEvent> again = read_stream(is);
    REQUIRE(again.size() == events.size());
    for (size_t i = 0; i < events.size(); ++i) {
        CHECK(again[i].relation == events[i].relation);
        CHECK(again[i].mult == events[i].mult);
        CHECK(again[i].values == events[i].values);
    }
}

TEST_CASE("stream parse errors carry line numbers") {
    std::istringstream bad("+,r,1,1,2\nxx,r,1,3,4\n");
    CHECK_THROWS_WITH(read_stream(bad), Catch::Matchers::ContainsSubstring("line 2"));
    std::istringstream zero("+,r,0,1,2\n");
    CHECK_THROWS_AS(read_stream(zero), DataError);
}

TEST_CASE("push mode accumulates exactly the query result") {
    RunConfig cfg;
    cfg.query_text = kRunningQuery;
    cfg.events = example_events();
    cfg.mode = RunMode::Push;
    std::ostringstream sink;
    cfg.sink = &sink;

    RunReport report = run(cfg);
    CHECK(report.events_processed == 9);
    CHECK_FALSE(report.used_fallback);
    CHECK(report.classification.verdict == QueryClass::FreeConnex);

    Gcq q = parse_query(kRunningQuery);
    Gmr expect = naive_eval(q, final_example_db());
    CHECK(fold_push_output(sink.str(), expect.schema()) == expect);
    CHECK(report.peak_live_tuples > 0);
}

TEST_CASE("pull mode snapshots are correct at every trigger") {
    RunConfig cfg;
    cfg.query_text = kRunningQuery;
    cfg.events = example_events();
    cfg.mode = RunMode::Pull;
    cfg.enumerate_every = 3;
    std::ostringstream sink;
    cfg.sink = &sink;
    run(cfg);

    Gcq q = parse_query(kRunningQuery);
    auto snaps = parse_snapshots(sink.str());
    REQUIRE(snaps.size() == 4);  // after 3, 6, 9 events plus the final one

    Database db;
    db.set("r", make_relation(2, {}));
    db.set("s", make_relation(3, {}));
    db.set("t", make_relation(2, {}));
    std::vector<StreamEvent> events = example_events();
    size_t next = 0;
    for (const auto& [after, got] : snaps) {
        while (static_cast<int64_t>(next) < after) {
            const auto& ev = events[next++];
            DbUpdate u;
            u.add(ev.relation, positional_schema(ev.values.size()), Tuple(ev.values), ev.mult);
            db = apply_update(db, u);
        }
        CHECK(got == naive_eval(q, db));
    }
}

TEST_CASE("empty stream in pull mode emits one empty enumeration") {
    RunConfig cfg;
    cfg.query_text = kRunningQuery;
    cfg.mode = RunMode::Pull;
    std::ostringstream sink;
    cfg.sink = &sink;
    RunReport report = run(cfg);
    CHECK(report.events_processed == 0);
    auto snaps = parse_snapshots(sink.str());
    REQUIRE(snaps.size() == 1);
    CHECK(snaps[0].second.empty());
}

TEST_CASE("acyclic non-free-connex queries route through the fallback") {
    RunConfig cfg;
    cfg.query_text = "SELECT x,u FROM r(x,y), s(y,z,w), t(u,v) WHERE x<z AND w<u";
    cfg.events = example_events();
    cfg.mode = RunMode::Push;
    std::ostringstream sink;
    cfg.sink = &sink;
    RunReport report = run(cfg);
    CHECK(report.used_fallback);

    Gcq q = parse_query(cfg.query_text);
    Gmr expect = naive_eval(q, final_example_db());
    CHECK(fold_push_output(sink.str(), expect.schema()) == expect);
}

TEST_CASE("cyclic queries are rejected") {
    RunConfig cfg;
    cfg.query_text = "SELECT * FROM r(x,y), s(y,z), t(x,z)";
    CHECK_THROWS_AS(run(cfg), CyclicQueryError);
}

TEST_CASE("stream data errors abort the run") {
    RunConfig cfg;
    cfg.query_text = kRunningQuery;
    StreamEvent ev;
    ev.relation = "nope";
    ev.mult = 1;
    ev.values = {Value(1), Value(2)};
    cfg.events = {ev};
    CHECK_THROWS_AS(run(cfg), DataError);

    StreamEvent bad_arity;
    bad_arity.relation = "r";
    bad_arity.mult = 1;
    bad_arity.values = {Value(1)};
    cfg.events = {bad_arity};
    CHECK_THROWS_AS(run(cfg), DataError);

    // Deleting below zero is a data (positивity) violation surfaced as such.
    StreamEvent del;
    del.relation = "r";
    del.mult = -1;
    del.values = {Value(1), Value(2)};
    cfg.events = {del};
    CHECK_THROWS_AS(run(cfg), NegativeDatabaseError);
}

TEST_CASE("gen_stream honors counts, interleaving and reproducibility") {
    GenSpec spec;
    spec.kind = StreamKind::Random;
    spec.relations = {{"R", "kt"}, {"S", "kt"}, {"T", "kt"}};
    spec.size = 12;
    spec.seed = 99;
    std::vector<StreamEvent> a = gen_stream(spec);
    REQUIRE(a.size() == 12);
    std::map<std::string, int> counts;
    for (const auto& ev : a) ++counts[ev.relation];
    CHECK(counts["R"] == 4);
    CHECK(counts["S"] == 4);
    CHECK(counts["T"] == 4);

    std::ostringstream f1, f2;
    write_stream(f1, a);
    write_stream(f2, gen_stream(spec));
    CHECK(f1.str() == f2.str());

    spec.seed = 100;
    std::ostringstream f3;
    write_stream(f3, gen_stream(spec));
    CHECK(f1.str() != f3.str());
}

TEST_CASE("temporal streams have strictly increasing inequality attributes") {
    GenSpec spec;
    spec.kind = StreamKind::Temporal;
    spec.relations = {{"R", "ti"}, {"S", "kt"}};
    spec.size = 40;
    spec.seed = 7;
    std::vector<StreamEvent> events = gen_stream(spec);
    int64_t last = 0;
    for (const auto& ev : events) {
        size_t tpos = ev.relation == "R" ? 0 : 1;
        int64_t v = ev.values[tpos].as_int();
        CHECK(v > last);
        last = v;
    }
}

TEST_CASE("string columns produce string values") {
    GenSpec spec;
    spec.relations = {{"R", "kts"}};
    spec.size = 5;
    std::vector<StreamEvent> events = gen_stream(spec);
    for (const auto& ev : events) {
        CHECK(ev.values[0].is_int());
        CHECK(ev.values[2].is_string());
    }
}

TEST_CASE("selectivity-targeted generation lands near the requested rate") {
    // Chain query R(a,b) x S(c,d) x T(e,f) with b<c and d<e: b, c, d and e
    // are all inequality columns.
    GenSpec spec;
    spec.kind = StreamKind::Random;
    spec.relations = {{"R", "it"}, {"S", "tt"}, {"T", "ti"}};
    spec.size = 3000;
    spec.seed = 12345;
    spec.selectivity = 2.0;

    std::vector<StreamEvent> events = gen_stream(spec);
    // Counting oracle: per S tuple, count compatible R and T sides.
    std::vector<int64_t> r_b, t_e;
    std::vector<std::pair<int64_t, int64_t>> s_cd;
    for (const auto& ev : events) {
        if (ev.relation == "R") r_b.push_back(ev.values[1].as_int());
        if (ev.relation == "S") s_cd.emplace_back(ev.values[0].as_int(), ev.values[1].as_int());
        if (ev.relation == "T") t_e.push_back(ev.values[0].as_int());
    }
    std::sort(r_b.begin(), r_b.end());
    std::sort(t_e.begin(), t_e.end());
    double outputs = 0;
    for (const auto& [c, d] : s_cd) {
        auto rless = std::lower_bound(r_b.begin(), r_b.end(), c) - r_b.begin();
        auto tmore = t_e.end() - std::upper_bound(t_e.begin(), t_e.end(), d);
        outputs += static_cast<double>(rless) * static_cast<double>(tmore);
    }
    double cross = static_cast<double>(r_b.size()) * static_cast<double>(s_cd.size()) *
                   static_cast<double>(t_e.size());
    double measured_pct = 100.0 * outputs / cross;
    CHECK(measured_pct > 2.0 * 0.7);
    CHECK(measured_pct < 2.0 * 1.3);
}

TEST_CASE("bench cross-checks the two engines and emits CSV") {
    BenchCase c;
    c.name = "chain";
    c.query_text = "SELECT * FROM R(a,b), S(c,d) WHERE b < c";
    c.gen.kind = StreamKind::Random;
    c.gen.relations = {{"R", "it"}, {"S", "ti"}};
    c.gen.seed = 5;

    std::vector<BenchRow> rows = bench({c}, {60, 120});
    REQUIRE(rows.size() == 4);
    std::string csv = bench_csv(rows);
    CHECK(csv.find("chain,60,trep") != std::string::npos);
    CHECK(csv.find("chain,120,naive") != std::string::npos);
    // Equal outputs across engines at each size.
    CHECK(rows[0].output_tuples == rows[1].output_tuples);
    CHECK(rows[2].output_tuples == rows[3].output_tuples);
}
