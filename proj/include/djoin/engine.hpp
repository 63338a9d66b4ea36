#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "djoin/parser.hpp"
#include "djoin/trep.hpp"

namespace djoin {

/// One stream line: a signed single-tuple change to a relation.
struct StreamEvent {
    int64_t seq = 0;
    std::string relation;
    int64_t mult = 1;
    std::vector<Value> values;
};

namespace detail {

inline Value parse_stream_value(const std::string& tok) {
    if (tok.empty()) return Value(std::string{});
    size_t i = (tok[0] == '-' || tok[0] == '+') ? 1 : 0;
    if (i >= tok.size()) return Value(tok);
    for (size_t j = i; j < tok.size(); ++j)
        if (!isdigit(static_cast<unsigned char>(tok[j]))) return Value(tok);
    return Value(static_cast<int64_t>(std::stoll(tok)));
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Stream file format, one event per line:
///   +|-,relation,mult,v1,v2,...
/// A leading '-' negates the multiplicity (deletion).
inline std::vector<StreamEvent> read_stream(std::istream& is) {
    std::vector<StreamEvent> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto toks = detail::split(line, ',');
        if (toks.size() < 3)
            throw DataError("stream line " + std::to_string(lineno) + ": expected sign,relation,mult,values...");
        StreamEvent ev;
        ev.seq = static_cast<int64_t>(out.size());
        if (toks[0] != "+" && toks[0] != "-")
            throw DataError("stream line " + std::to_string(lineno) + ": sign must be + or -");
        ev.relation = toks[1];
        try {
            ev.mult = std::stoll(toks[2]);
        } catch (const std::exception&) {
            throw DataError("stream line " + std::to_string(lineno) + ": bad multiplicity");
        }
        if (toks[0] == "-") ev.mult = -ev.mult;
        if (ev.mult == 0)
            throw DataError("stream line " + std::to_string(lineno) + ": zero multiplicity");
        for (size_t i = 3; i < toks.size(); ++i)
            ev.values.push_back(detail::parse_stream_value(toks[i]));
        out.push_back(std::move(ev));
    }
    return out;
}

inline std::vector<StreamEvent> read_stream_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open stream file " + path);
    return read_stream(f);
}

inline void write_stream(std::ostream& os, const std::vector<StreamEvent>& events) {
    for (const auto& ev : events) {
        os << (ev.mult < 0 ? '-' : '+') << ',' << ev.relation << ','
           << (ev.mult < 0 ? -ev.mult : ev.mult);
        for (const auto& v : ev.values) os << ',' << v.str();
        os << '\n';
    }
}

enum class RunMode { Push, Pull };

struct RunConfig {
    std::string query_text;
    std::vector<StreamEvent> events;
    RunMode mode = RunMode::Push;
    int64_t enumerate_every = 0;  // pull mode: snapshot cadence; 0 = end only
    std::ostream* sink = nullptr;
};

struct RunReport {
    Classification classification;
    bool used_fallback = false;
    size_t events_processed = 0;
    size_t outputs_emitted = 0;
    size_t peak_live_tuples = 0;
    double update_seconds = 0.0;
    // Per-event latency histogram: bucket i counts events whose update took
    // in [2^i, 2^{i+1}) microseconds (bucket 0 includes sub-microsecond).
    std::vector<int64_t> latency_us_log2;
};

namespace detail {

inline void bump_latency(RunReport& r, double seconds) {
    double us = seconds * 1e6;
    size_t bucket = 0;
    while (us >= 2.0 && bucket < 30) {
        us /= 2.0;
        ++bucket;
    }
    if (r.latency_us_log2.size() <= bucket) r.latency_us_log2.resize(bucket + 1, 0);
    ++r.latency_us_log2[bucket];
}

inline void emit_gmr(std::ostream* sink, const Gmr& g, size_t& emitted) {
    if (!g.empty()) emitted += g.size();
    if (!sink) return;
    for (const auto& [t, m] : g.sorted_entries()) {
        std::string ts = t.str();
        if (!ts.empty()) *sink << ts << "|";
        *sink << m << "\n";
    }
}

}  // namespace detail

/// Replays the stream through the representation appropriate for the query
/// class: free-connex queries run directly on a (T,N)-representation,
/// acyclic ones through the free-connex approximation fallback. Push mode
/// emits each event's delta; pull mode emits enumeration snapshots at the
/// configured cadence. Cyclic queries raise CyclicQueryError.
inline RunReport run(const RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    Gcq q = parse_query(cfg.query_text);
    RunReport report;
    report.classification = classify(q);
    if (!report.classification.acyclic())
        throw CyclicQueryError("cyclic queries are not supported");
    report.used_fallback = report.classification.verdict != QueryClass::FreeConnex;

    // Arities from the atoms; the stream starts from an empty database.
    Database db;
    std::map<std::string, size_t> arity;
    for (const auto& a : q.atoms) {
        arity[a.relation] = a.arg_vars.size();
        if (!db.has(a.relation)) db.set(a.relation, Gmr{positional_schema(a.arg_vars.size())});
    }

    std::optional<TRep> rep;
    std::optional<FallbackView> view;
    if (report.used_fallback) {
        view.emplace(q, db, cfg.mode == RunMode::Push ? ViewMode::Push : ViewMode::Pull);
    } else {
        rep.emplace(build_plan(q), db);
    }

    if (cfg.sink) {
        *cfg.sink << "vars: ";
        const auto& vs = q.out.vars();
        for (size_t i = 0; i < vs.size(); ++i) *cfg.sink << (i ? "," : "") << vs[i];
        *cfg.sink << "\n";
    }

    auto live_tuples = [&]() {
        size_t n = rep ? rep->live_tuple_count() : view->rep().live_tuple_count();
        if (view && cfg.mode == RunMode::Pull) n += view->materialized().size();
        return n;
    };

    auto snapshot = [&](int64_t after_event) {
        if (cfg.sink) *cfg.sink << "#snapshot " << after_event << "\n";
        if (rep) {
            Gmr out{q.out};
            rep->enumerate([&](const Tuple& t, int64_t m) {
                out.add(t, m);
                return true;
            });
            detail::emit_gmr(cfg.sink, out, report.outputs_emitted);
        } else {
            detail::emit_gmr(cfg.sink, view->materialized(), report.outputs_emitted);
        }
    };

    for (const auto& ev : cfg.events) {
        auto ait = arity.find(ev.relation);
        if (ait == arity.end())
            throw DataError("event " + std::to_string(ev.seq) + ": unknown relation " +
                            ev.relation);
        if (ev.values.size() != ait->second)
            throw DataError("event " + std::to_string(ev.seq) + ": arity mismatch for " +
                            ev.relation);
        DbUpdate u;
        u.add(ev.relation, positional_schema(ev.values.size()), Tuple(ev.values), ev.mult);

        auto t0 = clock::now();
        if (rep) {
            DeltaSet ds = rep->update(u);
            if (cfg.mode == RunMode::Push) {
                Gmr delta = rep->delta_gmr(ds);
                auto t1 = clock::now();
                report.update_seconds += std::chrono::duration<double>(t1 - t0).count();
                detail::bump_latency(report, std::chrono::duration<double>(t1 - t0).count());
                if (cfg.sink) *cfg.sink << "#event " << ev.seq << "\n";
                detail::emit_gmr(cfg.sink, delta, report.outputs_emitted);
            } else {
                auto t1 = clock::now();
                report.update_seconds += std::chrono::duration<double>(t1 - t0).count();
                detail::bump_latency(report, std::chrono::duration<double>(t1 - t0).count());
            }
        } else {
            Gmr delta = view->apply(u);
            auto t1 = clock::now();
            report.update_seconds += std::chrono::duration<double>(t1 - t0).count();
            detail::bump_latency(report, std::chrono::duration<double>(t1 - t0).count());
            if (cfg.mode == RunMode::Push) {
                if (cfg.sink) *cfg.sink << "#event " << ev.seq << "\n";
                detail::emit_gmr(cfg.sink, delta, report.outputs_emitted);
            }
        }
        ++report.events_processed;
        report.peak_live_tuples = std::max(report.peak_live_tuples, live_tuples());

        if (cfg.mode == RunMode::Pull && cfg.enumerate_every > 0 &&
            static_cast<int64_t>(report.events_processed) % cfg.enumerate_every == 0)
            snapshot(static_cast<int64_t>(report.events_processed));
    }

    if (cfg.mode == RunMode::Pull) snapshot(static_cast<int64_t>(report.events_processed));
    return report;
}

// ---- Stream generation ----

enum class StreamKind { Random, Temporal };

/// Column roles: 'k' equality-join key (uniform on [1..key_domain]),
/// 't' inequality attribute, 's' string filler, 'i' integer filler.
struct RelationGenSpec {
    std::string name;
    std::string columns;
};

struct GenSpec {
    StreamKind kind = StreamKind::Random;
    std::vector<RelationGenSpec> relations;
    size_t size = 0;
    uint64_t seed = 1;
    int64_t key_domain = 200;
    int64_t ineq_domain = 0;   // 0: defaults to the stream size
    double selectivity = -1.0;  // target |Q|/cross-product percentage; <0 off
};

namespace detail {

struct GenRng {
    std::mt19937_64 eng;
    explicit GenRng(uint64_t seed) : eng(seed) {}
    int64_t uniform(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(eng() % static_cast<uint64_t>(hi - lo + 1));
    }
};

/// Window offsets for the inequality attributes of a relation chain so that
/// the product of pairwise P(t_i < t_{i+1}) lands near the requested
/// selectivity. Calibrated empirically by sampling.
inline std::vector<int64_t> calibrate_offsets(GenRng& rng, size_t k, int64_t window,
                                              double selectivity_pct) {
    std::vector<int64_t> offsets(k, 0);
    if (k < 2) return offsets;
    double target_pair = std::pow(selectivity_pct / 100.0, 1.0 / static_cast<double>(k - 1));
    auto pair_prob = [&](int64_t delta) {
        int hits = 0;
        const int samples = 20000;
        for (int i = 0; i < samples; ++i) {
            int64_t a = rng.uniform(1, window);
            int64_t b = rng.uniform(1, window) + delta;
            if (a < b) ++hits;
        }
        return static_cast<double>(hits) / samples;
    };
    int64_t lo = -window, hi = window, best = 0;
    for (int iter = 0; iter < 24; ++iter) {
        int64_t mid = (lo + hi) / 2;
        if (pair_prob(mid) < target_pair)
            lo = mid + 1;
        else
            hi = mid - 1, best = mid;
        if (lo > hi) break;
    }
    for (size_t i = 1; i < k; ++i) offsets[i] = offsets[i - 1] + best;
    return offsets;
}

}  // namespace detail

/// Deterministic synthetic update stream: size/k insertions per relation,
/// uniformly interleaved without repetition. Temporal streams give every
/// inequality attribute a fresh value larger than all earlier ones.
inline std::vector<StreamEvent> gen_stream(const GenSpec& spec) {
    if (spec.relations.empty() || spec.size == 0) return {};
    detail::GenRng rng(spec.seed);
    size_t k = spec.relations.size();
    int64_t window = spec.ineq_domain > 0 ? spec.ineq_domain
                                          : std::max<int64_t>(static_cast<int64_t>(spec.size), 16);

    std::vector<int64_t> offsets(k, 0);
    if (spec.kind == StreamKind::Random && spec.selectivity >= 0)
        offsets = detail::calibrate_offsets(rng, k, window, spec.selectivity);

    // Relation of each event: size/k each, remainder to the first relations,
    // then a uniform shuffle.
    std::vector<size_t> owner;
    owner.reserve(spec.size);
    for (size_t r = 0; r < k; ++r) {
        size_t n = spec.size / k + (r < spec.size % k ? 1 : 0);
        for (size_t i = 0; i < n; ++i) owner.push_back(r);
    }
    for (size_t i = owner.size(); i > 1; --i)
        std::swap(owner[i - 1], owner[static_cast<size_t>(rng.uniform(0, static_cast<int64_t>(i) - 1))]);

    std::vector<StreamEvent> out;
    out.reserve(owner.size());
    int64_t temporal_counter = 0;
    for (size_t r : owner) {
        const RelationGenSpec& rel = spec.relations[r];
        StreamEvent ev;
        ev.seq = static_cast<int64_t>(out.size());
        ev.relation = rel.name;
        ev.mult = 1;
        for (char c : rel.columns) {
            switch (c) {
                case 'k': ev.values.emplace_back(rng.uniform(1, spec.key_domain)); break;
                case 't':
                    if (spec.kind == StreamKind::Temporal) {
                        temporal_counter += rng.uniform(1, 3);
                        ev.values.emplace_back(temporal_counter);
                    } else {
                        ev.values.emplace_back(offsets[r] + rng.uniform(1, window));
                    }
                    break;
                case 's':
                    ev.values.emplace_back("s" + std::to_string(rng.uniform(1, spec.key_domain)));
                    break;
                case 'i': ev.values.emplace_back(rng.uniform(1, 1000000)); break;
                default: throw DataError(std::string("unknown column role '") + c + "'");
            }
        }
        out.push_back(std::move(ev));
    }
    return out;
}

// ---- Benchmark harness ----

struct BenchRow {
    std::string query;
    size_t stream_size = 0;
    std::string engine;
    double update_seconds = 0.0;
    size_t peak_tuples = 0;
    size_t output_tuples = 0;
    int64_t max_probe_gap = 0;
};

struct BenchCase {
    std::string name;
    std::string query_text;
    GenSpec gen;
};

/// Replays each case's stream through the incremental engine and a
/// recompute-from-scratch baseline, reporting update time, live tuple
/// counts and the enumeration probe gap. The two engines' final outputs are
/// cross-checked for equality.
inline std::vector<BenchRow> bench(const std::vector<BenchCase>& cases,
                                   const std::vector<size_t>& sizes) {
    using clock = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    for (const auto& c : cases) {
        for (size_t n : sizes) {
            GenSpec gs = c.gen;
            gs.size = n;
            std::vector<StreamEvent> events = gen_stream(gs);

            RunConfig cfg;
            cfg.query_text = c.query_text;
            cfg.events = events;
            cfg.mode = RunMode::Pull;
            RunReport rr = run(cfg);

            // Re-run to collect the final output and enumeration stats.
            Gcq q = parse_query(c.query_text);
            Database db;
            for (const auto& a : q.atoms)
                if (!db.has(a.relation))
                    db.set(a.relation, Gmr{positional_schema(a.arg_vars.size())});
            auto t0 = clock::now();
            for (const auto& ev : events) {
                DbUpdate u;
                u.add(ev.relation, positional_schema(ev.values.size()), Tuple(ev.values),
                      ev.mult);
                db = apply_update(db, u);
            }
            double naive_apply = std::chrono::duration<double>(clock::now() - t0).count();
            Gmr expected = naive_eval(q, db);

            BenchRow trep_row{c.name, n, "trep", rr.update_seconds, rr.peak_live_tuples, 0, 0};
            {
                Database empty;
                for (const auto& a : q.atoms)
                    if (!empty.has(a.relation))
                        empty.set(a.relation, Gmr{positional_schema(a.arg_vars.size())});
                Classification cls = classify(q);
                if (cls.verdict == QueryClass::FreeConnex) {
                    TRep rep(build_plan(q), db);
                    ProbeStats st;
                    Gmr got{rep.output_schema()};
                    rep.enumerate(
                        [&](const Tuple& t, int64_t m) {
                            got.add(t, m);
                            return true;
                        },
                        &st);
                    trep_row.output_tuples = got.size();
                    trep_row.max_probe_gap = st.max_gap;
                    if (got != expected) throw Error("bench cross-check failed for " + c.name);
                } else {
                    FallbackView v(q, db, ViewMode::Pull);
                    trep_row.output_tuples = v.materialized().size();
                    if (v.materialized() != expected)
                        throw Error("bench cross-check failed for " + c.name);
                }
            }
            rows.push_back(trep_row);
            rows.push_back({c.name, n, "naive", naive_apply, db.total_tuples() + expected.size(),
                            expected.size(), 0});
        }
    }
    return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "query,stream_size,engine,update_seconds,peak_tuples,output_tuples,max_probe_gap\n";
    for (const auto& r : rows)
        os << r.query << "," << r.stream_size << "," << r.engine << "," << r.update_seconds
           << "," << r.peak_tuples << "," << r.output_tuples << "," << r.max_probe_gap << "\n";
    return os.str();
}

}  // namespace djoin
