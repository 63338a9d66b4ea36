#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "djoin/predicate.hpp"
#include "djoin/schema.hpp"

namespace djoin {

inline int64_t checked_add(int64_t a, int64_t b) {
    int64_t r;
    if (__builtin_add_overflow(a, b, &r))
        throw MultiplicityOverflowError("multiplicity addition overflow");
    return r;
}

inline int64_t checked_mul(int64_t a, int64_t b) {
    int64_t r;
    if (__builtin_mul_overflow(a, b, &r))
        throw MultiplicityOverflowError("multiplicity multiplication overflow");
    return r;
}

/// Generalized Multiset Relation: a finite map from tuples over a fixed
/// schema to non-zero signed 64-bit multiplicities. Entries reaching
/// multiplicity zero are evicted eagerly, so the physical entry count always
/// equals |supp(R)|.
class Gmr {
  public:
    using EntryMap = std::unordered_map<Tuple, int64_t, TupleHash>;

    Gmr() = default;
    explicit Gmr(Hyperedge schema) : schema_(std::move(schema)) {}

    /// The GMR over {} holding the empty tuple with multiplicity 1
    /// (the natural-join identity).
    static Gmr unit() {
        Gmr g{Hyperedge{}};
        g.add(Tuple{}, 1);
        return g;
    }

    const Hyperedge& schema() const { return schema_; }
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const EntryMap& entries() const { return entries_; }

    int64_t multiplicity(const Tuple& t) const {
        auto it = entries_.find(t);
        return it == entries_.end() ? 0 : it->second;
    }

    bool contains(const Tuple& t) const { return entries_.count(t) > 0; }

    bool positive() const {
        for (const auto& [t, m] : entries_)
            if (m <= 0) return false;
        return true;
    }

    /// Adds m to R(t); evicts the entry when it reaches zero.
    void add(const Tuple& t, int64_t m) {
        assert(t.arity() == schema_.size());
        if (m == 0) return;
        auto [it, inserted] = entries_.try_emplace(t, m);
        if (!inserted) {
            it->second = checked_add(it->second, m);
            if (it->second == 0) entries_.erase(it);
        }
    }

    /// Single-tuple insert/delete. The tuple must match the schema arity and
    /// the delta must be non-zero.
    void apply_single(const Tuple& t, int64_t m) {
        if (t.arity() != schema_.size())
            throw SchemaMismatchError("tuple arity " + std::to_string(t.arity()) +
                                      " does not match schema " + schema_.str());
        if (m == 0) throw ZeroDeltaError("single-tuple delta must be non-zero");
        add(t, m);
    }

    void add_all(const Gmr& o) {
        if (o.schema_ != schema_)
            throw SchemaMismatchError("schema mismatch: " + schema_.str() + " vs " +
                                      o.schema_.str());
        for (const auto& [t, m] : o.entries_) add(t, m);
    }

    bool operator==(const Gmr& o) const { return schema_ == o.schema_ && entries_ == o.entries_; }
    bool operator!=(const Gmr& o) const { return !(*this == o); }

    /// Entries sorted canonically (container order over value vectors).
    std::vector<std::pair<Tuple, int64_t>> sorted_entries() const {
        std::vector<std::pair<Tuple, int64_t>> out(entries_.begin(), entries_.end());
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            return a.first.container_compare(b.first) < 0;
        });
        return out;
    }

    /// Text form: `vars: v1,v2,...` header, then one `val1|val2|...|mult`
    /// line per entry in canonical order.
    std::string to_text() const {
        std::ostringstream os;
        os << "vars: ";
        const auto& vs = schema_.vars();
        for (size_t i = 0; i < vs.size(); ++i) {
            if (i) os << ",";
            os << vs[i];
        }
        os << "\n";
        for (const auto& [t, m] : sorted_entries()) {
            std::string ts = t.str();
            if (!ts.empty()) os << ts << "|";
            os << m << "\n";
        }
        return os.str();
    }

    static Gmr from_text(const std::string& text);

    std::string str() const {
        std::string s = "[";
        bool first = true;
        for (const auto& [t, m] : sorted_entries()) {
            if (!first) s += ", ";
            first = false;
            s += "(" + t.str() + ")->" + std::to_string(m);
        }
        return s + "]";
    }

  private:
    Hyperedge schema_;
    EntryMap entries_;
};

inline Gmr gmr_union(const Gmr& r, const Gmr& s) {
    if (r.schema() != s.schema())
        throw SchemaMismatchError("union schema mismatch: " + r.schema().str() + " vs " +
                                  s.schema().str());
    Gmr out = r;
    out.add_all(s);
    return out;
}

inline Gmr negate(const Gmr& r) {
    Gmr out{r.schema()};
    for (const auto& [t, m] : r.entries()) out.add(t, -m);
    return out;
}

inline Gmr gmr_minus(const Gmr& r, const Gmr& s) {
    if (r.schema() != s.schema())
        throw SchemaMismatchError("minus schema mismatch: " + r.schema().str() + " vs " +
                                  s.schema().str());
    Gmr out = r;
    for (const auto& [t, m] : s.entries()) out.add(t, -m);
    return out;
}

inline Gmr project(const Gmr& r, const Hyperedge& z) {
    if (!z.subset_of(r.schema()))
        throw SchemaMismatchError("projection " + z.str() + " not a subset of " +
                                  r.schema().str());
    auto map = projection_map(r.schema(), z);
    Gmr out{z};
    for (const auto& [t, m] : r.entries()) out.add(project_tuple(t, map), m);
    return out;
}

/// Natural join: shared variables matched on equality, multiplicities
/// multiplied. The smaller side is hashed on the shared variables.
inline Gmr join(const Gmr& r, const Gmr& s) {
    const Gmr& build = r.size() <= s.size() ? r : s;
    const Gmr& probe = r.size() <= s.size() ? s : r;

    Hyperedge shared = r.schema().intersect(s.schema());
    Hyperedge out_schema = r.schema().union_with(s.schema());
    auto build_key = projection_map(build.schema(), shared);
    auto probe_key = projection_map(probe.schema(), shared);

    // Output positions for each probe-side value and each build-only value.
    std::vector<int> probe_to_out(probe.schema().size());
    for (size_t i = 0; i < probe.schema().size(); ++i)
        probe_to_out[i] = out_schema.index_of(probe.schema().vars()[i]);
    std::vector<std::pair<int, int>> build_to_out;  // (build position, out position)
    for (size_t i = 0; i < build.schema().size(); ++i) {
        const std::string& v = build.schema().vars()[i];
        if (!probe.schema().contains(v))
            build_to_out.emplace_back(static_cast<int>(i), out_schema.index_of(v));
    }

    std::unordered_map<Tuple, std::vector<std::pair<const Tuple*, int64_t>>, TupleHash> index;
    for (const auto& [t, m] : build.entries())
        index[project_tuple(t, build_key)].emplace_back(&t, m);

    Gmr out{out_schema};
    for (const auto& [t, m] : probe.entries()) {
        auto it = index.find(project_tuple(t, probe_key));
        if (it == index.end()) continue;
        for (const auto& [bt, bm] : it->second) {
            std::vector<Value> vals(out_schema.size());
            for (size_t i = 0; i < probe_to_out.size(); ++i)
                vals[static_cast<size_t>(probe_to_out[i])] = t[i];
            for (const auto& [bi, oi] : build_to_out)
                vals[static_cast<size_t>(oi)] = (*bt)[static_cast<size_t>(bi)];
            out.add(Tuple(std::move(vals)), checked_mul(m, bm));
        }
    }
    return out;
}

inline Gmr select(const Gmr& r, const PredicateSet& preds) {
    for (const auto& p : preds)
        if (!p.vars().subset_of(r.schema()))
            throw UnboundPredicateVariableError("predicate " + p.str() + " unbound in schema " +
                                                r.schema().str());
    Gmr out{r.schema()};
    for (const auto& [t, m] : r.entries()) {
        bool keep = true;
        for (const auto& p : preds)
            if (!p.eval(r.schema(), t)) {
                keep = false;
                break;
            }
        if (keep) out.add(t, m);
    }
    return out;
}

/// R join_theta S = select(join(R, S), theta).
inline Gmr theta_join(const Gmr& r, const Gmr& s, const PredicateSet& preds) {
    Hyperedge both = r.schema().union_with(s.schema());
    for (const auto& p : preds)
        if (!p.vars().subset_of(both))
            throw UnboundPredicateVariableError("predicate " + p.str() +
                                                " unbound in joined schema " + both.str());
    return select(join(r, s), preds);
}

/// R semijoin_theta S = project(theta_join(R, S), schema(R)).
inline Gmr semijoin(const Gmr& r, const Gmr& s, const PredicateSet& preds) {
    return project(theta_join(r, s, preds), r.schema());
}

inline Gmr Gmr::from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("vars:", 0) != 0)
        throw DataError("GMR text must start with a 'vars:' header");
    std::vector<std::string> vars;
    {
        std::string body = line.substr(5);
        std::string cur;
        for (char c : body) {
            if (c == ',') {
                if (!cur.empty()) vars.push_back(cur);
                cur.clear();
            } else if (!isspace(static_cast<unsigned char>(c))) {
                cur += c;
            }
        }
        if (!cur.empty()) vars.push_back(cur);
    }
    Hyperedge schema{vars};
    if (schema.size() != vars.size()) throw DataError("duplicate variable in GMR header");
    Gmr out{schema};
    auto parse_value = [](const std::string& tok) -> Value {
        if (tok.empty()) return Value(std::string{});
        size_t i = (tok[0] == '-' || tok[0] == '+') ? 1 : 0;
        if (i >= tok.size()) return Value(tok);
        for (size_t j = i; j < tok.size(); ++j)
            if (!isdigit(static_cast<unsigned char>(tok[j]))) return Value(tok);
        return Value(static_cast<int64_t>(std::stoll(tok)));
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::string cur;
        for (char c : line) {
            if (c == '|') {
                toks.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        toks.push_back(cur);
        if (toks.size() != schema.size() + 1)
            throw DataError("GMR line has " + std::to_string(toks.size() - 1) +
                            " values, schema has " + std::to_string(schema.size()));
        std::vector<Value> vals;
        for (size_t i = 0; i < schema.size(); ++i) vals.push_back(parse_value(toks[i]));
        out.add(Tuple(std::move(vals)), std::stoll(toks.back()));
    }
    return out;
}

}  // namespace djoin
