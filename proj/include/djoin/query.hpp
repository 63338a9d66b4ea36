#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "djoin/gmr.hpp"
#include "djoin/predicate.hpp"

namespace djoin {

/// One occurrence of a relation atom r(x1,...,xk). arg_vars keeps the
/// positional argument order from the query text; schema() is the canonical
/// variable set. Repeated occurrences of the same atom are distinguished by
/// their position in GCQ::atoms.
struct AtomOccurrence {
    std::string relation;
    std::vector<std::string> arg_vars;

    Hyperedge schema() const { return Hyperedge(arg_vars); }

    std::string str() const {
        std::string s = relation + "(";
        for (size_t i = 0; i < arg_vars.size(); ++i) {
            if (i) s += ",";
            s += arg_vars[i];
        }
        return s + ")";
    }

    bool operator==(const AtomOccurrence& o) const {
        return relation == o.relation && arg_vars == o.arg_vars;
    }
    bool operator<(const AtomOccurrence& o) const {
        return std::tie(relation, arg_vars) < std::tie(o.relation, o.arg_vars);
    }
};

/// A generalized conjunctive query: a projection over the natural join of
/// atoms, restricted by a conjunction of theta-predicates.
struct Gcq {
    std::vector<AtomOccurrence> atoms;
    PredicateSet preds;
    Hyperedge out;

    Hyperedge all_vars() const {
        Hyperedge v;
        for (const auto& a : atoms) v = v.union_with(a.schema());
        return v;
    }

    bool full() const { return out == all_vars(); }

    /// Enforces the structural side conditions: output and predicate
    /// variables bound by atoms, no duplicate variable within an atom, and
    /// consistent arity per relation name.
    void validate() const {
        Hyperedge bound = all_vars();
        std::map<std::string, size_t> arity;
        for (const auto& a : atoms) {
            if (a.schema().size() != a.arg_vars.size())
                throw ScopeError("duplicate variable in atom " + a.str());
            auto [it, inserted] = arity.try_emplace(a.relation, a.arg_vars.size());
            if (!inserted && it->second != a.arg_vars.size())
                throw ScopeError("relation " + a.relation + " used with inconsistent arity");
        }
        for (const auto& v : out.vars())
            if (!bound.contains(v)) throw ScopeError("output variable " + v + " unbound");
        for (const auto& p : preds)
            if (!p.vars().subset_of(bound))
                throw ScopeError("predicate " + p.str() + " references unbound variables");
    }

    std::string str() const;
};

/// The hypergraph of a query: one hyperedge per distinct non-empty atom
/// schema (set semantics).
inline std::set<Hyperedge> hypergraph(const Gcq& q) {
    std::set<Hyperedge> h;
    for (const auto& a : q.atoms) {
        Hyperedge e = a.schema();
        if (!e.empty()) h.insert(e);
    }
    return h;
}

/// A database: a positive GMR per relation name.
class Database {
  public:
    Database() = default;

    void set(const std::string& relation, Gmr gmr) {
        if (!gmr.positive())
            throw NonPositiveDatabaseError("relation " + relation + " is not positive");
        rels_[relation] = std::move(gmr);
    }

    bool has(const std::string& relation) const { return rels_.count(relation) > 0; }

    const Gmr& at(const std::string& relation) const {
        auto it = rels_.find(relation);
        if (it == rels_.end()) throw MissingRelationError("no relation named " + relation);
        return it->second;
    }

    const std::map<std::string, Gmr>& relations() const { return rels_; }

    size_t total_tuples() const {
        size_t n = 0;
        for (const auto& [_, g] : rels_) n += g.size();
        return n;
    }

  private:
    std::map<std::string, Gmr> rels_;
};

/// An update: one (not necessarily positive) GMR per relation.
class DbUpdate {
  public:
    DbUpdate() = default;

    void set(const std::string& relation, Gmr gmr) { rels_[relation] = std::move(gmr); }

    /// Accumulates a single-tuple change.
    void add(const std::string& relation, const Hyperedge& schema, const Tuple& t, int64_t m) {
        auto it = rels_.find(relation);
        if (it == rels_.end()) it = rels_.emplace(relation, Gmr{schema}).first;
        it->second.add(t, m);
    }

    bool empty() const {
        for (const auto& [_, g] : rels_)
            if (!g.empty()) return false;
        return true;
    }

    const std::map<std::string, Gmr>& relations() const { return rels_; }

  private:
    std::map<std::string, Gmr> rels_;
};

/// db + u. Throws NegativeDatabaseError if any relation would go negative.
inline Database apply_update(const Database& db, const DbUpdate& u) {
    Database out = db;
    for (const auto& [name, delta] : u.relations()) {
        Gmr next = db.has(name) ? gmr_union(db.at(name), delta) : delta;
        if (!next.positive())
            throw NegativeDatabaseError("update drives relation " + name + " negative");
        out.set(name, std::move(next));
    }
    return out;
}

/// Schema used for stored relations: positional column names, whose
/// lexicographic order coincides with column order (two-digit, so up to 100
/// columns).
inline Hyperedge positional_schema(size_t arity) {
    std::vector<std::string> names;
    names.reserve(arity);
    for (size_t i = 0; i < arity; ++i)
        names.push_back("$" + std::string(i < 10 ? "0" : "") + std::to_string(i));
    return Hyperedge(std::move(names));
}

/// Builds a positional relation GMR from rows given in column order.
inline Gmr make_relation(size_t arity, const std::vector<std::pair<std::vector<Value>, int64_t>>& rows) {
    Gmr g{positional_schema(arity)};
    for (const auto& [vals, m] : rows) {
        if (vals.size() != arity) throw SchemaMismatchError("row arity mismatch");
        g.add(Tuple(vals), m);
    }
    return g;
}

/// Re-keys a stored positional relation onto an atom occurrence's variable
/// names. Stored tuples are in column order; the view is in the canonical
/// order of the occurrence's schema.
inline Gmr occurrence_view(const Gmr& stored, const AtomOccurrence& atom) {
    if (stored.schema().size() != atom.arg_vars.size())
        throw SchemaMismatchError("relation " + atom.relation + " arity mismatch at " +
                                  atom.str());
    Hyperedge occ_schema = atom.schema();
    std::vector<int> target(atom.arg_vars.size());
    for (size_t i = 0; i < atom.arg_vars.size(); ++i)
        target[i] = occ_schema.index_of(atom.arg_vars[i]);
    Gmr occ{occ_schema};
    for (const auto& [t, m] : stored.entries()) {
        std::vector<Value> vals(t.arity());
        for (size_t i = 0; i < t.arity(); ++i) vals[static_cast<size_t>(target[i])] = t[i];
        occ.add(Tuple(std::move(vals)), m);
    }
    return occ;
}

/// Reference evaluator: natural join of all atom occurrences, selection by
/// every predicate, projection onto the output variables. Materializing and
/// slow; used as the correctness oracle everywhere.
inline Gmr naive_eval(const Gcq& q, const Database& db) {
    Gmr acc = Gmr::unit();
    for (const auto& a : q.atoms) acc = join(acc, occurrence_view(db.at(a.relation), a));
    acc = select(acc, q.preds);
    return project(acc, q.out);
}

/// Delta query: naive_eval(q, db + u) - naive_eval(q, db).
inline Gmr naive_delta(const Gcq& q, const Database& db, const DbUpdate& u) {
    Database next = apply_update(db, u);
    return gmr_minus(naive_eval(q, next), naive_eval(q, db));
}

}  // namespace djoin
