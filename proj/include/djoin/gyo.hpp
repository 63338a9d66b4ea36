#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "djoin/gjt.hpp"
#include "djoin/query.hpp"

namespace djoin {

/// The planner's rewriting state: a hypergraph, the output variables, and
/// the not-yet-consumed predicates.
struct HypergraphTriplet {
    std::set<Hyperedge> hyper;
    Hyperedge free;
    PredicateSet preds;

    bool is_empty() const { return hyper.empty() && free.empty() && preds.empty(); }

    Hyperedge all_vars() const {
        Hyperedge v;
        for (const auto& e : hyper) v = v.union_with(e);
        return v;
    }

    /// Variables in free or in at least two hyperedges.
    Hyperedge equijoin_vars() const {
        std::map<std::string, int> count;
        for (const auto& e : hyper)
            for (const auto& v : e.vars()) ++count[v];
        std::vector<std::string> out(free.vars());
        for (const auto& [v, c] : count)
            if (c >= 2) out.push_back(v);
        return Hyperedge(out);
    }

    /// Variables of e that are equijoin variables.
    Hyperedge equijoin_vars_of(const Hyperedge& e) const { return e.intersect(equijoin_vars()); }

    /// Variables that are neither equijoin variables nor mentioned by any
    /// predicate.
    Hyperedge isolated_vars() const {
        Hyperedge ejv = equijoin_vars();
        Hyperedge pv = vars_of(preds);
        std::vector<std::string> out;
        for (const auto& e : hyper)
            for (const auto& v : e.vars())
                if (!ejv.contains(v) && !pv.contains(v)) out.push_back(v);
        return Hyperedge(out);
    }

    Hyperedge isolated_vars_of(const Hyperedge& e) const { return e.intersect(isolated_vars()); }

    /// Variables of predicates touching X, minus X itself.
    Hyperedge ext(const Hyperedge& x) const {
        Hyperedge out;
        for (const auto& p : preds)
            if (!p.vars().intersect(x).empty()) out = out.union_with(p.vars());
        return out.minus(x);
    }

    /// Conditional-subset test e ⊑ f.
    bool cse(const Hyperedge& e, const Hyperedge& f) const {
        return equijoin_vars_of(e).subset_of(f) && ext(e.minus(f)).subset_of(f);
    }

    bool operator==(const HypergraphTriplet& o) const {
        return hyper == o.hyper && free == o.free && preds == o.preds;
    }

    std::string str() const {
        std::string s = "H={";
        bool first = true;
        for (const auto& e : hyper) {
            if (!first) s += ", ";
            first = false;
            s += e.str();
        }
        s += "}, free=" + free.str() + ", preds={" + preds_str(preds) + "}";
        return s;
    }
};

/// free(H) := {} — run before the second reduction stage.
inline HypergraphTriplet residual(HypergraphTriplet t) {
    t.free = Hyperedge{};
    return t;
}

inline HypergraphTriplet hypertrip(const Gcq& q) { return {hypergraph(q), q.out, q.preds}; }

/// One triplet reduction: isolated-variable removal, conditional-subset
/// elimination, or filter elimination.
struct ReductionStep {
    enum class Kind { Iso, Cse, Flt };
    Kind kind;
    Hyperedge edge;         // e
    Hyperedge iso_vars;     // ISO: X
    Hyperedge cse_into;     // CSE: f
    PredicateSet flt_preds; // FLT: Theta

    std::string str() const {
        switch (kind) {
            case Kind::Iso: return "ISO(" + edge.str() + ", " + iso_vars.str() + ")";
            case Kind::Cse: return "CSE(" + edge.str() + " into " + cse_into.str() + ")";
            case Kind::Flt: return "FLT(" + edge.str() + ", {" + preds_str(flt_preds) + "})";
        }
        return "?";
    }
};

/// Complete list of applicable steps, in the deterministic planner order:
/// FLT before ISO before CSE; within a kind, edges in lexicographic order;
/// ISO with the maximal isolated set and FLT with the maximal predicate set
/// per edge; CSE targets ordered by size then lexicographically.
inline std::vector<ReductionStep> applicable_steps(const HypergraphTriplet& t) {
    std::vector<ReductionStep> out;
    for (const auto& e : t.hyper) {
        PredicateSet theta;
        for (const auto& p : t.preds)
            if (p.vars().subset_of(e)) theta.insert(p);
        if (!theta.empty())
            out.push_back({ReductionStep::Kind::Flt, e, {}, {}, std::move(theta)});
    }
    for (const auto& e : t.hyper) {
        Hyperedge x = t.isolated_vars_of(e);
        if (!x.empty()) out.push_back({ReductionStep::Kind::Iso, e, x, {}, {}});
    }
    for (const auto& e : t.hyper) {
        std::vector<Hyperedge> targets;
        for (const auto& f : t.hyper)
            if (f != e && t.cse(e, f)) targets.push_back(f);
        std::sort(targets.begin(), targets.end(), [](const Hyperedge& a, const Hyperedge& b) {
            return a.size() != b.size() ? a.size() < b.size() : a < b;
        });
        for (const auto& f : targets) out.push_back({ReductionStep::Kind::Cse, e, {}, f, {}});
    }
    return out;
}

/// Applies one step, validating its applicability.
inline HypergraphTriplet apply_step(HypergraphTriplet t, const ReductionStep& s) {
    if (!t.hyper.count(s.edge)) throw NotApplicableError("edge " + s.edge.str() + " not present");
    switch (s.kind) {
        case ReductionStep::Kind::Iso: {
            if (s.iso_vars.empty() || !s.iso_vars.subset_of(t.isolated_vars_of(s.edge)))
                throw NotApplicableError("ISO variables not isolated in " + s.edge.str());
            t.hyper.erase(s.edge);
            Hyperedge rest = s.edge.minus(s.iso_vars);
            if (!rest.empty()) t.hyper.insert(rest);
            return t;
        }
        case ReductionStep::Kind::Cse: {
            if (!t.hyper.count(s.cse_into) || s.cse_into == s.edge || !t.cse(s.edge, s.cse_into))
                throw NotApplicableError("not a conditional subset: " + s.str());
            t.hyper.erase(s.edge);
            Hyperedge gone = s.edge.minus(s.cse_into);
            for (auto it = t.preds.begin(); it != t.preds.end();) {
                if (!it->vars().intersect(gone).empty())
                    it = t.preds.erase(it);
                else
                    ++it;
            }
            return t;
        }
        case ReductionStep::Kind::Flt: {
            if (s.flt_preds.empty() || !vars_of(s.flt_preds).subset_of(s.edge))
                throw NotApplicableError("FLT predicates not covered by " + s.edge.str());
            for (const auto& p : s.flt_preds) {
                if (!t.preds.count(p)) throw NotApplicableError("FLT predicate absent: " + p.str());
                t.preds.erase(p);
            }
            return t;
        }
    }
    throw NotApplicableError("unknown step");
}

/// Reduces to the (unique) normal form using the deterministic step order.
inline HypergraphTriplet normal_form(HypergraphTriplet t) {
    while (true) {
        auto steps = applicable_steps(t);
        if (steps.empty()) return t;
        t = apply_step(std::move(t), steps.front());
    }
}

enum class QueryClass { Cyclic, Acyclic, FreeConnex };

struct Classification {
    QueryClass verdict = QueryClass::Cyclic;
    /// var(H(I)) after the first stage: the minimal var(N) over all connex
    /// sets of all join trees (meaningful for acyclic queries).
    Hyperedge minimal_out;

    bool acyclic() const { return verdict != QueryClass::Cyclic; }

    std::string str() const {
        switch (verdict) {
            case QueryClass::Cyclic: return "CYCLIC";
            case QueryClass::Acyclic: {
                std::string s = "ACYCLIC minimal_out=";
                const auto& vs = minimal_out.vars();
                for (size_t i = 0; i < vs.size(); ++i) s += (i ? "," : "") + vs[i];
                return s;
            }
            case QueryClass::FreeConnex: return "FREE-CONNEX";
        }
        return "?";
    }
};

/// Two-stage reduction: I = nf(hypertrip(Q)), J = nf(residual(I)). Q is
/// acyclic iff J is the empty triplet, and free-connex acyclic iff
/// additionally var(H(I)) equals free(Q).
inline Classification classify(const Gcq& q) {
    HypergraphTriplet stage1 = normal_form(hypertrip(q));
    Hyperedge minimal = stage1.all_vars();
    HypergraphTriplet stage2 = normal_form(residual(stage1));
    if (!stage2.is_empty()) return {QueryClass::Cyclic, {}};
    if (minimal == q.out) return {QueryClass::FreeConnex, minimal};
    return {QueryClass::Acyclic, minimal};
}

/// Partial join forest held in a shared node arena, together with the
/// residual output variables and predicates.
struct ForestTriplet {
    Gjt arena;
    std::vector<NodeId> roots;
    Hyperedge free;
    PredicateSet preds;

    HypergraphTriplet hypertrip() const {
        HypergraphTriplet t;
        for (NodeId r : roots) {
            const Hyperedge& label = arena.node(r).label;
            if (!label.empty()) t.hyper.insert(label);
        }
        t.free = free;
        t.preds = preds;
        return t;
    }
};

/// Initial forest: one leaf per atom occurrence.
inline ForestTriplet forest_of(const Gcq& q) {
    ForestTriplet f;
    for (const auto& a : q.atoms) f.roots.push_back(f.arena.add_leaf(a));
    f.free = q.out;
    f.preds = q.preds;
    return f;
}

namespace detail {

/// Merges all roots labeled `label` under a fresh interior node carrying
/// `edge_preds` on each child edge. Returns the new node.
inline NodeId merge_roots(ForestTriplet& f, const Hyperedge& label,
                          const PredicateSet& edge_preds) {
    std::vector<NodeId> matching;
    for (NodeId r : f.roots)
        if (f.arena.node(r).label == label) matching.push_back(r);
    if (matching.empty()) throw NotApplicableError("no forest root labeled " + label.str());
    NodeId n = f.arena.add_interior(label);
    for (NodeId r : matching) f.arena.attach(n, r, edge_preds);
    std::vector<NodeId> next;
    for (NodeId r : f.roots)
        if (f.arena.node(r).label != label) next.push_back(r);
    next.push_back(n);
    f.roots = std::move(next);
    return n;
}

}  // namespace detail

/// Enacts a reduction step on the forest so that
/// hypertrip(enact(F, s)) == apply_step(hypertrip(F), s).
inline ForestTriplet enact(ForestTriplet f, const ReductionStep& s) {
    // Validates applicability on the induced triplet.
    HypergraphTriplet check = apply_step(f.hypertrip(), s);
    switch (s.kind) {
        case ReductionStep::Kind::Iso: {
            NodeId n = detail::merge_roots(f, s.edge, {});
            NodeId p = f.arena.add_interior(s.edge.minus(s.iso_vars));
            f.arena.attach(p, n, {});
            f.roots.back() = p;
            break;
        }
        case ReductionStep::Kind::Cse: {
            PredicateSet crossing;
            Hyperedge gone = s.edge.minus(s.cse_into);
            for (const auto& p : f.preds)
                if (!p.vars().intersect(gone).empty()) crossing.insert(p);
            NodeId n = detail::merge_roots(f, s.edge, {});
            NodeId m = detail::merge_roots(f, s.cse_into, {});
            NodeId p = f.arena.add_interior(s.cse_into);
            // Re-fetch positions: both n and m are currently roots.
            f.roots.erase(std::remove(f.roots.begin(), f.roots.end(), n), f.roots.end());
            f.roots.erase(std::remove(f.roots.begin(), f.roots.end(), m), f.roots.end());
            f.arena.attach(p, n, crossing);
            f.arena.attach(p, m, {});
            f.roots.push_back(p);
            f.preds = check.preds;
            break;
        }
        case ReductionStep::Kind::Flt: {
            detail::merge_roots(f, s.edge, s.flt_preds);
            f.preds = check.preds;
            break;
        }
    }
    f.free = check.free;
    return f;
}

/// Computes a binary, sibling-closed GJT pair for an acyclic query by
/// enacting the two-stage reduction on a join forest. var(N) equals free(Q)
/// exactly when Q is free-connex; otherwise it is the minimal achievable
/// superset. Throws CyclicQueryError on cyclic input.
inline GjtPair build_plan(const Gcq& q) {
    ForestTriplet f = forest_of(q);
    while (true) {
        auto steps = applicable_steps(f.hypertrip());
        if (steps.empty()) break;
        f = enact(std::move(f), steps.front());
    }
    std::vector<NodeId> stage1_roots = f.roots;
    f.free = Hyperedge{};
    while (true) {
        auto steps = applicable_steps(f.hypertrip());
        if (steps.empty()) break;
        f = enact(std::move(f), steps.front());
    }
    HypergraphTriplet leftover = f.hypertrip();
    if (!leftover.hyper.empty() || !leftover.preds.empty())
        throw CyclicQueryError("query is cyclic: residual " + leftover.str());

    NodeId root = f.arena.add_interior(Hyperedge{});
    for (NodeId r : f.roots) f.arena.attach(root, r, {});
    f.arena.set_root(root);

    GjtPair pair;
    pair.tree = std::move(f.arena);
    for (NodeId x : stage1_roots) {
        pair.connex.insert(x);
        for (NodeId a = pair.tree.node(x).parent; a >= 0; a = pair.tree.node(a).parent)
            pair.connex.insert(a);
    }
    pair = to_sibling_closed(std::move(pair));
    pair = binarize(std::move(pair));
    assert(pair.tree.validate().empty());
    return pair;
}

}  // namespace djoin
