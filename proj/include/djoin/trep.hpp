#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "djoin/gjt.hpp"
#include "djoin/gyo.hpp"
#include "djoin/index.hpp"
#include "djoin/query.hpp"

namespace djoin {

/// The per-node delta GMRs produced by one update pass. Valid for delta
/// enumeration only until the next update on the owning representation.
struct DeltaSet {
    uint64_t epoch = 0;
    std::map<NodeId, Gmr> deltas;

    bool all_empty() const {
        for (const auto& [_, g] : deltas)
            if (!g.empty()) return false;
        return true;
    }
};

using TupleSink = std::function<bool(const Tuple&, int64_t)>;

/// The dynamic (T,N)-representation: per-node semijoin-reduced GMRs, an
/// enumeration index P_n for every n in N with a parent, and an update index
/// S_n for every node with a sibling. Single-writer: updates and
/// enumerations must not interleave.
class TRep {
  public:
    TRep(GjtPair plan, const Database& db) : plan_(std::move(plan)) {
        auto violations = plan_.tree.validate();
        if (!violations.empty()) throw Error("invalid plan tree: " + violations.front());
        if (!is_connex(plan_.tree, plan_.connex)) throw Error("plan connex set is not connex");
        if (!find_violators(plan_).empty())
            throw NotSiblingClosedError("plan connex set is not sibling-closed");
        for (NodeId id : plan_.tree.node_ids())
            if (plan_.tree.node(id).children.size() > 2)
                throw Error("plan tree is not binary");

        order_ = plan_.tree.postorder();
        compile();
        build_reducts(db);
    }

    const GjtPair& plan() const { return plan_; }
    uint64_t epoch() const { return epoch_; }

    /// Schema of enumerated tuples: var(N).
    const Hyperedge& output_schema() const { return nodes_.at(root_).out_schema; }

    const Gmr& reduct(NodeId id) const { return nodes_.at(id).rho; }

    /// Total support size across all per-node GMRs.
    size_t reduct_tuple_total() const {
        size_t n = 0;
        for (const auto& [_, nd] : nodes_) n += nd.rho.size();
        return n;
    }

    /// Live tuples across reducts and indices (the memory metric).
    size_t live_tuple_count() const {
        size_t n = 0;
        for (const auto& [_, nd] : nodes_) {
            n += nd.rho.size();
            if (nd.p_index) n += nd.p_index->tuple_count();
            if (nd.s_index) n += nd.s_index->tuple_count();
        }
        return n;
    }

    /// Streams E of the represented query result: each tuple over var(N)
    /// exactly once with its multiplicity. The sink returns false to stop.
    void enumerate(const TupleSink& sink, ProbeStats* stats = nullptr) const {
        TupleSink counted = [&](const Tuple& t, int64_t m) {
            if (stats) stats->on_output();
            return sink(t, m);
        };
        const Node& root = nodes_.at(root_);
        for (const auto& [t, m] : root.rho.entries()) {
            if (stats) stats->on_probe();
            if (!enum_node(root, t, m, Mode::New, nullptr, counted, stats)) break;
        }
        if (stats) stats->on_finish();
    }

    Gmr enumerate_gmr() const {
        Gmr out{output_schema()};
        enumerate([&](const Tuple& t, int64_t m) {
            out.add(t, m);
            return true;
        });
        return out;
    }

    /// Applies a (multi-relation) update, transforming this into a
    /// representation of db+u. Positivity is pre-checked on the leaves; a
    /// violating update is rejected without any mutation. Returns the
    /// per-node deltas for delta enumeration.
    DeltaSet update(const DbUpdate& u) {
        for (const auto& [name, delta] : u.relations()) {
            auto lit = leaf_of_relation_.find(name);
            if (lit == leaf_of_relation_.end())
                throw MissingRelationError("update names unknown relation " + name);
            const Node& leaf = nodes_.at(lit->second);
            Gmr rekeyed = occurrence_view(delta, leaf.atom);
            for (const auto& [t, m] : rekeyed.entries())
                if (leaf.rho.multiplicity(t) + m < 0)
                    throw NegativeDatabaseError("update drives relation " + name + " negative");
        }

        DeltaSet ds;
        ds.epoch = ++epoch_;
        for (NodeId id : order_) ds.deltas.emplace(id, Gmr{nodes_.at(id).schema});
        for (const auto& [name, delta] : u.relations())
            for (NodeId leaf : leaves_of_relation_.at(name))
                ds.deltas.at(leaf).add_all(occurrence_view(delta, nodes_.at(leaf).atom));

        for (NodeId id : order_) {
            Node& nd = nodes_.at(id);
            const Gmr& dn = ds.deltas.at(id);
            if (dn.empty()) continue;
            apply_delta(nd, dn);
            if (nd.parent < 0) continue;
            Gmr& dp = ds.deltas.at(nd.parent);
            if (nd.sibling >= 0) {
                propagate_binary(nd, dn, dp);
            } else {
                propagate_unary(nd, dn, dp);
            }
        }
        return ds;
    }

    /// Streams E of the delta query Q(db+u) - Q(db) for the update that
    /// produced `ds` (which must be the most recent one).
    void delta_enumerate(const DeltaSet& ds, const TupleSink& sink,
                         ProbeStats* stats = nullptr) const {
        if (ds.epoch != epoch_)
            throw StaleDeltaError("delta set is stale: representation has moved on");

        // Index the deltas of enumeration nodes like their reducts.
        std::map<NodeId, NodeIndex> didx;
        for (const auto& [id, dn] : ds.deltas) {
            const Node& nd = nodes_.at(id);
            if (!nd.in_n || !nd.p_spec) continue;
            NodeIndex di(nd.p_spec.get());
            for (const auto& [t, m] : dn.entries()) di.add(t, m);
            didx.emplace(id, std::move(di));
        }
        DeltaCtx ctx{&ds, &didx};

        TupleSink counted = [&](const Tuple& t, int64_t m) {
            if (stats) stats->on_output();
            return sink(t, m);
        };
        const Node& root = nodes_.at(root_);
        const Gmr& droot = ds.deltas.at(root_);
        bool go = true;
        for (const auto& [t, m] : root.rho.entries()) {
            if (stats) stats->on_probe();
            if (!(go = enum_node(root, t, droot.multiplicity(t), Mode::Delta, &ctx, counted,
                                 stats)))
                break;
        }
        if (go) {
            // Output tuples that existed only before the update: their root
            // projection may have left the reduct entirely.
            for (const auto& [t, m] : droot.entries()) {
                if (stats) stats->on_probe();
                if (root.rho.contains(t)) continue;
                if (!enum_node(root, t, m, Mode::Delta, &ctx, counted, stats)) break;
            }
        }
        if (stats) stats->on_finish();
    }

    Gmr delta_gmr(const DeltaSet& ds) const {
        Gmr out{output_schema()};
        delta_enumerate(ds, [&](const Tuple& t, int64_t m) {
            out.add(t, m);
            return true;
        });
        return out;
    }

    /// Per-node reducts and enumeration-index group keys, for golden tests.
    std::string debug_dump() const {
        std::ostringstream os;
        for (NodeId id : order_) {
            const Node& nd = nodes_.at(id);
            os << "node " << id << " "
               << (nd.is_leaf ? nd.atom.str() : nd.schema.str()) << "\n";
            os << nd.rho.to_text();
            if (nd.p_index) {
                os << "P-groups:";
                std::vector<std::string> keys;
                for (const auto& [k, _] : nd.p_index->groups()) keys.push_back(k.str());
                std::sort(keys.begin(), keys.end());
                for (const auto& k : keys) os << " [" << k << "]";
                os << "\n";
            }
        }
        return os.str();
    }

  private:
    enum class Mode { New, Old, Delta };

    struct CompiledFilter {
        explicit CompiledFilter(Predicate p) : pred(std::move(p)) {}
        Predicate pred;
        std::vector<int> positions;  // per predicate arg, position in schema

        bool eval(const Tuple& t) const {
            switch (pred.kind()) {
                case Predicate::Kind::VarCmpVar:
                    return cmp_eval(t[static_cast<size_t>(positions[0])], pred.op(),
                                    t[static_cast<size_t>(positions[1])]);
                case Predicate::Kind::VarCmpConst:
                    return cmp_eval(t[static_cast<size_t>(positions[0])], pred.op(),
                                    pred.constant());
                case Predicate::Kind::Opaque: {
                    std::vector<Value> args;
                    args.reserve(positions.size());
                    for (int p : positions) args.push_back(t[static_cast<size_t>(p)]);
                    return pred.opaque_impl().fn(args);
                }
            }
            return false;
        }
    };

    // Ranged update paths: usable when every predicate of the parent bounds
    // one single attribute of one side against attributes of the other side
    // (or constants). The bounded side can then be aggregated with sorted
    // prefix sums instead of pairwise probing.
    struct RangedBound {
        CmpOp op;  // bounded_attr OP source_value
        bool from_other = false;
        int other_pos = -1;
        Value constant;
    };
    struct RangedJoin {
        bool n_usable = false;  // all preds bound n_attr (this node's side)
        int n_attr = -1;
        std::vector<RangedBound> n_bounds;
        bool n_single_varvar = false;  // one var-var bound: monotone sweep applies

        bool m_usable = false;  // all preds bound m_attr (the sibling's side)
        int m_attr = -1;
        std::vector<RangedBound> m_bounds;
    };

    struct Node {
        NodeId id = -1;
        bool is_leaf = false;
        std::string relation;
        AtomOccurrence atom;
        Hyperedge schema;
        NodeId parent = -1, sibling = -1;
        std::vector<NodeId> children, n_children;
        PredicateSet edge_preds, parent_preds;
        bool in_n = false, frontier = false;

        Gmr rho;
        std::unique_ptr<IndexSpec> p_spec, s_spec;
        std::optional<NodeIndex> p_index, s_index;

        // Enumeration output assembly.
        Hyperedge out_schema;  // var(N ∩ subtree), for nodes in N
        std::vector<std::pair<bool, int>> merge_map;  // binary: (from_first_child, pos)

        // Update propagation.
        std::vector<int> proj_to_parent;        // valid when this node guards the parent
        std::vector<int> sibling_proj_to_parent;  // valid when the sibling guards
        bool self_guards = false, sibling_guards = false;
        std::vector<CompiledFilter> unary_filters;  // unary edge: preds(p) on this schema
        std::vector<int> unary_proj;
        RangedJoin ranged;
    };

    struct DeltaCtx {
        const DeltaSet* ds;
        const std::map<NodeId, NodeIndex>* didx;
    };

    void compile() {
        const Gjt& t = plan_.tree;
        root_ = t.root();
        for (NodeId id : order_) {
            Node nd;
            nd.id = id;
            const GjtNode& g = t.node(id);
            nd.is_leaf = g.is_leaf;
            nd.atom = g.atom;
            nd.relation = g.atom.relation;
            nd.schema = g.label;
            nd.parent = g.parent;
            nd.children = g.children;
            nd.edge_preds = g.edge_preds;
            if (g.parent >= 0) {
                nd.parent_preds = t.preds_below(g.parent);
                for (NodeId c : t.node(g.parent).children)
                    if (c != id) nd.sibling = c;
            }
            nd.in_n = plan_.connex.count(id) > 0;
            for (NodeId c : g.children)
                if (plan_.connex.count(c)) nd.n_children.push_back(c);
            nd.frontier = nd.in_n && nd.n_children.empty();
            if (nd.is_leaf) {
                leaves_of_relation_[nd.relation].push_back(id);
                leaf_of_relation_.emplace(nd.relation, id);
            }
            nd.rho = Gmr{nd.schema};
            nodes_.emplace(id, std::move(nd));
        }

        // Output schemas bottom-up; merge maps for binary nodes in N.
        for (NodeId id : order_) {
            Node& nd = nodes_.at(id);
            if (!nd.in_n) continue;
            if (nd.frontier) {
                nd.out_schema = nd.schema;
            } else if (nd.n_children.size() == 1) {
                nd.out_schema = nodes_.at(nd.n_children[0]).out_schema;
            } else {
                const Hyperedge& a = nodes_.at(nd.n_children[0]).out_schema;
                const Hyperedge& b = nodes_.at(nd.n_children[1]).out_schema;
                nd.out_schema = a.union_with(b);
                for (const auto& v : nd.out_schema.vars()) {
                    int pa = a.index_of(v);
                    if (pa >= 0)
                        nd.merge_map.emplace_back(true, pa);
                    else
                        nd.merge_map.emplace_back(false, b.index_of(v));
                }
            }
        }

        // Propagation plumbing.
        for (NodeId id : order_) {
            Node& nd = nodes_.at(id);
            if (nd.parent < 0) continue;
            const Node& p = nodes_.at(nd.parent);
            nd.self_guards = p.schema.subset_of(nd.schema);
            if (nd.self_guards) nd.proj_to_parent = projection_map(nd.schema, p.schema);
            if (nd.sibling >= 0) {
                const Node& m = nodes_.at(nd.sibling);
                nd.sibling_guards = p.schema.subset_of(m.schema);
                if (nd.sibling_guards)
                    nd.sibling_proj_to_parent = projection_map(m.schema, p.schema);
                compile_ranged_join(nd, m);
            } else {
                nd.unary_proj = projection_map(nd.schema, p.schema);
                for (const auto& pr : nd.parent_preds) {
                    CompiledFilter f(pr);
                    std::vector<std::string> argvars;
                    if (pr.kind() == Predicate::Kind::Opaque)
                        argvars = pr.opaque_impl().vars;
                    else if (pr.kind() == Predicate::Kind::VarCmpVar)
                        argvars = {pr.lhs(), pr.rhs()};
                    else
                        argvars = {pr.lhs()};
                    for (const auto& v : argvars) {
                        int pos = nd.schema.index_of(v);
                        if (pos < 0)
                            throw UnboundPredicateVariableError(
                                "predicate " + pr.str() + " unbound below " + p.schema.str());
                        f.positions.push_back(pos);
                    }
                    nd.unary_filters.push_back(std::move(f));
                }
            }
        }

        // Index specs.
        for (NodeId id : order_) {
            Node& nd = nodes_.at(id);
            if (nd.in_n && nd.parent >= 0)
                nd.p_spec = std::make_unique<IndexSpec>(compile_index_spec(
                    nd.schema, nodes_.at(nd.parent).schema, nd.edge_preds));
            if (nd.sibling >= 0)
                nd.s_spec = std::make_unique<IndexSpec>(compile_index_spec(
                    nd.schema, nodes_.at(nd.sibling).schema, nd.parent_preds));
        }
    }

    void compile_ranged_join(Node& nd, const Node& m) {
        RangedJoin& rj = nd.ranged;
        if (nd.parent_preds.empty()) return;
        rj.n_usable = rj.m_usable = true;
        Hyperedge shared = nd.schema.intersect(m.schema);
        auto excl = [&](const Hyperedge& s, const std::string& v) {
            return s.contains(v) && !shared.contains(v);
        };
        auto set_attr = [](bool& usable, int& attr, int pos) {
            if (attr >= 0 && attr != pos) usable = false;
            attr = pos;
        };
        int varvar_n = 0;
        for (const auto& p : nd.parent_preds) {
            bool n_done = false, m_done = false;
            if (p.kind() == Predicate::Kind::VarCmpVar && p.op() != CmpOp::Ne) {
                const std::string &l = p.lhs(), &r = p.rhs();
                if (excl(nd.schema, l) && m.schema.contains(r)) {
                    set_attr(rj.n_usable, rj.n_attr, nd.schema.index_of(l));
                    rj.n_bounds.push_back({p.op(), true, m.schema.index_of(r), Value()});
                    n_done = true;
                    ++varvar_n;
                } else if (excl(nd.schema, r) && m.schema.contains(l)) {
                    set_attr(rj.n_usable, rj.n_attr, nd.schema.index_of(r));
                    rj.n_bounds.push_back({cmp_flip(p.op()), true, m.schema.index_of(l), Value()});
                    n_done = true;
                    ++varvar_n;
                }
                if (excl(m.schema, l) && nd.schema.contains(r)) {
                    set_attr(rj.m_usable, rj.m_attr, m.schema.index_of(l));
                    rj.m_bounds.push_back({p.op(), true, nd.schema.index_of(r), Value()});
                    m_done = true;
                } else if (excl(m.schema, r) && nd.schema.contains(l)) {
                    set_attr(rj.m_usable, rj.m_attr, m.schema.index_of(r));
                    rj.m_bounds.push_back({cmp_flip(p.op()), true, nd.schema.index_of(l), Value()});
                    m_done = true;
                }
            } else if (p.kind() == Predicate::Kind::VarCmpConst && p.op() != CmpOp::Ne) {
                if (excl(nd.schema, p.lhs())) {
                    set_attr(rj.n_usable, rj.n_attr, nd.schema.index_of(p.lhs()));
                    rj.n_bounds.push_back({p.op(), false, -1, p.constant()});
                    n_done = true;
                }
                if (excl(m.schema, p.lhs())) {
                    set_attr(rj.m_usable, rj.m_attr, m.schema.index_of(p.lhs()));
                    rj.m_bounds.push_back({p.op(), false, -1, p.constant()});
                    m_done = true;
                }
            }
            if (!n_done) rj.n_usable = false;
            if (!m_done) rj.m_usable = false;
        }
        rj.n_single_varvar = rj.n_usable && nd.parent_preds.size() == 1 && varvar_n == 1;
    }

    /// Builds the reducts by running the whole database through the batch
    /// update path on an initially empty representation.
    void build_reducts(const Database& db) {
        for (NodeId id : order_) {
            Node& nd = nodes_.at(id);
            if (nd.p_spec) nd.p_index.emplace(nd.p_spec.get());
            if (nd.s_spec) nd.s_index.emplace(nd.s_spec.get());
        }
        DbUpdate whole;
        for (const auto& [name, leaf] : leaf_of_relation_) {
            const Gmr& rel = db.at(name);
            if (!rel.positive())
                throw NonPositiveDatabaseError("relation " + name + " not positive");
            if (!rel.empty()) whole.set(name, rel);
        }
        if (!whole.empty()) update(whole);
        epoch_ = 0;
    }

    void apply_delta(Node& nd, const Gmr& dn) {
        for (const auto& [t, m] : dn.entries()) {
            nd.rho.add(t, m);
            if (nd.p_index) nd.p_index->add(t, m);
            if (nd.s_index) nd.s_index->add(t, m);
        }
    }

    void propagate_unary(const Node& nd, const Gmr& dn, Gmr& dp) {
        for (const auto& [t, m] : dn.entries()) {
            bool ok = true;
            for (const auto& f : nd.unary_filters)
                if (!f.eval(t)) {
                    ok = false;
                    break;
                }
            if (ok) dp.add(project_tuple(t, nd.unary_proj), m);
        }
    }

    /// dp += project_var(p)( rho_m join_{preds(p)} dn ), using the sibling's
    /// update index. The ranged paths aggregate one side with sorted prefix
    /// sums so the work tracks the affected region, not the whole relation.
    void propagate_binary(const Node& nd, const Gmr& dn, Gmr& dp) {
        const Node& m = nodes_.at(nd.sibling);
        if (nd.parent_preds.empty()) {
            propagate_equi(nd, m, dn, dp);
        } else if (nd.sibling_guards && nd.ranged.n_usable) {
            propagate_ranged_sibling_guard(nd, m, dn, dp);
        } else if (nd.self_guards && nd.ranged.m_usable) {
            propagate_ranged_self_guard(nd, m, dn, dp);
        } else {
            propagate_general(nd, m, dn, dp);
        }
    }

    void propagate_equi(const Node& nd, const Node& m, const Gmr& dn, Gmr& dp) {
        const IndexSpec& spec = m.s_index->spec();
        if (nd.sibling_guards) {
            // Group-total of the delta, then scale every sibling tuple.
            Gmr keyed = project(dn, spec.group_vars);
            for (const auto& [key, total] : keyed.entries()) {
                const NodeIndex::Group* g = m.s_index->find_group(key);
                if (!g) continue;
                for (const auto& [_, bucket] : *g)
                    for (const auto& [t, mt] : bucket)
                        dp.add(project_tuple(t, nd.sibling_proj_to_parent),
                               checked_mul(mt, total));
            }
        } else {
            // This node guards the parent: scale each delta tuple by the
            // maintained sibling group total.
            std::vector<int> key_pos = projection_map(nd.schema, spec.group_vars);
            for (const auto& [t, mt] : dn.entries()) {
                int64_t total = m.s_index->group_total(project_tuple(t, key_pos));
                if (total != 0)
                    dp.add(project_tuple(t, nd.proj_to_parent), checked_mul(mt, total));
            }
        }
    }

    struct DEntry {
        Value v;
        int64_t m;
        const Tuple* t;
    };

    /// Delta entries grouped by the sibling index's group variables, each
    /// group sorted ascending on `attr` with prefix sums.
    std::unordered_map<Tuple, std::pair<std::vector<DEntry>, std::vector<int64_t>>, TupleHash>
    group_delta(const Node& nd, const Gmr& dn, const IndexSpec& spec, int attr) const {
        std::vector<int> dkey_pos = projection_map(nd.schema, spec.group_vars);
        std::unordered_map<Tuple, std::pair<std::vector<DEntry>, std::vector<int64_t>>, TupleHash>
            dgroups;
        for (const auto& [t, mt] : dn.entries())
            dgroups[project_tuple(t, dkey_pos)].first.push_back(
                {t[static_cast<size_t>(attr)], mt, &t});
        for (auto& [_, gp] : dgroups) {
            auto& [vec, prefix] = gp;
            std::sort(vec.begin(), vec.end(), [](const DEntry& a, const DEntry& b) {
                return a.v.container_compare(b.v) < 0;
            });
            prefix.assign(vec.size() + 1, 0);
            for (size_t i = 0; i < vec.size(); ++i)
                prefix[i + 1] = checked_add(prefix[i], vec[i].m);
        }
        return dgroups;
    }

    /// [lo, hi) slice of an ascending value vector satisfying all bounds
    /// instantiated against `src` (a sibling tuple, or none for constants).
    template <typename GetV>
    static std::pair<size_t, size_t> bounded_range(const std::vector<RangedBound>& bounds,
                                                   const Tuple* src, size_t n, GetV&& getv) {
        size_t lo = 0, hi = n;
        for (const auto& b : bounds) {
            const Value& v = b.from_other ? (*src)[static_cast<size_t>(b.other_pos)] : b.constant;
            // Binary search for the first index with value above v.
            auto first_above = [&](bool strict) {
                size_t l = 0, r = n;
                while (l < r) {
                    size_t mid = (l + r) / 2;
                    int c = getv(mid).container_compare(v);
                    if (strict ? c > 0 : c >= 0)
                        r = mid;
                    else
                        l = mid + 1;
                }
                return l;
            };
            switch (b.op) {  // bounded_attr OP v
                case CmpOp::Gt: lo = std::max(lo, first_above(true)); break;
                case CmpOp::Ge: lo = std::max(lo, first_above(false)); break;
                case CmpOp::Lt: hi = std::min(hi, first_above(false)); break;
                case CmpOp::Le: hi = std::min(hi, first_above(true)); break;
                default: return {0, 0};
            }
        }
        if (lo > hi) return {0, 0};
        return {lo, hi};
    }

    /// Sibling guards the parent: every output tuple is a projected sibling
    /// tuple, scaled by the sum of compatible delta multiplicities. With a
    /// single variable-to-variable bound the compatible count shrinks
    /// monotonically along the sibling group's sort order, so the walk stops
    /// at the first structurally-empty position; every iteration advances a
    /// cursor or the group iterator.
    void propagate_ranged_sibling_guard(const Node& nd, const Node& m, const Gmr& dn, Gmr& dp) {
        const IndexSpec& spec = m.s_index->spec();
        auto dgroups = group_delta(nd, dn, spec, nd.ranged.n_attr);
        for (auto& [key, gp] : dgroups) {
            auto& [dvec, prefix] = gp;
            const NodeIndex::Group* g = m.s_index->find_group(key);
            if (!g) continue;
            auto getv = [&](size_t i) -> const Value& { return dvec[i].v; };
            if (nd.ranged.n_single_varvar) {
                const RangedBound& b = nd.ranged.n_bounds[0];
                size_t cursor = b.op == CmpOp::Gt || b.op == CmpOp::Ge ? 0 : dvec.size();
                for (const auto& [skey, bucket] : *g) {
                    const Tuple& probe = bucket.begin()->first;
                    (void)skey;
                    const Value& mv = probe[static_cast<size_t>(b.other_pos)];
                    size_t lo = 0, hi = dvec.size();
                    bool strict = b.op == CmpOp::Gt || b.op == CmpOp::Lt;
                    if (b.op == CmpOp::Gt || b.op == CmpOp::Ge) {
                        lo = move_boundary(dvec.size(), cursor, strict, mv, getv);
                    } else {
                        hi = move_boundary(dvec.size(), cursor, !strict, mv, getv);
                    }
                    if (lo >= hi) break;  // compatible region only shrinks from here
                    int64_t sum = prefix[hi] - prefix[lo];
                    if (sum == 0) continue;
                    for (const auto& [t, mt] : bucket)
                        dp.add(project_tuple(t, nd.sibling_proj_to_parent),
                               checked_mul(mt, sum));
                }
            } else {
                for (const auto& [skey, bucket] : *g) {
                    (void)skey;
                    const Tuple& probe = bucket.begin()->first;
                    auto [lo, hi] =
                        bounded_range(nd.ranged.n_bounds, &probe, dvec.size(), getv);
                    if (lo >= hi) continue;
                    int64_t sum = prefix[hi] - prefix[lo];
                    if (sum == 0) continue;
                    for (const auto& [t, mt] : bucket)
                        dp.add(project_tuple(t, nd.sibling_proj_to_parent),
                               checked_mul(mt, sum));
                }
            }
        }
    }

    /// This node guards the parent: every output tuple is a projected delta
    /// tuple, scaled by the sum of compatible sibling multiplicities. Full
    /// coverage of a sibling group short-circuits through its maintained
    /// total (the common case on temporally-ordered streams); partial
    /// coverage flattens the group once and binary-searches per delta tuple.
    void propagate_ranged_self_guard(const Node& nd, const Node& m, const Gmr& dn, Gmr& dp) {
        const IndexSpec& spec = m.s_index->spec();
        std::vector<int> dkey_pos = projection_map(nd.schema, spec.group_vars);
        // Sibling sort keys hold exactly the bounded attribute; its position
        // within the sort key:
        int skpos = -1;
        for (size_t i = 0; i < spec.sort_attrs.size(); ++i)
            if (spec.sort_attrs[i].owner_pos == nd.ranged.m_attr) skpos = static_cast<int>(i);
        assert(skpos >= 0);

        std::unordered_map<Tuple, std::vector<std::pair<const Tuple*, int64_t>>, TupleHash>
            dgroups;
        for (const auto& [t, mt] : dn.entries())
            dgroups[project_tuple(t, dkey_pos)].emplace_back(&t, mt);

        for (const auto& [key, dts] : dgroups) {
            const NodeIndex::Group* g = m.s_index->find_group(key);
            if (!g) continue;
            const Value& first_key = g->begin()->first[static_cast<size_t>(skpos)];
            const Value& last_key = std::prev(g->end())->first[static_cast<size_t>(skpos)];
            int64_t group_total = m.s_index->group_total(key);

            std::vector<std::pair<Value, int64_t>> mvec;  // lazily flattened
            std::vector<int64_t> mprefix;
            auto flatten = [&]() {
                if (!mvec.empty()) return;
                for (const auto& [skey, bucket] : *g) {
                    int64_t s = 0;
                    for (const auto& [_, mm] : bucket) s = checked_add(s, mm);
                    mvec.emplace_back(skey[static_cast<size_t>(skpos)], s);
                }
                std::sort(mvec.begin(), mvec.end(),
                          [](const auto& a, const auto& b) {
                              return a.first.container_compare(b.first) < 0;
                          });
                mprefix.assign(mvec.size() + 1, 0);
                for (size_t i = 0; i < mvec.size(); ++i)
                    mprefix[i + 1] = checked_add(mprefix[i], mvec[i].second);
            };

            // Container ordering keeps this total on mixed-type columns,
            // matching the index comparators.
            auto satisfied_one = [&](const RangedBound& b, const Value& keyval,
                                     const Tuple& dt) {
                const Value& v =
                    b.from_other ? dt[static_cast<size_t>(b.other_pos)] : b.constant;
                int c = keyval.container_compare(v);
                return b.op == CmpOp::Lt   ? c < 0
                       : b.op == CmpOp::Le ? c <= 0
                       : b.op == CmpOp::Gt ? c > 0
                                           : c >= 0;
            };

            for (const auto& [dt, dmult] : dts) {
                // Each bound is a half-line in the key: holding at both key
                // extremes means it holds on the whole group, failing at both
                // means it holds nowhere.
                bool full = true, empty = false;
                for (const auto& b : nd.ranged.m_bounds) {
                    bool lo_ok = satisfied_one(b, first_key, *dt);
                    bool hi_ok = satisfied_one(b, last_key, *dt);
                    if (!(lo_ok && hi_ok)) full = false;
                    if (!lo_ok && !hi_ok) empty = true;
                }
                int64_t sum;
                if (empty) {
                    sum = 0;
                } else if (full) {
                    sum = group_total;
                } else {
                    flatten();
                    auto getv = [&](size_t i) -> const Value& { return mvec[i].first; };
                    auto [lo, hi] = bounded_range(nd.ranged.m_bounds, dt, mvec.size(), getv);
                    sum = lo < hi ? mprefix[hi] - mprefix[lo] : 0;
                }
                if (sum != 0)
                    dp.add(project_tuple(*dt, nd.proj_to_parent), checked_mul(dmult, sum));
            }
        }
    }

    /// Moves the cursor to the first index whose value compares above the
    /// pivot (strictly, or at-least when strict is false). Bidirectional so
    /// the cursor stays amortized-linear whatever the walk direction is.
    template <typename GetV>
    static size_t move_boundary(size_t n, size_t& cursor, bool strict, const Value& pivot,
                                GetV&& getv) {
        auto above = [&](size_t i) {
            int c = getv(i).container_compare(pivot);
            return strict ? c > 0 : c >= 0;
        };
        while (cursor < n && !above(cursor)) ++cursor;
        while (cursor > 0 && above(cursor - 1)) --cursor;
        return cursor;
    }

    void propagate_general(const Node& nd, const Node& m, const Gmr& dn, Gmr& dp) {
        for (const auto& [s, ms] : dn.entries()) {
            m.s_index->probe(s, nullptr, [&](const Tuple& t, int64_t mt) {
                if (nd.sibling_guards)
                    dp.add(project_tuple(t, nd.sibling_proj_to_parent), checked_mul(mt, ms));
                else
                    dp.add(project_tuple(s, nd.proj_to_parent), checked_mul(ms, mt));
                return true;
            });
        }
    }

    // ---- enumeration ----

    /// Streams the subtree results compatible with guide tuple t, over
    /// out_schema(n). `mult` is meaningful at frontier nodes. In Delta mode
    /// the stream is new-minus-old; Old mode streams the pre-update state.
    bool enum_node(const Node& nd, const Tuple& t, int64_t mult, Mode mode, const DeltaCtx* ctx,
                   const TupleSink& sink, ProbeStats* stats) const {
        if (nd.frontier) {
            if (mode == Mode::Delta && mult == 0) return true;
            return sink(t, mult);
        }
        if (nd.n_children.size() == 1) {
            const Node& c = nodes_.at(nd.n_children[0]);
            return compat(c, t, mode, ctx, stats, [&](const Tuple& s, int64_t m2) {
                return enum_node(c, s, m2, mode, ctx, sink, stats);
            });
        }
        const Node& c1 = nodes_.at(nd.n_children[0]);
        const Node& c2 = nodes_.at(nd.n_children[1]);
        if (mode != Mode::Delta)
            return enum_cross(nd, c1, c2, t, mode, mode, ctx, sink, stats);
        // Delta decomposition: delta x new + old x delta.
        if (!enum_cross(nd, c1, c2, t, Mode::Delta, Mode::New, ctx, sink, stats)) return false;
        return enum_cross(nd, c1, c2, t, Mode::Old, Mode::Delta, ctx, sink, stats);
    }

    bool enum_cross(const Node& nd, const Node& c1, const Node& c2, const Tuple& t, Mode m1,
                    Mode m2, const DeltaCtx* ctx, const TupleSink& sink,
                    ProbeStats* stats) const {
        return compat(c1, t, m1, ctx, stats, [&](const Tuple& t1, int64_t mu1) {
            TupleSink inner1 = [&](const Tuple& r1, int64_t mu) {
                return compat(c2, t, m2, ctx, stats, [&](const Tuple& t2, int64_t mu2) {
                    TupleSink inner2 = [&](const Tuple& r2, int64_t nu) {
                        return sink(merge_outputs(nd, c1, c2, r1, r2),
                                    checked_mul(mu, nu));
                    };
                    return enum_node(c2, t2, mu2, m2, ctx, inner2, stats);
                });
            };
            return enum_node(c1, t1, mu1, m1, ctx, inner1, stats);
        });
    }

    /// Iterates child tuples compatible with guide t in the given mode.
    template <typename Fn>
    bool compat(const Node& c, const Tuple& t, Mode mode, const DeltaCtx* ctx,
                ProbeStats* stats, Fn&& fn) const {
        switch (mode) {
            case Mode::New: return c.p_index->probe(t, stats, fn);
            case Mode::Delta: {
                auto it = ctx->didx->find(c.id);
                if (it == ctx->didx->end()) return true;
                return it->second.probe(t, stats, fn);
            }
            case Mode::Old: {
                const Gmr& dc = ctx->ds->deltas.at(c.id);
                bool go = c.p_index->probe(t, stats, [&](const Tuple& s, int64_t m) {
                    if (stats) stats->on_probe();
                    int64_t old = m - dc.multiplicity(s);
                    if (old == 0) return true;
                    return fn(s, old);
                });
                if (!go) return false;
                auto it = ctx->didx->find(c.id);
                if (it == ctx->didx->end()) return true;
                return it->second.probe(t, stats, [&](const Tuple& s, int64_t dm) {
                    if (stats) stats->on_probe();
                    if (c.rho.contains(s)) return true;  // covered above
                    return fn(s, -dm);
                });
            }
        }
        return true;
    }

    Tuple merge_outputs(const Node& nd, const Node& c1, const Node& c2, const Tuple& r1,
                        const Tuple& r2) const {
        (void)c1;
        (void)c2;
        std::vector<Value> vals;
        vals.reserve(nd.merge_map.size());
        for (const auto& [from_first, pos] : nd.merge_map)
            vals.push_back(from_first ? r1[static_cast<size_t>(pos)]
                                      : r2[static_cast<size_t>(pos)]);
        return Tuple(std::move(vals));
    }

    GjtPair plan_;
    std::map<NodeId, Node> nodes_;
    std::vector<NodeId> order_;
    NodeId root_ = -1;
    uint64_t epoch_ = 0;
    std::map<std::string, std::vector<NodeId>> leaves_of_relation_;
    std::map<std::string, NodeId> leaf_of_relation_;
};

enum class ViewMode { Pull, Push };

/// Maintains an acyclic (not necessarily free-connex) query through the
/// free-connex approximation: the plan covers the minimal achievable
/// variable superset and results are projected down, with duplicates merged
/// by multiplicity. Pull mode keeps Q(db) materialized; push mode only
/// materializes each update's delta.
class FallbackView {
  public:
    FallbackView(const Gcq& q, const Database& db, ViewMode mode)
        : query_(q), mode_(mode), array_{q.out} {
        Classification c = classify(q);
        if (!c.acyclic()) throw NotAcyclicError("fallback requires an acyclic query");
        free_connex_input_ = c.verdict == QueryClass::FreeConnex;
        rep_.emplace(build_plan(q), db);
        proj_ = projection_map(rep_->output_schema(), q.out);
        if (mode_ == ViewMode::Pull) {
            rep_->enumerate([&](const Tuple& t, int64_t m) {
                array_.add(project_tuple(t, proj_), m);
                return true;
            });
        }
    }

    /// True when the query was free-connex anyway (the direct representation
    /// would have sufficed).
    bool free_connex_input() const { return free_connex_input_; }

    const TRep& rep() const { return *rep_; }

    /// Applies the update; returns the materialized projected delta.
    Gmr apply(const DbUpdate& u) {
        DeltaSet ds = rep_->update(u);
        Gmr delta{query_.out};
        rep_->delta_enumerate(ds, [&](const Tuple& t, int64_t m) {
            delta.add(project_tuple(t, proj_), m);
            return true;
        });
        if (mode_ == ViewMode::Pull) array_.add_all(delta);
        return delta;
    }

    /// Pull mode: the maintained materialization of Q(db).
    const Gmr& materialized() const {
        if (mode_ != ViewMode::Pull) throw Error("materialized() requires pull mode");
        return array_;
    }

  private:
    Gcq query_;
    ViewMode mode_;
    std::optional<TRep> rep_;
    std::vector<int> proj_;
    Gmr array_;
    bool free_connex_input_ = false;
};

}  // namespace djoin
