#pragma once

#include <algorithm>
#include <cassert>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "djoin/query.hpp"

namespace djoin {

using NodeId = int;

/// A node of a generalized join tree. Leaves are labeled by atom occurrences,
/// interior nodes by hyperedges; the edge from the parent carries a predicate
/// set scoped to var(parent) + var(node).
struct GjtNode {
    NodeId id = -1;
    bool is_leaf = false;
    AtomOccurrence atom;  // leaves only
    Hyperedge label;      // var(n); equals the atom schema for leaves
    NodeId parent = -1;
    std::vector<NodeId> children;
    PredicateSet edge_preds;  // preds(parent -> this)
};

/// Generalized join tree with stable integer node ids. Transforms copy the
/// tree and return a new one; ids of surviving nodes are preserved.
class Gjt {
  public:
    NodeId add_leaf(AtomOccurrence atom) {
        GjtNode n;
        n.id = next_id_++;
        n.is_leaf = true;
        n.label = atom.schema();
        n.atom = std::move(atom);
        nodes_[n.id] = std::move(n);
        if (root_ < 0) root_ = next_id_ - 1;
        return next_id_ - 1;
    }

    NodeId add_interior(Hyperedge label) {
        GjtNode n;
        n.id = next_id_++;
        n.label = std::move(label);
        nodes_[n.id] = std::move(n);
        if (root_ < 0) root_ = next_id_ - 1;
        return next_id_ - 1;
    }

    void attach(NodeId parent, NodeId child, PredicateSet edge_preds = {}) {
        GjtNode& c = nodes_.at(child);
        assert(c.parent < 0);
        c.parent = parent;
        c.edge_preds = std::move(edge_preds);
        nodes_.at(parent).children.push_back(child);
        if (child == root_) root_ = parent;
        while (nodes_.at(root_).parent >= 0) root_ = nodes_.at(root_).parent;
    }

    void detach(NodeId child) {
        GjtNode& c = nodes_.at(child);
        if (c.parent < 0) return;
        auto& sib = nodes_.at(c.parent).children;
        sib.erase(std::find(sib.begin(), sib.end(), child));
        c.parent = -1;
        c.edge_preds.clear();
    }

    /// Erases a node that is fully detached (no parent, no children).
    void erase_detached(NodeId id) {
        const GjtNode& n = nodes_.at(id);
        assert(n.parent < 0 && n.children.empty());
        (void)n;
        nodes_.erase(id);
    }

    void set_root(NodeId id) { root_ = id; }
    NodeId root() const { return root_; }
    bool has(NodeId id) const { return nodes_.count(id) > 0; }
    const GjtNode& node(NodeId id) const { return nodes_.at(id); }
    GjtNode& node_mut(NodeId id) { return nodes_.at(id); }
    size_t size() const { return nodes_.size(); }

    std::vector<NodeId> node_ids() const {
        std::vector<NodeId> out;
        for (const auto& [id, _] : nodes_) out.push_back(id);
        return out;
    }

    std::vector<NodeId> leaves() const {
        std::vector<NodeId> out;
        for (const auto& [id, n] : nodes_)
            if (n.is_leaf) out.push_back(id);
        return out;
    }

    /// Children before parents; siblings in child-list order.
    std::vector<NodeId> postorder() const { return postorder_from(root_); }

    std::vector<NodeId> postorder_from(NodeId start) const {
        std::vector<NodeId> out;
        std::vector<std::pair<NodeId, size_t>> stack{{start, 0}};
        while (!stack.empty()) {
            auto& [id, next] = stack.back();
            const GjtNode& n = nodes_.at(id);
            if (next < n.children.size()) {
                NodeId c = n.children[next++];
                stack.emplace_back(c, 0);
            } else {
                out.push_back(id);
                stack.pop_back();
            }
        }
        return out;
    }

    bool is_ancestor(NodeId a, NodeId d) const {
        for (NodeId x = nodes_.at(d).parent; x >= 0; x = nodes_.at(x).parent)
            if (x == a) return true;
        return false;
    }

    int depth(NodeId id) const {
        int d = 0;
        for (NodeId x = nodes_.at(id).parent; x >= 0; x = nodes_.at(x).parent) ++d;
        return d;
    }

    bool is_guard_child(NodeId parent, NodeId child) const {
        return nodes_.at(parent).label.subset_of(nodes_.at(child).label);
    }

    /// All predicates on edges of the tree (set semantics).
    PredicateSet preds() const {
        PredicateSet out;
        for (const auto& [_, n] : nodes_) out.insert(n.edge_preds.begin(), n.edge_preds.end());
        return out;
    }

    /// preds(n) = union of predicates on edges to n's children.
    PredicateSet preds_below(NodeId id) const {
        PredicateSet out;
        for (NodeId c : nodes_.at(id).children) {
            const auto& ep = nodes_.at(c).edge_preds;
            out.insert(ep.begin(), ep.end());
        }
        return out;
    }

    std::vector<AtomOccurrence> atom_multiset() const {
        std::vector<AtomOccurrence> atoms;
        for (const auto& [_, n] : nodes_)
            if (n.is_leaf) atoms.push_back(n.atom);
        std::sort(atoms.begin(), atoms.end());
        return atoms;
    }

    Hyperedge all_vars() const {
        Hyperedge v;
        for (const auto& [_, n] : nodes_) v = v.union_with(n.label);
        return v;
    }

    /// GJT well-formedness violations; empty means valid.
    std::vector<std::string> validate() const {
        std::vector<std::string> out;
        if (root_ < 0 || !nodes_.count(root_)) {
            out.push_back("no root");
            return out;
        }
        size_t reachable = 0;
        for (NodeId id : postorder()) {
            (void)id;
            ++reachable;
        }
        if (reachable != nodes_.size()) out.push_back("disconnected nodes");
        for (const auto& [id, n] : nodes_) {
            if (n.is_leaf) {
                if (!n.children.empty()) out.push_back("leaf " + n.atom.str() + " has children");
                continue;
            }
            if (n.children.empty()) {
                out.push_back("interior node " + n.label.str() + " has no children");
                continue;
            }
            bool guarded = false;
            for (NodeId c : n.children)
                if (n.label.subset_of(nodes_.at(c).label)) guarded = true;
            if (!guarded) out.push_back("no guard child under " + n.label.str());
        }
        // Connectedness: the nodes holding any given variable form a subtree,
        // i.e. exactly one of them has a parent without the variable.
        Hyperedge av = all_vars();
        for (const auto& v : av.vars()) {
            int topmost = 0, holders = 0;
            for (const auto& [id, n] : nodes_) {
                if (!n.label.contains(v)) continue;
                ++holders;
                if (n.parent < 0 || !nodes_.at(n.parent).label.contains(v)) ++topmost;
            }
            if (holders > 0 && topmost != 1)
                out.push_back("connectedness violated for variable " + v);
        }
        for (const auto& [id, n] : nodes_) {
            if (n.parent < 0) continue;
            Hyperedge scope = n.label.union_with(nodes_.at(n.parent).label);
            for (const auto& p : n.edge_preds)
                if (!p.vars().subset_of(scope))
                    out.push_back("predicate " + p.str() + " out of scope on edge to " +
                                  (n.is_leaf ? n.atom.str() : n.label.str()));
        }
        return out;
    }

    std::string str() const {
        std::ostringstream os;
        print(os, root_, 0);
        return os.str();
    }

  private:
    void print(std::ostringstream& os, NodeId id, int depth) const {
        const GjtNode& n = nodes_.at(id);
        for (int i = 0; i < depth; ++i) os << "  ";
        os << (n.is_leaf ? n.atom.str() : n.label.str());
        if (!n.edge_preds.empty()) os << "  [" << preds_str(n.edge_preds) << "]";
        os << "\n";
        for (NodeId c : n.children) print(os, c, depth + 1);
    }

    std::map<NodeId, GjtNode> nodes_;
    NodeId root_ = -1;
    NodeId next_id_ = 0;
};

using ConnexSet = std::set<NodeId>;

/// A join tree plus a connex subset of its nodes: the query plan.
struct GjtPair {
    Gjt tree;
    ConnexSet connex;
};

inline bool is_connex(const Gjt& t, const ConnexSet& n) {
    if (!n.count(t.root())) return false;
    for (NodeId id : n) {
        if (!t.has(id)) return false;
        if (id != t.root() && !n.count(t.node(id).parent)) return false;
    }
    return true;
}

inline Hyperedge var_of(const Gjt& t, const ConnexSet& n) {
    Hyperedge out;
    for (NodeId id : n) out = out.union_with(t.node(id).label);
    return out;
}

/// Nodes of N that are leaves in the subtree induced by N.
inline std::set<NodeId> frontier(const Gjt& t, const ConnexSet& n) {
    std::set<NodeId> out;
    for (NodeId id : n) {
        bool has_child_in_n = false;
        for (NodeId c : t.node(id).children)
            if (n.count(c)) has_child_in_n = true;
        if (!has_child_in_n) out.insert(id);
    }
    return out;
}

inline bool is_gjt_for(const Gjt& t, const Gcq& q) {
    if (!t.validate().empty()) return false;
    std::vector<AtomOccurrence> qa = q.atoms;
    std::sort(qa.begin(), qa.end());
    return t.atom_multiset() == qa && t.preds() == q.preds;
}

inline bool is_compatible(const GjtPair& pair, const Gcq& q) {
    return is_gjt_for(pair.tree, q) && is_connex(pair.tree, pair.connex) &&
           var_of(pair.tree, pair.connex) == q.out;
}

enum class ViolatorType { None, Type1, Type2 };

/// A violator is a node of N with some but not all children in N; type 1 if
/// an in-N child guards it, type 2 otherwise.
inline ViolatorType violator_type(const GjtPair& pair, NodeId id) {
    const GjtNode& n = pair.tree.node(id);
    if (!pair.connex.count(id) || n.children.empty()) return ViolatorType::None;
    size_t in_n = 0;
    bool guard_in_n = false;
    for (NodeId c : n.children) {
        if (!pair.connex.count(c)) continue;
        ++in_n;
        if (pair.tree.is_guard_child(id, c)) guard_in_n = true;
    }
    if (in_n == 0 || in_n == n.children.size()) return ViolatorType::None;
    return guard_in_n ? ViolatorType::Type1 : ViolatorType::Type2;
}

inline std::vector<NodeId> find_violators(const GjtPair& pair) {
    std::vector<NodeId> out;
    for (NodeId id : pair.tree.node_ids())
        if (violator_type(pair, id) != ViolatorType::None) out.push_back(id);
    return out;
}

/// Removes a type-1 violator: relocates the out-of-N children below a fresh
/// node inserted above a leaf descendant guard of the in-N guard child.
inline GjtPair remove_type1_violator(GjtPair pair, NodeId id) {
    if (violator_type(pair, id) != ViolatorType::Type1)
        throw NotAViolatorError("node is not a type-1 violator");
    Gjt& t = pair.tree;

    // The children to relocate, fixed before the tree changes shape.
    std::vector<NodeId> moved;
    for (NodeId c : t.node(id).children)
        if (!pair.connex.count(c)) moved.push_back(c);

    NodeId g = -1;
    for (NodeId c : t.node(id).children)
        if (pair.connex.count(c) && t.is_guard_child(id, c) && (g < 0 || c < g)) g = c;

    // Leaf descendant guard of g (smallest id at each step).
    NodeId l = g;
    while (!t.node(l).is_leaf) {
        NodeId next = -1;
        for (NodeId c : t.node(l).children)
            if (t.is_guard_child(l, c) && (next < 0 || c < next)) next = c;
        assert(next >= 0);
        l = next;
    }

    // Insert p between l and its parent; the existing edge predicates stay on
    // the upper edge.
    NodeId lp = t.node(l).parent;
    PredicateSet upper = t.node(l).edge_preds;
    t.detach(l);
    NodeId p = t.add_interior(t.node(l).label);
    t.attach(lp, p, std::move(upper));
    t.attach(p, l, {});

    for (NodeId c : moved) {
        PredicateSet ep = t.node(c).edge_preds;
        t.detach(c);
        t.attach(p, c, std::move(ep));
    }

    if (pair.connex.count(l)) {
        pair.connex.erase(l);
        pair.connex.insert(p);
    }
    return pair;
}

/// Removes a type-2 violator: groups the out-of-N children below a fresh
/// child labeled var(n), which joins N.
inline GjtPair remove_type2_violator(GjtPair pair, NodeId id) {
    if (violator_type(pair, id) != ViolatorType::Type2)
        throw NotAViolatorError("node is not a type-2 violator");
    Gjt& t = pair.tree;

    NodeId p = t.add_interior(t.node(id).label);
    std::vector<NodeId> moved;
    for (NodeId c : t.node(id).children)
        if (!pair.connex.count(c)) moved.push_back(c);
    for (NodeId c : moved) {
        PredicateSet ep = t.node(c).edge_preds;
        t.detach(c);
        t.attach(p, c, std::move(ep));
    }
    t.attach(id, p, {});
    pair.connex.insert(p);
    return pair;
}

/// Fixpoint of the two violator removals. Terminates because each removal
/// strictly decreases the violator count.
inline GjtPair to_sibling_closed(GjtPair pair) {
    while (true) {
        std::vector<NodeId> v = find_violators(pair);
        if (v.empty()) return pair;
        NodeId id = *std::min_element(v.begin(), v.end());
        pair = violator_type(pair, id) == ViolatorType::Type1
                   ? remove_type1_violator(std::move(pair), id)
                   : remove_type2_violator(std::move(pair), id);
    }
}

/// Splits k-ary nodes (k > 2) into chains of binary nodes labeled var(n),
/// with the guard child placed deepest. Requires a sibling-closed pair.
inline GjtPair binarize(GjtPair pair) {
    if (!find_violators(pair).empty())
        throw NotSiblingClosedError("binarize requires a sibling-closed pair");
    Gjt& t = pair.tree;
    while (true) {
        NodeId target = -1;
        for (NodeId id : t.node_ids())
            if (t.node(id).children.size() > 2 && (target < 0 || id < target)) target = id;
        if (target < 0) return pair;

        NodeId guard = -1;
        for (NodeId c : t.node(target).children)
            if (t.is_guard_child(target, c) && (guard < 0 || c < guard)) guard = c;
        assert(guard >= 0);

        std::vector<NodeId> order{guard};
        for (NodeId c : t.node(target).children)
            if (c != guard) order.push_back(c);

        bool children_in_n = pair.connex.count(order[0]) > 0;
        std::vector<std::pair<NodeId, PredicateSet>> detached;
        for (NodeId c : order) {
            detached.emplace_back(c, t.node(c).edge_preds);
            t.detach(c);
        }

        size_t k = detached.size();
        NodeId below = detached[0].first;
        PredicateSet below_preds = detached[0].second;
        for (size_t i = 1; i + 1 < k; ++i) {
            NodeId m = t.add_interior(t.node(target).label);
            t.attach(m, below, std::move(below_preds));
            t.attach(m, detached[i].first, std::move(detached[i].second));
            if (children_in_n) pair.connex.insert(m);
            below = m;
            below_preds = {};
        }
        t.attach(target, below, std::move(below_preds));
        t.attach(target, detached[k - 1].first, std::move(detached[k - 1].second));
    }
}

namespace detail {

/// Re-homes every filter-like edge predicate (one whose variables are all in
/// the parent) onto the first ancestor edge whose child brings one of its
/// variables. Requires the root label to be empty.
inline void rehome_predicates(Gjt& t) {
    std::vector<std::pair<NodeId, Predicate>> all;
    for (NodeId id : t.node_ids())
        for (const auto& p : t.node(id).edge_preds) all.emplace_back(id, p);
    for (NodeId id : t.node_ids()) t.node_mut(id).edge_preds.clear();
    for (auto& [child, p] : all) {
        NodeId m = t.node(child).parent;
        Hyperedge fresh = t.node(child).label.minus(t.node(m).label);
        if (!p.vars().intersect(fresh).empty()) {
            t.node_mut(child).edge_preds.insert(p);
            continue;
        }
        // var(p) lies inside the parent; walk up to the first ancestor that
        // no longer covers it.
        NodeId b = m, a = t.node(m).parent;
        while (a >= 0 && p.vars().subset_of(t.node(a).label)) {
            b = a;
            a = t.node(a).parent;
        }
        assert(a >= 0);  // root is labeled {} and predicates are non-nullary
        t.node_mut(b).edge_preds.insert(p);
    }
}

}  // namespace detail

/// Rewrites a pair into canonical form: empty-labeled root, every leaf under
/// an equally-labeled interior node, pairwise-distinct interior labels, and
/// every edge predicate mentioning a variable fresh in the child. Equivalent
/// to the input (same atoms, predicates and var(N)).
inline GjtPair canonicalize(GjtPair pair) {
    Gjt& t = pair.tree;

    // Step 1: fresh empty root, then predicate re-homing.
    NodeId old_root = t.root();
    NodeId r = t.add_interior(Hyperedge{});
    t.attach(r, old_root, {});
    t.set_root(r);
    pair.connex.insert(r);
    detail::rehome_predicates(t);

    // Step 2: interior twin above every leaf.
    for (NodeId l : t.leaves()) {
        NodeId lp = t.node(l).parent;
        PredicateSet upper = t.node(l).edge_preds;
        t.detach(l);
        NodeId twin = t.add_interior(t.node(l).label);
        t.attach(lp, twin, std::move(upper));
        t.attach(twin, l, {});
        if (pair.connex.count(l)) {
            pair.connex.erase(l);
            pair.connex.insert(twin);
        }
    }

    // Step 3: merge interior nodes with duplicate labels until all interior
    // labels are pairwise distinct. A descendant merges into its ancestor;
    // incomparable duplicates merge so the node keeping children of N
    // survives. Edge predicates of the removed node's parent edge are always
    // empty here because re-homing moved every predicate to an edge whose
    // child contributes a fresh variable.
    while (true) {
        std::map<Hyperedge, std::vector<NodeId>> by_label;
        for (NodeId id : t.node_ids())
            if (!t.node(id).is_leaf) by_label[t.node(id).label].push_back(id);
        NodeId survivor = -1, removed = -1;
        for (auto& [label, ids] : by_label) {
            if (ids.size() < 2) continue;
            std::sort(ids.begin(), ids.end());
            for (size_t i = 0; i < ids.size() && removed < 0; ++i) {
                for (size_t j = i + 1; j < ids.size() && removed < 0; ++j) {
                    NodeId u = ids[i], v = ids[j];
                    if (t.is_ancestor(u, v)) {
                        survivor = u;
                        removed = v;
                    } else if (t.is_ancestor(v, u)) {
                        survivor = v;
                        removed = u;
                    } else {
                        auto has_n_child = [&](NodeId x) {
                            for (NodeId c : t.node(x).children)
                                if (pair.connex.count(c)) return true;
                            return false;
                        };
                        bool un = has_n_child(u), vn = has_n_child(v);
                        if (un && !vn && !pair.connex.count(v)) {
                            survivor = u;
                            removed = v;
                        } else if (vn && !un && !pair.connex.count(u)) {
                            survivor = v;
                            removed = u;
                        } else {
                            survivor = u;
                            removed = v;
                        }
                    }
                }
            }
            if (removed >= 0) break;
        }
        if (removed < 0) break;

        assert(t.node(removed).edge_preds.empty());
        std::vector<NodeId> kids = t.node(removed).children;
        t.detach(removed);
        for (NodeId c : kids) {
            PredicateSet ep = t.node(c).edge_preds;
            t.detach(c);
            t.attach(survivor, c, std::move(ep));
        }
        t.erase_detached(removed);
        pair.connex.erase(removed);
    }

    assert(t.validate().empty());
    return pair;
}

/// True iff the pair satisfies the four canonicality conditions and N holds
/// interior nodes only.
inline bool is_canonical(const GjtPair& pair) {
    const Gjt& t = pair.tree;
    if (!t.node(t.root()).label.empty()) return false;
    std::set<Hyperedge> interior_labels;
    for (NodeId id : t.node_ids()) {
        const GjtNode& n = t.node(id);
        if (n.is_leaf) {
            NodeId p = n.parent;
            if (p < 0 || t.node(p).is_leaf || t.node(p).label != n.label) return false;
            continue;
        }
        if (!interior_labels.insert(n.label).second) return false;
        if (n.parent >= 0) {
            Hyperedge fresh = n.label.minus(t.node(n.parent).label);
            for (const auto& p : n.edge_preds)
                if (p.vars().intersect(fresh).empty()) return false;
        }
    }
    for (NodeId id : pair.connex)
        if (t.node(id).is_leaf) return false;
    return true;
}

/// DOT rendering of a pair; members of N are drawn filled.
inline std::string to_dot(const GjtPair& pair) {
    const Gjt& t = pair.tree;
    std::ostringstream os;
    os << "digraph gjt {\n  node [fontname=\"monospace\"];\n";
    for (NodeId id : t.node_ids()) {
        const GjtNode& n = t.node(id);
        os << "  n" << id << " [label=\"" << (n.is_leaf ? n.atom.str() : n.label.str()) << "\""
           << (n.is_leaf ? ", shape=box" : ", shape=ellipse");
        if (pair.connex.count(id)) os << ", style=filled, fillcolor=lightgray";
        os << "];\n";
    }
    for (NodeId id : t.node_ids()) {
        const GjtNode& n = t.node(id);
        if (n.parent < 0) continue;
        os << "  n" << n.parent << " -> n" << id;
        if (!n.edge_preds.empty()) os << " [label=\"" << preds_str(n.edge_preds) << "\"]";
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

/// JSON rendering mirroring the node/edge fields.
inline std::string to_json(const GjtPair& pair) {
    const Gjt& t = pair.tree;
    std::ostringstream os;
    os << "{\"root\": " << t.root() << ", \"nodes\": [";
    bool first = true;
    for (NodeId id : t.node_ids()) {
        const GjtNode& n = t.node(id);
        if (!first) os << ", ";
        first = false;
        os << "{\"id\": " << id << ", \"kind\": \"" << (n.is_leaf ? "leaf" : "interior") << "\", ";
        if (n.is_leaf) {
            os << "\"atom\": \"" << n.atom.str() << "\", ";
        }
        os << "\"vars\": [";
        for (size_t i = 0; i < n.label.vars().size(); ++i)
            os << (i ? ", " : "") << "\"" << n.label.vars()[i] << "\"";
        os << "], \"parent\": " << n.parent << ", \"edge_preds\": [";
        bool fp = true;
        for (const auto& p : n.edge_preds) {
            os << (fp ? "" : ", ") << "\"" << p.str() << "\"";
            fp = false;
        }
        os << "]}";
    }
    os << "], \"connex\": [";
    first = true;
    for (NodeId id : pair.connex) {
        os << (first ? "" : ", ") << id;
        first = false;
    }
    os << "]}";
    return os.str();
}

}  // namespace djoin
