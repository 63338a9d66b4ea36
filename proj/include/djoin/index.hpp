#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "djoin/gmr.hpp"
#include "djoin/predicate.hpp"

namespace djoin {

/// Counts index operations during enumeration and tracks the largest probe
/// gap between consecutive outputs (including start-to-first and
/// last-to-finish).
struct ProbeStats {
    int64_t probes = 0;
    int64_t outputs = 0;
    int64_t max_gap = 0;
    int64_t gap_start = 0;

    void reset() { *this = ProbeStats{}; }
    void on_probe(int64_t n = 1) { probes += n; }
    void on_output() {
        max_gap = std::max(max_gap, probes - gap_start);
        gap_start = probes;
        ++outputs;
    }
    void on_finish() { max_gap = std::max(max_gap, probes - gap_start); }
};

/// Compiled description of an index on the GMR of a node ("owner") probed
/// with tuples of a "guide" schema (the parent for enumeration indices, the
/// sibling for update indices):
///   - tuples are grouped by the shared variables,
///   - each group is sorted by the owner-side attributes of the sortable
///     inequality predicates (ascending for the lesser side of </<=,
///     descending for the greater side),
///   - inequality predicates become per-attribute interval bounds on the
///     sort key; anything else (!=, opaque, owner-only or guide-only
///     comparisons) is evaluated as a filter.
struct IndexSpec {
    enum class Source { Owner, Guide };

    struct SortAttr {
        std::string var;
        int owner_pos;
        bool ascending;
    };

    struct Bound {
        int sort_idx;
        CmpOp op;  // owner_value OP bound_value (Lt/Le/Gt/Ge)
        bool from_guide;
        int guide_pos = -1;
        Value constant;
    };

    struct Filter {
        explicit Filter(Predicate p) : pred(std::move(p)) {}
        Predicate pred;
        // Argument source per predicate variable, in the order expected by
        // Predicate evaluation (lhs, rhs for comparisons; declared order for
        // opaque predicates).
        std::vector<std::pair<Source, int>> args;
        bool guide_only = false;
    };

    Hyperedge owner_schema;
    Hyperedge guide_schema;
    Hyperedge group_vars;
    std::vector<int> owner_group_pos;  // group-var positions in owner schema
    std::vector<int> guide_group_pos;  // group-var positions in guide schema
    std::vector<SortAttr> sort_attrs;
    std::vector<Bound> bounds;
    std::vector<Filter> filters;

    bool scannable_single() const { return sort_attrs.size() <= 1 && filters.empty(); }
};

namespace detail {

inline std::vector<std::pair<IndexSpec::Source, int>> resolve_args(
    const std::vector<std::string>& vars, const Hyperedge& owner, const Hyperedge& guide) {
    std::vector<std::pair<IndexSpec::Source, int>> out;
    for (const auto& v : vars) {
        int op = owner.index_of(v);
        if (op >= 0) {
            out.emplace_back(IndexSpec::Source::Owner, op);
        } else {
            int gp = guide.index_of(v);
            if (gp < 0)
                throw UnboundPredicateVariableError("predicate variable " + v +
                                                    " not covered by index schemas");
            out.emplace_back(IndexSpec::Source::Guide, gp);
        }
    }
    return out;
}

}  // namespace detail

/// Builds the index description for probing `owner` tuples compatible with a
/// `guide` tuple under `preds`.
inline IndexSpec compile_index_spec(const Hyperedge& owner, const Hyperedge& guide,
                                    const PredicateSet& preds) {
    IndexSpec spec;
    spec.owner_schema = owner;
    spec.guide_schema = guide;
    spec.group_vars = owner.intersect(guide);
    spec.owner_group_pos = projection_map(owner, spec.group_vars);
    spec.guide_group_pos = projection_map(guide, spec.group_vars);

    struct PendingBound {
        std::string attr;
        CmpOp op;
        bool from_guide;
        int guide_pos;
        Value constant;
    };
    std::vector<PendingBound> pending;

    auto owner_exclusive = [&](const std::string& v) {
        return owner.contains(v) && !spec.group_vars.contains(v);
    };

    for (const auto& p : preds) {
        bool handled = false;
        if (p.kind() == Predicate::Kind::VarCmpVar && p.op() != CmpOp::Ne) {
            const std::string& l = p.lhs();
            const std::string& r = p.rhs();
            if (owner_exclusive(l) && guide.contains(r)) {
                pending.push_back({l, p.op(), true, guide.index_of(r), Value()});
                handled = true;
            } else if (owner_exclusive(r) && guide.contains(l)) {
                pending.push_back({r, cmp_flip(p.op()), true, guide.index_of(l), Value()});
                handled = true;
            }
        } else if (p.kind() == Predicate::Kind::VarCmpConst && p.op() != CmpOp::Ne) {
            if (owner_exclusive(p.lhs())) {
                pending.push_back({p.lhs(), p.op(), false, -1, p.constant()});
                handled = true;
            }
        }
        if (!handled) {
            IndexSpec::Filter f(p);
            std::vector<std::string> argvars;
            if (p.kind() == Predicate::Kind::Opaque) {
                argvars = p.opaque_impl().vars;
            } else if (p.kind() == Predicate::Kind::VarCmpVar) {
                argvars = {p.lhs(), p.rhs()};
            } else {
                argvars = {p.lhs()};
            }
            f.args = detail::resolve_args(argvars, owner, guide);
            f.guide_only = true;
            for (const auto& [src, _] : f.args)
                if (src == IndexSpec::Source::Owner) f.guide_only = false;
            spec.filters.push_back(std::move(f));
        }
    }

    // Sort attributes in canonical variable order; direction from the first
    // bound that mentions them (lesser side of < ascending).
    std::vector<std::string> attrs;
    for (const auto& b : pending)
        if (std::find(attrs.begin(), attrs.end(), b.attr) == attrs.end()) attrs.push_back(b.attr);
    std::sort(attrs.begin(), attrs.end());
    for (const auto& a : attrs) {
        bool asc = true;
        for (const auto& b : pending)
            if (b.attr == a) {
                asc = (b.op == CmpOp::Lt || b.op == CmpOp::Le);
                break;
            }
        spec.sort_attrs.push_back({a, owner.index_of(a), asc});
    }
    for (const auto& b : pending) {
        int idx = 0;
        while (spec.sort_attrs[static_cast<size_t>(idx)].var != b.attr) ++idx;
        spec.bounds.push_back({idx, b.op, b.from_guide, b.guide_pos, b.constant});
    }
    return spec;
}

namespace detail {

/// Lexicographic comparison of sort keys in "directional" space: per
/// attribute, ascending uses container order and descending reverses it, so
/// that a scan in map order always starts at the compatible end.
struct DirectionalLess {
    std::vector<bool> asc;

    struct Seek {
        const std::vector<Value>* prefix;
        bool after_prefix;  // position after every key extending the prefix
    };
    using is_transparent = void;

    int dc(size_t i, const Value& a, const Value& b) const {
        int c = a.container_compare(b);
        return asc[i] ? c : -c;
    }

    bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
        size_t n = std::min(a.size(), b.size());
        for (size_t i = 0; i < n; ++i) {
            int c = dc(i, a[i], b[i]);
            if (c != 0) return c < 0;
        }
        return a.size() < b.size();
    }

    bool operator()(const std::vector<Value>& a, const Seek& s) const {
        size_t n = std::min(a.size(), s.prefix->size());
        for (size_t i = 0; i < n; ++i) {
            int c = dc(i, a[i], (*s.prefix)[i]);
            if (c != 0) return c < 0;
        }
        // a extends (or equals) the prefix: before the seek point only when
        // the seek point lies after the whole prefix run.
        return s.after_prefix;
    }

    bool operator()(const Seek& s, const std::vector<Value>& a) const {
        size_t n = std::min(a.size(), s.prefix->size());
        for (size_t i = 0; i < n; ++i) {
            int c = dc(i, (*s.prefix)[i], a[i]);
            if (c != 0) return c < 0;
        }
        // a extends the prefix: the before-run seek point precedes it, the
        // after-run seek point does not.
        return !s.after_prefix;
    }
};

inline int64_t log2_ceil(size_t n) {
    int64_t b = 1;
    while ((size_t(1) << b) < n + 1) ++b;
    return b;
}

}  // namespace detail

/// Hash-grouped, per-group-sorted index over a node's GMR. Supports O(1)
/// expected group lookup, ordered scans with directional interval bounds,
/// and incremental maintenance.
class NodeIndex {
  public:
    using SortKey = std::vector<Value>;
    using Bucket = std::unordered_map<Tuple, int64_t, TupleHash>;
    using Group = std::map<SortKey, Bucket, detail::DirectionalLess>;

    NodeIndex() = default;
    explicit NodeIndex(const IndexSpec* spec) : spec_(spec) {
        for (const auto& a : spec->sort_attrs) dirs_.push_back(a.ascending);
    }

    void insert(const Tuple& t, int64_t m) { add(t, m); }

    void add(const Tuple& t, int64_t m) {
        if (m == 0) return;
        Tuple gkey = project_tuple(t, spec_->owner_group_pos);
        SortKey skey = sort_key(t);
        auto tit = totals_.try_emplace(gkey, 0).first;
        tit->second = checked_add(tit->second, m);
        auto git = groups_.find(gkey);
        if (git == groups_.end())
            git = groups_.emplace(std::move(gkey), Group(detail::DirectionalLess{dirs_})).first;
        Group& g = git->second;
        // Append fast path: monotone keys (temporally-ordered streams) hit
        // the end hint and insert in amortized constant time.
        auto bit = g.end();
        if (g.empty() || g.key_comp()(std::prev(g.end())->first, skey)) {
            bit = g.emplace_hint(g.end(), std::move(skey), Bucket{});
        } else {
            bit = g.try_emplace(std::move(skey)).first;
        }
        auto [eit, inserted] = bit->second.try_emplace(t, m);
        if (inserted) {
            ++size_;
        } else {
            eit->second = checked_add(eit->second, m);
            if (eit->second == 0) {
                bit->second.erase(eit);
                --size_;
            }
        }
        if (bit->second.empty()) g.erase(bit);
        if (g.empty()) {
            assert(group_total(git->first) == 0);
            totals_.erase(git->first);
            groups_.erase(git);
        }
    }

    size_t tuple_count() const { return size_; }
    const IndexSpec& spec() const { return *spec_; }

    /// Total multiplicity of a group, maintained incrementally.
    int64_t group_total(const Tuple& key) const {
        auto it = totals_.find(key);
        return it == totals_.end() ? 0 : it->second;
    }

    /// Enumerates owner tuples compatible with `guide` under the compiled
    /// predicates. The callback returns false to stop early. Returns false
    /// on early stop.
    template <typename Fn>
    bool probe(const Tuple& guide, ProbeStats* stats, Fn&& fn) const {
        // Guide-only filters reject the whole probe at once.
        for (const auto& f : spec_->filters)
            if (f.guide_only && !eval_filter(f, nullptr, guide)) return true;

        if (stats) stats->on_probe();
        auto git = groups_.find(project_tuple(guide, spec_->guide_group_pos));
        if (git == groups_.end()) return true;
        const Group& g = git->second;

        size_t k = spec_->sort_attrs.size();
        // Runtime directional interval per sort attribute: start (seek) and
        // end (break) in scan order.
        struct Limit {
            std::optional<Value> start;
            bool start_strict = false;
            std::optional<Value> end;
            bool end_strict = false;
        };
        std::vector<Limit> lim(k);
        for (const auto& b : spec_->bounds) {
            const Value& v = b.from_guide ? guide[static_cast<size_t>(b.guide_pos)] : b.constant;
            bool asc = dirs_[static_cast<size_t>(b.sort_idx)];
            bool is_end = (b.op == CmpOp::Lt || b.op == CmpOp::Le) == asc;
            bool strict = (b.op == CmpOp::Lt || b.op == CmpOp::Gt);
            Limit& L = lim[static_cast<size_t>(b.sort_idx)];
            auto tighter = [&](const std::optional<Value>& cur, bool cur_strict) {
                if (!cur) return true;
                int c = dir_cmp(static_cast<size_t>(b.sort_idx), v, *cur);
                if (is_end) return c < 0 || (c == 0 && strict && !cur_strict);
                return c > 0 || (c == 0 && strict && !cur_strict);
            };
            if (is_end) {
                if (tighter(L.end, L.end_strict)) {
                    L.end = v;
                    L.end_strict = strict;
                }
            } else {
                if (tighter(L.start, L.start_strict)) {
                    L.start = v;
                    L.start_strict = strict;
                }
            }
        }

        auto it = g.begin();
        if (k > 0 && lim[0].start) {
            std::vector<Value> pfx{*lim[0].start};
            it = g.lower_bound(detail::DirectionalLess::Seek{&pfx, lim[0].start_strict});
            if (stats) stats->on_probe(detail::log2_ceil(g.size()));
        }
        while (it != g.end()) {
            if (stats) stats->on_probe();
            const SortKey& key = it->first;
            bool skip = false;
            for (size_t i = 0; i < k; ++i) {
                const Limit& L = lim[i];
                const Value& kv = key[i];
                if (L.end) {
                    int c = dir_cmp(i, kv, *L.end);
                    if (c > 0 || (c == 0 && L.end_strict)) {
                        if (i == 0) return true;  // primary attr exhausted
                        // Jump past the current run of key[0..i).
                        std::vector<Value> pfx(key.begin(), key.begin() + static_cast<long>(i));
                        it = g.lower_bound(detail::DirectionalLess::Seek{&pfx, true});
                        if (stats) stats->on_probe(detail::log2_ceil(g.size()));
                        skip = true;
                        break;
                    }
                }
                if (L.start) {
                    int c = dir_cmp(i, kv, *L.start);
                    if (c < 0 || (c == 0 && L.start_strict)) {
                        // Seek forward to the start of the compatible range
                        // within the current run.
                        std::vector<Value> pfx(key.begin(), key.begin() + static_cast<long>(i));
                        pfx.push_back(*L.start);
                        it = g.lower_bound(
                            detail::DirectionalLess::Seek{&pfx, L.start_strict});
                        if (stats) stats->on_probe(detail::log2_ceil(g.size()));
                        skip = true;
                        break;
                    }
                }
            }
            if (skip) continue;
            for (const auto& [t, m] : it->second) {
                if (stats) stats->on_probe();
                bool ok = true;
                for (const auto& f : spec_->filters)
                    if (!f.guide_only && !eval_filter(f, &t, guide)) {
                        ok = false;
                        break;
                    }
                if (ok && !fn(t, m)) return false;
            }
            ++it;
        }
        return true;
    }

    /// Iterates groups in hash order (used by the merge-join update path).
    const std::unordered_map<Tuple, Group, TupleHash>& groups() const { return groups_; }

    const Group* find_group(const Tuple& key) const {
        auto it = groups_.find(key);
        return it == groups_.end() ? nullptr : &it->second;
    }

    SortKey sort_key(const Tuple& t) const {
        SortKey k;
        k.reserve(spec_->sort_attrs.size());
        for (const auto& a : spec_->sort_attrs) k.push_back(t[static_cast<size_t>(a.owner_pos)]);
        return k;
    }

  private:
    int dir_cmp(size_t attr, const Value& a, const Value& b) const {
        int c = a.container_compare(b);
        return dirs_[attr] ? c : -c;
    }

    static bool eval_filter(const IndexSpec::Filter& f, const Tuple* owner, const Tuple& guide) {
        auto value_at = [&](size_t i) -> const Value& {
            const auto& [src, pos] = f.args[i];
            return src == IndexSpec::Source::Owner ? (*owner)[static_cast<size_t>(pos)]
                                                   : guide[static_cast<size_t>(pos)];
        };
        const Predicate& p = f.pred;
        switch (p.kind()) {
            case Predicate::Kind::VarCmpVar: return cmp_eval(value_at(0), p.op(), value_at(1));
            case Predicate::Kind::VarCmpConst: return cmp_eval(value_at(0), p.op(), p.constant());
            case Predicate::Kind::Opaque: {
                std::vector<Value> args;
                args.reserve(f.args.size());
                for (size_t i = 0; i < f.args.size(); ++i) args.push_back(value_at(i));
                return p.opaque_impl().fn(args);
            }
        }
        return false;
    }

    const IndexSpec* spec_ = nullptr;
    std::vector<bool> dirs_;
    std::unordered_map<Tuple, Group, TupleHash> groups_;
    std::unordered_map<Tuple, int64_t, TupleHash> totals_;
    size_t size_ = 0;
};

}  // namespace djoin
