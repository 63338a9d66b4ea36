#pragma once

#include <algorithm>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

#include "djoin/errors.hpp"
#include "djoin/value.hpp"

namespace djoin {

/// A finite set of variable names held in canonical (lexicographic) order.
class Hyperedge {
  public:
    Hyperedge() = default;
    Hyperedge(std::initializer_list<std::string> vs) : vars_(vs) { normalize(); }
    explicit Hyperedge(std::vector<std::string> vs) : vars_(std::move(vs)) { normalize(); }

    size_t size() const { return vars_.size(); }
    bool empty() const { return vars_.empty(); }
    const std::vector<std::string>& vars() const { return vars_; }

    bool contains(const std::string& v) const {
        return std::binary_search(vars_.begin(), vars_.end(), v);
    }

    /// Position of v in canonical order, or -1.
    int index_of(const std::string& v) const {
        auto it = std::lower_bound(vars_.begin(), vars_.end(), v);
        if (it == vars_.end() || *it != v) return -1;
        return static_cast<int>(it - vars_.begin());
    }

    bool subset_of(const Hyperedge& o) const {
        return std::includes(o.vars_.begin(), o.vars_.end(), vars_.begin(), vars_.end());
    }

    Hyperedge union_with(const Hyperedge& o) const {
        std::vector<std::string> out;
        std::set_union(vars_.begin(), vars_.end(), o.vars_.begin(), o.vars_.end(),
                       std::back_inserter(out));
        return Hyperedge(std::move(out));
    }

    Hyperedge intersect(const Hyperedge& o) const {
        std::vector<std::string> out;
        std::set_intersection(vars_.begin(), vars_.end(), o.vars_.begin(), o.vars_.end(),
                              std::back_inserter(out));
        return Hyperedge(std::move(out));
    }

    Hyperedge minus(const Hyperedge& o) const {
        std::vector<std::string> out;
        std::set_difference(vars_.begin(), vars_.end(), o.vars_.begin(), o.vars_.end(),
                            std::back_inserter(out));
        return Hyperedge(std::move(out));
    }

    bool operator==(const Hyperedge& o) const { return vars_ == o.vars_; }
    bool operator!=(const Hyperedge& o) const { return vars_ != o.vars_; }
    bool operator<(const Hyperedge& o) const { return vars_ < o.vars_; }

    size_t hash() const {
        size_t h = 0xcbf29ce484222325ull;
        for (const auto& v : vars_) h = (h ^ std::hash<std::string>{}(v)) * 0x100000001b3ull;
        return h;
    }

    std::string str() const {
        std::string s = "{";
        for (size_t i = 0; i < vars_.size(); ++i) {
            if (i) s += ",";
            s += vars_[i];
        }
        return s + "}";
    }

    friend std::ostream& operator<<(std::ostream& os, const Hyperedge& e) { return os << e.str(); }

  private:
    void normalize() {
        std::sort(vars_.begin(), vars_.end());
        vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
    }

    std::vector<std::string> vars_;
};

struct HyperedgeHash {
    size_t operator()(const Hyperedge& e) const { return e.hash(); }
};

/// A tuple: values stored in the owning schema's canonical variable order.
class Tuple {
  public:
    Tuple() = default;
    explicit Tuple(std::vector<Value> vals) : vals_(std::move(vals)) {}

    size_t arity() const { return vals_.size(); }
    const Value& operator[](size_t i) const { return vals_[i]; }
    const std::vector<Value>& values() const { return vals_; }

    bool operator==(const Tuple& o) const { return vals_ == o.vals_; }
    bool operator!=(const Tuple& o) const { return vals_ != o.vals_; }

    /// Total order for canonical output: container order per value.
    int container_compare(const Tuple& o) const {
        size_t n = std::min(vals_.size(), o.vals_.size());
        for (size_t i = 0; i < n; ++i) {
            int c = vals_[i].container_compare(o.vals_[i]);
            if (c != 0) return c;
        }
        if (vals_.size() != o.vals_.size()) return vals_.size() < o.vals_.size() ? -1 : 1;
        return 0;
    }

    size_t hash() const {
        size_t h = 0x811c9dc5u;
        for (const auto& v : vals_) h = (h ^ v.hash()) * 0x01000193u + 0x9e3779b9u;
        return h;
    }

    std::string str() const {
        std::string s;
        for (size_t i = 0; i < vals_.size(); ++i) {
            if (i) s += "|";
            s += vals_[i].str();
        }
        return s;
    }

  private:
    std::vector<Value> vals_;
};

struct TupleHash {
    size_t operator()(const Tuple& t) const { return t.hash(); }
};

struct TupleContainerLess {
    bool operator()(const Tuple& a, const Tuple& b) const { return a.container_compare(b) < 0; }
};

/// Positions of `to`'s variables inside `from` (to must be a subset of from).
inline std::vector<int> projection_map(const Hyperedge& from, const Hyperedge& to) {
    std::vector<int> m;
    m.reserve(to.size());
    for (const auto& v : to.vars()) {
        int i = from.index_of(v);
        if (i < 0)
            throw SchemaMismatchError("projection target variable " + v + " not in schema " +
                                      from.str());
        m.push_back(i);
    }
    return m;
}

inline Tuple project_tuple(const Tuple& t, const std::vector<int>& map) {
    std::vector<Value> vals;
    vals.reserve(map.size());
    for (int i : map) vals.push_back(t[static_cast<size_t>(i)]);
    return Tuple(std::move(vals));
}

/// Builds a tuple for `schema` from (var, value) pairs. Every schema variable
/// must be bound exactly once.
inline Tuple tuple_of(const Hyperedge& schema,
                        const std::vector<std::pair<std::string, Value>>& binds) {
    if (binds.size() != schema.size())
        throw SchemaMismatchError("binding count does not match schema " + schema.str());
    std::vector<Value> vals(schema.size());
    std::vector<bool> seen(schema.size(), false);
    for (const auto& [var, val] : binds) {
        int i = schema.index_of(var);
        if (i < 0 || seen[static_cast<size_t>(i)])
            throw SchemaMismatchError("variable " + var + " not bindable in " + schema.str());
        vals[static_cast<size_t>(i)] = val;
        seen[static_cast<size_t>(i)] = true;
    }
    return Tuple(std::move(vals));
}

}  // namespace djoin
