#pragma once

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "djoin/schema.hpp"

namespace djoin {

enum class CmpOp { Lt, Le, Gt, Ge, Ne };

inline const char* cmp_op_str(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        case CmpOp::Ne: return "!=";
    }
    return "?";
}

inline bool cmp_eval(const Value& a, CmpOp op, const Value& b) {
    switch (op) {
        case CmpOp::Lt: return a.compare(b) < 0;
        case CmpOp::Le: return a.compare(b) <= 0;
        case CmpOp::Gt: return a.compare(b) > 0;
        case CmpOp::Ge: return a.compare(b) >= 0;
        case CmpOp::Ne: return a != b;
    }
    return false;
}

/// Mirror of an inequality: b `flip(op)` a  iff  a `op` b.
inline CmpOp cmp_flip(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return CmpOp::Gt;
        case CmpOp::Le: return CmpOp::Ge;
        case CmpOp::Gt: return CmpOp::Lt;
        case CmpOp::Ge: return CmpOp::Le;
        case CmpOp::Ne: return CmpOp::Ne;
    }
    return op;
}

/// A non-nullary theta-predicate. Three shapes: variable-vs-variable
/// comparison, variable-vs-constant comparison, and an opaque decidable
/// boolean function over named variables. Identity is structural for the
/// comparison shapes and by name for opaque predicates.
class Predicate {
  public:
    enum class Kind { VarCmpVar, VarCmpConst, Opaque };

    struct OpaqueImpl {
        std::string name;
        std::vector<std::string> vars;  // evaluation argument order
        std::function<bool(const std::vector<Value>&)> fn;
    };

    static Predicate var_cmp_var(std::string lhs, CmpOp op, std::string rhs) {
        Predicate p;
        p.kind_ = Kind::VarCmpVar;
        p.lhs_ = std::move(lhs);
        p.op_ = op;
        p.rhs_ = std::move(rhs);
        p.vars_ = Hyperedge{p.lhs_, p.rhs_};
        return p;
    }

    static Predicate var_cmp_const(std::string var, CmpOp op, Value c) {
        Predicate p;
        p.kind_ = Kind::VarCmpConst;
        p.lhs_ = std::move(var);
        p.op_ = op;
        p.const_ = std::move(c);
        p.vars_ = Hyperedge{p.lhs_};
        return p;
    }

    static Predicate opaque(std::string name, std::vector<std::string> vars,
                            std::function<bool(const std::vector<Value>&)> fn) {
        Predicate p;
        p.kind_ = Kind::Opaque;
        auto impl = std::make_shared<OpaqueImpl>();
        impl->name = std::move(name);
        impl->vars = std::move(vars);
        impl->fn = std::move(fn);
        p.vars_ = Hyperedge(impl->vars);
        if (p.vars_.empty()) throw Error("nullary predicates are not allowed");
        p.opaque_ = std::move(impl);
        return p;
    }

    Kind kind() const { return kind_; }
    const Hyperedge& vars() const { return vars_; }
    CmpOp op() const { return op_; }
    const std::string& lhs() const { return lhs_; }
    const std::string& rhs() const { return rhs_; }
    const Value& constant() const { return const_; }
    const OpaqueImpl& opaque_impl() const { return *opaque_; }

    /// Evaluates against a tuple with the given schema. All predicate
    /// variables must be present in the schema.
    bool eval(const Hyperedge& schema, const Tuple& t) const {
        auto value_of = [&](const std::string& v) -> const Value& {
            int i = schema.index_of(v);
            if (i < 0)
                throw UnboundPredicateVariableError("predicate variable " + v +
                                                    " unbound in schema " + schema.str());
            return t[static_cast<size_t>(i)];
        };
        switch (kind_) {
            case Kind::VarCmpVar: return cmp_eval(value_of(lhs_), op_, value_of(rhs_));
            case Kind::VarCmpConst: return cmp_eval(value_of(lhs_), op_, const_);
            case Kind::Opaque: {
                std::vector<Value> args;
                args.reserve(opaque_->vars.size());
                for (const auto& v : opaque_->vars) args.push_back(value_of(v));
                return opaque_->fn(args);
            }
        }
        return false;
    }

    std::string str() const {
        switch (kind_) {
            case Kind::VarCmpVar: return lhs_ + cmp_op_str(op_) + rhs_;
            case Kind::VarCmpConst: return lhs_ + cmp_op_str(op_) + const_.str();
            case Kind::Opaque: {
                std::string s = opaque_->name + "(";
                for (size_t i = 0; i < opaque_->vars.size(); ++i) {
                    if (i) s += ",";
                    s += opaque_->vars[i];
                }
                return s + ")";
            }
        }
        return "?";
    }

    bool operator==(const Predicate& o) const { return key() == o.key(); }
    bool operator!=(const Predicate& o) const { return key() != o.key(); }
    bool operator<(const Predicate& o) const { return key() < o.key(); }

  private:
    Predicate() = default;

    // (kind, text fields) — by-name identity for opaque predicates.
    std::tuple<int, std::string, int, std::string> key() const {
        switch (kind_) {
            case Kind::VarCmpVar: return {0, lhs_, static_cast<int>(op_), rhs_};
            case Kind::VarCmpConst: return {1, lhs_, static_cast<int>(op_), const_.str()};
            case Kind::Opaque: return {2, opaque_->name, 0, ""};
        }
        return {3, "", 0, ""};
    }

    Kind kind_ = Kind::VarCmpVar;
    std::string lhs_, rhs_;
    CmpOp op_ = CmpOp::Lt;
    Value const_;
    Hyperedge vars_;
    std::shared_ptr<const OpaqueImpl> opaque_;
};

using PredicateSet = std::set<Predicate>;

inline Hyperedge vars_of(const PredicateSet& preds) {
    Hyperedge out;
    for (const auto& p : preds) out = out.union_with(p.vars());
    return out;
}

inline std::string preds_str(const PredicateSet& preds) {
    std::string s;
    for (const auto& p : preds) {
        if (!s.empty()) s += " AND ";
        s += p.str();
    }
    return s;
}

}  // namespace djoin
