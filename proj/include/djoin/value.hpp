#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <variant>

#include "djoin/errors.hpp"

namespace djoin {

/// A database value: a signed 64-bit integer or a UTF-8 string.
///
/// Values of the same type are totally ordered. Ordered comparison across
/// types (via compare/less) is a ValueTypeError; equality across types is
/// simply false. Containers that need a total order over mixed values use
/// container_compare, which orders by type tag first.
class Value {
  public:
    Value() : v_(int64_t{0}) {}
    Value(int64_t i) : v_(i) {}
    Value(int i) : v_(int64_t{i}) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(const char* s) : v_(std::string(s)) {}

    bool is_int() const { return std::holds_alternative<int64_t>(v_); }
    bool is_string() const { return !is_int(); }
    int64_t as_int() const { return std::get<int64_t>(v_); }
    const std::string& as_string() const { return std::get<std::string>(v_); }

    bool operator==(const Value& o) const { return v_ == o.v_; }
    bool operator!=(const Value& o) const { return v_ != o.v_; }

    /// Three-way comparison within a type; mixed types are a hard error.
    int compare(const Value& o) const {
        if (v_.index() != o.v_.index())
            throw ValueTypeError("cannot order-compare integer with string: " + str() + " vs " +
                                 o.str());
        if (is_int()) {
            int64_t a = as_int(), b = o.as_int();
            return a < b ? -1 : (a == b ? 0 : 1);
        }
        int c = as_string().compare(o.as_string());
        return c < 0 ? -1 : (c == 0 ? 0 : 1);
    }

    bool less(const Value& o) const { return compare(o) < 0; }

    /// Total order usable by ordered containers: type tag, then value.
    int container_compare(const Value& o) const {
        if (v_.index() != o.v_.index()) return v_.index() < o.v_.index() ? -1 : 1;
        return compare(o);
    }

    size_t hash() const {
        if (is_int()) return std::hash<int64_t>{}(as_int());
        return std::hash<std::string>{}(as_string()) ^ 0x9e3779b97f4a7c15ull;
    }

    std::string str() const {
        if (is_int()) return std::to_string(as_int());
        return as_string();
    }

    friend std::ostream& operator<<(std::ostream& os, const Value& v) { return os << v.str(); }

  private:
    std::variant<int64_t, std::string> v_;
};

struct ValueContainerLess {
    bool operator()(const Value& a, const Value& b) const { return a.container_compare(b) < 0; }
};

}  // namespace djoin
