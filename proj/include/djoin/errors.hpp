#pragma once

#include <stdexcept>
#include <string>

namespace djoin {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Two GMRs (or a GMR and a tuple) with incompatible schemas were combined.
struct SchemaMismatchError : Error {
    using Error::Error;
};

/// Ordered comparison between values of different types.
struct ValueTypeError : Error {
    using Error::Error;
};

/// Signed 64-bit multiplicity arithmetic overflowed.
struct MultiplicityOverflowError : Error {
    using Error::Error;
};

/// apply_single was called with a zero delta.
struct ZeroDeltaError : Error {
    using Error::Error;
};

/// A predicate references a variable outside the relevant schema.
struct UnboundPredicateVariableError : Error {
    using Error::Error;
};

struct SyntaxError : Error {
    size_t position;
    SyntaxError(const std::string& msg, size_t pos)
        : Error(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
};

/// Output or predicate variable not bound by any atom.
struct ScopeError : Error {
    using Error::Error;
};

struct MissingRelationError : Error {
    using Error::Error;
};

/// Applying an update would leave a relation with a negative multiplicity.
struct NegativeDatabaseError : Error {
    using Error::Error;
};

/// A database relation holds a non-positive multiplicity.
struct NonPositiveDatabaseError : Error {
    using Error::Error;
};

struct NotAViolatorError : Error {
    using Error::Error;
};

struct NotSiblingClosedError : Error {
    using Error::Error;
};

/// A triplet reduction step whose applicability condition does not hold.
struct NotApplicableError : Error {
    using Error::Error;
};

struct CyclicQueryError : Error {
    using Error::Error;
};

struct NotAcyclicError : Error {
    using Error::Error;
};

/// Delta enumeration attempted after the representation moved on.
struct StaleDeltaError : Error {
    using Error::Error;
};

/// Malformed stream/config input, with source location where known.
struct DataError : Error {
    using Error::Error;
};

}  // namespace djoin
