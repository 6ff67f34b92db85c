#pragma once

// Typed error conditions shared across the library. Everything derives from
// linequiv::Error so callers can catch the whole family at the CLI boundary.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace linequiv {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A(j) is numerically singular (reciprocal condition estimate below threshold).
class SingularCoefficient : public Error {
public:
    long index;
    explicit SingularCoefficient(long j)
        : Error("coefficient matrix A(" + std::to_string(j) + ") is numerically singular"),
          index(j) {}
};

class SyntaxError : public Error {
public:
    std::size_t offset;
    std::string expected;
    SyntaxError(std::size_t off, std::string exp)
        : Error("syntax error at byte " + std::to_string(off) + ": expected " + exp),
          offset(off), expected(std::move(exp)) {}
};

class UnknownIdentifier : public Error {
public:
    std::string name;
    std::size_t offset;
    UnknownIdentifier(std::string id, std::size_t off)
        : Error("unknown identifier '" + id + "' at byte " + std::to_string(off)),
          name(std::move(id)), offset(off) {}
};

class UnboundVariable : public Error {
public:
    std::string name;
    explicit UnboundVariable(std::string id)
        : Error("variable '" + id + "' is not bound"), name(std::move(id)) {}
};

/// Division by zero, log of a non-positive value, sqrt of a negative value.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

/// No certified tail envelope applies to a series truncation.
class TailNotSummable : public Error {
public:
    explicit TailNotSummable(const std::string& what) : Error(what) {}
};

/// ||A(j)^-1|| * gamma(j) >= 1 somewhere a backward continuation needs it.
class P6Violated : public Error {
public:
    long index;
    explicit P6Violated(long j)
        : Error("(P6) fails at index " + std::to_string(j) +
                ": ||A^-1|| * gamma >= 1, backward step is not a contraction"),
          index(j) {}
};

class NoConvergence : public Error {
public:
    long step;
    NoConvergence(const std::string& what, long at) : Error(what), step(at) {}
};

/// Forward orbit left the diagnostic box (uncertified system blow-up guard).
class Overflow : public Error {
public:
    long step;
    explicit Overflow(long at)
        : Error("forward orbit exceeded 1e12 at step " + std::to_string(at)), step(at) {}
};

class NotContractionCase : public Error {
public:
    NotContractionCase()
        : Error("operation requires the contraction case (Q == 0 projector)") {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

class NoEquilibrium : public Error {
public:
    explicit NoEquilibrium(const std::string& what) : Error(what) {}
};

/// Equilibrium residual varies with the time index: f is genuinely time-dependent.
class NotStationary : public Error {
public:
    explicit NotStationary(const std::string& what) : Error(what) {}
};

}  // namespace linequiv
