#pragma once

// Scalar sequences k -> value used for the Lipschitz weight gamma, the bound
// weight mu, the dichotomy constant rho and the generalized-exponential
// exponents u. Families are declared, never inferred, so that tail envelopes
// stay auditable.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "linequiv/errors.hpp"
#include "linequiv/expr.hpp"

namespace linequiv {

class ScalarSequence {
public:
    enum class Kind { Constant, Geometric, Tabulated, Expression };

    static ScalarSequence constant(double c) {
        ScalarSequence s;
        s.kind_ = Kind::Constant;
        s.coeff_ = c;
        return s;
    }

    /// c * ratio^k
    static ScalarSequence geometric(double c, double ratio) {
        ScalarSequence s;
        s.kind_ = Kind::Geometric;
        s.coeff_ = c;
        s.ratio_ = ratio;
        return s;
    }

    /// Values for 0 <= k < table.size(); zero beyond `cutoff` when declared.
    static ScalarSequence tabulated(std::vector<double> table, long cutoff = -1) {
        ScalarSequence s;
        s.kind_ = Kind::Tabulated;
        s.table_ = std::move(table);
        s.cutoff_ = cutoff;
        return s;
    }

    static ScalarSequence expression(Expr e) {
        ScalarSequence s;
        s.kind_ = Kind::Expression;
        s.expr_ = std::move(e);
        return s;
    }

    Kind kind() const { return kind_; }
    bool has_cutoff() const { return kind_ == Kind::Tabulated && cutoff_ >= 0; }
    long cutoff() const { return cutoff_; }

    double at(long k) const {
        switch (kind_) {
            case Kind::Constant: return coeff_;
            case Kind::Geometric: return coeff_ * std::pow(ratio_, static_cast<double>(k));
            case Kind::Tabulated:
                if (k >= 0 && static_cast<std::size_t>(k) < table_.size()) return table_[static_cast<std::size_t>(k)];
                if (has_cutoff() && k >= cutoff_) return 0.0;
                throw Error("tabulated sequence accessed at k=" + std::to_string(k) +
                            " beyond its table without a declared cutoff");
            case Kind::Expression: return evaluate(expr_, k, {});
        }
        return 0.0;
    }

    /// Upper bound on sup_{j > K} value(j). Throws TailNotSummable when no
    /// envelope is declared for the family.
    double sup_tail(long K) const {
        switch (kind_) {
            case Kind::Constant: return std::fabs(coeff_);
            case Kind::Geometric:
                if (std::fabs(ratio_) > 1.0)
                    throw TailNotSummable("geometric weight with |ratio| > 1 has no decreasing tail");
                return std::fabs(coeff_) * std::pow(std::fabs(ratio_), static_cast<double>(K + 1));
            case Kind::Tabulated: {
                if (has_cutoff() && K + 1 >= cutoff_) return 0.0;
                if (!has_cutoff())
                    throw TailNotSummable("tabulated weight has no declared cutoff");
                double m = 0.0;
                for (long j = K + 1; j < cutoff_; ++j) m = std::max(m, std::fabs(at(j)));
                return m;
            }
            case Kind::Expression:
                throw TailNotSummable("expression-defined weight has no declared tail envelope");
        }
        return 0.0;
    }

    double max_over(long lo, long hi) const {
        double m = 0.0;
        for (long k = lo; k <= hi; ++k) m = std::max(m, std::fabs(at(k)));
        return m;
    }

    void append_fingerprint(std::vector<double>& buf) const {
        buf.push_back(static_cast<double>(kind_));
        buf.push_back(coeff_);
        buf.push_back(ratio_);
        buf.push_back(static_cast<double>(cutoff_));
        for (double v : table_) buf.push_back(v);
        if (kind_ == Kind::Expression) {
            // hash via a few probe evaluations; cheap and stable
            for (long k : {0L, 1L, 2L, 5L, 11L}) buf.push_back(at(k));
        }
    }

private:
    Kind kind_ = Kind::Constant;
    double coeff_ = 0.0;
    double ratio_ = 1.0;
    long cutoff_ = -1;
    std::vector<double> table_;
    Expr expr_;
};

}  // namespace linequiv
