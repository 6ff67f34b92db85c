#pragma once

// The coefficient map k -> A(k) of the linear system x_{k+1} = A(k) x_k,
// its transition matrices
//
//           | A(k-1) A(k-2) ... A(n)              k > n
//  Phi(k,n) = | I                                   k = n
//           | A(k)^-1 A(k+1)^-1 ... A(n-1)^-1     k < n
//
// and the Green kernel G(k,n) = Phi(k,n) P(n) for k >= n >= 0,
// -Phi(k,n) Q(n) for 0 <= k < n, built from an invariant projector pair.
//
// Matrices are dense double precision; the expected scale is d <= 16.
// Everything is immutable after construction; the transition cache is built
// eagerly for a declared horizon and is safe to share across threads.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "linequiv/errors.hpp"
#include "linequiv/expr.hpp"

namespace linequiv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Operator 2-norm (largest singular value); matches the Euclidean vector norm.
inline double operator_norm(const Matrix& m) {
    if (m.rows() == 1 && m.cols() == 1) return std::fabs(m(0, 0));
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

class MatrixSequence {
public:
    enum class Kind { Constant, DiagonalGeometric, Tabulated, Expression };

    // Reciprocal condition estimate below this raises SingularCoefficient:
    // (P1) presumes invertibility, so near-singular input is a user error.
    static constexpr double kRcondThreshold = 1e-12;

    static MatrixSequence constant(Matrix a) {
        MatrixSequence s;
        s.kind_ = Kind::Constant;
        s.dim_ = static_cast<int>(a.rows());
        s.a0_ = std::move(a);
        return s;
    }

    /// A(k) = diag(rates), constant in k.
    static MatrixSequence diagonal(Vector rates) {
        MatrixSequence s;
        s.kind_ = Kind::DiagonalGeometric;
        s.dim_ = static_cast<int>(rates.size());
        s.diag_ = std::move(rates);
        return s;
    }

    static MatrixSequence tabulated(std::vector<Matrix> entries) {
        MatrixSequence s;
        s.kind_ = Kind::Tabulated;
        s.dim_ = entries.empty() ? 0 : static_cast<int>(entries[0].rows());
        s.table_ = std::move(entries);
        return s;
    }

    /// One parsed expression per entry, row-major, variable k.
    static MatrixSequence expression(int dim, std::vector<Expr> entries) {
        MatrixSequence s;
        s.kind_ = Kind::Expression;
        s.dim_ = dim;
        s.entries_ = std::move(entries);
        if (s.entries_.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim))
            throw Error("expression matrix family needs d*d entries");
        return s;
    }

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    long tabulated_horizon() const { return static_cast<long>(table_.size()); }

    Matrix at(long k) const {
        switch (kind_) {
            case Kind::Constant: return a0_;
            case Kind::DiagonalGeometric: return Matrix(diag_.asDiagonal());
            case Kind::Tabulated:
                if (k < 0 || static_cast<std::size_t>(k) >= table_.size())
                    throw Error("tabulated coefficient family accessed at k=" + std::to_string(k) +
                                " beyond its horizon");
                return table_[static_cast<std::size_t>(k)];
            case Kind::Expression: {
                Matrix m(dim_, dim_);
                for (int i = 0; i < dim_; ++i)
                    for (int j = 0; j < dim_; ++j)
                        m(i, j) = evaluate(entries_[static_cast<std::size_t>(i * dim_ + j)], k, {});
                return m;
            }
        }
        return Matrix();
    }

    /// A(k)^-1 by LU with partial pivoting; raises SingularCoefficient when the
    /// reciprocal condition estimate falls below the threshold.
    Matrix inverse_at(long k) const {
        Matrix a = at(k);
        Eigen::PartialPivLU<Matrix> lu(a);
        // rcond misreports exactly singular input (zero pivot), so check the
        // pivot product as well
        if (!(lu.rcond() > kRcondThreshold) || lu.determinant() == 0.0)
            throw SingularCoefficient(k);
        return lu.inverse();
    }

    void append_fingerprint(std::vector<double>& buf) const {
        buf.push_back(static_cast<double>(kind_));
        buf.push_back(static_cast<double>(dim_));
        auto push_m = [&buf](const Matrix& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i) buf.push_back(m.data()[i]);
        };
        switch (kind_) {
            case Kind::Constant: push_m(a0_); break;
            case Kind::DiagonalGeometric:
                for (Eigen::Index i = 0; i < diag_.size(); ++i) buf.push_back(diag_(i));
                break;
            case Kind::Tabulated:
                for (const Matrix& m : table_) push_m(m);
                break;
            case Kind::Expression:
                for (long k : {0L, 1L, 3L, 7L}) push_m(at(k));
                break;
        }
    }

private:
    Kind kind_ = Kind::Constant;
    int dim_ = 0;
    Matrix a0_;
    Vector diag_;
    std::vector<Matrix> table_;
    std::vector<Expr> entries_;
};

/// Direct factor-by-factor transition matrix, no caching.
inline Matrix transition(const MatrixSequence& seq, long k, long n) {
    const int d = seq.dim();
    Matrix m = Matrix::Identity(d, d);
    if (k > n) {
        for (long j = n; j < k; ++j) m = seq.at(j) * m;   // leftmost factor is A(k-1)
    } else if (k < n) {
        for (long j = n - 1; j >= k; --j) m = seq.inverse_at(j) * m;  // leftmost is A(k)^-1
    }
    return m;
}

/// Eagerly built product cache over a declared horizon. Memoizes Phi(k,0) and
/// Phi(0,k); queries derive Phi(k,n) = Phi(k,0) Phi(0,n) when the build-time
/// cocycle check passed at 1e-8, and fall back to direct multiplication
/// otherwise. All state is immutable after construction.
class TransitionCache {
public:
    static constexpr double kCocycleTolerance = 1e-8;

    TransitionCache(MatrixSequence seq, long horizon)
        : seq_(std::move(seq)), horizon_(horizon) {
        const int d = seq_.dim();
        a_.reserve(static_cast<std::size_t>(horizon) + 1);
        ainv_.reserve(static_cast<std::size_t>(horizon) + 1);
        a_norm_.reserve(static_cast<std::size_t>(horizon) + 1);
        ainv_norm_.reserve(static_cast<std::size_t>(horizon) + 1);
        for (long k = 0; k <= horizon; ++k) {
            a_.push_back(seq_.at(k));
            ainv_.push_back(seq_.inverse_at(k));
            a_norm_.push_back(operator_norm(a_.back()));
            ainv_norm_.push_back(operator_norm(ainv_.back()));
        }
        phi_k0_.resize(static_cast<std::size_t>(horizon) + 2);
        phi_0k_.resize(static_cast<std::size_t>(horizon) + 2);
        phi_k0_[0] = Matrix::Identity(d, d);
        phi_0k_[0] = Matrix::Identity(d, d);
        double defect = 0.0;
        for (long k = 0; k <= horizon; ++k) {
            phi_k0_[static_cast<std::size_t>(k) + 1] = a_[static_cast<std::size_t>(k)] * phi_k0_[static_cast<std::size_t>(k)];
            phi_0k_[static_cast<std::size_t>(k) + 1] = phi_0k_[static_cast<std::size_t>(k)] * ainv_[static_cast<std::size_t>(k)];
            const Matrix round_trip =
                phi_k0_[static_cast<std::size_t>(k) + 1] * phi_0k_[static_cast<std::size_t>(k) + 1];
            const double err = (round_trip - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
            defect = std::max(defect, err);
        }
        cocycle_defect_ = defect;
        fast_path_ = std::isfinite(defect) && defect <= kCocycleTolerance;
    }

    const MatrixSequence& sequence() const { return seq_; }
    int dim() const { return seq_.dim(); }
    long horizon() const { return horizon_; }
    bool fast_path() const { return fast_path_; }
    double cocycle_defect() const { return cocycle_defect_; }

    const Matrix& a(long k) const { return a_[checked(k)]; }
    const Matrix& a_inverse(long k) const { return ainv_[checked(k)]; }
    double a_norm(long k) const { return a_norm_[checked(k)]; }
    double a_inverse_norm(long k) const { return ainv_norm_[checked(k)]; }

    Matrix phi(long k, long n) const {
        const int d = seq_.dim();
        if (k == n) return Matrix::Identity(d, d);
        range_check(k);
        range_check(n);
        if (fast_path_)
            return phi_k0_[static_cast<std::size_t>(k)] * phi_0k_[static_cast<std::size_t>(n)];
        Matrix m = Matrix::Identity(d, d);
        if (k > n)
            for (long j = n; j < k; ++j) m = a_[static_cast<std::size_t>(j)] * m;
        else
            for (long j = n - 1; j >= k; --j) m = ainv_[static_cast<std::size_t>(j)] * m;
        return m;
    }

private:
    std::size_t checked(long k) const {
        if (k < 0 || k > horizon_)
            throw Error("transition cache accessed at k=" + std::to_string(k) +
                        " outside horizon " + std::to_string(horizon_));
        return static_cast<std::size_t>(k);
    }
    void range_check(long k) const {
        if (k < 0 || k > horizon_ + 1)
            throw Error("transition requested at index " + std::to_string(k) +
                        " outside cache horizon " + std::to_string(horizon_));
    }

    MatrixSequence seq_;
    long horizon_;
    std::vector<Matrix> a_, ainv_;
    std::vector<double> a_norm_, ainv_norm_;
    std::vector<Matrix> phi_k0_, phi_0k_;  // Phi(k,0) and Phi(0,k), k = 0..horizon+1
    bool fast_path_ = false;
    double cocycle_defect_ = 0.0;
};

/// Invariant projector pair P(n) + Q(n) = I splitting stable/unstable directions.
class ProjectorPair {
public:
    static ProjectorPair identity(int dim) {
        ProjectorPair p;
        p.dim_ = dim;
        p.constant_p_ = Matrix::Identity(dim, dim);
        p.is_constant_ = true;
        return p;
    }

    static ProjectorPair constant(Matrix P) {
        ProjectorPair p;
        p.dim_ = static_cast<int>(P.rows());
        p.constant_p_ = std::move(P);
        p.is_constant_ = true;
        return p;
    }

    static ProjectorPair diagonal(const Vector& stable_flags) {
        return constant(Matrix(stable_flags.asDiagonal()));
    }

    static ProjectorPair from_function(int dim, std::function<Matrix(long)> p_of_n) {
        ProjectorPair p;
        p.dim_ = dim;
        p.fn_ = std::move(p_of_n);
        p.is_constant_ = false;
        return p;
    }

    int dim() const { return dim_; }

    Matrix p(long n) const { return is_constant_ ? constant_p_ : fn_(n); }
    Matrix q(long n) const { return Matrix::Identity(dim_, dim_) - p(n); }

    double idempotency_defect(long horizon) const {
        double worst = 0.0;
        const long upto = is_constant_ ? 0 : horizon;
        for (long n = 0; n <= upto; ++n) {
            Matrix P = p(n);
            worst = std::max(worst, (P * P - P).cwiseAbs().maxCoeff());
            Matrix Q = q(n);
            worst = std::max(worst, (Q * Q - Q).cwiseAbs().maxCoeff());
        }
        return worst;
    }

    /// max over sampled (k,n) of ||P(k)Phi(k,n) - Phi(k,n)P(n)|| / (1 + ||Phi(k,n)||).
    double invariance_defect(const TransitionCache& cache, long horizon) const {
        double worst = 0.0;
        const long step = std::max<long>(1, horizon / 16);
        for (long k = 0; k <= horizon; k += step) {
            for (long n = 0; n <= horizon; n += step) {
                Matrix phi = cache.phi(k, n);
                Matrix lhs = p(k) * phi;
                Matrix rhs = phi * p(n);
                worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff() /
                                            (1.0 + phi.cwiseAbs().maxCoeff()));
            }
        }
        return worst;
    }

    double max_q_norm(long horizon) const {
        double worst = 0.0;
        const long upto = is_constant_ ? 0 : horizon;
        for (long n = 0; n <= upto; ++n) worst = std::max(worst, operator_norm(q(n)));
        return worst;
    }

    /// Q identically zero: the dichotomy degenerates to a contraction.
    bool is_contraction(long horizon) const { return max_q_norm(horizon) <= 1e-14; }

    void append_fingerprint(std::vector<double>& buf) const {
        for (long n : {0L, 1L, 5L}) {
            Matrix P = p(n);
            for (Eigen::Index i = 0; i < P.size(); ++i) buf.push_back(P.data()[i]);
            if (is_constant_) break;
        }
    }

private:
    int dim_ = 0;
    bool is_constant_ = true;
    Matrix constant_p_;
    std::function<Matrix(long)> fn_;
};

/// Green kernel of the dichotomy: Phi(k,n)P(n) on/below the diagonal
/// (k >= n >= 0), -Phi(k,n)Q(n) above it (0 <= k < n).
inline Matrix green_kernel(const TransitionCache& trans, const ProjectorPair& proj,
                           long k, long n) {
    if (k >= n) return trans.phi(k, n) * proj.p(n);
    return -(trans.phi(k, n) * proj.q(n));
}

/// FNV-1a over the double bit patterns of a parameter dump; ties a certificate
/// to the exact system it was issued for.
inline std::uint64_t fingerprint_bits(const std::vector<double>& values) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffull;
            h *= 1099511628211ull;
        }
    };
    for (double d : values) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof d);
        std::memcpy(&bits, &d, sizeof bits);
        mix(bits);
    }
    return h;
}

}  // namespace linequiv
