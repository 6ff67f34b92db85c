#pragma once

// The nonlinear perturbation f(k,y) together with its user-declared Lipschitz
// sequence gamma(k) and bound sequence mu(k). The declarations are
// spot-checked by sampling, never inferred: Lipschitz inference from samples
// is unreliable, so a system whose declared gamma fails the sample check
// simply fails certification.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "linequiv/errors.hpp"
#include "linequiv/expr.hpp"
#include "linequiv/matrix_sequence.hpp"
#include "linequiv/sequences.hpp"

namespace linequiv {

/// Uniform double in [lo, hi) from the top 53 bits; keeps sampling portable
/// and byte-reproducible for a fixed seed.
inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

class PerturbationSpec {
public:
    enum class Family { Zero, Constant, Componentwise, Expression };

    /// One row of the componentwise builtin family:
    ///   f_i(k, y) = bias + amp * decay^k * g(y_src - shift),  g in {sin, cos, tanh, id}
    /// Closed-form Jacobian: d f_i / d y_j = amp * decay^k * g'(y_src - shift) [j == src].
    struct Component {
        enum class Func { None, Sin, Cos, Tanh, Id, One };
        double bias = 0.0;
        double amp = 0.0;
        double decay = 1.0;
        double shift = 0.0;
        int src = 0;
        Func func = Func::None;
    };

    static PerturbationSpec zero(int dim) {
        PerturbationSpec p;
        p.family_ = Family::Zero;
        p.dim_ = dim;
        p.gamma_ = ScalarSequence::constant(0.0);
        p.mu_ = ScalarSequence::constant(0.0);
        return p;
    }

    static PerturbationSpec constant(Vector c) {
        PerturbationSpec p;
        p.family_ = Family::Constant;
        p.dim_ = static_cast<int>(c.size());
        p.gamma_ = ScalarSequence::constant(0.0);
        p.mu_ = ScalarSequence::constant(c.norm());
        p.const_ = std::move(c);
        return p;
    }

    static PerturbationSpec componentwise(std::vector<Component> comps, ScalarSequence gamma,
                                          ScalarSequence mu) {
        PerturbationSpec p;
        p.family_ = Family::Componentwise;
        p.dim_ = static_cast<int>(comps.size());
        p.comps_ = std::move(comps);
        p.gamma_ = std::move(gamma);
        p.mu_ = std::move(mu);
        return p;
    }

    static PerturbationSpec expressions(std::vector<Expr> comps, ScalarSequence gamma,
                                        ScalarSequence mu) {
        PerturbationSpec p;
        p.family_ = Family::Expression;
        p.dim_ = static_cast<int>(comps.size());
        p.exprs_ = std::move(comps);
        p.gamma_ = std::move(gamma);
        p.mu_ = std::move(mu);
        return p;
    }

    Family family() const { return family_; }
    int dim() const { return dim_; }
    bool is_zero() const { return family_ == Family::Zero; }
    bool analytic_jacobian() const { return family_ != Family::Expression; }
    const ScalarSequence& gamma() const { return gamma_; }
    const ScalarSequence& mu() const { return mu_; }

    Vector f(long k, const Vector& y) const {
        switch (family_) {
            case Family::Zero: return Vector::Zero(dim_);
            case Family::Constant: return const_;
            case Family::Componentwise: {
                Vector out(dim_);
                for (int i = 0; i < dim_; ++i) {
                    const Component& c = comps_[static_cast<std::size_t>(i)];
                    out(i) = c.bias + scale(c, k) * g(c, y(c.src) - c.shift);
                }
                return out;
            }
            case Family::Expression: {
                Vector out(dim_);
                std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
                for (int i = 0; i < dim_; ++i)
                    out(i) = evaluate(exprs_[static_cast<std::size_t>(i)], k, ys);
                return out;
            }
        }
        return Vector::Zero(dim_);
    }

    /// d f / d y. Closed form for the builtin families; central differences
    /// with step 1e-6 * max(1, |y_j|) for expression-defined perturbations
    /// (the expression language has no symbolic differentiation by design).
    Matrix jacobian(long k, const Vector& y) const {
        switch (family_) {
            case Family::Zero:
            case Family::Constant:
                return Matrix::Zero(dim_, dim_);
            case Family::Componentwise: {
                Matrix out = Matrix::Zero(dim_, dim_);
                for (int i = 0; i < dim_; ++i) {
                    const Component& c = comps_[static_cast<std::size_t>(i)];
                    out(i, c.src) = scale(c, k) * dg(c, y(c.src) - c.shift);
                }
                return out;
            }
            case Family::Expression: {
                Matrix out(dim_, dim_);
                Vector yp = y, ym = y;
                for (int j = 0; j < dim_; ++j) {
                    const double h = 1e-6 * std::max(1.0, std::fabs(y(j)));
                    yp(j) = y(j) + h;
                    ym(j) = y(j) - h;
                    out.col(j) = (f(k, yp) - f(k, ym)) / (2.0 * h);
                    yp(j) = y(j);
                    ym(j) = y(j);
                }
                return out;
            }
        }
        return Matrix::Zero(dim_, dim_);
    }

    struct P3Report {
        bool holds = true;
        double worst_lip_excess = 0.0;    // max of |f(y)-f(yt)| - gamma|y-yt|, positive part
        double worst_bound_excess = 0.0;  // max of |f(y)| - mu, positive part
        long witness_k = -1;
    };

    /// Sampled check of the declared Lipschitz and bound sequences on random
    /// (k, y, yt) triples inside a box.
    P3Report validate_p3(long horizon, double box, int samples, std::mt19937_64& rng) const {
        P3Report rep;
        Vector y(dim_), yt(dim_);
        for (int s = 0; s < samples; ++s) {
            const long k = static_cast<long>(rng() % static_cast<std::uint64_t>(horizon + 1));
            for (int i = 0; i < dim_; ++i) {
                y(i) = uniform_in(rng, -box, box);
                yt(i) = uniform_in(rng, -box, box);
            }
            const Vector fy = f(k, y);
            const Vector fyt = f(k, yt);
            const double lip_excess =
                (fy - fyt).norm() - gamma_.at(k) * (y - yt).norm();
            const double bound_excess = fy.norm() - mu_.at(k);
            const double slack = 1e-12;
            if (lip_excess > rep.worst_lip_excess) {
                rep.worst_lip_excess = lip_excess;
                if (lip_excess > slack) rep.witness_k = k;
            }
            if (bound_excess > rep.worst_bound_excess) {
                rep.worst_bound_excess = bound_excess;
                if (bound_excess > slack) rep.witness_k = k;
            }
            if (lip_excess > slack || bound_excess > slack) rep.holds = false;
        }
        return rep;
    }

    void append_fingerprint(std::vector<double>& buf) const {
        buf.push_back(static_cast<double>(family_));
        buf.push_back(static_cast<double>(dim_));
        gamma_.append_fingerprint(buf);
        mu_.append_fingerprint(buf);
        for (const Component& c : comps_) {
            buf.push_back(c.bias);
            buf.push_back(c.amp);
            buf.push_back(c.decay);
            buf.push_back(c.shift);
            buf.push_back(static_cast<double>(c.src));
            buf.push_back(static_cast<double>(c.func));
        }
        for (Eigen::Index i = 0; i < const_.size(); ++i) buf.push_back(const_(i));
        if (family_ == Family::Expression) {
            Vector probe = Vector::LinSpaced(dim_, 0.25, 1.0);
            for (long k : {0L, 1L, 3L}) {
                Vector v = f(k, probe);
                for (Eigen::Index i = 0; i < v.size(); ++i) buf.push_back(v(i));
            }
        }
    }

private:
    static double scale(const Component& c, long k) {
        return c.decay == 1.0 ? c.amp : c.amp * std::pow(c.decay, static_cast<double>(k));
    }
    static double g(const Component& c, double x) {
        switch (c.func) {
            case Component::Func::None: return 0.0;
            case Component::Func::Sin:  return std::sin(x);
            case Component::Func::Cos:  return std::cos(x);
            case Component::Func::Tanh: return std::tanh(x);
            case Component::Func::Id:   return x;
            case Component::Func::One:  return 1.0;
        }
        return 0.0;
    }
    static double dg(const Component& c, double x) {
        switch (c.func) {
            case Component::Func::None: return 0.0;
            case Component::Func::Sin:  return std::cos(x);
            case Component::Func::Cos:  return -std::sin(x);
            case Component::Func::Tanh: {
                const double t = std::tanh(x);
                return 1.0 - t * t;
            }
            case Component::Func::Id:   return 1.0;
            case Component::Func::One:  return 0.0;
        }
        return 0.0;
    }

    Family family_ = Family::Zero;
    int dim_ = 0;
    Vector const_;
    std::vector<Component> comps_;
    std::vector<Expr> exprs_;
    ScalarSequence gamma_ = ScalarSequence::constant(0.0);
    ScalarSequence mu_ = ScalarSequence::constant(0.0);
};

}  // namespace linequiv
