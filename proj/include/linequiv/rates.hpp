#pragma once

// Dichotomy rate pair (rho, h): a bounded constant sequence rho and a
// decreasing sequence h with h(0) = 1 and h -> 0. Supported h families:
//
//   geometric        h(k) = theta^k,  theta in (0,1)   (uniform exponential)
//   generalized_exp  h(k) = exp(-sum_{j<k} u_j), u_j > 0 (sum starts empty so
//                    h(0) = 1; u may decline to 0, in which case no geometric
//                    tail envelope exists unless a positive minorant u_min is
//                    declared)
//   tabulated        declared decreasing table
//
// The tail envelope here certifies sum_{j>K} rho(j+1) h(j+1)/h(ell) * w(j)
// for a weight sequence w; it is what makes truncating the paper's infinite
// Green-function series auditable.

#include <cmath>
#include <string>
#include <vector>

#include "linequiv/errors.hpp"
#include "linequiv/sequences.hpp"

namespace linequiv {

class RatePair {
public:
    enum class HFamily { Geometric, GeneralizedExp, Tabulated };

    static RatePair geometric(ScalarSequence rho, double theta, long max_index) {
        RatePair r;
        r.rho_ = std::move(rho);
        r.family_ = HFamily::Geometric;
        r.theta_ = theta;
        r.max_index_ = max_index;
        r.validate();
        return r;
    }

    static RatePair generalized_exp(ScalarSequence rho, ScalarSequence u, double u_min,
                                    long max_index) {
        RatePair r;
        r.rho_ = std::move(rho);
        r.family_ = HFamily::GeneralizedExp;
        r.u_ = std::move(u);
        r.u_min_ = u_min;
        r.max_index_ = max_index;
        r.h_cache_.resize(static_cast<std::size_t>(max_index) + 2);
        double acc = 0.0;
        r.h_cache_[0] = 1.0;
        for (long k = 1; k <= max_index + 1; ++k) {
            double uj = r.u_.at(k - 1);
            if (!(uj > 0.0)) throw Error("generalized-exp rate: u(" + std::to_string(k - 1) + ") must be positive");
            acc += uj;
            r.h_cache_[static_cast<std::size_t>(k)] = std::exp(-acc);
        }
        r.validate();
        return r;
    }

    static RatePair tabulated(ScalarSequence rho, std::vector<double> h_values) {
        RatePair r;
        r.rho_ = std::move(rho);
        r.family_ = HFamily::Tabulated;
        r.h_cache_ = std::move(h_values);
        r.max_index_ = static_cast<long>(r.h_cache_.size()) - 1;
        r.validate();
        return r;
    }

    HFamily family() const { return family_; }
    double theta() const { return theta_; }
    double u_min() const { return u_min_; }
    long max_index() const { return max_index_; }

    double rho(long n) const { return rho_.at(n); }

    double rho_sup(long horizon) const { return rho_.max_over(0, horizon); }

    double h(long k) const {
        switch (family_) {
            case HFamily::Geometric:
                return std::pow(theta_, static_cast<double>(k));
            case HFamily::GeneralizedExp:
            case HFamily::Tabulated:
                if (k < 0 || static_cast<std::size_t>(k) >= h_cache_.size())
                    throw Error("rate h accessed at k=" + std::to_string(k) + " beyond its declared range");
                return h_cache_[static_cast<std::size_t>(k)];
        }
        return 0.0;
    }

    /// h(k)/h(n), computed without spurious under/overflow for the geometric family.
    double h_ratio(long k, long n) const {
        if (family_ == HFamily::Geometric)
            return std::pow(theta_, static_cast<double>(k - n));
        return h(k) / h(n);
    }

    /// Certified upper bound on sum_{j > K} rho(j+1) * h(j+1)/h(ell) * w(j).
    /// Returns 0 when the weight is cut off at or before K.
    double tail_envelope(long K, long ell, const ScalarSequence& w) const {
        if (w.has_cutoff() && w.cutoff() <= K + 1) return 0.0;
        const double w_tail = w.sup_tail(K);  // throws TailNotSummable when undeclarable
        if (w_tail == 0.0) return 0.0;
        double rho_bound = 0.0;
        switch (rho_.kind()) {
            case ScalarSequence::Kind::Constant:
            case ScalarSequence::Kind::Geometric:
                rho_bound = std::max(rho_.at(0), rho_.sup_tail(-1));
                break;
            default:
                throw TailNotSummable("rho must be constant or geometric to bound a series tail");
        }
        switch (family_) {
            case HFamily::Geometric: {
                // sum_{j>K} theta^{j+1-ell} = theta^{K+2-ell} / (1-theta)
                return rho_bound * w_tail *
                       std::pow(theta_, static_cast<double>(K + 2 - ell)) / (1.0 - theta_);
            }
            case HFamily::GeneralizedExp: {
                if (!(u_min_ > 0.0))
                    throw TailNotSummable(
                        "generalized-exp rate has no positive minorant u_min; declare one or cut the weight off");
                const double r = std::exp(-u_min_);
                return rho_bound * w_tail * (h(K + 1) / h(ell)) * r / (1.0 - r);
            }
            case HFamily::Tabulated:
                throw TailNotSummable("tabulated rates carry no tail envelope; declare a weight cutoff");
        }
        return 0.0;
    }

    void append_fingerprint(std::vector<double>& buf) const {
        buf.push_back(static_cast<double>(family_));
        buf.push_back(theta_);
        buf.push_back(u_min_);
        rho_.append_fingerprint(buf);
        for (long k : {0L, 1L, 2L, 5L})
            if (k <= max_index_) buf.push_back(h(k));
    }

private:
    void validate() const {
        if (family_ == HFamily::Geometric && !(theta_ > 0.0 && theta_ < 1.0))
            throw Error("geometric rate requires theta in (0,1)");
        if (std::fabs(h(0) - 1.0) > 1e-14) throw Error("rate h must have h(0) = 1");
        const long upto = std::min<long>(max_index_, 4096);
        for (long k = 0; k + 1 <= upto; ++k) {
            if (!(h(k + 1) <= h(k) + 1e-15))
                throw Error("rate h must be non-increasing (violated at k=" + std::to_string(k) + ")");
            if (!(h(k) > 0.0)) throw Error("rate h must stay positive");
        }
        for (long n = 0; n <= std::min<long>(max_index_, 256); ++n)
            if (!(rho_.at(n) > 0.0)) throw Error("rate rho must be positive");
    }

    ScalarSequence rho_ = ScalarSequence::constant(1.0);
    HFamily family_ = HFamily::Geometric;
    double theta_ = 0.5;
    ScalarSequence u_ = ScalarSequence::constant(1.0);
    double u_min_ = 0.0;
    long max_index_ = 0;
    std::vector<double> h_cache_;
};

}  // namespace linequiv
