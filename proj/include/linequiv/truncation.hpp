#pragma once

// Finite-horizon surrogate for the paper-side infinite series and l-infinity
// fixed points. Every evaluation downstream reports an explicit error bound
// assembled from the fixed-point tolerance and the certified tail envelope.

namespace linequiv {

struct TruncationPolicy {
    long series_horizon = 60;       // K_ser: last summed index of the Green series
    double fixed_point_tol = 1e-9;  // eps_fp: Gamma iteration stops when the sup-norm
                                    // change drops below eps_fp * (1 - q)
    long max_iters = 10000;         // Gamma iteration budget; exceeding it signals a
                                    // mis-certified contraction constant
    double backward_tol = 1e-12;    // relative per-step tolerance for backward orbits
};

}  // namespace linequiv
