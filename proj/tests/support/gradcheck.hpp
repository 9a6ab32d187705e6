#pragma once

// Central-difference gradient checking shared by the unit and acceptance
// suites. Relative error bound 1e-4; the absolute floor of 1e-8 (via the
// 1e-4 denominator floor) reflects the cancellation noise of central
// differences at step ~3e-6 on O(1) losses, below which a finite
// difference cannot certify anything.

#include <cmath>
#include <functional>

#include "ladle/tensor.hpp"

namespace gradcheck {

struct Result {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;
};

inline bool agree(double numeric, double analytic, double rel_tol = 1e-4,
                  double denom_floor = 1e-4) {
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic), denom_floor});
    return std::fabs(numeric - analytic) <= rel_tol * denom;
}

// Perturbs value[e], calling eval() for f(theta +/- h).
inline bool probe_element(ladle::Tensor& value, size_t e,
                          const std::function<double()>& eval, double analytic,
                          Result* acc = nullptr, double rel_tol = 1e-4) {
    const double keep = value.d[e];
    const double h = 3e-6 * std::max(1.0, std::fabs(keep));
    value.d[e] = keep + h;
    const double up = eval();
    value.d[e] = keep - h;
    const double dn = eval();
    value.d[e] = keep;
    const double numeric = (up - dn) / (2.0 * h);
    const bool ok = agree(numeric, analytic, rel_tol);
    if (acc) {
        acc->checked++;
        if (!ok) acc->failed++;
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-4});
        acc->worst_rel = std::max(acc->worst_rel, std::fabs(numeric - analytic) / denom);
    }
    return ok;
}

}  // namespace gradcheck
