#pragma once

// Brute-force metric oracles the production metrics are checked against.
// Deliberately naive: pairwise counts, exhaustive sweeps, per-rank recounts.

#include <vector>

namespace oracle {

// P(score+ > score-) + 0.5 P(tie), by explicit pair enumeration
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels);

// sweep every midpoint threshold, interpolate the FPR = FNR crossing
double eer_sweep(const std::vector<double>& scores, const std::vector<int>& labels);

// step-wise PR sum; ties kept in original order via stable sort
double ap_per_rank(const std::vector<double>& scores, const std::vector<int>& labels);

struct F1Counts {
    long tp = 0, fp = 0, fn = 0;
};
F1Counts tally(const std::vector<double>& scores, const std::vector<int>& labels,
               double threshold);
double f1_from(const F1Counts& c);  // 0/0 -> 0; empty class handled by caller

}  // namespace oracle
