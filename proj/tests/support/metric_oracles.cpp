#include "support/metric_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oracle {

double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    if (pairs == 0) throw std::runtime_error("auc oracle: need both classes");
    return wins / static_cast<double>(pairs);
}

double eer_sweep(const std::vector<double>& scores, const std::vector<int>& labels) {
    long P = 0, N = 0;
    for (int y : labels) (y == 1 ? P : N)++;
    if (P == 0 || N == 0) throw std::runtime_error("eer oracle: need both classes");

    std::vector<double> uniq = scores;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    // candidate thresholds: below everything, every midpoint, above everything
    std::vector<double> ts;
    ts.push_back(uniq.front() - 1.0);
    for (size_t i = 0; i + 1 < uniq.size(); ++i) ts.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    ts.push_back(uniq.back() + 1.0);

    auto rates = [&](double t) {
        long fp = 0, fn = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            bool pred = scores[i] >= t;
            if (pred && labels[i] == 0) ++fp;
            if (!pred && labels[i] == 1) ++fn;
        }
        return std::pair<double, double>{static_cast<double>(fp) / N,
                                         static_cast<double>(fn) / P};
    };

    auto [fpr_prev, fnr_prev] = rates(ts[0]);
    if (fnr_prev >= fpr_prev) return fnr_prev;
    for (size_t i = 1; i < ts.size(); ++i) {
        auto [fpr, fnr] = rates(ts[i]);
        if (fnr >= fpr) {
            const double a = fpr_prev - fnr_prev;
            const double b = fnr - fpr;
            const double lam = (a + b) > 0.0 ? a / (a + b) : 0.0;
            return fnr_prev + lam * (fnr - fnr_prev);
        }
        fpr_prev = fpr;
        fnr_prev = fnr;
    }
    return fnr_prev;
}

double ap_per_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    long npos = std::count(labels.begin(), labels.end(), 1);
    if (npos == 0) throw std::runtime_error("ap oracle: no positives");
    double ap = 0.0;
    for (size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 1) continue;
        // recount precision at this rank from scratch
        long hits = 0;
        for (size_t j = 0; j <= k; ++j)
            if (labels[order[j]] == 1) ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return ap / static_cast<double>(npos);
}

F1Counts tally(const std::vector<double>& scores, const std::vector<int>& labels,
               double threshold) {
    F1Counts c;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) ++c.tp;
        if (pred && labels[i] == 0) ++c.fp;
        if (!pred && labels[i] == 1) ++c.fn;
    }
    return c;
}

double f1_from(const F1Counts& c) {
    const double denom = 2.0 * c.tp + c.fp + c.fn;
    if (denom == 0.0) return 0.0;
    return 2.0 * c.tp / denom;
}

}  // namespace oracle
