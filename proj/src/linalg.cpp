#include "ladle/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ladle {

void jacobi_eigh(const Tensor& A, Tensor& eigvals, Tensor& eigvecs, int max_sweeps) {
    if (A.rows != A.cols) throw input_error("jacobi_eigh: matrix must be square");
    const size_t n = A.rows;
    Tensor M = A;
    Tensor V(n, n);
    for (size_t i = 0; i < n; ++i) V.at(i, i) = 1.0;

    double scale = 0.0;
    for (size_t i = 0; i < n; ++i) scale += M.at(i, i) * M.at(i, i);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) scale += 2.0 * M.at(i, j) * M.at(i, j);
    const double tol = 1e-30 * std::max(scale, 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) off += M.at(i, j) * M.at(i, j);
        if (off <= tol) break;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = M.at(p, q);
                if (apq == 0.0) continue;
                const double app = M.at(p, p), aqq = M.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    const double mkp = M.at(k, p), mkq = M.at(k, q);
                    M.at(k, p) = c * mkp - s * mkq;
                    M.at(k, q) = s * mkp + c * mkq;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double mpk = M.at(p, k), mqk = M.at(q, k);
                    M.at(p, k) = c * mpk - s * mqk;
                    M.at(q, k) = s * mpk + c * mqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double vkp = V.at(k, p), vkq = V.at(k, q);
                    V.at(k, p) = c * vkp - s * vkq;
                    V.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return M.at(a, a) > M.at(b, b); });
    eigvals = Tensor(1, n);
    eigvecs = Tensor(n, n);
    for (size_t j = 0; j < n; ++j) {
        eigvals.d[j] = M.at(order[j], order[j]);
        for (size_t i = 0; i < n; ++i) eigvecs.at(i, j) = V.at(i, order[j]);
    }
}

}  // namespace ladle
