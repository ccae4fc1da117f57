#include "mwalk/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mw {

std::vector<double> jacobi_eigensym(const std::vector<double>& a_in, int n,
                                    std::vector<double>* vecs, double tol) {
    std::vector<double> a = a_in;
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[i + static_cast<size_t>(n) * i] = 1.0;

    double anorm = 0.0;
    for (double x : a) anorm = std::max(anorm, std::abs(x));
    const double thresh = tol * std::max(anorm, 1e-300);

    auto at = [&a, n](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(at(p, q)));
        if (off <= thresh) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (std::abs(apq) <= thresh * 1e-2) continue;
                double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v[k + static_cast<size_t>(n) * p];
                    double vkq = v[k + static_cast<size_t>(n) * q];
                    v[k + static_cast<size_t>(n) * p] = c * vkp - s * vkq;
                    v[k + static_cast<size_t>(n) * q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return at(i, i) < at(j, j); });

    std::vector<double> vals(n);
    std::vector<double> sorted_vecs(static_cast<size_t>(n) * n);
    for (int k = 0; k < n; ++k) {
        vals[k] = at(order[k], order[k]);
        // Deterministic sign: first component of largest magnitude positive.
        int imax = 0;
        double amax = 0.0;
        for (int i = 0; i < n; ++i) {
            double c = v[i + static_cast<size_t>(n) * order[k]];
            if (std::abs(c) > amax) { amax = std::abs(c); imax = i; }
        }
        double sign = v[imax + static_cast<size_t>(n) * order[k]] >= 0 ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i)
            sorted_vecs[i + static_cast<size_t>(n) * k] =
                sign * v[i + static_cast<size_t>(n) * order[k]];
    }
    if (vecs) *vecs = std::move(sorted_vecs);
    return vals;
}

void solve_dense(std::vector<double>& a, std::vector<double>& b, int n) {
    auto at = [&a, n](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(at(col, col));
        for (int r = col + 1; r < n; ++r) {
            double cand = std::abs(at(r, col));
            if (cand > best) { best = cand; piv = r; }
        }
        if (best == 0.0) throw NumericalError("singular matrix in dense solve");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(at(col, j), at(piv, j));
            std::swap(b[col], b[piv]);
        }
        double d = at(col, col);
        for (int r = col + 1; r < n; ++r) {
            double f = at(r, col) / d;
            if (f == 0.0) continue;
            at(r, col) = 0.0;
            for (int j = col + 1; j < n; ++j) at(r, j) -= f * at(col, j);
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int j = r + 1; j < n; ++j) s -= at(r, j) * b[j];
        b[r] = s / at(r, r);
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace mw
