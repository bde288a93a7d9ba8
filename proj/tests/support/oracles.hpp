#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library except plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double circle_dist(double a, double b) {
    double d = std::fmod(std::abs(a - b), 1.0);
    return std::min(d, 1.0 - d);
}

/// Minimum-cost perfect assignment (Hungarian / Kuhn-Munkres with potentials).
/// cost is row-major n x n. Returns the optimal total cost.
inline double assignment_cost(const std::vector<double>& cost, std::size_t n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total += cost[(p[j] - 1) * n + (j - 1)];
    return total;
}

/// Exact W2 on the circle between two atomic measures whose weights are
/// integer multiples of 1/K: each atom is split into unit masses and the
/// resulting K x K assignment problem with squared circle cost is solved.
inline double circle_w2_integer_weights(const std::vector<double>& xa, const std::vector<int>& ka,
                                        const std::vector<double>& xb, const std::vector<int>& kb) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < xa.size(); ++i) a.insert(a.end(), ka[i], xa[i]);
    for (std::size_t i = 0; i < xb.size(); ++i) b.insert(b.end(), kb[i], xb[i]);
    const std::size_t K = a.size();
    std::vector<double> cost(K * K);
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            const double d = circle_dist(a[i], b[j]);
            cost[i * K + j] = d * d;
        }
    }
    return std::sqrt(assignment_cost(cost, K) / static_cast<double>(K));
}

/// Dense inverse of (I - dt L) for the periodic three-point Laplacian
/// L = (z_{i-1} - 2 z_i + z_{i+1}) / dx², by Gauss-Jordan elimination.
inline std::vector<double> backward_euler_inverse(std::size_t n, double dt) {
    const double dx = 1.0 / static_cast<double>(n);
    const double r = dt / (dx * dx);
    std::vector<double> a(n * n, 0.0), inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        a[i * n + i] = 1.0 + 2.0 * r;
        a[i * n + (i + 1) % n] -= r;
        a[i * n + (i + n - 1) % n] -= r;
        inv[i * n + i] = 1.0;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t i = c + 1; i < n; ++i) {
            if (std::abs(a[i * n + c]) > std::abs(a[piv * n + c])) piv = i;
        }
        for (std::size_t j = 0; j < n; ++j) {
            std::swap(a[c * n + j], a[piv * n + j]);
            std::swap(inv[c * n + j], inv[piv * n + j]);
        }
        const double d = a[c * n + c];
        for (std::size_t j = 0; j < n; ++j) {
            a[c * n + j] /= d;
            inv[c * n + j] /= d;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (i == c) continue;
            const double f = a[i * n + c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a[i * n + j] -= f * a[c * n + j];
                inv[i * n + j] -= f * inv[c * n + j];
            }
        }
    }
    return inv;
}

/// Penalised obstacle problem dz = Δz dt + (1/ε)(z + v)⁻ dt, backward Euler for
/// the heat part then an implicit pointwise solve of the stiff term.
/// v is step-major with (n_steps + 1) rows. Returns z in the same layout.
inline std::vector<double> penalised_obstacle(const std::vector<double>& v, std::size_t n,
                                              std::size_t n_steps, double dt, double eps) {
    const auto inv = backward_euler_inverse(n, dt);
    const double k = dt / eps;
    std::vector<double> z((n_steps + 1) * n, 0.0), q(n);
    for (std::size_t s = 0; s < n_steps; ++s) {
        const double* zs = &z[s * n];
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += inv[i * n + j] * zs[j];
            q[i] = acc;
        }
        double* zn = &z[(s + 1) * n];
        const double* vn = &v[(s + 1) * n];
        for (std::size_t i = 0; i < n; ++i) {
            zn[i] = q[i] + vn[i] < 0.0 ? (q[i] - k * vn[i]) / (1.0 + k) : q[i];
        }
    }
    return z;
}

/// E[f(m + s Z)] for standard normal Z by composite Simpson on [-12, 12].
template <class F>
double gaussian_expectation(F f, double m, double s, int panels = 20000) {
    const double a = -12.0, b = 12.0, h = (b - a) / panels;
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (int i = 0; i <= panels; ++i) {
        const double z = a + h * i;
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f(m + s * z) * c * std::exp(-0.5 * z * z);
    }
    return acc * h / 3.0;
}

/// Composite Simpson on [a, b] with an even panel count.
template <class F>
double simpson(F f, double a, double b, int panels = 4096) {
    const double h = (b - a) / panels;
    double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + h * i);
    return acc * h / 3.0;
}

/// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace oracle
