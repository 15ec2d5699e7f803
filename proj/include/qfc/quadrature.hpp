#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace qfc {

namespace detail {

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                        double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace detail

// Integrates f over [a, b], splitting at every breakpoint inside the
// interval. Narrow features (resonances, edges) must be listed as breakpoints
// so that the initial sampling sees them.
template <typename F>
double integrate(const F& f, double a, double b, std::vector<double> breakpoints = {},
                 double rel_tol = 1e-9) {
    if (!(b > a)) return 0.0;
    breakpoints.push_back(a);
    breakpoints.push_back(b);
    std::sort(breakpoints.begin(), breakpoints.end());
    std::vector<double> pts;
    pts.reserve(breakpoints.size());
    for (double x : breakpoints) {
        if (x < a || x > b) continue;
        if (!pts.empty() && x - pts.back() <= 1e-12 * (b - a)) continue;
        pts.push_back(x);
    }
    if (pts.back() < b) pts.push_back(b);

    // Coarse pass fixes the absolute error budget.
    std::vector<double> fa(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) fa[k] = f(pts[k]);
    std::vector<double> fm(pts.size() - 1), whole(pts.size() - 1);
    double coarse = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double m = 0.5 * (pts[k] + pts[k + 1]);
        fm[k] = f(m);
        whole[k] = (pts[k + 1] - pts[k]) / 6.0 * (fa[k] + 4.0 * fm[k] + fa[k + 1]);
        coarse += std::abs(whole[k]);
    }
    const double eps_total = std::max(rel_tol * coarse, 1e-300);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double eps = eps_total * (pts[k + 1] - pts[k]) / (b - a);
        total += detail::adaptive_simpson(f, pts[k], pts[k + 1], fa[k], fm[k], fa[k + 1], whole[k], eps, 40);
    }
    return total;
}

}  // namespace qfc
