#include "bsei/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bsei::quad {

namespace {

struct Panel {
    double a, fa, m, fm, b, fb, whole;
};

double simpson(double a, double fa, double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double recurse(const std::function<double(double)>& f, const Panel& p, double tol, int depth) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(p.a, p.fa, flm, p.m, p.fm);
    const double right = simpson(p.m, p.fm, frm, p.b, p.fb);
    const double delta = left + right - p.whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return recurse(f, {p.a, p.fa, lm, flm, p.m, p.fm, left}, 0.5 * tol, depth - 1) +
           recurse(f, {p.m, p.fm, rm, frm, p.b, p.fb, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tol,
                        double abs_tol, int max_depth) {
    if (a == b) return 0.0;
    // Seed with a coarse composite estimate so the relative tolerance has a
    // meaningful scale even when the integrand vanishes at the three seed points.
    constexpr int kSeedPanels = 8;
    const double h = (b - a) / kSeedPanels;
    double scale = 0.0;
    std::vector<Panel> panels;
    panels.reserve(kSeedPanels);
    double fa = f(a);
    for (int i = 0; i < kSeedPanels; ++i) {
        const double pa = a + i * h;
        const double pb = (i + 1 == kSeedPanels) ? b : a + (i + 1) * h;
        const double pm = 0.5 * (pa + pb);
        const double fm = f(pm);
        const double fb = f(pb);
        const double whole = simpson(pa, fa, fm, pb, fb);
        panels.push_back({pa, fa, pm, fm, pb, fb, whole});
        scale += whole;
        fa = fb;
    }
    const double tol = std::max(abs_tol, rel_tol * std::abs(scale)) / kSeedPanels;
    double total = 0.0;
    for (const auto& p : panels) total += recurse(f, p, tol, max_depth);
    return total;
}

GaussRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Tricomi initial guess, then Newton on P_n.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = mid - half * x;
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

}  // namespace bsei::quad
