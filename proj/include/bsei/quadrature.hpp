#pragma once

#include <functional>
#include <vector>

namespace bsei::quad {

/// Adaptive Simpson on [a, b]. Stops when the Richardson error estimate of a
/// panel drops below max(abs_tol, rel_tol * |whole|) scaled to the panel, or
/// when `max_depth` is reached.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-10, double abs_tol = 1e-15, int max_depth = 48);

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule mapped onto [a, b].
GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

}  // namespace bsei::quad
