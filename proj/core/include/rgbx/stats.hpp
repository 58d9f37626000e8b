#pragma once

#include <span>
#include <vector>

namespace rgbx {

/// Linear-interpolation quantile over the sorted sample (the "type 7"
/// convention): with n values sorted ascending and h = (n - 1) * p,
/// Q(p) = x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)]).
/// p is clamped to [0,1]. Throws on empty input.
double quantile(std::span<const double> values, double p);

/// Same convention on an already ascending-sorted span (no copy).
double quantile_sorted(std::span<const double> sorted, double p);

/// Evaluates several quantiles with a single sort.
std::vector<double> quantiles(std::span<const double> values, std::span<const double> ps);

double mean(std::span<const double> values);

}  // namespace rgbx
