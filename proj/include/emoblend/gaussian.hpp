#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace emoblend {

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;  // log(sqrt(2*pi))

/// Univariate normal log-density.
inline double normal_log_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrtTwoPi;
}

inline double normal_pdf(double x, double mu, double sigma) { return std::exp(normal_log_pdf(x, mu, sigma)); }

/// log(sum(exp(values))) with max subtraction. Empty input gives -inf.
inline double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return -INFINITY;
    double m = values[0];
    for (double v : values) m = v > m ? v : m;
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace emoblend
