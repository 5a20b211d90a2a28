#pragma once

// Combined weighted dominance estimation: recover a dominance value for a
// valence-arousal annotation as the posterior-weighted blend of per-emotion
// linear regressions of D on (V, A).

#include <atomic>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emoblend/emotion_model.hpp"

namespace emoblend::cwde {

/// D = beta0 + beta1 * V + beta2 * A
struct RegressionCoefficients {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;

    double operator()(double v, double a) const { return beta0 + beta1 * v + beta2 * a; }
};

/// Posterior weights over the universal set, summing to 1.
struct EmotionWeights {
    std::vector<double> weights;
};

inline constexpr std::size_t kUniversalCount = 6;
inline constexpr double kDefaultPriorStrength = 0.8;

/// P(V|E) * P(A|E) with V and A treated as independent.
double va_likelihood(double v, double a, const EmotionDistribution& emotion);

/// Normalized posterior over `universals`; `log_prior` (if non-empty) must match in size.
/// Computed in log space.
EmotionWeights posterior_weights(double v, double a, std::span<const EmotionDistribution> universals,
                                 std::span<const double> log_prior = {});

/// Closed-form regression of D on (V, A) from means, deviations, and correlations.
/// Throws ValidationError when |rho_VA| = 1.
RegressionCoefficients regression_for(const EmotionDistribution& emotion);

/// Prior concentrated on `label_index` with mass `strength`; the rest shares 1 - strength.
std::vector<double> label_log_prior(std::size_t count, std::size_t label_index, double strength);

/// The six emotions the estimator blends: universal terms minus neutral and contempt.
std::vector<EmotionDistribution> select_universals(const Taxonomy& lexicon);

/// Stateful only in its diagnostic clamp counter; estimates are pure.
class DominanceEstimator {
public:
    explicit DominanceEstimator(std::vector<EmotionDistribution> universals,
                                double prior_strength = kDefaultPriorStrength);

    /// Weighted blend of the regressions, clamped to [-1, 1]. `label_prior`, when
    /// given, must name one of the universals (aliases like "anger" accepted).
    double estimate(double v, double a, std::optional<std::string_view> label_prior = std::nullopt) const;

    /// Same as estimate() but an unrecognised label falls back to the uniform prior.
    double estimate_lenient(double v, double a, std::optional<std::string_view> label) const;

    EmotionWeights weights(double v, double a, std::optional<std::string_view> label_prior = std::nullopt) const;

    std::span<const EmotionDistribution> universals() const noexcept { return universals_; }
    std::span<const RegressionCoefficients> regressions() const noexcept { return regressions_; }
    double prior_strength() const noexcept { return prior_strength_; }
    std::optional<std::size_t> universal_index(std::string_view name) const;
    std::size_t clamp_count() const noexcept { return clamp_count_.load(); }

    /// Fill missing dominance values in place. Returns how many were filled.
    std::size_t fill(std::vector<SampleRecord>& records, bool use_label_prior = true) const;

private:
    double blend(double v, double a, std::span<const double> log_prior) const;

    std::vector<EmotionDistribution> universals_;
    std::vector<RegressionCoefficients> regressions_;
    double prior_strength_;
    mutable std::atomic<std::size_t> clamp_count_{0};
};

/// Convenience: D-hat with explicit universals and prior strength.
double estimate_dominance(double v, double a, std::span<const EmotionDistribution> universals,
                          std::optional<std::string_view> label_prior = std::nullopt,
                          double prior_strength = kDefaultPriorStrength);

}  // namespace emoblend::cwde
