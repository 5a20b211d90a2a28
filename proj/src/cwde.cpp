#include "emoblend/cwde.hpp"

#include <algorithm>
#include <cmath>

#include "emoblend/error.hpp"
#include "emoblend/gaussian.hpp"

namespace emoblend::cwde {

double va_likelihood(double v, double a, const EmotionDistribution& emotion) {
    const auto& mu = emotion.mean();
    const auto& sd = emotion.sigma();
    return normal_pdf(v, mu.valence, sd.valence) * normal_pdf(a, mu.arousal, sd.arousal);
}

EmotionWeights posterior_weights(double v, double a, std::span<const EmotionDistribution> universals,
                                 std::span<const double> log_prior) {
    if (universals.empty()) throw ValidationError("posterior over an empty emotion set");
    if (!log_prior.empty() && log_prior.size() != universals.size()) {
        throw DimensionError("prior size does not match the emotion set");
    }
    std::vector<double> logs(universals.size());
    for (std::size_t i = 0; i < universals.size(); ++i) {
        const auto& mu = universals[i].mean();
        const auto& sd = universals[i].sigma();
        logs[i] = normal_log_pdf(v, mu.valence, sd.valence) + normal_log_pdf(a, mu.arousal, sd.arousal);
        if (!log_prior.empty()) logs[i] += log_prior[i];
    }
    const double lse = log_sum_exp(logs);
    EmotionWeights out;
    out.weights.resize(logs.size());
    std::transform(logs.begin(), logs.end(), out.weights.begin(), [lse](double l) { return std::exp(l - lse); });
    return out;
}

RegressionCoefficients regression_for(const EmotionDistribution& emotion) {
    const auto rho = emotion.rho_or_zero();
    const double denom = 1.0 - rho.va * rho.va;
    if (!(denom > 0.0)) throw ValidationError(emotion.name() + ": singular correlation (|rho_va| = 1)");
    const auto& mu = emotion.mean();
    const auto& sd = emotion.sigma();
    RegressionCoefficients c;
    c.beta1 = (sd.dominance / sd.valence) * ((rho.vd - rho.va * rho.ad) / denom);
    c.beta2 = (sd.dominance / sd.arousal) * ((rho.ad - rho.va * rho.vd) / denom);
    c.beta0 = mu.dominance - c.beta1 * mu.valence - c.beta2 * mu.arousal;
    return c;
}

std::vector<double> label_log_prior(std::size_t count, std::size_t label_index, double strength) {
    if (count < 2) throw ValidationError("label prior needs at least two emotions");
    if (label_index >= count) throw ValidationError("label index out of range");
    const double floor = 1.0 / static_cast<double>(count);
    if (!(strength >= floor && strength < 1.0)) {
        throw ValidationError("prior_strength must lie in [1/K, 1)");
    }
    std::vector<double> prior(count, std::log((1.0 - strength) / static_cast<double>(count - 1)));
    prior[label_index] = std::log(strength);
    return prior;
}

std::vector<EmotionDistribution> select_universals(const Taxonomy& lexicon) {
    std::vector<EmotionDistribution> out;
    for (const auto& e : lexicon.emotions()) {
        if (e.is_universal() && e.name() != "neutral" && e.name() != "contempt") out.push_back(e);
    }
    return out;
}

DominanceEstimator::DominanceEstimator(std::vector<EmotionDistribution> universals, double prior_strength)
    : universals_(std::move(universals)), prior_strength_(prior_strength) {
    if (universals_.size() != kUniversalCount) {
        throw ValidationError("dominance estimation needs exactly 6 universal emotions, got " +
                              std::to_string(universals_.size()));
    }
    const double floor = 1.0 / static_cast<double>(kUniversalCount);
    if (!(prior_strength_ >= floor && prior_strength_ < 1.0)) {
        throw ValidationError("prior_strength must lie in [1/6, 1)");
    }
    regressions_.reserve(universals_.size());
    for (const auto& e : universals_) regressions_.push_back(regression_for(e));
}

std::optional<std::size_t> DominanceEstimator::universal_index(std::string_view name) const {
    const auto canonical = canonical_emotion_name(name);
    for (std::size_t i = 0; i < universals_.size(); ++i) {
        if (universals_[i].name() == canonical) return i;
    }
    return std::nullopt;
}

EmotionWeights DominanceEstimator::weights(double v, double a, std::optional<std::string_view> label_prior) const {
    if (!label_prior) return posterior_weights(v, a, universals_);
    const auto idx = universal_index(*label_prior);
    if (!idx) throw ValidationError("unknown label prior: " + std::string(*label_prior));
    const auto prior = label_log_prior(universals_.size(), *idx, prior_strength_);
    return posterior_weights(v, a, universals_, prior);
}

double DominanceEstimator::blend(double v, double a, std::span<const double> log_prior) const {
    const auto w = posterior_weights(v, a, universals_, log_prior);
    double d = 0.0;
    for (std::size_t i = 0; i < universals_.size(); ++i) d += w.weights[i] * regressions_[i](v, a);
    if (d < -1.0 || d > 1.0) {
        clamp_count_.fetch_add(1, std::memory_order_relaxed);
        d = std::clamp(d, -1.0, 1.0);
    }
    return d;
}

double DominanceEstimator::estimate(double v, double a, std::optional<std::string_view> label_prior) const {
    if (!label_prior) return blend(v, a, {});
    const auto idx = universal_index(*label_prior);
    if (!idx) throw ValidationError("unknown label prior: " + std::string(*label_prior));
    const auto prior = label_log_prior(universals_.size(), *idx, prior_strength_);
    return blend(v, a, prior);
}

double DominanceEstimator::estimate_lenient(double v, double a, std::optional<std::string_view> label) const {
    if (label && universal_index(*label)) return estimate(v, a, label);
    return estimate(v, a, std::nullopt);
}

std::size_t DominanceEstimator::fill(std::vector<SampleRecord>& records, bool use_label_prior) const {
    std::size_t filled = 0;
    for (auto& r : records) {
        if (r.dominance) continue;
        std::optional<std::string_view> label;
        if (use_label_prior && r.label) label = *r.label;
        r.dominance = estimate_lenient(r.valence, r.arousal, label);
        ++filled;
    }
    return filled;
}

double estimate_dominance(double v, double a, std::span<const EmotionDistribution> universals,
                          std::optional<std::string_view> label_prior, double prior_strength) {
    DominanceEstimator est(std::vector<EmotionDistribution>(universals.begin(), universals.end()), prior_strength);
    return est.estimate(v, a, label_prior);
}

}  // namespace emoblend::cwde
