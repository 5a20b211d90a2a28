#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "emoblend/emotion_model.hpp"

namespace emoblend::metrics {

inline constexpr double kDefaultEpsilon = 1e-10;

/// KL(p || q) in nats on epsilon-smoothed, re-normalized vectors.
double kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon = kDefaultEpsilon);
double kl_divergence(const ProbLabel& p, const ProbLabel& q, double epsilon = kDefaultEpsilon);

/// Jensen-Shannon divergence in nats, bounded by ln 2. 0 * log 0 = 0.
double js_divergence(std::span<const double> p, std::span<const double> q);
double js_divergence(const ProbLabel& p, const ProbLabel& q);

double cosine_similarity(std::span<const double> p, std::span<const double> q);
double pearson_corr(std::span<const double> p, std::span<const double> q);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro, mean of per-class F1
    std::vector<std::size_t> classes;  // classes included in the macro average
    std::vector<double> per_class_precision;
    std::vector<double> per_class_recall;
    std::vector<double> per_class_f1;
};

/// Argmax (ties to the lowest index) against categorical truth. The macro
/// average runs over classes that occur in the truth or among the predictions.
ClassificationMetrics dominant_label_metrics(std::span<const ProbLabel> pred, std::span<const std::size_t> truth,
                                             std::size_t k);

struct MetricReport {
    double js = 0.0;
    double kl_pq = 0.0;  // KL(pred || truth)
    double kl_qp = 0.0;  // KL(truth || pred)
    double cosine = 0.0;
    std::optional<double> pearson;  // absent when every pair had zero variance
    std::size_t pairs = 0;
    std::size_t pearson_skipped = 0;
    std::optional<ClassificationMetrics> classification;
};

/// Means of the distribution metrics over aligned prediction/truth pairs.
MetricReport distribution_report(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> truth,
                                 double epsilon = kDefaultEpsilon);

}  // namespace emoblend::metrics
