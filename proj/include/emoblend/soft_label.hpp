#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "emoblend/cwde.hpp"
#include "emoblend/emotion_model.hpp"

namespace emoblend::soft_label {

/// Per-class log-likelihoods of one VAD point.
struct LogLikelihoodVector {
    std::vector<double> values;
};

/// Univariate normal log-density: -0.5 * ((x - mu) / sigma)^2 - log(sigma * sqrt(2 pi)).
double log_axis_likelihood(double x, double mu, double sigma);

/// Sum of the three axis log-densities for every class (diagonal covariance).
LogLikelihoodVector log_likelihoods(const Vad& vad, const Taxonomy& taxonomy);

/// Normalize log-likelihoods with LogSumExp. `log_prior`, if non-empty, is added first.
ProbLabel normalize_log_likelihoods(std::span<const double> log_likelihoods, std::span<const double> log_prior = {});

/// Posterior over the taxonomy under an equiprobable class prior.
ProbLabel soft_label(const Vad& vad, const Taxonomy& taxonomy);

struct LabeledRecord {
    std::string id;
    ProbLabel label;
};

struct RecordError {
    std::size_t index = 0;  // position in the input stream
    std::string id;
    std::string message;
};

struct RelabelResult {
    std::vector<LabeledRecord> labels;  // input order, rejected records omitted
    std::vector<RecordError> errors;
    std::size_t dominance_filled = 0;
};

/// Label every record. Missing dominance is filled by `estimator`; records with
/// valence/arousal/dominance outside [-1, 1] are reported and skipped.
RelabelResult relabel_dataset(std::span<const SampleRecord> records, const Taxonomy& taxonomy,
                              const cwde::DominanceEstimator& estimator, bool use_label_prior = true,
                              std::size_t threads = 1);

/// `id,<class names...>` header then one row per label, 9 significant digits.
void write_labels_csv(const Taxonomy& taxonomy, std::span<const LabeledRecord> labels, std::ostream& out);

struct LabelTable {
    std::vector<std::string> classes;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
};

LabelTable read_labels_csv(std::istream& in);
LabelTable load_labels_csv(const std::string& path);

}  // namespace emoblend::soft_label
