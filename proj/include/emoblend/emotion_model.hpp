#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emoblend {

/// A point in valence-arousal-dominance space, every axis on the [-1, 1] scale.
struct Vad {
    double valence = 0.0;
    double arousal = 0.0;
    double dominance = 0.0;

    double operator[](std::size_t axis) const { return axis == 0 ? valence : axis == 1 ? arousal : dominance; }
    friend bool operator==(const Vad&, const Vad&) = default;
};

/// Pairwise Pearson correlations between the three axes.
struct Correlations {
    double va = 0.0;
    double vd = 0.0;
    double ad = 0.0;
    friend bool operator==(const Correlations&, const Correlations&) = default;
};

/// An emotion term modelled as an axis-aligned trivariate Gaussian over VAD.
/// Construction validates; instances are immutable.
class EmotionDistribution {
public:
    EmotionDistribution(std::string name, Vad mean, Vad sigma, std::optional<Correlations> rho = std::nullopt,
                        bool is_universal = false);

    const std::string& name() const noexcept { return name_; }
    const Vad& mean() const noexcept { return mean_; }
    const Vad& sigma() const noexcept { return sigma_; }
    const std::optional<Correlations>& rho() const noexcept { return rho_; }
    /// Correlations, zero when the lexicon did not supply them.
    Correlations rho_or_zero() const noexcept { return rho_.value_or(Correlations{}); }
    bool is_universal() const noexcept { return is_universal_; }

    EmotionDistribution renamed(std::string name) const;

    friend bool operator==(const EmotionDistribution&, const EmotionDistribution&) = default;

private:
    std::string name_;
    Vad mean_;
    Vad sigma_;
    std::optional<Correlations> rho_;
    bool is_universal_ = false;
};

/// Ordered label space. Index i of every ProbLabel refers to emotions()[i].
class Taxonomy {
public:
    explicit Taxonomy(std::vector<EmotionDistribution> emotions);

    std::size_t size() const noexcept { return emotions_.size(); }
    const EmotionDistribution& operator[](std::size_t i) const { return emotions_[i]; }
    const std::vector<EmotionDistribution>& emotions() const noexcept { return emotions_; }
    std::optional<std::size_t> index_of(std::string_view name) const;
    std::vector<std::string> names() const;

    /// The terms flagged universal, in taxonomy order.
    Taxonomy universals() const;

    friend bool operator==(const Taxonomy&, const Taxonomy&) = default;

private:
    std::vector<EmotionDistribution> emotions_;
};

/// Probability vector over a taxonomy: entries in [0, 1] summing to 1 within 1e-9.
class ProbLabel {
public:
    static constexpr double kSumTolerance = 1e-9;

    explicit ProbLabel(std::vector<double> probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> probs() const noexcept { return probs_; }
    /// Index of the largest entry; ties go to the lowest index.
    std::size_t argmax() const;

private:
    std::vector<double> probs_;
};

/// Divide non-negative scores by their sum.
ProbLabel prob_label_from_scores(std::span<const double> scores);

enum class SampleSource { primary, auxiliary };

std::string_view to_string(SampleSource s);
SampleSource parse_sample_source(std::string_view text);

/// One face-image annotation row.
struct SampleRecord {
    std::string id;
    double valence = 0.0;
    double arousal = 0.0;
    std::optional<double> dominance;
    std::optional<std::string> label;
    SampleSource source = SampleSource::primary;
};

// Canonical names of the universal emotions as they appear in the shipped lexicon.
inline constexpr std::array<std::string_view, 8> kUniversalNames = {
    "angry", "contempt", "disgusted", "fearful", "happy", "neutral", "sad", "surprised"};

/// Canonical lexicon name for common spellings of the universal emotions
/// ("Anger", "surprise", "Fear", ...). Other names are lower-cased and returned as is.
std::string canonical_emotion_name(std::string_view name);

// Lexicon CSV: name,mu_v,mu_a,mu_d,sigma_v,sigma_a,sigma_d,rho_va,rho_vd,rho_ad,universal
Taxonomy load_lexicon(const std::string& path);
Taxonomy read_lexicon(std::istream& in);
void save_lexicon(const Taxonomy& taxonomy, const std::string& path);
void write_lexicon(const Taxonomy& taxonomy, std::ostream& out);

// Sample CSV: id,valence,arousal,dominance,label,source
std::vector<SampleRecord> load_samples(const std::string& path);
std::vector<SampleRecord> read_samples(std::istream& in);
void save_samples(const std::vector<SampleRecord>& samples, const std::string& path);
void write_samples(const std::vector<SampleRecord>& samples, std::ostream& out);

}  // namespace emoblend
