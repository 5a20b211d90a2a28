#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoblend/fusion.hpp"
#include "emoblend/metrics.hpp"
#include "emoblend/soft_label.hpp"

namespace emoblend::pipeline {

enum class Stage { config = 2, cwde = 3, rebalance = 4, fuse = 5, relabel = 6, evaluate = 7, promote = 8 };

std::string_view to_string(Stage s);

/// Failure inside one pipeline stage; exit_code() is stage-specific.
class StageError : public std::runtime_error {
public:
    StageError(Stage stage, const std::string& message)
        : std::runtime_error(std::string(to_string(stage)) + ": " + message), stage_(stage) {}
    Stage stage() const noexcept { return stage_; }
    int exit_code() const noexcept { return static_cast<int>(stage_); }

private:
    Stage stage_;
};

enum class TaxonomyChoice { universal, fused };

struct PipelineConfig {
    std::filesystem::path lexicon;
    std::filesystem::path samples;
    std::optional<std::filesystem::path> aux_samples;
    std::optional<std::filesystem::path> truth;  // optional distribution CSV for divergence metrics
    std::filesystem::path output_dir;
    TaxonomyChoice taxonomy = TaxonomyChoice::universal;
    fusion::FusionConfig fusion;
    double prior_strength = 0.8;
    bool use_label_prior = true;
    std::string reference_label = "happy";
    std::optional<double> cap_value;
    double epsilon = metrics::kDefaultEpsilon;

    /// Parse JSON; relative paths resolve against `base_dir`. `fusion.seed` is required.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
    void validate() const;
};

inline constexpr const char* kDominanceFile = "samples_dominance.csv";
inline constexpr const char* kTaxonomyFile = "taxonomy.csv";
inline constexpr const char* kTraceFile = "fusion_trace.jsonl";
inline constexpr const char* kLabelsFile = "labels.csv";
inline constexpr const char* kErrorsFile = "relabel_errors.csv";
inline constexpr const char* kReportFile = "metrics.json";
inline constexpr const char* kManifestFile = "manifest.json";

struct PipelineResult {
    std::vector<std::filesystem::path> artifacts;
    std::size_t records = 0;
    std::size_t rejected = 0;
    std::size_t admitted = 0;
};

/// cwde -> (rebalance) -> fuse -> relabel -> evaluate. Outputs are staged in a
/// sibling temp directory and moved into output_dir only when every stage
/// succeeded. Throws StageError.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct EvaluationInputs {
    soft_label::LabelTable pred;
    std::optional<soft_label::LabelTable> truth;
    std::vector<std::pair<std::string, std::string>> labels;  // (id, class name)
    double epsilon = metrics::kDefaultEpsilon;
};

/// Metric report as JSON: distribution means (truth aligned by id) and dominant-label
/// classification metrics (labels aligned by id, names canonicalized).
nlohmann::ordered_json evaluate(const EvaluationInputs& inputs);

/// CSV `id,label`.
std::vector<std::pair<std::string, std::string>> load_id_labels(const std::filesystem::path& path);

}  // namespace emoblend::pipeline
