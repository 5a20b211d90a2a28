#pragma once

// Reduce a large emotion lexicon to a compact taxonomy by repeatedly merging the
// pair of non-universal terms whose normalized intersection measure (NIM) is
// highest, until no pair exceeds the threshold.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "emoblend/emotion_model.hpp"

namespace emoblend::fusion {

struct FusionConfig {
    double t = 0.5;
    std::size_t mc_samples = 200000;
    std::size_t neighbors = 5;
    std::size_t fuse_samples = 1000;
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0: hardware concurrency

    void validate() const;
};

struct FusionStep {
    std::string parent_a;
    std::string parent_b;
    double nim = 0.0;
    std::string new_name;
    bool from_shortlist = true;  // false when found by the full pairwise pass
};

struct FusionTrace {
    std::vector<FusionStep> steps;
    std::size_t final_count = 0;
    std::size_t nim_evaluations = 0;
};

struct FusionResult {
    Taxonomy taxonomy;
    FusionTrace trace;
};

/// Monte Carlo estimate of the integral of min(pdf_i, pdf_j) over R^3. Samples are
/// drawn in equal halves from each component (importance sampling from the
/// equal-weight mixture). Symmetric in its arguments and deterministic per seed.
double intersection_volume(const EmotionDistribution& e_i, const EmotionDistribution& e_j,
                           std::size_t mc_samples, std::uint64_t seed);

/// Intersection volume over the smaller of the two total volumes (both 1 for
/// normalized densities).
double nim(const EmotionDistribution& e_i, const EmotionDistribution& e_j, std::size_t mc_samples,
           std::uint64_t seed);

/// NIM with the pair seed derived from `config.seed` and both names.
double nim(const EmotionDistribution& e_i, const EmotionDistribution& e_j, const FusionConfig& config);

std::uint64_t pair_seed(std::uint64_t base, const std::string& key_a, const std::string& key_b);

/// Pool `fuse_samples` draws from each parent and summarize the pool back to an
/// axis-aligned Gaussian. Named after the lexicographically-first parent.
EmotionDistribution fuse_pair(const EmotionDistribution& e_i, const EmotionDistribution& e_j,
                              std::size_t fuse_samples, std::uint64_t seed);

/// Fuse the lexicon's non-universal terms. Output order: universals, unfused
/// originals (lexicon order), fused terms (creation order).
FusionResult fuse_taxonomy(const Taxonomy& lexicon, const FusionConfig& config);

struct PairNim {
    std::string a;
    std::string b;
    double nim = 0.0;
};

/// NIM of every pair of non-universal terms, highest first.
std::vector<PairNim> pairwise_nims(const Taxonomy& taxonomy, std::size_t mc_samples, std::uint64_t seed,
                                   std::size_t threads = 0);

/// One JSON object per line.
void write_trace_jsonl(const FusionTrace& trace, std::ostream& out);

}  // namespace emoblend::fusion
