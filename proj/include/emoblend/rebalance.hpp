#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "emoblend/emotion_model.hpp"

namespace emoblend::rebalance {

/// Quadrants of the valence-arousal plane. v = 0 counts as V > 0, a = 0 as A > 0.
enum class Quadrant : std::size_t { q1 = 0, q2 = 1, q3 = 2, q4 = 3 };

Quadrant quadrant_of(double v, double a);

struct QuadrantStats {
    std::array<std::size_t, 4> counts{};
    std::array<double, 4> areas{1.0, 1.0, 1.0, 1.0};

    double density(Quadrant q) const {
        const auto i = static_cast<std::size_t>(q);
        return static_cast<double>(counts[i]) / areas[i];
    }
    std::array<double, 4> densities() const;
    double max_density() const;

    static QuadrantStats from_samples(std::span<const SampleRecord> samples);
};

/// Density of the quadrant holding the mean VA of `reference_label` samples,
/// counting every primary sample in that quadrant. Label names are compared
/// after canonicalization ("Happy" == "happy").
double max_quadrant_density(std::span<const SampleRecord> primary, std::string_view reference_label);

struct Admission {
    std::vector<SampleRecord> admitted;
    QuadrantStats stats;
};

/// Sequential scan: admit a candidate iff its quadrant's current density is below
/// `cap`, then count it immediately. Only valence and arousal are inspected.
Admission admit_stream(QuadrantStats primary, double cap, std::span<const SampleRecord> candidates);

/// primary followed by the admitted auxiliary rows (tagged auxiliary).
std::vector<SampleRecord> rebalance(std::span<const SampleRecord> primary, std::span<const SampleRecord> auxiliary,
                                    double cap);

}  // namespace emoblend::rebalance
