#include "emoblend/rebalance.hpp"

#include <algorithm>

#include "emoblend/error.hpp"

namespace emoblend::rebalance {

Quadrant quadrant_of(double v, double a) {
    const bool right = v >= 0.0;
    const bool up = a >= 0.0;
    if (right && up) return Quadrant::q1;
    if (!right && up) return Quadrant::q2;
    if (!right) return Quadrant::q3;
    return Quadrant::q4;
}

std::array<double, 4> QuadrantStats::densities() const {
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) out[i] = density(static_cast<Quadrant>(i));
    return out;
}

double QuadrantStats::max_density() const {
    const auto d = densities();
    return *std::max_element(d.begin(), d.end());
}

QuadrantStats QuadrantStats::from_samples(std::span<const SampleRecord> samples) {
    QuadrantStats stats;
    for (const auto& s : samples) ++stats.counts[static_cast<std::size_t>(quadrant_of(s.valence, s.arousal))];
    return stats;
}

double max_quadrant_density(std::span<const SampleRecord> primary, std::string_view reference_label) {
    if (primary.empty()) throw ValidationError("primary dataset is empty");
    const auto reference = canonical_emotion_name(reference_label);
    double sum_v = 0.0;
    double sum_a = 0.0;
    std::size_t n = 0;
    for (const auto& s : primary) {
        if (s.label && canonical_emotion_name(*s.label) == reference) {
            sum_v += s.valence;
            sum_a += s.arousal;
            ++n;
        }
    }
    if (n == 0) throw ValidationError("reference label '" + std::string(reference_label) + "' absent from primary set");
    const auto q = quadrant_of(sum_v / static_cast<double>(n), sum_a / static_cast<double>(n));
    return QuadrantStats::from_samples(primary).density(q);
}

Admission admit_stream(QuadrantStats primary, double cap, std::span<const SampleRecord> candidates) {
    if (!(cap > 0.0)) throw ValidationError("density cap must be positive");
    Admission out{{}, primary};
    for (const auto& c : candidates) {
        const auto q = quadrant_of(c.valence, c.arousal);
        if (out.stats.density(q) < cap) {
            out.admitted.push_back(c);
            ++out.stats.counts[static_cast<std::size_t>(q)];
        }
    }
    return out;
}

std::vector<SampleRecord> rebalance(std::span<const SampleRecord> primary, std::span<const SampleRecord> auxiliary,
                                    double cap) {
    auto admission = admit_stream(QuadrantStats::from_samples(primary), cap, auxiliary);
    std::vector<SampleRecord> out(primary.begin(), primary.end());
    for (auto& r : out) r.source = SampleSource::primary;
    for (auto& r : admission.admitted) {
        r.source = SampleSource::auxiliary;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace emoblend::rebalance
