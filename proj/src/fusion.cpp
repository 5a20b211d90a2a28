#include "emoblend/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "emoblend/error.hpp"
#include "emoblend/gaussian.hpp"
#include "emoblend/kd_tree.hpp"
#include "emoblend/parallel.hpp"
#include "emoblend/random.hpp"

namespace emoblend::fusion {

namespace {

// Diagonal Gaussian in a form cheap to evaluate: log p(x) = c - 0.5 * sum(((x - mu) * inv)^2).
struct DiagGaussian {
    std::array<double, 3> mu{};
    std::array<double, 3> sd{};
    std::array<double, 3> inv{};
    double log_norm = 0.0;

    explicit DiagGaussian(const EmotionDistribution& e) {
        for (std::size_t k = 0; k < 3; ++k) {
            mu[k] = e.mean()[k];
            sd[k] = e.sigma()[k];
            inv[k] = 1.0 / sd[k];
            log_norm -= std::log(sd[k]) + kLogSqrtTwoPi;
        }
    }

    double log_pdf(const std::array<double, 3>& x) const {
        double q = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double z = (x[k] - mu[k]) * inv[k];
            q += z * z;
        }
        return log_norm - 0.5 * q;
    }
};

auto param_tuple(const EmotionDistribution& e) {
    const auto& m = e.mean();
    const auto& s = e.sigma();
    return std::make_tuple(e.name(), m.valence, m.arousal, m.dominance, s.valence, s.arousal, s.dominance);
}

struct Term {
    std::string key;  // lineage, unique within a run
    EmotionDistribution dist;
    std::size_t order = 0;
    bool fused = false;
};

using KeyPair = std::pair<std::string, std::string>;

KeyPair ordered(const std::string& a, const std::string& b) { return a < b ? KeyPair{a, b} : KeyPair{b, a}; }

}  // namespace

void FusionConfig::validate() const {
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("fusion threshold t must lie in (0, 1)");
    if (mc_samples < 10000) throw ValidationError("mc_samples must be at least 10000");
    if (neighbors < 1) throw ValidationError("neighbors must be at least 1");
    if (fuse_samples < 2) throw ValidationError("fuse_samples must be at least 2");
}

double intersection_volume(const EmotionDistribution& e_i, const EmotionDistribution& e_j,
                           std::size_t mc_samples, std::uint64_t seed) {
    if (mc_samples == 0) throw ValidationError("mc_samples must be positive");
    // Canonical order makes the estimate exactly symmetric.
    const bool swap = param_tuple(e_j) < param_tuple(e_i);
    const DiagGaussian g0(swap ? e_j : e_i);
    const DiagGaussian g1(swap ? e_i : e_j);

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // min(p, q) / ((p + q) / 2) = 2 / (1 + exp(|log p - log q|))
    auto accumulate = [&](const DiagGaussian& src, std::size_t count) {
        double sum = 0.0;
        std::array<double, 3> x{};
        for (std::size_t s = 0; s < count; ++s) {
            for (std::size_t k = 0; k < 3; ++k) x[k] = src.mu[k] + src.sd[k] * normal(rng);
            const double gap = std::abs(g0.log_pdf(x) - g1.log_pdf(x));
            sum += 2.0 / (1.0 + std::exp(gap));
        }
        return sum;
    };
    const std::size_t first = (mc_samples + 1) / 2;
    const std::size_t second = mc_samples - first;
    const double total = accumulate(g0, first) + accumulate(g1, second);
    return total / static_cast<double>(mc_samples);
}

double nim(const EmotionDistribution& e_i, const EmotionDistribution& e_j, std::size_t mc_samples,
           std::uint64_t seed) {
    constexpr double volume_i = 1.0;
    constexpr double volume_j = 1.0;
    return intersection_volume(e_i, e_j, mc_samples, seed) / std::min(volume_i, volume_j);
}

std::uint64_t pair_seed(std::uint64_t base, const std::string& key_a, const std::string& key_b) {
    const auto [lo, hi] = ordered(key_a, key_b);
    return derive_seed(base, {"nim", lo, hi});
}

double nim(const EmotionDistribution& e_i, const EmotionDistribution& e_j, const FusionConfig& config) {
    return nim(e_i, e_j, config.mc_samples, pair_seed(config.seed, e_i.name(), e_j.name()));
}

EmotionDistribution fuse_pair(const EmotionDistribution& e_i, const EmotionDistribution& e_j,
                              std::size_t fuse_samples, std::uint64_t seed) {
    if (fuse_samples < 1) throw ValidationError("fuse_samples must be positive");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::array<double, 3> sum{};
    std::array<double, 3> sum_sq{};
    std::array<std::vector<double>, 3> pool;
    for (auto& axis : pool) axis.reserve(2 * fuse_samples);
    for (const auto* e : {&e_i, &e_j}) {
        for (std::size_t s = 0; s < fuse_samples; ++s) {
            for (std::size_t k = 0; k < 3; ++k) pool[k].push_back(e->mean()[k] + e->sigma()[k] * normal(rng));
        }
    }
    const double n = static_cast<double>(2 * fuse_samples);
    std::array<double, 3> mean{};
    std::array<double, 3> sd{};
    for (std::size_t k = 0; k < 3; ++k) {
        for (double x : pool[k]) sum[k] += x;
        mean[k] = sum[k] / n;
        for (double x : pool[k]) sum_sq[k] += (x - mean[k]) * (x - mean[k]);
        sd[k] = std::sqrt(sum_sq[k] / (n - 1.0));
    }
    auto clamp_unit = [](double x) { return std::clamp(x, -1.0, 1.0); };
    return EmotionDistribution(std::min(e_i.name(), e_j.name()),
                               Vad{clamp_unit(mean[0]), clamp_unit(mean[1]), clamp_unit(mean[2])},
                               Vad{sd[0], sd[1], sd[2]}, std::nullopt, false);
}

FusionResult fuse_taxonomy(const Taxonomy& lexicon, const FusionConfig& config) {
    config.validate();
    std::vector<EmotionDistribution> universals;
    std::vector<Term> active;
    for (std::size_t i = 0; i < lexicon.size(); ++i) {
        const auto& e = lexicon[i];
        if (e.is_universal()) universals.push_back(e);
        else active.push_back(Term{e.name(), e, i, false});
    }
    if (universals.empty()) throw ValidationError("lexicon has no terms flagged universal");

    FusionTrace trace;
    std::map<KeyPair, double> cache;
    std::size_t next_order = lexicon.size();

    // Fill the cache for every listed pair of active indices.
    auto evaluate = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        std::vector<std::pair<std::size_t, std::size_t>> missing;
        for (const auto& p : pairs) {
            if (!cache.count(ordered(active[p.first].key, active[p.second].key))) missing.push_back(p);
        }
        std::vector<double> values(missing.size());
        parallel_for(missing.size(), config.threads, [&](std::size_t m) {
            const Term& a = active[missing[m].first];
            const Term& b = active[missing[m].second];
            values[m] = nim(a.dist, b.dist, config.mc_samples, pair_seed(config.seed, a.key, b.key));
        });
        for (std::size_t m = 0; m < missing.size(); ++m) {
            cache[ordered(active[missing[m].first].key, active[missing[m].second].key)] = values[m];
        }
        trace.nim_evaluations += missing.size();
    };

    struct Best {
        std::size_t i = 0;
        std::size_t j = 0;
        double nim = -1.0;
        KeyPair keys;
    };
    auto pick = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        std::optional<Best> best;
        for (const auto& [i, j] : pairs) {
            auto keys = ordered(active[i].key, active[j].key);
            const double v = cache.at(keys);
            if (!(v > config.t)) continue;
            if (!best || v > best->nim || (v == best->nim && keys < best->keys)) best = Best{i, j, v, keys};
        }
        return best;
    };

    while (active.size() >= 2) {
        std::vector<KdTree3::Point> points;
        points.reserve(active.size());
        for (const auto& term : active) {
            const auto& m = term.dist.mean();
            points.push_back({m.valence, m.arousal, m.dominance});
        }
        const KdTree3 tree(points);
        std::set<std::pair<std::size_t, std::size_t>> shortlist;
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j : tree.nearest(points[i], config.neighbors, i)) {
                shortlist.insert({std::min(i, j), std::max(i, j)});
            }
        }
        std::vector<std::pair<std::size_t, std::size_t>> pairs(shortlist.begin(), shortlist.end());
        evaluate(pairs);
        auto best = pick(pairs);
        bool from_shortlist = true;
        if (!best) {
            // Verification pass: the neighbour shortlist can miss overlapping pairs.
            pairs.clear();
            for (std::size_t i = 0; i < active.size(); ++i) {
                for (std::size_t j = i + 1; j < active.size(); ++j) pairs.emplace_back(i, j);
            }
            evaluate(pairs);
            best = pick(pairs);
            from_shortlist = false;
        }
        if (!best) break;

        Term& a = active[best->i];
        Term& b = active[best->j];
        auto fused = fuse_pair(a.dist, b.dist, config.fuse_samples, derive_seed(config.seed, {"fuse", a.key, b.key}));
        trace.steps.push_back(FusionStep{a.dist.name(), b.dist.name(), best->nim, fused.name(), from_shortlist});
        Term merged{"(" + best->keys.first + "+" + best->keys.second + ")", std::move(fused), next_order++, true};
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best->j));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best->i));
        active.push_back(std::move(merged));
    }

    std::stable_sort(active.begin(), active.end(), [](const Term& x, const Term& y) {
        if (x.fused != y.fused) return !x.fused;
        return x.order < y.order;
    });
    std::vector<EmotionDistribution> out = std::move(universals);
    for (auto& term : active) out.push_back(std::move(term.dist));
    trace.final_count = out.size();
    return FusionResult{Taxonomy(std::move(out)), std::move(trace)};
}

std::vector<PairNim> pairwise_nims(const Taxonomy& taxonomy, std::size_t mc_samples, std::uint64_t seed,
                                   std::size_t threads) {
    std::vector<const EmotionDistribution*> terms;
    for (const auto& e : taxonomy.emotions()) {
        if (!e.is_universal()) terms.push_back(&e);
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        for (std::size_t j = i + 1; j < terms.size(); ++j) pairs.emplace_back(i, j);
    }
    std::vector<PairNim> out(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t p) {
        const auto& a = *terms[pairs[p].first];
        const auto& b = *terms[pairs[p].second];
        out[p] = PairNim{a.name(), b.name(), nim(a, b, mc_samples, pair_seed(seed, a.name(), b.name()))};
    });
    std::stable_sort(out.begin(), out.end(), [](const PairNim& x, const PairNim& y) { return x.nim > y.nim; });
    return out;
}

void write_trace_jsonl(const FusionTrace& trace, std::ostream& out) {
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto& s = trace.steps[i];
        nlohmann::ordered_json j;
        j["step"] = i + 1;
        j["parent_a"] = s.parent_a;
        j["parent_b"] = s.parent_b;
        j["nim"] = s.nim;
        j["new_name"] = s.new_name;
        j["from_shortlist"] = s.from_shortlist;
        out << j.dump() << '\n';
    }
}

}  // namespace emoblend::fusion
