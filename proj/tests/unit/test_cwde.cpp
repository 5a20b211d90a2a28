#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "emoblend/cwde.hpp"
#include "emoblend/error.hpp"
#include "test_util.hpp"

using namespace emoblend;
using testutil::dist;

namespace {

double pdf(double x, double mu, double sd) {
    const double z = (x - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

std::vector<EmotionDistribution> six() { return cwde::select_universals(testutil::universal_taxonomy()); }

std::vector<EmotionDistribution> separated() {
    std::vector<EmotionDistribution> out;
    const double centers[6] = {-0.9, -0.55, -0.2, 0.15, 0.5, 0.85};
    for (int i = 0; i < 6; ++i) {
        out.push_back(dist("e" + std::to_string(i), {centers[i], -centers[i], 0.1 * i - 0.2}, {0.01, 0.01, 0.2}));
    }
    return out;
}

// Straight-line mixture of per-emotion regressions, written independently.
double reference_dominance(double v, double a, const std::vector<EmotionDistribution>& es,
                           const std::vector<double>& prior) {
    std::vector<double> lik(es.size());
    double total = 0.0;
    for (std::size_t i = 0; i < es.size(); ++i) {
        lik[i] = prior[i] * pdf(v, es[i].mean().valence, es[i].sigma().valence) *
                 pdf(a, es[i].mean().arousal, es[i].sigma().arousal);
        total += lik[i];
    }
    double d = 0.0;
    for (std::size_t i = 0; i < es.size(); ++i) {
        const auto r = es[i].rho_or_zero();
        const auto& s = es[i].sigma();
        const auto& m = es[i].mean();
        const double b1 = s.dominance / s.valence * (r.vd - r.va * r.ad) / (1 - r.va * r.va);
        const double b2 = s.dominance / s.arousal * (r.ad - r.va * r.vd) / (1 - r.va * r.va);
        const double b0 = m.dominance - b1 * m.valence - b2 * m.arousal;
        d += lik[i] / total * (b0 + b1 * v + b2 * a);
    }
    return std::clamp(d, -1.0, 1.0);
}

}  // namespace

TEST(VaLikelihood, AtMean) {
    const auto e = dist("x", {0.2, -0.3, 0.1}, {0.25, 0.4, 0.3});
    EXPECT_NEAR(cwde::va_likelihood(0.2, -0.3, e), 1.0 / (2 * std::numbers::pi * 0.25 * 0.4), 1e-12);
}

TEST(VaLikelihood, OneSigmaOffset) {
    const auto e = dist("x", {0.2, -0.3, 0.1}, {0.25, 0.4, 0.3});
    EXPECT_NEAR(cwde::va_likelihood(0.45, -0.3, e), cwde::va_likelihood(0.2, -0.3, e) * std::exp(-0.5), 1e-12);
}

TEST(VaLikelihood, MatchesDirectFormula) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1), s(0.05, 0.6);
    for (int i = 0; i < 1000; ++i) {
        const auto e = dist("x", {u(rng), u(rng), u(rng)}, {s(rng), s(rng), s(rng)});
        const double v = u(rng), a = u(rng);
        const double direct = pdf(v, e.mean().valence, e.sigma().valence) * pdf(a, e.mean().arousal, e.sigma().arousal);
        EXPECT_NEAR(cwde::va_likelihood(v, a, e), direct, 1e-12 * std::max(1.0, direct));
    }
}

TEST(PosteriorWeights, SeparationLimit) {
    const auto es = separated();
    for (std::size_t i = 0; i < es.size(); ++i) {
        const auto w = cwde::posterior_weights(es[i].mean().valence, es[i].mean().arousal, es);
        EXPECT_GE(w.weights[i], 0.999);
    }
}

TEST(PosteriorWeights, IdenticalTermsShareWeight) {
    auto es = six();
    es[3] = dist("clone", es[1].mean(), es[1].sigma());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 200; ++i) {
        const auto w = cwde::posterior_weights(u(rng), u(rng), es);
        EXPECT_DOUBLE_EQ(w.weights[1], w.weights[3]);
    }
}

TEST(PosteriorWeights, MatchesDirectNormalization) {
    const auto es = six();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 2000; ++i) {
        const double v = u(rng), a = u(rng);
        std::vector<double> direct(es.size());
        double total = 0.0;
        for (std::size_t k = 0; k < es.size(); ++k) {
            direct[k] = pdf(v, es[k].mean().valence, es[k].sigma().valence) *
                        pdf(a, es[k].mean().arousal, es[k].sigma().arousal);
            total += direct[k];
        }
        const auto w = cwde::posterior_weights(v, a, es);
        double sum = 0.0;
        for (std::size_t k = 0; k < es.size(); ++k) {
            EXPECT_NEAR(w.weights[k], direct[k] / total, 1e-9);
            sum += w.weights[k];
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(PosteriorWeights, PermutationEquivariant) {
    auto es = six();
    auto rev = es;
    std::reverse(rev.begin(), rev.end());
    const auto w = cwde::posterior_weights(0.1, 0.4, es);
    const auto r = cwde::posterior_weights(0.1, 0.4, rev);
    for (std::size_t k = 0; k < es.size(); ++k) EXPECT_NEAR(w.weights[k], r.weights[es.size() - 1 - k], 1e-15);
}

TEST(PosteriorWeights, FarFromEverythingStillNormalized) {
    const auto es = separated();
    const auto w = cwde::posterior_weights(1.0, 1.0, es);
    double s = 0.0;
    for (double x : w.weights) {
        EXPECT_TRUE(std::isfinite(x));
        s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST(Regression, UncorrelatedCollapsesToMean) {
    const auto c = cwde::regression_for(dist("x", {0.3, 0.2, -0.4}, {0.2, 0.3, 0.25}));
    EXPECT_EQ(c.beta1, 0.0);
    EXPECT_EQ(c.beta2, 0.0);
    EXPECT_EQ(c.beta0, -0.4);
}

TEST(Regression, OnlyVdCorrelation) {
    const EmotionDistribution e("x", {0.3, 0.2, -0.4}, {0.2, 0.3, 0.25}, Correlations{0.0, 0.6, 0.0});
    const auto c = cwde::regression_for(e);
    EXPECT_DOUBLE_EQ(c.beta1, 0.25 / 0.2 * 0.6);
    EXPECT_EQ(c.beta2, 0.0);
    EXPECT_DOUBLE_EQ(c.beta0, -0.4 - c.beta1 * 0.3);
}

TEST(Regression, SingularCorrelationRejected) {
    EXPECT_THROW(EmotionDistribution("x", {0, 0, 0}, {0.2, 0.2, 0.2}, Correlations{1.0, 0.0, 0.0}), ValidationError);
}

TEST(Regression, MatchesLeastSquaresOnSamples) {
    struct Case {
        Vad mu, sd;
        Correlations rho;
    };
    const Case cases[] = {
        {{0.1, -0.2, 0.3}, {0.3, 0.25, 0.35}, {0.3, 0.5, -0.2}},
        {{-0.4, 0.5, 0.0}, {0.2, 0.4, 0.3}, {-0.4, 0.2, 0.6}},
        {{0.6, 0.1, -0.3}, {0.35, 0.2, 0.25}, {0.0, -0.5, 0.0}},
    };
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    for (const auto& c : cases) {
        const EmotionDistribution e("x", c.mu, c.sd, c.rho);
        const auto beta = cwde::regression_for(e);
        // Cholesky of the correlation matrix
        const double l00 = 1, l10 = c.rho.va, l11 = std::sqrt(1 - l10 * l10);
        const double l20 = c.rho.vd, l21 = (c.rho.ad - l20 * l10) / l11;
        const double l22 = std::sqrt(1 - l20 * l20 - l21 * l21);
        // normal equations for d = b0 + b1 v + b2 a
        double s[3][3] = {}, t[3] = {};
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const double z0 = n01(rng), z1 = n01(rng), z2 = n01(rng);
            const double v = c.mu.valence + c.sd.valence * (l00 * z0);
            const double a = c.mu.arousal + c.sd.arousal * (l10 * z0 + l11 * z1);
            const double d = c.mu.dominance + c.sd.dominance * (l20 * z0 + l21 * z1 + l22 * z2);
            const double x[3] = {1.0, v, a};
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) s[r][k] += x[r] * x[k];
                t[r] += x[r] * d;
            }
        }
        // Gaussian elimination
        for (int p = 0; p < 3; ++p) {
            for (int r = p + 1; r < 3; ++r) {
                const double f = s[r][p] / s[p][p];
                for (int k = p; k < 3; ++k) s[r][k] -= f * s[p][k];
                t[r] -= f * t[p];
            }
        }
        double b[3];
        for (int r = 2; r >= 0; --r) {
            double acc = t[r];
            for (int k = r + 1; k < 3; ++k) acc -= s[r][k] * b[k];
            b[r] = acc / s[r][r];
        }
        EXPECT_NEAR(beta.beta0, b[0], 1e-2);
        EXPECT_NEAR(beta.beta1, b[1], 1e-2);
        EXPECT_NEAR(beta.beta2, b[2], 1e-2);
    }
}

TEST(Dominance, WellSeparatedMeanRecoversMuD) {
    const auto es = separated();
    const cwde::DominanceEstimator est(es);
    for (const auto& e : es) {
        EXPECT_NEAR(est.estimate(e.mean().valence, e.mean().arousal), e.mean().dominance, 1e-3);
    }
}

TEST(Dominance, ConstantMixture) {
    auto es = six();
    for (auto& e : es) e = dist(e.name(), {e.mean().valence, e.mean().arousal, 0.3}, e.sigma());
    const cwde::DominanceEstimator est(es);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 500; ++i) EXPECT_NEAR(est.estimate(u(rng), u(rng)), 0.3, 1e-12);
}

TEST(Dominance, MatchesIndependentFormula) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1), s(0.1, 0.5), r(-0.6, 0.6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EmotionDistribution> es;
        for (int i = 0; i < 6; ++i) {
            es.emplace_back("e" + std::to_string(i), Vad{u(rng), u(rng), 0.5 * u(rng)}, Vad{s(rng), s(rng), s(rng)},
                            Correlations{r(rng), r(rng), r(rng)});
        }
        bool valid = true;
        for (const auto& e : es) {
            const auto c = e.rho_or_zero();
            valid = valid && (1 - c.va * c.va - c.vd * c.vd - c.ad * c.ad + 2 * c.va * c.vd * c.ad) > 0;
        }
        if (!valid) continue;
        const cwde::DominanceEstimator est(es, 0.7);
        for (int i = 0; i < 20; ++i) {
            const double v = u(rng), a = u(rng);
            const std::vector<double> flat(6, 1.0 / 6.0);
            EXPECT_NEAR(est.estimate(v, a), reference_dominance(v, a, es, flat), 1e-9);
            std::vector<double> prior(6, 0.3 / 5.0);
            prior[2] = 0.7;
            EXPECT_NEAR(est.estimate(v, a, std::string_view("e2")), reference_dominance(v, a, es, prior), 1e-9);
        }
    }
}

TEST(Dominance, AffineInValenceForFrozenWeights) {
    std::vector<EmotionDistribution> es;
    const auto base = six();
    for (std::size_t i = 0; i < base.size(); ++i) {
        es.emplace_back(base[i].name(), base[i].mean(), base[i].sigma(),
                        Correlations{0.1, 0.2 + 0.05 * static_cast<double>(i), -0.1});
    }
    const auto w = cwde::posterior_weights(0.2, 0.1, es);
    double slope = 0.0, at = 0.0, shifted = 0.0;
    const double delta = 0.01;
    for (std::size_t i = 0; i < es.size(); ++i) {
        const auto c = cwde::regression_for(es[i]);
        slope += w.weights[i] * c.beta1;
        at += w.weights[i] * c(0.2, 0.1);
        shifted += w.weights[i] * c(0.2 + delta, 0.1);
    }
    EXPECT_NEAR(shifted - at, delta * slope, 1e-9);
}

TEST(Dominance, PriorStrengthMovesTowardLabelRegression) {
    std::vector<EmotionDistribution> es;
    for (const auto& e : six()) es.emplace_back(e.name(), e.mean(), e.sigma(), Correlations{0.2, 0.3, -0.2});
    const double v = 0.0, a = 0.3;
    const auto idx = 3;  // happy after dropping contempt/neutral
    ASSERT_EQ(es[idx].name(), "happy");
    const double target = cwde::regression_for(es[idx])(v, a);
    double previous = std::numeric_limits<double>::infinity();
    for (double strength = 1.0 / 6.0; strength < 0.999; strength += 0.05) {
        const cwde::DominanceEstimator est(es, strength);
        const double gap = std::abs(est.estimate(v, a, std::string_view("happy")) - target);
        EXPECT_LE(gap, previous + 1e-15);
        previous = gap;
    }
}

TEST(Dominance, UnknownLabelAndBadStrength) {
    const cwde::DominanceEstimator est(six());
    EXPECT_THROW(est.estimate(0.0, 0.0, std::string_view("bored")), ValidationError);
    EXPECT_NO_THROW(est.estimate_lenient(0.0, 0.0, std::string_view("bored")));
    EXPECT_DOUBLE_EQ(est.estimate_lenient(0.1, 0.2, std::string_view("bored")), est.estimate(0.1, 0.2));
    EXPECT_DOUBLE_EQ(est.estimate(0.1, 0.2, std::string_view("Happiness")), est.estimate(0.1, 0.2, std::string_view("happy")));
    EXPECT_THROW(cwde::DominanceEstimator(six(), 1.0), ValidationError);
    EXPECT_THROW(cwde::DominanceEstimator(six(), 0.1), ValidationError);
    auto five = six();
    five.pop_back();
    EXPECT_THROW(cwde::DominanceEstimator{five}, ValidationError);
}

TEST(Dominance, ClampCountsExtrapolation) {
    std::vector<EmotionDistribution> es;
    for (const auto& e : six()) {
        es.emplace_back(e.name(), Vad{e.mean().valence, e.mean().arousal, 0.9}, Vad{0.1, 0.1, 0.9},
                        Correlations{0.0, 0.9, 0.0});
    }
    const cwde::DominanceEstimator est(es);
    const double d = est.estimate(1.0, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_GE(d, -1.0);
    EXPECT_GT(est.clamp_count(), 0u);
}

TEST(Dominance, SelectUniversalsDropsNeutralAndContempt) {
    const auto es = six();
    ASSERT_EQ(es.size(), 6u);
    for (const auto& e : es) {
        EXPECT_NE(e.name(), "neutral");
        EXPECT_NE(e.name(), "contempt");
    }
}

TEST(Dominance, FillOnlyMissing) {
    const cwde::DominanceEstimator est(six());
    std::vector<SampleRecord> rs{{"a", 0.8, 0.5, std::nullopt, "happy", SampleSource::primary},
                                 {"b", 0.1, 0.1, 0.42, std::nullopt, SampleSource::primary},
                                 {"c", -0.6, 0.5, std::nullopt, "contempt", SampleSource::primary}};
    EXPECT_EQ(est.fill(rs), 2u);
    EXPECT_DOUBLE_EQ(*rs[1].dominance, 0.42);
    EXPECT_DOUBLE_EQ(*rs[0].dominance, est.estimate(0.8, 0.5, std::string_view("happy")));
    EXPECT_DOUBLE_EQ(*rs[2].dominance, est.estimate(-0.6, 0.5));
}
