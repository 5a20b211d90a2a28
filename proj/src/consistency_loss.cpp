#include "emoblend/consistency_loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "emoblend/csv.hpp"
#include "emoblend/error.hpp"
#include "emoblend/gaussian.hpp"
#include "emoblend/random.hpp"

namespace emoblend::loss {

namespace {

void check_mask(const ConflictMask& mask) {
    for (const auto& row : mask) {
        if (row.size() != mask.size()) throw DimensionError("conflict mask must be square");
    }
    if (mask.empty()) throw DimensionError("conflict mask is empty");
}

bool is_prior_pair(const ConflictMask& mask, std::size_t i, std::size_t j) {
    if (i == j) return false;
    return i < j ? mask[i][j] : mask[j][i];
}

void check_pair(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("size mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}

double sign(double x) { return x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; }

double effective_lambda(Variant v, double lambda) {
    if (v != Variant::regularized) return 0.0;
    if (!(lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
    return lambda;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::static_matrix: return "static";
        case Variant::guided: return "guided";
        case Variant::regularized: return "regularized";
    }
    return "?";
}

Variant parse_variant(std::string_view text) {
    if (text == "static" || text == "consistency") return Variant::static_matrix;
    if (text == "guided") return Variant::guided;
    if (text == "regularized") return Variant::regularized;
    throw ValidationError("unknown loss variant: " + std::string(text));
}

ConflictMatrix ConflictMatrix::static_from_mask(const ConflictMask& mask, double magnitude) {
    check_mask(mask);
    ConflictMatrix m{SquareMatrix(mask.size()), MatrixMode::static_matrix, mask};
    for (std::size_t i = 0; i < mask.size(); ++i) {
        for (std::size_t j = 0; j < mask.size(); ++j) m.w(i, j) = is_prior_pair(mask, i, j) ? magnitude : -magnitude;
    }
    return m;
}

ConflictMatrix ConflictMatrix::learnable_from_mask(const ConflictMask& mask, MatrixMode mode, double init) {
    auto m = static_from_mask(mask, init);
    m.mode = mode;
    return m;
}

ConflictMatrix ConflictMatrix::for_variant(Variant v, const ConflictMask& mask) {
    switch (v) {
        case Variant::static_matrix: return static_from_mask(mask);
        case Variant::guided: return learnable_from_mask(mask, MatrixMode::guided_learnable);
        case Variant::regularized: return learnable_from_mask(mask, MatrixMode::regularized_learnable);
    }
    return static_from_mask(mask);
}

double focal_loss(std::span<const double> pred, std::span<const double> target, double gamma,
                  std::span<const double> class_weights) {
    check_pair(pred.size(), target.size());
    if (!class_weights.empty()) check_pair(pred.size(), class_weights.size());
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be non-negative");
    double loss = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (target[k] == 0.0) continue;
        const double p = std::clamp(pred[k], kProbFloor, 1.0);
        const double w = class_weights.empty() ? 1.0 : class_weights[k];
        loss -= w * target[k] * std::pow(1.0 - p, gamma) * std::log(p);
    }
    return loss;
}

double consistency_term(std::span<const double> pred, const ConflictMatrix& w) {
    check_pair(pred.size(), w.n());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = i + 1; j < pred.size(); ++j) s += sigmoid(w.w(i, j)) * pred[i] * pred[j];
    }
    return s;
}

double sparsity_term(const ConflictMatrix& w) {
    const double n = static_cast<double>(w.n());
    if (n == 0.0) return 0.0;
    double s = 0.0;
    for (double x : w.w.data()) s += std::abs(x);
    return s / (n * n);
}

LossBreakdown total_loss(std::span<const double> pred, std::span<const double> target, const ConflictMatrix& w,
                         double gamma, double lambda, Variant variant, std::span<const double> class_weights) {
    LossBreakdown b;
    b.lambda = effective_lambda(variant, lambda);
    b.focal = focal_loss(pred, target, gamma, class_weights);
    b.consistency = consistency_term(pred, w);
    b.sparsity = sparsity_term(w);
    b.total = b.focal + b.consistency + b.lambda * b.sparsity;
    return b;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw DimensionError("empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - m);
        s += p[k];
    }
    for (double& x : p) x /= s;
    return p;
}

double total_loss_from_logits(std::span<const double> logits, std::span<const double> target,
                              const ConflictMatrix& w, double gamma, double lambda, Variant variant,
                              std::span<const double> class_weights) {
    const auto p = softmax(logits);
    return total_loss(p, target, w, gamma, lambda, variant, class_weights).total;
}

Gradients loss_gradients(std::span<const double> logits, std::span<const double> target, const ConflictMatrix& w,
                         double gamma, double lambda, Variant variant, std::span<const double> class_weights) {
    const std::size_t n = logits.size();
    check_pair(n, target.size());
    check_pair(n, w.n());
    const auto p = softmax(logits);
    Gradients g;
    g.loss = total_loss(p, target, w, gamma, lambda, variant, class_weights);

    // dL/dp
    std::vector<double> dp(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (target[k] == 0.0 || p[k] < kProbFloor) continue;
        const double wk = class_weights.empty() ? 1.0 : class_weights[k];
        const double q = 1.0 - p[k];
        double d = std::pow(q, gamma) / p[k];
        if (gamma != 0.0 && q > 0.0) d -= gamma * std::pow(q, gamma - 1.0) * std::log(p[k]);
        dp[k] = -wk * target[k] * d;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = sigmoid(w.w(i, j));
            dp[i] += s * p[j];
            dp[j] += s * p[i];
        }
    }
    // Softmax Jacobian: dz_k = p_k (dp_k - sum_j p_j dp_j)
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += p[k] * dp[k];
    g.logits.resize(n);
    for (std::size_t k = 0; k < n; ++k) g.logits[k] = p[k] * (dp[k] - mean);

    g.w = SquareMatrix(n);
    if (variant == Variant::static_matrix) return g;
    const double l1 = g.loss.lambda / static_cast<double>(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double d = l1 * sign(w.w(i, j));
            if (i < j) {
                const double s = sigmoid(w.w(i, j));
                d += s * (1.0 - s) * p[i] * p[j];
            }
            g.w(i, j) = d;
        }
    }
    return g;
}

ConflictPairs derive_conflict_pairs(const Taxonomy& taxonomy, double min_abs_valence) {
    ConflictPairs out;
    for (std::size_t i = 0; i < taxonomy.size(); ++i) {
        for (std::size_t j = i + 1; j < taxonomy.size(); ++j) {
            const auto& a = taxonomy[i];
            const auto& b = taxonomy[j];
            if (a.name() == "neutral" || b.name() == "neutral") continue;
            const double va = a.mean().valence;
            const double vb = b.mean().valence;
            if (std::abs(va) >= min_abs_valence && std::abs(vb) >= min_abs_valence && va * vb < 0.0) {
                out.emplace_back(a.name(), b.name());
            }
        }
    }
    return out;
}

ConflictMask mask_from_pairs(const std::vector<std::string>& class_names, const ConflictPairs& pairs) {
    const std::size_t n = class_names.size();
    ConflictMask mask(n, std::vector<bool>(n, false));
    auto index = [&](const std::string& name) {
        const auto it = std::find(class_names.begin(), class_names.end(), name);
        if (it == class_names.end()) throw ValidationError("conflict pair names unknown class: " + name);
        return static_cast<std::size_t>(it - class_names.begin());
    };
    for (const auto& [a, b] : pairs) {
        const auto i = index(a);
        const auto j = index(b);
        if (i == j) throw ValidationError("an emotion cannot conflict with itself: " + a);
        mask[std::min(i, j)][std::max(i, j)] = true;
    }
    return mask;
}

ConflictPairs read_conflict_pairs(std::istream& in) {
    const auto doc = csv::read(in);
    if (doc.header != std::vector<std::string>{"emotion_a", "emotion_b"}) {
        throw ParseError("conflict file header must be emotion_a,emotion_b", 1);
    }
    ConflictPairs out;
    for (const auto& row : doc.rows) out.emplace_back(row.fields[0], row.fields[1]);
    return out;
}

ConflictPairs load_conflict_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_conflict_pairs(in);
}

void write_conflict_pairs(const ConflictPairs& pairs, std::ostream& out) {
    csv::write_row(out, {"emotion_a", "emotion_b"});
    for (const auto& [a, b] : pairs) csv::write_row(out, {a, b});
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    check_pair(analytic.size(), numeric.size());
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    const double scale = std::sqrt(std::max(na, nn));
    if (scale == 0.0) return 0.0;
    return std::sqrt(diff) / scale;
}

GradientCheckSummary check_gradients(const GradientCheckConfig& config) {
    if (config.n < 2) throw ValidationError("gradient check needs n >= 2");
    GradientCheckSummary summary{config.variant, config.n, config.trials};
    Rng rng(derive_seed(config.seed, {"gradient-check", to_string(config.variant), std::to_string(config.n)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::gamma_distribution<double> dirichlet(0.7, 1.0);
    const std::size_t n = config.n;
    const double h = config.step;

    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        std::vector<double> logits(n);
        for (double& z : logits) z = 1.5 * normal(rng);
        std::vector<double> target(n);
        double sum = 0.0;
        for (double& t : target) sum += (t = dirichlet(rng) + 1e-6);
        for (double& t : target) t /= sum;
        const double gamma = 3.0 * unit(rng);
        const double lambda = config.variant == Variant::regularized ? 0.001 + 0.1 * unit(rng) : 0.0;

        ConflictMask mask(n, std::vector<bool>(n, false));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) mask[i][j] = unit(rng) < 0.3;
        }
        auto w = ConflictMatrix::for_variant(config.variant, mask);
        if (config.variant != Variant::static_matrix) {
            // Learned matrices drift from their initialisation; keep |W| away from the L1 kink.
            for (double& x : w.w.data()) {
                do {
                    x += 1.5 * normal(rng);
                } while (std::abs(x) < 1e-3);
            }
        }

        const auto g = loss_gradients(logits, target, w, gamma, lambda, config.variant);
        auto eval = [&](std::span<const double> z, const ConflictMatrix& m) {
            return total_loss_from_logits(z, target, m, gamma, lambda, config.variant);
        };

        std::vector<double> fd_logits(n);
        for (std::size_t k = 0; k < n; ++k) {
            auto zp = logits;
            auto zm = logits;
            zp[k] += h;
            zm[k] -= h;
            fd_logits[k] = (eval(zp, w) - eval(zm, w)) / (2.0 * h);
        }
        const double logit_error = relative_error(g.logits, fd_logits);
        summary.worst_logit_error = std::max(summary.worst_logit_error, logit_error);
        bool ok = logit_error <= config.tolerance;

        if (config.variant == Variant::static_matrix) {
            const auto d = g.w.data();
            if (std::any_of(d.begin(), d.end(), [](double x) { return x != 0.0; })) summary.static_w_gradient_zero = false;
        } else {
            std::vector<double> fd_w(n * n);
            for (std::size_t idx = 0; idx < n * n; ++idx) {
                auto wp = w;
                auto wm = w;
                wp.w.data()[idx] += h;
                wm.w.data()[idx] -= h;
                fd_w[idx] = (eval(logits, wp) - eval(logits, wm)) / (2.0 * h);
            }
            const double w_error = relative_error(g.w.data(), fd_w);
            summary.worst_w_error = std::max(summary.worst_w_error, w_error);
            ok = ok && w_error <= config.tolerance;
        }
        if (!ok) ++summary.failures;
    }
    return summary;
}

}  // namespace emoblend::loss
