#pragma once

// Emotion consistency loss: soft-target focal loss plus a conflict-matrix
// penalty on jointly activated conflicting classes, plus an L1 sparsity term on
// the matrix. Gradients are analytic, through the softmax.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emoblend/emotion_model.hpp"

namespace emoblend::loss {

enum class Variant { static_matrix, guided, regularized };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

inline constexpr double kStaticMagnitude = 5.0;
inline constexpr double kLearnableInit = 2.0;
inline constexpr double kDefaultGamma = 2.0;
inline constexpr double kDefaultLambda = 0.01;
inline constexpr double kProbFloor = 1e-12;

/// n x n square matrix, row-major.
class SquareMatrix {
public:
    SquareMatrix() = default;
    explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

    std::size_t n() const noexcept { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// Boolean mask of conflicting pairs; only the strict upper triangle is meaningful.
using ConflictMask = std::vector<std::vector<bool>>;

enum class MatrixMode { static_matrix, guided_learnable, regularized_learnable };

/// Pairwise conflict weights W. The consistency term reads only i < j.
struct ConflictMatrix {
    SquareMatrix w;
    MatrixMode mode = MatrixMode::static_matrix;
    ConflictMask prior_mask;

    std::size_t n() const noexcept { return w.n(); }

    /// +magnitude on prior pairs, -magnitude everywhere else, frozen.
    static ConflictMatrix static_from_mask(const ConflictMask& mask, double magnitude = kStaticMagnitude);
    /// Learnable matrix initialised at +init on prior pairs, -init elsewhere.
    static ConflictMatrix learnable_from_mask(const ConflictMask& mask, MatrixMode mode, double init = kLearnableInit);
    static ConflictMatrix for_variant(Variant v, const ConflictMask& mask);
};

struct LossBreakdown {
    double focal = 0.0;
    double consistency = 0.0;
    double sparsity = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// -sum_k w_k t_k (1 - p_k)^gamma ln p_k, p clamped to [1e-12, 1].
double focal_loss(std::span<const double> pred, std::span<const double> target, double gamma,
                  std::span<const double> class_weights = {});

/// sum_{i<j} sigmoid(W_ij) p_i p_j
double consistency_term(std::span<const double> pred, const ConflictMatrix& w);

/// (1 / n^2) sum_ij |W_ij|
double sparsity_term(const ConflictMatrix& w);

/// Static and guided variants run with lambda = 0.
LossBreakdown total_loss(std::span<const double> pred, std::span<const double> target, const ConflictMatrix& w,
                         double gamma, double lambda, Variant variant, std::span<const double> class_weights = {});

std::vector<double> softmax(std::span<const double> logits);

struct Gradients {
    LossBreakdown loss;
    std::vector<double> logits;  // dL/dz
    SquareMatrix w;              // dL/dW, zero for the static variant
};

Gradients loss_gradients(std::span<const double> logits, std::span<const double> target, const ConflictMatrix& w,
                         double gamma, double lambda, Variant variant, std::span<const double> class_weights = {});

/// Total loss as a function of logits (for finite differences and tooling).
double total_loss_from_logits(std::span<const double> logits, std::span<const double> target,
                              const ConflictMatrix& w, double gamma, double lambda, Variant variant,
                              std::span<const double> class_weights = {});

// Conflict priors -----------------------------------------------------------

using ConflictPairs = std::vector<std::pair<std::string, std::string>>;

/// Pairs whose mean valences have opposite signs and both |mu_V| >= min_abs_valence.
/// Neutral never conflicts.
ConflictPairs derive_conflict_pairs(const Taxonomy& taxonomy, double min_abs_valence = 0.3);
ConflictMask mask_from_pairs(const std::vector<std::string>& class_names, const ConflictPairs& pairs);

/// CSV with header `emotion_a,emotion_b`.
ConflictPairs read_conflict_pairs(std::istream& in);
ConflictPairs load_conflict_pairs(const std::string& path);
void write_conflict_pairs(const ConflictPairs& pairs, std::ostream& out);

// Gradient verification -----------------------------------------------------

struct GradientCheckConfig {
    Variant variant = Variant::static_matrix;
    std::size_t n = 8;
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
};

struct GradientCheckSummary {
    Variant variant = Variant::static_matrix;
    std::size_t n = 0;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double worst_logit_error = 0.0;
    double worst_w_error = 0.0;
    bool static_w_gradient_zero = true;

    bool passed() const { return failures == 0 && static_w_gradient_zero; }
};

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Random instances (logits, soft targets, gamma, W, lambda) compared against
/// central finite differences.
GradientCheckSummary check_gradients(const GradientCheckConfig& config);

}  // namespace emoblend::loss
