#pragma once

// Human annotation collection: slider scores over the seven scored emotions are
// normalized into an 8-class distribution (neutral recovered from the remainder),
// images are handed out in small random sessions under a per-image cap, and the
// collected distributions are compared against automatic labels.

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoblend/emotion_model.hpp"
#include "emoblend/random.hpp"
#include "emoblend/soft_label.hpp"

namespace emoblend::annotation {

inline constexpr std::array<std::string_view, 7> kScoredEmotions = {"angry", "contempt", "disgusted", "fearful",
                                                                    "happy", "sad",      "surprised"};
inline constexpr std::array<std::string_view, 8> kClasses = {"angry", "contempt", "disgusted", "fearful",
                                                             "happy", "sad",      "surprised", "neutral"};
inline constexpr std::size_t kNeutralIndex = 7;
inline constexpr std::size_t kMaxAnnotationsPerImage = 3;
inline constexpr std::size_t kMaxSessionImages = 4;

struct RawAnnotation {
    std::string image_id;
    std::map<std::string, double> scores;  // scored emotion -> [0, 1]; missing entries count as 0
    std::string annotator_id;
};

/// Distribution over kClasses.
struct NormalizedAnnotation {
    ProbLabel probs;
};

/// Canonicalize and validate the score map: keys must be scored emotions (aliases
/// allowed, neutral rejected), values in [0, 1].
std::array<double, 7> parse_scores(const std::map<std::string, double>& scores);

/// Sum >= 1: divide by the sum, neutral = 0. Sum < 1: keep scores, neutral = 1 - sum.
NormalizedAnnotation normalize_annotation(const RawAnnotation& raw);
NormalizedAnnotation normalize_scores(const std::array<double, 7>& scores);

struct AnnotationSession {
    std::string session_id;
    std::string annotator_id;
    std::vector<std::string> image_ids;
    std::int64_t created_at = 0;  // unix seconds
};

struct StoredAnnotation {
    std::uint64_t seq = 0;
    std::string session_id;
    std::string image_id;
    std::string annotator_id;
    std::array<double, 7> scores{};
    std::vector<double> normalized;  // over kClasses
};

enum class SubmitStatus { accepted, unknown_session, image_not_in_session, duplicate, image_saturated, invalid_scores };

std::string_view to_string(SubmitStatus s);

struct SubmitResult {
    SubmitStatus status = SubmitStatus::accepted;
    std::optional<NormalizedAnnotation> normalized;
    std::string message;
};

/// Thread-safe annotation state. With a data directory, every event is appended
/// to `annotations.jsonl` and a compact `state.json` snapshot is refreshed.
class AnnotationStore {
public:
    struct Options {
        std::filesystem::path data_dir;  // empty: in-memory only
        std::uint64_t seed = 0;
        std::chrono::seconds reservation_ttl{1800};
        std::size_t snapshot_every = 25;
        std::function<std::int64_t()> clock;  // defaults to system clock
    };

    AnnotationStore(std::vector<std::string> image_pool, Options options);
    ~AnnotationStore();

    AnnotationStore(const AnnotationStore&) = delete;
    AnnotationStore& operator=(const AnnotationStore&) = delete;

    /// 1-4 images drawn without replacement from the annotator's eligible pool;
    /// nullopt when the pool is exhausted.
    std::optional<AnnotationSession> assign_session(const std::string& annotator_id);

    SubmitResult submit(const std::string& session_id, const std::string& image_id,
                        const std::map<std::string, double>& scores);

    std::size_t annotation_count(const std::string& image_id) const;
    std::vector<StoredAnnotation> annotations() const;
    std::optional<AnnotationSession> session(const std::string& session_id) const;
    const std::vector<std::string>& image_pool() const noexcept { return pool_; }

    void write_snapshot() const;

private:
    struct Reservation {
        std::string annotator_id;
        std::string session_id;
        std::int64_t expires_at = 0;
    };

    std::int64_t now() const;
    bool eligible(const std::string& image_id, const std::string& annotator_id, std::int64_t now) const;
    void drop_expired(std::int64_t now);
    void apply_session(const AnnotationSession& s);
    void apply_annotation(const StoredAnnotation& a);
    void append_event(const nlohmann::json& event);
    void write_snapshot_locked() const;
    void load();
    std::string new_session_id();

    std::vector<std::string> pool_;
    Options options_;
    mutable std::mutex mutex_;
    Rng rng_;
    std::uint64_t seq_ = 0;
    mutable std::uint64_t events_since_snapshot_ = 0;
    std::unordered_map<std::string, std::size_t> counts_;
    std::set<std::pair<std::string, std::string>> annotated_;  // (annotator, image)
    std::unordered_map<std::string, std::vector<Reservation>> reservations_;  // image -> open reservations
    std::unordered_map<std::string, AnnotationSession> sessions_;
    std::vector<StoredAnnotation> annotations_;
    std::ofstream log_;
};

struct ImageAgreement {
    std::string image_id;
    std::size_t annotations = 0;
    std::vector<double> human;      // mean human distribution over kClasses
    std::vector<double> automatic;  // automatic label over kClasses
    double js = 0.0;
    double kl_human_auto = 0.0;
    double kl_auto_human = 0.0;
};

struct AgreementReport {
    std::vector<ImageAgreement> images;
    double mean_js = 0.0;
    double mean_kl_human_auto = 0.0;
    double mean_kl_auto_human = 0.0;
    std::vector<double> human_bars;  // per-class mean probability
    std::vector<double> auto_bars;
    double epsilon = 0.0;
};

/// Compare the mean human distribution of every annotated image (restricted to
/// `image_ids` when non-empty) with its automatic label. The automatic table's
/// classes must be exactly kClasses in any order.
AgreementReport agreement_report(std::span<const StoredAnnotation> annotations,
                                 const soft_label::LabelTable& automatic,
                                 std::span<const std::string> image_ids = {}, double epsilon = 1e-10);

nlohmann::ordered_json to_json(const AgreementReport& report);

}  // namespace emoblend::annotation
