#include "emoblend/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "emoblend/error.hpp"
#include "emoblend/metrics.hpp"

namespace emoblend::annotation {

using nlohmann::json;

namespace {

std::optional<std::size_t> scored_index(std::string_view name) {
    const auto canonical = canonical_emotion_name(name);
    for (std::size_t i = 0; i < kScoredEmotions.size(); ++i) {
        if (kScoredEmotions[i] == canonical) return i;
    }
    return std::nullopt;
}

json scores_json(const std::array<double, 7>& scores) {
    json j = json::object();
    for (std::size_t i = 0; i < scores.size(); ++i) j[std::string(kScoredEmotions[i])] = scores[i];
    return j;
}

std::array<double, 7> scores_from_json(const json& j) {
    std::map<std::string, double> m;
    for (const auto& [k, v] : j.items()) m[k] = v.get<double>();
    return parse_scores(m);
}

json session_json(const AnnotationSession& s) {
    return json{{"session_id", s.session_id},
                {"annotator_id", s.annotator_id},
                {"image_ids", s.image_ids},
                {"created_at", s.created_at}};
}

AnnotationSession session_from_json(const json& j) {
    return AnnotationSession{j.at("session_id").get<std::string>(), j.at("annotator_id").get<std::string>(),
                             j.at("image_ids").get<std::vector<std::string>>(), j.at("created_at").get<std::int64_t>()};
}

json annotation_json(const StoredAnnotation& a) {
    return json{{"seq", a.seq},
                {"session_id", a.session_id},
                {"image_id", a.image_id},
                {"annotator_id", a.annotator_id},
                {"scores", scores_json(a.scores)},
                {"normalized", a.normalized}};
}

StoredAnnotation annotation_from_json(const json& j) {
    StoredAnnotation a;
    a.seq = j.at("seq").get<std::uint64_t>();
    a.session_id = j.at("session_id").get<std::string>();
    a.image_id = j.at("image_id").get<std::string>();
    a.annotator_id = j.at("annotator_id").get<std::string>();
    a.scores = scores_from_json(j.at("scores"));
    a.normalized = j.at("normalized").get<std::vector<double>>();
    return a;
}

}  // namespace

std::array<double, 7> parse_scores(const std::map<std::string, double>& scores) {
    std::array<double, 7> out{};
    std::array<bool, 7> seen{};
    for (const auto& [name, value] : scores) {
        const auto idx = scored_index(name);
        if (!idx) throw ValidationError("not a scored emotion: " + name);
        if (seen[*idx]) throw ValidationError("emotion scored twice: " + name);
        if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("score for " + name + " outside [0, 1]");
        seen[*idx] = true;
        out[*idx] = value;
    }
    return out;
}

NormalizedAnnotation normalize_scores(const std::array<double, 7>& scores) {
    double sum = 0.0;
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("score outside [0, 1]");
        sum += s;
    }
    std::vector<double> probs(kClasses.size(), 0.0);
    if (sum >= 1.0) {
        for (std::size_t i = 0; i < scores.size(); ++i) probs[i] = scores[i] / sum;
    } else {
        std::copy(scores.begin(), scores.end(), probs.begin());
        probs[kNeutralIndex] = 1.0 - sum;
    }
    return NormalizedAnnotation{ProbLabel(std::move(probs))};
}

NormalizedAnnotation normalize_annotation(const RawAnnotation& raw) { return normalize_scores(parse_scores(raw.scores)); }

std::string_view to_string(SubmitStatus s) {
    switch (s) {
        case SubmitStatus::accepted: return "ok";
        case SubmitStatus::unknown_session: return "unknown_session";
        case SubmitStatus::image_not_in_session: return "image_not_in_session";
        case SubmitStatus::duplicate: return "duplicate";
        case SubmitStatus::image_saturated: return "image_saturated";
        case SubmitStatus::invalid_scores: return "invalid_scores";
    }
    return "?";
}

AnnotationStore::AnnotationStore(std::vector<std::string> image_pool, Options options)
    : pool_(std::move(image_pool)), options_(std::move(options)), rng_(derive_seed(options_.seed, {"sessions"})) {
    std::set<std::string> unique(pool_.begin(), pool_.end());
    if (unique.size() != pool_.size()) throw ValidationError("image pool contains duplicate ids");
    if (!options_.data_dir.empty()) load();
}

AnnotationStore::~AnnotationStore() {
    try {
        if (!options_.data_dir.empty()) write_snapshot();
    } catch (...) {
    }
}

std::int64_t AnnotationStore::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

bool AnnotationStore::eligible(const std::string& image_id, const std::string& annotator_id, std::int64_t now) const {
    if (annotated_.count({annotator_id, image_id})) return false;
    std::size_t held = 0;
    if (auto it = reservations_.find(image_id); it != reservations_.end()) {
        for (const auto& r : it->second) {
            if (r.expires_at <= now) continue;
            if (r.annotator_id == annotator_id) return false;
            ++held;
        }
    }
    const auto c = counts_.find(image_id);
    const std::size_t committed = c == counts_.end() ? 0 : c->second;
    return committed + held < kMaxAnnotationsPerImage;
}

void AnnotationStore::drop_expired(std::int64_t now) {
    for (auto& [image, list] : reservations_) {
        std::erase_if(list, [now](const Reservation& r) { return r.expires_at <= now; });
    }
}

std::string AnnotationStore::new_session_id() {
    char buf[40];
    std::snprintf(buf, sizeof buf, "s%06llu-%016llx", static_cast<unsigned long long>(seq_ + 1),
                  static_cast<unsigned long long>(rng_()));
    return buf;
}

void AnnotationStore::apply_session(const AnnotationSession& s) {
    sessions_[s.session_id] = s;
    const auto expires = s.created_at + options_.reservation_ttl.count();
    for (const auto& img : s.image_ids) {
        if (annotated_.count({s.annotator_id, img})) continue;
        reservations_[img].push_back(Reservation{s.annotator_id, s.session_id, expires});
    }
}

void AnnotationStore::apply_annotation(const StoredAnnotation& a) {
    ++counts_[a.image_id];
    annotated_.insert({a.annotator_id, a.image_id});
    if (auto it = reservations_.find(a.image_id); it != reservations_.end()) {
        std::erase_if(it->second, [&](const Reservation& r) { return r.session_id == a.session_id; });
    }
    annotations_.push_back(a);
}

void AnnotationStore::append_event(const json& event) {
    if (!log_.is_open()) return;
    log_ << event.dump() << '\n';
    log_.flush();
    if (++events_since_snapshot_ >= options_.snapshot_every) write_snapshot_locked();
}

std::optional<AnnotationSession> AnnotationStore::assign_session(const std::string& annotator_id) {
    if (annotator_id.empty()) throw ValidationError("annotator_id must not be empty");
    std::lock_guard lock(mutex_);
    const auto t = now();
    drop_expired(t);
    std::vector<std::string> candidates;
    for (const auto& img : pool_) {
        if (eligible(img, annotator_id, t)) candidates.push_back(img);
    }
    if (candidates.empty()) return std::nullopt;

    std::uniform_int_distribution<std::size_t> size_dist(1, kMaxSessionImages);
    const std::size_t k = std::min(size_dist(rng_), candidates.size());
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng_)]);
    }
    candidates.resize(k);

    AnnotationSession s{new_session_id(), annotator_id, std::move(candidates), t};
    ++seq_;
    auto event = session_json(s);
    event["seq"] = seq_;
    event["type"] = "session";
    append_event(event);
    apply_session(s);
    return s;
}

SubmitResult AnnotationStore::submit(const std::string& session_id, const std::string& image_id,
                                     const std::map<std::string, double>& scores) {
    std::lock_guard lock(mutex_);
    const auto sit = sessions_.find(session_id);
    if (sit == sessions_.end()) return {SubmitStatus::unknown_session, std::nullopt, "unknown session"};
    const auto& s = sit->second;
    if (std::find(s.image_ids.begin(), s.image_ids.end(), image_id) == s.image_ids.end()) {
        return {SubmitStatus::image_not_in_session, std::nullopt, "image not assigned to this session"};
    }
    if (annotated_.count({s.annotator_id, image_id})) {
        return {SubmitStatus::duplicate, std::nullopt, "image already annotated by this annotator"};
    }
    std::array<double, 7> parsed{};
    try {
        parsed = parse_scores(scores);
    } catch (const ValidationError& e) {
        return {SubmitStatus::invalid_scores, std::nullopt, e.what()};
    }
    if (counts_[image_id] >= kMaxAnnotationsPerImage) {
        return {SubmitStatus::image_saturated, std::nullopt, "image already has the maximum number of annotations"};
    }
    auto normalized = normalize_scores(parsed);
    StoredAnnotation a;
    a.seq = ++seq_;
    a.session_id = session_id;
    a.image_id = image_id;
    a.annotator_id = s.annotator_id;
    a.scores = parsed;
    a.normalized.assign(normalized.probs.probs().begin(), normalized.probs.probs().end());
    auto event = annotation_json(a);
    event["type"] = "annotation";
    append_event(event);
    apply_annotation(a);
    return {SubmitStatus::accepted, std::move(normalized), ""};
}

std::size_t AnnotationStore::annotation_count(const std::string& image_id) const {
    std::lock_guard lock(mutex_);
    const auto it = counts_.find(image_id);
    return it == counts_.end() ? 0 : it->second;
}

std::vector<StoredAnnotation> AnnotationStore::annotations() const {
    std::lock_guard lock(mutex_);
    return annotations_;
}

std::optional<AnnotationSession> AnnotationStore::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
}

void AnnotationStore::write_snapshot() const {
    std::lock_guard lock(mutex_);
    write_snapshot_locked();
}

void AnnotationStore::write_snapshot_locked() const {
    if (options_.data_dir.empty()) return;
    json state;
    state["seq"] = seq_;
    std::vector<const AnnotationSession*> sessions;
    for (const auto& [id, s] : sessions_) sessions.push_back(&s);
    std::sort(sessions.begin(), sessions.end(),
              [](const auto* a, const auto* b) { return a->session_id < b->session_id; });
    state["sessions"] = json::array();
    for (const auto* s : sessions) state["sessions"].push_back(session_json(*s));
    state["annotations"] = json::array();
    for (const auto& a : annotations_) state["annotations"].push_back(annotation_json(a));
    std::map<std::string, std::size_t> counts(counts_.begin(), counts_.end());
    state["counts"] = counts;

    const auto path = options_.data_dir / "state.json";
    const auto tmp = options_.data_dir / "state.json.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << state.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
    events_since_snapshot_ = 0;
}

void AnnotationStore::load() {
    std::filesystem::create_directories(options_.data_dir);
    const auto state_path = options_.data_dir / "state.json";
    const auto log_path = options_.data_dir / "annotations.jsonl";
    std::uint64_t snapshot_seq = 0;
    if (std::filesystem::exists(state_path)) {
        std::ifstream in(state_path);
        const auto state = json::parse(in);
        snapshot_seq = state.at("seq").get<std::uint64_t>();
        for (const auto& s : state.at("sessions")) apply_session(session_from_json(s));
        for (const auto& a : state.at("annotations")) apply_annotation(annotation_from_json(a));
        seq_ = snapshot_seq;
    }
    if (std::filesystem::exists(log_path)) {
        std::ifstream in(log_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json event;
            try {
                event = json::parse(line);
            } catch (const json::parse_error&) {
                throw ParseError("corrupt annotation log entry", line_no);
            }
            const auto seq = event.at("seq").get<std::uint64_t>();
            if (seq <= snapshot_seq) continue;
            const auto type = event.at("type").get<std::string>();
            if (type == "session") apply_session(session_from_json(event));
            else if (type == "annotation") apply_annotation(annotation_from_json(event));
            else throw ParseError("unknown event type " + type, line_no);
            seq_ = std::max(seq_, seq);
        }
    }
    log_.open(log_path, std::ios::app);
    if (!log_) throw Error("cannot open " + log_path.string());
}

AgreementReport agreement_report(std::span<const StoredAnnotation> annotations,
                                 const soft_label::LabelTable& automatic, std::span<const std::string> image_ids,
                                 double epsilon) {
    // Map automatic columns onto kClasses.
    if (automatic.classes.size() != kClasses.size()) {
        throw DimensionError("automatic labels have " + std::to_string(automatic.classes.size()) +
                             " classes, annotations have 8");
    }
    std::array<std::size_t, 8> column{};
    for (std::size_t c = 0; c < kClasses.size(); ++c) {
        const auto it = std::find_if(automatic.classes.begin(), automatic.classes.end(),
                                     [&](const std::string& n) { return canonical_emotion_name(n) == kClasses[c]; });
        if (it == automatic.classes.end()) {
            throw DimensionError("automatic labels lack class '" + std::string(kClasses[c]) + "'");
        }
        column[c] = static_cast<std::size_t>(it - automatic.classes.begin());
    }
    std::unordered_map<std::string, std::size_t> auto_row;
    for (std::size_t r = 0; r < automatic.ids.size(); ++r) auto_row[automatic.ids[r]] = r;

    std::map<std::string, std::pair<std::vector<double>, std::size_t>> human;
    for (const auto& a : annotations) {
        if (a.normalized.size() != kClasses.size()) throw DimensionError("stored annotation has wrong class count");
        auto& [sum, n] = human[a.image_id];
        if (sum.empty()) sum.assign(kClasses.size(), 0.0);
        for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += a.normalized[c];
        ++n;
    }

    std::vector<std::string> ids;
    if (image_ids.empty()) {
        for (const auto& [id, v] : human) ids.push_back(id);
    } else {
        ids.assign(image_ids.begin(), image_ids.end());
    }

    AgreementReport report;
    report.epsilon = epsilon;
    report.human_bars.assign(kClasses.size(), 0.0);
    report.auto_bars.assign(kClasses.size(), 0.0);
    for (const auto& id : ids) {
        const auto h = human.find(id);
        if (h == human.end()) throw ValidationError("image has no annotations: " + id);
        const auto r = auto_row.find(id);
        if (r == auto_row.end()) throw ValidationError("image has no automatic label: " + id);
        ImageAgreement ia;
        ia.image_id = id;
        ia.annotations = h->second.second;
        double total = 0.0;
        for (double x : h->second.first) total += x;
        for (double x : h->second.first) ia.human.push_back(x / total);
        for (std::size_t c = 0; c < kClasses.size(); ++c) ia.automatic.push_back(automatic.rows[r->second][column[c]]);
        ia.js = metrics::js_divergence(ia.human, ia.automatic);
        ia.kl_human_auto = metrics::kl_divergence(ia.human, ia.automatic, epsilon);
        ia.kl_auto_human = metrics::kl_divergence(ia.automatic, ia.human, epsilon);
        for (std::size_t c = 0; c < kClasses.size(); ++c) {
            report.human_bars[c] += ia.human[c];
            report.auto_bars[c] += ia.automatic[c];
        }
        report.mean_js += ia.js;
        report.mean_kl_human_auto += ia.kl_human_auto;
        report.mean_kl_auto_human += ia.kl_auto_human;
        report.images.push_back(std::move(ia));
    }
    if (!report.images.empty()) {
        const double n = static_cast<double>(report.images.size());
        report.mean_js /= n;
        report.mean_kl_human_auto /= n;
        report.mean_kl_auto_human /= n;
        for (auto& x : report.human_bars) x /= n;
        for (auto& x : report.auto_bars) x /= n;
    }
    return report;
}

nlohmann::ordered_json to_json(const AgreementReport& report) {
    nlohmann::ordered_json j;
    j["classes"] = std::vector<std::string>(kClasses.begin(), kClasses.end());
    j["log_base"] = "e";
    j["epsilon"] = report.epsilon;
    j["image_count"] = report.images.size();
    j["mean_js"] = report.mean_js;
    j["mean_kl_human_auto"] = report.mean_kl_human_auto;
    j["mean_kl_auto_human"] = report.mean_kl_auto_human;
    j["bars"] = {{"human", report.human_bars}, {"automatic", report.auto_bars}};
    j["images"] = nlohmann::ordered_json::array();
    for (const auto& ia : report.images) {
        j["images"].push_back({{"image_id", ia.image_id},
                               {"annotations", ia.annotations},
                               {"human", ia.human},
                               {"automatic", ia.automatic},
                               {"js", ia.js},
                               {"kl_human_auto", ia.kl_human_auto},
                               {"kl_auto_human", ia.kl_auto_human}});
    }
    return j;
}

}  // namespace emoblend::annotation
