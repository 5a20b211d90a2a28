#include "emoblend/emotion_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "emoblend/csv.hpp"
#include "emoblend/error.hpp"

namespace emoblend {

namespace {

const std::vector<std::string> kLexiconHeader = {"name",    "mu_v",    "mu_a",   "mu_d",   "sigma_v", "sigma_a",
                                                 "sigma_d", "rho_va", "rho_vd", "rho_ad", "universal"};
const std::vector<std::string> kSampleHeader = {"id", "valence", "arousal", "dominance", "label", "source"};

void check_unit_range(double x, std::string_view what, const std::string& name) {
    if (!(x >= -1.0 && x <= 1.0)) {
        throw ValidationError(name + ": " + std::string(what) + " outside [-1, 1]");
    }
}

void check_correlation(double r, std::string_view what, const std::string& name) {
    if (!(r > -1.0 && r < 1.0)) {
        throw ValidationError(name + ": " + std::string(what) + " must lie in (-1, 1)");
    }
}

struct Affine {
    double scale = 1.0;
    double offset = 0.0;
};

// "#@affine <scale> <offset>" maps raw means to the [-1, 1] scale.
Affine parse_affine(const std::vector<std::string>& comments) {
    Affine affine;
    for (const auto& c : comments) {
        std::istringstream is(c);
        std::string tag;
        is >> tag;
        if (tag != "#@affine") continue;
        if (!(is >> affine.scale >> affine.offset) || affine.scale == 0.0) {
            throw ParseError("bad #@affine directive: " + c, 0);
        }
    }
    return affine;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

EmotionDistribution::EmotionDistribution(std::string name, Vad mean, Vad sigma, std::optional<Correlations> rho,
                                         bool is_universal)
    : name_(std::move(name)), mean_(mean), sigma_(sigma), rho_(rho), is_universal_(is_universal) {
    if (name_.empty()) throw ValidationError("emotion name must not be empty");
    for (std::size_t axis = 0; axis < 3; ++axis) {
        if (!(sigma_[axis] > 0.0) || !std::isfinite(sigma_[axis])) {
            throw ValidationError(name_ + ": sigma must be strictly positive");
        }
        check_unit_range(mean_[axis], "mean", name_);
    }
    if (rho_) {
        check_correlation(rho_->va, "rho_va", name_);
        check_correlation(rho_->vd, "rho_vd", name_);
        check_correlation(rho_->ad, "rho_ad", name_);
    }
}

EmotionDistribution EmotionDistribution::renamed(std::string name) const {
    return EmotionDistribution(std::move(name), mean_, sigma_, rho_, is_universal_);
}

Taxonomy::Taxonomy(std::vector<EmotionDistribution> emotions) : emotions_(std::move(emotions)) {
    if (emotions_.empty()) throw ValidationError("taxonomy must contain at least one emotion");
    std::unordered_set<std::string> seen;
    for (const auto& e : emotions_) {
        if (!seen.insert(e.name()).second) throw ValidationError("duplicate emotion name: " + e.name());
    }
}

std::optional<std::size_t> Taxonomy::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < emotions_.size(); ++i) {
        if (emotions_[i].name() == name) return i;
    }
    return std::nullopt;
}

std::vector<std::string> Taxonomy::names() const {
    std::vector<std::string> out;
    out.reserve(emotions_.size());
    for (const auto& e : emotions_) out.push_back(e.name());
    return out;
}

Taxonomy Taxonomy::universals() const {
    std::vector<EmotionDistribution> out;
    std::copy_if(emotions_.begin(), emotions_.end(), std::back_inserter(out),
                 [](const EmotionDistribution& e) { return e.is_universal(); });
    if (out.empty()) throw ValidationError("taxonomy has no universal emotions");
    return Taxonomy(std::move(out));
}

ProbLabel::ProbLabel(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ValidationError("probability vector must not be empty");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability entry outside [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) throw ValidationError("probabilities do not sum to 1");
}

std::size_t ProbLabel::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

ProbLabel prob_label_from_scores(std::span<const double> scores) {
    if (scores.empty()) throw ValidationError("empty score vector");
    double sum = 0.0;
    for (double s : scores) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("scores must be finite and non-negative");
        sum += s;
    }
    if (sum <= 0.0) throw ValidationError("no mass to normalize");
    std::vector<double> probs(scores.size());
    std::transform(scores.begin(), scores.end(), probs.begin(), [sum](double s) { return s / sum; });
    return ProbLabel(std::move(probs));
}

std::string_view to_string(SampleSource s) { return s == SampleSource::primary ? "primary" : "auxiliary"; }

SampleSource parse_sample_source(std::string_view text) {
    const auto t = lower(text);
    if (t.empty() || t == "primary" || t == "primary-set") return SampleSource::primary;
    if (t == "auxiliary" || t == "auxiliary-set" || t == "aux") return SampleSource::auxiliary;
    throw ValidationError("unknown sample source: " + std::string(text));
}

std::string canonical_emotion_name(std::string_view name) {
    static const std::unordered_map<std::string, std::string> aliases = {
        {"anger", "angry"},         {"contemptuous", "contempt"}, {"disgust", "disgusted"},
        {"fear", "fearful"},        {"happiness", "happy"},       {"sadness", "sad"},
        {"surprise", "surprised"},
    };
    auto key = lower(name);
    if (auto it = aliases.find(key); it != aliases.end()) return it->second;
    return key;
}

Taxonomy read_lexicon(std::istream& in) {
    const auto doc = csv::read(in);
    if (doc.header.empty()) throw ParseError("empty lexicon", 0);
    if (doc.header != kLexiconHeader) throw ParseError("lexicon header does not match the expected schema", 0);
    if (doc.rows.empty()) throw ParseError("empty lexicon", 0);
    const Affine affine = parse_affine(doc.comments);

    std::vector<EmotionDistribution> emotions;
    emotions.reserve(doc.rows.size());
    for (const auto& row : doc.rows) {
        const auto& f = row.fields;
        auto num = [&](std::size_t col) { return csv::parse_double(f[col], row.line, kLexiconHeader[col]); };
        auto mean_of = [&](std::size_t col) { return affine.scale * num(col) + affine.offset; };
        auto sigma_of = [&](std::size_t col) { return std::abs(affine.scale) * num(col); };
        const Vad mean{mean_of(1), mean_of(2), mean_of(3)};
        const Vad sigma{sigma_of(4), sigma_of(5), sigma_of(6)};

        const auto rva = csv::parse_optional_double(f[7], row.line, "rho_va");
        const auto rvd = csv::parse_optional_double(f[8], row.line, "rho_vd");
        const auto rad = csv::parse_optional_double(f[9], row.line, "rho_ad");
        std::optional<Correlations> rho;
        if (rva || rvd || rad) {
            if (!(rva && rvd && rad)) throw ParseError("rho columns must be all present or all empty", row.line);
            rho = Correlations{*rva, *rvd, *rad};
        }

        bool universal = false;
        if (f[10] == "1") universal = true;
        else if (f[10] != "0") throw ParseError("column 'universal' must be 0 or 1", row.line);

        try {
            emotions.emplace_back(f[0], mean, sigma, rho, universal);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(row.line) + ": " + e.what());
        }
    }
    return Taxonomy(std::move(emotions));
}

Taxonomy load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open lexicon " + path);
    return read_lexicon(in);
}

void write_lexicon(const Taxonomy& taxonomy, std::ostream& out) {
    csv::write_row(out, kLexiconHeader);
    for (const auto& e : taxonomy.emotions()) {
        std::vector<std::string> f = {e.name()};
        for (std::size_t axis = 0; axis < 3; ++axis) f.push_back(csv::format_double(e.mean()[axis]));
        for (std::size_t axis = 0; axis < 3; ++axis) f.push_back(csv::format_double(e.sigma()[axis]));
        if (e.rho()) {
            f.push_back(csv::format_double(e.rho()->va));
            f.push_back(csv::format_double(e.rho()->vd));
            f.push_back(csv::format_double(e.rho()->ad));
        } else {
            f.insert(f.end(), 3, "");
        }
        f.push_back(e.is_universal() ? "1" : "0");
        csv::write_row(out, f);
    }
}

void save_lexicon(const Taxonomy& taxonomy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_lexicon(taxonomy, out);
}

std::vector<SampleRecord> read_samples(std::istream& in) {
    const auto doc = csv::read(in);
    if (doc.header.empty()) return {};
    if (doc.header != kSampleHeader) throw ParseError("sample header does not match the expected schema", 0);
    std::vector<SampleRecord> out;
    out.reserve(doc.rows.size());
    for (const auto& row : doc.rows) {
        const auto& f = row.fields;
        SampleRecord r;
        r.id = f[0];
        r.valence = csv::parse_double(f[1], row.line, "valence");
        r.arousal = csv::parse_double(f[2], row.line, "arousal");
        r.dominance = csv::parse_optional_double(f[3], row.line, "dominance");
        if (!f[4].empty()) r.label = f[4];
        try {
            r.source = parse_sample_source(f[5]);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), row.line);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SampleRecord> load_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open samples " + path);
    return read_samples(in);
}

void write_samples(const std::vector<SampleRecord>& samples, std::ostream& out) {
    csv::write_row(out, kSampleHeader);
    for (const auto& r : samples) {
        csv::write_row(out, {r.id, csv::format_double(r.valence), csv::format_double(r.arousal),
                             r.dominance ? csv::format_double(*r.dominance) : "", r.label.value_or(""),
                             std::string(to_string(r.source))});
    }
}

void save_samples(const std::vector<SampleRecord>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_samples(samples, out);
}

}  // namespace emoblend
