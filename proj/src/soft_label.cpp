#include "emoblend/soft_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "emoblend/csv.hpp"
#include "emoblend/error.hpp"
#include "emoblend/gaussian.hpp"
#include "emoblend/parallel.hpp"

namespace emoblend::soft_label {

double log_axis_likelihood(double x, double mu, double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
    return normal_log_pdf(x, mu, sigma);
}

LogLikelihoodVector log_likelihoods(const Vad& vad, const Taxonomy& taxonomy) {
    LogLikelihoodVector out;
    out.values.reserve(taxonomy.size());
    for (const auto& e : taxonomy.emotions()) {
        double l = 0.0;
        for (std::size_t axis = 0; axis < 3; ++axis) l += normal_log_pdf(vad[axis], e.mean()[axis], e.sigma()[axis]);
        out.values.push_back(l);
    }
    return out;
}

ProbLabel normalize_log_likelihoods(std::span<const double> log_likelihoods, std::span<const double> log_prior) {
    if (log_likelihoods.empty()) throw ValidationError("no classes to normalize over");
    if (!log_prior.empty() && log_prior.size() != log_likelihoods.size()) {
        throw DimensionError("prior size does not match the class count");
    }
    std::vector<double> logs(log_likelihoods.begin(), log_likelihoods.end());
    if (!log_prior.empty()) {
        for (std::size_t k = 0; k < logs.size(); ++k) logs[k] += log_prior[k];
    }
    const double lse = log_sum_exp(logs);
    if (!std::isfinite(lse)) throw ValidationError("log-likelihoods are not finite");
    std::vector<double> p(logs.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logs.size(); ++k) {
        p[k] = std::exp(logs[k] - lse);
        sum += p[k];
    }
    // Division by the (already ~1) sum removes accumulated rounding.
    for (double& x : p) x = std::min(1.0, x / sum);
    return ProbLabel(std::move(p));
}

ProbLabel soft_label(const Vad& vad, const Taxonomy& taxonomy) {
    return normalize_log_likelihoods(log_likelihoods(vad, taxonomy).values);
}

namespace {

bool in_unit(double x) { return x >= -1.0 && x <= 1.0; }

}  // namespace

RelabelResult relabel_dataset(std::span<const SampleRecord> records, const Taxonomy& taxonomy,
                              const cwde::DominanceEstimator& estimator, bool use_label_prior, std::size_t threads) {
    struct Slot {
        std::optional<ProbLabel> label;
        std::string error;
        bool filled = false;
    };
    std::vector<Slot> slots(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        const auto& r = records[i];
        if (!in_unit(r.valence) || !in_unit(r.arousal)) {
            slots[i].error = "valence/arousal outside [-1, 1]";
            return;
        }
        double d = 0.0;
        if (r.dominance) {
            if (!in_unit(*r.dominance)) {
                slots[i].error = "dominance outside [-1, 1]";
                return;
            }
            d = *r.dominance;
        } else {
            std::optional<std::string_view> label;
            if (use_label_prior && r.label) label = *r.label;
            d = estimator.estimate_lenient(r.valence, r.arousal, label);
            slots[i].filled = true;
        }
        slots[i].label = soft_label(Vad{r.valence, r.arousal, d}, taxonomy);
    });

    RelabelResult out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (slots[i].label) {
            out.labels.push_back(LabeledRecord{records[i].id, std::move(*slots[i].label)});
            out.dominance_filled += slots[i].filled ? 1 : 0;
        } else {
            out.errors.push_back(RecordError{i, records[i].id, slots[i].error});
        }
    }
    return out;
}

void write_labels_csv(const Taxonomy& taxonomy, std::span<const LabeledRecord> labels, std::ostream& out) {
    std::vector<std::string> header = {"id"};
    for (const auto& name : taxonomy.names()) header.push_back(name);
    csv::write_row(out, header);
    for (const auto& rec : labels) {
        if (rec.label.size() != taxonomy.size()) throw DimensionError("label size does not match taxonomy");
        std::vector<std::string> row = {rec.id};
        for (double p : rec.label.probs()) row.push_back(csv::format_double(p, 9));
        csv::write_row(out, row);
    }
}

LabelTable read_labels_csv(std::istream& in) {
    const auto doc = csv::read(in);
    if (doc.header.size() < 2 || doc.header[0] != "id") throw ParseError("label CSV must start with an id column", 1);
    LabelTable table;
    table.classes.assign(doc.header.begin() + 1, doc.header.end());
    for (const auto& row : doc.rows) {
        table.ids.push_back(row.fields[0]);
        std::vector<double> probs;
        for (std::size_t c = 1; c < row.fields.size(); ++c) {
            probs.push_back(csv::parse_double(row.fields[c], row.line, doc.header[c]));
        }
        table.rows.push_back(std::move(probs));
    }
    return table;
}

LabelTable load_labels_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_labels_csv(in);
}

}  // namespace emoblend::soft_label
