#include "emoblend/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emoblend/error.hpp"

namespace emoblend::metrics {

namespace {

void check_sizes(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("vector sizes differ: " + std::to_string(a) + " vs " + std::to_string(b));
    if (a == 0) throw DimensionError("empty vectors");
}

std::vector<double> smooth(std::span<const double> p, double epsilon) {
    std::vector<double> out(p.begin(), p.end());
    double sum = 0.0;
    for (double& x : out) {
        x += epsilon;
        sum += x;
    }
    for (double& x : out) x /= sum;
    return out;
}

double kl_term(double p, double m) { return p > 0.0 ? p * std::log(p / m) : 0.0; }

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon) {
    check_sizes(p.size(), q.size());
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    const auto ps = smooth(p, epsilon);
    const auto qs = smooth(q, epsilon);
    double kl = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) kl += ps[i] * std::log(ps[i] / qs[i]);
    return std::max(0.0, kl);
}

double kl_divergence(const ProbLabel& p, const ProbLabel& q, double epsilon) {
    return kl_divergence(p.probs(), q.probs(), epsilon);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    check_sizes(p.size(), q.size());
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        js += 0.5 * kl_term(p[i], m) + 0.5 * kl_term(q[i], m);
    }
    return std::clamp(js, 0.0, std::log(2.0));
}

double js_divergence(const ProbLabel& p, const ProbLabel& q) { return js_divergence(p.probs(), q.probs()); }

double cosine_similarity(std::span<const double> p, std::span<const double> q) {
    check_sizes(p.size(), q.size());
    double dot = 0.0;
    double np = 0.0;
    double nq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        dot += p[i] * q[i];
        np += p[i] * p[i];
        nq += q[i] * q[i];
    }
    if (np == 0.0) throw ValidationError("cosine similarity: first vector is zero");
    if (nq == 0.0) throw ValidationError("cosine similarity: second vector is zero");
    return dot / (std::sqrt(np) * std::sqrt(nq));
}

double pearson_corr(std::span<const double> p, std::span<const double> q) {
    check_sizes(p.size(), q.size());
    const double n = static_cast<double>(p.size());
    double mp = 0.0;
    double mq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        mq += q[i];
    }
    mp /= n;
    mq /= n;
    double cov = 0.0;
    double vp = 0.0;
    double vq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cov += (p[i] - mp) * (q[i] - mq);
        vp += (p[i] - mp) * (p[i] - mp);
        vq += (q[i] - mq) * (q[i] - mq);
    }
    if (vp == 0.0) throw ValidationError("pearson correlation: first vector has zero variance");
    if (vq == 0.0) throw ValidationError("pearson correlation: second vector has zero variance");
    return std::clamp(cov / (std::sqrt(vp) * std::sqrt(vq)), -1.0, 1.0);
}

ClassificationMetrics dominant_label_metrics(std::span<const ProbLabel> pred, std::span<const std::size_t> truth,
                                             std::size_t k) {
    if (pred.size() != truth.size()) throw DimensionError("prediction and truth counts differ");
    if (pred.empty()) throw DimensionError("no samples");
    std::vector<std::size_t> tp(k, 0), pred_count(k, 0), true_count(k, 0);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != k) throw DimensionError("prediction size does not match K");
        if (truth[s] >= k) throw ValidationError("truth index out of range");
        const auto guess = pred[s].argmax();
        ++pred_count[guess];
        ++true_count[truth[s]];
        if (guess == truth[s]) {
            ++tp[guess];
            ++correct;
        }
    }
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    for (std::size_t c = 0; c < k; ++c) {
        if (pred_count[c] == 0 && true_count[c] == 0) continue;
        const double p = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
        const double r = true_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_count[c]) : 0.0;
        const double f = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        m.classes.push_back(c);
        m.per_class_precision.push_back(p);
        m.per_class_recall.push_back(r);
        m.per_class_f1.push_back(f);
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    m.precision = mean(m.per_class_precision);
    m.recall = mean(m.per_class_recall);
    m.f1 = mean(m.per_class_f1);
    return m;
}

MetricReport distribution_report(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> truth,
                                 double epsilon) {
    if (pred.size() != truth.size()) throw DimensionError("prediction and truth counts differ");
    MetricReport r;
    double pearson_sum = 0.0;
    std::size_t pearson_n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        r.js += js_divergence(pred[i], truth[i]);
        r.kl_pq += kl_divergence(pred[i], truth[i], epsilon);
        r.kl_qp += kl_divergence(truth[i], pred[i], epsilon);
        r.cosine += cosine_similarity(pred[i], truth[i]);
        try {
            pearson_sum += pearson_corr(pred[i], truth[i]);
            ++pearson_n;
        } catch (const ValidationError&) {
            ++r.pearson_skipped;
        }
    }
    r.pairs = pred.size();
    if (r.pairs) {
        const double n = static_cast<double>(r.pairs);
        r.js /= n;
        r.kl_pq /= n;
        r.kl_qp /= n;
        r.cosine /= n;
    }
    if (pearson_n) r.pearson = pearson_sum / static_cast<double>(pearson_n);
    return r;
}

}  // namespace emoblend::metrics
