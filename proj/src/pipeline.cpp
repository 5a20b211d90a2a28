#include "emoblend/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "emoblend/csv.hpp"
#include "emoblend/cwde.hpp"
#include "emoblend/error.hpp"
#include "emoblend/rebalance.hpp"

namespace emoblend::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class Fn>
auto in_stage(Stage stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

}  // namespace

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::config: return "config";
        case Stage::cwde: return "cwde";
        case Stage::rebalance: return "rebalance";
        case Stage::fuse: return "fuse";
        case Stage::relabel: return "relabel";
        case Stage::evaluate: return "evaluate";
        case Stage::promote: return "promote";
    }
    return "?";
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    try {
        c.lexicon = resolve(base_dir, j.at("lexicon").get<std::string>());
        c.samples = resolve(base_dir, j.at("samples").get<std::string>());
        c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        if (j.contains("aux_samples")) c.aux_samples = resolve(base_dir, j["aux_samples"].get<std::string>());
        if (j.contains("truth")) c.truth = resolve(base_dir, j["truth"].get<std::string>());
        const auto tax = j.value("taxonomy", std::string("universal"));
        if (tax == "universal") c.taxonomy = TaxonomyChoice::universal;
        else if (tax == "fused") c.taxonomy = TaxonomyChoice::fused;
        else throw ValidationError("taxonomy must be 'universal' or 'fused'");

        const auto& f = j.at("fusion");
        if (!f.contains("seed")) throw ValidationError("fusion.seed is required");
        c.fusion.seed = f.at("seed").get<std::uint64_t>();
        c.fusion.t = f.value("t", c.fusion.t);
        c.fusion.mc_samples = f.value("mc_samples", c.fusion.mc_samples);
        c.fusion.neighbors = f.value("neighbors", c.fusion.neighbors);
        c.fusion.fuse_samples = f.value("fuse_samples", c.fusion.fuse_samples);
        c.fusion.threads = f.value("threads", c.fusion.threads);

        c.prior_strength = j.value("prior_strength", c.prior_strength);
        c.use_label_prior = j.value("use_label_prior", c.use_label_prior);
        c.reference_label = j.value("reference_label", c.reference_label);
        if (j.contains("cap_value")) c.cap_value = j["cap_value"].get<double>();
        c.epsilon = j.value("epsilon", c.epsilon);
    } catch (const json::exception& e) {
        throw StageError(Stage::config, e.what());
    } catch (const Error& e) {
        throw StageError(Stage::config, e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw StageError(Stage::config, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw StageError(Stage::config, e.what());
    }
    return from_json(j, path.parent_path());
}

ordered_json PipelineConfig::to_json() const {
    ordered_json j;
    j["lexicon"] = lexicon.string();
    j["samples"] = samples.string();
    if (aux_samples) j["aux_samples"] = aux_samples->string();
    if (truth) j["truth"] = truth->string();
    j["output_dir"] = output_dir.string();
    j["taxonomy"] = taxonomy == TaxonomyChoice::universal ? "universal" : "fused";
    j["fusion"] = {{"t", fusion.t},
                   {"mc_samples", fusion.mc_samples},
                   {"neighbors", fusion.neighbors},
                   {"fuse_samples", fusion.fuse_samples},
                   {"seed", fusion.seed}};
    j["prior_strength"] = prior_strength;
    j["use_label_prior"] = use_label_prior;
    j["reference_label"] = reference_label;
    if (cap_value) j["cap_value"] = *cap_value;
    j["epsilon"] = epsilon;
    return j;
}

void PipelineConfig::validate() const {
    in_stage(Stage::config, [&] {
        for (const auto* p : {&lexicon, &samples}) {
            if (!fs::exists(*p)) throw ValidationError("missing input file " + p->string());
        }
        if (aux_samples && !fs::exists(*aux_samples)) throw ValidationError("missing input file " + aux_samples->string());
        if (truth && !fs::exists(*truth)) throw ValidationError("missing input file " + truth->string());
        fusion.validate();
        if (!(prior_strength >= 1.0 / 6.0 && prior_strength < 1.0)) {
            throw ValidationError("prior_strength must lie in [1/6, 1)");
        }
        if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
        if (cap_value && !(*cap_value > 0.0)) throw ValidationError("cap_value must be positive");
        return 0;
    });
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (const auto n = in.gcount(); n > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(n));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", md[i]);
        hex += byte;
    }
    return hex;
}

std::vector<std::pair<std::string, std::string>> load_id_labels(const fs::path& path) {
    const auto doc = csv::read_file(path.string());
    if (doc.header.size() != 2 || doc.header[0] != "id" || doc.header[1] != "label") {
        throw ParseError("label file header must be id,label", 1);
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& row : doc.rows) out.emplace_back(row.fields[0], row.fields[1]);
    return out;
}

ordered_json evaluate(const EvaluationInputs& inputs) {
    const auto& pred = inputs.pred;
    const std::size_t k = pred.classes.size();
    ordered_json report;
    report["config"] = {{"log_base", "e"},
                        {"epsilon", inputs.epsilon},
                        {"kl_directions", {"kl_pq = KL(pred || truth)", "kl_qp = KL(truth || pred)"}},
                        {"averaging", "macro"},
                        {"argmax_ties", "lowest index"}};
    report["classes"] = pred.classes;

    std::unordered_map<std::string, std::size_t> pred_row;
    for (std::size_t r = 0; r < pred.ids.size(); ++r) {
        if (pred.rows[r].size() != k) throw DimensionError("prediction row has wrong width");
        pred_row[pred.ids[r]] = r;
    }

    if (inputs.truth) {
        const auto& truth = *inputs.truth;
        std::vector<std::size_t> column(k);
        if (truth.classes.size() != k) throw DimensionError("prediction and truth class spaces differ");
        for (std::size_t c = 0; c < k; ++c) {
            const auto it = std::find(truth.classes.begin(), truth.classes.end(), pred.classes[c]);
            if (it == truth.classes.end()) throw DimensionError("truth lacks class " + pred.classes[c]);
            column[c] = static_cast<std::size_t>(it - truth.classes.begin());
        }
        std::vector<std::vector<double>> p_rows;
        std::vector<std::vector<double>> t_rows;
        std::size_t unmatched = 0;
        for (std::size_t r = 0; r < truth.ids.size(); ++r) {
            const auto it = pred_row.find(truth.ids[r]);
            if (it == pred_row.end()) {
                ++unmatched;
                continue;
            }
            p_rows.push_back(pred.rows[it->second]);
            std::vector<double> t(k);
            for (std::size_t c = 0; c < k; ++c) t[c] = truth.rows[r][column[c]];
            t_rows.push_back(std::move(t));
        }
        const auto m = metrics::distribution_report(p_rows, t_rows, inputs.epsilon);
        ordered_json d;
        d["pairs"] = m.pairs;
        d["unmatched_truth_rows"] = unmatched;
        d["js"] = m.js;
        d["kl_pq"] = m.kl_pq;
        d["kl_qp"] = m.kl_qp;
        d["cosine"] = m.cosine;
        d["pearson"] = m.pearson ? json(*m.pearson) : json(nullptr);
        d["pearson_skipped"] = m.pearson_skipped;
        report["distribution"] = d;
    }

    if (!inputs.labels.empty()) {
        std::vector<ProbLabel> preds;
        std::vector<std::size_t> truth;
        std::size_t unmapped = 0;
        for (const auto& [id, name] : inputs.labels) {
            const auto it = pred_row.find(id);
            const auto canonical = canonical_emotion_name(name);
            const auto cls = std::find_if(pred.classes.begin(), pred.classes.end(),
                                          [&](const std::string& c) { return canonical_emotion_name(c) == canonical; });
            if (it == pred_row.end() || cls == pred.classes.end()) {
                ++unmapped;
                continue;
            }
            preds.push_back(prob_label_from_scores(pred.rows[it->second]));
            truth.push_back(static_cast<std::size_t>(cls - pred.classes.begin()));
        }
        ordered_json c;
        c["samples"] = preds.size();
        c["unmapped_labels"] = unmapped;
        if (!preds.empty()) {
            const auto m = metrics::dominant_label_metrics(preds, truth, k);
            c["accuracy"] = m.accuracy;
            c["precision"] = m.precision;
            c["recall"] = m.recall;
            c["f1"] = m.f1;
            c["per_class"] = ordered_json::array();
            for (std::size_t i = 0; i < m.classes.size(); ++i) {
                c["per_class"].push_back({{"class", pred.classes[m.classes[i]]},
                                          {"precision", m.per_class_precision[i]},
                                          {"recall", m.per_class_recall[i]},
                                          {"f1", m.per_class_f1[i]}});
            }
        }
        report["classification"] = c;
    }
    return report;
}

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    PipelineResult result;

    const fs::path out_dir = config.output_dir;
    const fs::path staging = out_dir.parent_path() / (out_dir.filename().string() + ".partial");
    in_stage(Stage::promote, [&] {
        fs::remove_all(staging);
        fs::create_directories(staging);
        return 0;
    });
    auto staged = [&](const char* name) { return staging / name; };

    // cwde
    auto [lexicon, estimator, primary, aux] = in_stage(Stage::cwde, [&] {
        auto lex = load_lexicon(config.lexicon.string());
        auto est = std::make_unique<cwde::DominanceEstimator>(cwde::select_universals(lex), config.prior_strength);
        auto prim = load_samples(config.samples.string());
        std::vector<SampleRecord> extra;
        if (config.aux_samples) extra = load_samples(config.aux_samples->string());
        est->fill(prim, config.use_label_prior);
        est->fill(extra, config.use_label_prior);
        return std::make_tuple(std::move(lex), std::move(est), std::move(prim), std::move(extra));
    });

    // rebalance
    std::vector<SampleRecord> records = in_stage(Stage::rebalance, [&] {
        if (!config.aux_samples) return primary;
        const double cap =
            config.cap_value ? *config.cap_value : rebalance::max_quadrant_density(primary, config.reference_label);
        auto merged = rebalance::rebalance(primary, aux, cap);
        result.admitted = merged.size() - primary.size();
        return merged;
    });
    in_stage(Stage::cwde, [&] {
        save_samples(records, staged(kDominanceFile).string());
        return 0;
    });

    // fuse
    const Taxonomy taxonomy = in_stage(Stage::fuse, [&] {
        fusion::FusionResult fr{lexicon.universals(), {}};
        if (config.taxonomy == TaxonomyChoice::fused) fr = fusion::fuse_taxonomy(lexicon, config.fusion);
        fr.trace.final_count = fr.taxonomy.size();
        save_lexicon(fr.taxonomy, staged(kTaxonomyFile).string());
        std::ofstream trace(staged(kTraceFile));
        fusion::write_trace_jsonl(fr.trace, trace);
        return fr.taxonomy;
    });

    // relabel
    in_stage(Stage::relabel, [&] {
        const auto rr = soft_label::relabel_dataset(records, taxonomy, *estimator, config.use_label_prior,
                                                    config.fusion.threads);
        result.records = rr.labels.size();
        result.rejected = rr.errors.size();
        std::ofstream labels(staged(kLabelsFile));
        soft_label::write_labels_csv(taxonomy, rr.labels, labels);
        std::ofstream errors(staged(kErrorsFile));
        csv::write_row(errors, {"index", "id", "error"});
        for (const auto& e : rr.errors) csv::write_row(errors, {std::to_string(e.index), e.id, e.message});
        return 0;
    });

    // evaluate
    in_stage(Stage::evaluate, [&] {
        EvaluationInputs inputs;
        inputs.pred = soft_label::load_labels_csv(staged(kLabelsFile).string());
        if (config.truth) inputs.truth = soft_label::load_labels_csv(config.truth->string());
        for (const auto& r : records) {
            if (r.label) inputs.labels.emplace_back(r.id, *r.label);
        }
        inputs.epsilon = config.epsilon;
        write_file(staged(kReportFile), evaluate(inputs).dump(2) + "\n");
        return 0;
    });

    // manifest
    in_stage(Stage::promote, [&] {
        ordered_json manifest;
        manifest["tool"] = "emoblend";
        manifest["version"] = kVersion;
        manifest["config"] = config.to_json();
        manifest["seeds"] = {{"fusion", config.fusion.seed}};
        ordered_json inputs;
        inputs["lexicon"] = sha256_file(config.lexicon);
        inputs["samples"] = sha256_file(config.samples);
        if (config.aux_samples) inputs["aux_samples"] = sha256_file(*config.aux_samples);
        if (config.truth) inputs["truth"] = sha256_file(*config.truth);
        manifest["input_sha256"] = inputs;
        ordered_json artifacts;
        for (const char* name : {kDominanceFile, kTaxonomyFile, kTraceFile, kLabelsFile, kErrorsFile, kReportFile}) {
            artifacts[name] = sha256_file(staged(name));
        }
        manifest["artifact_sha256"] = artifacts;
        manifest["counts"] = {{"labeled", result.records}, {"rejected", result.rejected}, {"admitted", result.admitted}};
        write_file(staged(kManifestFile), manifest.dump(2) + "\n");

        fs::create_directories(out_dir);
        for (const char* name : {kDominanceFile, kTaxonomyFile, kTraceFile, kLabelsFile, kErrorsFile, kReportFile,
                                 kManifestFile}) {
            fs::rename(staged(name), out_dir / name);
            result.artifacts.push_back(out_dir / name);
        }
        fs::remove_all(staging);
        return 0;
    });
    return result;
}

}  // namespace emoblend::pipeline
