#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "emoblend/annotation.hpp"
#include "emoblend/annotation_server.hpp"
#include "emoblend/consistency_loss.hpp"
#include "emoblend/csv.hpp"
#include "emoblend/cwde.hpp"
#include "emoblend/emotion_model.hpp"
#include "emoblend/error.hpp"
#include "emoblend/fusion.hpp"
#include "emoblend/pipeline.hpp"
#include "emoblend/rebalance.hpp"
#include "emoblend/soft_label.hpp"

namespace fs = std::filesystem;
using namespace emoblend;

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
}

int run_cwde(const std::string& lexicon, const std::string& in, const std::string& out, double strength,
             bool no_prior) {
    const cwde::DominanceEstimator estimator(cwde::select_universals(load_lexicon(lexicon)), strength);
    auto records = load_samples(in);
    const auto filled = estimator.fill(records, !no_prior);
    save_samples(records, out);
    std::cerr << "filled " << filled << " of " << records.size() << " records";
    if (estimator.clamp_count() > 0) std::cerr << ", " << estimator.clamp_count() << " estimates clamped to [-1, 1]";
    std::cerr << '\n';
    return 0;
}

int run_fuse(const std::string& lexicon, const fusion::FusionConfig& config, const std::string& tax_out,
             const std::string& trace_out) {
    const auto result = fusion::fuse_taxonomy(load_lexicon(lexicon), config);
    save_lexicon(result.taxonomy, tax_out);
    auto trace = open_out(trace_out);
    fusion::write_trace_jsonl(result.trace, trace);
    std::cerr << result.trace.steps.size() << " fusion steps, " << result.trace.final_count << " classes\n";
    return 0;
}

int run_relabel(const std::string& lexicon, const std::string& taxonomy_path, const std::string& in,
                const std::string& out, double strength, bool no_prior, std::size_t threads,
                const std::string& errors_out) {
    const auto lex = load_lexicon(lexicon);
    const Taxonomy taxonomy = taxonomy_path.empty() ? lex.universals() : load_lexicon(taxonomy_path);
    const cwde::DominanceEstimator estimator(cwde::select_universals(lex), strength);
    const auto records = load_samples(in);
    const auto result = soft_label::relabel_dataset(records, taxonomy, estimator, !no_prior, threads);
    auto stream = open_out(out);
    soft_label::write_labels_csv(taxonomy, result.labels, stream);
    for (const auto& e : result.errors) {
        std::cerr << "record " << e.index << " (" << e.id << "): " << e.message << '\n';
    }
    if (!errors_out.empty()) {
        auto err = open_out(errors_out);
        csv::write_row(err, {"index", "id", "error"});
        for (const auto& e : result.errors) csv::write_row(err, {std::to_string(e.index), e.id, e.message});
    }
    std::cerr << result.labels.size() << " labeled, " << result.errors.size() << " rejected\n";
    return 0;
}

int run_rebalance(const std::string& primary_path, const std::string& aux_path, const std::string& reference,
                  std::optional<double> cap_value, const std::string& out) {
    const auto primary = load_samples(primary_path);
    const auto aux = load_samples(aux_path);
    const double cap = cap_value ? *cap_value : rebalance::max_quadrant_density(primary, reference);
    const auto merged = rebalance::rebalance(primary, aux, cap);
    save_samples(merged, out);
    std::cerr << "cap " << cap << ", admitted " << merged.size() - primary.size() << " of " << aux.size() << '\n';
    return 0;
}

int run_evaluate(const std::string& pred, const std::string& truth, const std::string& labels,
                 const std::string& report, double epsilon) {
    if (truth.empty() && labels.empty()) throw ValidationError("evaluate needs --truth and/or --labels");
    pipeline::EvaluationInputs inputs;
    inputs.pred = soft_label::load_labels_csv(pred);
    if (!truth.empty()) inputs.truth = soft_label::load_labels_csv(truth);
    if (!labels.empty()) inputs.labels = pipeline::load_id_labels(labels);
    inputs.epsilon = epsilon;
    const auto json = pipeline::evaluate(inputs).dump(2);
    if (report.empty() || report == "-") {
        std::cout << json << '\n';
    } else {
        open_out(report) << json << '\n';
    }
    return 0;
}

int run_loss_check(const std::string& variant, std::vector<std::size_t> sizes, std::size_t trials,
                   std::uint64_t seed) {
    std::vector<loss::Variant> variants;
    if (variant == "all") {
        variants = {loss::Variant::static_matrix, loss::Variant::guided, loss::Variant::regularized};
    } else {
        variants = {loss::parse_variant(variant)};
    }
    std::printf("%-12s %4s %7s %9s %14s %14s %s\n", "variant", "n", "trials", "failures", "worst_dz", "worst_dW",
                "result");
    bool ok = true;
    for (auto v : variants) {
        for (auto n : sizes) {
            loss::GradientCheckConfig cfg;
            cfg.variant = v;
            cfg.n = n;
            cfg.trials = trials;
            cfg.seed = seed;
            const auto s = loss::check_gradients(cfg);
            std::printf("%-12s %4zu %7zu %9zu %14.3e %14.3e %s\n", std::string(loss::to_string(v)).c_str(), n,
                        s.trials, s.failures, s.worst_logit_error, s.worst_w_error, s.passed() ? "PASS" : "FAIL");
            ok = ok && s.passed();
        }
    }
    return ok ? 0 : 1;
}

std::vector<std::string> image_pool(const std::string& pool_file, const std::string& image_dir) {
    std::vector<std::string> pool;
    if (!pool_file.empty()) {
        std::ifstream in(pool_file);
        if (!in) throw Error("cannot open " + pool_file);
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty() && line[0] != '#') pool.push_back(line);
        }
    } else if (!image_dir.empty()) {
        for (const auto& entry : fs::directory_iterator(image_dir)) {
            if (entry.is_regular_file()) pool.push_back(entry.path().filename().string());
        }
        std::sort(pool.begin(), pool.end());
    }
    if (pool.empty()) throw ValidationError("image pool is empty (use --pool or --image-dir)");
    return pool;
}

annotation::AnnotationServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->request_stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emoblend: VAD-based soft emotion labels"};
    app.require_subcommand(1);

    // cwde
    auto* cwde_cmd = app.add_subcommand("cwde", "Fill the dominance column from valence and arousal");
    std::string cwde_lexicon, cwde_in, cwde_out;
    double cwde_strength = cwde::kDefaultPriorStrength;
    bool cwde_no_prior = false;
    cwde_cmd->add_option("--lexicon", cwde_lexicon, "Lexicon CSV")->required()->check(CLI::ExistingFile);
    cwde_cmd->add_option("--in", cwde_in, "Sample CSV")->required()->check(CLI::ExistingFile);
    cwde_cmd->add_option("--out", cwde_out, "Output sample CSV")->required();
    cwde_cmd->add_option("--prior-strength", cwde_strength, "Prior mass on the labeled emotion, in [1/6, 1)");
    cwde_cmd->add_flag("--no-label-prior", cwde_no_prior, "Ignore categorical labels (uniform prior)");

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "Fuse overlapping lexicon terms into a compact taxonomy");
    std::string fuse_lexicon, fuse_tax, fuse_trace;
    fusion::FusionConfig fuse_cfg;
    fuse_cmd->add_option("--lexicon", fuse_lexicon, "Lexicon CSV")->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--t", fuse_cfg.t, "Fusion threshold in (0, 1)")->capture_default_str();
    fuse_cmd->add_option("--mc-samples", fuse_cfg.mc_samples, "Monte Carlo samples per pair")->capture_default_str();
    fuse_cmd->add_option("--neighbors", fuse_cfg.neighbors, "Nearest-neighbor shortlist size")->capture_default_str();
    fuse_cmd->add_option("--fuse-samples", fuse_cfg.fuse_samples, "Samples drawn per parent when fusing")
        ->capture_default_str();
    fuse_cmd->add_option("--seed", fuse_cfg.seed, "Random seed")->required();
    fuse_cmd->add_option("--threads", fuse_cfg.threads, "Worker threads (0: all cores)");
    fuse_cmd->add_option("--out-taxonomy", fuse_tax, "Fused taxonomy CSV")->required();
    fuse_cmd->add_option("--out-trace", fuse_trace, "Fusion trace (JSON lines)")->required();

    // relabel
    auto* rel_cmd = app.add_subcommand("relabel", "Compute soft labels over a taxonomy");
    std::string rel_lexicon, rel_tax, rel_in, rel_out, rel_errors;
    double rel_strength = cwde::kDefaultPriorStrength;
    bool rel_no_prior = false;
    std::size_t rel_threads = 0;
    rel_cmd->add_option("--lexicon", rel_lexicon, "Lexicon CSV (universal terms drive dominance estimation)")
        ->required()
        ->check(CLI::ExistingFile);
    rel_cmd->add_option("--taxonomy", rel_tax, "Taxonomy CSV (default: the lexicon's universal terms)")
        ->check(CLI::ExistingFile);
    rel_cmd->add_option("--in", rel_in, "Sample CSV")->required()->check(CLI::ExistingFile);
    rel_cmd->add_option("--out", rel_out, "Soft-label CSV")->required();
    rel_cmd->add_option("--errors", rel_errors, "Write rejected records to this CSV");
    rel_cmd->add_option("--prior-strength", rel_strength, "Prior mass on the labeled emotion, in [1/6, 1)");
    rel_cmd->add_flag("--no-label-prior", rel_no_prior, "Ignore categorical labels when estimating dominance");
    rel_cmd->add_option("--threads", rel_threads, "Worker threads (0: all cores)");

    // rebalance
    auto* reb_cmd = app.add_subcommand("rebalance", "Admit auxiliary samples under a quadrant density cap");
    std::string reb_primary, reb_aux, reb_ref = "happy", reb_out;
    std::optional<double> reb_cap;
    reb_cmd->add_option("--primary", reb_primary, "Primary sample CSV")->required()->check(CLI::ExistingFile);
    reb_cmd->add_option("--aux", reb_aux, "Auxiliary sample CSV")->required()->check(CLI::ExistingFile);
    reb_cmd->add_option("--reference-label", reb_ref, "Label whose quadrant sets the cap")->capture_default_str();
    reb_cmd->add_option("--cap-value", reb_cap, "Explicit density cap");
    reb_cmd->add_option("--out", reb_out, "Merged sample CSV")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Compare soft labels with reference distributions");
    std::string eval_pred, eval_truth, eval_labels, eval_report;
    double eval_eps = metrics::kDefaultEpsilon;
    eval_cmd->add_option("--pred", eval_pred, "Predicted soft-label CSV")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--truth", eval_truth, "Reference distribution CSV (same layout)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--labels", eval_labels, "Categorical labels CSV (id,label)")->check(CLI::ExistingFile);
    eval_cmd->add_option("--report", eval_report, "Report JSON path ('-' for stdout)");
    eval_cmd->add_option("--epsilon", eval_eps, "KL smoothing epsilon");

    // loss-check
    auto* loss_cmd = app.add_subcommand("loss-check", "Verify loss gradients against finite differences");
    std::string loss_variant = "all";
    std::vector<std::size_t> loss_sizes{8, 14};
    std::size_t loss_trials = 100;
    std::uint64_t loss_seed = 7;
    loss_cmd->add_option("--variant", loss_variant, "static | guided | regularized | all")->capture_default_str();
    loss_cmd->add_option("--n", loss_sizes, "Class counts")->capture_default_str();
    loss_cmd->add_option("--trials", loss_trials, "Random instances per (variant, n)")->capture_default_str();
    loss_cmd->add_option("--seed", loss_seed, "Random seed")->capture_default_str();

    // conflicts
    auto* conf_cmd = app.add_subcommand("conflicts", "Derive valence-opposition conflict pairs for a taxonomy");
    std::string conf_tax, conf_out;
    double conf_min = 0.3;
    conf_cmd->add_option("--taxonomy", conf_tax, "Taxonomy or lexicon CSV")->required()->check(CLI::ExistingFile);
    conf_cmd->add_option("--min-abs-valence", conf_min, "Both means must reach this |valence|")->capture_default_str();
    conf_cmd->add_option("--out", conf_out, "Conflict CSV (emotion_a,emotion_b)")->required();

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the human annotation service");
    std::string srv_host = "127.0.0.1", srv_data, srv_images, srv_ui, srv_auto, srv_pool;
    int srv_port = 8080;
    std::uint64_t srv_seed = 0;
    serve_cmd->add_option("--host", srv_host, "Bind address")->envname("EMOBLEND_HOST")->capture_default_str();
    serve_cmd->add_option("--port", srv_port, "Port (0: any free port)")->envname("EMOBLEND_PORT")
        ->capture_default_str();
    serve_cmd->add_option("--data-dir", srv_data, "Directory for the annotation log and snapshot")
        ->envname("EMOBLEND_DATA_DIR")
        ->required();
    serve_cmd->add_option("--image-dir", srv_images, "Image assets served under /images")
        ->envname("EMOBLEND_IMAGE_DIR");
    serve_cmd->add_option("--pool", srv_pool, "Image id list, one per line (default: files in --image-dir)")
        ->envname("EMOBLEND_POOL");
    serve_cmd->add_option("--ui-dir", srv_ui, "Static UI bundle served under /")->envname("EMOBLEND_UI_DIR");
    serve_cmd->add_option("--auto-labels", srv_auto, "Automatic soft-label CSV used by /report")
        ->envname("EMOBLEND_AUTO_LABELS");
    serve_cmd->add_option("--seed", srv_seed, "Session assignment seed")->envname("EMOBLEND_SEED");

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "Run cwde, rebalance, fuse, relabel and evaluate from a config");
    std::string pipe_config;
    pipe_cmd->add_option("--config", pipe_config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cwde_cmd) return run_cwde(cwde_lexicon, cwde_in, cwde_out, cwde_strength, cwde_no_prior);
        if (*fuse_cmd) return run_fuse(fuse_lexicon, fuse_cfg, fuse_tax, fuse_trace);
        if (*rel_cmd) {
            return run_relabel(rel_lexicon, rel_tax, rel_in, rel_out, rel_strength, rel_no_prior, rel_threads,
                               rel_errors);
        }
        if (*reb_cmd) return run_rebalance(reb_primary, reb_aux, reb_ref, reb_cap, reb_out);
        if (*eval_cmd) return run_evaluate(eval_pred, eval_truth, eval_labels, eval_report, eval_eps);
        if (*loss_cmd) return run_loss_check(loss_variant, loss_sizes, loss_trials, loss_seed);
        if (*conf_cmd) {
            auto out = open_out(conf_out);
            loss::write_conflict_pairs(loss::derive_conflict_pairs(load_lexicon(conf_tax), conf_min), out);
            return 0;
        }
        if (*serve_cmd) {
            annotation::AnnotationStore::Options opts;
            opts.data_dir = srv_data;
            opts.seed = srv_seed;
            annotation::AnnotationStore store(image_pool(srv_pool, srv_images), opts);
            annotation::ServerOptions sopts;
            sopts.host = srv_host;
            sopts.port = srv_port;
            sopts.ui_dir = srv_ui;
            sopts.image_dir = srv_images;
            if (!srv_auto.empty()) sopts.automatic_labels = soft_label::load_labels_csv(srv_auto);
            annotation::AnnotationServer server(store, sopts);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const int port = server.start();
            std::cerr << "listening on http://" << srv_host << ':' << port << '\n';
            server.wait();
            g_server = nullptr;
            store.write_snapshot();
            return 0;
        }
        if (*pipe_cmd) {
            const auto result = pipeline::run_pipeline(pipeline::PipelineConfig::load(pipe_config));
            std::cerr << "pipeline ok: " << result.records << " labeled, " << result.rejected << " rejected, "
                      << result.admitted << " auxiliary admitted\n";
            return 0;
        }
    } catch (const pipeline::StageError& e) {
        std::cerr << "error [" << pipeline::to_string(e.stage()) << "]: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
