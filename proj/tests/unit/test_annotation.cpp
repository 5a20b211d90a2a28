#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "emoblend/annotation.hpp"
#include "emoblend/annotation_server.hpp"
#include "emoblend/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emoblend;
using namespace emoblend::annotation;
using nlohmann::json;

namespace {

std::vector<std::string> make_pool(std::size_t n) {
    std::vector<std::string> pool;
    for (std::size_t i = 0; i < n; ++i) pool.push_back("img" + std::to_string(1000 + i));
    return pool;
}

NormalizedAnnotation norm(std::map<std::string, double> scores) {
    return normalize_annotation(RawAnnotation{"x", std::move(scores), "a"});
}

std::size_t cls(std::string_view name) {
    for (std::size_t i = 0; i < kClasses.size(); ++i) {
        if (kClasses[i] == name) return i;
    }
    return kClasses.size();
}

soft_label::LabelTable label_table(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& rows) {
    soft_label::LabelTable t;
    t.classes.assign(kClasses.begin(), kClasses.end());
    t.ids = ids;
    t.rows = rows;
    return t;
}

}  // namespace

TEST(Normalize, AllZeroIsNeutral) {
    const auto n = norm({});
    for (std::size_t c = 0; c < kClasses.size(); ++c) EXPECT_EQ(n.probs[c], c == kNeutralIndex ? 1.0 : 0.0);
    const auto z = norm({{"happy", 0.0}, {"sad", 0.0}});
    EXPECT_EQ(z.probs[kNeutralIndex], 1.0);
}

TEST(Normalize, SumAboveOneDividesBySum) {
    const auto n = norm({{"happy", 0.8}, {"surprise", 0.4}});
    EXPECT_EQ(n.probs[cls("happy")], 0.8 / (0.8 + 0.4));
    EXPECT_EQ(n.probs[cls("surprised")], 0.4 / (0.8 + 0.4));
    EXPECT_NEAR(n.probs[cls("happy")], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(n.probs[cls("surprised")], 1.0 / 3.0, 1e-15);
    EXPECT_EQ(n.probs[kNeutralIndex], 0.0);
}

TEST(Normalize, SumBelowOneFillsNeutral) {
    const auto n = norm({{"sad", 0.3}, {"fear", 0.2}});
    EXPECT_EQ(n.probs[cls("sad")], 0.3);
    EXPECT_EQ(n.probs[cls("fearful")], 0.2);
    EXPECT_DOUBLE_EQ(n.probs[kNeutralIndex], 0.5);
    EXPECT_EQ(n.probs[cls("happy")], 0.0);
}

TEST(Normalize, SumExactlyOne) {
    const auto n = norm({{"angry", 0.5}, {"disgust", 0.5}});
    EXPECT_EQ(n.probs[cls("angry")], 0.5);
    EXPECT_EQ(n.probs[cls("disgusted")], 0.5);
    EXPECT_EQ(n.probs[kNeutralIndex], 0.0);
}

TEST(Normalize, RejectsBadScores) {
    EXPECT_THROW(norm({{"happy", 1.1}}), ValidationError);
    EXPECT_THROW(norm({{"happy", -0.1}}), ValidationError);
    EXPECT_THROW(norm({{"neutral", 0.5}}), ValidationError);
    EXPECT_THROW(norm({{"bored", 0.5}}), ValidationError);
    EXPECT_THROW(norm({{"happy", 0.2}, {"Happy", 0.3}}), ValidationError);
    EXPECT_THROW(norm({{"happy", std::nan("")}}), ValidationError);
}

TEST(Normalize, PropertyAlwaysADistribution) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution present(0.5);
    for (int trial = 0; trial < 2000; ++trial) {
        std::array<double, 7> s{};
        for (auto& x : s) x = present(rng) ? u(rng) : 0.0;
        const auto n = normalize_scores(s);
        double sum = 0.0;
        double raw = 0.0;
        for (std::size_t c = 0; c < 8; ++c) {
            ASSERT_GE(n.probs[c], 0.0);
            sum += n.probs[c];
        }
        for (double x : s) raw += x;
        ASSERT_NEAR(sum, 1.0, 1e-12);
        if (raw < 1.0) {
            for (std::size_t c = 0; c < 7; ++c) ASSERT_EQ(n.probs[c], s[c]);
        } else {
            ASSERT_EQ(n.probs[kNeutralIndex], 0.0);
        }
    }
}

TEST(Sessions, EmptyAnnotatorRejected) {
    AnnotationStore store(make_pool(3), {});
    EXPECT_THROW(store.assign_session(""), ValidationError);
}

TEST(Sessions, DuplicatePoolIdsRejected) {
    EXPECT_THROW(AnnotationStore({"a", "a"}, {}), ValidationError);
}

TEST(Sessions, SizeWithinBoundsAndDistinct) {
    std::int64_t clock = 0;
    AnnotationStore::Options opt;
    opt.seed = 3;
    opt.reservation_ttl = std::chrono::seconds(1);
    opt.clock = [&] { return clock += 10; };
    AnnotationStore store(make_pool(50), opt);
    std::set<std::size_t> sizes;
    for (int i = 0; i < 200; ++i) {
        const auto s = store.assign_session("ann" + std::to_string(i));
        ASSERT_TRUE(s);
        ASSERT_GE(s->image_ids.size(), 1u);
        ASSERT_LE(s->image_ids.size(), kMaxSessionImages);
        const std::set<std::string> uniq(s->image_ids.begin(), s->image_ids.end());
        ASSERT_EQ(uniq.size(), s->image_ids.size());
        sizes.insert(s->image_ids.size());
    }
    EXPECT_EQ(sizes, (std::set<std::size_t>{1, 2, 3, 4}));
}

TEST(Sessions, SingleImagePool) {
    AnnotationStore store({"only"}, {});
    const auto s = store.assign_session("a");
    ASSERT_TRUE(s);
    ASSERT_EQ(s->image_ids, std::vector<std::string>{"only"});
}

TEST(Sessions, SaturatedImageNeverAssigned) {
    AnnotationStore store({"full", "open"}, {});
    for (const char* who : {"a1", "a2", "a3"}) {
        AnnotationSession s;
        // Repeat until "full" is in the session; each assignment reserves it at most once.
        for (;;) {
            auto got = store.assign_session(who);
            ASSERT_TRUE(got);
            const bool has_full =
                std::find(got->image_ids.begin(), got->image_ids.end(), "full") != got->image_ids.end();
            if (has_full) {
                s = *got;
                break;
            }
        }
        ASSERT_EQ(store.submit(s.session_id, "full", {{"happy", 0.5}}).status, SubmitStatus::accepted);
    }
    EXPECT_EQ(store.annotation_count("full"), 3u);
    for (int i = 0; i < 50; ++i) {
        const auto s = store.assign_session("fresh" + std::to_string(i));
        if (!s) continue;
        for (const auto& id : s->image_ids) ASSERT_NE(id, "full");
    }
}

TEST(Sessions, PoolExhaustedForAnnotator) {
    AnnotationStore store({"a", "b"}, {});
    std::set<std::string> done;
    while (auto s = store.assign_session("solo")) {
        for (const auto& id : s->image_ids) {
            ASSERT_EQ(store.submit(s->session_id, id, {}).status, SubmitStatus::accepted);
            done.insert(id);
        }
    }
    EXPECT_EQ(done, (std::set<std::string>{"a", "b"}));
    EXPECT_FALSE(store.assign_session("solo"));
    EXPECT_TRUE(store.assign_session("other"));
}

TEST(Submit, StatusCodes) {
    AnnotationStore store({"i1", "i2"}, {});
    auto s = store.assign_session("a");
    ASSERT_TRUE(s);
    const auto first = s->image_ids.front();
    const std::string outside = "zz";
    EXPECT_EQ(store.submit("nope", first, {}).status, SubmitStatus::unknown_session);
    EXPECT_EQ(store.submit(s->session_id, outside, {}).status, SubmitStatus::image_not_in_session);
    EXPECT_EQ(store.submit(s->session_id, first, {{"happiness", 2.0}}).status, SubmitStatus::invalid_scores);
    const auto ok = store.submit(s->session_id, first, {{"happiness", 0.25}});
    ASSERT_EQ(ok.status, SubmitStatus::accepted);
    ASSERT_TRUE(ok.normalized);
    EXPECT_EQ(ok.normalized->probs[cls("happy")], 0.25);
    EXPECT_EQ(store.submit(s->session_id, first, {}).status, SubmitStatus::duplicate);
    EXPECT_EQ(store.annotation_count(first), 1u);
    EXPECT_EQ(to_string(SubmitStatus::image_saturated), "image_saturated");
}

TEST(Submit, ConcurrentSimulationHonoursCapAndUniqueness) {
    const auto pool = make_pool(126);
    AnnotationStore::Options opt;
    opt.seed = 11;
    AnnotationStore store(pool, opt);
    std::atomic<std::size_t> accepted{0};
    std::vector<std::thread> threads;
    for (int a = 0; a < 22; ++a) {
        threads.emplace_back([&, a] {
            std::mt19937_64 rng(100 + a);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const std::string who = "annotator" + std::to_string(a);
            while (auto s = store.assign_session(who)) {
                for (const auto& id : s->image_ids) {
                    std::map<std::string, double> scores;
                    for (auto e : kScoredEmotions) scores[std::string(e)] = u(rng) < 0.3 ? u(rng) : 0.0;
                    const auto r = store.submit(s->session_id, id, scores);
                    if (r.status == SubmitStatus::accepted) ++accepted;
                    else ASSERT_EQ(r.status, SubmitStatus::image_saturated);
                }
            }
        });
    }
    for (auto& t : threads) t.join();

    const auto all = store.annotations();
    EXPECT_EQ(all.size(), accepted.load());
    std::map<std::string, std::size_t> per_image;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& a : all) {
        ++per_image[a.image_id];
        EXPECT_TRUE(pairs.emplace(a.annotator_id, a.image_id).second) << a.annotator_id << " " << a.image_id;
    }
    for (const auto& id : pool) {
        EXPECT_LE(per_image[id], kMaxAnnotationsPerImage);
        EXPECT_EQ(store.annotation_count(id), per_image[id]);
    }
    // 22 annotators working until exhaustion saturate every image.
    EXPECT_EQ(all.size(), pool.size() * kMaxAnnotationsPerImage);
}

TEST(Reservations, ExpireAfterTtl) {
    std::int64_t clock = 1'000'000;
    AnnotationStore::Options opt;
    opt.reservation_ttl = std::chrono::seconds(60);
    opt.clock = [&] { return clock; };
    AnnotationStore store({"only"}, opt);
    ASSERT_TRUE(store.assign_session("a"));
    ASSERT_TRUE(store.assign_session("b"));
    ASSERT_TRUE(store.assign_session("c"));
    // Three open reservations fill the cap.
    EXPECT_FALSE(store.assign_session("d"));
    // The same annotator cannot hold two reservations on one image.
    clock += 61;
    const auto d = store.assign_session("d");
    ASSERT_TRUE(d);
    EXPECT_EQ(store.submit(d->session_id, "only", {}).status, SubmitStatus::accepted);
    EXPECT_FALSE(store.assign_session("d"));
}

TEST(Reservations, ActiveReservationBlocksSameAnnotator) {
    std::int64_t clock = 0;
    AnnotationStore::Options opt;
    opt.clock = [&] { return clock; };
    AnnotationStore store({"only"}, opt);
    ASSERT_TRUE(store.assign_session("a"));
    EXPECT_FALSE(store.assign_session("a"));
}

TEST(Persistence, ReloadRestoresState) {
    testutil::TempDir dir;
    AnnotationStore::Options opt;
    opt.data_dir = dir.path();
    opt.seed = 4;
    opt.snapshot_every = 3;
    std::vector<StoredAnnotation> before;
    std::string open_session;
    {
        AnnotationStore store(make_pool(10), opt);
        for (int a = 0; a < 5; ++a) {
            const auto s = store.assign_session("p" + std::to_string(a));
            ASSERT_TRUE(s);
            for (const auto& id : s->image_ids) ASSERT_EQ(store.submit(s->session_id, id, {{"sad", 0.4}}).status,
                                                           SubmitStatus::accepted);
        }
        const auto s = store.assign_session("late");
        ASSERT_TRUE(s);
        open_session = s->session_id;
        before = store.annotations();
    }
    ASSERT_TRUE(std::filesystem::exists(dir / "annotations.jsonl"));
    ASSERT_TRUE(std::filesystem::exists(dir / "state.json"));

    AnnotationStore reloaded(make_pool(10), opt);
    const auto after = reloaded.annotations();
    ASSERT_EQ(after.size(), before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
        EXPECT_EQ(after[i].image_id, before[i].image_id);
        EXPECT_EQ(after[i].annotator_id, before[i].annotator_id);
        EXPECT_EQ(after[i].normalized, before[i].normalized);
    }
    ASSERT_TRUE(reloaded.session(open_session));
    const auto img = reloaded.session(open_session)->image_ids.front();
    EXPECT_EQ(reloaded.submit(open_session, img, {}).status, SubmitStatus::accepted);
    // Duplicates stay rejected across restarts.
    const auto& old = before.front();
    EXPECT_EQ(reloaded.submit(old.session_id, old.image_id, {}).status, SubmitStatus::duplicate);
}

TEST(Persistence, LogOnlyReplay) {
    testutil::TempDir dir;
    AnnotationStore::Options opt;
    opt.data_dir = dir.path();
    opt.snapshot_every = 1000;
    std::size_t n = 0;
    {
        AnnotationStore store(make_pool(4), opt);
        const auto s = store.assign_session("a");
        for (const auto& id : s->image_ids) store.submit(s->session_id, id, {{"happy", 1.0}});
        n = store.annotations().size();
    }
    std::filesystem::remove(dir / "state.json");
    AnnotationStore reloaded(make_pool(4), opt);
    EXPECT_EQ(reloaded.annotations().size(), n);
}

TEST(Persistence, CorruptLogReportsLine) {
    testutil::TempDir dir;
    {
        std::ofstream log(dir / "annotations.jsonl");
        log << "{not json\n";
    }
    AnnotationStore::Options opt;
    opt.data_dir = dir.path();
    EXPECT_THROW(AnnotationStore(make_pool(2), opt), ParseError);
}

TEST(Agreement, IdenticalIsZero) {
    std::vector<StoredAnnotation> anns;
    StoredAnnotation a;
    a.image_id = "x";
    a.normalized = {0.1, 0, 0, 0.2, 0.3, 0, 0, 0.4};
    anns.push_back(a);
    const auto report = agreement_report(anns, label_table({"x"}, {a.normalized}));
    ASSERT_EQ(report.images.size(), 1u);
    EXPECT_NEAR(report.mean_js, 0.0, 1e-15);
    EXPECT_NEAR(report.mean_kl_human_auto, 0.0, 1e-9);
    EXPECT_NEAR(report.mean_kl_auto_human, 0.0, 1e-9);
}

TEST(Agreement, DisjointOneHotIsLn2) {
    StoredAnnotation a;
    a.image_id = "x";
    a.normalized.assign(8, 0.0);
    a.normalized[0] = 1.0;
    std::vector<double> auto_row(8, 0.0);
    auto_row[7] = 1.0;
    const auto report = agreement_report(std::vector<StoredAnnotation>{a}, label_table({"x"}, {auto_row}));
    EXPECT_NEAR(report.mean_js, std::log(2.0), 1e-12);
}

TEST(Agreement, ColumnOrderAndMissingCases) {
    StoredAnnotation a;
    a.image_id = "x";
    a.normalized = {0, 0, 0, 0, 1, 0, 0, 0};
    soft_label::LabelTable t;
    t.classes = {"Neutral", "happiness", "anger", "contempt", "disgust", "fear", "sadness", "surprise"};
    t.ids = {"x"};
    t.rows = {{0, 1, 0, 0, 0, 0, 0, 0}};
    const std::vector<StoredAnnotation> anns{a};
    EXPECT_NEAR(agreement_report(anns, t).mean_js, 0.0, 1e-15);

    t.ids = {"y"};
    EXPECT_THROW(agreement_report(anns, t), ValidationError);
    t.classes.pop_back();
    for (auto& r : t.rows) r.pop_back();
    EXPECT_THROW(agreement_report(anns, t), DimensionError);
}

TEST(Agreement, NoisyDirichletOracle) {
    std::mt19937_64 rng(77);
    std::gamma_distribution<double> g(1.0, 1.0);
    auto dirichlet = [&](double alpha_scale, const std::vector<double>& base) {
        std::vector<double> v(8);
        double s = 0.0;
        for (std::size_t c = 0; c < 8; ++c) {
            std::gamma_distribution<double> gc(alpha_scale * base[c] + 0.05, 1.0);
            v[c] = gc(rng);
            s += v[c];
        }
        for (auto& x : v) x /= s;
        return v;
    };
    std::vector<StoredAnnotation> anns;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> autos;
    std::vector<std::vector<double>> means;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> base(8);
        double s = 0.0;
        for (auto& x : base) s += (x = g(rng));
        for (auto& x : base) x /= s;
        const std::string id = "im" + std::to_string(i);
        ids.push_back(id);
        autos.push_back(base);
        std::vector<double> sum(8, 0.0);
        for (int k = 0; k < 3; ++k) {
            StoredAnnotation a;
            a.image_id = id;
            a.normalized = dirichlet(20.0, base);
            for (std::size_t c = 0; c < 8; ++c) sum[c] += a.normalized[c];
            anns.push_back(a);
        }
        for (auto& x : sum) x /= 3.0;
        means.push_back(sum);
    }
    const auto report = agreement_report(anns, label_table(ids, autos));
    long double js = 0, kl1 = 0, kl2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        js += oracle::js(means[i], autos[i]);
        kl1 += oracle::kl(means[i], autos[i], 1e-10);
        kl2 += oracle::kl(autos[i], means[i], 1e-10);
    }
    const double n = static_cast<double>(ids.size());
    EXPECT_NEAR(report.mean_js, static_cast<double>(js / n), 1e-9);
    EXPECT_NEAR(report.mean_kl_human_auto, static_cast<double>(kl1 / n), 1e-9);
    EXPECT_NEAR(report.mean_kl_auto_human, static_cast<double>(kl2 / n), 1e-9);
    EXPECT_GT(report.mean_js, 0.0);
    double bar_sum = 0.0;
    for (double x : report.human_bars) bar_sum += x;
    EXPECT_NEAR(bar_sum, 1.0, 1e-12);
    const auto j = to_json(report);
    EXPECT_EQ(j["image_count"], 40);
    EXPECT_EQ(j["log_base"], "e");
}

class ServerTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::filesystem::create_directories(dir_ / "images");
        std::filesystem::create_directories(dir_ / "ui");
        std::ofstream(dir_ / "images" / "img1.png") << "PNGDATA";
        std::ofstream(dir_ / "ui" / "index.html") << "<html>ui</html>";
    }

    std::unique_ptr<AnnotationServer> serve(AnnotationStore& store, bool with_labels) {
        ServerOptions opt;
        opt.port = 0;
        opt.image_dir = dir_ / "images";
        opt.ui_dir = dir_ / "ui";
        if (with_labels) {
            std::vector<double> row(8, 0.0);
            row[7] = 1.0;
            opt.automatic_labels = label_table({"img1"}, {row});
        }
        auto server = std::make_unique<AnnotationServer>(store, opt);
        port_ = server->start();
        return server;
    }

    httplib::Client client() { return httplib::Client("127.0.0.1", port_); }

    testutil::TempDir dir_;
    int port_ = 0;
};

TEST_F(ServerTest, SessionAndAnnotationFlow) {
    AnnotationStore store({"img1"}, {});
    auto server = serve(store, true);
    auto cli = client();

    auto bad = cli.Post("/session", "{}", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    auto garbage = cli.Post("/session", "not json", "application/json");
    ASSERT_TRUE(garbage);
    EXPECT_EQ(garbage->status, 400);

    auto res = cli.Post("/session", R"({"annotator_id":"u1"})", "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto session = json::parse(res->body);
    ASSERT_EQ(session["images"].size(), 1u);
    EXPECT_EQ(session["images"][0]["id"], "img1");
    EXPECT_EQ(session["images"][0]["url"], "/images/img1");
    const std::string sid = session["session_id"];

    auto post_ann = [&](const std::string& s, const std::string& img, const json& scores) {
        return cli.Post("/annotation", json{{"session_id", s}, {"image_id", img}, {"scores", scores}}.dump(),
                        "application/json");
    };
    EXPECT_EQ(post_ann("missing", "img1", json::object())->status, 404);
    EXPECT_EQ(post_ann(sid, "other", json::object())->status, 400);
    EXPECT_EQ(post_ann(sid, "img1", {{"happy", 3}})->status, 400);
    auto ok = post_ann(sid, "img1", {{"happy", 0.8}, {"surprise", 0.4}});
    ASSERT_EQ(ok->status, 200);
    const auto body = json::parse(ok->body);
    EXPECT_EQ(body["status"], "ok");
    EXPECT_NEAR(body["normalized"][cls("happy")].get<double>(), 2.0 / 3.0, 1e-15);
    auto dup = post_ann(sid, "img1", json::object());
    EXPECT_EQ(dup->status, 409);
    EXPECT_EQ(json::parse(dup->body)["status"], "duplicate");

    auto report = cli.Get("/report");
    ASSERT_EQ(report->status, 200);
    const auto rj = json::parse(report->body);
    EXPECT_EQ(rj["image_count"], 1);

    auto exhausted = cli.Post("/session", R"({"annotator_id":"u1"})", "application/json");
    EXPECT_EQ(exhausted->status, 409);
    EXPECT_EQ(json::parse(exhausted->body)["status"], "pool_exhausted");
    server->stop();
}

TEST_F(ServerTest, ReportWithoutLabelsAndStatic) {
    AnnotationStore store({"img1"}, {});
    auto server = serve(store, false);
    auto cli = client();
    EXPECT_EQ(cli.Get("/report")->status, 404);

    auto classes = cli.Get("/classes");
    ASSERT_EQ(classes->status, 200);
    const auto cj = json::parse(classes->body);
    EXPECT_EQ(cj["classes"].size(), 8u);
    EXPECT_EQ(cj["classes"][7], "neutral");
    EXPECT_EQ(cj["scored"].size(), 7u);

    auto image = cli.Get("/images/img1.png");
    ASSERT_EQ(image->status, 200);
    EXPECT_EQ(image->body, "PNGDATA");
    auto index = cli.Get("/");
    ASSERT_EQ(index->status, 200);
    EXPECT_EQ(index->body, "<html>ui</html>");
    EXPECT_EQ(cli.Get("/images/missing.png")->status, 404);
    server->stop();
}
