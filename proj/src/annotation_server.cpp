#include "emoblend/annotation_server.hpp"

#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>

#include "emoblend/error.hpp"

namespace emoblend::annotation {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    reply(res, status, json{{"status", code}, {"message", message}});
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw json::type_error::create(302, "body must be an object", nullptr);
        return body;
    } catch (const json::exception& e) {
        reply_error(res, 400, "bad_request", e.what());
        return std::nullopt;
    }
}

int http_status(SubmitStatus s) {
    switch (s) {
        case SubmitStatus::accepted: return 200;
        case SubmitStatus::unknown_session: return 404;
        case SubmitStatus::image_not_in_session: return 400;
        case SubmitStatus::invalid_scores: return 400;
        case SubmitStatus::duplicate: return 409;
        case SubmitStatus::image_saturated: return 409;
    }
    return 500;
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
    auto& srv = *server_;

    srv.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) return;
        const auto it = body->find("annotator_id");
        if (it == body->end() || !it->is_string() || it->get<std::string>().empty()) {
            reply_error(res, 400, "bad_request", "annotator_id is required");
            return;
        }
        const auto session = store_.assign_session(it->get<std::string>());
        if (!session) {
            reply_error(res, 409, "pool_exhausted", "pool exhausted");
            return;
        }
        json images = json::array();
        for (const auto& id : session->image_ids) images.push_back({{"id", id}, {"url", "/images/" + id}});
        reply(res, 200, {{"session_id", session->session_id}, {"images", images}});
    });

    srv.Post("/annotation", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) return;
        std::map<std::string, double> scores;
        std::string session_id;
        std::string image_id;
        try {
            session_id = body->at("session_id").get<std::string>();
            image_id = body->at("image_id").get<std::string>();
            for (const auto& [k, v] : body->at("scores").items()) scores[k] = v.get<double>();
        } catch (const json::exception& e) {
            reply_error(res, 400, "bad_request", e.what());
            return;
        }
        const auto result = store_.submit(session_id, image_id, scores);
        if (result.status != SubmitStatus::accepted) {
            reply_error(res, http_status(result.status), to_string(result.status), result.message);
            return;
        }
        const auto p = result.normalized->probs.probs();
        reply(res, 200, {{"status", "ok"}, {"normalized", std::vector<double>(p.begin(), p.end())}});
    });

    srv.Get("/report", [this](const httplib::Request&, httplib::Response& res) {
        if (!options_.automatic_labels) {
            reply_error(res, 404, "no_automatic_labels", "server started without automatic labels");
            return;
        }
        try {
            const auto annotations = store_.annotations();
            const auto report = agreement_report(annotations, *options_.automatic_labels);
            res.status = 200;
            res.set_content(to_json(report).dump(), "application/json");
        } catch (const Error& e) {
            reply_error(res, 422, "report_failed", e.what());
        }
    });

    srv.Get("/classes", [](const httplib::Request&, httplib::Response& res) {
        reply(res, 200,
              {{"scored", std::vector<std::string>(kScoredEmotions.begin(), kScoredEmotions.end())},
               {"classes", std::vector<std::string>(kClasses.begin(), kClasses.end())}});
    });

    if (!options_.image_dir.empty()) srv.set_mount_point("/images", options_.image_dir.string());
    if (!options_.ui_dir.empty()) srv.set_mount_point("/", options_.ui_dir.string());
}

int AnnotationServer::bind() {
    if (options_.port == 0) {
        port_ = server_->bind_to_any_port(options_.host);
    } else if (server_->bind_to_port(options_.host, options_.port)) {
        port_ = options_.port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    return port_;
}

int AnnotationServer::start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void AnnotationServer::run() {
    bind();
    server_->listen_after_bind();
}

void AnnotationServer::wait() {
    if (thread_.joinable()) thread_.join();
}

void AnnotationServer::request_stop() {
    if (server_) server_->stop();
}

void AnnotationServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace emoblend::annotation
