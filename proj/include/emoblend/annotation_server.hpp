#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "emoblend/annotation.hpp"
#include "emoblend/soft_label.hpp"

namespace httplib {
class Server;
}

namespace emoblend::annotation {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0: pick a free port
    std::filesystem::path ui_dir;
    std::filesystem::path image_dir;
    std::optional<soft_label::LabelTable> automatic_labels;
};

/// HTTP/JSON front end over an AnnotationStore.
///   POST /session     {annotator_id}                       -> {session_id, images: [{id, url}]}
///   POST /annotation  {session_id, image_id, scores: {...}} -> {status, normalized: [8]}
///   GET  /report                                            -> agreement JSON
///   GET  /classes                                           -> class order
/// Static files: the UI bundle at /, images at /images/.
class AnnotationServer {
public:
    AnnotationServer(AnnotationStore& store, ServerOptions options);
    ~AnnotationServer();

    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Bind and serve on a background thread. Returns the bound port.
    int start();
    /// Bind and serve on the calling thread until stop().
    void run();
    /// Block until a started server stops.
    void wait();
    /// Ask the listener to exit; safe from a signal handler.
    void request_stop();
    void stop();
    int port() const noexcept { return port_; }

private:
    void install_routes();
    int bind();

    AnnotationStore& store_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace emoblend::annotation
