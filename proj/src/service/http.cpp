// httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen; keep it last.
#include "ivsg/core/error.hpp"
#include "ivsg/service/service.hpp"

#include <httplib.h>

namespace ivsg::service {

struct HttpServer::Impl {
  SessionManager& manager;
  httplib::Server server;
  explicit Impl(SessionManager& m) : manager(m) {}
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int parse_frame(const std::string& text) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ServiceError(422, "invalid", "frame index must be an integer", "frame");
}

nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_json(res, e.status(), e.to_json());
    } catch (const FormatError& e) {
      send_json(res, 422, ServiceError(422, "invalid", e.what(), e.path()).to_json());
    } catch (const ContractError& e) {
      send_json(res, 422, ServiceError(422, "invalid", e.what()).to_json());
    } catch (const std::exception& e) {
      send_json(res, 500, ServiceError(500, "internal", e.what()).to_json());
    }
  };
}

}  // namespace

HttpServer::HttpServer(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {
  auto& s = impl_->server;
  auto& m = impl_->manager;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/health", guarded([&](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ok"}, {"api_version", kApiVersion}, {"sessions", m.size()}});
        }));
  s.Post("/sessions", guarded([&](const httplib::Request& req, httplib::Response& res) {
           std::string id;
           if (req.is_multipart_form_data()) {
             if (!req.has_file("document")) throw ServiceError(400, "bad_request", "multipart upload needs 'document'");
             nlohmann::json body{{"document", parse_body(req.get_file_value("document").content)}};
             const std::string frames = req.has_file("frames") ? req.get_file_value("frames").content : std::string{};
             id = m.create_session(body, frames);
           } else {
             id = m.create_session(parse_body(req.body));
           }
           send_json(res, 201, m.describe(id));
         }));
  s.Get("/sessions/:id", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, m.describe(req.path_params.at("id")));
        }));
  s.Delete("/sessions/:id", guarded([&](const httplib::Request& req, httplib::Response& res) {
             m.remove(req.path_params.at("id"));
             res.status = 204;
           }));
  s.Post("/sessions/:id/prompts", guarded([&](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, m.submit_prompt(req.path_params.at("id"), parse_body(req.body)));
         }));
  s.Get("/sessions/:id/graph", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, m.graph(req.path_params.at("id")));
        }));
  s.Get("/sessions/:id/frames/:t", guarded([&](const httplib::Request& req, httplib::Response& res) {
          res.status = 200;
          res.set_content(m.frame_png(req.path_params.at("id"), parse_frame(req.path_params.at("t"))), "image/png");
        }));
  s.Get("/sessions/:id/frames/:t/overlays", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, m.overlays(req.path_params.at("id"), parse_frame(req.path_params.at("t"))));
        }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace ivsg::service
