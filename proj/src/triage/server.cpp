#include <httplib.h>

#include <thread>

#include "replica/error.hpp"
#include "replica/triage.hpp"

namespace replica::triage {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

constexpr const char* kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>replica triage</title></head>
<body>
<h1>replica triage service</h1>
<p>No frontend bundle was configured. API endpoints:</p>
<ul>
<li>GET /api/session</li>
<li>GET /api/pairs?offset=&amp;limit=&amp;filter=&amp;annotator=</li>
<li>GET /api/clips/{id}/audio</li>
<li>GET /api/clips/{id}/spectrogram</li>
<li>POST /api/verdicts</li>
<li>GET /api/summary?policy=&amp;annotator=</li>
<li>GET /api/clusters</li>
</ul>
</body></html>
)";

std::size_t param_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument(name);
    }
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(name);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ContractError(std::string("invalid ") + name + " '" + v + "'");
  }
}

std::optional<std::string> param_opt(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty()) return std::nullopt;
  return req.get_param_value(name);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), kJson);
}

// Maps exceptions to HTTP status codes.
template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const ContractError& e) {
      send_error(res, 400, e.what());
    } catch (const FormatError& e) {
      send_error(res, 400, e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

struct TriageServer::Impl {
  TriageService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(TriageService& s) : service(s) {}
};

TriageServer::TriageServer(TriageService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  auto& svc = impl_->service;

  svr.Get("/api/session", guarded([&svc](const auto&, auto& res) {
            res.set_content(svc.session_info().dump(), kJson);
          }));
  svr.Get("/api/pairs", guarded([&svc](const auto& req, auto& res) {
            const std::string filter = req.has_param("filter") ? req.get_param_value("filter") : "all";
            const json page = svc.pairs(param_size(req, "offset", 0), param_size(req, "limit", 50),
                                        filter, param_opt(req, "annotator"));
            res.set_content(page.dump(), kJson);
          }));
  svr.Get(R"(/api/clips/(.+)/audio)", guarded([&svc](const auto& req, auto& res) {
            res.set_content(svc.audio_bytes(ClipId(req.matches[1].str())), "audio/wav");
          }));
  svr.Get(R"(/api/clips/(.+)/spectrogram)", guarded([&svc](const auto& req, auto& res) {
            res.set_content(svc.spectrogram_png(ClipId(req.matches[1].str())), "image/png");
          }));
  svr.Post("/api/verdicts", guarded([&svc](const auto& req, auto& res) {
             json body;
             try {
               body = json::parse(req.body);
             } catch (const json::parse_error& e) {
               throw ContractError(std::string("invalid JSON body: ") + e.what());
             }
             res.set_content(svc.post_verdict(body).dump(), kJson);
           }));
  svr.Get("/api/summary", guarded([&svc](const auto& req, auto& res) {
            SummaryOptions opts;
            if (auto p = param_opt(req, "policy")) opts.policy = consensus_policy_from_string(*p);
            opts.annotator = param_opt(req, "annotator");
            res.set_content(svc.summary(opts).dump(), kJson);
          }));
  svr.Get("/api/clusters", guarded([&svc](const auto&, auto& res) {
            res.set_content(svc.clusters().dump(), kJson);
          }));

  if (!static_dir.empty()) {
    if (!svr.set_mount_point("/", static_dir.string())) {
      throw InputError("static asset directory not found: " + static_dir.string(),
                       {static_dir.string()});
    }
  } else {
    svr.Get("/", [](const auto&, auto& res) { res.set_content(kIndexPage, "text/html"); });
  }
}

TriageServer::~TriageServer() { stop(); }

int TriageServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = svr.bind_to_any_port(host);
  } else if (!svr.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw InputError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return bound;
}

void TriageServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw InputError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void TriageServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace replica::triage
