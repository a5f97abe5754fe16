#pragma once

// HTTP front end (/v1) over SnapshotStore and SessionManager.

#include <httplib.h>

#include <string>

#include "cnnvis/service.hpp"

namespace cnnvis {

inline int http_status(Errc code) {
  switch (code) {
    case Errc::not_found: return 404;
    case Errc::version_conflict: return 409;
    case Errc::invalid_argument: return 400;
    default: return 422;
  }
}

/// Query string to view state: facet, classes (comma separated names),
/// tau, stop, edgeFacet. Clustering knobs: method, k, bandwidth, seed.
inline std::pair<LayoutParams, ViewState> layout_request(const httplib::Request& req, const NetworkSnapshot& s) {
  LayoutParams p;
  ViewState v;
  auto number = [&](const char* key) {
    const auto text = req.get_param_value(key);
    try {
      std::size_t used = 0;
      const double x = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(key);
      return x;
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, std::string("query parameter '") + key + "' is not a number");
    }
  };
  if (req.has_param("facet")) v.facet = facet_from_string(req.get_param_value("facet"));
  if (req.has_param("edgeFacet")) v.edge_facet = edge_facet_from_string(req.get_param_value("edgeFacet"));
  if (req.has_param("tau")) v.tau = number("tau");
  if (req.has_param("stop")) v.stop = number("stop");
  if (req.has_param("classes")) {
    std::stringstream ss(req.get_param_value("classes"));
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      auto it = std::find(s.classes().begin(), s.classes().end(), name);
      if (it == s.classes().end()) throw Error(Errc::invalid_argument, "unknown class '" + name + "'");
      v.classes.push_back(static_cast<std::size_t>(it - s.classes().begin()));
    }
  }
  json pj = json::object();
  if (req.has_param("method")) pj["method"] = req.get_param_value("method");
  if (req.has_param("k")) pj["kmeansK"] = static_cast<std::size_t>(number("k"));
  if (req.has_param("bandwidth")) pj["bandwidth"] = number("bandwidth");
  if (req.has_param("seed")) pj["seed"] = static_cast<std::uint64_t>(number("seed"));
  p = params_from_json(pj);
  return {p, v};
}

class Server {
 public:
  explicit Server(std::filesystem::path data_dir) : store_(std::move(data_dir)), sessions_(store_) { routes(); }

  bool listen(const std::string& host, int port) { return http_.listen(host, port); }
  int bind_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() { http_.wait_until_ready(); }

  SnapshotStore& store() { return store_; }
  SessionManager& sessions() { return sessions_; }

 private:
  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), json{{"error", to_string(e.code())}, {"message", e.what()}});
      } catch (const json::exception& e) {
        reply(res, 400, json{{"error", "InvalidArgument"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, json{{"error", "Internal"}, {"message", e.what()}});
      }
    };
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static json body_json(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw Error(Errc::invalid_argument, std::string("request body is not JSON: ") + e.what());
    }
  }

  json session_view(Session& s) {
    std::lock_guard lock(s.mutex());
    return json{{"sessionId", s.id()},
                {"snapshotId", s.snapshot_id()},
                {"version", s.version()},
                {"depth", s.depth()},
                {"layout", layout_to_json(s.snapshot(), s.document())}};
  }

  void routes() {
    http_.Post("/v1/snapshots", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 try {
                   const auto id = store_.ingest(req.body);
                   reply(res, 201, json{{"id", id}});
                 } catch (const Error& e) {
                   reply(res, 422, json{{"error", to_string(e.code())}, {"message", e.what()}});
                 }
               }));

    http_.Get(R"(/v1/snapshots/([^/]+)/layout)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto snap = store_.get(req.matches[1]);
                const auto [p, v] = layout_request(req, *snap);
                res.status = 200;
                res.set_content(store_.layout(snap->id(), p, v), "application/json");
              }));

    http_.Get(R"(/v1/snapshots/([^/]+)/debug/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto snap = store_.get(req.matches[1]);
                const auto kind = debug_kind_from_string(req.matches[2].str());
                json layers = json::array(), series = json::array();
                for (const auto& g : snap->groups()) layers.push_back(snap->layers()[g.display_layer].name);
                for (const auto& x : debug_series(*snap, kind)) series.push_back(x ? json(*x) : json(nullptr));
                reply(res, 200, json{{"kind", to_string(kind)}, {"layers", layers}, {"series", series}});
              }));

    http_.Get(R"(/v1/snapshots/([^/]+)/neurons/(.+)/patches)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto snap = store_.get(req.matches[1]);
                const auto neuron = req.matches[2].str();
                if (!snap->find_neuron(neuron)) throw Error(Errc::not_found, "unknown neuron '" + neuron + "'");
                json out = json::array();
                for (const auto& p : top_patches(*snap, neuron, 5)) {
                  json pj{{"imageId", p.image_id}, {"activationScore", p.activation_score}};
                  if (p.pixels)
                    pj["pixels"] = json{{"width", p.pixels->width}, {"height", p.pixels->height}, {"values", p.pixels->values}};
                  out.push_back(pj);
                }
                reply(res, 200, json{{"neuron", neuron}, {"patches", out}});
              }));

    http_.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto body = body_json(req);
                 if (!body.contains("snapshotId") || !body["snapshotId"].is_string())
                   throw Error(Errc::invalid_argument, "snapshotId is required");
                 auto s = sessions_.create(body["snapshotId"].get<std::string>(),
                                           params_from_json(body.value("params", json::object())));
                 reply(res, 201, json{{"sessionId", s->id()}, {"version", s->version()}});
               }));

    http_.Get(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = sessions_.get(req.matches[1]);
                reply(res, 200, session_view(*s));
              }));

    http_.Post(R"(/v1/sessions/([^/]+)/commands)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = sessions_.get(req.matches[1]);
                 const auto body = body_json(req);
                 if (!body.contains("expectedVersion") || !body["expectedVersion"].is_number_unsigned())
                   throw Error(Errc::invalid_argument, "expectedVersion is required");
                 if (!body.contains("command")) throw Error(Errc::invalid_argument, "command is required");
                 const auto cmd = command_from_json(body["command"]);
                 sessions_.command(*s, body["expectedVersion"].get<std::uint64_t>(), cmd);
                 reply(res, 200, session_view(*s));
               }));

    http_.Get(R"(/v1/sessions/([^/]+)/undo)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto s = sessions_.get(req.matches[1]);
                sessions_.undo(*s);
                reply(res, 200, session_view(*s));
              }));
  }

  SnapshotStore store_;
  SessionManager sessions_;
  httplib::Server http_;
};

}  // namespace cnnvis
