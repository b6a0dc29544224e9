#pragma once

#include "httplib.h"
#include "itsgw/gateway/gateway.hpp"

namespace itsgw::gateway {

inline int http_status_for(errc code) {
  switch (code) {
    case errc::queue_full: return 429;
    case errc::not_found: return 404;
    case errc::io_error: return 500;
    default: return 400;
  }
}

inline json error_body(const error& e) { return {{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.message()}}}}; }

inline JobParams parse_params(const json& p, const LabelSchema* labels) {
  JobParams out;
  if (p.is_null()) return out;
  if (!p.is_object()) fail(errc::validation_failed, "params must be an object");
  if (p.contains("label")) {
    const auto& l = p["label"];
    if (l.is_number_unsigned()) {
      out.label = l.get<std::size_t>();
    } else if (l.is_string() && labels) {
      const auto idx = labels->index_of(l.get<std::string>());
      if (!idx) fail(errc::validation_failed, "unknown label '" + l.get<std::string>() + "'");
      out.label = *idx;
    } else {
      fail(errc::validation_failed, "label must be a class name or a non-negative index");
    }
  }
  if (p.contains("task")) out.task = parse_refine_task(p["task"].get<std::string>());
  return out;
}

/// POST body: {"modality", "payload", "params"}.
inline std::string submit_json(Gateway& gw, const json& body) {
  Modality m;
  JobParams params;
  ModalityInput input;
  try {
    m = parse_modality(body.at("modality").get<std::string>());
    const auto c = gw.classifier(m);
    const LabelSchema labels = c ? c->labels : LabelSchema::demo();
    input = parse_payload(m, body.at("payload"), labels);
    params = parse_params(body.value("params", json()), c ? &c->labels : nullptr);
  } catch (const json::exception& e) {
    fail(errc::validation_failed, std::string("bad request body: ") + e.what());
  } catch (const error& e) {
    if (e.code() == errc::validation_failed) throw;
    fail(errc::validation_failed, std::string(to_string(e.code())) + ": " + e.message());
  }
  return gw.submit(std::move(input), params);
}

inline json metrics_json(const std::vector<MetricsRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  return {{"rows", arr}};
}

inline void mount_routes(httplib::Server& srv, Gateway& gw) {
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto guarded = [reply](auto&& fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const error& e) {
        reply(res, http_status_for(e.code()), error_body(e));
      } catch (const json::exception& e) {
        reply(res, 400, error_body(error(errc::validation_failed, e.what())));
      }
    };
  };

  srv.Post("/v1/jobs", guarded([&gw, reply](const httplib::Request& req, httplib::Response& res) {
             json body;
             try {
               body = json::parse(req.body);
             } catch (const json::exception& e) {
               fail(errc::validation_failed, std::string("body is not JSON: ") + e.what());
             }
             reply(res, 202, {{"job_id", submit_json(gw, body)}});
           }));
  srv.Get(R"(/v1/jobs/([^/]+))", guarded([&gw, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, to_json(gw.poll(req.matches[1].str())));
          }));
  srv.Get("/v1/metrics", guarded([&gw, reply](const httplib::Request&, httplib::Response& res) { reply(res, 200, metrics_json(gw.metrics())); }));
  srv.Get("/v1/healthz", guarded([&gw, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, {{"status", "ok"}, {"workers", gw.worker_count()}, {"queue_depth", gw.queue_depth()}});
          }));
  srv.Post("/v1/fuse", guarded([&gw, reply](const httplib::Request& req, httplib::Response& res) {
             const json body = json::parse(req.body);
             std::optional<std::vector<double>> weights;
             if (body.contains("weights")) weights = body["weights"].get<std::vector<double>>();
             const auto ids = body.at("job_ids").get<std::vector<std::string>>();
             const auto fused = gw.fuse_jobs(ids, weights);
             reply(res, 200,
                   {{"distribution", fused.prediction.distribution},
                    {"class_index", fused.prediction.class_index},
                    {"class_name", fused.class_name},
                    {"weights", fused.weights}});
           }));
}

/// "host:port" split; a bare port binds to loopback.
inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : bind.substr(0, colon);
  const std::string port = colon == std::string::npos ? bind : bind.substr(colon + 1);
  const auto p = detail::parse_count("http_bind", port);
  if (p > 65535) fail(errc::invalid_config, "http_bind port out of range");
  return {host.empty() ? "0.0.0.0" : host, static_cast<int>(p)};
}

}  // namespace itsgw::gateway
