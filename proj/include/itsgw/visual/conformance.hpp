#pragma once

// Protocol conformance checks any external backend must pass before the
// gateway relies on it. Used by `itsgw backend-check`.

#include <algorithm>

#include "itsgw/visual/backend_client.hpp"

namespace itsgw::visual {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  bool passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

namespace detail {

inline GrayImage conformance_frame(std::size_t k) {
  GrayImage img{16, 16, std::vector<std::uint8_t>(256)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 7 + k * 31) % 256);
  return img;
}

}  // namespace detail

/// handshake, 50 interleaved caption/refine requests, malformed-line
/// recovery, and end-of-stream shutdown.
inline ConformanceReport run_conformance(const BackendEndpoint& endpoint, std::chrono::milliseconds timeout,
                                         std::size_t interleaved = 50) {
  using clock = BackendConnection::clock;
  ConformanceReport report;
  auto record = [&](std::string name, bool ok, std::string detail) { report.checks.push_back({std::move(name), ok, std::move(detail)}); };

  std::unique_ptr<BackendConnection> conn;
  BackendInfo info;
  try {
    conn = BackendConnection::open(endpoint);
    conn->send_line(hello_message().dump(), clock::now() + timeout);
    info = parse_hello(conn->read_line(clock::now() + timeout));
    const bool ok = info.capabilities.contains("caption");
    record("handshake", ok, ok ? "backend id " + info.id : "capabilities lack \"caption\"");
    if (!ok) return report;
  } catch (const error& e) {
    record("handshake", false, e.what());
    return report;
  }

  // ids are sent in order; responses may come back in any order
  try {
    std::string wire;
    std::map<std::int64_t, std::string> expected;
    for (std::size_t k = 0; k < interleaved; ++k) {
      const auto id = static_cast<std::int64_t>(1000 + k);
      json req;
      if (k % 2 == 0 || !info.capabilities.contains("refine")) {
        req = {{"v", kProtocolVersion}, {"type", "caption_req"}, {"id", id}, {"image_pgm_b64", base64_encode(encode_pgm(detail::conformance_frame(k)))}};
        expected[id] = "caption_res";
      } else {
        req = {{"v", kProtocolVersion}, {"type", "refine_req"}, {"id", id}, {"task", "summarize"}, {"captions", {"a", "a", "b"}}};
        expected[id] = "refine_res";
      }
      wire += req.dump() + "\n";
    }
    conn->write_all(wire, clock::now() + timeout * 4);
    std::vector<std::int64_t> order;
    std::string problem;
    while (order.size() < expected.size() && problem.empty()) {
      const json j = json::parse(conn->read_line(clock::now() + timeout));
      const auto id = j.value("id", std::int64_t{-1});
      const auto it = expected.find(id);
      if (it == expected.end())
        problem = "unexpected id " + j.value("id", json()).dump();
      else if (std::find(order.begin(), order.end(), id) != order.end())
        problem = "id " + std::to_string(id) + " answered twice";
      else if (j.value("type", "") != it->second)
        problem = "id " + std::to_string(id) + " answered with type '" + j.value("type", "") + "'";
      else if (j.value(it->second == "caption_res" ? "caption" : "text", std::string()).empty())
        problem = "id " + std::to_string(id) + " has an empty result";
      order.push_back(id);
    }
    const bool reordered = !std::is_sorted(order.begin(), order.end());
    record("interleaved_requests", problem.empty(),
           problem.empty() ? std::to_string(order.size()) + " responses" + (reordered ? ", out of order" : ", in order") : problem);
  } catch (const std::exception& e) {
    record("interleaved_requests", false, e.what());
    return report;
  }

  try {
    conn->send_line("{this is not json", clock::now() + timeout);
    const json err = json::parse(conn->read_line(clock::now() + timeout));
    const bool err_ok = err.value("type", "") == "err" && err.value("code", "") == "bad_request";
    json req = {{"v", kProtocolVersion}, {"type", "caption_req"}, {"id", 1}, {"image_pgm_b64", base64_encode(encode_pgm(detail::conformance_frame(0)))}};
    conn->send_line(req.dump(), clock::now() + timeout);
    const json after = json::parse(conn->read_line(clock::now() + timeout));
    const bool continued = after.value("type", "") == "caption_res" && after.value("id", -1) == 1;
    record("malformed_line_recovery", err_ok && continued,
           !err_ok ? "expected err{bad_request}, got " + err.dump() : !continued ? "session did not continue: " + after.dump() : "ok");
  } catch (const std::exception& e) {
    record("malformed_line_recovery", false, e.what());
  }

  const bool closed = conn->shutdown_gracefully(clock::now() + timeout);
  record("end_of_stream_shutdown", closed, closed ? "ok" : "backend kept the stream open after end of input");
  return report;
}

}  // namespace itsgw::visual
