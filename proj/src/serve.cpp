// SPDX-License-Identifier: Apache-2.0
#include "gnelf/serve.hpp"

#include <cmath>
#include <numbers>

#include "gnelf/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace gnelf {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

struct RenderRequest {
  geometry::Pose pose;
  int width = 0;
  int height = 0;
  int scale = 1;
  std::optional<double> fov_y;
};

// Throws InputDomainError for malformed requests.
RenderRequest parse_request(const std::string& body, std::uint64_t max_pixels, bool& too_large) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw InputDomainError(std::string("body is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InputDomainError("body must be a JSON object");
  RenderRequest req;
  try {
    if (!doc.at("width").is_number_integer() || !doc.at("height").is_number_integer()) {
      throw InputDomainError("width and height must be integers");
    }
    const auto w = doc["width"].get<std::int64_t>();
    const auto h = doc["height"].get<std::int64_t>();
    if (w < 1 || h < 1) throw InputDomainError("width and height must be positive");
    if (static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h) > max_pixels) {
      too_large = true;
      throw InputDomainError("requested " + std::to_string(w) + "x" + std::to_string(h) +
                             " exceeds the pixel budget of " + std::to_string(max_pixels));
    }
    req.width = static_cast<int>(w);
    req.height = static_cast<int>(h);
    if (doc.contains("scale")) {
      if (!doc["scale"].is_number_integer()) throw InputDomainError("scale must be an integer");
      req.scale = doc["scale"].get<int>();
    }
    if (req.scale != 1 && req.scale != 2 && req.scale != 4 && req.scale != 8) {
      throw InputDomainError("scale must be 1, 2, 4 or 8");
    }
    if (req.width % req.scale != 0 || req.height % req.scale != 0) {
      throw InputDomainError("scale must divide width and height");
    }
    if (doc.contains("fov_y")) {
      const double f = doc["fov_y"].get<double>();
      if (!(f > 0.0 && f < 180.0)) throw InputDomainError("fov_y must lie in (0, 180) degrees");
      req.fov_y = f;
    }
    const bool has_pose = doc.contains("pose");
    const bool has_orbit = doc.contains("orbit");
    if (has_pose == has_orbit) throw InputDomainError("exactly one of pose and orbit is required");
    if (has_pose) {
      const auto& p = doc["pose"];
      if (!p.is_array() || p.size() != 16) throw InputDomainError("pose must hold 16 numbers");
      std::array<double, 16> rows{};
      for (int i = 0; i < 16; ++i) rows[i] = p[i].get<double>();
      req.pose = geometry::Pose::from_rows(rows);
      req.pose.validate();
    } else {
      const auto& o = doc["orbit"];
      geometry::Orbit orbit;
      orbit.azimuth_deg = o.at("azimuth").get<double>();
      orbit.elevation_deg = o.at("elevation").get<double>();
      orbit.radius = o.at("radius").get<double>();
      if (!std::isfinite(orbit.azimuth_deg) || !std::isfinite(orbit.elevation_deg) ||
          !(orbit.radius > 0.0) || !std::isfinite(orbit.radius)) {
        throw InputDomainError("orbit needs finite angles and a positive radius");
      }
      req.pose = geometry::orbit_pose(orbit);
    }
  } catch (const json::exception& e) {
    throw InputDomainError(std::string("malformed request: ") + e.what());
  }
  return req;
}

}  // namespace

RenderService::RenderService(Model model, std::string checkpoint_hash, ServeOptions options)
    : model_(std::move(model)), hash_(std::move(checkpoint_hash)), options_(std::move(options)) {}

std::shared_ptr<RenderService::Session> RenderService::session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto& s = sessions_[id];
  if (!s) s = std::make_shared<Session>();
  return s;
}

HttpReply RenderService::render(const std::string& body, const std::string& session_id) {
  RenderRequest req;
  try {
    bool too_large = false;
    try {
      req = parse_request(body, options_.max_pixels, too_large);
    } catch (const InputDomainError& e) {
      return error_reply(too_large ? 413 : 400, e.what());
    }
  } catch (const std::exception& e) {
    return error_reply(400, e.what());
  }

  auto s = session(session_id);
  std::unique_lock lock(s->mutex);
  const std::uint64_t ticket = ++s->latest;
  s->cv.notify_all();
  s->cv.wait(lock, [&] { return !s->busy || s->latest != ticket; });
  if (s->latest != ticket) return error_reply(503, "superseded by a newer request from this session");
  s->busy = true;
  lock.unlock();

  HttpReply reply;
  try {
    const auto& base = model_.intrinsics;
    const double focal = req.fov_y ? 0.5 * req.height / std::tan(0.5 * *req.fov_y * std::numbers::pi / 180.0)
                                   : base.focal * req.height / base.height;
    const auto cam = geometry::CameraIntrinsics::centered(req.width, req.height, focal);
    RenderOptions opts;
    opts.threads = options_.threads;
    const auto png = encode_png(render_image(model_, cam, req.pose, req.scale, opts));
    reply = {200, "image/png", std::string(png.begin(), png.end())};
  } catch (const std::exception& e) {
    reply = error_reply(500, e.what());
  }

  lock.lock();
  s->busy = false;
  s->cv.notify_all();
  return reply;
}

HttpReply RenderService::meta() const {
  const auto& box = model_.config.aabb;
  const auto& cam = model_.intrinsics;
  json doc;
  doc["preset"] = model_.config.name;
  doc["parameter_count"] = model_.parameter_count();
  doc["aabb"] = {{"min", {box.min.x, box.min.y, box.min.z}}, {"max", {box.max.x, box.max.y, box.max.z}}};
  doc["intrinsics"] = {{"width", cam.width}, {"height", cam.height}, {"focal", cam.focal},
                       {"cx", cam.cx}, {"cy", cam.cy}};
  doc["scene_mode"] = to_string(model_.config.mode);
  doc["background"] = {model_.config.background[0], model_.config.background[1],
                       model_.config.background[2]};
  doc["checkpoint_hash"] = hash_;
  return {200, "application/json", doc.dump()};
}

struct HttpServer::Impl {
  RenderService& service;
  httplib::Server server;
  explicit Impl(RenderService& s) : service(s) {}
};

HttpServer::HttpServer(RenderService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Post("/render", [this, send](const httplib::Request& req, httplib::Response& res) {
    const std::string session = req.has_header("X-Session") ? req.get_header_value("X-Session") : req.remote_addr;
    send(res, impl_->service.render(req.body, session));
  });
  srv.Get("/meta", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, impl_->service.meta());
  });
  srv.Options(R"(/(render|meta))", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Session");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace gnelf
