#include "etcdet/service.hpp"

#include "etcdet/io.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <thread>

namespace etc {

using nlohmann::json;

DatasetManifest service_manifest(const LabelStore& store, double split_ratio, std::uint64_t seed) {
  const auto snap = store.snapshot();
  std::vector<Annotation> all;
  all.reserve(snap->annotations.size());
  for (const auto& [id, a] : snap->annotations) all.push_back(a);
  auto manifest = assemble_manifest(all);
  manifest.seed = seed;
  if (split_ratio > 0.0 && !manifest.entries.empty()) {
    manifest = split_train_test(std::move(manifest.entries), split_ratio, seed);
  }
  return manifest;
}

namespace {

/// Maps to an HTTP status at the route boundary.
struct HttpError {
  int status;
  std::string message;
};

json parse_body(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw HttpError{400, "request body must be a JSON object"};
    return j;
  } catch (const json::parse_error& e) {
    throw HttpError{400, std::string("malformed JSON: ") + e.what()};
  }
}

std::string require_actor(const httplib::Request& req) {
  const auto actor = req.get_header_value("X-Actor");
  if (actor.empty()) throw HttpError{400, "missing X-Actor header"};
  return actor;
}

std::optional<ActorRole> session_role(const httplib::Request& req) {
  if (!req.has_header("X-Role")) return std::nullopt;
  const auto role = parse_actor_role(req.get_header_value("X-Role"));
  if (!role) throw HttpError{400, "X-Role must be annotator or reviewer"};
  return role;
}

BoundingBox parse_box(const json& j) {
  if (!j.is_object()) throw HttpError{400, "box must be an object"};
  for (const char* k : {"xmin", "ymin", "xmax", "ymax"}) {
    if (!j.contains(k) || !j.at(k).is_number()) throw HttpError{400, std::string("box.") + k + " must be a number"};
  }
  return {j.at("xmin").get<double>(), j.at("ymin").get<double>(), j.at("xmax").get<double>(),
          j.at("ymax").get<double>()};
}

StageClass parse_stage_field(const json& body) {
  if (!body.contains("stage") || !body.at("stage").is_string()) throw HttpError{400, "stage must be a string"};
  const auto s = parse_stage(body.at("stage").get<std::string>());
  if (!s) throw HttpError{400, "stage must be developing, mature or declining"};
  return *s;
}

int review_status(ReviewErrorCode code) {
  switch (code) {
    case ReviewErrorCode::IllegalTransition:
    case ReviewErrorCode::SelfReview: return 409;
    case ReviewErrorCode::MissingNote: return 400;
    case ReviewErrorCode::UnknownAnnotation: return 404;
    case ReviewErrorCode::InvalidBox: return 422;
  }
  return 500;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

struct ApiServer::Impl {
  ServiceOptions opt;
  LabelStore& store;
  httplib::Server server;
  std::thread thread;

  Impl(ServiceOptions o, LabelStore& s) : opt(std::move(o)), store(s) { routes(); }

  void send_json(httplib::Response& res, json body, int status = 200) {
    const auto v = store.version();
    body["version"] = v;
    res.status = status;
    res.set_header("X-Store-Version", std::to_string(v));
    res.set_content(body.dump(), "application/json");
  }

  /// Runs a handler, turning domain exceptions into status codes.
  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_json(res, {{"error", e.message}}, e.status);
      } catch (const ReviewError& e) {
        send_json(res, {{"error", e.what()}}, review_status(e.code()));
      } catch (const GridError& e) {
        send_json(res, {{"error", e.what()}}, 404);
      } catch (const json::exception& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const std::invalid_argument& e) {
        send_json(res, {{"error", e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  }

  int frame_param(const httplib::Request& req) {
    const int i = std::stoi(req.matches[1]);
    if (!opt.catalog.contains(i)) throw HttpError{404, "unknown frame " + std::string(req.matches[1])};
    return i;
  }

  void routes() {
    server.Get("/api/frames", guarded([this](const httplib::Request& req, httplib::Response& res) {
      int page = 0, size = opt.page_size;
      if (req.has_param("page")) page = std::stoi(req.get_param_value("page"));
      if (req.has_param("page_size")) size = std::stoi(req.get_param_value("page_size"));
      if (page < 0 || size < 1) throw HttpError{400, "page must be >= 0 and page_size >= 1"};
      const auto snap = store.snapshot();
      std::map<int, std::pair<int, int>> counts;  // frame -> (all, consensus)
      for (const auto& [id, a] : snap->annotations) {
        auto& c = counts[a.frame_index];
        ++c.first;
        if (a.review == ReviewState::Consensus) ++c.second;
      }
      const auto& frames = opt.catalog.frames();
      json list = json::array();
      const std::size_t begin = static_cast<std::size_t>(page) * static_cast<std::size_t>(size);
      for (std::size_t i = begin; i < frames.size() && i < begin + static_cast<std::size_t>(size); ++i) {
        const auto& f = frames[i];
        const auto c = counts[f.index];
        list.push_back({{"index", f.index},
                        {"timestamp", f.timestamp},
                        {"time", iso8601_utc(f.timestamp)},
                        {"has_image", f.ttr.has_value()},
                        {"has_mslp", f.mslp.has_value()},
                        {"annotations", c.first},
                        {"consensus", c.second}});
      }
      send_json(res, {{"page", page}, {"page_size", size}, {"total", frames.size()}, {"frames", list}});
    }));

    server.Get(R"(/api/frames/(\d+)/image\.png)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int i = frame_param(req);
      const auto& rec = opt.catalog.frame(i);
      if (!rec.ttr) throw HttpError{404, "frame " + std::to_string(i) + " has no TTR grid"};
      const auto bytes = read_file_bytes(opt.catalog.data_dir() / *rec.ttr);
      const auto key = "frame_" + std::to_string(i) + "_" + hex64(fnv1a64(bytes.data(), bytes.size())) + ".png";
      const auto cached = opt.cache_dir / key;
      std::vector<std::uint8_t> png;
      if (!opt.cache_dir.empty() && std::filesystem::exists(cached)) {
        png = read_file_bytes(cached);
      } else {
        png = encode_png(render_image(decode_grid(bytes, FieldKind::TTR)));
        if (!opt.cache_dir.empty()) write_file_atomic(cached, png);
      }
      res.set_header("X-Store-Version", std::to_string(store.version()));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Get(R"(/api/frames/(\d+)/suggestions)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const int i = frame_param(req);
      const auto grid = opt.catalog.load_field(i, FieldKind::MSLP);
      json centers = json::array();
      for (const auto& c : find_local_minima(grid, opt.tracker, i)) {
        const auto b = suggest_box(c, grid.geometry());
        centers.push_back({{"lat", c.position.lat},
                           {"lon", c.position.lon},
                           {"i_lat", c.cell.i_lat},
                           {"i_lon", c.cell.i_lon},
                           {"mslp", c.mslp},
                           {"possibly_tropical", c.possibly_tropical},
                           {"box", {{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax}, {"ymax", b.ymax}}}});
      }
      send_json(res, {{"frame", i}, {"centers", centers}});
    }));

    server.Get("/api/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::optional<int> frame;
      std::optional<ReviewState> state;
      if (req.has_param("frame")) frame = std::stoi(req.get_param_value("frame"));
      if (req.has_param("state")) {
        state = parse_review_state(req.get_param_value("state"));
        if (!state) throw HttpError{400, "unknown review state"};
      }
      const auto snap = store.snapshot();
      json list = json::array();
      for (const auto& [id, a] : snap->annotations) {
        if (frame && a.frame_index != *frame) continue;
        if (state && a.review != *state) continue;
        list.push_back(to_json(a));
      }
      json body{{"annotations", list}};
      body["version"] = snap->version;
      res.set_header("X-Store-Version", std::to_string(snap->version));
      res.set_content(body.dump(), "application/json");
    }));

    server.Get(R"(/api/annotations/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto snap = store.snapshot();
      const auto it = snap->annotations.find(req.matches[1]);
      if (it == snap->annotations.end()) throw HttpError{404, "unknown annotation " + std::string(req.matches[1])};
      send_json(res, {{"annotation", to_json(it->second)}});
    }));

    server.Post("/api/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto actor = require_actor(req);
      session_role(req);
      const auto body = parse_body(req);
      if (!body.contains("frame") || !body.at("frame").is_number_integer()) throw HttpError{400, "frame must be an integer"};
      NewAnnotation fields;
      fields.frame_index = body.at("frame").get<int>();
      if (!opt.catalog.contains(fields.frame_index)) {
        throw HttpError{404, "unknown frame " + std::to_string(fields.frame_index)};
      }
      fields.box = parse_box(body.value("box", json()));
      fields.stage = parse_stage_field(body);
      if (body.contains("track_id") && body.at("track_id").is_string()) fields.track_id = body.at("track_id").get<std::string>();
      const auto a = store.create(fields, actor);
      send_json(res, {{"annotation", to_json(a)}}, 201);
    }));

    server.Put(R"(/api/annotations/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto actor = require_actor(req);
      session_role(req);
      const auto body = parse_body(req);
      const auto a = store.edit(req.matches[1], parse_box(body.value("box", json())), parse_stage_field(body), actor);
      send_json(res, {{"annotation", to_json(a)}});
    }));

    server.Put(R"(/api/annotations/([A-Za-z0-9_-]+)/review)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto actor = require_actor(req);
      const auto role = session_role(req);
      const auto body = parse_body(req);
      if (!body.contains("action") || !body.at("action").is_string()) throw HttpError{400, "action must be a string"};
      const auto action = parse_review_action(body.at("action").get<std::string>());
      if (!action) throw HttpError{400, "unknown review action"};
      if (role == ActorRole::Annotator && (*action == ReviewAction::Suggest || *action == ReviewAction::Accept)) {
        throw HttpError{409, "an annotator session cannot " + std::string(to_string(*action))};
      }
      const auto a = store.transition_review(req.matches[1], *action, actor, body.value("note", std::string()));
      send_json(res, {{"annotation", to_json(a)}});
    }));

    server.Get("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::optional<Split> which;
      const auto s = req.has_param("split") ? req.get_param_value("split") : std::string("all");
      if (s != "all") {
        which = parse_split(s);
        if (!which) throw HttpError{400, "split must be train, test or all"};
      }
      const auto version = store.version();
      auto manifest = service_manifest(store, opt.split_ratio, opt.seed);
      if (which) {
        std::erase_if(manifest.entries, [&](const ManifestEntry& e) { return e.split != *which; });
      }
      res.set_header("X-Store-Version", std::to_string(version));
      res.set_content(manifest_to_jsonl(manifest), "application/x-ndjson");
    }));

    server.Get("/api/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto manifest = service_manifest(store, opt.split_ratio, opt.seed);
      send_json(res, {{"frames", manifest.entries.size()}, {"counts", to_json(category_counts(manifest))}});
    }));
  }
};

ApiServer::ApiServer(ServiceOptions options, LabelStore& store)
    : impl_(std::make_unique<Impl>(std::move(options), store)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace etc
