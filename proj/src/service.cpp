#include "pointgrow/service.hpp"

#include <array>
#include <atomic>
#include <charconv>
#include <future>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "pointgrow/error.hpp"
#include "pointgrow/pipeline.hpp"
#include "pointgrow/png_io.hpp"
#include "pointgrow/weak_label.hpp"

namespace pointgrow {

using ordered_json = nlohmann::ordered_json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_encode(const std::string& bytes) {
  return base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

namespace {

constexpr std::array<const char*, kNumClasses> kClassNames = {"background", "building",
                                                              "woodland", "water", "road"};

struct CachedMap {
  SuperpixelMap map;
  std::string reply;  // serialized superpixels payload
};

struct Session {
  RasterImage image;
  int builds[2] = {0, 0};
  std::shared_future<std::shared_ptr<const MergeHierarchy>> hierarchy[2];
  std::map<std::pair<int, bool>, std::shared_ptr<const CachedMap>> maps;
  mutable std::mutex cache_mu;
  PointSet points;
  mutable std::mutex points_mu;
};

ServiceReply json_reply(int status, const ordered_json& doc) {
  return {status, "application/json", doc.dump(), ""};
}

ServiceReply error_reply(int status, const std::string& message) {
  return json_reply(status, ordered_json{{"error", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kMalformedPng:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kTruncated: return 400;
    case ErrorCode::kIo:
    case ErrorCode::kMissingFile: return 500;
    default: return 422;
  }
}

template <class F>
ServiceReply guarded(F&& body) {
  try {
    return body();
  } catch (const Error& ex) {
    return error_reply(status_for(ex.code()), ex.what());
  } catch (const nlohmann::json::exception& ex) {
    return error_reply(400, std::string("malformed JSON: ") + ex.what());
  }
}

int parse_int(const std::string& text, const char* what) {
  int value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(ErrorCode::kInvalidArgument, std::string("bad ") + what + " '" + text + "'");
  }
  return value;
}

bool parse_flag(const std::string& text) {
  if (text.empty() || text == "false" || text == "0") return false;
  if (text == "true" || text == "1") return true;
  fail(ErrorCode::kInvalidArgument, "bad edge flag '" + text + "'");
}

// Width and height from the IHDR chunk, so oversized uploads are refused before decoding.
std::pair<std::uint32_t, std::uint32_t> peek_png_size(std::span<const std::uint8_t> png) {
  static constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (png.size() < 24 || !std::equal(kSignature, kSignature + 8, png.begin()) ||
      !std::equal(png.begin() + 12, png.begin() + 16, "IHDR")) {
    fail(ErrorCode::kMalformedPng, "not a PNG image");
  }
  auto be32 = [&](std::size_t at) {
    return std::uint32_t(png[at]) << 24 | std::uint32_t(png[at + 1]) << 16 |
           std::uint32_t(png[at + 2]) << 8 | std::uint32_t(png[at + 3]);
  };
  return {be32(16), be32(20)};
}

ordered_json points_json(const PointSet& points) {
  auto list = ordered_json::array();
  for (std::size_t i = 0; i < points.points.size(); ++i) {
    const PointAnnotation& p = points.points[i];
    list.push_back({{"index", i}, {"x", p.x}, {"y", p.y}, {"class_id", p.class_id}});
  }
  return ordered_json{{"points", std::move(list)}};
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

struct AnnotationService::Impl {
  ServiceOptions options;
  mutable std::shared_mutex sessions_mu;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_id = 0;
  httplib::Server server;

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu);
    const auto it = sessions.find(id);
    if (it == sessions.end()) fail(ErrorCode::kNotFound, "unknown image id '" + id + "'");
    return it->second;
  }

  // Single flight: the first caller creates the future, later callers share it.
  std::shared_future<std::shared_ptr<const MergeHierarchy>> hierarchy(Session& s, bool edge) {
    std::lock_guard lock(s.cache_mu);
    auto& slot = s.hierarchy[edge ? 1 : 0];
    if (!slot.valid()) {
      ++s.builds[edge ? 1 : 0];
      SuperpixelConfig config = options.superpixel;
      config.edge = edge;
      slot = std::async(std::launch::async, [&image = s.image, config] {
               return std::make_shared<const MergeHierarchy>(build_hierarchy(image, config));
             }).share();
    }
    return slot;
  }

  std::shared_ptr<const CachedMap> superpixel_map(Session& s, const std::string& k_text,
                                                  const std::string& edge_text) {
    const int k = k_text.empty() ? options.superpixel.k : parse_int(k_text, "k");
    const bool edge = parse_flag(edge_text);
    if (k < 1 || static_cast<std::size_t>(k) > s.image.pixel_count()) {
      fail(ErrorCode::kOutOfRange, "k must lie in [1, pixel count]");
    }
    {
      std::lock_guard lock(s.cache_mu);
      const auto it = s.maps.find({k, edge});
      if (it != s.maps.end()) return it->second;
    }
    const auto tree = hierarchy(s, edge).get();
    auto cached = std::make_shared<CachedMap>();
    cached->map = extract_k(*tree, k, s.image.width, s.image.height);
    auto runs = ordered_json::array();
    for (const BoundaryRun& r : boundary_runs(cached->map)) runs.push_back({r.y, r.x, r.length});
    ordered_json doc;
    doc["k"] = k;
    doc["edge"] = edge;
    doc["map"] = base64_encode(encode_superpixel_png(cached->map));
    doc["boundaries"] = std::move(runs);
    cached->reply = doc.dump();
    std::lock_guard lock(s.cache_mu);
    // A concurrent builder may have won; keep the first entry so payloads never change.
    return s.maps.emplace(std::pair{k, edge}, std::move(cached)).first->second;
  }

  void persist_points(const std::string& id, const PointSet& points) const {
    if (options.persist_dir.empty()) return;
    save_points(points, options.persist_dir / (id + ".csv"));
  }

  std::string add_session(RasterImage image, std::span<const std::uint8_t> png,
                          PointSet points = {}) {
    auto session = std::make_shared<Session>();
    session->image = std::move(image);
    session->points = std::move(points);
    std::string id;
    {
      std::unique_lock lock(sessions_mu);
      do {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(derive_seed(next_id++, png.size())));
        id = buf;
      } while (sessions.count(id));
      sessions.emplace(id, session);
    }
    if (!options.persist_dir.empty() && !png.empty()) {
      write_file(options.persist_dir / (id + ".png"), png);
    }
    hierarchy(*session, options.superpixel.edge);
    return id;
  }
};

AnnotationService::AnnotationService(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  validate(impl_->options.superpixel);
  const auto& dir = impl_->options.persist_dir;
  if (!dir.empty() && std::filesystem::is_directory(dir)) {
    std::vector<std::filesystem::path> uploads;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() == ".png") uploads.push_back(entry.path());
    }
    std::sort(uploads.begin(), uploads.end());
    for (const auto& path : uploads) {
      auto session = std::make_shared<Session>();
      session->image = read_image(path);
      auto csv = path;
      csv.replace_extension(".csv");
      if (std::filesystem::exists(csv)) session->points = load_points(csv);
      impl_->sessions.emplace(path.stem().string(), std::move(session));
    }
  }
}

AnnotationService::~AnnotationService() { stop(); }

ServiceReply AnnotationService::upload(std::span<const std::uint8_t> png) {
  return guarded([&] {
    const auto [w, h] = peek_png_size(png);
    const auto limit = static_cast<std::uint32_t>(impl_->options.max_side);
    if (w > limit || h > limit) {
      return error_reply(413, "image exceeds " + std::to_string(limit) + " pixels per side");
    }
    RasterImage image = decode_rgb_png(png);
    const int width = image.width, height = image.height;
    const std::string id = impl_->add_session(std::move(image), png);
    return json_reply(201, {{"image_id", id}, {"width", width}, {"height", height}});
  });
}

ServiceReply AnnotationService::image_info(const std::string& id) {
  return guarded([&] {
    const auto s = impl_->find(id);
    std::lock_guard lock(s->points_mu);
    return json_reply(200, {{"image_id", id},
                            {"width", s->image.width},
                            {"height", s->image.height},
                            {"num_classes", impl_->options.num_classes},
                            {"point_count", s->points.points.size()}});
  });
}

ServiceReply AnnotationService::superpixels(const std::string& id, const std::string& k,
                                            const std::string& edge) {
  return guarded([&] {
    const auto s = impl_->find(id);
    return ServiceReply{200, "application/json", impl_->superpixel_map(*s, k, edge)->reply, ""};
  });
}

ServiceReply AnnotationService::list_points(const std::string& id) {
  return guarded([&] {
    const auto s = impl_->find(id);
    std::lock_guard lock(s->points_mu);
    return json_reply(200, points_json(s->points));
  });
}

ServiceReply AnnotationService::add_point(const std::string& id, const std::string& json_body) {
  return guarded([&] {
    const auto s = impl_->find(id);
    const auto doc = nlohmann::json::parse(json_body);
    const PointAnnotation p{doc.at("x").get<int>(), doc.at("y").get<int>(),
                            doc.at("class_id").get<int>()};
    std::lock_guard lock(s->points_mu);
    s->points.add(p, s->image.width, s->image.height, impl_->options.num_classes);
    impl_->persist_points(id, s->points);
    return json_reply(200, points_json(s->points));
  });
}

ServiceReply AnnotationService::delete_point(const std::string& id, const std::string& index) {
  return guarded([&] {
    const auto s = impl_->find(id);
    const int i = parse_int(index, "point index");
    std::lock_guard lock(s->points_mu);
    if (i < 0 || static_cast<std::size_t>(i) >= s->points.points.size()) {
      fail(ErrorCode::kNotFound, "no point at index " + index);
    }
    s->points.points.erase(s->points.points.begin() + i);
    impl_->persist_points(id, s->points);
    return json_reply(200, points_json(s->points));
  });
}

ServiceReply AnnotationService::pseudomask(const std::string& id, const std::string& k,
                                           const std::string& edge, const std::string& policy) {
  return guarded([&] {
    const auto s = impl_->find(id);
    const BackgroundPolicy bg =
        policy.empty() ? BackgroundPolicy::kIgnore : parse_background_policy(policy);
    const auto cached = impl_->superpixel_map(*s, k, edge);
    PointSet snapshot;
    {
      std::lock_guard lock(s->points_mu);
      snapshot = s->points;
    }
    const int classes = impl_->options.num_classes;
    const PseudoMask pm = propagate(snapshot, cached->map, PropagationConfig{bg}, classes);
    std::vector<int> counts(classes, 0);
    for (const PointAnnotation& p : snapshot.points) ++counts[p.class_id];
    ordered_json doc;
    doc["k"] = cached->map.k;
    doc["labels"] = base64_encode(encode_mask_png(pm.wl));
    doc["mask"] = base64_encode(encode_supervision_png(pm));
    doc["coverage"] = coverage(pm);
    doc["per_class_point_counts"] = counts;
    return json_reply(200, doc);
  });
}

ServiceReply AnnotationService::export_points(const std::string& id) {
  return guarded([&] {
    const auto s = impl_->find(id);
    std::lock_guard lock(s->points_mu);
    return ServiceReply{200, "text/csv", points_to_csv(s->points), id + ".csv"};
  });
}

ServiceReply AnnotationService::export_sidecar(const std::string& id) {
  return guarded([&] {
    const auto s = impl_->find(id);
    std::lock_guard lock(s->points_mu);
    return ServiceReply{200, "application/json", points_sidecar_json(s->points), id + ".json"};
  });
}

ServiceReply AnnotationService::classes() const {
  auto list = ordered_json::array();
  for (int c = 0; c < impl_->options.num_classes; ++c) {
    ordered_json entry{{"id", c}};
    entry["name"] = c < kNumClasses ? kClassNames[c] : "class_" + std::to_string(c);
    if (c < kNumClasses) entry["color"] = kClassPalette[c];
    list.push_back(std::move(entry));
  }
  return json_reply(200, ordered_json{{"classes", std::move(list)}});
}

int AnnotationService::hierarchy_builds(const std::string& id, bool edge) const {
  std::shared_lock lock(impl_->sessions_mu);
  const auto it = impl_->sessions.find(id);
  if (it == impl_->sessions.end()) return 0;
  std::lock_guard cache_lock(it->second->cache_mu);
  return it->second->builds[edge ? 1 : 0];
}

namespace {

void send(httplib::Response& res, const ServiceReply& reply) {
  res.status = reply.status;
  if (!reply.attachment_name.empty()) {
    res.set_header("Content-Disposition",
                   "attachment; filename=\"" + reply.attachment_name + "\"");
  }
  res.set_content(reply.body, reply.content_type);
}

std::string param(const httplib::Request& req, const char* name) {
  return req.has_param(name) ? req.get_param_value(name) : std::string();
}

}  // namespace

int AnnotationService::bind(const std::string& host, int port) {
  httplib::Server& svr = impl_->server;
  svr.set_payload_max_length(256u << 20);
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  svr.Post("/api/images", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, upload(as_bytes(req.body)));
  });
  svr.Get("/api/classes", [this](const httplib::Request&, httplib::Response& res) {
    send(res, classes());
  });
  svr.Get(R"(/api/images/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, image_info(req.matches[1]));
  });
  svr.Get(R"(/api/images/([0-9a-f]+)/superpixels)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send(res, superpixels(req.matches[1], param(req, "k"), param(req, "edge")));
          });
  svr.Get(R"(/api/images/([0-9a-f]+)/points)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send(res, list_points(req.matches[1]));
          });
  svr.Post(R"(/api/images/([0-9a-f]+)/points)",
           [this](const httplib::Request& req, httplib::Response& res) {
             send(res, add_point(req.matches[1], req.body));
           });
  svr.Delete(R"(/api/images/([0-9a-f]+)/points/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               send(res, delete_point(req.matches[1], req.matches[2]));
             });
  svr.Get(R"(/api/images/([0-9a-f]+)/pseudomask)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send(res, pseudomask(req.matches[1], param(req, "k"), param(req, "edge"),
                                 param(req, "policy")));
          });
  svr.Get(R"(/api/images/([0-9a-f]+)/export)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send(res, export_points(req.matches[1]));
          });
  svr.Get(R"(/api/images/([0-9a-f]+)/export/sidecar)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send(res, export_sidecar(req.matches[1]));
          });
  if (!impl_->options.static_dir.empty()) {
    svr.set_mount_point("/", impl_->options.static_dir.string());
  }
  const bool ok = port == 0 ? (port = svr.bind_to_any_port(host)) > 0 : svr.bind_to_port(host, port);
  if (!ok) {
    fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void AnnotationService::listen() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace pointgrow
