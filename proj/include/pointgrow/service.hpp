#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

#include "pointgrow/superpixel.hpp"
#include "pointgrow/synthetic.hpp"

namespace pointgrow {

struct ServiceOptions {
  int max_side = 2048;
  int num_classes = kNumClasses;
  SuperpixelConfig superpixel;      // k is only the default for requests without ?k=
  std::filesystem::path static_dir;  // served at / when non-empty
  std::filesystem::path persist_dir; // write-through of uploads and point CSVs when non-empty
};

/// One HTTP answer, independent of the transport.
struct ServiceReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::string attachment_name;  // sets Content-Disposition when non-empty
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::string base64_encode(const std::string& bytes);

/// In-memory annotation sessions. Every handler is safe to call concurrently.
/// Query parameters arrive as raw strings; an empty string selects the default.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions options = {});
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  ServiceReply upload(std::span<const std::uint8_t> png);
  ServiceReply image_info(const std::string& id);
  ServiceReply superpixels(const std::string& id, const std::string& k, const std::string& edge);
  ServiceReply list_points(const std::string& id);
  ServiceReply add_point(const std::string& id, const std::string& json_body);
  ServiceReply delete_point(const std::string& id, const std::string& index);
  ServiceReply pseudomask(const std::string& id, const std::string& k, const std::string& edge,
                          const std::string& policy);
  ServiceReply export_points(const std::string& id);
  ServiceReply export_sidecar(const std::string& id);
  ServiceReply classes() const;

  /// How many times the hierarchy for (id, edge) was built; 0 for unknown ids.
  int hierarchy_builds(const std::string& id, bool edge) const;

  /// Binds the HTTP listener; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pointgrow
