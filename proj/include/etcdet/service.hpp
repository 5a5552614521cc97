#pragma once

#include "etcdet/catalog.hpp"
#include "etcdet/cyclone_track.hpp"
#include "etcdet/labelstore.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace etc {

struct ServiceOptions {
  FrameCatalog catalog;
  TrackerConfig tracker;
  /// Test fraction for /api/export and /api/stats; 0 keeps every frame in Train.
  double split_ratio = 0.2;
  std::uint64_t seed = 0;
  int page_size = 50;
  /// Rendered PNGs are cached here, keyed by frame index and grid file hash.
  std::filesystem::path cache_dir;
};

/// Consensus annotations of the store, split as the export route serves them.
DatasetManifest service_manifest(const LabelStore& store, double split_ratio, std::uint64_t seed);

/// HTTP front end for the labeling workflow. Every response carries the store
/// version in an X-Store-Version header (and in JSON bodies as "version").
class ApiServer {
 public:
  ApiServer(ServiceOptions options, LabelStore& store);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop() is called.
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace etc
