#include "etcdet/cyclone_track.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace etc {

void TrackerConfig::validate() const {
  if (!(max_step_km > 0) || min_frames <= 0 || !(neighbor_min_deg > 0) ||
      !(tropical_flag_lat > 0)) {
    throw std::invalid_argument("tracker config values must be strictly positive");
  }
}

double Track::duration_hours() const {
  return centers.empty() ? 0.0 : (length() - 1) * (kFrameStepSeconds / 3600.0);
}

std::vector<CycloneCenter> find_local_minima(const GeoGrid& mslp, const TrackerConfig& cfg,
                                             int frame_index) {
  if (mslp.kind() != FieldKind::MSLP) {
    throw GridError(GridErrorCode::KindMismatch, "kind",
                    "center detection needs an MSLP grid, got " + to_string(mslp.kind()));
  }
  cfg.validate();
  const auto& g = mslp.geometry();

  std::vector<CycloneCenter> candidates;
  for (int r = 1; r + 1 < g.n_lat; ++r) {
    const double lat = g.lat_of(r);
    if (!(lat > 0.0)) continue;
    for (int c = 0; c < g.n_lon; ++c) {
      const double v = mslp.at(r, c);
      bool strict = true;
      for (int dr = -1; dr <= 1 && strict; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr != 0 || dc != 0) && !(v < mslp.at(r + dr, c + dc))) {
            strict = false;
            break;
          }
        }
      }
      if (!strict) continue;
      CycloneCenter center;
      center.frame_index = frame_index;
      center.cell = {r, c};
      center.position = g.cell_center(r, c);
      center.mslp = v;
      center.possibly_tropical = lat < cfg.tropical_flag_lat;
      candidates.push_back(center);
    }
  }

  // Single-linkage clusters under the neighbor rule; the deepest member survives.
  const std::size_t n = candidates.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (angular_separation_deg(candidates[i].position, candidates[j].position) <
          cfg.neighbor_min_deg) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::vector<std::ptrdiff_t> deepest(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    if (deepest[root] < 0 || candidates[i].mslp < candidates[deepest[root]].mslp) {
      deepest[root] = static_cast<std::ptrdiff_t>(i);
    }
  }
  std::vector<CycloneCenter> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (deepest[find(i)] == static_cast<std::ptrdiff_t>(i)) out.push_back(candidates[i]);
  }
  return out;
}

namespace {

struct Node {
  std::size_t layer;
  std::size_t index;
};

class TrackSearch {
 public:
  TrackSearch(const std::vector<std::vector<CycloneCenter>>& layers, const TrackerConfig& cfg)
      : layers_(layers) {
    offsets_.resize(layers.size() + 1, 0);
    for (std::size_t f = 0; f < layers.size(); ++f) offsets_[f + 1] = offsets_[f] + layers[f].size();
    const std::size_t total = offsets_.back();
    successors_.resize(total);
    used_.assign(total, false);
    for (std::size_t f = 0; f + 1 < layers.size(); ++f) {
      for (std::size_t i = 0; i < layers[f].size(); ++i) {
        const auto& a = layers[f][i];
        std::vector<std::pair<double, std::size_t>> next;
        for (std::size_t j = 0; j < layers[f + 1].size(); ++j) {
          const double d = haversine_km(a.position, layers[f + 1][j].position);
          if (d <= cfg.max_step_km) next.emplace_back(d, j);
        }
        const auto& to = layers[f + 1];
        std::stable_sort(next.begin(), next.end(), [&](const auto& x, const auto& y) {
          if (x.first != y.first) return x.first < y.first;
          if (to[x.second].mslp != to[y.second].mslp) return to[x.second].mslp < to[y.second].mslp;
          return to[x.second].cell.i_lon < to[y.second].cell.i_lon;
        });
        auto& succ = successors_[offsets_[f] + i];
        for (const auto& [d, j] : next) succ.push_back(offsets_[f + 1] + j);
      }
    }
  }

  std::size_t id(std::size_t layer, std::size_t index) const { return offsets_[layer] + index; }
  bool used(std::size_t node) const { return used_[node]; }

  /// Longest chain of unused nodes from `start`, as node ids.
  std::vector<std::size_t> longest_chain(std::size_t start) {
    best_len_.assign(used_.size(), 0);
    best_next_.assign(used_.size(), kNone);
    depth_first(start);
    std::vector<std::size_t> chain;
    for (std::size_t n = start; n != kNone; n = best_next_[n]) chain.push_back(n);
    return chain;
  }

  void consume(const std::vector<std::size_t>& chain) {
    for (auto n : chain) used_[n] = true;
  }

  const CycloneCenter& center(std::size_t node) const {
    const auto layer = static_cast<std::size_t>(
        std::upper_bound(offsets_.begin(), offsets_.end(), node) - offsets_.begin() - 1);
    return layers_[layer][node - offsets_[layer]];
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  // Iterative post-order DFS; best_len_ doubles as the visited marker.
  void depth_first(std::size_t start) {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
    while (!stack.empty()) {
      auto& [node, k] = stack.back();
      const auto& succ = successors_[node];
      if (k < succ.size()) {
        const std::size_t s = succ[k++];
        if (!used_[s] && best_len_[s] == 0) stack.emplace_back(s, 0);
        continue;
      }
      std::size_t best = 1;
      std::size_t next = kNone;
      for (std::size_t s : succ) {
        if (used_[s]) continue;
        if (best_len_[s] + 1 > best) {
          best = best_len_[s] + 1;
          next = s;
        }
      }
      best_len_[node] = best;
      best_next_[node] = next;
      stack.pop_back();
    }
  }

  const std::vector<std::vector<CycloneCenter>>& layers_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<bool> used_;
  std::vector<std::size_t> best_len_;
  std::vector<std::size_t> best_next_;
};

}  // namespace

std::vector<Track> link_tracks(const std::vector<std::vector<CycloneCenter>>& per_frame_centers,
                               const TrackerConfig& cfg) {
  cfg.validate();
  std::vector<Track> tracks;
  if (per_frame_centers.empty()) return tracks;
  TrackSearch search(per_frame_centers, cfg);
  for (std::size_t f = 0; f < per_frame_centers.size(); ++f) {
    for (std::size_t i = 0; i < per_frame_centers[f].size(); ++i) {
      const auto start = search.id(f, i);
      if (search.used(start)) continue;
      auto chain = search.longest_chain(start);
      if (static_cast<int>(chain.size()) < cfg.min_frames) continue;
      search.consume(chain);
      Track t;
      char buf[16];
      std::snprintf(buf, sizeof buf, "T%05zu", tracks.size() + 1);
      t.id = buf;
      for (auto n : chain) t.centers.push_back(search.center(n));
      tracks.push_back(std::move(t));
    }
  }
  return tracks;
}

TrackStats track_report(const std::vector<Track>& tracks) {
  TrackStats stats;
  stats.count = tracks.size();
  if (tracks.empty()) return stats;
  stats.min_hours = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& t : tracks) {
    const double h = t.duration_hours();
    stats.min_hours = std::min(stats.min_hours, h);
    stats.max_hours = std::max(stats.max_hours, h);
    sum += h;
    TrackSpan span;
    span.id = t.id;
    span.first_frame = t.centers.empty() ? 0 : t.centers.front().frame_index;
    span.last_frame = t.centers.empty() ? 0 : t.centers.back().frame_index;
    span.duration_hours = h;
    stats.tracks.push_back(span);
  }
  stats.mean_hours = sum / static_cast<double>(tracks.size());
  return stats;
}

void write_tracks_jsonl(std::ostream& out, const std::vector<Track>& tracks) {
  for (const auto& t : tracks) {
    nlohmann::json j;
    j["id"] = t.id;
    auto frames = nlohmann::json::array();
    auto lat = nlohmann::json::array();
    auto lon = nlohmann::json::array();
    auto mslp = nlohmann::json::array();
    auto cells = nlohmann::json::array();
    for (const auto& c : t.centers) {
      frames.push_back(c.frame_index);
      lat.push_back(c.position.lat);
      lon.push_back(c.position.lon);
      mslp.push_back(c.mslp);
      cells.push_back({c.cell.i_lat, c.cell.i_lon});
    }
    j["frames"] = frames;
    j["lat"] = lat;
    j["lon"] = lon;
    j["mslp"] = mslp;
    j["cells"] = cells;
    j["duration_hours"] = t.duration_hours();
    out << j.dump() << '\n';
  }
}

std::string tracks_to_jsonl(const std::vector<Track>& tracks) {
  std::ostringstream os;
  write_tracks_jsonl(os, tracks);
  return os.str();
}

}  // namespace etc
