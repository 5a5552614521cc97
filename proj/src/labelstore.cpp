#include "etcdet/labelstore.hpp"

#include "etcdet/io.hpp"
#include "etcdet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace etc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Review workflow

std::string_view to_string(ReviewState s) {
  switch (s) {
    case ReviewState::Draft: return "draft";
    case ReviewState::Submitted: return "submitted";
    case ReviewState::Suggested: return "suggested";
    case ReviewState::Disputed: return "disputed";
    case ReviewState::Consensus: return "consensus";
  }
  return "unknown";
}

std::string_view to_string(ReviewAction a) {
  switch (a) {
    case ReviewAction::Submit: return "submit";
    case ReviewAction::Suggest: return "suggest";
    case ReviewAction::Accept: return "accept";
    case ReviewAction::Dispute: return "dispute";
    case ReviewAction::Resolve: return "resolve";
  }
  return "unknown";
}

std::string_view to_string(ActorRole r) {
  return r == ActorRole::Annotator ? "annotator" : "reviewer";
}

std::optional<ReviewState> parse_review_state(std::string_view s) {
  for (auto st : kAllReviewStates) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::optional<ReviewAction> parse_review_action(std::string_view s) {
  for (auto a : kAllReviewActions) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

std::optional<ActorRole> parse_actor_role(std::string_view s) {
  if (s == "annotator") return ActorRole::Annotator;
  if (s == "reviewer") return ActorRole::Reviewer;
  return std::nullopt;
}

std::optional<ReviewState> next_review_state(ReviewState from, ReviewAction action) {
  using S = ReviewState;
  using A = ReviewAction;
  switch (from) {
    case S::Draft:
      if (action == A::Submit) return S::Submitted;
      break;
    case S::Submitted:
      if (action == A::Suggest) return S::Suggested;
      if (action == A::Accept) return S::Consensus;
      break;
    case S::Suggested:
      if (action == A::Accept) return S::Consensus;
      if (action == A::Dispute) return S::Disputed;
      break;
    case S::Disputed:
      if (action == A::Resolve) return S::Consensus;
      break;
    case S::Consensus:
      break;
  }
  return std::nullopt;
}

ReviewState checked_transition(ReviewState from, ReviewAction action, ActorRole role,
                               std::string_view note) {
  const auto to = next_review_state(from, action);
  if (!to) {
    throw ReviewError(ReviewErrorCode::IllegalTransition,
                      "cannot " + std::string(to_string(action)) + " an annotation in state " +
                          std::string(to_string(from)));
  }
  if ((action == ReviewAction::Suggest || action == ReviewAction::Accept) &&
      role == ActorRole::Annotator) {
    throw ReviewError(ReviewErrorCode::SelfReview,
                      std::string(to_string(action)) + " must come from a second expert");
  }
  if (action == ReviewAction::Resolve && note.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ReviewError(ReviewErrorCode::MissingNote, "resolve requires a discussion note");
  }
  return *to;
}

ReviewState replay_review(const Annotation& a) {
  ReviewState state = ReviewState::Draft;
  for (const auto& ev : a.history) {
    const auto action = parse_review_action(ev.action);
    if (!action) continue;  // create / edit
    const auto role = ev.actor == a.annotator ? ActorRole::Annotator : ActorRole::Reviewer;
    state = checked_transition(state, *action, role, ev.note);
  }
  return state;
}

namespace {

json box_to_json(const BoundingBox& b) {
  return {{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax}, {"ymax", b.ymax}};
}

BoundingBox box_from_json(const json& j) {
  return {j.at("xmin").get<double>(), j.at("ymin").get<double>(), j.at("xmax").get<double>(),
          j.at("ymax").get<double>()};
}

StageClass stage_from_json(const json& j) {
  const auto s = parse_stage(j.get<std::string>());
  if (!s) throw DatasetError("unknown stage '" + j.get<std::string>() + "'");
  return *s;
}

}  // namespace

json to_json(const Annotation& a) {
  json history = json::array();
  for (const auto& ev : a.history) {
    json e = {{"ts", ev.ts}, {"actor", ev.actor}, {"action", ev.action}};
    if (!ev.note.empty()) e["note"] = ev.note;
    history.push_back(std::move(e));
  }
  json j = {{"id", a.id},
            {"frame", a.frame_index},
            {"box", box_to_json(a.box)},
            {"stage", std::string(to_string(a.stage))},
            {"annotator", a.annotator},
            {"review", std::string(to_string(a.review))},
            {"history", std::move(history)}};
  j["track_id"] = a.track_id ? json(*a.track_id) : json(nullptr);
  return j;
}

BoundingBox suggest_box(const CycloneCenter& center, const GridGeometry& geometry,
                        double half_extent_deg) {
  const double lat = center.position.lat;
  const double lon = center.position.lon;
  BoundingBox b;
  b.xmin = geometry.image_x(lon - half_extent_deg);
  b.xmax = geometry.image_x(lon + half_extent_deg);
  b.ymin = geometry.image_y(lat + half_extent_deg);
  b.ymax = geometry.image_y(lat - half_extent_deg);
  return clip_unit(b);
}

// ---------------------------------------------------------------------------
// Store

LabelStore::LabelStore() : current_(std::make_shared<StoreSnapshot>()) {
  clock_ = now_unix_seconds;
}

LabelStore::LabelStore(std::filesystem::path journal, Clock clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
  if (!clock_) clock_ = now_unix_seconds;
  auto state = std::make_shared<StoreSnapshot>();
  if (std::filesystem::exists(journal_)) {
    std::ifstream in(journal_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::exception& e) {
        throw DatasetError(journal_.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      apply(record, *state);
    }
  } else if (journal_.has_parent_path()) {
    std::filesystem::create_directories(journal_.parent_path());
  }
  current_ = std::move(state);
}

std::shared_ptr<const StoreSnapshot> LabelStore::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return current_;
}

void LabelStore::apply(const json& record, StoreSnapshot& state) const {
  const auto action = record.at("action").get<std::string>();
  const auto id = record.at("annotation_id").get<std::string>();
  const auto actor = record.at("actor").get<std::string>();
  const auto ts = record.at("ts").get<std::string>();
  const json& payload = record.at("payload");

  if (action == "create") {
    if (state.annotations.count(id)) {
      throw ReviewError(ReviewErrorCode::IllegalTransition, "duplicate annotation id " + id);
    }
    Annotation a;
    a.id = id;
    a.frame_index = payload.at("frame").get<int>();
    a.box = box_from_json(payload.at("box"));
    a.stage = stage_from_json(payload.at("stage"));
    if (payload.contains("track_id") && !payload["track_id"].is_null()) {
      a.track_id = payload["track_id"].get<std::string>();
    }
    a.annotator = actor;
    a.history.push_back({ts, actor, "create", {}});
    state.annotations.emplace(id, std::move(a));
  } else {
    auto it = state.annotations.find(id);
    if (it == state.annotations.end()) {
      throw ReviewError(ReviewErrorCode::UnknownAnnotation, "unknown annotation " + id);
    }
    Annotation& a = it->second;
    if (action == "edit") {
      if (a.review == ReviewState::Consensus) {
        throw ReviewError(ReviewErrorCode::IllegalTransition,
                          "annotation " + id + " is final and cannot be edited");
      }
      a.box = box_from_json(payload.at("box"));
      a.stage = stage_from_json(payload.at("stage"));
      a.history.push_back({ts, actor, "edit", {}});
    } else {
      const auto review_action = parse_review_action(action);
      if (!review_action) {
        throw ReviewError(ReviewErrorCode::IllegalTransition, "unknown action " + action);
      }
      const std::string note = payload.value("note", std::string{});
      const auto role = actor == a.annotator ? ActorRole::Annotator : ActorRole::Reviewer;
      a.review = checked_transition(a.review, *review_action, role, note);
      a.history.push_back({ts, actor, action, note});
    }
  }
  if (!state.annotations.at(id).box.valid()) {
    throw ReviewError(ReviewErrorCode::InvalidBox, "box of annotation " + id + " is invalid");
  }
  ++state.version;
}

Annotation LabelStore::commit(const std::function<json(const StoreSnapshot&)>& make_record) {
  std::lock_guard writer(writer_mutex_);
  const auto base = snapshot();
  json record = make_record(*base);
  record["ts"] = iso8601_utc(clock_());
  auto next = std::make_shared<StoreSnapshot>(*base);
  apply(record, *next);
  if (!journal_.empty()) {
    std::ofstream out(journal_, std::ios::app | std::ios::binary);
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw IoError("cannot append to journal " + journal_.string());
  }
  Annotation result = next->annotations.at(record["annotation_id"].get<std::string>());
  std::lock_guard lock(snapshot_mutex_);
  current_ = std::move(next);
  return result;
}

Annotation LabelStore::create(const NewAnnotation& fields, const std::string& actor) {
  if (actor.empty()) throw std::invalid_argument("actor identity must be non-empty");
  if (!fields.box.valid()) {
    throw ReviewError(ReviewErrorCode::InvalidBox, "box violates 0 <= min < max <= 1");
  }
  return commit([&](const StoreSnapshot& base) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "a%06zu", base.annotations.size() + 1);
    json payload = {{"frame", fields.frame_index},
                    {"box", box_to_json(fields.box)},
                    {"stage", std::string(to_string(fields.stage))}};
    payload["track_id"] = fields.track_id ? json(*fields.track_id) : json(nullptr);
    return json{{"actor", actor}, {"annotation_id", std::string(buf)}, {"action", "create"},
                {"payload", std::move(payload)}};
  });
}

Annotation LabelStore::edit(const std::string& id, const BoundingBox& box, StageClass stage,
                            const std::string& actor) {
  if (actor.empty()) throw std::invalid_argument("actor identity must be non-empty");
  if (!box.valid()) {
    throw ReviewError(ReviewErrorCode::InvalidBox, "box violates 0 <= min < max <= 1");
  }
  json record = {{"actor", actor},
                 {"annotation_id", id},
                 {"action", "edit"},
                 {"payload", {{"box", box_to_json(box)}, {"stage", std::string(to_string(stage))}}}};
  return commit([&](const StoreSnapshot&) { return record; });
}

Annotation LabelStore::transition_review(const std::string& id, ReviewAction action,
                                         const std::string& actor, const std::string& note) {
  if (actor.empty()) throw std::invalid_argument("actor identity must be non-empty");
  json payload = json::object();
  if (!note.empty()) payload["note"] = note;
  json record = {{"actor", actor},
                 {"annotation_id", id},
                 {"action", std::string(to_string(action))},
                 {"payload", std::move(payload)}};
  return commit([&](const StoreSnapshot&) { return record; });
}

// ---------------------------------------------------------------------------
// Datasets

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::string frame_image_path(int frame) { return "frames/" + std::to_string(frame) + ".png"; }

DatasetManifest assemble_manifest(const std::vector<Annotation>& annotations,
                                  std::vector<std::string>* warnings) {
  std::map<int, ManifestEntry> by_frame;
  for (const auto& a : annotations) {
    if (a.review != ReviewState::Consensus) {
      if (warnings) {
        warnings->push_back("annotation " + a.id + " on frame " + std::to_string(a.frame_index) +
                            " is " + std::string(to_string(a.review)) +
                            ", not consensus; omitted from export");
      }
      continue;
    }
    auto& e = by_frame[a.frame_index];
    e.frame = a.frame_index;
    e.image = frame_image_path(a.frame_index);
    e.boxes.push_back({a.box, a.stage});
  }
  DatasetManifest m;
  for (auto& [frame, e] : by_frame) m.entries.push_back(std::move(e));
  return m;
}

DatasetManifest split_train_test(std::vector<ManifestEntry> entries, double ratio,
                                 std::uint64_t seed) {
  if (entries.empty()) throw DatasetError("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  const std::size_t n = entries.size();
  const auto n_test = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  for (auto& e : entries) e.split = Split::Train;
  for (std::size_t k = 0; k < n_test; ++k) entries[order[k]].split = Split::Test;
  return {std::move(entries), seed};
}

json to_json(const ManifestEntry& e) {
  json boxes = json::array();
  for (const auto& lb : e.boxes) {
    json b = box_to_json(lb.box);
    b["stage"] = std::string(to_string(lb.stage));
    boxes.push_back(std::move(b));
  }
  return {{"frame", e.frame},
          {"image", e.image},
          {"boxes", std::move(boxes)},
          {"split", std::string(to_string(e.split))}};
}

ManifestEntry manifest_entry_from_json(const json& j) {
  ManifestEntry e;
  e.frame = j.at("frame").get<int>();
  e.image = j.value("image", frame_image_path(e.frame));
  for (const auto& b : j.at("boxes")) {
    LabeledBox lb{box_from_json(b), stage_from_json(b.at("stage"))};
    if (!lb.box.valid()) {
      throw DatasetError("invalid box on frame " + std::to_string(e.frame));
    }
    e.boxes.push_back(lb);
  }
  const auto split = parse_split(j.value("split", std::string("train")));
  if (!split) throw DatasetError("unknown split on frame " + std::to_string(e.frame));
  e.split = *split;
  return e;
}

std::string manifest_to_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& e : m.entries) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(manifest_entry_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

ExportResult export_dataset(const DatasetManifest& manifest, const FrameSource& frames,
                            const std::filesystem::path& out_dir) {
  std::vector<std::pair<std::filesystem::path, Gray8>> images;
  for (const auto& e : manifest.entries) {
    auto img = frames ? frames(e.frame) : std::nullopt;
    if (!img) {
      throw DatasetError("manifest references frame " + std::to_string(e.frame) +
                         " which has no image");
    }
    images.emplace_back(out_dir / e.image, std::move(*img));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  ExportResult result;
  for (const auto& [path, img] : images) {
    write_png(path, img);
    result.files.push_back(path);
  }
  write_file_atomic(out_dir / "annotations.jsonl", manifest_to_jsonl(manifest));
  result.files.push_back(out_dir / "annotations.jsonl");
  json meta = {{"seed", manifest.seed}, {"frames", manifest.entries.size()}};
  write_file_atomic(out_dir / "dataset.json", meta.dump(2) + "\n");
  result.files.push_back(out_dir / "dataset.json");
  return result;
}

DatasetManifest import_dataset(const std::filesystem::path& dir) {
  std::uint64_t seed = 0;
  if (std::filesystem::exists(dir / "dataset.json")) {
    seed = json::parse(read_file_text(dir / "dataset.json")).value("seed", std::uint64_t{0});
  }
  return manifest_from_jsonl(read_file_text(dir / "annotations.jsonl"), seed);
}

CategoryCounts category_counts(const DatasetManifest& manifest) {
  CategoryCounts counts{};
  for (const auto& e : manifest.entries) {
    for (const auto& lb : e.boxes) {
      ++counts[static_cast<int>(lb.stage)][e.split == Split::Train ? 0 : 1];
    }
  }
  return counts;
}

json to_json(const CategoryCounts& counts) {
  json j = json::object();
  for (int s = 0; s < kNumStages; ++s) {
    j[std::string(to_string(static_cast<StageClass>(s)))] = {{"train", counts[s][0]},
                                                              {"test", counts[s][1]}};
  }
  return j;
}

}  // namespace etc
