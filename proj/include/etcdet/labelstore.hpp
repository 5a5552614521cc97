#pragma once

#include "etcdet/box.hpp"
#include "etcdet/cyclone_track.hpp"
#include "etcdet/grid.hpp"
#include "etcdet/image.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etc {

// ---------------------------------------------------------------------------
// Review workflow

enum class ReviewState { Draft, Submitted, Suggested, Disputed, Consensus };
enum class ReviewAction { Submit, Suggest, Accept, Dispute, Resolve };

/// Who is acting relative to the annotation: its original author or another expert.
enum class ActorRole { Annotator, Reviewer };

std::string_view to_string(ReviewState s);
std::string_view to_string(ReviewAction a);
std::string_view to_string(ActorRole r);
std::optional<ReviewState> parse_review_state(std::string_view s);
std::optional<ReviewAction> parse_review_action(std::string_view s);
std::optional<ActorRole> parse_actor_role(std::string_view s);

inline constexpr std::array kAllReviewStates = {ReviewState::Draft, ReviewState::Submitted,
                                                ReviewState::Suggested, ReviewState::Disputed,
                                                ReviewState::Consensus};
inline constexpr std::array kAllReviewActions = {ReviewAction::Submit, ReviewAction::Suggest,
                                                 ReviewAction::Accept, ReviewAction::Dispute,
                                                 ReviewAction::Resolve};

/// Pure state-machine step, ignoring who acts.
std::optional<ReviewState> next_review_state(ReviewState from, ReviewAction action);

enum class ReviewErrorCode { IllegalTransition, SelfReview, MissingNote, UnknownAnnotation, InvalidBox };

class ReviewError : public std::runtime_error {
 public:
  ReviewError(ReviewErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ReviewErrorCode code() const { return code_; }

 private:
  ReviewErrorCode code_;
};

/// Full legality check: state machine, second-expert rule for suggest/accept,
/// mandatory note on resolve. Throws ReviewError.
ReviewState checked_transition(ReviewState from, ReviewAction action, ActorRole role,
                               std::string_view note);

// ---------------------------------------------------------------------------
// Annotations

struct HistoryEvent {
  std::string ts;
  std::string actor;
  std::string action;  // create, edit, or a ReviewAction name
  std::string note;
};

struct Annotation {
  std::string id;
  int frame_index = 0;
  BoundingBox box;
  StageClass stage = StageClass::Developing;
  std::optional<std::string> track_id;
  std::string annotator;
  ReviewState review = ReviewState::Draft;
  std::vector<HistoryEvent> history;
};

/// Replays an annotation's history from Draft. Throws ReviewError if the log
/// contains a transition that is not legal.
ReviewState replay_review(const Annotation& a);

nlohmann::json to_json(const Annotation& a);

/// ±half_extent_deg box around a center in normalized image coordinates,
/// clamped (never wrapped) at the image edges.
BoundingBox suggest_box(const CycloneCenter& center, const GridGeometry& geometry,
                        double half_extent_deg = 15.0);

// ---------------------------------------------------------------------------
// Journal-backed store

struct NewAnnotation {
  int frame_index = 0;
  BoundingBox box;
  StageClass stage = StageClass::Developing;
  std::optional<std::string> track_id;
};

struct StoreSnapshot {
  std::uint64_t version = 0;
  std::map<std::string, Annotation> annotations;
};

/// Append-only JSON-Lines journal plus an in-memory index. All mutations go
/// through one writer lock; readers take immutable snapshots.
class LabelStore {
 public:
  using Clock = std::function<std::int64_t()>;

  /// In-memory store with no journal file.
  LabelStore();
  /// Opens (or creates) the journal at `journal` and replays it.
  explicit LabelStore(std::filesystem::path journal, Clock clock = {});

  std::shared_ptr<const StoreSnapshot> snapshot() const;
  std::uint64_t version() const { return snapshot()->version; }

  Annotation create(const NewAnnotation& fields, const std::string& actor);
  Annotation edit(const std::string& id, const BoundingBox& box, StageClass stage,
                  const std::string& actor);
  Annotation transition_review(const std::string& id, ReviewAction action,
                               const std::string& actor, const std::string& note = {});

  const std::filesystem::path& journal_path() const { return journal_; }

 private:
  void apply(const nlohmann::json& record, StoreSnapshot& state) const;
  Annotation commit(const std::function<nlohmann::json(const StoreSnapshot&)>& make_record);

  std::filesystem::path journal_;
  Clock clock_;
  mutable std::mutex snapshot_mutex_;
  std::mutex writer_mutex_;
  std::shared_ptr<const StoreSnapshot> current_;
};

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Train, Test };
std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct ManifestEntry {
  int frame = 0;
  std::string image;  // relative path, frames/<index>.png
  std::vector<LabeledBox> boxes;
  Split split = Split::Train;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  bool operator==(const DatasetManifest&) const = default;
};

std::string frame_image_path(int frame);

/// Groups Consensus annotations by frame. Every other annotation is left out
/// and reported through `warnings`. All entries start in Train.
DatasetManifest assemble_manifest(const std::vector<Annotation>& annotations,
                                  std::vector<std::string>* warnings = nullptr);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shuffles frames with a seeded generator and sends round(ratio * n) of them to
/// Test. Entry order is preserved. Throws DatasetError on empty input,
/// std::invalid_argument on a ratio outside (0, 1).
DatasetManifest split_train_test(std::vector<ManifestEntry> entries, double ratio = 0.2,
                                 std::uint64_t seed = 0);

using FrameSource = std::function<std::optional<Gray8>(int frame)>;

struct ExportResult {
  std::vector<std::filesystem::path> files;
};

/// Writes annotations.jsonl, dataset.json and one PNG per frame. Throws
/// DatasetError for a frame the source cannot provide and IoError for an
/// unwritable destination.
ExportResult export_dataset(const DatasetManifest& manifest, const FrameSource& frames,
                            const std::filesystem::path& out_dir);

DatasetManifest import_dataset(const std::filesystem::path& dir);

/// One annotation-file record per entry.
nlohmann::json to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const nlohmann::json& j);
std::string manifest_to_jsonl(const DatasetManifest& m);
DatasetManifest manifest_from_jsonl(std::string_view text, std::uint64_t seed = 0);

/// Box counts indexed [stage][split].
using CategoryCounts = std::array<std::array<std::size_t, 2>, kNumStages>;
CategoryCounts category_counts(const DatasetManifest& manifest);
nlohmann::json to_json(const CategoryCounts& counts);

}  // namespace etc
