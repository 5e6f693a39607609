#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

class World;

inline constexpr int kAnnotationsPerItem = 9;

// ---------------------------------------------------------------------------
// Task queue

struct Task {
  std::string item_ref;
  TaskKind kind = TaskKind::PairIdentity;
  std::optional<Attribute> attribute;
  int collected = 0;
  int required = kAnnotationsPerItem;
};

void to_json(Json& j, const Task& t);

struct ItemProgress {
  std::string item_ref;
  TaskKind kind = TaskKind::PairIdentity;
  std::optional<Attribute> attribute;
  int collected = 0;
  int required = 0;
};

// Hands out under-annotated items, least-annotated first, never the same item
// twice to one worker. All members are thread-safe.
class TaskQueue {
 public:
  void add_item(const std::string& item_ref, TaskKind kind, std::optional<Attribute> attribute,
                int required = kAnnotationsPerItem);

  std::optional<Task> next_task(const std::string& worker_id, TaskKind kind);

  // Registers a stored annotation against its item. Throws NotFound for an
  // unknown item and Inconsistent when the worker was never served the item.
  void record(const AnnotationRecord& a, bool require_assignment = true);

  bool has_item(const std::string& item_ref, std::optional<Attribute> attribute) const;
  std::vector<ItemProgress> progress() const;
  // Number of times (worker, item) was served; at most 1 by construction.
  std::size_t times_served(const std::string& worker_id, const std::string& item_ref,
                           std::optional<Attribute> attribute) const;

 private:
  struct Item {
    std::string item_ref;
    TaskKind kind = TaskKind::PairIdentity;
    std::optional<Attribute> attribute;
    int required = 0;
    int collected = 0;
    int in_flight = 0;
    std::set<std::string> served;
    std::set<std::string> submitted;
  };

  static std::string key(const std::string& item_ref, std::optional<Attribute> attribute);

  mutable std::mutex mu_;
  std::vector<Item> items_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Durable store

enum class SubmitStatus { Stored, Duplicate };

// Append-only annotation log with idempotent submission on annotation_id.
// Opening an existing log replays it.
class AnnotationStore {
 public:
  AnnotationStore() = default;
  explicit AnnotationStore(const std::filesystem::path& path) { open(path); }

  // Replays an existing log at `path` and appends future submissions to it.
  void open(const std::filesystem::path& path);

  SubmitStatus submit(const AnnotationRecord& a);
  std::optional<AnnotationRecord> find(const std::string& annotation_id) const;
  std::vector<AnnotationRecord> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<AnnotationRecord> records_;
  std::map<std::string, std::size_t> ids_;
  std::unique_ptr<JsonlAppender> log_;
};

// Queue plus store: the state behind the HTTP API.
class AnnotationHub {
 public:
  explicit AnnotationHub(std::optional<std::filesystem::path> log_path = std::nullopt);

  TaskQueue& queue() { return queue_; }
  const TaskQueue& queue() const { return queue_; }
  const AnnotationStore& store() const { return store_; }

  // Adds one PairIdentity item per pair and one SingleAttribute item per
  // (face, attribute), then replays any annotations already in the log.
  void load_items(std::span<const PairRecord> pairs, std::span<const FaceRecord> faces,
                  std::span<const Attribute> single_attributes, int required = kAnnotationsPerItem);

  std::optional<Task> next_task(const std::string& worker_id, TaskKind kind);
  // Validates range, item and assignment; duplicates are acknowledged without
  // being stored twice.
  SubmitStatus submit(const AnnotationRecord& a);

 private:
  void replay();

  std::mutex submit_mu_;
  TaskQueue queue_;
  AnnotationStore store_;
};

// Content-derived id: one annotation per (worker, item, attribute).
std::string annotation_id(const std::string& worker, const std::string& item, std::optional<Attribute> attr);

// ---------------------------------------------------------------------------
// Simulated annotators

struct SimulatedAnnotator {
  std::string worker_id;
  double noise = 0.0;
  double bias = 0.0;
  std::uint64_t stream = 0;

  // round(4 * clip(truth + bias + N(0, noise^2), 0, 1)); the draw is keyed by
  // (stream, item key), so responses do not depend on call order.
  int respond(double truth, std::string_view item_key) const;
};

// `count` annotators with the world's noise level and per-worker offsets drawn
// from N(0, annotator_bias_sd^2), keyed by world seed and worker id.
std::vector<SimulatedAnnotator> make_annotators(const World& world, int count = kAnnotationsPerItem);

std::vector<AnnotationRecord> simulate_pair_annotations(const World& world, const Dataset& dataset,
                                                        std::span<const PairRecord> pairs,
                                                        std::span<const SimulatedAnnotator> workers,
                                                        int threads = 1);

std::vector<AnnotationRecord> simulate_single_annotations(const World& world, const Dataset& dataset,
                                                          std::span<const Attribute> attributes,
                                                          std::span<const SimulatedAnnotator> workers,
                                                          int threads = 1);

// ---------------------------------------------------------------------------
// Aggregation

struct HcicOptions {
  int required = kAnnotationsPerItem;
  // Accept counts other than `required`, trimming floor(k/4) per end.
  bool allow_fallback = false;
  int min_scores = 5;
};

// Sort ascending, drop the two lowest and two highest of nine, average the
// remaining five and divide by 4. Dispersion is the population standard
// deviation of all scores in range units (score / 4).
HcicRecord compute_hcic(const std::string& pair_id, std::span<const int> scores, const HcicOptions& options = {});

// Population standard deviation of integer scores, divided by 4.
double score_dispersion(std::span<const int> scores);

struct SingleScore {
  std::string face_id;
  Attribute attribute = Attribute::Age;
  double mean = 0.0;        // raw 0..4 scale
  double normalized = 0.0;  // mean / 4
  int n_scores = 0;
  double dispersion = 0.0;

  friend bool operator==(const SingleScore&, const SingleScore&) = default;
};

void to_json(Json& j, const SingleScore& s);
void from_json(const Json& j, SingleScore& s);

// Plain mean of exactly `required` scores (no trimming).
SingleScore aggregate_single(const std::string& face_id, Attribute attribute, std::span<const int> scores,
                             int required = kAnnotationsPerItem);

// Bins {[0,0.8), [0.8,1.6), [1.6,2.4), [2.4,3.2), [3.2,4]} -> 0..4.
int rebin_attribute(double score);

struct AggregateResult {
  std::vector<HcicRecord> hcic;        // sorted by pair_id
  std::vector<SingleScore> single;     // sorted by (face_id, attribute)
  std::size_t skipped_items = 0;       // wrong count and no fallback
};

AggregateResult aggregate_annotations(std::span<const AnnotationRecord> annotations,
                                      const HcicOptions& options = {});

struct UncannyFilterResult {
  std::vector<PairRecord> kept;
  std::size_t kept_positive = 0;
  std::size_t kept_negative = 0;
  std::size_t dropped_uncanny = 0;
  std::size_t dropped_missing = 0;
};

// Drops every pair where either face's normalized uncanniness is >= max;
// pairs with a face lacking a score are dropped and counted separately.
UncannyFilterResult uncanny_filter(std::span<const PairRecord> pairs,
                                   const std::map<std::string, double>& uncanniness, double max = 0.8);

double median(std::vector<double> values);

}  // namespace biasbench
