#include "biasbench/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "biasbench/parallel.hpp"
#include "biasbench/world.hpp"

namespace biasbench {

void to_json(Json& j, const Task& t) {
  j = Json{{"item_ref", t.item_ref},
           {"task_kind", to_string(t.kind)},
           {"collected", t.collected},
           {"required", t.required}};
  j["attribute"] = t.attribute ? Json(to_string(*t.attribute)) : Json(nullptr);
}

// ---------------------------------------------------------------------------
// TaskQueue

std::string TaskQueue::key(const std::string& item_ref, std::optional<Attribute> attribute) {
  std::string k = item_ref;
  k += '|';
  if (attribute) k += to_string(*attribute);
  return k;
}

void TaskQueue::add_item(const std::string& item_ref, TaskKind kind, std::optional<Attribute> attribute,
                         int required) {
  if (item_ref.empty()) throw Error(Errc::InvalidArgument, "task item_ref is empty");
  if (required <= 0) throw Error(Errc::InvalidArgument, "required annotations must be positive");
  if (kind == TaskKind::SingleAttribute && !attribute)
    throw Error(Errc::InvalidArgument, "single-attribute task without attribute: " + item_ref);
  std::lock_guard lock(mu_);
  const std::string k = key(item_ref, attribute);
  if (index_.count(k)) throw Error(Errc::DuplicateId, "duplicate task item: " + k);
  index_.emplace(k, items_.size());
  Item it;
  it.item_ref = item_ref;
  it.kind = kind;
  it.attribute = attribute;
  it.required = required;
  items_.push_back(std::move(it));
}

std::optional<Task> TaskQueue::next_task(const std::string& worker_id, TaskKind kind) {
  if (worker_id.empty()) throw Error(Errc::InvalidArgument, "worker id is empty");
  std::lock_guard lock(mu_);
  Item* best = nullptr;
  int best_load = std::numeric_limits<int>::max();
  for (Item& it : items_) {
    if (it.kind != kind || it.collected >= it.required) continue;
    if (it.served.count(worker_id)) continue;
    const int load = it.collected + it.in_flight;
    if (load < best_load) {
      best = &it;
      best_load = load;
    }
  }
  if (!best) return std::nullopt;
  best->served.insert(worker_id);
  ++best->in_flight;
  return Task{best->item_ref, best->kind, best->attribute, best->collected, best->required};
}

void TaskQueue::record(const AnnotationRecord& a, bool require_assignment) {
  std::lock_guard lock(mu_);
  auto found = index_.find(key(a.item_ref, a.attribute));
  if (found == index_.end())
    throw Error(Errc::NotFound, "annotation for unknown item: " + key(a.item_ref, a.attribute));
  Item& it = items_[found->second];
  if (it.kind != a.task_kind)
    throw Error(Errc::Inconsistent, "task kind mismatch for item " + a.item_ref);
  const bool served = it.served.count(a.worker_id) > 0;
  if (require_assignment && !served)
    throw Error(Errc::Inconsistent, "worker " + a.worker_id + " was not assigned item " + a.item_ref);
  if (it.submitted.count(a.worker_id))
    throw Error(Errc::Inconsistent, "worker " + a.worker_id + " already annotated item " + a.item_ref);
  it.submitted.insert(a.worker_id);
  if (served && it.in_flight > 0) --it.in_flight;
  it.served.insert(a.worker_id);
  ++it.collected;
}

bool TaskQueue::has_item(const std::string& item_ref, std::optional<Attribute> attribute) const {
  std::lock_guard lock(mu_);
  return index_.count(key(item_ref, attribute)) > 0;
}

std::vector<ItemProgress> TaskQueue::progress() const {
  std::lock_guard lock(mu_);
  std::vector<ItemProgress> out;
  out.reserve(items_.size());
  for (const Item& it : items_) out.push_back({it.item_ref, it.kind, it.attribute, it.collected, it.required});
  return out;
}

std::size_t TaskQueue::times_served(const std::string& worker_id, const std::string& item_ref,
                                    std::optional<Attribute> attribute) const {
  std::lock_guard lock(mu_);
  auto found = index_.find(key(item_ref, attribute));
  if (found == index_.end()) return 0;
  return items_[found->second].served.count(worker_id);
}

// ---------------------------------------------------------------------------
// AnnotationStore

void AnnotationStore::open(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  if (log_) throw Error(Errc::InvalidArgument, "annotation store already open");
  if (std::filesystem::exists(path)) {
    for (AnnotationRecord& a : read_jsonl<AnnotationRecord>(path)) {
      if (!ids_.emplace(a.annotation_id, records_.size()).second) continue;
      records_.push_back(std::move(a));
    }
  }
  log_ = std::make_unique<JsonlAppender>(path);
}

SubmitStatus AnnotationStore::submit(const AnnotationRecord& a) {
  std::lock_guard lock(mu_);
  if (ids_.count(a.annotation_id)) return SubmitStatus::Duplicate;
  if (log_) log_->append(Json(a));
  ids_.emplace(a.annotation_id, records_.size());
  records_.push_back(a);
  return SubmitStatus::Stored;
}

std::optional<AnnotationRecord> AnnotationStore::find(const std::string& annotation_id) const {
  std::lock_guard lock(mu_);
  auto it = ids_.find(annotation_id);
  if (it == ids_.end()) return std::nullopt;
  return records_[it->second];
}

std::vector<AnnotationRecord> AnnotationStore::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t AnnotationStore::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

// ---------------------------------------------------------------------------
// AnnotationHub

AnnotationHub::AnnotationHub(std::optional<std::filesystem::path> log_path) {
  if (log_path) store_.open(*log_path);
}

void AnnotationHub::load_items(std::span<const PairRecord> pairs, std::span<const FaceRecord> faces,
                               std::span<const Attribute> single_attributes, int required) {
  for (const PairRecord& p : pairs) queue_.add_item(p.pair_id, TaskKind::PairIdentity, std::nullopt, required);
  for (const FaceRecord& f : faces)
    for (Attribute a : single_attributes) queue_.add_item(f.face_id, TaskKind::SingleAttribute, a, required);
  replay();
}

void AnnotationHub::replay() {
  for (const AnnotationRecord& a : store_.snapshot()) {
    if (queue_.has_item(a.item_ref, a.attribute)) queue_.record(a, false);
  }
}

std::optional<Task> AnnotationHub::next_task(const std::string& worker_id, TaskKind kind) {
  return queue_.next_task(worker_id, kind);
}

SubmitStatus AnnotationHub::submit(const AnnotationRecord& a) {
  validate_annotation(a);
  std::lock_guard lock(submit_mu_);
  if (auto existing = store_.find(a.annotation_id)) {
    // A retry differs at most in its timestamp.
    AnnotationRecord retry = a;
    retry.timestamp = existing->timestamp;
    if (*existing != retry)
      throw Error(Errc::DuplicateId, "annotation id reused with different content: " + a.annotation_id);
    return SubmitStatus::Duplicate;
  }
  queue_.record(a, true);
  return store_.submit(a);
}

// ---------------------------------------------------------------------------
// Simulation

int SimulatedAnnotator::respond(double truth, std::string_view item_key) const {
  std::mt19937_64 rng(mix64(stream ^ fnv1a(item_key)));
  std::normal_distribution<double> noise_dist(0.0, 1.0);
  const double raw = std::clamp(truth + bias + noise * noise_dist(rng), 0.0, 1.0);
  return static_cast<int>(std::lround(4.0 * raw));
}

std::vector<SimulatedAnnotator> make_annotators(const World& world, int count) {
  if (count <= 0) throw Error(Errc::InvalidArgument, "annotator count must be positive");
  std::vector<SimulatedAnnotator> out;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sim-%02d", i);
    SimulatedAnnotator w;
    w.worker_id = name;
    w.noise = world.spec().annotator_noise;
    w.stream = mix64(world.spec().rng_seed ^ fnv1a(w.worker_id));
    std::mt19937_64 rng(mix64(w.stream ^ 0xb1a5b1a5ull));
    std::normal_distribution<double> bias_dist(0.0, 1.0);
    w.bias = world.spec().annotator_bias_sd * bias_dist(rng);
    out.push_back(std::move(w));
  }
  return out;
}

std::string annotation_id(const std::string& worker, const std::string& item, std::optional<Attribute> attr) {
  Fnv1a h;
  h.update(worker).separator().update(item).separator();
  if (attr) h.update(to_string(*attr));
  return "a" + hex64(h.digest());
}

std::vector<AnnotationRecord> simulate_pair_annotations(const World& world, const Dataset& dataset,
                                                        std::span<const PairRecord> pairs,
                                                        std::span<const SimulatedAnnotator> workers,
                                                        int threads) {
  const std::size_t w = workers.size();
  std::vector<AnnotationRecord> out(pairs.size() * w);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const PairRecord& p = pairs[i];
    const double truth = world.true_pair_distance(dataset.at(p.left), dataset.at(p.right));
    for (std::size_t k = 0; k < w; ++k) {
      AnnotationRecord& a = out[i * w + k];
      a.annotation_id = annotation_id(workers[k].worker_id, p.pair_id, std::nullopt);
      a.task_kind = TaskKind::PairIdentity;
      a.item_ref = p.pair_id;
      a.worker_id = workers[k].worker_id;
      a.score = workers[k].respond(truth, p.pair_id);
      a.timestamp = static_cast<std::int64_t>(i * w + k);
    }
  });
  return out;
}

std::vector<AnnotationRecord> simulate_single_annotations(const World& world, const Dataset& dataset,
                                                          std::span<const Attribute> attributes,
                                                          std::span<const SimulatedAnnotator> workers,
                                                          int threads) {
  const auto faces = dataset.records();
  const std::size_t w = workers.size();
  const std::size_t per_face = attributes.size() * w;
  std::vector<AnnotationRecord> out(faces.size() * per_face);
  parallel_for(faces.size(), threads, [&](std::size_t i) {
    const FaceRecord& f = faces[i];
    for (std::size_t ai = 0; ai < attributes.size(); ++ai) {
      const Attribute attr = attributes[ai];
      const double truth = world.true_score(f, attr);
      const std::string item_key = f.face_id + "|" + std::string(to_string(attr));
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t slot = i * per_face + ai * w + k;
        AnnotationRecord& a = out[slot];
        a.annotation_id = annotation_id(workers[k].worker_id, f.face_id, attr);
        a.task_kind = TaskKind::SingleAttribute;
        a.item_ref = f.face_id;
        a.attribute = attr;
        a.worker_id = workers[k].worker_id;
        a.score = workers[k].respond(truth, item_key);
        a.timestamp = static_cast<std::int64_t>(slot);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

void check_scores(std::span<const int> scores) {
  for (int s : scores)
    if (s < kScoreMin || s > kScoreMax)
      throw Error(Errc::OutOfRange, "annotation score out of range: " + std::to_string(s));
}

}  // namespace

double score_dispersion(std::span<const int> scores) {
  if (scores.empty()) return 0.0;
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double ss = 0.0;
  for (int s : scores) ss += (s - mean) * (s - mean);
  return std::sqrt(ss / n) / 4.0;
}

HcicRecord compute_hcic(const std::string& pair_id, std::span<const int> scores, const HcicOptions& options) {
  check_scores(scores);
  const int k = static_cast<int>(scores.size());
  HcicRecord r;
  r.pair_id = pair_id;
  r.n_scores = k;
  int trim = 0;
  if (k == options.required && options.required == kAnnotationsPerItem) {
    trim = 2;
  } else {
    if (!options.allow_fallback)
      throw Error(Errc::Inconsistent, "pair " + pair_id + " has " + std::to_string(k) + " scores, expected " +
                                          std::to_string(options.required));
    if (k < options.min_scores)
      throw Error(Errc::Inconsistent, "pair " + pair_id + " has too few scores for a trimmed mean: " +
                                          std::to_string(k));
    trim = k / 4;
    r.trimmed_fallback = true;
  }
  std::vector<int> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (int i = trim; i < k - trim; ++i) sum += sorted[i];
  r.hcic = sum / static_cast<double>(k - 2 * trim) / 4.0;
  r.dispersion = score_dispersion(scores);
  return r;
}

void to_json(Json& j, const SingleScore& s) {
  j = Json{{"face_id", s.face_id},     {"attribute", to_string(s.attribute)},
           {"mean", s.mean},           {"normalized", s.normalized},
           {"n_scores", s.n_scores},   {"dispersion", s.dispersion}};
}

void from_json(const Json& j, SingleScore& s) {
  s.face_id = j.at("face_id").get<std::string>();
  s.attribute = parse_attribute(j.at("attribute").get<std::string>());
  s.mean = j.at("mean").get<double>();
  s.normalized = j.at("normalized").get<double>();
  s.n_scores = j.at("n_scores").get<int>();
  s.dispersion = j.value("dispersion", 0.0);
}

SingleScore aggregate_single(const std::string& face_id, Attribute attribute, std::span<const int> scores,
                             int required) {
  check_scores(scores);
  if (static_cast<int>(scores.size()) != required)
    throw Error(Errc::Inconsistent, "face " + face_id + " has " + std::to_string(scores.size()) + " " +
                                        std::string(to_string(attribute)) + " scores, expected " +
                                        std::to_string(required));
  SingleScore s;
  s.face_id = face_id;
  s.attribute = attribute;
  s.n_scores = required;
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(required);
  s.normalized = s.mean / 4.0;
  s.dispersion = score_dispersion(scores);
  return s;
}

int rebin_attribute(double score) {
  if (!(score >= 0.0 && score <= 4.0))
    throw Error(Errc::OutOfRange, "attribute score outside [0, 4]: " + std::to_string(score));
  static constexpr std::array<double, 4> edges = {0.8, 1.6, 2.4, 3.2};
  int bin = 0;
  for (double e : edges)
    if (score >= e) ++bin;
  return bin;
}

AggregateResult aggregate_annotations(std::span<const AnnotationRecord> annotations, const HcicOptions& options) {
  using Key = std::tuple<int, std::string, int>;
  std::map<Key, std::vector<int>> groups;
  std::set<std::string> seen;
  for (const AnnotationRecord& a : annotations) {
    validate_annotation(a);
    if (!seen.insert(a.annotation_id).second) continue;
    const int attr = a.attribute ? static_cast<int>(*a.attribute) : -1;
    groups[{static_cast<int>(a.task_kind), a.item_ref, attr}].push_back(a.score);
  }
  AggregateResult out;
  for (const auto& [key, scores] : groups) {
    const auto& [kind, item, attr] = key;
    try {
      if (static_cast<TaskKind>(kind) == TaskKind::PairIdentity) {
        out.hcic.push_back(compute_hcic(item, scores, options));
      } else {
        out.single.push_back(aggregate_single(item, static_cast<Attribute>(attr), scores, options.required));
      }
    } catch (const Error& e) {
      if (e.code() != Errc::Inconsistent) throw;
      ++out.skipped_items;
    }
  }
  // Map order already sorts by (item, attribute) within each kind.
  return out;
}

UncannyFilterResult uncanny_filter(std::span<const PairRecord> pairs,
                                   const std::map<std::string, double>& uncanniness, double max) {
  UncannyFilterResult r;
  for (const PairRecord& p : pairs) {
    auto l = uncanniness.find(p.left);
    auto rt = uncanniness.find(p.right);
    if (l == uncanniness.end() || rt == uncanniness.end()) {
      ++r.dropped_missing;
      continue;
    }
    if (l->second >= max || rt->second >= max) {
      ++r.dropped_uncanny;
      continue;
    }
    r.kept.push_back(p);
    if (p.intended_kind == PairKind::Positive)
      ++r.kept_positive;
    else
      ++r.kept_negative;
  }
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(Errc::InvalidArgument, "median of empty sequence");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace biasbench
