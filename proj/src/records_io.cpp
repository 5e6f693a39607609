#include "biasbench/records_io.hpp"

#include <sstream>
#include <system_error>

namespace biasbench {

namespace fs = std::filesystem;

void to_json(Json& j, const DemographicGroup& g) {
  j = Json{{"gender", to_string(g.gender)}, {"race", to_string(g.race)}};
}

void from_json(const Json& j, DemographicGroup& g) {
  if (j.is_string()) {
    g = group_from_code(j.get<std::string>());
    return;
  }
  g.gender = parse_gender(j.at("gender").get<std::string>());
  g.race = parse_race(j.at("race").get<std::string>());
}

void to_json(Json& j, const LatentCode& z) {
  j = Json{{"values", z.values}, {"space_id", z.space_id}};
}

void from_json(const Json& j, LatentCode& z) {
  j.at("values").get_to(z.values);
  j.at("space_id").get_to(z.space_id);
}

void to_json(Json& j, const Variant& v) {
  if (v.is_prototype()) {
    j = "prototype";
  } else {
    j = Json{{"attribute", to_string(*v.attribute)}, {"index", v.index}};
  }
}

void from_json(const Json& j, Variant& v) {
  if (j.is_string()) {
    if (j.get<std::string>() != "prototype") {
      throw Error(Errc::Parse, "variant must be \"prototype\" or an object");
    }
    v = Variant::prototype();
    return;
  }
  v.attribute = parse_attribute(j.at("attribute").get<std::string>());
  j.at("index").get_to(v.index);
}

namespace {

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

void to_json(Json& j, const FaceRecord& r) {
  j = Json{{"face_id", r.face_id},
           {"seed_id", r.seed_id},
           {"group", r.group},
           {"variant", r.variant},
           {"latent", r.latent},
           {"pose_deg", r.pose_deg},
           {"light", to_string(r.light)},
           {"light_intensity", r.light_intensity},
           {"image_ref", optional_json(r.image_ref)},
           {"background_removed", r.background_removed}};
}

void from_json(const Json& j, FaceRecord& r) {
  j.at("face_id").get_to(r.face_id);
  j.at("seed_id").get_to(r.seed_id);
  j.at("group").get_to(r.group);
  j.at("variant").get_to(r.variant);
  j.at("latent").get_to(r.latent);
  j.at("pose_deg").get_to(r.pose_deg);
  r.light = parse_light(j.at("light").get<std::string>());
  r.light_intensity = j.value("light_intensity", 0.0);
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    r.image_ref = it->get<std::string>();
  } else {
    r.image_ref.reset();
  }
  r.background_removed = j.value("background_removed", false);
}

void to_json(Json& j, const PairRecord& r) {
  j = Json{{"pair_id", r.pair_id},
           {"left", r.left},
           {"right", r.right},
           {"intended_kind", to_string(r.intended_kind)},
           {"varied_attribute", to_string(r.varied_attribute)},
           {"index", r.index},
           {"left_seed", r.left_seed},
           {"right_seed", r.right_seed},
           {"group", r.group},
           {"right_group", r.right_group},
           {"is_self_slot", r.is_self_slot},
           {"cross_group", r.cross_group}};
}

void from_json(const Json& j, PairRecord& r) {
  j.at("pair_id").get_to(r.pair_id);
  j.at("left").get_to(r.left);
  j.at("right").get_to(r.right);
  r.intended_kind = parse_pair_kind(j.at("intended_kind").get<std::string>());
  r.varied_attribute = parse_attribute(j.at("varied_attribute").get<std::string>());
  j.at("index").get_to(r.index);
  j.at("left_seed").get_to(r.left_seed);
  j.at("right_seed").get_to(r.right_seed);
  j.at("group").get_to(r.group);
  r.right_group = j.contains("right_group") ? j.at("right_group").get<DemographicGroup>() : r.group;
  r.is_self_slot = j.value("is_self_slot", false);
  r.cross_group = j.value("cross_group", false);
}

void to_json(Json& j, const AnnotationRecord& r) {
  j = Json{{"annotation_id", r.annotation_id},
           {"task_kind", to_string(r.task_kind)},
           {"item_ref", r.item_ref},
           {"attribute", r.attribute ? Json(to_string(*r.attribute)) : Json(nullptr)},
           {"worker_id", r.worker_id},
           {"score", r.score},
           {"timestamp", r.timestamp}};
}

void from_json(const Json& j, AnnotationRecord& r) {
  j.at("annotation_id").get_to(r.annotation_id);
  r.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
  j.at("item_ref").get_to(r.item_ref);
  if (auto it = j.find("attribute"); it != j.end() && !it->is_null()) {
    r.attribute = parse_attribute(it->get<std::string>());
  } else {
    r.attribute.reset();
  }
  j.at("worker_id").get_to(r.worker_id);
  j.at("score").get_to(r.score);
  r.timestamp = j.value("timestamp", std::int64_t{0});
}

void to_json(Json& j, const HcicRecord& r) {
  j = Json{{"pair_id", r.pair_id},
           {"hcic", r.hcic},
           {"n_scores", r.n_scores},
           {"dispersion", r.dispersion},
           {"trimmed_fallback", r.trimmed_fallback}};
}

void from_json(const Json& j, HcicRecord& r) {
  j.at("pair_id").get_to(r.pair_id);
  j.at("hcic").get_to(r.hcic);
  j.at("n_scores").get_to(r.n_scores);
  j.at("dispersion").get_to(r.dispersion);
  r.trimmed_fallback = j.value("trimmed_fallback", false);
}

void to_json(Json& j, const EmbeddingVector& r) {
  j = Json{{"face_id", r.face_id}, {"values", r.values}, {"model_id", r.model_id}};
}

void from_json(const Json& j, EmbeddingVector& r) {
  j.at("face_id").get_to(r.face_id);
  j.at("values").get_to(r.values);
  j.at("model_id").get_to(r.model_id);
}

std::string dump_line(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::strict); }

void write_text_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw Error(Errc::Io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::Io, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingArtifact, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Json> read_jsonl_values(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingArtifact, "cannot read " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(Errc::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

JsonlAppender::JsonlAppender(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error(Errc::Io, "cannot open " + path.string() + " for append");
}

void JsonlAppender::append(const Json& row) {
  out_ << dump_line(row) << '\n';
  out_.flush();
  if (!out_) throw Error(Errc::Io, "append to " + path_.string() + " failed");
}

}  // namespace biasbench
