#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasbench/domain.hpp"

namespace biasbench {

using Json = nlohmann::json;

void to_json(Json& j, const DemographicGroup& g);
void from_json(const Json& j, DemographicGroup& g);
void to_json(Json& j, const LatentCode& z);
void from_json(const Json& j, LatentCode& z);
void to_json(Json& j, const Variant& v);
void from_json(const Json& j, Variant& v);
void to_json(Json& j, const FaceRecord& r);
void from_json(const Json& j, FaceRecord& r);
void to_json(Json& j, const PairRecord& r);
void from_json(const Json& j, PairRecord& r);
void to_json(Json& j, const AnnotationRecord& r);
void from_json(const Json& j, AnnotationRecord& r);
void to_json(Json& j, const HcicRecord& r);
void from_json(const Json& j, HcicRecord& r);
void to_json(Json& j, const EmbeddingVector& r);
void from_json(const Json& j, EmbeddingVector& r);

// Canonical single-line encoding; object keys sorted, doubles round-trip exact.
std::string dump_line(const Json& j);

// Whole-file helpers. Writes go to a sibling temp file that is renamed into
// place, so a crashed stage never leaves a truncated artifact behind.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> rows) {
  std::string buf;
  for (const T& row : rows) {
    buf += dump_line(Json(row));
    buf += '\n';
  }
  write_text_atomic(path, buf);
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& rows) {
  write_jsonl(path, std::span<const T>(rows));
}

// Parses one object per non-empty line; errors name the file and line number.
std::vector<Json> read_jsonl_values(const std::filesystem::path& path);

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  std::size_t line = 0;
  for (const Json& j : read_jsonl_values(path)) {
    ++line;
    try {
      out.push_back(j.get<T>());
    } catch (const Json::exception& e) {
      throw Error(Errc::Parse, path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

// Append-only JSONL writer; each append is flushed before returning.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path);
  void append(const Json& row);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace biasbench
