#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>

#include "biasbench/annotation.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

// JSON-over-HTTP front of an AnnotationHub.
//
//   GET  /api/tasks/next?worker=ID&kind=pair|single   200 task, 204 none left
//   POST /api/annotations                             200 {"status": stored|duplicate}
//   GET  /api/progress                                per-item counts
//   GET  /api/items/{id}                              pair or face metadata
//   GET  /static/...                                  files under static_dir
//
// Errors answer with {"error": code, "message": ...} and a 4xx status.
class HubServer {
 public:
  HubServer(AnnotationHub& hub, std::span<const PairRecord> pairs, std::span<const FaceRecord> faces,
            std::string static_dir = {});
  ~HubServer();
  HubServer(const HubServer&) = delete;
  HubServer& operator=(const HubServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port or throws Io.
  int bind(const std::string& host, int port);
  // Serves until stop(). Call after bind().
  void serve();
  void stop();
  void wait_until_ready() const;

  // Request handlers, exposed for testing without sockets. Return
  // (status, body); body is empty for 204.
  std::pair<int, std::string> next_task(const std::string& worker, const std::string& kind);
  std::pair<int, std::string> submit(const std::string& body);
  std::pair<int, std::string> progress() const;
  std::pair<int, std::string> item(const std::string& id) const;

 private:
  struct Impl;

  AnnotationHub& hub_;
  std::map<std::string, Json, std::less<>> items_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace biasbench
