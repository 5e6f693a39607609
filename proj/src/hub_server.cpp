#include "biasbench/hub_server.hpp"

#include <httplib.h>

#include <chrono>

namespace biasbench {

namespace {

int status_of(Errc code) {
  switch (code) {
    case Errc::NotFound: return 404;
    case Errc::DuplicateId: return 409;
    case Errc::Inconsistent: return 409;
    default: return 400;
  }
}

std::pair<int, std::string> error_body(int status, std::string_view code, const std::string& message) {
  return {status, Json{{"error", code}, {"message", message}}.dump()};
}

std::optional<TaskKind> kind_from_query(std::string_view s) {
  if (s == "pair" || s == "PairIdentity") return TaskKind::PairIdentity;
  if (s == "single" || s == "SingleAttribute") return TaskKind::SingleAttribute;
  return std::nullopt;
}

std::string image_url(const FaceRecord& f) {
  return "/static/" + (f.image_ref ? *f.image_ref : f.face_id + ".png");
}

Json face_meta(const FaceRecord& f) {
  return Json{{"face_id", f.face_id},
              {"seed_id", f.seed_id},
              {"group", f.group.code()},
              {"variant", f.variant.key()},
              {"pose_deg", f.pose_deg},
              {"light", to_string(f.light)},
              {"image_url", image_url(f)}};
}

}  // namespace

struct HubServer::Impl {
  httplib::Server server;
};

HubServer::HubServer(AnnotationHub& hub, std::span<const PairRecord> pairs, std::span<const FaceRecord> faces,
                     std::string static_dir)
    : hub_(hub), impl_(std::make_unique<Impl>()) {
  std::map<std::string_view, const FaceRecord*> by_id;
  for (const FaceRecord& f : faces) {
    by_id[f.face_id] = &f;
    items_[f.face_id] = Json{{"kind", "face"}, {"face", face_meta(f)}};
  }
  for (const PairRecord& p : pairs) {
    Json j{{"kind", "pair"},
           {"pair_id", p.pair_id},
           {"group", p.group.code()},
           {"varied_attribute", to_string(p.varied_attribute)},
           {"index", p.index}};
    for (const auto& [side, id] : {std::pair{"left", &p.left}, std::pair{"right", &p.right}}) {
      auto it = by_id.find(*id);
      j[side] = it == by_id.end() ? Json{{"face_id", *id}, {"image_url", "/static/" + *id + ".png"}}
                                  : face_meta(*it->second);
    }
    items_[p.pair_id] = std::move(j);
  }

  httplib::Server& s = impl_->server;
  auto reply = [](httplib::Response& res, const std::pair<int, std::string>& r) {
    res.status = r.first;
    if (!r.second.empty()) res.set_content(r.second, "application/json");
  };
  s.Get("/api/tasks/next", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, next_task(req.get_param_value("worker"), req.get_param_value("kind")));
  });
  s.Post("/api/annotations", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, submit(req.body));
  });
  s.Get("/api/progress", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, progress()); });
  s.Get(R"(/api/items/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, item(req.matches[1]));
  });
  if (!static_dir.empty() && !s.set_mount_point("/static", static_dir))
    throw Error(Errc::NotFound, "static directory not found: " + static_dir);
}

HubServer::~HubServer() { stop(); }

int HubServer::bind(const std::string& host, int port) {
  httplib::Server& s = impl_->server;
  if (port == 0) {
    const int p = s.bind_to_any_port(host);
    if (p <= 0) throw Error(Errc::Io, "cannot bind " + host);
    return p;
  }
  if (!s.bind_to_port(host, port)) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HubServer::serve() { impl_->server.listen_after_bind(); }

void HubServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HubServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::pair<int, std::string> HubServer::next_task(const std::string& worker, const std::string& kind) {
  if (worker.empty()) return error_body(400, to_string(Errc::InvalidArgument), "missing worker parameter");
  const auto k = kind_from_query(kind);
  if (!k) return error_body(400, to_string(Errc::InvalidArgument), "unknown kind '" + kind + "'; expected pair or single");
  const auto task = hub_.next_task(worker, *k);
  if (!task) return {204, ""};
  Json j = *task;
  if (auto it = items_.find(task->item_ref); it != items_.end()) j["item"] = it->second;
  return {200, j.dump()};
}

std::pair<int, std::string> HubServer::submit(const std::string& body) {
  AnnotationRecord a;
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) return error_body(400, to_string(Errc::Parse), "expected a JSON object");
    if (auto it = j.find("task_kind"); it != j.end() && it->is_string()) {
      if (auto k = kind_from_query(it->get<std::string>())) *it = std::string(to_string(*k));
    }
    if (!j.contains("annotation_id") && j.contains("worker_id") && j.contains("item_ref")) {
      std::optional<Attribute> attr;
      if (auto it = j.find("attribute"); it != j.end() && !it->is_null())
        attr = parse_attribute(it->get<std::string>());
      j["annotation_id"] = annotation_id(j["worker_id"].get<std::string>(), j["item_ref"].get<std::string>(), attr);
    }
    if (!j.contains("timestamp")) {
      j["timestamp"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    }
    a = j.get<AnnotationRecord>();
  } catch (const Json::exception& e) {
    return error_body(400, to_string(Errc::Parse), e.what());
  } catch (const Error& e) {
    return error_body(400, to_string(e.code()), e.what());
  }
  try {
    const SubmitStatus st = hub_.submit(a);
    return {200, Json{{"status", st == SubmitStatus::Stored ? "stored" : "duplicate"},
                      {"annotation_id", a.annotation_id}}
                     .dump()};
  } catch (const Error& e) {
    return error_body(status_of(e.code()), to_string(e.code()), e.what());
  }
}

std::pair<int, std::string> HubServer::progress() const {
  Json items = Json::array();
  int complete = 0;
  for (const ItemProgress& p : hub_.queue().progress()) {
    items.push_back(Json{{"item_ref", p.item_ref},
                         {"task_kind", to_string(p.kind)},
                         {"attribute", p.attribute ? Json(to_string(*p.attribute)) : Json(nullptr)},
                         {"collected", p.collected},
                         {"required", p.required}});
    complete += p.collected >= p.required ? 1 : 0;
  }
  const std::size_t total = items.size();
  return {200, Json{{"items", std::move(items)},
                    {"complete", complete},
                    {"total", total},
                    {"annotations", hub_.store().size()}}
                   .dump()};
}

std::pair<int, std::string> HubServer::item(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end()) return error_body(404, to_string(Errc::NotFound), "unknown item " + id);
  return {200, it->second.dump()};
}

}  // namespace biasbench
