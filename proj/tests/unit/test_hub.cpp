#include <doctest.h>

#include <thread>

#include "biasbench/hub_server.hpp"
#include "support.hpp"

// After the project headers: httplib pulls in system macros that upset Eigen.
#include <httplib.h>

using namespace biasbench;
using biasbench::testing::toy_faces;

namespace {

struct Fixture {
  std::vector<FaceRecord> faces = toy_faces(2);
  std::vector<PairRecord> pairs;
  AnnotationHub hub;

  Fixture() {
    for (int i = 0; i < 3; ++i) {
      PairRecord p;
      p.left = faces[0].face_id;
      p.right = faces[static_cast<std::size_t>(i + 1)].face_id;
      p.index = i;
      p.pair_id = make_pair_id(p.left, p.right, PairKind::Positive, Attribute::Pose, i);
      pairs.push_back(p);
    }
    const std::vector<Attribute> attrs = {Attribute::Age};
    hub.load_items(pairs, std::span<const FaceRecord>(faces.data(), 2), attrs);
  }
};

Json parse(const std::string& s) { return Json::parse(s); }

}  // namespace

TEST_CASE("handlers without sockets") {
  Fixture fx;
  HubServer s(fx.hub, fx.pairs, fx.faces);
  CHECK(s.next_task("", "pair").first == 400);
  CHECK(s.next_task("w", "video").first == 400);

  auto [status, body] = s.next_task("w", "pair");
  REQUIRE(status == 200);
  const Json task = parse(body);
  CHECK(task["item"]["kind"] == "pair");
  CHECK(task["item"]["left"]["image_url"].get<std::string>().rfind("/static/", 0) == 0);

  const std::string item = task["item_ref"];
  const Json sub{{"task_kind", "pair"}, {"item_ref", item}, {"worker_id", "w"}, {"score", 3}};
  auto r1 = s.submit(sub.dump());
  CHECK(r1.first == 200);
  CHECK(parse(r1.second)["status"] == "stored");
  auto r2 = s.submit(sub.dump());
  CHECK(parse(r2.second)["status"] == "duplicate");
  CHECK(fx.hub.store().size() == 1);

  Json bad = sub;
  bad["score"] = 7;
  bad["worker_id"] = "w2";
  CHECK(s.submit(bad.dump()).first == 400);
  CHECK(s.submit("{nope").first == 400);
  Json stranger = sub;
  stranger["worker_id"] = "w9";
  CHECK(s.submit(stranger.dump()).first == 409);
  Json unknown = sub;
  unknown["item_ref"] = "p-none";
  CHECK(s.submit(unknown.dump()).first == 404);

  const Json prog = parse(s.progress().second);
  CHECK(prog["total"] == 5);
  CHECK(prog["annotations"] == 1);
  CHECK(s.item(fx.faces[0].face_id).first == 200);
  CHECK(parse(s.item(fx.faces[0].face_id).second)["kind"] == "face");
  CHECK(s.item("zzz").first == 404);
}

TEST_CASE("http round trip on an ephemeral port") {
  Fixture fx;
  biasbench::testing::TempDir dir("static");
  write_text_atomic(dir.path() / "hello.txt", "hi");
  HubServer server(fx.hub, fx.pairs, fx.faces, dir.path().string());
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.serve(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto next = cli.Get("/api/tasks/next?worker=alice&kind=single");
  REQUIRE(next);
  CHECK(next->status == 200);
  const Json task = Json::parse(next->body);
  CHECK(task["attribute"] == "Age");

  const Json sub{{"task_kind", "single"}, {"item_ref", task["item_ref"]}, {"attribute", "Age"},
                 {"worker_id", "alice"}, {"score", 4}, {"annotation_id", "client-1"}};
  auto post = cli.Post("/api/annotations", sub.dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  CHECK(Json::parse(post->body)["annotation_id"] == "client-1");
  auto again = cli.Post("/api/annotations", sub.dump(), "application/json");
  REQUIRE(again);
  CHECK(Json::parse(again->body)["status"] == "duplicate");

  auto missing = cli.Get("/api/tasks/next?kind=pair");
  REQUIRE(missing);
  CHECK(missing->status == 400);

  // alice drains the remaining single item, then gets 204.
  REQUIRE(cli.Get("/api/tasks/next?worker=alice&kind=single")->status == 200);
  CHECK(cli.Get("/api/tasks/next?worker=alice&kind=single")->status == 204);

  auto prog = cli.Get("/api/progress");
  REQUIRE(prog);
  CHECK(Json::parse(prog->body)["annotations"] == 1);

  auto item = cli.Get("/api/items/" + fx.pairs[0].pair_id);
  REQUIRE(item);
  CHECK(Json::parse(item->body)["pair_id"] == fx.pairs[0].pair_id);
  CHECK(cli.Get("/api/items/unknown")->status == 404);

  auto file = cli.Get("/static/hello.txt");
  REQUIRE(file);
  CHECK(file->body == "hi");

  server.stop();
  t.join();
}

TEST_CASE("missing static directory") {
  Fixture fx;
  CHECK_THROWS_AS(HubServer(fx.hub, fx.pairs, fx.faces, "/definitely/not/here"), Error);
}
