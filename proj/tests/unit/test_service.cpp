#include <doctest.h>
#include <httplib.h>

#include <thread>

#include "mois/inference/session.hpp"
#include "mois/io/rle.hpp"
#include "mois/io/volume.hpp"
#include "mois/service/bmp.hpp"
#include "mois/service/server.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny.hpp"

using namespace mois;
using json = nlohmann::json;

namespace {

// Positive mask bias so an untrained net still produces non-empty masks.
std::shared_ptr<const inference::Net> biased_net(float bias = 0.5f) {
  auto net = std::make_shared<inference::Net>(testing::tiny_model());
  auto b = net->params().get("decoder.mask_bias");
  b.mutable_data()[0] = bias;
  return net;
}

service::ServiceConfig local_config(const std::string& snapshot_dir = "") {
  service::ServiceConfig c;
  c.port = 0;
  c.snapshot_dir = snapshot_dir;
  c.threads = 2;
  return c;
}

io::Volume phantom_volume(uint64_t seed = 4) {
  auto ph = train::generate_phantom(testing::tiny_phantom(), seed);
  return ph.volume;
}

httplib::Result upload(httplib::Client& cli, const std::string& sidecar, const std::string& payload) {
  httplib::MultipartFormDataItems items = {
      {"sidecar", sidecar, "volume.json", "application/json"},
      {"payload", payload, "volume.raw", "application/octet-stream"},
  };
  return cli.Post("/volumes", items);
}

std::string upload_ok(httplib::Client& cli, const io::Volume& v) {
  auto r = upload(cli, io::volume_sidecar(v).dump(), io::volume_to_bytes(v));
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return json::parse(r->body).at("volume_id").get<std::string>();
}

json post(httplib::Client& cli, const std::string& path, const json& body, int expect) {
  auto r = cli.Post(path, body.dump(), "application/json");
  REQUIRE(r);
  CHECK_MESSAGE(r->status == expect, path << " -> " << r->status << " " << r->body);
  return r->body.empty() ? json() : json::parse(r->body);
}

json get(httplib::Client& cli, const std::string& path, int expect = 200) {
  auto r = cli.Get(path);
  REQUIRE(r);
  CHECK_MESSAGE(r->status == expect, path << " -> " << r->status << " " << r->body);
  return json::parse(r->body);
}

Mask decode(const json& envelope) { return io::rle_decode(io::rle_from_json(envelope)); }

}  // namespace

TEST_CASE("service config json, env overrides and validation") {
  service::ServiceConfig c;
  c.port = 9001;
  c.snapshot_dir = "/tmp/x";
  c.inference.v_thresh = 55;
  json j = c;
  auto back = j.get<service::ServiceConfig>();
  CHECK(json(back) == j);

  std::map<std::string, std::string> env = {{"MOIS_PORT", "7000"},
                                            {"MOIS_HOST", "0.0.0.0"},
                                            {"MOIS_SESSION_TTL_S", "12.5"},
                                            {"MOIS_V_THRESH", "250"},
                                            {"MOIS_FILL_HOLES", "false"},
                                            {"MOIS_MODEL_PATH", "/m.ckpt"}};
  auto lookup = [&](const char* k) -> const char* {
    auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  c.apply_env(lookup);
  CHECK(c.port == 7000);
  CHECK(c.host == "0.0.0.0");
  CHECK(c.session_ttl_s == doctest::Approx(12.5));
  CHECK(c.inference.v_thresh == doctest::Approx(250));
  CHECK_FALSE(c.inference.fill_holes);
  CHECK(c.model_path == "/m.ckpt");
  CHECK(c.snapshot_dir == "/tmp/x");

  env["MOIS_PORT"] = "70x";
  CHECK_THROWS_AS(c.apply_env(lookup), std::invalid_argument);
  env["MOIS_PORT"] = "70000";
  CHECK_THROWS(c.apply_env(lookup));
  CHECK_THROWS(json({{"max_sessions", 0}}).get<service::ServiceConfig>());
  CHECK_THROWS(service::Server(local_config()));  // no model anywhere
}

TEST_CASE("bmp encoding round trips and windows intensities") {
  for (auto [w, h] : {std::pair{1, 1}, {3, 2}, {5, 7}, {8, 4}}) {
    std::vector<uint8_t> px(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < px.size(); ++i) px[i] = static_cast<uint8_t>(i * 37);
    int rw = 0, rh = 0;
    auto bytes = service::encode_bmp_gray8(px, w, h);
    CHECK(bytes.substr(0, 2) == "BM");
    CHECK(service::decode_bmp_gray8(bytes, &rw, &rh) == px);
    CHECK(rw == w);
    CHECK(rh == h);
  }
  CHECK_THROWS(service::decode_bmp_gray8("BMxx", nullptr, nullptr));

  io::Volume v;
  v.intensities = Grid3<float>({1, 3, 1}, {-1.0f, 0.5f, 2.0f});
  auto px = service::window_slice(v, 0, 0.0, 1.0);
  CHECK(px == std::vector<uint8_t>{0, 128, 255});
  CHECK_THROWS(service::window_slice(v, 1, 0.0, 1.0));
}

TEST_CASE("volume upload validates payloads and serves slices") {
  service::Server server(local_config(), biased_net());
  httplib::Client cli("127.0.0.1", server.start());

  CHECK(get(cli, "/health")["status"] == "ok");

  auto vol = phantom_volume();
  std::string vid = upload_ok(cli, vol);
  auto sidecar = get(cli, "/volumes/" + vid);
  CHECK(sidecar["shape"] == json({32, 32, 6}));

  std::string bytes = io::volume_to_bytes(vol);
  std::string sc = io::volume_sidecar(vol).dump();
  CHECK(upload(cli, sc, bytes.substr(1))->status == 400);  // short payload
  CHECK(upload(cli, "{not json", bytes)->status == 400);
  json wrong = io::volume_sidecar(vol);
  wrong["dtype"] = "uint8";
  CHECK(upload(cli, wrong.dump(), bytes)->status == 400);
  wrong = io::volume_sidecar(vol);
  wrong["shape"] = {32, 32};
  CHECK(upload(cli, wrong.dump(), bytes)->status == 400);
  wrong = io::volume_sidecar(vol);
  wrong["spacing"] = {1.0, 0.0, 1.0};
  CHECK(upload(cli, wrong.dump(), bytes)->status == 400);
  CHECK(cli.Post("/volumes", bytes, "application/octet-stream")->status == 400);
  CHECK(server.volume_count() == 1);

  auto r = cli.Get("/volumes/" + vid + "/slices/2");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/bmp");
  int w = 0, h = 0;
  auto px = service::decode_bmp_gray8(r->body, &w, &h);
  CHECK(w == 32);
  CHECK(h == 32);
  CHECK(*std::max_element(px.begin(), px.end()) > *std::min_element(px.begin(), px.end()));
  CHECK(cli.Get("/volumes/" + vid + "/slices/6")->status == 400);
  CHECK(cli.Get("/volumes/nope/slices/0")->status == 404);
  CHECK(cli.Get("/volumes/nope")->status == 404);
}

TEST_CASE("click, propagate and exemplar list through the API") {
  auto net = biased_net();
  service::Server server(local_config(), net);
  httplib::Client cli("127.0.0.1", server.start());
  auto vol = phantom_volume();
  std::string vid = upload_ok(cli, vol);

  CHECK(cli.Post("/sessions", json{{"volume_id", "missing"}}.dump(), "application/json")->status == 404);
  CHECK(cli.Post("/sessions", json{{"volume_id", vid}, {"model_id", "other"}}.dump(), "application/json")->status == 404);
  CHECK(cli.Post("/sessions", "[1,2]", "application/json")->status == 400);
  CHECK(cli.Post("/sessions", "{", "application/json")->status == 400);

  json handle = post(cli, "/sessions", {{"volume_id", vid}}, 201);
  const std::string sid = handle["id"];
  CHECK(handle["volume_id"] == vid);
  CHECK(handle["model_id"] == "default");
  CHECK(handle["revision"] == 0);
  const std::string base = "/sessions/" + sid;

  json lesion = post(cli, base + "/lesions", json::object(), 201);
  const int lid = lesion["lesion_id"];
  const std::string lp = base + "/lesions/" + std::to_string(lid);
  CHECK(lesion["revision"] == 1);

  post(cli, lp + "/propagate", json::object(), 409);  // no clicks yet
  post(cli, lp + "/clicks", {{"x", 32}, {"y", 0}, {"slice", 0}, {"label", "positive"}}, 400);
  post(cli, lp + "/clicks", {{"x", 1}, {"y", 1}, {"slice", -1}, {"label", "positive"}}, 400);
  post(cli, lp + "/clicks", {{"x", 1}, {"y", 1}, {"slice", 0}, {"label", "maybe"}}, 400);
  post(cli, lp + "/clicks", {{"x", "1"}, {"y", 1}, {"slice", 0}}, 400);
  post(cli, base + "/lesions/9/clicks", {{"x", 1}, {"y", 1}, {"slice", 0}}, 404);
  post(cli, "/sessions/nope/lesions/0/clicks", {{"x", 1}, {"y", 1}, {"slice", 0}}, 404);
  post(cli, lp + "/clicks", {{"x", 16}, {"y", 16}, {"slice", 3}, {"label", "positive"}, {"revision", 0}}, 409);

  json click = post(cli, lp + "/clicks", {{"x", 16}, {"y", 16}, {"slice", 3}, {"label", "positive"}, {"revision", 1}}, 200);
  CHECK(click["revision"] == 2);
  CHECK(click["slice"] == 3);
  CHECK(click["mask"]["shape"] == json({32, 32, 1}));

  // Same computation done locally gives the same slice.
  inference::Session local(net, vol);
  int l0 = local.add_lesion();
  auto expect = local.apply_click(l0, {16, 16, 3, true});
  Mask got = decode(click["mask"]);
  REQUIRE(count_foreground(expect.mask) > 0);
  for (int64_t i = 0; i < expect.mask.size(); ++i) CHECK(got[i] == expect.mask[i]);

  json prop = post(cli, lp + "/propagate", {{"revision", 2}}, 200);
  CHECK(prop["revision"] == 3);
  CHECK(prop["provenance"][3] == "prompted");
  CHECK(decode(prop["mask"]) == local.propagate_memory(l0).mask);

  json ex = get(cli, base + "/exemplars");
  CHECK(ex["revision"] == 3);
  REQUIRE(!ex["entries"].empty());
  int prompted = 0;
  for (const auto& e : ex["entries"]) {
    prompted += e["prompted"].get<bool>();
    CHECK(e["lesion_id"] == lid);
    CHECK(e.contains("slice"));
    CHECK(e.contains("recency_rank"));
  }
  CHECK(prompted >= 1);

  json sem = post(cli, base + "/propagate-exemplars", json::object(), 200);
  CHECK(decode(sem["mask"]) == local.propagate_exemplars().mask);

  json fin = get(cli, base + "/mask?kind=final");
  CHECK(fin["revision"] == 3);
  CHECK(fin["mask"]["revision"] == 3);
  CHECK(decode(fin["mask"]) == local.final_mask().mask);
  CHECK(decode(get(cli, base + "/mask?kind=instance&lesion=" + std::to_string(lid))["mask"]) == local.instance(l0)->mask);
  CHECK(decode(get(cli, base + "/mask?kind=semantic")["mask"]) == local.semantic()->mask);
  CHECK(cli.Get(base + "/mask?kind=instance")->status == 400);
  CHECK(cli.Get(base + "/mask?kind=instance&lesion=5")->status == 404);
  CHECK(cli.Get(base + "/mask?kind=bogus")->status == 400);

  // A second click invalidates the instance; GET brings it current.
  post(cli, lp + "/clicks", {{"x", 2}, {"y", 2}, {"slice", 0}, {"label", "negative"}}, 200);
  local.apply_click(l0, {2, 2, 0, false});
  json inst = get(cli, base + "/mask?kind=instance&lesion=" + std::to_string(lid));
  CHECK(decode(inst["mask"]) == local.propagate_memory(l0).mask);
  CHECK(inst["revision"] == local.revision());

  auto del = cli.Delete(base);
  REQUIRE(del);
  CHECK(del->status == 204);
  CHECK(cli.Get(base)->status == 404);
  CHECK(cli.Delete(base)->status == 404);
  CHECK(server.session_count() == 0);
}

TEST_CASE("two sessions on one volume mutate independently") {
  service::Server server(local_config(), biased_net());
  httplib::Client cli("127.0.0.1", server.start());
  std::string vid = upload_ok(cli, phantom_volume());
  std::string a = post(cli, "/sessions", {{"volume_id", vid}}, 201)["id"];
  std::string b = post(cli, "/sessions", {{"volume_id", vid}}, 201)["id"];
  CHECK(a != b);
  post(cli, "/sessions/" + b + "/lesions", json::object(), 201);
  json before = get(cli, "/sessions/" + b + "/mask?kind=final");

  post(cli, "/sessions/" + a + "/lesions", json::object(), 201);
  post(cli, "/sessions/" + a + "/lesions/0/clicks", {{"x", 10}, {"y", 12}, {"slice", 2}}, 200);
  post(cli, "/sessions/" + a + "/lesions/0/propagate", json::object(), 200);

  json after = get(cli, "/sessions/" + b + "/mask?kind=final");
  CHECK(after == before);
  CHECK(get(cli, "/sessions/" + b)["revision"] == 1);
  CHECK(get(cli, "/sessions/" + a)["revision"] == 3);
  CHECK(get(cli, "/sessions/" + b + "/exemplars")["entries"].empty());

  // Concurrent clicks on both sessions.
  auto worker = [&](const std::string& sid) {
    httplib::Client c("127.0.0.1", server.port());
    for (int i = 0; i < 3; ++i)
      c.Post("/sessions/" + sid + "/lesions/0/clicks", json{{"x", 5 + i}, {"y", 7}, {"slice", i}}.dump(), "application/json");
  };
  std::thread ta(worker, a), tb(worker, b);
  ta.join();
  tb.join();
  CHECK(get(cli, "/sessions/" + a)["revision"] == 6);
  CHECK(get(cli, "/sessions/" + b)["revision"] == 4);
}

TEST_CASE("session limit and idle expiry") {
  auto cfg = local_config();
  cfg.max_sessions = 1;
  cfg.session_ttl_s = 0.3;
  service::Server server(cfg, biased_net());
  httplib::Client cli("127.0.0.1", server.start());
  std::string vid = upload_ok(cli, phantom_volume());
  std::string a = post(cli, "/sessions", {{"volume_id", vid}}, 201)["id"];
  post(cli, "/sessions", {{"volume_id", vid}}, 503);
  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  CHECK(cli.Get("/sessions/" + a)->status == 404);
  post(cli, "/sessions", {{"volume_id", vid}}, 201);
}

TEST_CASE("restarting with persisted snapshots restores identical masks") {
  testing::TempDir dir;
  auto net = biased_net();
  std::string vid, sid;
  json final_before, inst_before, ex_before, slice_before;
  std::string bmp_before;
  {
    service::Server server(local_config(dir.path().string()), net);
    httplib::Client cli("127.0.0.1", server.start());
    vid = upload_ok(cli, phantom_volume(9));
    sid = post(cli, "/sessions", {{"volume_id", vid}}, 201)["id"];
    const std::string base = "/sessions/" + sid;
    post(cli, base + "/lesions", json::object(), 201);
    post(cli, base + "/lesions", json::object(), 201);
    post(cli, base + "/lesions/0/clicks", {{"x", 12}, {"y", 14}, {"slice", 2}}, 200);
    post(cli, base + "/lesions/1/clicks", {{"x", 22}, {"y", 20}, {"slice", 4}}, 200);
    post(cli, base + "/lesions/0/propagate", json::object(), 200);
    final_before = get(cli, base + "/mask?kind=final");
    inst_before = get(cli, base + "/mask?kind=instance&lesion=1");
    ex_before = get(cli, base + "/exemplars");
    bmp_before = cli.Get("/volumes/" + vid + "/slices/3")->body;
    server.stop();
  }
  service::Server server(local_config(dir.path().string()), net);
  CHECK(server.session_count() == 1);
  CHECK(server.volume_count() == 1);
  httplib::Client cli("127.0.0.1", server.start());
  const std::string base = "/sessions/" + sid;
  CHECK(get(cli, base + "/mask?kind=final") == final_before);
  CHECK(get(cli, base + "/mask?kind=instance&lesion=1") == inst_before);
  CHECK(get(cli, base + "/exemplars") == ex_before);
  CHECK(cli.Get("/volumes/" + vid + "/slices/3")->body == bmp_before);
  // The restored session keeps accepting work.
  post(cli, base + "/lesions/1/clicks", {{"x", 21}, {"y", 20}, {"slice", 3}, {"revision", final_before["revision"]}}, 200);

  auto del = cli.Delete(base);
  CHECK(del->status == 204);
  CHECK_FALSE(std::filesystem::exists(dir / "sessions" / (sid + ".ckpt")));
}
