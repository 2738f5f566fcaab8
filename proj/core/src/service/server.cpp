#include "mois/service/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "mois/io/preproc.hpp"
#include "mois/io/rle.hpp"
#include "mois/model/serialize.hpp"
#include "mois/service/bmp.hpp"

namespace mois::service {

namespace fs = std::filesystem;
using json = nlohmann::json;
using inference::Session;

// ---- config ----------------------------------------------------------------

void ServiceConfig::validate() const {
  if (host.empty()) throw std::invalid_argument("service host must not be empty");
  if (port < 0 || port > 65535) throw std::invalid_argument("service port out of range: " + std::to_string(port));
  if (model_id.empty()) throw std::invalid_argument("model_id must not be empty");
  if (max_sessions < 1) throw std::invalid_argument("max_sessions must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  inference.validate();
}

void to_json(json& j, const ServiceConfig& c) {
  j = {{"host", c.host},
       {"port", c.port},
       {"model_path", c.model_path},
       {"model_id", c.model_id},
       {"session_ttl_s", c.session_ttl_s},
       {"max_sessions", c.max_sessions},
       {"snapshot_dir", c.snapshot_dir},
       {"threads", c.threads},
       {"inference", c.inference}};
}

void from_json(const json& j, ServiceConfig& c) {
  c = ServiceConfig{};
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.model_path = j.value("model_path", c.model_path);
  c.model_id = j.value("model_id", c.model_id);
  c.session_ttl_s = j.value("session_ttl_s", c.session_ttl_s);
  c.max_sessions = j.value("max_sessions", c.max_sessions);
  c.snapshot_dir = j.value("snapshot_dir", c.snapshot_dir);
  c.threads = j.value("threads", c.threads);
  if (j.contains("inference")) c.inference = j["inference"].get<inference::InferenceConfig>();
  c.validate();
}

namespace {

json env_value(const json& current, const std::string& key, const std::string& text) {
  try {
    if (current.is_boolean()) {
      std::string t = text;
      std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
      if (t == "0" || t == "false" || t == "no" || t == "off") return false;
      throw std::invalid_argument("not a boolean");
    }
    size_t used = 0;
    if (current.is_number_integer()) {
      long long v = std::stoll(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (current.is_number()) {
      double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for " + key + ": '" + text + "'");
  }
  return text;
}

void apply_env_keys(json& obj, const std::function<const char*(const char*)>& getenv) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (it->is_object()) {
      apply_env_keys(*it, getenv);
      continue;
    }
    std::string var = "MOIS_" + it.key();
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (const char* v = getenv(var.c_str())) *it = env_value(*it, var, v);
  }
}

}  // namespace

void ServiceConfig::apply_env(const std::function<const char*(const char*)>& getenv) {
  json j = *this;
  apply_env_keys(j, getenv);
  *this = j.get<ServiceConfig>();
}

ServiceConfig load_service_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open service config " + path.string());
  try {
    return json::parse(in).get<ServiceConfig>();
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ---- state -----------------------------------------------------------------

namespace {

struct ApiError : std::runtime_error {
  int status;
  ApiError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
};

struct VolumeEntry {
  io::Volume volume;
  double window_lo = 0.0;
  double window_hi = 1.0;
};

struct SessionEntry {
  std::mutex mutex;
  std::unique_ptr<Session> session;
  std::string volume_id;
  std::string model_id;
  double created_at = 0.0;
  std::chrono::steady_clock::time_point last_used;
  bool deleted = false;
};

double unix_now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string new_id(std::mt19937_64& rng) {
  static const char* hex = "0123456789abcdef";
  std::string id(16, '0');
  uint64_t v = rng();
  for (auto& ch : id) {
    ch = hex[v & 15];
    v >>= 4;
  }
  return id;
}

int parse_int(const std::string& text, int status, const std::string& what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ApiError(status, "bad " + what + ": '" + text + "'");
  return v;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j;
  try {
    j = json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ApiError(400, std::string("malformed JSON body: ") + e.what());
  }
  if (!j.is_object()) throw ApiError(400, "JSON body must be an object");
  return j;
}

bool parse_label(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) {
    int v = j.get<int>();
    if (v == 0 || v == 1) return v == 1;
  }
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "positive" || s == "pos" || s == "+") return true;
    if (s == "negative" || s == "neg" || s == "-") return false;
  }
  throw ApiError(400, "label must be positive/negative, 1/0 or a boolean");
}

json provenance_json(const std::vector<inference::Provenance>& p) {
  static const char* names[] = {"none", "prompted", "propagated", "exemplar"};
  json a = json::array();
  for (auto v : p) a.push_back(names[static_cast<int>(v)]);
  return a;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct Server::Impl {
  ServiceConfig config;
  std::shared_ptr<const inference::Net> net;
  httplib::Server http;
  std::thread thread;
  std::atomic<int> bound_port{0};

  mutable std::mutex store_mutex;
  std::map<std::string, std::shared_ptr<const VolumeEntry>> volumes;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions;
  std::mt19937_64 rng{std::random_device{}()};

  Impl(ServiceConfig c, std::shared_ptr<const inference::Net> n) : config(std::move(c)), net(std::move(n)) {
    config.validate();
    if (!net) {
      if (config.model_path.empty()) throw std::invalid_argument("service needs model_path or a loaded model");
      net = std::shared_ptr<const inference::Net>(model::load_model<float>(config.model_path));
    }
    if (!config.snapshot_dir.empty()) restore_persisted();
    routes();
  }

  fs::path volume_path(const std::string& id) const { return fs::path(config.snapshot_dir) / "volumes" / (id + ".json"); }
  fs::path session_path(const std::string& id) const { return fs::path(config.snapshot_dir) / "sessions" / (id + ".ckpt"); }
  fs::path session_meta(const std::string& id) const { return fs::path(config.snapshot_dir) / "sessions" / (id + ".json"); }

  static std::shared_ptr<VolumeEntry> make_volume_entry(io::Volume v, const inference::InferenceConfig& cfg) {
    auto e = std::make_shared<VolumeEntry>();
    e->window_lo = io::percentile(v.intensities.values(), cfg.p_low);
    e->window_hi = io::percentile(v.intensities.values(), cfg.p_high);
    e->volume = std::move(v);
    return e;
  }

  void restore_persisted() {
    fs::create_directories(fs::path(config.snapshot_dir) / "volumes");
    fs::create_directories(fs::path(config.snapshot_dir) / "sessions");
    for (const auto& f : fs::directory_iterator(fs::path(config.snapshot_dir) / "volumes")) {
      if (f.path().extension() != ".json") continue;
      try {
        volumes[f.path().stem().string()] = make_volume_entry(io::load_volume(f.path()), config.inference);
      } catch (const std::exception& e) {
        std::cerr << "mois: skipping volume " << f.path() << ": " << e.what() << "\n";
      }
    }
    for (const auto& f : fs::directory_iterator(fs::path(config.snapshot_dir) / "sessions")) {
      if (f.path().extension() != ".json") continue;
      const std::string id = f.path().stem().string();
      try {
        std::ifstream in(f.path());
        json meta = json::parse(in);
        auto e = std::make_shared<SessionEntry>();
        e->session = Session::load(net, session_path(id));
        e->volume_id = meta.at("volume_id").get<std::string>();
        e->model_id = meta.at("model_id").get<std::string>();
        e->created_at = meta.at("created_at").get<double>();
        e->last_used = std::chrono::steady_clock::now();
        sessions[id] = std::move(e);
      } catch (const std::exception& e) {
        std::cerr << "mois: skipping session " << id << ": " << e.what() << "\n";
      }
    }
  }

  // Caller holds the entry lock.
  void persist(const std::string& id, const SessionEntry& e) const {
    if (config.snapshot_dir.empty() || e.deleted) return;
    fs::path tmp = session_path(id);
    tmp += ".tmp";
    e.session->save(tmp);
    fs::rename(tmp, session_path(id));
    json meta = {{"volume_id", e.volume_id}, {"model_id", e.model_id}, {"created_at", e.created_at}};
    std::ofstream(session_meta(id)) << meta.dump() << "\n";
  }

  void erase_files(const std::string& id) const {
    if (config.snapshot_dir.empty()) return;
    std::error_code ec;
    fs::remove(session_meta(id), ec);
    fs::remove(session_path(id), ec);
  }

  // Drops idle sessions. Caller holds store_mutex.
  void sweep_expired() {
    if (config.session_ttl_s <= 0) return;
    const auto now = std::chrono::steady_clock::now();
    const auto ttl = std::chrono::duration<double>(config.session_ttl_s);
    for (auto it = sessions.begin(); it != sessions.end();) {
      auto& e = it->second;
      std::unique_lock lock(e->mutex, std::try_to_lock);
      if (lock.owns_lock() && now - e->last_used > ttl) {
        e->deleted = true;
        erase_files(it->first);
        it = sessions.erase(it);
      } else {
        ++it;
      }
    }
  }

  std::shared_ptr<const VolumeEntry> find_volume(const std::string& id) const {
    std::lock_guard lock(store_mutex);
    auto it = volumes.find(id);
    if (it == volumes.end()) throw ApiError(404, "unknown volume " + id);
    return it->second;
  }

  std::shared_ptr<SessionEntry> find_session(const std::string& id) {
    std::lock_guard lock(store_mutex);
    sweep_expired();
    auto it = sessions.find(id);
    if (it == sessions.end()) throw ApiError(404, "unknown session " + id);
    return it->second;
  }

  // Runs fn with the session locked; fn returns true if it changed state.
  template <typename Fn>
  void with_session(const httplib::Request& req, Fn&& fn) {
    const std::string id = req.path_params.at("sid");
    auto e = find_session(id);
    std::lock_guard lock(e->mutex);
    if (e->deleted) throw ApiError(404, "unknown session " + id);
    e->last_used = std::chrono::steady_clock::now();
    const uint64_t before = e->session->revision();
    fn(*e);
    if (e->session->revision() != before) persist(id, *e);
  }

  static void check_revision(const json& body, const Session& s) {
    if (!body.contains("revision")) return;
    if (!body["revision"].is_number_unsigned() && !body["revision"].is_number_integer())
      throw ApiError(400, "revision must be an integer");
    uint64_t r = body["revision"].get<uint64_t>();
    if (r != s.revision())
      throw ApiError(409, "stale revision " + std::to_string(r) + ", current is " + std::to_string(s.revision()));
  }

  static int lesion_param(const httplib::Request& req, const Session& s) {
    const std::string& text = req.path_params.at("lid");
    int lid = parse_int(text, 404, "lesion id");
    if (!s.has_lesion(lid)) throw ApiError(404, "unknown lesion " + text);
    return lid;
  }

  json handle_json(const std::string& id, const SessionEntry& e) const {
    return {{"id", id},
            {"volume_id", e.volume_id},
            {"model_id", e.model_id},
            {"revision", e.session->revision()},
            {"created_at", e.created_at},
            {"lesions", e.session->lesion_ids()}};
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      auto fail = [&](int status, const std::string& msg) { send_json(res, {{"error", msg}}, status); };
      try {
        fn(req, res);
      } catch (const ApiError& e) {
        fail(e.status, e.what());
      } catch (const json::exception& e) {
        fail(400, e.what());
      } catch (const io::FormatError& e) {
        fail(400, e.what());
      } catch (const std::invalid_argument& e) {
        fail(400, e.what());
      } catch (const std::out_of_range& e) {
        fail(404, e.what());
      } catch (const std::logic_error& e) {
        fail(409, e.what());
      } catch (const std::exception& e) {
        fail(500, e.what());
      }
    };
  }

  void routes() {
    http.new_task_queue = [n = config.threads] { return new httplib::ThreadPool(n); };

    http.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(store_mutex);
      send_json(res, {{"status", "ok"},
                      {"model_id", config.model_id},
                      {"sessions", sessions.size()},
                      {"volumes", volumes.size()}});
    }));

    http.Post("/volumes", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.is_multipart_form_data()) throw ApiError(400, "expected multipart/form-data with sidecar and payload");
      if (!req.has_file("sidecar") || !req.has_file("payload")) throw ApiError(400, "missing sidecar or payload part");
      io::Volume v = io::volume_from_upload(req.get_file_value("sidecar").content, req.get_file_value("payload").content);
      auto entry = make_volume_entry(std::move(v), config.inference);
      std::string id;
      {
        std::lock_guard lock(store_mutex);
        do id = new_id(rng);
        while (volumes.count(id));
        volumes[id] = entry;
      }
      if (!config.snapshot_dir.empty()) io::save_volume(entry->volume, volume_path(id));
      const Dims& d = entry->volume.dims();
      const Spacing& s = entry->volume.spacing;
      send_json(res, {{"volume_id", id}, {"shape", {d.h, d.w, d.d}}, {"spacing", {s.x, s.y, s.z}}}, 201);
    }));

    http.Get("/volumes/:vid", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto v = find_volume(req.path_params.at("vid"));
      send_json(res, io::volume_sidecar(v->volume));
    }));

    http.Get("/volumes/:vid/slices/:d", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto v = find_volume(req.path_params.at("vid"));
      int d = parse_int(req.path_params.at("d"), 400, "slice index");
      const Dims& dims = v->volume.dims();
      if (d < 0 || d >= dims.d) throw ApiError(400, "slice " + std::to_string(d) + " outside volume");
      auto pixels = window_slice(v->volume, d, v->window_lo, v->window_hi);
      res.set_content(encode_bmp_gray8(pixels, dims.w, dims.h), "image/bmp");
    }));

    http.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      if (!body.contains("volume_id")) throw ApiError(400, "volume_id is required");
      const std::string vid = body["volume_id"].get<std::string>();
      const std::string mid = body.value("model_id", config.model_id);
      if (mid != config.model_id) throw ApiError(404, "unknown model " + mid);
      auto v = find_volume(vid);
      auto e = std::make_shared<SessionEntry>();
      e->session = std::make_unique<Session>(net, v->volume, config.inference);
      e->volume_id = vid;
      e->model_id = mid;
      e->created_at = unix_now();
      e->last_used = std::chrono::steady_clock::now();
      std::string id;
      {
        std::lock_guard lock(store_mutex);
        sweep_expired();
        if (static_cast<int>(sessions.size()) >= config.max_sessions)
          throw ApiError(503, "session limit of " + std::to_string(config.max_sessions) + " reached");
        do id = new_id(rng);
        while (sessions.count(id));
        sessions[id] = e;
      }
      std::lock_guard lock(e->mutex);
      persist(id, *e);
      send_json(res, handle_json(id, *e), 201);
    }));

    http.Get("/sessions/:sid", guarded([this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, [&](SessionEntry& e) { send_json(res, handle_json(req.path_params.at("sid"), e)); });
    }));

    http.Delete("/sessions/:sid", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("sid");
      std::shared_ptr<SessionEntry> e;
      {
        std::lock_guard lock(store_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw ApiError(404, "unknown session " + id);
        e = it->second;
        sessions.erase(it);
      }
      std::lock_guard lock(e->mutex);
      e->deleted = true;
      erase_files(id);
      res.status = 204;
    }));

    http.Post("/sessions/:sid/lesions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      with_session(req, [&](SessionEntry& e) {
        check_revision(body, *e.session);
        int lid = e.session->add_lesion();
        send_json(res, {{"lesion_id", lid}, {"revision", e.session->revision()}}, 201);
      });
    }));

    http.Post("/sessions/:sid/lesions/:lid/clicks", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      with_session(req, [&](SessionEntry& e) {
        Session& s = *e.session;
        int lid = lesion_param(req, s);
        check_revision(body, s);
        for (const char* k : {"x", "y", "slice"})
          if (!body.contains(k) || !body[k].is_number_integer()) throw ApiError(400, std::string(k) + " must be an integer");
        Click c{body["x"].get<int>(), body["y"].get<int>(), body["slice"].get<int>(),
                parse_label(body.value("label", json("positive")))};
        auto r = s.apply_click(lid, c);
        send_json(res, {{"lesion_id", lid},
                        {"slice", r.slice},
                        {"mask", io::rle_to_json(io::rle_encode(r.mask, r.revision))},
                        {"revision", r.revision},
                        {"empty_after_positive", r.empty_after_positive}});
      });
    }));

    http.Post("/sessions/:sid/lesions/:lid/propagate", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      with_session(req, [&](SessionEntry& e) {
        Session& s = *e.session;
        int lid = lesion_param(req, s);
        check_revision(body, s);
        if (s.clicks(lid).empty()) throw ApiError(409, "lesion " + std::to_string(lid) + " has no clicks");
        const auto& mv = s.propagate_memory(lid);
        send_json(res, {{"lesion_id", lid},
                        {"mask", io::rle_to_json(io::rle_encode(mv.mask, mv.revision))},
                        {"provenance", provenance_json(mv.provenance)},
                        {"revision", s.revision()}});
      });
    }));

    http.Post("/sessions/:sid/propagate-exemplars", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      with_session(req, [&](SessionEntry& e) {
        Session& s = *e.session;
        check_revision(body, s);
        const auto& mv = s.propagate_exemplars();
        send_json(res, {{"mask", io::rle_to_json(io::rle_encode(mv.mask, mv.revision))},
                        {"exemplars", s.exemplar_bank().entries().size()},
                        {"revision", s.revision()}});
      });
    }));

    http.Get("/sessions/:sid/exemplars", guarded([this](const httplib::Request& req, httplib::Response& res) {
      with_session(req, [&](SessionEntry& e) {
        json entries = json::array();
        for (const auto& x : e.session->exemplars()) {
          entries.push_back({{"slice", x.slice},
                             {"prompted", x.prompted},
                             {"lesion_id", x.lesion},
                             {"recency_rank", x.recency_rank}});
        }
        send_json(res, {{"revision", e.session->revision()},
                        {"capacity", e.session->exemplar_bank().capacity()},
                        {"entries", entries}});
      });
    }));

    http.Get("/sessions/:sid/mask", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string kind_text = req.has_param("kind") ? req.get_param_value("kind") : "final";
      inference::MaskKind kind;
      try {
        kind = inference::mask_kind_from_string(kind_text);
      } catch (const std::exception&) {
        throw ApiError(400, "kind must be instance, semantic or final");
      }
      with_session(req, [&](SessionEntry& e) {
        Session& s = *e.session;
        json out = {{"kind", kind_text}};
        Mask mask;
        switch (kind) {
          case inference::MaskKind::kInstance: {
            if (!req.has_param("lesion")) throw ApiError(400, "kind=instance needs lesion");
            int lid = parse_int(req.get_param_value("lesion"), 404, "lesion id");
            if (!s.has_lesion(lid)) throw ApiError(404, "unknown lesion " + std::to_string(lid));
            if (s.clicks(lid).empty()) throw ApiError(409, "lesion " + std::to_string(lid) + " has no clicks");
            if (!s.instance_is_current(lid)) s.propagate_memory(lid);
            mask = s.instance(lid)->mask;
            out["lesion_id"] = lid;
            break;
          }
          case inference::MaskKind::kSemantic:
            if (!s.semantic_is_current()) s.propagate_exemplars();
            mask = s.semantic()->mask;
            break;
          case inference::MaskKind::kFinal:
            mask = s.final_mask().mask;
            break;
        }
        out["revision"] = s.revision();
        out["mask"] = io::rle_to_json(io::rle_encode(mask, s.revision()));
        send_json(res, out);
      });
    }));
  }
};

Server::Server(ServiceConfig config, std::shared_ptr<const inference::Net> net)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(net))) {}

Server::~Server() { stop(); }

int Server::start() {
  auto& http = impl_->http;
  int port = impl_->config.port;
  if (port == 0) {
    port = http.bind_to_any_port(impl_->config.host);
    if (port < 0) throw std::runtime_error("cannot bind " + impl_->config.host);
  } else if (!http.bind_to_port(impl_->config.host, port)) {
    throw std::runtime_error("cannot bind " + impl_->config.host + ":" + std::to_string(port));
  }
  impl_->bound_port = port;
  impl_->thread = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return port;
}

void Server::run() {
  auto& http = impl_->http;
  int port = impl_->config.port;
  if (port == 0) port = http.bind_to_any_port(impl_->config.host);
  else if (!http.bind_to_port(impl_->config.host, port)) port = -1;
  if (port < 0) throw std::runtime_error("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  impl_->bound_port = port;
  http.listen_after_bind();
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Server::port() const { return impl_->bound_port; }
const ServiceConfig& Server::config() const { return impl_->config; }

size_t Server::session_count() const {
  std::lock_guard lock(impl_->store_mutex);
  return impl_->sessions.size();
}

size_t Server::volume_count() const {
  std::lock_guard lock(impl_->store_mutex);
  return impl_->volumes.size();
}

}  // namespace mois::service
