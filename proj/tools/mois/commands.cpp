#include "commands.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <json.hpp>

#include "mois/eval/report.hpp"
#include "mois/inference/session.hpp"
#include "mois/io/volume.hpp"
#include "mois/model/serialize.hpp"
#include "mois/service/server.hpp"
#include "mois/train/trainer.hpp"

namespace mois::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Click parse_click(const json& j) {
  Click c;
  c.x = j.at("x").get<int>();
  c.y = j.at("y").get<int>();
  c.slice = j.at("slice").get<int>();
  const json label = j.value("label", json("positive"));
  if (label.is_boolean()) c.positive = label.get<bool>();
  else if (label.is_number_integer()) c.positive = label.get<int>() != 0;
  else c.positive = label.get<std::string>() != "negative";
  return c;
}

}  // namespace

int phantom_gen(const PhantomGenOptions& o) {
  train::PhantomConfig pc;
  if (!o.config.empty()) pc = read_json(o.config).get<train::PhantomConfig>();
  pc.validate();
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  json scans = json::array();
  for (int i = 0; i < o.count; ++i) {
    const uint64_t seed = o.seed + static_cast<uint64_t>(i);
    auto ph = train::generate_phantom(pc, seed);
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%04d", i);
    const std::string stem(name);
    io::save_volume(ph.volume, dir / (stem + ".json"));
    io::save_mask(ph.lesion_mask(), ph.volume.spacing, dir / (stem + "_gt.json"));
    io::save_labels(ph.instances, ph.volume.spacing, dir / (stem + "_instances.json"));
    io::save_labels(ph.classes, ph.volume.spacing, dir / (stem + "_classes.json"));
    json entry = {{"name", stem},
                  {"seed", seed},
                  {"volume", stem + ".json"},
                  {"gt", stem + "_gt.json"},
                  {"lesions", ph.lesions},
                  {"distractors", ph.distractors}};
    if (!o.model.empty()) entry["model"] = o.model;
    scans.push_back(entry);
  }
  json manifest = {{"phantom", pc}, {"scans", scans}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << o.count << " phantoms and " << (dir / "manifest.json").string() << "\n";
  return 0;
}

int train(const TrainOptions& o) {
  train::TrainConfig cfg = o.config.empty() ? train::TrainConfig{} : train::load_train_config(o.config);
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  const fs::path out(o.out_dir);
  auto print = [](const train::EpochLog& log) {
    std::cout << train::epoch_csv_row(log) << std::endl;
  };
  std::cout << train::epoch_csv_header() << "\n";
  if (cfg.folds > 1 && !o.fold) {
    train::run_folds(cfg, out);
    return 0;
  }
  if (o.fold) cfg.fold = *o.fold;
  cfg.validate();
  train::Trainer trainer(cfg);
  trainer.set_rescue_path(out / "last_good.ckpt");
  try {
    trainer.train(out, print);
  } catch (const train::TrainingDiverged& e) {
    std::cerr << "mois: " << e.what() << "\n";
    return 3;
  }
  std::cout << "model written to " << (out / "model.ckpt").string() << "\n";
  return 0;
}

int eval(const EvalOptions& o) {
  const fs::path manifest_path(o.manifest);
  const json manifest = read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  eval::EvalConfig ec{o.lesions, o.clicks, o.v_thresh, o.iou_threshold, o.connectivity};
  ec.validate();
  inference::InferenceConfig ic;
  ic.exemplar_stage = !o.stage1_only;
  ic.context_limit = o.context_limit;
  ic.v_thresh = o.v_thresh;
  ic.connectivity = o.connectivity;
  ic.validate();

  std::map<std::string, std::shared_ptr<const inference::Net>> models;
  auto model_for = [&](const std::string& path) {
    auto it = models.find(path);
    if (it == models.end())
      it = models.emplace(path, std::shared_ptr<const inference::Net>(model::load_model<float>(path))).first;
    return it->second;
  };

  std::vector<eval::ScanResult> results;
  for (const auto& s : manifest.at("scans")) {
    std::string model_path = !o.model.empty() ? o.model : resolve(base, s.value("model", manifest.value("model", ""))).string();
    if (o.model.empty() && !s.contains("model") && !manifest.contains("model"))
      throw std::runtime_error("scan " + s.value("name", "?") + " has no model; pass --model");
    auto vol = io::load_volume(resolve(base, s.at("volume").get<std::string>()));
    auto gt = io::load_mask(resolve(base, s.at("gt").get<std::string>()));
    if (gt.dims() != vol.dims()) throw std::runtime_error("gt and volume extents differ for " + s.value("name", "?"));
    auto factory = inference::session_factory(model_for(model_path), ic);
    std::string name = s.value("name", s.at("volume").get<std::string>());
    results.push_back({name, eval::run_lesionwise_eval(factory, vol, gt, ec)});
    const auto& r = results.back().report;
    std::cout << name << " scan_dsc=" << r.scan_dsc << " lesion_f1=" << r.lesion_f1 << "\n";
  }
  json report = eval::build_report(results, ec, o.seed);
  report["inference"] = ic;
  write_text(o.report, report.dump(2) + "\n");
  if (!o.csv.empty()) write_text(o.csv, eval::summary_csv(results));
  std::cout << "report written to " << o.report << "\n";
  return 0;
}

int infer(const InferOptions& o) {
  std::shared_ptr<const inference::Net> net = model::load_model<float>(o.model);
  auto vol = io::load_volume(o.volume);
  std::vector<std::vector<Click>> clicks;
  if (!o.clicks.empty()) {
    json j = read_json(o.clicks);
    for (const auto& lesion : j.at("lesions")) {
      clicks.emplace_back();
      for (const auto& c : lesion) clicks.back().push_back(parse_click(c));
    }
  }
  inference::InferenceConfig ic;
  ic.exemplar_stage = !o.stage1_only;
  auto result = inference::full_inference(net, vol, clicks, ic);
  io::save_mask(result.final, vol.spacing, o.out);
  if (!o.semantic_out.empty() && result.semantic) io::save_mask(*result.semantic, vol.spacing, o.semantic_out);
  std::cout << "final mask: " << count_foreground(result.final) << " voxels, written to " << o.out << "\n";
  return 0;
}

int serve(const ServeOptions& o) {
  service::ServiceConfig cfg = o.config.empty() ? service::ServiceConfig{} : service::load_service_config(o.config);
  cfg.apply_env();
  if (o.host) cfg.host = *o.host;
  if (o.port) cfg.port = *o.port;
  if (o.model) cfg.model_path = *o.model;
  if (o.snapshot_dir) cfg.snapshot_dir = *o.snapshot_dir;
  cfg.validate();

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Server server(cfg);
  int port = server.start();
  std::cout << "listening on " << cfg.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "stopping" << std::endl;
  server.stop();
  return 0;
}

int defaults(const std::string& kind) {
  json j;
  if (kind == "train") j = train::TrainConfig{};
  else if (kind == "phantom") j = train::PhantomConfig{};
  else if (kind == "model") j = model::ModelConfig{};
  else if (kind == "service") j = service::ServiceConfig{};
  else if (kind == "inference") j = inference::InferenceConfig{};
  else throw std::invalid_argument("unknown config kind " + kind);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace mois::cli
