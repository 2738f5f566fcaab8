#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace mois::cli;
  CLI::App app{"mois: phantom generation, training, evaluation and the session service"};
  app.require_subcommand(1);

  PhantomGenOptions gen;
  auto* gen_cmd = app.add_subcommand("phantom-gen", "write synthetic phantoms and a manifest");
  gen_cmd->add_option("-o,--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("-n,--count", gen.count, "number of phantoms")->check(CLI::PositiveNumber);
  gen_cmd->add_option("-s,--seed", gen.seed, "seed of the first phantom (others follow)");
  gen_cmd->add_option("-c,--config", gen.config, "phantom config JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("-m,--model", gen.model, "model checkpoint recorded in the manifest");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train a model on generated phantoms");
  train_cmd->add_option("-c,--config", tr.config, "training config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--out", tr.out_dir, "output directory")->required();
  train_cmd->add_option("--epochs", tr.epochs, "override epochs");
  train_cmd->add_option("--seed", tr.seed, "override seed");
  train_cmd->add_option("--fold", tr.fold, "train only this fold");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "lesion-wise interactive evaluation over a manifest");
  eval_cmd->add_option("manifest", ev.manifest, "manifest JSON with (volume, gt, model) entries")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("-o,--report", ev.report, "report JSON path");
  eval_cmd->add_option("--csv", ev.csv, "summary CSV path");
  eval_cmd->add_option("-m,--model", ev.model, "model checkpoint for every scan");
  eval_cmd->add_option("-L,--lesions", ev.lesions, "lesions prompted per scan")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("-C,--clicks", ev.clicks, "clicks per lesion")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--v-thresh", ev.v_thresh, "minimum component volume in mm^3");
  eval_cmd->add_option("--iou-threshold", ev.iou_threshold, "detection IoU threshold");
  eval_cmd->add_option("--connectivity", ev.connectivity, "6, 18 or 26");
  eval_cmd->add_option("--context-limit", ev.context_limit, "exemplars per slice, -1 for the full bank");
  eval_cmd->add_flag("--stage1-only", ev.stage1_only, "skip exemplar propagation");
  eval_cmd->add_option("--seed", ev.seed, "seed echoed in the report");

  InferOptions inf;
  auto* infer_cmd = app.add_subcommand("infer", "run both inference stages on a volume");
  infer_cmd->add_option("-m,--model", inf.model, "model checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("-v,--volume", inf.volume, "volume sidecar")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("-k,--clicks", inf.clicks, "clicks JSON {\"lesions\": [[{x, y, slice, label}]]}")
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("-o,--out", inf.out, "final mask sidecar")->required();
  infer_cmd->add_option("--semantic-out", inf.semantic_out, "Stage 2 mask sidecar");
  infer_cmd->add_flag("--stage1-only", inf.stage1_only, "skip exemplar propagation");

  ServeOptions sv;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP session service");
  serve_cmd->add_option("-c,--config", sv.config, "service config JSON")->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", sv.host, "listen address");
  serve_cmd->add_option("-p,--port", sv.port, "listen port, 0 for any");
  serve_cmd->add_option("-m,--model", sv.model, "model checkpoint");
  serve_cmd->add_option("--snapshot-dir", sv.snapshot_dir, "persist volumes and sessions here");

  std::string kind;
  auto* defaults_cmd = app.add_subcommand("defaults", "print a default config");
  defaults_cmd->add_option("kind", kind, "train, phantom, model, service or inference")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_cmd) return phantom_gen(gen);
    if (*train_cmd) return train(tr);
    if (*eval_cmd) return eval(ev);
    if (*infer_cmd) return infer(inf);
    if (*serve_cmd) return serve(sv);
    if (*defaults_cmd) return defaults(kind);
  } catch (const std::exception& e) {
    std::cerr << "mois: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
