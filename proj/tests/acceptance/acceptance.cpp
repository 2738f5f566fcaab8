// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Arguments select criteria (e.g. `acceptance P2 P4`).
//
// P5-P7 train two default-profile models on 40 phantoms. Set
// MOIS_ACCEPTANCE_CACHE to a directory to keep and reuse them across runs;
// a cached model is reused only if its stored training config is identical.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mois/banks/banks.hpp"
#include "mois/eval/components.hpp"
#include "mois/eval/morphology.hpp"
#include "mois/eval/report.hpp"
#include "mois/inference/session.hpp"
#include "mois/io/rle.hpp"
#include "mois/model/serialize.hpp"
#include "mois/train/trainer.hpp"
#include "support/bank_reference.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny.hpp"

using namespace mois;
namespace fs = std::filesystem;
namespace ts = mois::tensor;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok    " : "FAILED") + "  " + what);
  }
  void note(const std::string& what) { notes.push_back("        " + what); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---- P1 --------------------------------------------------------------------

constexpr double kGradTol = 1e-4;

Outcome p1_gradients() {
  using testing::grad_check;
  using testing::random_tensor;
  using ts::Tensor;
  Outcome out;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1234);
  double worst = 0.0;
  size_t checked = 0;
  auto check = [&](const std::string& name, const std::function<Tensor<double>()>& f,
                   std::vector<Tensor<double>> leaves, size_t per_leaf = 64) {
    auto r = grad_check(f, leaves, 1e-5, per_leaf);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    if (r.max_rel_error >= kGradTol || r.checked == 0)
      out.require(false, name + " max rel err " + fmt("%.3g", r.max_rel_error));
  };
  auto fixed_project = [](const Tensor<double>& t, uint64_t seed) {
    std::mt19937_64 r(seed);
    return testing::project(t, r);
  };

  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  auto row = random_tensor({4}, rng), col = random_tensor({3, 1}, rng);
  auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  auto p = [&](const Tensor<double>& t) { return fixed_project(t, 77); };
  check("add", [&] { return p(ts::add(a, b)); }, {a, b});
  check("add-broadcast", [&] { return p(ts::add(a, row)); }, {a, row});
  check("sub-broadcast", [&] { return p(ts::sub(a, col)); }, {a, col});
  check("mul", [&] { return p(ts::mul(a, row)); }, {a, row});
  check("div", [&] { return p(ts::div(a, pos)); }, {a, pos});
  check("broadcast_to", [&] { return p(ts::broadcast_to(row, {3, 4})); }, {row});
  check("scale", [&] { return p(ts::scale(a, 1.7)); }, {a});
  check("add_scalar", [&] { return p(ts::add_scalar(a, -0.3)); }, {a});
  check("neg", [&] { return p(ts::neg(a)); }, {a});
  check("square", [&] { return p(ts::square(a)); }, {a});
  check("exp", [&] { return p(ts::exp(a)); }, {a});
  check("log", [&] { return p(ts::log(pos)); }, {pos});
  check("relu", [&] { return p(ts::relu(a)); }, {a});
  check("gelu", [&] { return p(ts::gelu(a)); }, {a});
  check("sigmoid", [&] { return p(ts::sigmoid(a)); }, {a});
  check("log_sigmoid", [&] { return p(ts::log_sigmoid(ts::scale(a, 4.0))); }, {a});
  check("reshape", [&] { return fixed_project(ts::reshape(a, {4, 3}), 3); }, {a});
  check("transpose", [&] { return fixed_project(ts::transpose(a), 3); }, {a});
  check("slice", [&] { return ts::sum(ts::square(ts::slice(a, 1, 1, 3))); }, {a});
  check("concat", [&] { return fixed_project(ts::concat<double>({ts::slice(a, 0, 0, 1), ts::slice(b, 0, 1, 3)}, 0), 4); },
        {a, b});
  check("sum", [&] { return ts::square(ts::sum(a)); }, {a});
  check("mean", [&] { return ts::square(ts::mean(a)); }, {a});
  check("sum-axis", [&] { return ts::sum(ts::square(ts::sum(a, 0))); }, {a});
  check("mean-axis", [&] { return ts::sum(ts::square(ts::mean(a, 1))); }, {a});
  auto m2 = random_tensor({4, 5}, rng);
  check("matmul", [&] { return ts::sum(ts::square(ts::matmul(a, m2))); }, {a, m2});
  check("softmax", [&] { return p(ts::softmax(ts::scale(a, 2.0))); }, {a});
  check("layer_norm", [&] { return p(ts::layer_norm(a)); }, {a});
  auto img = random_tensor({2, 6, 5}, rng), ker = random_tensor({3, 2, 3, 3}, rng), bias = random_tensor({3}, rng);
  check("conv2d", [&] { return fixed_project(ts::conv2d(img, ker, bias, {.stride = 2, .padding = 1}), 5); },
        {img, ker, bias});
  auto small = random_tensor({2, 3, 4}, rng);
  check("upsample_bilinear", [&] { return fixed_project(ts::upsample_bilinear(small, 7, 9), 6); }, {small});
  auto rows = random_tensor({3, 8}, rng);
  std::vector<std::array<float, 2>> pts{{0, 1}, {2, 3}, {5, 1}};
  check("rope2d", [&] { return fixed_project(ts::rope2d(rows, pts), 8); }, {rows});
  auto q = random_tensor({3, 8}, rng), k = random_tensor({5, 8}, rng), v = random_tensor({5, 4}, rng);
  std::vector<std::array<float, 2>> qp{{0, 0}, {1, 0}, {1, 1}}, kp{{0, 0}, {2, 1}, {1, 3}};
  ts::AttentionOptions opt;
  opt.heads = 2;
  opt.rope = true;
  opt.q_positions = qp;
  opt.k_positions = kp;
  check("attention", [&] { return fixed_project(ts::attention(q, k, v, opt), 9); }, {q, k, v});

  // Composite loss on random heads.
  {
    const int s = 4;
    auto target = [&](double pr) {
      std::bernoulli_distribution coin(pr);
      std::vector<double> t(s * s);
      for (auto& x : t) x = coin(rng) ? 1.0 : 0.0;
      t[0] = 1.0;
      return Tensor<double>({s, s}, t);
    };
    auto l1 = random_tensor({s, s}, rng, -3, 3), l2 = random_tensor({s, s}, rng, -3, 3);
    auto l3 = random_tensor({s, s}, rng, -3, 3), l4 = random_tensor({s, s}, rng, -3, 3);
    auto i1 = random_tensor({1}, rng, 0.1, 0.9), i2 = random_tensor({1}, rng, 0.1, 0.9);
    auto o1 = random_tensor({1}, rng), o2 = random_tensor({1}, rng);
    auto t1 = target(0.4), t2 = target(0.2), t3 = target(0.5);
    auto empty = Tensor<double>::zeros({s, s});
    check("composite loss",
          [&] {
            std::vector<train::InstancePrediction<double>> inst{{l1, i1, o1, t1, true}, {l2, i2, o2, empty, false}};
            std::vector<train::SemanticPrediction<double>> sem{{l3, t2}, {l4, t3}};
            return train::composite_loss(inst, sem).total;
          },
          {l1, l2, l3, l4, i1, i2, o1, o2});
  }

  // Full training forward pass through the network, both attention modes.
  for (bool shared : {false, true}) {
    model::ModelConfig mc = testing::tiny_model(16);
    mc.channels = 8;
    mc.stem_channels = 4;
    mc.decoder_channels = 4;
    mc.patch_stride = 4;
    mc.exemplar_capacity = 3;
    mc.memory_capacity = 2;
    mc.shared_attention = shared;
    model::Network<double> net(mc);
    train::PhantomConfig pc = testing::tiny_phantom();
    pc.dims = {16, 16, 4};
    pc.spacing = {5.0, 5.0, 6.0};
    pc.lesion.count = {2, 2};
    pc.lesion.radius_mm = {10, 14};
    pc.distractor.count = {0, 0};
    auto scan = train::prepare_scan(train::generate_phantom(pc, 5));
    std::mt19937_64 srng(2);
    train::AugmentConfig none;
    none.enabled = false;
    auto sample = train::make_sample(scan, {3, 2, 16, 2}, none, srng);
    train::SamplePlan plan{std::vector<int>(sample.prompted.size(), 0), true, false};
    std::vector<Tensor<double>> leaves;
    for (const auto& [name, t] : net.params().all()) leaves.push_back(t);
    check(shared ? "training forward (shared attention)" : "training forward",
          [&] { return train::forward_sample(net, sample, plan).total; }, leaves, 3);
  }

  const double secs = seconds_since(t0);
  out.require(worst < kGradTol, "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) +
                                    " coordinates (< 1e-4)");
  out.require(secs < 120.0, "runtime " + fmt("%.1f", secs) + " s (< 120 s)");
  return out;
}

// ---- P2 --------------------------------------------------------------------

Outcome p2_metrics() {
  Outcome out;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> ext(1, 32), blobs(0, 6);
  int metric_mismatch = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Dims d{ext(rng), ext(rng), ext(rng)};
    Mask gt = testing::random_blobs(d, rng, blobs(rng), 1.0, 5.0);
    Mask pred = testing::random_blobs(d, rng, blobs(rng), 1.0, 5.0);
    if (trial % 3 == 0) {
      pred = gt;
      std::bernoulli_distribution keep(0.8);
      for (auto& v : pred.values()) v = v && keep(rng);
    }
    const int conn = trial % 2 ? 26 : 6;
    const auto ps = testing::to_set(pred), gs = testing::to_set(gt);
    const double ddsc = std::abs(eval::dsc(pred, gt) - testing::oracle_dsc(ps, gs));
    auto det = eval::lesion_f1(pred, gt, 0.1, conn);
    auto ref = testing::oracle_detection(pred, gt, 0.1, conn);
    const double df1 = std::abs(det.f1 - ref.f1);
    auto lw = eval::lesionwise_dsc(det);
    bool same = det.tp == ref.tp && det.fp == ref.fp && det.fn == ref.fn && lw.has_value() == ref.lesionwise.has_value();
    double dlw = lw && ref.lesionwise ? std::abs(*lw - *ref.lesionwise) : 0.0;
    worst = std::max({worst, ddsc, df1, dlw});
    if (!same || ddsc > 1e-12 || df1 > 1e-12 || dlw > 1e-12) ++metric_mismatch;
  }
  out.require(metric_mismatch == 0, "DSC, F1@0.1 and lesion-wise DSC on 200 random volumes: " +
                                        std::to_string(metric_mismatch) + " mismatches, max abs diff " +
                                        fmt("%.3g", worst) + " (<= 1e-12)");

  int cc_mismatch = 0, grids = 0;
  for (int bits = 0; bits < 512; ++bits) {
    Mask m({3, 3, 1});
    for (int i = 0; i < 9; ++i) m[i] = (bits >> i) & 1;
    for (int c : {4, 8, 6, 18, 26}) {
      int n = 0;
      auto expect = testing::flood_fill_labels(m, c, &n);
      auto cc = eval::connected_components(m, c);
      cc_mismatch += cc.count != n || !(cc.labels == expect);
      ++grids;
    }
  }
  out.require(cc_mismatch == 0, "connected components on all 512 3x3x1 grids x 5 connectivities: " +
                                    std::to_string(cc_mismatch) + " mismatches");
  cc_mismatch = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::bernoulli_distribution coin(0.1 + 0.6 * (trial % 7) / 6.0);
    Mask m({8, 8, 8});
    for (auto& v : m.values()) v = coin(rng);
    for (int c : {6, 18, 26}) {
      int n = 0;
      auto expect = testing::flood_fill_labels(m, c, &n);
      auto cc = eval::connected_components(m, c);
      cc_mismatch += cc.count != n || !(cc.labels == expect);
    }
  }
  out.require(cc_mismatch == 0,
              "connected components on 500 random 8^3 grids x {6,18,26}: " + std::to_string(cc_mismatch) + " mismatches");
  return out;
}

// ---- P3 --------------------------------------------------------------------

Outcome p3_banks() {
  using Bank = banks::ExemplarBank<int>;
  Outcome out;
  const auto t0 = Clock::now();
  auto as_ref = [](const Bank& b) {
    std::vector<testing::RefEntry> r;
    for (const auto& e : b.entries()) r.push_back({e.lesion, e.slice, e.prompted, e.counter});
    return r;
  };
  // Alphabet: prompted insert, non-prompted insert, click refresh of the
  // oldest entry, propagated re-insert of the newest entry.
  int sequences = 0, mismatches = 0;
  for (int k = 1; k <= 3; ++k) {
    for (int len = 0; len <= 6; ++len) {
      int total = 1;
      for (int i = 0; i < len; ++i) total *= 4;
      for (int code = 0; code < total; ++code) {
        Bank bank(k);
        testing::ReferenceBank ref(k);
        bool ok = true;
        int c = code, key = 0;
        for (int step = 0; step < len && ok; ++step, c /= 4) {
          const int op = c % 4;
          if (op <= 1 || bank.empty()) {
            auto got = bank.insert(key, key, op == 0, key);
            auto want = ref.insert(key, key, op == 0);
            ok = got.stored == want.first && (got.evicted ? static_cast<int64_t>(*got.evicted) : -1) == want.second;
            ++key;
          } else if (op == 2) {
            auto e = bank.entries().front();
            bank.update(e.lesion, e.slice, true, -1);
            ref.refresh(e.lesion, e.slice, true);
          } else {
            auto e = bank.entries().back();
            bank.insert(e.lesion, e.slice, false, -2);
            ref.insert(e.lesion, e.slice, false);
          }
          ok = ok && as_ref(bank) == ref.state();
        }
        mismatches += !ok;
        ++sequences;
      }
    }
  }
  out.require(mismatches == 0 && sequences == 3 * 5461, "exhaustive K<=3, length<=6: " + std::to_string(sequences) +
                                                            " sequences, " + std::to_string(mismatches) +
                                                            " differ from the reference simulator");

  std::mt19937_64 rng(21);
  int violations = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    const int k = 1 + static_cast<int>(rng() % 6);
    Bank bank(k);
    const int len = 1 + static_cast<int>(rng() % 30);
    for (int step = 0; step < len; ++step) {
      const int lesion = static_cast<int>(rng() % 4), slice = static_cast<int>(rng() % 6);
      const bool prompted = rng() % 3 == 0;
      std::map<uint64_t, bool> flag_of;
      int prompted_before = 0;
      for (const auto& e : bank.entries()) {
        flag_of[e.counter] = e.prompted;
        prompted_before += e.prompted;
      }
      auto r = bank.insert(lesion, slice, prompted, step);
      int prompted_after = 0;
      for (const auto& e : bank.entries()) prompted_after += e.prompted;
      if (static_cast<int>(bank.size()) > k) ++violations;
      // A prompted entry leaves only to a prompted newcomer when no
      // non-prompted entry was left to evict.
      if (r.evicted && flag_of.at(*r.evicted)) {
        if (!prompted) ++violations;
        for (const auto& e : bank.entries()) violations += !e.prompted;
      }
      if (!prompted && !r.evicted && prompted_after < prompted_before) ++violations;
    }
  }
  out.require(violations == 0, "capacity and prompted dominance over 10^4 random sequences: " +
                                   std::to_string(violations) + " violations");
  const double secs = seconds_since(t0);
  out.require(secs < 60.0, "runtime " + fmt("%.2f", secs) + " s (< 60 s)");
  return out;
}

// ---- P4 --------------------------------------------------------------------

// Reveals only the clicked slice of the clicked GT component per positive
// click, so refinement needs several clicks. Checks every click it receives
// against its own last output.
class SliceRevealSession : public eval::EvalSession {
 public:
  SliceRevealSession(const Mask& gt, int* bad_clicks) : gt_(gt), bad_(bad_clicks) {
    labels_ = testing::flood_fill_labels(gt, 26, nullptr);
  }
  Mask click(int lesion, const Click& c) override {
    auto& st = state_[lesion];
    if (st.target == 0) {
      st.target = labels_(c.x, c.y, c.slice);
      st.pred = Mask(gt_.dims());
    }
    const bool in_gt = st.target != 0 && labels_(c.x, c.y, c.slice) == st.target;
    const bool in_pred = st.pred(c.x, c.y, c.slice) != 0;
    if (in_gt == in_pred) ++*bad_;  // not an error voxel
    if (c.positive != in_gt) ++*bad_;
    if (c.positive && st.target != 0) {
      const Dims d = gt_.dims();
      for (int y = 0; y < d.h; ++y)
        for (int x = 0; x < d.w; ++x)
          if (labels_(x, y, c.slice) == st.target) st.pred(x, y, c.slice) = 1;
    }
    return st.pred;
  }

 private:
  struct State {
    int32_t target = 0;
    Mask pred;
  };
  Mask gt_;
  LabelVolume labels_;
  std::map<int, State> state_;
  int* bad_;
};

Outcome p4_harness() {
  Outcome out;
  train::PhantomConfig pc;
  int perfect_bad = 0, empty_bad = 0, clicks_bad = 0, stub_bad = 0, scans = 0, corrections = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto ph = train::generate_phantom(pc, 31000 + seed);
    const Mask gt = ph.lesion_mask();
    for (int C : {1, 3, 5}) {
      // Every lesion prompted, so a perfect model leaves nothing undetected.
      eval::EvalConfig ec{20, C, 1000.0, 0.1, 26};
      auto perfect = eval::run_lesionwise_eval(eval::perfect_session_factory(gt), ph.volume, gt, ec);
      perfect_bad += perfect.scan_dsc != 1.0 || perfect.lesion_f1 != 1.0;
      auto empty = eval::run_lesionwise_eval(eval::empty_session_factory(), ph.volume, gt, ec);
      empty_bad += empty.scan_dsc != 0.0 || empty.lesion_f1 != 0.0 || empty.lesionwise_dsc.has_value();
      for (const auto& t : empty.lesions) clicks_bad += static_cast<int>(t.clicks.size()) != C;
      int bad = 0;
      eval::SessionFactory reveal = [&](const io::Volume&) { return std::make_unique<SliceRevealSession>(gt, &bad); };
      auto partial = eval::run_lesionwise_eval(reveal, ph.volume, gt, ec);
      for (const auto* rep : {&perfect, &empty, &partial})
        for (const auto& t : rep->lesions) {
          clicks_bad += static_cast<int>(t.clicks.size()) > C;
          for (bool in : t.clicks_in_error) clicks_bad += !in;
        }
      stub_bad += bad;
      for (const auto& t : partial.lesions) corrections += static_cast<int>(t.clicks.size()) - 1;
      ++scans;
    }
  }
  out.require(perfect_bad == 0, "perfect stub: scan DSC = 1 and F1 = 1 on " + std::to_string(scans) + " runs (" +
                                    std::to_string(perfect_bad) + " failures)");
  out.require(empty_bad == 0, "empty stub: scan DSC = 0, F1 = 0, lesion-wise DSC undefined (" +
                                  std::to_string(empty_bad) + " failures)");
  out.require(clicks_bad == 0, "clicks per lesion <= C and harness marks every click inside pred XOR gt (" +
                                   std::to_string(clicks_bad) + " violations)");
  out.require(stub_bad == 0 && corrections > 0, "independently checked clicks land in the stub's pred XOR gt (" +
                                                    std::to_string(corrections) + " correction clicks, " +
                                                    std::to_string(stub_bad) + " violations)");
  return out;
}

// ---- P5-P7 -----------------------------------------------------------------

train::TrainConfig phantom_train_config(bool shared) {
  train::TrainConfig c;
  c.model.shared_attention = shared;
  c.optimizer.lr = 1e-3;
  c.lr_schedule = "cosine";
  c.warmup_steps = 50;
  return c;
}

fs::path work_root() {
  if (const char* cache = std::getenv("MOIS_ACCEPTANCE_CACHE"); cache && *cache) return cache;
  return fs::current_path() / "acceptance_work";
}

std::shared_ptr<const inference::Net> trained_model(const std::string& name, bool shared) {
  static std::map<std::string, std::shared_ptr<const inference::Net>> loaded;
  if (auto it = loaded.find(name); it != loaded.end()) return it->second;
  const bool caching = std::getenv("MOIS_ACCEPTANCE_CACHE") != nullptr;
  const fs::path dir = work_root() / name;
  const auto cfg = phantom_train_config(shared);
  const std::string want = json(cfg).dump();
  bool reuse = false;
  if (caching && fs::exists(dir / "model.ckpt") && fs::exists(dir / "config.json")) {
    std::ifstream in(dir / "config.json");
    reuse = json::parse(in).dump() == want;
  }
  if (!reuse) {
    fs::remove_all(dir);
    std::cout << "  training " << name << " model (" << cfg.epochs << " epochs on " << cfg.train_scans
              << " phantoms)" << std::endl;
    const auto t0 = Clock::now();
    train::Trainer trainer(cfg);
    trainer.set_rescue_path(dir / "last_good.ckpt");
    trainer.train(dir, [&](const train::EpochLog& l) {
      std::printf("    %s epoch %2d  loss %.4f  val dsc %.3f  %.0f s\n", name.c_str(), l.epoch, l.total,
                  l.val_scan_dsc, seconds_since(t0));
      std::fflush(stdout);
    });
  } else {
    std::cout << "  reusing cached " << name << " model from " << dir.string() << std::endl;
  }
  auto net = std::shared_ptr<const inference::Net>(model::load_model<float>(dir / "model.ckpt"));
  loaded[name] = net;
  return net;
}

const std::vector<train::Phantom>& held_out() {
  static const std::vector<train::Phantom> scans = [] {
    std::vector<train::Phantom> v;
    for (int i = 0; i < 10; ++i) v.push_back(train::generate_phantom(train::PhantomConfig{}, 777000 + i));
    return v;
  }();
  return scans;
}

struct PhantomScore {
  double median_dsc = 0.0;
  double unprompted_f1 = 0.0;  // pooled over scans
  int tp = 0, fp = 0, fn = 0;
  double class_b_fraction = 0.0;  // pooled over scans
};

PhantomScore score_on_held_out(std::shared_ptr<const inference::Net> net, bool exemplar_stage, int lesions) {
  inference::InferenceConfig ic;
  ic.exemplar_stage = exemplar_stage;
  eval::EvalConfig ec{lesions, 1, 1000.0, 0.1, 26};
  PhantomScore s;
  std::vector<double> dsc;
  int64_t fg = 0, b = 0;
  for (const auto& ph : held_out()) {
    const Mask gt = ph.lesion_mask();
    auto run = eval::run_protocol(inference::session_factory(net, ic), ph.volume, gt, ec);
    auto rep = eval::score_prediction(run.merged, gt, ph.volume.spacing, ec, &run.prompted);
    dsc.push_back(rep.scan_dsc);
    s.tp += rep.unprompted_tp;
    s.fp += rep.unprompted_fp;
    s.fn += rep.unprompted_fn;
    const Mask final = eval::remove_small_components(run.merged, ec.v_thresh, ph.volume.spacing, ec.connectivity);
    const Mask cls_b = ph.class_mask(train::kClassB);
    for (int64_t i = 0; i < final.size(); ++i) {
      fg += final[i];
      b += final[i] && cls_b[i];
    }
  }
  s.median_dsc = eval::median(dsc);
  const int denom = 2 * s.tp + s.fp + s.fn;
  s.unprompted_f1 = denom ? 2.0 * s.tp / denom : 1.0;
  s.class_b_fraction = fg ? static_cast<double>(b) / fg : 0.0;
  return s;
}

std::map<std::tuple<std::string, bool, int>, PhantomScore>& score_cache() {
  static std::map<std::tuple<std::string, bool, int>, PhantomScore> c;
  return c;
}

const PhantomScore& scored(const std::string& model, bool exemplar_stage, int lesions) {
  auto key = std::make_tuple(model, exemplar_stage, lesions);
  auto& cache = score_cache();
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto s = score_on_held_out(trained_model(model, model == "shared"), exemplar_stage, lesions);
  return cache[key] = s;
}

Outcome p5_exemplar_propagation() {
  Outcome out;
  const auto& s3 = scored("dedicated", true, 3);
  out.require(s3.median_dsc >= 0.5, "L=3, C=1: median scan DSC " + fmt("%.3f", s3.median_dsc) + " (>= 0.5)");
  out.require(s3.unprompted_f1 >= 0.6, "unprompted class-A lesion F1 " + fmt("%.3f", s3.unprompted_f1) + " (tp " +
                                           std::to_string(s3.tp) + ", fp " + std::to_string(s3.fp) + ", fn " +
                                           std::to_string(s3.fn) + ") (>= 0.6)");
  out.require(s3.class_b_fraction < 0.1,
              "class-B share of predicted foreground " + fmt("%.3f", s3.class_b_fraction) + " (< 0.1)");
  const auto& s1 = scored("dedicated", true, 1);
  const auto& s5 = scored("dedicated", true, 5);
  out.require(s5.median_dsc >= s1.median_dsc - 0.02, "median scan DSC at L=5 " + fmt("%.3f", s5.median_dsc) +
                                                         " vs L=1 " + fmt("%.3f", s1.median_dsc) + " (tolerance 0.02)");
  return out;
}

Outcome p6_ablation() {
  Outcome out;
  const auto& d = scored("dedicated", true, 3);
  const auto& s = scored("shared", true, 3);
  out.require(d.median_dsc >= s.median_dsc - 0.02, "median scan DSC dedicated " + fmt("%.3f", d.median_dsc) +
                                                       " vs shared " + fmt("%.3f", s.median_dsc) + " (tolerance 0.02)");
  return out;
}

Outcome p7_interaction_efficiency() {
  Outcome out;
  for (int L = 1; L <= 5; ++L) {
    const auto& full = scored("dedicated", true, L);
    const auto& stage1 = scored("dedicated", false, L);
    out.require(full.median_dsc >= stage1.median_dsc - 0.02,
                "L=" + std::to_string(L) + ": full " + fmt("%.3f", full.median_dsc) + " vs Stage-1-only " +
                    fmt("%.3f", stage1.median_dsc) + " (tolerance 0.02)");
  }
  return out;
}

// ---- P8 --------------------------------------------------------------------

train::TrainConfig tiny_train_config() {
  train::TrainConfig c;
  c.model = testing::tiny_model();
  c.phantom = testing::tiny_phantom();
  c.train_scans = 3;
  c.val_scans = 1;
  c.epochs = 2;
  c.validation.lesions = 2;
  c.validation.clicks = 2;
  c.optimizer.lr = 1e-3;
  return c;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_logs(const std::vector<train::EpochLog>& a, const std::vector<train::EpochLog>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.epoch != y.epoch || x.total != y.total || x.instance != y.instance || x.object != y.object ||
        x.semantic != y.semantic || x.val_scan_dsc != y.val_scan_dsc || x.lr != y.lr)
      return false;
  }
  return true;
}

Outcome p8_determinism() {
  Outcome out;
  testing::TempDir dir;
  std::vector<std::vector<train::EpochLog>> logs;
  for (const char* run : {"a", "b"}) {
    train::Trainer t(tiny_train_config());
    t.set_rescue_path(dir / (std::string(run) + "_rescue.ckpt"));
    logs.push_back(t.train(dir / run));
  }
  out.require(same_logs(logs[0], logs[1]), "training curves bit-identical across two runs with one seed");
  out.require(file_bytes(dir / "a" / "model.ckpt") == file_bytes(dir / "b" / "model.ckpt"),
              "trained checkpoints byte-identical");

  auto net = std::shared_ptr<const inference::Net>(model::load_model<float>(dir / "a" / "model.ckpt"));
  auto ph = train::generate_phantom(testing::tiny_phantom(), 4242);
  const Mask gt = ph.lesion_mask();
  std::vector<std::vector<Click>> clicks = {{{12, 12, 2, true}, {20, 11, 3, false}}, {{22, 20, 4, true}}};
  auto r1 = inference::full_inference(net, ph.volume, clicks);
  auto r2 = inference::full_inference(net, ph.volume, clicks);
  out.require(r1.final == r2.final && r1.merged == r2.merged && r1.instances == r2.instances &&
                  r1.semantic == r2.semantic,
              "inference masks identical across runs");

  eval::EvalConfig ec{3, 3, 500.0, 0.1, 26};
  std::vector<std::string> reports;
  for (int i = 0; i < 2; ++i) {
    auto rep = eval::run_lesionwise_eval(inference::session_factory(net), ph.volume, gt, ec);
    reports.push_back(eval::build_report({{"scan", rep}}, ec, 7).dump());
  }
  out.require(reports[0] == reports[1], "evaluation reports identical across runs");

  // Checkpoint round trip.
  model::save_model(*net, dir / "copy.ckpt");
  auto reloaded = std::shared_ptr<const inference::Net>(model::load_model<float>(dir / "copy.ckpt"));
  bool params_equal = net->params().size() == reloaded->params().size();
  for (size_t i = 0; params_equal && i < net->params().size(); ++i) {
    const auto& [na, ta] = net->params().all()[i];
    const auto& [nb, tb] = reloaded->params().all()[i];
    params_equal = na == nb && std::equal(ta.data().begin(), ta.data().end(), tb.data().begin(), tb.data().end());
  }
  auto r3 = inference::full_inference(reloaded, ph.volume, clicks);
  out.require(params_equal && r3.final == r1.final && r3.instances == r1.instances,
              "checkpoint round trip preserves parameters and outputs");

  // Session snapshot round trip, then identical continuation.
  inference::Session live(net, ph.volume);
  int l0 = live.add_lesion();
  live.apply_click(l0, {12, 12, 2, true});
  live.propagate_memory(l0);
  live.save(dir / "session.ckpt");
  auto restored = inference::Session::load(net, dir / "session.ckpt");
  bool snap = restored->revision() == live.revision() && restored->instance(l0)->mask == live.instance(l0)->mask;
  for (auto* s : {&live, restored.get()}) {
    int l1 = s->add_lesion();
    s->apply_click(l1, {22, 20, 4, true});
    s->apply_click(l0, {20, 11, 3, false});
  }
  auto fa = live.final_mask(), fb = restored->final_mask();
  auto ea = live.exemplars(), eb = restored->exemplars();
  bool ex_equal = ea.size() == eb.size();
  for (size_t i = 0; ex_equal && i < ea.size(); ++i)
    ex_equal = ea[i].lesion == eb[i].lesion && ea[i].slice == eb[i].slice && ea[i].prompted == eb[i].prompted &&
               ea[i].recency_rank == eb[i].recency_rank;
  out.require(snap && fa.mask == fb.mask && fa.revision == fb.revision && ex_equal,
              "session snapshot round trip preserves masks, bank and future outputs");

  // File formats.
  io::save_volume(ph.volume, dir / "vol.json");
  auto vol = io::load_volume(dir / "vol.json");
  io::save_mask(gt, ph.volume.spacing, dir / "gt.json");
  auto rle = io::rle_from_json(io::rle_to_json(io::rle_encode(gt, 5)));
  out.require(vol.intensities == ph.volume.intensities && io::load_mask(dir / "gt.json") == gt &&
                  io::rle_decode(rle) == gt && rle.revision == 5,
              "volume, mask and RLE round trips exact");
  return out;
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"P1", "gradient correctness", p1_gradients},
      {"P2", "metric oracle equivalence", p2_metrics},
      {"P3", "replacement-policy correctness", p3_banks},
      {"P4", "evaluation harness correctness", p4_harness},
      {"P5", "phantom exemplar propagation", p5_exemplar_propagation},
      {"P6", "ablation direction (dedicated vs shared attention)", p6_ablation},
      {"P7", "interaction efficiency direction", p7_interaction_efficiency},
      {"P8", "determinism and persistence", p8_determinism},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  std::vector<std::string> summary;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    for (const auto& n : o.notes) std::cout << "  " << n << "\n";
    std::string line = std::string(o.pass ? "PASS " : "FAIL ") + c.id + " " + c.title + " (" +
                       fmt("%.1f", seconds_since(t0)) + " s)";
    std::cout << line << std::endl;
    summary.push_back(line);
    failures += !o.pass;
  }
  std::cout << "\nsummary\n";
  for (const auto& s : summary) std::cout << s << "\n";
  return failures == 0 ? 0 : 1;
}
