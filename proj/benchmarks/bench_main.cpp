#include <benchmark/benchmark.h>

#include <random>

#include "mois/eval/components.hpp"
#include "mois/inference/session.hpp"
#include "mois/tensor/tensor.hpp"
#include "mois/train/phantom.hpp"

using namespace mois;
namespace ts = mois::tensor;

namespace {

std::vector<float> random_values(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist;
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

ts::Tensor<float> random_tensor(ts::Shape shape, uint64_t seed, bool grad = false) {
  size_t n = 1;
  for (auto s : shape) n *= static_cast<size_t>(s);
  return ts::Tensor<float>(shape, random_values(n, seed), grad);
}

}  // namespace

static void BM_gemm(benchmark::State& state) {
  const int64_t n = state.range(0);
  auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    ts::gemm<float>(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_gemm)->Arg(64)->Arg(128)->Arg(256);

static void BM_conv2d(benchmark::State& state) {
  const int64_t c = state.range(0), hw = state.range(1);
  auto x = random_tensor({c, hw, hw}, 3);
  auto w = random_tensor({c, c, 3, 3}, 4);
  auto b = random_tensor({c}, 5);
  ts::Conv2dOptions opt;
  opt.padding = 1;
  ts::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ts::conv2d(x, w, b, opt));
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * hw * hw);
}
BENCHMARK(BM_conv2d)->Args({16, 64})->Args({32, 64})->Args({32, 128});

static void BM_conv2d_backward(benchmark::State& state) {
  const int64_t c = 16, hw = 64;
  auto x = random_tensor({c, hw, hw}, 3, true);
  auto w = random_tensor({c, c, 3, 3}, 4, true);
  auto b = random_tensor({c}, 5, true);
  ts::Conv2dOptions opt;
  opt.padding = 1;
  for (auto _ : state) {
    auto y = ts::sum(ts::conv2d(x, w, b, opt));
    benchmark::DoNotOptimize(ts::backward(y));
  }
}
BENCHMARK(BM_conv2d_backward);

static void BM_connected_components(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int conn = static_cast<int>(state.range(1));
  Mask m({n, n, n});
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.3);
  for (auto& v : m.values()) v = coin(rng);
  for (auto _ : state) benchmark::DoNotOptimize(eval::connected_components(m, conn));
  state.SetItemsProcessed(state.iterations() * m.size());
}
BENCHMARK(BM_connected_components)->Args({32, 6})->Args({32, 26})->Args({64, 26});

static void BM_encoder_forward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  model::Network<float> net(cfg);
  Image img(cfg.input_size, cfg.input_size, random_values(static_cast<size_t>(cfg.input_size) * cfg.input_size, 7));
  ts::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.encode_image(img, 0));
}
BENCHMARK(BM_encoder_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_session_click_and_propagate(benchmark::State& state) {
  auto net = std::make_shared<const inference::Net>(model::ModelConfig{});
  auto ph = train::generate_phantom(train::PhantomConfig{}, 11);
  for (auto _ : state) {
    inference::Session s(net, ph.volume);
    int l = s.add_lesion();
    s.apply_click(l, {48, 48, 4, true});
    s.propagate_memory(l);
    benchmark::DoNotOptimize(s.final_mask());
  }
}
BENCHMARK(BM_session_click_and_propagate)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
