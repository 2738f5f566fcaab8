#include <doctest.h>

#include <random>

#include "mois/eval/components.hpp"
#include "mois/inference/session.hpp"
#include "mois/io/preproc.hpp"
#include "mois/io/rle.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny.hpp"

using namespace mois;
using namespace mois::inference;

namespace {

std::shared_ptr<const Net> tiny_net() { return std::make_shared<Net>(testing::tiny_model()); }

train::Phantom scan(uint64_t seed = 4) { return train::generate_phantom(testing::tiny_phantom(), seed); }

Click centre_of(const train::Phantom& ph, int32_t id, bool positive = true) {
  int64_t sx = 0, sy = 0, sz = 0, n = 0;
  const Dims d = ph.instances.dims();
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x)
        if (ph.instances(x, y, z) == id) sx += x, sy += y, sz += z, ++n;
  return {static_cast<int>(sx / n), static_cast<int>(sy / n), static_cast<int>(sz / n), positive};
}

}  // namespace

TEST_CASE("rle round trip on random masks is exact and canonical") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Dims dims{1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 4)};
    std::bernoulli_distribution coin(0.1 + 0.8 * (trial % 5) / 4.0);
    Mask m(dims);
    for (auto& v : m.values()) v = coin(rng);
    auto rle = io::rle_encode(m, trial);
    CHECK(io::rle_decode(rle) == m);
    auto back = io::rle_from_json(io::rle_to_json(rle));
    CHECK(back == rle);
    CHECK(io::rle_decode(back) == m);
    for (const auto& runs : rle.slices)
      for (size_t i = 1; i < runs.size(); ++i) CHECK(runs[i].first > runs[i - 1].first + runs[i - 1].second);
  }
}

TEST_CASE("rle rejects non-canonical runs") {
  io::RleMask r;
  r.dims = {2, 4, 1};
  r.slices = {{{0, 2}, {2, 1}}};  // touching runs are not maximal
  CHECK_THROWS_AS(io::rle_validate(r), io::FormatError);
  r.slices = {{{3, 1}, {0, 1}}};
  CHECK_THROWS_AS(io::rle_validate(r), io::FormatError);
  r.slices = {{{6, 3}}};
  CHECK_THROWS_AS(io::rle_validate(r), io::FormatError);
  r.slices = {{{1, 0}}};
  CHECK_THROWS_AS(io::rle_validate(r), io::FormatError);
  r.slices = {};
  CHECK_THROWS_AS(io::rle_validate(r), io::FormatError);
  CHECK_THROWS_AS(io::rle_from_json(nlohmann::json{{"shape", {1, 1}}, {"slices", nlohmann::json::array()}}), io::FormatError);
}

TEST_CASE("base64 known vectors") {
  CHECK(io::base64_encode("") == "");
  CHECK(io::base64_encode("f") == "Zg==");
  CHECK(io::base64_encode("fo") == "Zm8=");
  CHECK(io::base64_encode("foo") == "Zm9v");
  CHECK(io::base64_encode("foobar") == "Zm9vYmFy");
  CHECK(io::base64_decode("Zm9vYg==") == "foob");
  CHECK(io::base64_decode("Zm9vYmE=") == "fooba");
  std::string all;
  for (int i = 0; i < 256; ++i) all += static_cast<char>(i);
  CHECK(io::base64_decode(io::base64_encode(all)) == all);
  CHECK_THROWS_AS(io::base64_decode("Zm9"), io::FormatError);
  CHECK_THROWS_AS(io::base64_decode("Zm!v"), io::FormatError);
  CHECK_THROWS_AS(io::base64_decode("Z=9v"), io::FormatError);
}

TEST_CASE("session rejects bad clicks and unknown lesions") {
  auto ph = scan();
  Session s(tiny_net(), ph.volume);
  CHECK_THROWS_AS(s.apply_click(0, {1, 1, 0, true}), std::out_of_range);
  const int id = s.add_lesion();
  CHECK_THROWS_AS(s.apply_click(id, {32, 1, 0, true}), std::invalid_argument);
  CHECK_THROWS_AS(s.apply_click(id, {1, -1, 0, true}), std::invalid_argument);
  CHECK_THROWS_AS(s.apply_click(id, {1, 1, 6, true}), std::invalid_argument);
  CHECK_THROWS_AS(s.propagate_memory(id), std::logic_error);
  CHECK(s.clicks(id).empty());
}

TEST_CASE("revisions increase on every mutation and tag cached masks") {
  auto ph = scan();
  Session s(tiny_net(), ph.volume);
  uint64_t r = s.revision();
  const int a = s.add_lesion();
  CHECK(s.revision() > r);
  r = s.revision();
  auto res = s.apply_click(a, centre_of(ph, 1));
  CHECK(res.revision == s.revision());
  CHECK(res.revision > r);
  CHECK(res.mask.h() == 32);
  const auto& inst = s.propagate_memory(a);
  CHECK(inst.revision == s.revision());
  CHECK(inst.mask.dims() == ph.volume.dims());
  CHECK(inst.provenance[centre_of(ph, 1).slice] == Provenance::kPrompted);
  const auto& sem = s.propagate_exemplars();
  CHECK(sem.revision == s.revision());
  CHECK(sem.kind == MaskKind::kSemantic);
  auto exs = s.exemplars();
  bool any_prompted = false;
  for (const auto& e : exs) any_prompted |= e.prompted;
  // An untrained model may decode an empty mask, in which case no exemplar is stored.
  if (count_foreground(res.mask) > 0) CHECK(any_prompted);
}

TEST_CASE("a click on one lesion leaves other lesions' masks untouched") {
  auto ph = scan();
  Session s(tiny_net(), ph.volume);
  const int a = s.add_lesion(), b = s.add_lesion();
  s.apply_click(a, centre_of(ph, 1));
  s.apply_click(b, centre_of(ph, 2));
  Mask ma = s.propagate_memory(a).mask;
  const uint64_t ra = s.instance(a)->revision;
  s.propagate_memory(b);
  auto c2 = centre_of(ph, 2);
  c2.x = std::min(c2.x + 2, 31);
  s.apply_click(b, c2);
  s.propagate_memory(b);
  CHECK(s.instance(a)->mask == ma);
  CHECK(s.instance(a)->revision == ra);
  CHECK(s.clicks(a).size() == 1);
  CHECK(s.clicks(b).size() == 2);
}

TEST_CASE("propagation is repeatable and Stage 2 is pure") {
  auto ph = scan();
  Session s(tiny_net(), ph.volume);
  const int a = s.add_lesion();
  s.apply_click(a, centre_of(ph, 1));
  Mask first = s.propagate_memory(a).mask;
  Mask second = s.propagate_memory(a).mask;
  CHECK(first == second);

  auto before = s.exemplars();
  auto mem_before = s.memory(a).entries().size();
  auto clicks_before = s.clicks(a);
  Mask sem1 = s.propagate_exemplars().mask;
  Mask sem2 = s.propagate_exemplars().mask;
  CHECK(sem1 == sem2);
  auto after = s.exemplars();
  REQUIRE(after.size() == before.size());
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].counter == before[i].counter);
    CHECK(after[i].prompted == before[i].prompted);
  }
  CHECK(s.memory(a).entries().size() == mem_before);
  CHECK(s.clicks(a) == clicks_before);

  // Slices are independent: decoding them in reverse order gives the same mask.
  const auto& net = s.network();
  tensor::NoGradGuard guard;
  for (int d = ph.volume.dims().d - 1; d >= 0; --d) {
    auto slices = io::extract_and_resize(io::normalize_percentile(ph.volume), 32);
    auto emb = net.encode_image(slices[d], d);
    std::vector<model::Exemplar<float>> ctx;
    for (const auto* e : s.exemplar_bank().select_context(d, s.exemplar_bank().capacity())) {
      ctx.push_back(e->payload);
      ctx.back().prompted = e->prompted;
    }
    auto out = net.decode_mask(emb, net.exemplar_attend(emb, ctx), {});
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) CHECK((out.mask_logits.data()[y * 32 + x] > 0) == (sem1(x, y, d) != 0));
  }
}

TEST_CASE("final mask contains every instance mask and drops small components") {
  auto ph = scan();
  InferenceConfig cfg;
  cfg.v_thresh = 0;
  cfg.fill_holes = false;
  auto net = tiny_net();
  Session s(net, ph.volume, cfg);
  const int a = s.add_lesion(), b = s.add_lesion();
  s.apply_click(a, centre_of(ph, 1));
  s.apply_click(b, centre_of(ph, 2));
  auto fin = s.final_mask();
  for (int id : {a, b}) {
    const Mask& m = s.instance(id)->mask;
    for (int64_t i = 0; i < m.size(); ++i)
      if (m[i]) CHECK(fin.mask[i]);
  }

  InferenceConfig strict;
  strict.v_thresh = 500.0;
  auto res = full_inference(net, ph.volume, {{centre_of(ph, 1)}, {centre_of(ph, 2)}}, strict);
  for (const auto& inst : res.instances)
    for (int64_t i = 0; i < inst.size(); ++i)
      if (inst[i]) CHECK(res.merged[i]);
  auto comps = eval::connected_components(res.final, 26);
  for (int k = 0; k < comps.count; ++k) CHECK(comps.sizes[k] * ph.volume.spacing.voxel_volume() >= 500.0);
  // Idempotent.
  auto again = full_inference(net, ph.volume, {{centre_of(ph, 1)}, {centre_of(ph, 2)}}, strict);
  CHECK(again.final == res.final);
  CHECK(again.merged == res.merged);
}

TEST_CASE("zero clicks run Stage 2 alone; Stage-1-only mode skips it") {
  auto ph = scan();
  auto net = tiny_net();
  auto res = full_inference(net, ph.volume, {});
  CHECK(res.instances.empty());
  REQUIRE(res.semantic);
  CHECK(res.merged == *res.semantic);

  InferenceConfig s1;
  s1.exemplar_stage = false;
  auto only = full_inference(net, ph.volume, {{centre_of(ph, 1)}}, s1);
  CHECK(!only.semantic);
  CHECK(only.merged == only.instances[0]);

  InferenceConfig bad;
  bad.exemplar_stage = false;
  bad.union_instances = false;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("session snapshot round trip preserves state and future outputs") {
  testing::TempDir dir;
  auto ph = scan();
  auto net = tiny_net();
  Session s(net, ph.volume);
  const int a = s.add_lesion(), b = s.add_lesion();
  s.apply_click(a, centre_of(ph, 1));
  s.propagate_memory(a);
  s.apply_click(b, centre_of(ph, 2));
  s.propagate_exemplars();
  s.save(dir / "s.snap");
  auto r = Session::load(net, dir / "s.snap");
  CHECK(r->revision() == s.revision());
  CHECK(r->lesion_ids() == s.lesion_ids());
  CHECK(r->clicks(b) == s.clicks(b));
  CHECK(r->instance(a)->mask == s.instance(a)->mask);
  CHECK(r->semantic()->mask == s.semantic()->mask);
  CHECK(r->semantic()->revision == s.semantic()->revision);
  REQUIRE(r->exemplars().size() == s.exemplars().size());
  CHECK(r->volume().intensities == s.volume().intensities);

  // The same next steps give identical results.
  Click c = centre_of(ph, 2, false);
  c.x = std::max(0, c.x - 3);
  auto m1 = s.apply_click(b, c), m2 = r->apply_click(b, c);
  CHECK(m1.mask == m2.mask);
  CHECK(m1.revision == m2.revision);
  CHECK(s.final_mask().mask == r->final_mask().mask);

  // Wrong architecture is refused.
  auto other = std::make_shared<Net>(testing::tiny_model(64));
  CHECK_THROWS_AS(Session::load(other, dir / "s.snap"), tensor::CheckpointError);
  auto ck = s.snapshot();
  ck.manifest["version"] = 99;
  CHECK_THROWS_AS(Session::restore(net, ck), tensor::CheckpointError);
}

TEST_CASE("evaluation adapter follows the protocol") {
  auto ph = scan();
  eval::EvalConfig ec{2, 2, 0.0, 0.1, 26};
  auto rep = eval::run_lesionwise_eval(session_factory(tiny_net()), ph.volume, ph.lesion_mask(), ec);
  CHECK(rep.lesions.size() == 2);
  for (const auto& l : rep.lesions) {
    CHECK(l.clicks.size() <= 2);
    for (bool inside : l.clicks_in_error) CHECK(inside);
  }
  CHECK((rep.scan_dsc >= 0 && rep.scan_dsc <= 1));
}
