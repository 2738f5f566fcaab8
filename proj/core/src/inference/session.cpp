#include "mois/inference/session.hpp"

#include <algorithm>
#include <stdexcept>

#include "mois/eval/morphology.hpp"
#include "mois/io/preproc.hpp"
#include "mois/io/rle.hpp"
#include "mois/model/config.hpp"

namespace mois::inference {

namespace ts = mois::tensor;
using nlohmann::json;

void InferenceConfig::validate() const {
  if (v_thresh < 0) throw std::invalid_argument("InferenceConfig: v_thresh must be >= 0");
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw std::invalid_argument("InferenceConfig: connectivity must be 6, 18 or 26");
  }
  if (!(p_low >= 0 && p_low < p_high && p_high <= 100)) throw std::invalid_argument("InferenceConfig: bad percentiles");
  if (!union_instances && !exemplar_stage) {
    throw std::invalid_argument("InferenceConfig: Stage-2-only output requires the exemplar stage");
  }
}

void to_json(json& j, const InferenceConfig& c) {
  j = {{"union_instances", c.union_instances}, {"exemplar_stage", c.exemplar_stage}, {"context_limit", c.context_limit},
       {"v_thresh", c.v_thresh},               {"connectivity", c.connectivity},     {"fill_holes", c.fill_holes},
       {"p_low", c.p_low},                     {"p_high", c.p_high}};
}

void from_json(const json& j, InferenceConfig& c) {
  c = InferenceConfig{};
  c.union_instances = j.value("union_instances", c.union_instances);
  c.exemplar_stage = j.value("exemplar_stage", c.exemplar_stage);
  c.context_limit = j.value("context_limit", c.context_limit);
  c.v_thresh = j.value("v_thresh", c.v_thresh);
  c.connectivity = j.value("connectivity", c.connectivity);
  c.fill_holes = j.value("fill_holes", c.fill_holes);
  c.p_low = j.value("p_low", c.p_low);
  c.p_high = j.value("p_high", c.p_high);
  c.validate();
}

const char* to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::kInstance: return "instance";
    case MaskKind::kSemantic: return "semantic";
    case MaskKind::kFinal: return "final";
  }
  return "?";
}

MaskKind mask_kind_from_string(const std::string& s) {
  if (s == "instance") return MaskKind::kInstance;
  if (s == "semantic") return MaskKind::kSemantic;
  if (s == "final") return MaskKind::kFinal;
  throw std::invalid_argument("unknown mask kind '" + s + "' (expected instance, semantic or final)");
}

Session::Session(std::shared_ptr<const Net> net, io::Volume volume, InferenceConfig config)
    : net_(std::move(net)), volume_(std::move(volume)), config_(config), bank_(net_ ? net_->config().exemplar_capacity : 1) {
  if (!net_) throw std::invalid_argument("Session: no network");
  config_.validate();
  volume_.validate();
  slices_ = io::extract_and_resize(io::normalize_percentile(volume_, config_.p_low, config_.p_high),
                                   net_->config().input_size);
  embeddings_.resize(slices_.size());
}

const model::SliceEmbedding<float>& Session::embedding(int slice) const {
  auto& e = embeddings_.at(slice);
  if (!e) {
    ts::NoGradGuard guard;
    e = net_->encode_image(slices_[slice], slice);
  }
  return *e;
}

int Session::add_lesion() {
  const int id = next_lesion_++;
  lesions_.emplace(id, Lesion(net_->config().memory_capacity));
  ++revision_;
  return id;
}

std::vector<int> Session::lesion_ids() const {
  std::vector<int> ids;
  for (const auto& [id, l] : lesions_) ids.push_back(id);
  return ids;
}

Session::Lesion& Session::lesion_ref(int lesion) {
  auto it = lesions_.find(lesion);
  if (it == lesions_.end()) throw std::out_of_range("unknown lesion " + std::to_string(lesion));
  return it->second;
}

const Session::Lesion& Session::lesion_ref(int lesion) const {
  auto it = lesions_.find(lesion);
  if (it == lesions_.end()) throw std::out_of_range("unknown lesion " + std::to_string(lesion));
  return it->second;
}

const std::vector<Click>& Session::clicks(int lesion) const { return lesion_ref(lesion).clicks; }
const MemoryBank& Session::memory(int lesion) const { return lesion_ref(lesion).memory; }

const MaskVolume* Session::instance(int lesion) const {
  const auto& l = lesion_ref(lesion);
  return l.instance ? &*l.instance : nullptr;
}

std::vector<model::PromptPoint> Session::prompts_for(const Lesion& lesion, int slice) const {
  const Dims dims = volume_.dims();
  const double s = net_->config().input_size;
  std::vector<model::PromptPoint> out;
  for (const auto& c : lesion.clicks) {
    if (c.slice != slice) continue;
    out.push_back({static_cast<float>((c.x + 0.5) * s / dims.w - 0.5), static_cast<float>((c.y + 0.5) * s / dims.h - 0.5),
                   c.positive});
  }
  return out;
}

SliceMask Session::to_volume_mask(const ts::Tensor<float>& logits) const {
  const Dims dims = volume_.dims();
  const int s = net_->config().input_size;
  Image img(s, s, std::vector<float>(logits.data().begin(), logits.data().end()));
  if (dims.h != s || dims.w != s) img = io::resize_bilinear(img, dims.h, dims.w);
  SliceMask m(dims.h, dims.w);
  for (int64_t i = 0; i < m.size(); ++i) m[i] = img[i] > 0.0f;
  return m;
}

ClickResult Session::apply_click(int lesion, const Click& click) {
  Lesion& l = lesion_ref(lesion);
  const Dims dims = volume_.dims();
  if (click.x < 0 || click.y < 0 || click.slice < 0 || click.x >= dims.w || click.y >= dims.h || click.slice >= dims.d) {
    throw std::invalid_argument("click " + click.str() + " outside volume " + dims.str());
  }
  ts::NoGradGuard guard;
  l.clicks.push_back(click);
  const auto& emb = embedding(click.slice);
  auto out = net_->decode_mask(emb, net_->unconditioned(emb), prompts_for(l, click.slice));
  ClickResult result;
  result.slice = click.slice;
  result.mask = to_volume_mask(out.mask_logits);
  const bool empty = count_foreground(result.mask) == 0;
  result.empty_after_positive = empty && click.positive;

  l.prompted[click.slice] = result.mask;
  l.memory.push(click.slice, true, {net_->encode_memory(out.mask_logits, emb), out.pointer});
  if (auto ex = net_->make_exemplar(out, emb, true)) bank_.insert(lesion, click.slice, true, std::move(*ex));
  result.revision = ++revision_;
  l.changed = revision_;
  bank_changed_ = revision_;
  return result;
}

const MaskVolume& Session::propagate_memory(int lesion) {
  Lesion& l = lesion_ref(lesion);
  if (l.clicks.empty()) throw std::logic_error("lesion " + std::to_string(lesion) + " has no prompted slice");
  ts::NoGradGuard guard;
  const Dims dims = volume_.dims();
  MaskVolume mv;
  mv.kind = MaskKind::kInstance;
  mv.mask = Mask(dims);
  mv.provenance.assign(dims.d, Provenance::kNone);
  for (const auto& [slice, m] : l.prompted) {
    mv.mask.set_slice(slice, m);
    mv.provenance[slice] = Provenance::kPrompted;
  }
  const int anchor = l.clicks.back().slice;
  for (int dir : {+1, -1}) {
    l.memory.clear_unpinned();
    for (int d = anchor + dir; d >= 0 && d < dims.d; d += dir) {
      if (l.prompted.count(d)) continue;  // pinned in memory already
      if (l.memory.empty()) continue;     // no prompt and no memory
      const auto& emb = embedding(d);
      std::vector<model::ContextItem<float>> items;
      const auto& entries = l.memory.entries();
      for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        items.push_back({it->payload.feature, it->payload.pointer, {}, it->slice});
      }
      auto out = net_->decode_mask(emb, net_->memory_attend(emb, items), {});
      // A negative object score means the lesion is absent from this slice.
      ts::Tensor<float> logits = out.object_score.item() > 0.0f ? out.mask_logits
                                                               : ts::Tensor<float>::full(out.mask_logits.shape(), -1.0f);
      SliceMask m = to_volume_mask(logits);
      mv.mask.set_slice(d, m);
      mv.provenance[d] = Provenance::kPropagated;
      l.memory.push(d, false, {net_->encode_memory(logits, emb), out.pointer});
      if (auto ex = net_->make_exemplar(logits, out.pointer, emb, false)) bank_.insert(lesion, d, false, std::move(*ex));
    }
  }
  l.memory.clear_unpinned();
  ++revision_;
  bank_changed_ = revision_;
  mv.revision = revision_;
  l.instance = std::move(mv);
  return *l.instance;
}

const MaskVolume& Session::propagate_exemplars() {
  ts::NoGradGuard guard;
  const Dims dims = volume_.dims();
  const int limit = config_.context_limit < 0 ? bank_.capacity() : config_.context_limit;
  MaskVolume mv;
  mv.kind = MaskKind::kSemantic;
  mv.mask = Mask(dims);
  mv.provenance.assign(dims.d, Provenance::kExemplar);
  for (int d = 0; d < dims.d; ++d) {
    const auto& emb = embedding(d);
    std::vector<model::Exemplar<float>> ctx;
    for (const auto* e : bank_.select_context(d, limit)) {
      ctx.push_back(e->payload);
      ctx.back().prompted = e->prompted;
      ctx.back().d = e->slice;
    }
    auto out = net_->decode_mask(emb, net_->exemplar_attend(emb, ctx), {});
    mv.mask.set_slice(d, to_volume_mask(out.mask_logits));
  }
  mv.revision = revision_;
  semantic_ = std::move(mv);
  return *semantic_;
}

Mask Session::merged_mask() {
  const Dims dims = volume_.dims();
  Mask merged(dims);
  if (config_.exemplar_stage) {
    if (!semantic_ || semantic_->revision < bank_changed_) propagate_exemplars();
    merged = semantic_->mask;
  }
  if (config_.union_instances || !config_.exemplar_stage) {
    for (auto& [id, l] : lesions_) {
      if (l.clicks.empty() || !l.instance) continue;
      for (int64_t i = 0; i < merged.size(); ++i) merged[i] |= l.instance->mask[i];
    }
  }
  return merged;
}

MaskVolume Session::final_mask() {
  for (auto& [id, l] : lesions_)
    if (!l.clicks.empty() && !instance_current(l)) propagate_memory(id);
  Mask merged = merged_mask();
  MaskVolume mv;
  mv.kind = MaskKind::kFinal;
  mv.mask = eval::remove_small_components(merged, config_.v_thresh, volume_.spacing, config_.connectivity);
  if (config_.fill_holes) mv.mask = eval::fill_holes(mv.mask);
  mv.provenance.assign(volume_.dims().d, Provenance::kNone);
  mv.revision = revision_;
  return mv;
}

std::vector<ExemplarSummary> Session::exemplars() const {
  std::vector<ExemplarSummary> out;
  for (const auto& e : bank_.entries()) out.push_back({e.lesion, e.slice, e.prompted, bank_.recency_rank(e), e.counter});
  return out;
}

// ---- snapshots -------------------------------------------------------------

namespace {

constexpr int kSnapshotVersion = 1;

json clicks_json(const std::vector<Click>& clicks) {
  json a = json::array();
  for (const auto& c : clicks) a.push_back({{"x", c.x}, {"y", c.y}, {"slice", c.slice}, {"positive", c.positive}});
  return a;
}

std::vector<Click> clicks_from(const json& j) {
  std::vector<Click> out;
  for (const auto& c : j) out.push_back({c.at("x").get<int>(), c.at("y").get<int>(), c.at("slice").get<int>(), c.at("positive").get<bool>()});
  return out;
}

json mask_volume_json(const MaskVolume& mv) {
  json prov = json::array();
  for (auto p : mv.provenance) prov.push_back(static_cast<int>(p));
  return {{"kind", to_string(mv.kind)}, {"revision", mv.revision}, {"rle", io::rle_to_json(io::rle_encode(mv.mask))},
          {"provenance", prov}};
}

MaskVolume mask_volume_from(const json& j) {
  MaskVolume mv;
  mv.kind = mask_kind_from_string(j.at("kind").get<std::string>());
  mv.revision = j.at("revision").get<uint64_t>();
  mv.mask = io::rle_decode(io::rle_from_json(j.at("rle")));
  for (const auto& p : j.at("provenance")) mv.provenance.push_back(static_cast<Provenance>(p.get<int>()));
  return mv;
}

ts::Tensor<float> tensor_from(const ts::Checkpoint& ck, const std::string& name) {
  const auto* st = ck.find(name);
  if (!st) throw ts::CheckpointError("snapshot: missing tensor '" + name + "'");
  return ts::Tensor<float>(st->shape, std::vector<float>(st->values.begin(), st->values.end()));
}

std::optional<ts::Tensor<float>> optional_tensor(const ts::Checkpoint& ck, const std::string& name) {
  if (!ck.find(name)) return std::nullopt;
  return tensor_from(ck, name);
}

}  // namespace

ts::Checkpoint Session::snapshot() const {
  ts::Checkpoint ck;
  json& m = ck.manifest;
  m["format"] = "mois-session";
  m["version"] = kSnapshotVersion;
  m["revision"] = revision_;
  m["next_lesion"] = next_lesion_;
  m["bank_changed"] = bank_changed_;
  m["config"] = config_;
  m["architecture"] = net_->config();
  const Dims dims = volume_.dims();
  m["volume"] = {{"shape", {dims.h, dims.w, dims.d}},
                 {"spacing", {volume_.spacing.x, volume_.spacing.y, volume_.spacing.z}},
                 {"origin", volume_.origin},
                 {"metadata", volume_.metadata}};
  ck.tensors.push_back(ts::store("volume", ts::Tensor<float>({dims.d, dims.h, dims.w}, volume_.intensities.values())));

  json lesions = json::array();
  for (const auto& [id, l] : lesions_) {
    json lj = {{"id", id}, {"clicks", clicks_json(l.clicks)}, {"changed", l.changed}};
    json prompted = json::array();
    for (const auto& [slice, sm] : l.prompted) prompted.push_back({{"slice", slice}, {"rle", io::rle_to_json(io::rle_encode(sm))}});
    lj["prompted"] = prompted;
    json mem = json::array();
    const std::string base = "lesion/" + std::to_string(id) + "/memory/";
    for (size_t k = 0; k < l.memory.entries().size(); ++k) {
      const auto& e = l.memory.entries()[k];
      mem.push_back({{"slice", e.slice}, {"prompted", e.prompted}});
      ck.tensors.push_back(ts::store(base + std::to_string(k) + "/feature", e.payload.feature));
      if (e.payload.pointer.defined()) ck.tensors.push_back(ts::store(base + std::to_string(k) + "/pointer", e.payload.pointer));
    }
    lj["memory"] = mem;
    lj["instance"] = l.instance ? mask_volume_json(*l.instance) : json(nullptr);
    lesions.push_back(lj);
  }
  m["lesions"] = lesions;

  json entries = json::array();
  for (size_t k = 0; k < bank_.entries().size(); ++k) {
    const auto& e = bank_.entries()[k];
    entries.push_back({{"lesion", e.lesion}, {"slice", e.slice}, {"prompted", e.prompted}, {"counter", e.counter}});
    const std::string base = "exemplar/" + std::to_string(k) + "/";
    ck.tensors.push_back(ts::store(base + "z", e.payload.z));
    ck.tensors.push_back(ts::store(base + "p", e.payload.p));
    if (e.payload.v.defined()) ck.tensors.push_back(ts::store(base + "v", e.payload.v));
  }
  m["exemplar_bank"] = {{"next_counter", bank_.next_counter()}, {"entries", entries}};
  m["semantic"] = semantic_ ? mask_volume_json(*semantic_) : json(nullptr);
  return ck;
}

std::unique_ptr<Session> Session::restore(std::shared_ptr<const Net> net, const ts::Checkpoint& ck) {
  const json& m = ck.manifest;
  try {
    if (m.value("format", "") != "mois-session") throw ts::CheckpointError("snapshot: not a session snapshot");
    if (m.value("version", 0) != kSnapshotVersion) {
      throw ts::CheckpointError("snapshot: unsupported version " + std::to_string(m.value("version", 0)));
    }
    if (!net) throw std::invalid_argument("Session::restore: no network");
    if (m.at("architecture").get<model::ModelConfig>() != net->config()) {
      throw ts::CheckpointError("snapshot: recorded for a different model architecture");
    }
    io::Volume vol;
    const auto& vj = m.at("volume");
    const Dims dims{vj["shape"][0].get<int>(), vj["shape"][1].get<int>(), vj["shape"][2].get<int>()};
    const auto* vt = ck.find("volume");
    if (!vt || vt->values.size() != static_cast<size_t>(dims.voxels())) throw ts::CheckpointError("snapshot: bad volume tensor");
    vol.intensities = Grid3<float>(dims, std::vector<float>(vt->values.begin(), vt->values.end()));
    vol.spacing = {vj["spacing"][0].get<double>(), vj["spacing"][1].get<double>(), vj["spacing"][2].get<double>()};
    vol.origin = vj.at("origin").get<std::array<double, 3>>();
    vol.metadata = vj.at("metadata").get<std::map<std::string, std::string>>();

    auto s = std::make_unique<Session>(net, std::move(vol), m.at("config").get<InferenceConfig>());
    s->revision_ = m.at("revision").get<uint64_t>();
    s->next_lesion_ = m.at("next_lesion").get<int>();
    s->bank_changed_ = m.at("bank_changed").get<uint64_t>();
    for (const auto& lj : m.at("lesions")) {
      const int id = lj.at("id").get<int>();
      Lesion l(net->config().memory_capacity);
      l.clicks = clicks_from(lj.at("clicks"));
      l.changed = lj.at("changed").get<uint64_t>();
      for (const auto& pj : lj.at("prompted")) {
        Mask pm = io::rle_decode(io::rle_from_json(pj.at("rle")));
        l.prompted[pj.at("slice").get<int>()] = pm.slice_copy(0);
      }
      std::vector<banks::MemoryEntry<MemoryPayload>> mem;
      const std::string base = "lesion/" + std::to_string(id) + "/memory/";
      int k = 0;
      for (const auto& ej : lj.at("memory")) {
        MemoryPayload p{tensor_from(ck, base + std::to_string(k) + "/feature"), {}};
        if (auto ptr = optional_tensor(ck, base + std::to_string(k) + "/pointer")) p.pointer = *ptr;
        mem.push_back({ej.at("slice").get<int>(), ej.at("prompted").get<bool>(), std::move(p)});
        ++k;
      }
      l.memory.restore(std::move(mem));
      if (!lj.at("instance").is_null()) l.instance = mask_volume_from(lj["instance"]);
      s->lesions_.emplace(id, std::move(l));
    }
    std::vector<banks::Exemplar<model::Exemplar<float>>> entries;
    int k = 0;
    for (const auto& ej : m.at("exemplar_bank").at("entries")) {
      const std::string base = "exemplar/" + std::to_string(k++) + "/";
      model::Exemplar<float> ex;
      ex.z = tensor_from(ck, base + "z");
      ex.p = tensor_from(ck, base + "p");
      if (auto v = optional_tensor(ck, base + "v")) ex.v = *v;
      ex.d = ej.at("slice").get<int>();
      ex.prompted = ej.at("prompted").get<bool>();
      entries.push_back({ej.at("lesion").get<int>(), ex.d, ex.prompted, ej.at("counter").get<uint64_t>(), std::move(ex)});
    }
    s->bank_.restore(std::move(entries), m["exemplar_bank"].at("next_counter").get<uint64_t>());
    if (!m.at("semantic").is_null()) s->semantic_ = mask_volume_from(m["semantic"]);
    return s;
  } catch (const json::exception& e) {
    throw ts::CheckpointError(std::string("snapshot: malformed manifest: ") + e.what());
  } catch (const io::FormatError& e) {
    throw ts::CheckpointError(std::string("snapshot: ") + e.what());
  }
}

void Session::save(const std::filesystem::path& path) const { ts::save_checkpoint(path, snapshot()); }

std::unique_ptr<Session> Session::load(std::shared_ptr<const Net> net, const std::filesystem::path& path) {
  return restore(std::move(net), ts::load_checkpoint(path));
}

// ---- one-shot pipeline and evaluation adapter --------------------------------

InferenceResult full_inference(std::shared_ptr<const Net> net, const io::Volume& volume,
                               const std::vector<std::vector<Click>>& clicks_by_lesion, const InferenceConfig& config) {
  Session s(std::move(net), volume, config);
  InferenceResult r;
  for (const auto& clicks : clicks_by_lesion) {
    const int id = s.add_lesion();
    for (const auto& c : clicks) s.apply_click(id, c);
    if (!clicks.empty()) r.instances.push_back(s.propagate_memory(id).mask);
  }
  MaskVolume fin = s.final_mask();
  r.merged = s.merged_mask();
  r.final = std::move(fin.mask);
  if (config.exemplar_stage) r.semantic = s.semantic()->mask;
  return r;
}

namespace {

class EvalAdapter : public eval::EvalSession {
 public:
  EvalAdapter(std::shared_ptr<const Net> net, const io::Volume& volume, const InferenceConfig& config)
      : session_(std::move(net), volume, config) {}

  Mask click(int lesion, const Click& click) override {
    while (static_cast<int>(ids_.size()) <= lesion) ids_.push_back(session_.add_lesion());
    session_.apply_click(ids_[lesion], click);
    return session_.propagate_memory(ids_[lesion]).mask;
  }

  std::optional<Mask> finalize() override {
    if (!session_.config().exemplar_stage) return std::nullopt;
    Mask m = session_.propagate_exemplars().mask;
    return session_.config().fill_holes ? eval::fill_holes(m) : m;
  }

 private:
  Session session_;
  std::vector<int> ids_;
};

}  // namespace

eval::SessionFactory session_factory(std::shared_ptr<const Net> net, InferenceConfig config) {
  config.validate();
  return [net, config](const io::Volume& volume) -> std::unique_ptr<eval::EvalSession> {
    return std::make_unique<EvalAdapter>(net, volume, config);
  };
}

}  // namespace mois::inference
