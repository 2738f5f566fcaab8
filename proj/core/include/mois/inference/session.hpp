#pragma once

// Interactive two-stage inference over one scan.
//
// Stage 1 refines one lesion at a time: clicks decode their slice, and
// propagation sweeps the rest of the scan through that lesion's memory bank.
// Stage 2 decodes every slice from the shared exemplar bank. The final mask
// is the union of both, cleaned of small components and holes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "mois/banks/banks.hpp"
#include "mois/click.hpp"
#include "mois/eval/harness.hpp"
#include "mois/io/volume.hpp"
#include "mois/model/network.hpp"
#include "mois/tensor/checkpoint.hpp"

namespace mois::inference {

using Net = model::Network<float>;

struct InferenceConfig {
  bool union_instances = true;  // false: final mask is the Stage-2 mask alone
  bool exemplar_stage = true;   // false: Stage 1 only
  int context_limit = -1;       // exemplars per slice; < 0 uses the whole bank
  double v_thresh = 1000.0;     // mm^3
  int connectivity = 26;
  bool fill_holes = true;
  double p_low = 0.5;
  double p_high = 99.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const InferenceConfig& c);
void from_json(const nlohmann::json& j, InferenceConfig& c);

enum class MaskKind { kInstance, kSemantic, kFinal };
enum class Provenance : uint8_t { kNone = 0, kPrompted = 1, kPropagated = 2, kExemplar = 3 };

const char* to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& s);

struct MaskVolume {
  Mask mask;
  MaskKind kind = MaskKind::kInstance;
  std::vector<Provenance> provenance;  // per slice
  uint64_t revision = 0;               // state revision that produced it
};

struct ClickResult {
  SliceMask mask;  // decoded slice at volume resolution
  int slice = 0;
  bool empty_after_positive = false;
  uint64_t revision = 0;
};

struct MemoryPayload {
  tensor::Tensor<float> feature;
  tensor::Tensor<float> pointer;
};

using ExemplarBank = banks::ExemplarBank<model::Exemplar<float>>;
using MemoryBank = banks::MemoryBank<MemoryPayload>;

struct ExemplarSummary {
  int lesion = 0;
  int slice = 0;
  bool prompted = false;
  int recency_rank = 0;
  uint64_t counter = 0;
};

class Session {
 public:
  Session(std::shared_ptr<const Net> net, io::Volume volume, InferenceConfig config = {});

  const io::Volume& volume() const { return volume_; }
  const InferenceConfig& config() const { return config_; }
  uint64_t revision() const { return revision_; }
  const Net& network() const { return *net_; }

  int add_lesion();
  std::vector<int> lesion_ids() const;
  bool has_lesion(int lesion) const { return lesions_.count(lesion) != 0; }
  const std::vector<Click>& clicks(int lesion) const;

  // Throws std::out_of_range for an unknown lesion, std::invalid_argument for
  // a click outside the volume.
  ClickResult apply_click(int lesion, const Click& click);
  // Throws std::logic_error if the lesion has no clicks.
  const MaskVolume& propagate_memory(int lesion);
  // Read-only on banks and clicks; caches and returns the semantic mask.
  const MaskVolume& propagate_exemplars();
  // Brings stale stages up to date, then merges and postprocesses.
  MaskVolume final_mask();
  // Merged mask before postprocessing at the current state (stages must be current).
  Mask merged_mask();

  // Cached masks, if any; their revision tells whether they are current.
  const MaskVolume* instance(int lesion) const;
  const MaskVolume* semantic() const { return semantic_ ? &*semantic_ : nullptr; }
  // False when a later click or propagation invalidated the cached mask.
  bool instance_is_current(int lesion) const { return instance_current(lesion_ref(lesion)); }
  bool semantic_is_current() const { return semantic_ && semantic_->revision >= bank_changed_; }

  std::vector<ExemplarSummary> exemplars() const;
  const ExemplarBank& exemplar_bank() const { return bank_; }
  const MemoryBank& memory(int lesion) const;

  // Single-file snapshot (checkpoint container) with the volume, clicks,
  // bank states and cached masks.
  tensor::Checkpoint snapshot() const;
  static std::unique_ptr<Session> restore(std::shared_ptr<const Net> net, const tensor::Checkpoint& snapshot);
  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<Session> load(std::shared_ptr<const Net> net, const std::filesystem::path& path);

 private:
  struct Lesion {
    std::vector<Click> clicks;
    std::map<int, SliceMask> prompted;  // decoded prompted slices
    MemoryBank memory;
    std::optional<MaskVolume> instance;
    uint64_t changed = 0;  // revision of the last click
    explicit Lesion(int capacity) : memory(capacity) {}
  };

  const model::SliceEmbedding<float>& embedding(int slice) const;
  std::vector<model::PromptPoint> prompts_for(const Lesion& lesion, int slice) const;
  SliceMask to_volume_mask(const tensor::Tensor<float>& logits) const;
  Lesion& lesion_ref(int lesion);
  const Lesion& lesion_ref(int lesion) const;
  bool instance_current(const Lesion& l) const { return l.instance && l.instance->revision >= l.changed; }

  std::shared_ptr<const Net> net_;
  io::Volume volume_;
  InferenceConfig config_;
  std::vector<Image> slices_;  // normalized, resized to the network input
  mutable std::vector<std::optional<model::SliceEmbedding<float>>> embeddings_;
  std::map<int, Lesion> lesions_;
  int next_lesion_ = 0;
  ExemplarBank bank_;
  uint64_t bank_changed_ = 0;
  std::optional<MaskVolume> semantic_;
  uint64_t revision_ = 0;
};

struct InferenceResult {
  Mask final;
  Mask merged;  // before postprocessing
  std::vector<Mask> instances;
  std::optional<Mask> semantic;
};

// Applies each lesion's clicks in order, propagates, runs Stage 2 and
// postprocessing. An empty click list runs Stage 2 alone.
InferenceResult full_inference(std::shared_ptr<const Net> net, const io::Volume& volume,
                               const std::vector<std::vector<Click>>& clicks_by_lesion,
                               const InferenceConfig& config = {});

// Adapter for the lesion-wise evaluation protocol.
eval::SessionFactory session_factory(std::shared_ptr<const Net> net, InferenceConfig config = {});

}  // namespace mois::inference
