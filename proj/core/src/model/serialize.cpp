#include "mois/model/serialize.hpp"

namespace mois::model {

using tensor::Checkpoint;
using tensor::CheckpointError;

template <typename T>
Checkpoint to_checkpoint(const Network<T>& net, const nlohmann::json& extra) {
  Checkpoint ck;
  ck.manifest = {{"format", "mois-model"}, {"architecture", net.config()}, {"extra", extra}};
  for (const auto& [name, t] : net.params().all()) ck.tensors.push_back(tensor::store(name, t));
  return ck;
}

template <typename T>
void load_parameters(Network<T>& net, const Checkpoint& ck) {
  const auto& params = net.params().all();
  if (ck.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (const auto& [name, t] : params) {
    const auto* st = ck.find(name);
    if (!st) throw CheckpointError("checkpoint lacks parameter " + name);
    if (st->shape != t.shape()) {
      throw CheckpointError("parameter " + name + ": checkpoint shape " + tensor::to_string(st->shape) +
                            ", model shape " + tensor::to_string(t.shape()));
    }
    Tensor<T> dst = t;
    auto d = dst.mutable_data();
    for (size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(st->values[i]);
  }
}

template <typename T>
std::unique_ptr<Network<T>> from_checkpoint(const Checkpoint& ck) {
  if (ck.manifest.value("format", "") != "mois-model") throw CheckpointError("not a model checkpoint");
  ModelConfig cfg;
  try {
    cfg = ck.manifest.at("architecture").get<ModelConfig>();
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad architecture manifest: ") + e.what());
  }
  auto net = std::make_unique<Network<T>>(cfg);
  load_parameters(*net, ck);
  return net;
}

template <typename T>
void save_model(const Network<T>& net, const std::filesystem::path& path, const nlohmann::json& extra) {
  tensor::save_checkpoint(path, to_checkpoint(net, extra));
}

template <typename T>
std::unique_ptr<Network<T>> load_model(const std::filesystem::path& path, nlohmann::json* extra) {
  Checkpoint ck = tensor::load_checkpoint(path);
  auto net = from_checkpoint<T>(ck);
  if (extra) *extra = ck.manifest.value("extra", nlohmann::json::object());
  return net;
}

#define MOIS_INSTANTIATE(T)                                                                              \
  template Checkpoint to_checkpoint(const Network<T>&, const nlohmann::json&);                           \
  template std::unique_ptr<Network<T>> from_checkpoint(const Checkpoint&);                               \
  template void load_parameters(Network<T>&, const Checkpoint&);                                         \
  template void save_model(const Network<T>&, const std::filesystem::path&, const nlohmann::json&);     \
  template std::unique_ptr<Network<T>> load_model(const std::filesystem::path&, nlohmann::json*);

MOIS_INSTANTIATE(float)
MOIS_INSTANTIATE(double)

}  // namespace mois::model
