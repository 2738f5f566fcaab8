#pragma once

#include <filesystem>

#include <json.hpp>

#include "mois/model/network.hpp"
#include "mois/tensor/checkpoint.hpp"

namespace mois::model {

// Checkpoint with manifest {"format": "mois-model", "architecture": config,
// "extra": ...} and one tensor per parameter.
template <typename T>
tensor::Checkpoint to_checkpoint(const Network<T>& net, const nlohmann::json& extra = nlohmann::json::object());

// Rebuilds the network from the manifest and checks every parameter's
// presence and shape. Throws tensor::CheckpointError on any mismatch.
template <typename T>
std::unique_ptr<Network<T>> from_checkpoint(const tensor::Checkpoint& checkpoint);

// Copies parameter values from a checkpoint into an existing network of the
// same architecture.
template <typename T>
void load_parameters(Network<T>& net, const tensor::Checkpoint& checkpoint);

template <typename T>
void save_model(const Network<T>& net, const std::filesystem::path& path,
                const nlohmann::json& extra = nlohmann::json::object());
template <typename T>
std::unique_ptr<Network<T>> load_model(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace mois::model
