#pragma once

// Self-describing weight container.
//
// Layout (all integers little-endian):
//   "MOISCKPT"            8-byte magic
//   u32 version           currently 1
//   u64 manifest_bytes    followed by the UTF-8 JSON manifest
//   u64 tensor_count
//   per tensor: u32 name_bytes, name, u8 dtype (0=f32, 1=f64), u32 rank,
//               i64 extents[rank], payload (numel * sizeof(dtype))

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mois/tensor/tensor.hpp"

namespace mois::tensor {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'I', 'S', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

enum class DType : uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<double> values;  // widened; f32 payloads round-trip exactly
};

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

template <typename T>
StoredTensor store(const std::string& name, const Tensor<T>& t);

}  // namespace mois::tensor
