#include "mois/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mois::tensor {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }

  std::string get_string(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  const char* take(size_t n) {
    need(n);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError("checkpoint truncated: need " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", have " + std::to_string(bytes_.size() - pos_));
    }
  }

  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

const StoredTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<uint32_t>(out, kCheckpointVersion);
  const std::string manifest = checkpoint.manifest.dump();
  put<uint64_t>(out, manifest.size());
  out += manifest;
  put<uint64_t>(out, checkpoint.tensors.size());
  for (const auto& t : checkpoint.tensors) {
    if (numel(t.shape) != static_cast<int64_t>(t.values.size())) {
      throw CheckpointError("tensor '" + t.name + "' shape " + to_string(t.shape) + " does not match " +
                            std::to_string(t.values.size()) + " values");
    }
    put<uint32_t>(out, static_cast<uint32_t>(t.name.size()));
    out += t.name;
    put<uint8_t>(out, static_cast<uint8_t>(t.dtype));
    put<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
    for (auto e : t.shape) put<int64_t>(out, e);
    for (double v : t.values) {
      if (t.dtype == DType::kFloat32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  const std::string magic = r.get_string(sizeof(kCheckpointMagic));
  if (magic != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint: bad magic header");
  }
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto manifest_bytes = r.get<uint64_t>();
  ckpt.manifest = nlohmann::json::parse(r.get_string(manifest_bytes));
  const auto count = r.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.get_string(r.get<uint32_t>());
    const auto dtype = r.get<uint8_t>();
    if (dtype > 1) throw CheckpointError("tensor '" + t.name + "' has unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<uint32_t>();
    for (uint32_t k = 0; k < rank; ++k) {
      const auto e = r.get<int64_t>();
      if (e < 0) throw CheckpointError("tensor '" + t.name + "' has negative extent");
      t.shape.push_back(e);
    }
    const int64_t n = numel(t.shape);
    t.values.resize(n);
    for (int64_t k = 0; k < n; ++k) {
      t.values[k] = t.dtype == DType::kFloat32 ? static_cast<double>(r.get<float>()) : r.get<double>();
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

template <typename T>
StoredTensor store(const std::string& name, const Tensor<T>& t) {
  StoredTensor s;
  s.name = name;
  s.dtype = std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
  s.shape = t.shape();
  s.values.assign(t.data().begin(), t.data().end());
  return s;
}

template StoredTensor store(const std::string&, const Tensor<float>&);
template StoredTensor store(const std::string&, const Tensor<double>&);

}  // namespace mois::tensor
