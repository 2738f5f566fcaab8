#include "mois/io/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mois::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

void Volume::validate() const {
  const Dims& d = dims();
  if (d.h < 1 || d.w < 1 || d.d < 1) throw std::invalid_argument("volume extents must be >= 1, got " + d.str());
  if (!(spacing.x > 0) || !(spacing.y > 0) || !(spacing.z > 0)) {
    throw std::invalid_argument("volume spacing must be strictly positive");
  }
}

namespace {

template <typename V>
const char* dtype_name();
template <> const char* dtype_name<float>() { return "float32"; }
template <> const char* dtype_name<uint8_t>() { return "uint8"; }
template <> const char* dtype_name<int32_t>() { return "int32"; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const char* data, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw FormatError("short write to " + path.string());
}

fs::path payload_path(const fs::path& sidecar) {
  fs::path p = sidecar;
  p.replace_extension(".raw");
  return p;
}

template <typename V>
void save_grid(const Grid3<V>& grid, const Spacing& spacing, const std::array<double, 3>& origin,
               const std::map<std::string, std::string>& metadata, const fs::path& sidecar) {
  fs::path payload = payload_path(sidecar);
  json header = {
      {"format", "mois-volume"},
      {"version", kVolumeFormatVersion},
      {"dtype", dtype_name<V>()},
      {"shape", {grid.dims().h, grid.dims().w, grid.dims().d}},
      {"spacing", {spacing.x, spacing.y, spacing.z}},
      {"origin", origin},
      {"payload", payload.filename().string()},
      {"metadata", metadata},
  };
  if (sidecar.has_parent_path()) fs::create_directories(sidecar.parent_path());
  write_file(payload, reinterpret_cast<const char*>(grid.values().data()), grid.values().size() * sizeof(V));
  std::string text = header.dump(2) + "\n";
  write_file(sidecar, text.data(), text.size());
}

struct Header {
  Dims dims;
  Spacing spacing;
  std::array<double, 3> origin{0, 0, 0};
  std::map<std::string, std::string> metadata;
  std::string dtype;
  fs::path payload;
};

Header parse_header(const std::string& text, const std::string& what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(what + ": malformed sidecar: " + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != "mois-volume") throw FormatError(what + ": not a mois volume");
    int version = j.at("version").get<int>();
    if (version != kVolumeFormatVersion) {
      throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    Header h;
    auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw FormatError(what + ": shape must have 3 entries");
    h.dims = {shape[0], shape[1], shape[2]};
    auto sp = j.at("spacing").get<std::vector<double>>();
    if (sp.size() != 3) throw FormatError(what + ": spacing must have 3 entries");
    h.spacing = {sp[0], sp[1], sp[2]};
    if (j.contains("origin")) h.origin = j["origin"].get<std::array<double, 3>>();
    if (j.contains("metadata")) h.metadata = j["metadata"].get<std::map<std::string, std::string>>();
    h.dtype = j.at("dtype").get<std::string>();
    if (j.contains("payload")) h.payload = j["payload"].get<std::string>();
    if (h.dims.h < 1 || h.dims.w < 1 || h.dims.d < 1) throw FormatError(what + ": empty extents");
    return h;
  } catch (const json::exception& e) {
    throw FormatError(what + ": bad sidecar field: " + e.what());
  }
}

Header read_header(const fs::path& sidecar) {
  Header h = parse_header(read_file(sidecar), sidecar.string());
  h.payload = sidecar.parent_path() / (h.payload.empty() ? payload_path(sidecar).filename() : h.payload);
  return h;
}

template <typename V>
Grid3<V> grid_from_bytes(const std::string& bytes, Dims dims, const std::string& what) {
  size_t expected = static_cast<size_t>(dims.voxels()) * sizeof(V);
  if (bytes.size() != expected) {
    throw FormatError(what + ": payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<V> values(static_cast<size_t>(dims.voxels()));
  std::memcpy(values.data(), bytes.data(), expected);
  return Grid3<V>(dims, std::move(values));
}

template <typename V>
Grid3<V> load_grid(const fs::path& sidecar, Header* header_out) {
  Header h = read_header(sidecar);
  if (h.dtype != dtype_name<V>()) {
    throw FormatError(sidecar.string() + ": dtype " + h.dtype + ", expected " + dtype_name<V>());
  }
  auto grid = grid_from_bytes<V>(read_file(h.payload), h.dims, h.payload.string());
  if (header_out) *header_out = std::move(h);
  return grid;
}

}  // namespace

void save_volume(const Volume& volume, const fs::path& sidecar) {
  volume.validate();
  save_grid(volume.intensities, volume.spacing, volume.origin, volume.metadata, sidecar);
}

Volume load_volume(const fs::path& sidecar) {
  Header h;
  Volume v;
  v.intensities = load_grid<float>(sidecar, &h);
  v.spacing = h.spacing;
  v.origin = h.origin;
  v.metadata = std::move(h.metadata);
  v.validate();
  return v;
}

void save_mask(const Mask& mask, const Spacing& spacing, const fs::path& sidecar) {
  for (auto x : mask.values()) {
    if (x > 1) throw std::invalid_argument("save_mask: mask values must be 0 or 1");
  }
  save_grid(mask, spacing, {0, 0, 0}, {}, sidecar);
}

Mask load_mask(const fs::path& sidecar, Spacing* spacing) {
  Header h;
  Mask m = load_grid<uint8_t>(sidecar, &h);
  for (int64_t i = 0; i < m.size(); ++i) {
    if (m[i] > 1) {
      throw FormatError(sidecar.string() + ": mask value " + std::to_string(m[i]) + " at voxel " + std::to_string(i) +
                        " is not 0 or 1");
    }
  }
  if (spacing) *spacing = h.spacing;
  return m;
}

void save_labels(const LabelVolume& labels, const Spacing& spacing, const fs::path& sidecar) {
  save_grid(labels, spacing, {0, 0, 0}, {}, sidecar);
}

LabelVolume load_labels(const fs::path& sidecar, Spacing* spacing) {
  Header h;
  LabelVolume l = load_grid<int32_t>(sidecar, &h);
  if (spacing) *spacing = h.spacing;
  return l;
}

Volume volume_from_bytes(const std::string& payload, Dims dims, Spacing spacing) {
  if (dims.h < 1 || dims.w < 1 || dims.d < 1) throw FormatError("volume extents must be >= 1, got " + dims.str());
  Volume v;
  v.intensities = grid_from_bytes<float>(payload, dims, "volume upload");
  v.spacing = spacing;
  v.validate();
  return v;
}

Volume volume_from_upload(const std::string& sidecar, const std::string& payload) {
  Header h = parse_header(sidecar, "volume upload");
  if (h.dtype != "float32") throw FormatError("volume upload: dtype " + h.dtype + ", expected float32");
  Volume v = volume_from_bytes(payload, h.dims, h.spacing);
  v.origin = h.origin;
  v.metadata = std::move(h.metadata);
  return v;
}

nlohmann::json volume_sidecar(const Volume& volume) {
  const Dims& d = volume.dims();
  return {{"format", "mois-volume"},
          {"version", kVolumeFormatVersion},
          {"dtype", "float32"},
          {"shape", {d.h, d.w, d.d}},
          {"spacing", {volume.spacing.x, volume.spacing.y, volume.spacing.z}},
          {"origin", volume.origin},
          {"metadata", volume.metadata}};
}

std::string volume_to_bytes(const Volume& volume) {
  const auto& vals = volume.intensities.values();
  return std::string(reinterpret_cast<const char*>(vals.data()), vals.size() * sizeof(float));
}

}  // namespace mois::io
