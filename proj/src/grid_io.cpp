#include "activeseg/grid_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "activeseg/png_io.hpp"
#include "json.hpp"

namespace activeseg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json dims_json(const Dims& d) { return json::array({d.x, d.y, d.z}); }

Dims dims_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("dims must be a 3-element array");
  Dims d{j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
  if (!d.valid()) throw std::invalid_argument("dims must all be >= 1");
  return d;
}

json id_ref_json(const IdStackRef& ref, const fs::path& base) {
  json paths = json::array();
  for (const auto& p : ref.paths) paths.push_back(p.is_absolute() ? fs::relative(p, base).string() : p.string());
  return {{"format", ref.format == IdStackRef::Format::raw ? "raw" : "png16"}, {"paths", paths}};
}

IdStackRef id_ref_from_json(const json& j) {
  IdStackRef ref;
  const auto format = j.at("format").get<std::string>();
  if (format == "raw") {
    ref.format = IdStackRef::Format::raw;
  } else if (format == "png16") {
    ref.format = IdStackRef::Format::png16;
  } else {
    throw std::invalid_argument("unknown id stack format: " + format);
  }
  for (const auto& p : j.at("paths")) ref.paths.emplace_back(p.get<std::string>());
  if (ref.paths.empty()) throw std::invalid_argument("id stack has no paths");
  if (ref.format == IdStackRef::Format::raw && ref.paths.size() != 1) {
    throw std::invalid_argument("raw id stack takes exactly one path");
  }
  return ref;
}

void put_u32(std::vector<char>& out, std::size_t pos, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out[pos + b] = static_cast<char>((v >> (8 * b)) & 0xff);
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return v;
}

}  // namespace

fs::path header_path(const fs::path& data_path) { return fs::path(data_path.string() + ".json"); }

fs::path DatasetManifest::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

DatasetManifest DatasetManifest::load(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw std::runtime_error("manifest not found: " + manifest_path.string());
  const json j = read_json(manifest_path);
  DatasetManifest m;
  m.base_dir = manifest_path.parent_path();
  try {
    for (const auto& p : j.at("image_planes")) m.image_planes.emplace_back(p.get<std::string>());
    if (j.contains("labels") && !j["labels"].is_null()) m.labels = id_ref_from_json(j["labels"]);
    if (j.contains("segmentation") && !j["segmentation"].is_null()) {
      m.segmentation = id_ref_from_json(j["segmentation"]);
    }
    if (j.contains("resolution_nm")) {
      for (int a = 0; a < 3; ++a) m.resolution_nm[a] = j["resolution_nm"].at(a).get<double>();
    }
    m.anisotropic = j.value("anisotropic", false);
  } catch (const json::exception& e) {
    throw std::invalid_argument("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

void DatasetManifest::save(const fs::path& manifest_path) const {
  json planes = json::array();
  for (const auto& p : image_planes) planes.push_back(p.string());
  json j = {{"v", 1},
            {"image_planes", planes},
            {"resolution_nm", resolution_nm},
            {"anisotropic", anisotropic}};
  const fs::path base = manifest_path.parent_path();
  j["labels"] = labels ? id_ref_json(*labels, base) : json(nullptr);
  j["segmentation"] = segmentation ? id_ref_json(*segmentation, base) : json(nullptr);
  write_json(manifest_path, j);
}

RasterVolume load_volume(const DatasetManifest& manifest) {
  if (manifest.image_planes.empty()) throw std::invalid_argument("manifest lists no image planes");
  std::vector<std::uint8_t> voxels;
  std::size_t width = 0, height = 0;
  for (std::size_t z = 0; z < manifest.image_planes.size(); ++z) {
    const fs::path path = manifest.resolve(manifest.image_planes[z]);
    if (!fs::exists(path)) throw std::runtime_error("image plane not found: " + path.string());
    const PngImage img = read_png(path);
    if (img.bit_depth != 8 || img.channels != 1) {
      throw std::invalid_argument("image planes must be 8-bit grayscale: " + path.string());
    }
    if (z == 0) {
      width = img.width;
      height = img.height;
      voxels.reserve(width * height * manifest.image_planes.size());
    } else if (img.width != width || img.height != height) {
      throw std::invalid_argument("inconsistent plane size in " + path.string());
    }
    for (auto s : img.samples) voxels.push_back(static_cast<std::uint8_t>(s));
  }
  return RasterVolume(Dims{width, height, manifest.image_planes.size()}, std::move(voxels), manifest.anisotropic);
}

void write_id_grid(const fs::path& path, const Dims& dims, std::span<const std::uint32_t> ids) {
  if (ids.size() != dims.voxel_count()) throw std::invalid_argument("id grid size does not match dims");
  std::vector<char> bytes(ids.size() * 4);
  for (std::size_t i = 0; i < ids.size(); ++i) put_u32(bytes, 4 * i, ids[i]);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  write_json(header_path(path), {{"v", 1}, {"dims", dims_json(dims)}, {"dtype", "uint32le"}});
}

IdGrid read_id_grid(const fs::path& path) {
  const json header = read_json(header_path(path));
  if (header.value("dtype", "") != "uint32le") throw std::invalid_argument("id grid dtype must be uint32le");
  IdGrid grid;
  grid.dims = dims_from_json(header.at("dims"));
  const auto bytes = read_bytes(path);
  if (bytes.size() != grid.dims.voxel_count() * 4) {
    throw std::invalid_argument("id grid " + path.string() + " has wrong byte size");
  }
  grid.ids.resize(grid.dims.voxel_count());
  for (std::size_t i = 0; i < grid.ids.size(); ++i) grid.ids[i] = get_u32(bytes, 4 * i);
  return grid;
}

void write_id_stack_png16(const std::vector<fs::path>& planes, const Dims& dims, std::span<const std::uint32_t> ids) {
  if (planes.size() != dims.z) throw std::invalid_argument("one PNG path per plane required");
  const std::size_t plane = dims.x * dims.y;
  for (std::size_t z = 0; z < dims.z; ++z) {
    PngImage img;
    img.width = dims.x;
    img.height = dims.y;
    img.bit_depth = 16;
    img.samples.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint32_t v = ids[z * plane + i];
      if (v > 0xffff) throw std::invalid_argument("id does not fit a 16-bit PNG");
      img.samples[i] = static_cast<std::uint16_t>(v);
    }
    write_png(planes[z], img);
  }
}

IdGrid read_id_stack(const IdStackRef& ref, const DatasetManifest* manifest) {
  auto resolve = [&](const fs::path& p) { return manifest ? manifest->resolve(p) : p; };
  if (ref.format == IdStackRef::Format::raw) return read_id_grid(resolve(ref.paths.front()));
  IdGrid grid;
  for (std::size_t z = 0; z < ref.paths.size(); ++z) {
    const PngImage img = read_png(resolve(ref.paths[z]));
    if (img.channels != 1) throw std::invalid_argument("id planes must be single-channel");
    if (z == 0) {
      grid.dims = Dims{img.width, img.height, ref.paths.size()};
    } else if (img.width != grid.dims.x || img.height != grid.dims.y) {
      throw std::invalid_argument("inconsistent id plane size");
    }
    grid.ids.insert(grid.ids.end(), img.samples.begin(), img.samples.end());
  }
  return grid;
}

LabelVolume load_labels(const DatasetManifest& manifest) {
  if (!manifest.labels) throw std::invalid_argument("manifest has no label stack");
  IdGrid grid = read_id_stack(*manifest.labels, &manifest);
  LabelVolume out;
  out.dims = grid.dims;
  out.labels.reserve(grid.ids.size());
  for (auto id : grid.ids) out.labels.push_back(class_from_index(static_cast<int>(id)));
  return out;
}

SegmentationMap load_segmentation(const DatasetManifest& manifest) {
  if (!manifest.segmentation) throw std::invalid_argument("manifest has no segmentation stack");
  IdGrid grid = read_id_stack(*manifest.segmentation, &manifest);
  return SegmentationMap::relabel_sequential(grid.dims, grid.ids);
}

void write_segmentation(const fs::path& path, const SegmentationMap& seg) {
  write_id_grid(path, seg.dims(), seg.ids());
}

SegmentationMap read_segmentation(const fs::path& path) {
  IdGrid grid = read_id_grid(path);
  return SegmentationMap::relabel_sequential(grid.dims, grid.ids);
}

fs::path save_dataset(const fs::path& dir, const RasterVolume& volume, const LabelVolume* labels,
                      const SegmentationMap* segmentation) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.base_dir = dir;
  m.anisotropic = volume.anisotropic();
  const Dims& d = volume.dims();
  const std::size_t plane = d.x * d.y;
  for (std::size_t z = 0; z < d.z; ++z) {
    std::ostringstream name;
    name << "plane_" << std::setw(4) << std::setfill('0') << z << ".png";
    write_png(dir / name.str(), gray8_image(d.x, d.y, volume.voxels().subspan(z * plane, plane)));
    m.image_planes.emplace_back(name.str());
  }
  if (labels) {
    std::vector<std::uint32_t> ids(labels->labels.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(labels->labels[i]);
    write_id_grid(dir / "labels.raw", labels->dims, ids);
    m.labels = IdStackRef{IdStackRef::Format::raw, {"labels.raw"}};
  }
  if (segmentation) {
    write_segmentation(dir / "bodies.raw", *segmentation);
    m.segmentation = IdStackRef{IdStackRef::Format::raw, {"bodies.raw"}};
  }
  const fs::path manifest_path = dir / "manifest.json";
  m.save(manifest_path);
  return manifest_path;
}

void write_matrix_file(const fs::path& path, const MatrixFile& m, StorageType type) {
  if (m.values.size() != m.rows * m.cols) throw std::invalid_argument("matrix value count mismatch");
  const std::size_t width = type == StorageType::float32 ? 4 : 8;
  std::vector<char> bytes(m.values.size() * width);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (type == StorageType::float32) {
      const float f = static_cast<float>(m.values[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(bytes, 4 * i, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &m.values[i], 8);
      put_u32(bytes, 8 * i, static_cast<std::uint32_t>(bits & 0xffffffffu));
      put_u32(bytes, 8 * i + 4, static_cast<std::uint32_t>(bits >> 32));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

  json header = json::parse(m.extra_json);
  header["v"] = 1;
  header["n"] = m.rows;
  header["d"] = m.cols;
  header["names"] = m.names;
  header["dtype"] = type == StorageType::float32 ? "float32le" : "float64le";
  write_json(header_path(path), header);
}

MatrixFile read_matrix_file(const fs::path& path) {
  const json header = read_json(header_path(path));
  MatrixFile m;
  m.rows = header.at("n").get<std::size_t>();
  m.cols = header.at("d").get<std::size_t>();
  m.names = header.value("names", std::vector<std::string>{});
  const std::string dtype = header.at("dtype").get<std::string>();
  std::size_t width = 0;
  if (dtype == "float32le") {
    width = 4;
  } else if (dtype == "float64le") {
    width = 8;
  } else {
    throw std::invalid_argument("unsupported matrix dtype " + dtype);
  }
  json extra = header;
  for (const char* key : {"v", "n", "d", "names", "dtype"}) extra.erase(key);
  m.extra_json = extra.dump();

  const auto bytes = read_bytes(path);
  if (bytes.size() != m.rows * m.cols * width) throw std::invalid_argument("matrix file has wrong byte size");
  m.values.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (width == 4) {
      const std::uint32_t bits = get_u32(bytes, 4 * i);
      float f;
      std::memcpy(&f, &bits, 4);
      m.values[i] = f;
    } else {
      const std::uint64_t bits =
          static_cast<std::uint64_t>(get_u32(bytes, 8 * i)) | (static_cast<std::uint64_t>(get_u32(bytes, 8 * i + 4)) << 32);
      std::memcpy(&m.values[i], &bits, 8);
    }
    if (!std::isfinite(m.values[i])) throw std::invalid_argument("matrix file contains non-finite values");
  }
  return m;
}

void write_probability_field(const fs::path& path, const ProbabilityField& field) {
  MatrixFile m;
  m.rows = field.dims().voxel_count();
  m.cols = static_cast<std::size_t>(field.class_count());
  for (int c = 0; c < field.class_count(); ++c) m.names.emplace_back(class_name(class_from_index(c)));
  m.values.assign(field.values().begin(), field.values().end());
  m.extra_json = json{{"dims", dims_json(field.dims())}}.dump();
  write_matrix_file(path, m);
}

ProbabilityField read_probability_field(const fs::path& path) {
  MatrixFile m = read_matrix_file(path);
  const json extra = json::parse(m.extra_json);
  if (!extra.contains("dims")) throw std::invalid_argument("probability file header lacks dims");
  const Dims dims = dims_from_json(extra["dims"]);
  if (dims.voxel_count() != m.rows) throw std::invalid_argument("probability file dims do not match row count");
  for (std::size_t r = 0; r < m.rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) sum += m.values[r * m.cols + c];
    if (sum <= 0.0) throw std::invalid_argument("probability row with zero mass");
    for (std::size_t c = 0; c < m.cols; ++c) m.values[r * m.cols + c] /= sum;
  }
  return ProbabilityField(dims, static_cast<int>(m.cols), std::move(m.values));
}

}  // namespace activeseg
