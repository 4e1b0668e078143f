#include "spnerf/io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spnerf/errors.hpp"

namespace spnerf::io {

namespace {

using nlohmann::json;

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw LengthMismatch("unexpected end of file");
  return value;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw FileNotFound("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FileNotFound("cannot open: " + path.string());
  return in;
}

struct PlyProperty {
  std::string type;
  std::string name;
};

size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32") {
    return 4;
  }
  if (t == "double" || t == "float64") return 8;
  throw MalformedHeader("unknown property type: " + t);
}

uint32_t color_for_class(uint32_t cls) {
  // Deterministic palette; distinct for small class counts.
  static const uint32_t palette[] = {0xe6194b, 0x3cb44b, 0xffe119, 0x4363d8, 0xf58231, 0x911eb4,
                                     0x46f0f0, 0xf032e6, 0xbcf60c, 0xfabebe, 0x008080, 0xe6beff};
  if (cls == kIgnoreLabel) return 0x808080;
  return palette[cls % (sizeof(palette) / sizeof(palette[0]))];
}

}  // namespace

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeader("empty file");
  if (line == "ply\r") line = "ply";
  if (line != "ply") throw MalformedHeader("missing ply magic");

  bool binary = false;
  bool format_seen = false;
  size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  bool in_vertex_element = false;
  bool saw_vertex_element = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt == "binary_big_endian") {
        throw UnsupportedEncoding("big-endian PLY is not supported");
      } else {
        throw MalformedHeader("unknown format: " + fmt);
      }
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      size_t count;
      ls >> name >> count;
      if (name == "vertex") {
        vertex_count = count;
        in_vertex_element = true;
        saw_vertex_element = true;
      } else {
        in_vertex_element = false;
        if (count > 0) throw UnsupportedEncoding("non-vertex elements are not supported");
      }
    } else if (tok == "property") {
      if (!in_vertex_element) continue;
      PlyProperty p;
      ls >> p.type >> p.name;
      if (p.type == "list") throw UnsupportedEncoding("list properties are not supported");
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else {
      throw MalformedHeader("unexpected header line: " + line);
    }
  }
  if (!format_seen || !saw_vertex_element) throw MalformedHeader("incomplete header");

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ilabel = -1;
  for (size_t p = 0; p < props.size(); ++p) {
    const std::string& n = props[p].name;
    if (n == "x") ix = static_cast<int>(p);
    else if (n == "y") iy = static_cast<int>(p);
    else if (n == "z") iz = static_cast<int>(p);
    else if (n == "nx") inx = static_cast<int>(p);
    else if (n == "ny") iny = static_cast<int>(p);
    else if (n == "nz") inz = static_cast<int>(p);
    else if (n == "label") ilabel = static_cast<int>(p);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw MissingProperty("x, y, z are required");
  bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  cloud.positions.reserve(vertex_count);

  auto parse_value = [](const std::string& type, const char* bytes) -> double {
    if (type == "float" || type == "float32") {
      float f;
      std::memcpy(&f, bytes, 4);
      return f;
    }
    if (type == "double" || type == "float64") {
      double d;
      std::memcpy(&d, bytes, 8);
      return d;
    }
    if (type == "uint" || type == "uint32") {
      uint32_t v;
      std::memcpy(&v, bytes, 4);
      return v;
    }
    if (type == "int" || type == "int32") {
      int32_t v;
      std::memcpy(&v, bytes, 4);
      return v;
    }
    if (type == "uchar" || type == "uint8") {
      return static_cast<unsigned char>(bytes[0]);
    }
    if (type == "char" || type == "int8") return static_cast<signed char>(bytes[0]);
    if (type == "ushort" || type == "uint16") {
      uint16_t v;
      std::memcpy(&v, bytes, 2);
      return v;
    }
    int16_t v;
    std::memcpy(&v, bytes, 2);
    return v;
  };

  if (binary) {
    size_t row_size = 0;
    std::vector<size_t> offsets;
    for (const auto& p : props) {
      offsets.push_back(row_size);
      row_size += type_size(p.type);
    }
    std::vector<char> row(row_size);
    for (size_t v = 0; v < vertex_count; ++v) {
      in.read(row.data(), static_cast<std::streamsize>(row_size));
      if (!in) throw MalformedHeader("vertex data truncated");
      auto get = [&](int p) { return parse_value(props[p].type, row.data() + offsets[p]); };
      cloud.positions.emplace_back(get(ix), get(iy), get(iz));
      if (has_normals) cloud.normals.emplace_back(get(inx), get(iny), get(inz));
      if (ilabel >= 0) cloud.gt_labels.push_back(static_cast<uint32_t>(get(ilabel)));
    }
  } else {
    std::vector<double> values(props.size());
    for (size_t v = 0; v < vertex_count; ++v) {
      if (!std::getline(in, line)) throw MalformedHeader("vertex data truncated");
      std::istringstream ls(line);
      for (size_t p = 0; p < props.size(); ++p) {
        if (!(ls >> values[p])) throw MalformedHeader("vertex data truncated");
      }
      cloud.positions.emplace_back(values[ix], values[iy], values[iz]);
      if (has_normals) cloud.normals.emplace_back(values[inx], values[iny], values[inz]);
      if (ilabel >= 0) cloud.gt_labels.push_back(static_cast<uint32_t>(values[ilabel]));
    }
  }
  return cloud;
}

namespace {

void write_ply_impl(const PointCloud& cloud, const std::vector<uint32_t>* labels, bool with_color,
                    const std::filesystem::path& path, bool binary) {
  std::ofstream out = open_out(path, true);
  const bool has_normals = cloud.has_normals();
  const std::vector<uint32_t>* label_col =
      labels ? labels : (cloud.has_labels() ? &cloud.gt_labels : nullptr);

  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (has_normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  if (label_col) out << "property uint label\n";
  if (with_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  for (size_t i = 0; i < cloud.size(); ++i) {
    float xyz[3] = {static_cast<float>(cloud.positions[i].x()),
                    static_cast<float>(cloud.positions[i].y()),
                    static_cast<float>(cloud.positions[i].z())};
    float nrm[3] = {0, 0, 0};
    if (has_normals) {
      nrm[0] = static_cast<float>(cloud.normals[i].x());
      nrm[1] = static_cast<float>(cloud.normals[i].y());
      nrm[2] = static_cast<float>(cloud.normals[i].z());
    }
    uint32_t label = label_col ? (*label_col)[i] : 0;
    uint32_t rgb = with_color ? color_for_class(label) : 0;
    if (binary) {
      out.write(reinterpret_cast<const char*>(xyz), 12);
      if (has_normals) out.write(reinterpret_cast<const char*>(nrm), 12);
      if (label_col) write_raw(out, label);
      if (with_color) {
        unsigned char c[3] = {static_cast<unsigned char>(rgb >> 16),
                              static_cast<unsigned char>((rgb >> 8) & 0xff),
                              static_cast<unsigned char>(rgb & 0xff)};
        out.write(reinterpret_cast<const char*>(c), 3);
      }
    } else {
      out << xyz[0] << " " << xyz[1] << " " << xyz[2];
      if (has_normals) out << " " << nrm[0] << " " << nrm[1] << " " << nrm[2];
      if (label_col) out << " " << label;
      if (with_color) {
        out << " " << (rgb >> 16) << " " << ((rgb >> 8) & 0xff) << " " << (rgb & 0xff);
      }
      out << "\n";
    }
  }
}

}  // namespace

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary) {
  write_ply_impl(cloud, nullptr, false, path, binary);
}

void write_labeled_ply(const PointCloud& cloud, const std::vector<uint32_t>& labels,
                       const std::filesystem::path& path, bool binary) {
  if (labels.size() != cloud.size()) throw LengthMismatch("label count != point count");
  write_ply_impl(cloud, &labels, true, path, binary);
}

void write_embeddings(const std::vector<std::vector<double>>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out = open_out(path, true);
  out.write("EMB1", 4);
  write_raw(out, static_cast<uint32_t>(rows.size()));
  uint32_t dim = rows.empty() ? 0 : static_cast<uint32_t>(rows[0].size());
  write_raw(out, dim);
  for (const auto& row : rows) {
    if (row.size() != dim) throw LengthMismatch("ragged embedding rows");
    for (double v : row) write_raw(out, static_cast<float>(v));
  }
}

std::vector<std::vector<double>> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "EMB1", 4) != 0) throw BadMagic("expected EMB1");
  uint32_t rows = read_raw<uint32_t>(in);
  uint32_t dim = read_raw<uint32_t>(in);
  std::vector<std::vector<double>> out(rows, std::vector<double>(dim));
  for (auto& row : out) {
    for (double& v : row) v = read_raw<float>(in);
  }
  return out;
}

void write_partition(const SuperpointPartition& partition, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, true);
  out.write("SPP1", 4);
  write_raw(out, static_cast<uint32_t>(partition.assignment.size()));
  for (uint32_t id : partition.assignment) write_raw(out, id);
}

SuperpointPartition read_partition(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPP1", 4) != 0) throw BadMagic("expected SPP1");
  uint32_t n = read_raw<uint32_t>(in);
  SuperpointPartition part;
  part.assignment.resize(n);
  uint32_t max_id = 0;
  for (uint32_t& id : part.assignment) {
    id = read_raw<uint32_t>(in);
    max_id = std::max(max_id, id);
  }
  part.superpoint_count = n == 0 ? 0 : max_id + 1;
  part.members.resize(part.superpoint_count);
  for (uint32_t p = 0; p < n; ++p) part.members[part.assignment[p]].push_back(p);
  return part;
}

void write_field(const FeatureField& field, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, true);
  out.write("SPF1", 4);
  write_raw(out, static_cast<uint32_t>(1));  // version
  for (int a = 0; a < 3; ++a) write_raw(out, field.dims[a]);
  write_raw(out, static_cast<float>(field.voxel_size));
  for (int a = 0; a < 3; ++a) write_raw(out, static_cast<float>(field.origin[a]));
  write_raw(out, field.scale_count);
  write_raw(out, field.embed_dim);
  // The density grid is stored as the raw (pre-softplus) parameter so a
  // write/read/write cycle is bit-identical.
  for (double v : field.raw_density) write_raw(out, static_cast<float>(v));
  for (double v : field.embeddings) write_raw(out, static_cast<float>(v));
}

FeatureField read_field(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPF1", 4) != 0) throw BadMagic("expected SPF1");
  uint32_t version = read_raw<uint32_t>(in);
  if (version != 1) throw UnsupportedEncoding("unknown SPF1 version");
  std::array<uint32_t, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = read_raw<uint32_t>(in);
  float voxel_size = read_raw<float>(in);
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = read_raw<float>(in);
  uint32_t scales = read_raw<uint32_t>(in);
  uint32_t dim = read_raw<uint32_t>(in);
  FeatureField field = FeatureField::create(origin, voxel_size, dims, scales, dim);
  for (double& v : field.raw_density) v = read_raw<float>(in);
  for (double& v : field.embeddings) v = read_raw<float>(in);
  return field;
}

void write_labelbank(const LabelBank& bank, const std::filesystem::path& json_path) {
  std::filesystem::path dir = json_path.parent_path();
  std::filesystem::path pos_file = json_path.stem().string() + "_pos.emb1";
  std::filesystem::path neg_file = json_path.stem().string() + "_neg.emb1";

  std::vector<std::vector<double>> pos_rows;
  json j;
  j["classes"] = json::array();
  for (size_t c = 0; c < bank.classes.size(); ++c) {
    pos_rows.push_back(bank.classes[c].f_pos);
    j["classes"].push_back(
        {{"name", bank.classes[c].name}, {"file", pos_file.string()}, {"row", c}});
  }
  j["negatives"] = {{"file", neg_file.string()}};
  write_embeddings(pos_rows, dir / pos_file);
  write_embeddings(bank.negatives, dir / neg_file);
  std::ofstream out = open_out(json_path, false);
  out << j.dump(2) << "\n";
}

LabelBank read_labelbank(const std::filesystem::path& json_path) {
  std::ifstream in = open_in(json_path, false);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw MalformedHeader("label bank JSON parse error");
  std::filesystem::path dir = json_path.parent_path();

  auto load = [&](const std::filesystem::path& rel) {
    std::filesystem::path full = dir / rel;
    if (!std::filesystem::exists(full)) {
      throw FileNotFound("label bank references missing file: " + full.string());
    }
    return read_embeddings(full);
  };

  LabelBank bank;
  std::map<std::string, std::vector<std::vector<double>>> cache;
  for (const auto& jc : j.at("classes")) {
    std::string file = jc.at("file").get<std::string>();
    if (!cache.count(file)) cache[file] = load(file);
    size_t row = jc.at("row").get<size_t>();
    if (row >= cache[file].size()) throw LengthMismatch("label bank row out of range");
    bank.classes.push_back({jc.at("name").get<std::string>(), cache[file][row]});
  }
  bank.negatives = load(j.at("negatives").at("file").get<std::string>());
  return bank;
}

void write_loss_csv(const std::vector<LossLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, false);
  out << "iteration,stage,density,lang,consistency\n";
  for (const auto& row : log) {
    out << row.iteration << "," << row.stage << "," << row.density << "," << row.lang << ","
        << row.consistency << "\n";
  }
}

void write_scores_csv(const SegmentationResult& result, const std::vector<std::string>& class_names,
                      const std::filesystem::path& path) {
  std::ofstream out = open_out(path, false);
  out << "superpoint,class,R,A,Rstar\n";
  for (uint32_t sp = 0; sp < result.superpoint_count; ++sp) {
    uint32_t cls = result.superpoint_class[sp];
    std::string name = cls == kIgnoreLabel ? "IGNORE" : class_names[cls];
    double r = 0.0, a = 0.0, rs = 0.0;
    if (cls != kIgnoreLabel) {
      r = result.at(result.relevancy, sp, cls);
      a = result.at(result.affinity_score, sp, cls);
      rs = result.at(result.scaled_relevancy, sp, cls);
    }
    out << sp << "," << name << "," << r << "," << a << "," << rs << "\n";
  }
}

std::string metrics_to_json(const ConfusionMatrix& matrix) {
  json j;
  j["miou"] = miou(matrix);
  j["macc"] = macc(matrix);
  j["ignored"] = matrix.ignored;
  j["per_class"] = json::array();
  for (const auto& c : per_class_metrics(matrix)) {
    j["per_class"].push_back({{"class", c.class_id},
                              {"iou", c.iou},
                              {"recall", c.recall},
                              {"gt_count", c.gt_count}});
  }
  return j.dump(2);
}

void write_metrics_json(const ConfusionMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out = open_out(path, false);
  out << metrics_to_json(matrix) << "\n";
}

}  // namespace spnerf::io
