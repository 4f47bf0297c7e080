#include "rigkit/error.hpp"
#include "rigkit/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace rigkit {

namespace {

using Json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'R', 'I', 'G', 'K', 'I', 'T', '\0', '\n'};

const std::set<std::string> kKnownKeys = {
    "format",
    "version",
    "vertex_count",
    "triangle_count",
    "skeleton",
    "parameters",
    "parameter_transform",
    "identity",
    "expression",
    "skin",
    "skeleton_basis",
    "correctives",
    "lods",
    "sections",
};

double toDegrees(double r) {
  return r * 180.0 / std::numbers::pi;
}
double toRadians(double d) {
  return d * std::numbers::pi / 180.0;
}

class PayloadWriter {
 public:
  template <typename Fn>
  void add(const std::string& name, std::vector<size_t> shape, Fn&& valueAt) {
    size_t count = 1;
    for (size_t s : shape) {
      count *= s;
    }
    sections_.push_back({{"name", name}, {"offset", bytes_.size()}, {"shape", shape}});
    for (size_t i = 0; i < count; ++i) {
      const double v = valueAt(i);
      require(std::isfinite(v), "save rig: non-finite value in section '" + name + "'");
      const uint32_t u = std::bit_cast<uint32_t>(float(v));
      for (int b = 0; b < 4; ++b) {
        bytes_.push_back(char((u >> (8 * b)) & 0xffu));
      }
    }
  }

  // Writes a dense buffer in its own storage order.
  void addBuffer(const std::string& name, std::vector<size_t> shape, const double* data) {
    add(name, std::move(shape), [data](size_t i) { return data[i]; });
  }

  const std::string& bytes() const {
    return bytes_;
  }
  const Json& sections() const {
    return sections_;
  }

 private:
  std::string bytes_;
  Json sections_ = Json::array();
};

class PayloadReader {
 public:
  PayloadReader(const char* data, size_t size, const Json& sections, std::string source)
      : data_(data), size_(size), source_(std::move(source)) {
    for (const auto& s : sections) {
      Section sec;
      sec.offset = s.at("offset").get<size_t>();
      sec.shape = s.at("shape").get<std::vector<size_t>>();
      sections_[s.at("name").get<std::string>()] = sec;
    }
  }

  bool has(const std::string& name) const {
    return sections_.count(name) > 0;
  }

  /// Values of a section whose shape must equal `shape`.
  std::vector<double> read(const std::string& name, const std::vector<size_t>& shape) const {
    const auto it = sections_.find(name);
    require(it != sections_.end(), source_ + ": missing payload section '" + name + "'");
    const Section& sec = it->second;
    require(
        sec.shape == shape,
        source_ + ": section '" + name + "' has shape " + shapeString(sec.shape) + ", expected " + shapeString(shape));
    size_t count = 1;
    for (size_t s : shape) {
      count *= s;
    }
    const size_t bytes = 4 * count;
    require(
        sec.offset <= size_ && bytes <= size_ - sec.offset,
        source_ + ": truncated payload in section '" + name + "' (needs bytes " + std::to_string(sec.offset) + ".." +
            std::to_string(sec.offset + bytes) + ", payload has " + std::to_string(size_) + ")");
    std::vector<double> out(count);
    const auto* p = reinterpret_cast<const unsigned char*>(data_ + sec.offset);
    for (size_t i = 0; i < count; ++i) {
      const uint32_t u = uint32_t(p[4 * i]) | (uint32_t(p[4 * i + 1]) << 8) | (uint32_t(p[4 * i + 2]) << 16) |
          (uint32_t(p[4 * i + 3]) << 24);
      out[i] = double(std::bit_cast<float>(u));
    }
    return out;
  }

 private:
  struct Section {
    size_t offset = 0;
    std::vector<size_t> shape;
  };
  static std::string shapeString(const std::vector<size_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      out += (i ? "," : "") + std::to_string(s[i]);
    }
    return out + "]";
  }

  const char* data_;
  size_t size_;
  std::string source_;
  std::map<std::string, Section> sections_;
};

size_t asIndex(double v, size_t limit, const std::string& what) {
  require(v >= 0.0 && v == std::floor(v) && v < double(limit), what + " holds an invalid index");
  return size_t(v);
}

void writeBasis(PayloadWriter& payload, Json& header, const std::string& key, const BlendshapeBasis& b) {
  Json j;
  j["count"] = b.size();
  j["names"] = b.names;
  header[key] = j;
  if (b.size() > 0) {
    payload.addBuffer(key + "_deltas", {b.size(), size_t(b.deltas.rows())}, b.deltas.data());
    if (b.stddev.size() > 0) {
      payload.addBuffer(key + "_stddev", {b.size()}, b.stddev.data());
    }
  }
}

BlendshapeBasis readBasis(const PayloadReader& payload, const Json& header, const std::string& key, size_t nv) {
  BlendshapeBasis b;
  if (!header.contains(key)) {
    b.deltas.resize(Eigen::Index(3 * nv), 0);
    return b;
  }
  const auto& j = header.at(key);
  const size_t n = j.at("count").get<size_t>();
  if (j.contains("names")) {
    b.names = j.at("names").get<std::vector<std::string>>();
  }
  b.deltas.resize(Eigen::Index(3 * nv), Eigen::Index(n));
  if (n > 0) {
    const auto d = payload.read(key + "_deltas", {n, 3 * nv});
    std::copy(d.begin(), d.end(), b.deltas.data());
    if (payload.has(key + "_stddev")) {
      const auto s = payload.read(key + "_stddev", {n});
      b.stddev = Eigen::Map<const VecX>(s.data(), Eigen::Index(n));
    }
  }
  return b;
}

} // namespace

std::string serializeRig(const RigModel& model) {
  model.validate();
  const size_t nv = model.vertexCount();
  require(nv < (size_t(1) << 24), "save rig: vertex count exceeds float32 index range");
  Json header;
  PayloadWriter payload;
  header["format"] = "rigkit";
  header["version"] = kRigFormatVersion;
  header["vertex_count"] = nv;
  header["triangle_count"] = model.topology.triangles.size();

  Json joints = Json::array();
  for (const auto& j : model.skeleton.joints()) {
    Json jj;
    jj["name"] = j.name;
    jj["parent"] = j.parent ? Json(*j.parent) : Json(nullptr);
    jj["offset"] = {j.offset.x(), j.offset.y(), j.offset.z()};
    jj["prerotation_deg"] = {
        toDegrees(j.prerotation.rx), toDegrees(j.prerotation.ry), toDegrees(j.prerotation.rz)};
    joints.push_back(jj);
  }
  header["skeleton"] = {{"joints", joints}};

  const auto& pt = model.parameterTransform;
  Json params = Json::array();
  for (size_t i = 0; i < pt.parameterCount(); ++i) {
    Json p;
    p["name"] = pt.names()[i];
    p["kind"] = pt.isSkeleton(i) ? "skeleton" : "pose";
    if (pt.limits()[i]) {
      p["limit"] = {pt.limits()[i]->lower, pt.limits()[i]->upper};
    }
    params.push_back(p);
  }
  header["parameters"] = params;
  Json triplets = Json::array();
  for (const auto& e : pt.entries()) {
    triplets.push_back({e.row, e.col, e.weight});
  }
  header["parameter_transform"] = triplets;

  const size_t k = model.skinWeights.maxInfluences;
  header["skin"] = {{"max_influences", k}};

  if (model.skeletonBasis) {
    const MatX& b = *model.skeletonBasis;
    header["skeleton_basis"] = {{"coefficients", b.cols()}};
  }
  if (!model.correctives.empty()) {
    const auto& first = model.correctives.joints.front().mlp;
    Json c;
    c["activation"] = first.activation == Activation::Tanh ? "tanh" : "leaky_relu";
    c["leaky_slope"] = first.leakySlope;
    Json groups = Json::array();
    for (const auto& jc : model.correctives.joints) {
      require(
          jc.mlp.activation == first.activation && jc.mlp.leakySlope == first.leakySlope,
          "save rig: corrective groups must share one activation");
      Json g;
      g["joint"] = jc.joint;
      Json n = Json::array();
      for (const auto& a : jc.neighborhood) {
        n.push_back(a ? long(*a) : -1L);
      }
      g["neighborhood"] = n;
      Json layers = Json::array();
      for (const auto& l : jc.mlp.layers) {
        layers.push_back({l.rows(), l.cols()});
      }
      g["layers"] = layers;
      groups.push_back(g);
    }
    c["groups"] = groups;
    header["correctives"] = c;
  }
  Json lods = Json::array();
  for (const auto& l : model.lods) {
    lods.push_back({{"name", l.name}, {"vertex_count", l.vertexCount}});
  }
  header["lods"] = lods;

  // Payload
  payload.addBuffer("template", {nv, 3}, model.restPositions.data());
  const auto& tris = model.topology.triangles;
  payload.add("faces", {tris.size(), 3}, [&](size_t i) { return double(tris[i / 3][i % 3]); });
  writeBasis(payload, header, "identity", model.identity);
  writeBasis(payload, header, "expression", model.expression);
  const auto& sw = model.skinWeights.vertices;
  payload.add("skin_joints", {nv, k}, [&](size_t i) {
    const auto& v = sw[i / k];
    return i % k < v.size() ? double(v[i % k].joint) : 0.0;
  });
  payload.add("skin_weights", {nv, k}, [&](size_t i) {
    const auto& v = sw[i / k];
    return i % k < v.size() ? v[i % k].weight : 0.0;
  });
  if (model.skeletonBasis) {
    const MatX& b = *model.skeletonBasis;
    payload.add("skeleton_basis", {size_t(b.rows()), size_t(b.cols())}, [&](size_t i) {
      return b(Eigen::Index(i / size_t(b.cols())), Eigen::Index(i % size_t(b.cols())));
    });
  }
  for (size_t g = 0; g < model.correctives.joints.size(); ++g) {
    const auto& jc = model.correctives.joints[g];
    const std::string prefix = "corrective_" + std::to_string(g) + "_";
    for (size_t l = 0; l < jc.mlp.layers.size(); ++l) {
      const MatX& w = jc.mlp.layers[l];
      payload.add(prefix + "layer_" + std::to_string(l), {size_t(w.rows()), size_t(w.cols())}, [&](size_t i) {
        return w(Eigen::Index(i / size_t(w.cols())), Eigen::Index(i % size_t(w.cols())));
      });
    }
    payload.addBuffer(prefix + "mask", {nv}, jc.mask.data());
    payload.addBuffer(prefix + "weights", {3 * nv, jc.embeddingSize()}, jc.weights.data());
  }
  header["sections"] = payload.sections();
  for (const auto& [key, raw] : model.extras) {
    if (!header.contains(key)) {
      header[key] = Json::parse(raw);
    }
  }
  const std::string text = header.dump(1);
  std::string out(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  for (int b = 0; b < 8; ++b) {
    out.push_back(char((len >> (8 * b)) & 0xffu));
  }
  out += text;
  out += payload.bytes();
  return out;
}

RigModel deserializeRig(const std::string& bytes, const std::string& source, std::vector<std::string>* warnings) {
  require(
      bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
      source + ": not a rig file (bad magic)");
  uint64_t len = 0;
  for (int b = 0; b < 8; ++b) {
    len |= uint64_t(static_cast<unsigned char>(bytes[8 + size_t(b)])) << (8 * b);
  }
  require(len <= bytes.size() - 16, source + ": truncated header");
  Json header;
  try {
    header = Json::parse(bytes.begin() + 16, bytes.begin() + 16 + long(len));
  } catch (const Json::exception& e) {
    throw DataError(source + ": malformed header: " + e.what());
  }
  const char* payloadData = bytes.data() + 16 + len;
  const size_t payloadSize = bytes.size() - 16 - size_t(len);

  try {
    require(header.contains("version"), source + ": header has no version field");
    const int version = header.at("version").get<int>();
    require(
        version == kRigFormatVersion,
        source + ": unsupported rig format version " + std::to_string(version) + " (expected " +
            std::to_string(kRigFormatVersion) + ")");
    const PayloadReader payload(payloadData, payloadSize, header.at("sections"), source);

    RigModel model;
    const size_t nv = header.at("vertex_count").get<size_t>();
    const size_t nt = header.at("triangle_count").get<size_t>();

    // Skeleton, re-sorted so parents precede children.
    std::vector<Joint> joints;
    for (const auto& jj : header.at("skeleton").at("joints")) {
      Joint j;
      j.name = jj.at("name").get<std::string>();
      if (!jj.at("parent").is_null()) {
        j.parent = jj.at("parent").get<size_t>();
      }
      const auto o = jj.at("offset").get<std::vector<double>>();
      const auto r = jj.at("prerotation_deg").get<std::vector<double>>();
      require(o.size() == 3 && r.size() == 3, source + ": joint '" + j.name + "' offset/prerotation must have 3 values");
      j.offset = Vec3(o[0], o[1], o[2]);
      j.prerotation = {toRadians(r[0]), toRadians(r[1]), toRadians(r[2])};
      joints.push_back(std::move(j));
    }
    std::vector<size_t> remap;
    model.skeleton = Skeleton::fromUnordered(std::move(joints), &remap);
    const size_t nj = model.skeleton.jointCount();

    std::vector<std::string> names;
    std::vector<bool> isSkeleton;
    std::vector<std::optional<ParameterLimit>> limits;
    for (const auto& p : header.at("parameters")) {
      names.push_back(p.at("name").get<std::string>());
      const auto kind = p.at("kind").get<std::string>();
      require(kind == "pose" || kind == "skeleton", source + ": parameter '" + names.back() + "' has unknown kind");
      isSkeleton.push_back(kind == "skeleton");
      if (p.contains("limit")) {
        const auto l = p.at("limit").get<std::vector<double>>();
        require(l.size() == 2, source + ": parameter '" + names.back() + "' limit must be [lower, upper]");
        limits.push_back(ParameterLimit{l[0], l[1]});
      } else {
        limits.emplace_back();
      }
    }
    std::vector<ParameterTransform::Entry> entries;
    for (const auto& t : header.at("parameter_transform")) {
      ParameterTransform::Entry e;
      e.row = t.at(0).get<size_t>();
      e.col = t.at(1).get<size_t>();
      e.weight = t.at(2).get<double>();
      require(e.row < nj * kParametersPerJoint, source + ": parameter transform row out of range");
      e.row = remap[e.row / kParametersPerJoint] * kParametersPerJoint + e.row % kParametersPerJoint;
      entries.push_back(e);
    }
    model.parameterTransform =
        ParameterTransform(std::move(names), nj * kParametersPerJoint, std::move(entries), isSkeleton, limits);

    const auto tmpl = payload.read("template", {nv, 3});
    model.restPositions = Eigen::Map<const VecX>(tmpl.data(), Eigen::Index(tmpl.size()));
    model.topology.vertexCount = nv;
    const auto faces = payload.read("faces", {nt, 3});
    model.topology.triangles.resize(nt);
    for (size_t i = 0; i < nt; ++i) {
      for (size_t m = 0; m < 3; ++m) {
        model.topology.triangles[i][m] = uint32_t(asIndex(faces[3 * i + m], nv, source + ": faces section"));
      }
    }

    model.identity = readBasis(payload, header, "identity", nv);
    model.expression = readBasis(payload, header, "expression", nv);

    const size_t k = header.at("skin").at("max_influences").get<size_t>();
    require(k >= 1, source + ": skin max_influences must be >= 1");
    size_t stored = k;
    for (const auto& s : header.at("sections")) {
      if (s.at("name") == "skin_joints") {
        const auto shape = s.at("shape").get<std::vector<size_t>>();
        require(shape.size() == 2, source + ": section 'skin_joints' must be 2-D");
        stored = shape[1];
      }
    }
    const auto sj = payload.read("skin_joints", {nv, stored});
    const auto sw = payload.read("skin_weights", {nv, stored});
    std::vector<std::vector<Influence>> raw(nv);
    bool overCap = false;
    for (size_t v = 0; v < nv; ++v) {
      for (size_t m = 0; m < stored; ++m) {
        const double w = sw[v * stored + m];
        if (w == 0.0) {
          continue;
        }
        const size_t j = asIndex(sj[v * stored + m], nj, source + ": skin_joints section");
        raw[v].push_back({uint32_t(remap[j]), w});
      }
      overCap = overCap || raw[v].size() > k;
    }
    if (overCap) {
      size_t truncated = 0;
      model.skinWeights = capInfluences(std::move(raw), k, &truncated);
      if (warnings) {
        warnings->push_back(
            source + ": " + std::to_string(truncated) + " vertices had more than " + std::to_string(k) +
            " skin influences; kept the largest and renormalized");
      }
    } else {
      model.skinWeights.maxInfluences = k;
      model.skinWeights.vertices = std::move(raw);
    }

    if (header.contains("skeleton_basis")) {
      const size_t nc = header.at("skeleton_basis").at("coefficients").get<size_t>();
      const size_t ns = model.parameterTransform.skeletonParameters().size();
      const auto b = payload.read("skeleton_basis", {ns, nc});
      MatX basis(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(nc));
      for (size_t i = 0; i < b.size(); ++i) {
        basis(Eigen::Index(i / nc), Eigen::Index(i % nc)) = b[i];
      }
      model.skeletonBasis = std::move(basis);
    }

    if (header.contains("correctives")) {
      const auto& c = header.at("correctives");
      const auto act = c.at("activation").get<std::string>();
      require(act == "leaky_relu" || act == "tanh", source + ": unknown corrective activation '" + act + "'");
      const double slope = c.at("leaky_slope").get<double>();
      size_t g = 0;
      for (const auto& gj : c.at("groups")) {
        JointCorrective jc;
        jc.joint = remap.at(gj.at("joint").get<size_t>());
        for (const auto& a : gj.at("neighborhood")) {
          const long v = a.get<long>();
          jc.neighborhood.push_back(v < 0 ? std::nullopt : std::optional<size_t>(remap.at(size_t(v))));
        }
        jc.mlp.activation = act == "tanh" ? Activation::Tanh : Activation::LeakyRelu;
        jc.mlp.leakySlope = slope;
        const std::string prefix = "corrective_" + std::to_string(g) + "_";
        size_t l = 0;
        for (const auto& shape : gj.at("layers")) {
          const size_t rows = shape.at(0).get<size_t>();
          const size_t cols = shape.at(1).get<size_t>();
          const auto w = payload.read(prefix + "layer_" + std::to_string(l), {rows, cols});
          MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
          for (size_t i = 0; i < w.size(); ++i) {
            m(Eigen::Index(i / cols), Eigen::Index(i % cols)) = w[i];
          }
          jc.mlp.layers.push_back(std::move(m));
          ++l;
        }
        require(!jc.mlp.layers.empty(), source + ": corrective group " + std::to_string(g) + " has no layers");
        const auto mask = payload.read(prefix + "mask", {nv});
        jc.mask = Eigen::Map<const VecX>(mask.data(), Eigen::Index(nv));
        const size_t emb = jc.mlp.outputSize();
        const auto w = payload.read(prefix + "weights", {3 * nv, emb});
        jc.weights = Eigen::Map<const RowMatX>(w.data(), Eigen::Index(3 * nv), Eigen::Index(emb));
        model.correctives.joints.push_back(std::move(jc));
        ++g;
      }
    }

    if (header.contains("lods")) {
      for (const auto& l : header.at("lods")) {
        model.lods.push_back({l.at("name").get<std::string>(), l.at("vertex_count").get<size_t>()});
      }
    }
    for (const auto& [key, value] : header.items()) {
      if (!kKnownKeys.count(key)) {
        model.extras[key] = value.dump();
      }
    }
    model.finalize();
    return model;
  } catch (const Json::exception& e) {
    throw DataError(source + ": malformed header field: " + e.what());
  }
}

void saveRig(const RigModel& model, const std::string& path) {
  const std::string bytes = serializeRig(model);
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot open '" + path + "' for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  require(bool(out), "failed writing '" + path + "'");
}

RigModel loadRig(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open rig '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserializeRig(ss.str(), path, warnings);
}

} // namespace rigkit
