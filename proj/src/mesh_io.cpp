#include "rigkit/error.hpp"
#include "rigkit/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rigkit {

namespace {

std::string lowerExtension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext;
}

std::string formatDouble(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void addPolygon(
    Mesh& mesh,
    const std::vector<uint32_t>& poly,
    size_t& polygons,
    const std::string& where) {
  require(poly.size() >= 3, where + ": face with fewer than 3 vertices");
  if (poly.size() > 3) {
    ++polygons;
  }
  for (const auto& t : triangulatePolygon(poly)) {
    mesh.topology.triangles.push_back(t);
  }
}

void finishMesh(Mesh& mesh, std::vector<double>& coords, size_t polygons, const std::string& source, std::vector<std::string>* warnings) {
  mesh.positions = Eigen::Map<const VecX>(coords.data(), Eigen::Index(coords.size()));
  mesh.topology.vertexCount = coords.size() / 3;
  mesh.topology.validate();
  if (polygons > 0 && warnings) {
    warnings->push_back(source + ": " + std::to_string(polygons) + " non-triangular faces fan-triangulated");
  }
}

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parsePlyType(const std::string& t, const std::string& where) {
  if (t == "char" || t == "int8") return PlyType::Int8;
  if (t == "uchar" || t == "uint8") return PlyType::UInt8;
  if (t == "short" || t == "int16") return PlyType::Int16;
  if (t == "ushort" || t == "uint16") return PlyType::UInt16;
  if (t == "int" || t == "int32") return PlyType::Int32;
  if (t == "uint" || t == "uint32") return PlyType::UInt32;
  if (t == "float" || t == "float32") return PlyType::Float32;
  if (t == "double" || t == "float64") return PlyType::Float64;
  throw DataError(where + ": unknown PLY property type '" + t + "'");
}

size_t plySize(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8:
      return 1;
    case PlyType::Int16:
    case PlyType::UInt16:
      return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32:
      return 4;
    case PlyType::Float64:
    default:
      return 8;
  }
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool isList = false;
  PlyType countType = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  size_t count = 0;
  std::vector<PlyProperty> properties;
};

class PlyValueReader {
 public:
  PlyValueReader(std::istream& in, bool ascii, bool bigEndian, std::string source, size_t headerLines)
      : in_(in), ascii_(ascii), bigEndian_(bigEndian), source_(std::move(source)), lineNo_(headerLines) {}

  double read(PlyType t) {
    if (ascii_) {
      if (!(tokens_ >> token_)) {
        nextLine();
        return read(t);
      }
      double v = 0.0;
      const auto r = std::from_chars(token_.data(), token_.data() + token_.size(), v);
      require(r.ec == std::errc() && r.ptr == token_.data() + token_.size(), where() + ": bad number '" + token_ + "'");
      return v;
    }
    unsigned char buf[8];
    const size_t n = plySize(t);
    in_.read(reinterpret_cast<char*>(buf), std::streamsize(n));
    require(size_t(in_.gcount()) == n, source_ + ": truncated binary PLY body");
    if (bigEndian_) {
      std::reverse(buf, buf + n);
    }
    switch (t) {
      case PlyType::Int8:
        return double(int8_t(buf[0]));
      case PlyType::UInt8:
        return double(buf[0]);
      case PlyType::Int16: {
        int16_t v;
        std::memcpy(&v, buf, 2);
        return v;
      }
      case PlyType::UInt16: {
        uint16_t v;
        std::memcpy(&v, buf, 2);
        return v;
      }
      case PlyType::Int32: {
        int32_t v;
        std::memcpy(&v, buf, 4);
        return v;
      }
      case PlyType::UInt32: {
        uint32_t v;
        std::memcpy(&v, buf, 4);
        return v;
      }
      case PlyType::Float32: {
        float v;
        std::memcpy(&v, buf, 4);
        return v;
      }
      case PlyType::Float64:
      default: {
        double v;
        std::memcpy(&v, buf, 8);
        return v;
      }
    }
  }

  void endRecord() {
    if (ascii_) {
      std::string rest;
      require(!(tokens_ >> rest), where() + ": unexpected extra values");
      tokens_ = std::istringstream();
    }
  }

 private:
  void nextLine() {
    require(bool(std::getline(in_, line_)), source_ + ": unexpected end of PLY body");
    ++lineNo_;
    tokens_ = std::istringstream(line_);
  }
  std::string where() const {
    return source_ + ":" + std::to_string(lineNo_);
  }

  std::istream& in_;
  bool ascii_;
  bool bigEndian_;
  std::string source_;
  std::string line_;
  std::string token_;
  std::istringstream tokens_;
  size_t lineNo_ = 0;
};

} // namespace

Mesh readObj(std::istream& in, const std::string& source, std::vector<std::string>* warnings) {
  Mesh mesh;
  std::vector<double> coords;
  size_t polygons = 0;
  std::string line;
  size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string where = source + ":" + std::to_string(lineNo);
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') {
      continue;
    }
    if (tag == "v") {
      double xyz[3];
      for (double& c : xyz) {
        std::string tok;
        require(bool(ss >> tok), where + ": vertex needs 3 coordinates");
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), c);
        require(r.ec == std::errc() && r.ptr == tok.data() + tok.size(), where + ": bad coordinate '" + tok + "'");
      }
      coords.insert(coords.end(), xyz, xyz + 3);
    } else if (tag == "f") {
      std::vector<uint32_t> poly;
      std::string tok;
      const long nv = long(coords.size() / 3);
      while (ss >> tok) {
        const std::string idx = tok.substr(0, tok.find('/'));
        long v = 0;
        const auto r = std::from_chars(idx.data(), idx.data() + idx.size(), v);
        require(r.ec == std::errc() && r.ptr == idx.data() + idx.size() && v != 0, where + ": bad face index '" + tok + "'");
        v = v > 0 ? v - 1 : nv + v;
        require(v >= 0 && v < nv, where + ": face index " + tok + " out of range");
        poly.push_back(uint32_t(v));
      }
      addPolygon(mesh, poly, polygons, where);
    }
  }
  finishMesh(mesh, coords, polygons, source, warnings);
  return mesh;
}

void writeObj(std::ostream& out, const Mesh& mesh) {
  const size_t nv = size_t(mesh.positions.size() / 3);
  for (size_t i = 0; i < nv; ++i) {
    out << "v " << formatDouble(mesh.positions[Eigen::Index(3 * i)]) << ' '
        << formatDouble(mesh.positions[Eigen::Index(3 * i + 1)]) << ' '
        << formatDouble(mesh.positions[Eigen::Index(3 * i + 2)]) << '\n';
  }
  for (const auto& t : mesh.topology.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

Mesh readPly(std::istream& in, const std::string& source, std::vector<std::string>* warnings) {
  std::string line;
  size_t lineNo = 0;
  auto next = [&]() {
    require(bool(std::getline(in, line)), source + ": unexpected end of PLY header");
    ++lineNo;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
  };
  next();
  require(line == "ply", source + ":1: missing 'ply' magic");
  bool ascii = false;
  bool bigEndian = false;
  std::vector<PlyElement> elements;
  for (;;) {
    next();
    const std::string where = source + ":" + std::to_string(lineNo);
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "end_header") {
      break;
    }
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      require(
          fmt == "ascii" || fmt == "binary_little_endian" || fmt == "binary_big_endian",
          where + ": unsupported PLY format '" + fmt + "'");
      ascii = fmt == "ascii";
      bigEndian = fmt == "binary_big_endian";
    } else if (tag == "element") {
      PlyElement e;
      require(bool(ss >> e.name >> e.count), where + ": malformed element line");
      elements.push_back(e);
    } else if (tag == "property") {
      require(!elements.empty(), where + ": property before any element");
      PlyProperty p;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string countType;
        ss >> countType >> type;
        p.isList = true;
        p.countType = parsePlyType(countType, where);
      }
      p.type = parsePlyType(type, where);
      require(bool(ss >> p.name), where + ": property without a name");
      elements.back().properties.push_back(p);
    }
  }

  Mesh mesh;
  std::vector<double> coords;
  size_t polygons = 0;
  PlyValueReader reader(in, ascii, bigEndian, source, lineNo);
  for (const auto& e : elements) {
    int ix = -1;
    int iy = -1;
    int iz = -1;
    for (size_t k = 0; k < e.properties.size(); ++k) {
      const auto& n = e.properties[k].name;
      ix = n == "x" ? int(k) : ix;
      iy = n == "y" ? int(k) : iy;
      iz = n == "z" ? int(k) : iz;
    }
    const bool isVertex = e.name == "vertex";
    const bool isFace = e.name == "face";
    if (isVertex) {
      require(ix >= 0 && iy >= 0 && iz >= 0, source + ": vertex element lacks x/y/z");
      coords.reserve(3 * e.count);
    }
    std::vector<double> scalars(e.properties.size());
    for (size_t r = 0; r < e.count; ++r) {
      for (size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (!p.isList) {
          scalars[k] = reader.read(p.type);
          continue;
        }
        const double count = reader.read(p.countType);
        require(count >= 0 && count == std::floor(count), source + ": bad list length in element '" + e.name + "'");
        std::vector<uint32_t> poly;
        for (size_t m = 0; m < size_t(count); ++m) {
          const double v = reader.read(p.type);
          poly.push_back(uint32_t(v));
          require(v >= 0 && v == std::floor(v), source + ": bad face index in face " + std::to_string(r));
        }
        if (isFace && (p.name == "vertex_indices" || p.name == "vertex_index")) {
          for (uint32_t v : poly) {
            require(v < coords.size() / 3, source + ": face " + std::to_string(r) + " index out of range");
          }
          addPolygon(mesh, poly, polygons, source + ": face " + std::to_string(r));
        }
      }
      reader.endRecord();
      if (isVertex) {
        coords.push_back(scalars[size_t(ix)]);
        coords.push_back(scalars[size_t(iy)]);
        coords.push_back(scalars[size_t(iz)]);
      }
    }
  }
  finishMesh(mesh, coords, polygons, source, warnings);
  return mesh;
}

void writePly(std::ostream& out, const Mesh& mesh) {
  const size_t nv = size_t(mesh.positions.size() / 3);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << nv << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.topology.triangles.size() << "\nproperty list uchar int vertex_indices\n"
      << "end_header\n";
  auto put32 = [&](uint32_t u) {
    const char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char((u >> 24) & 0xff)};
    out.write(b, 4);
  };
  for (Eigen::Index i = 0; i < mesh.positions.size(); ++i) {
    put32(std::bit_cast<uint32_t>(float(mesh.positions[i])));
  }
  for (const auto& t : mesh.topology.triangles) {
    out.put(char(3));
    for (uint32_t v : t) {
      put32(v);
    }
  }
}

Mesh loadMesh(const std::string& path, std::vector<std::string>* warnings) {
  const std::string ext = lowerExtension(path);
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open mesh '" + path + "'");
  if (ext == "obj") {
    return readObj(in, path, warnings);
  }
  if (ext == "ply") {
    return readPly(in, path, warnings);
  }
  throw DataError("unsupported mesh extension in '" + path + "' (expected .obj or .ply)");
}

void saveMesh(const std::string& path, const Mesh& mesh) {
  const std::string ext = lowerExtension(path);
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot open '" + path + "' for writing");
  if (ext == "obj") {
    writeObj(out, mesh);
  } else if (ext == "ply") {
    writePly(out, mesh);
  } else {
    throw DataError("unsupported mesh extension in '" + path + "' (expected .obj or .ply)");
  }
  require(bool(out), "failed writing '" + path + "'");
}

std::vector<Vec3> loadPoints(const std::string& path) {
  const Mesh mesh = loadMesh(path);
  std::vector<Vec3> points;
  points.reserve(mesh.topology.vertexCount);
  for (size_t i = 0; i < mesh.topology.vertexCount; ++i) {
    points.push_back(vertexAt(mesh.positions, i));
  }
  return points;
}

} // namespace rigkit
