#pragma once

#include "rigkit/body_model.hpp"

#include <string>
#include <vector>

namespace rigkit {

/// Rig container version written by saveRig and accepted by loadRig.
inline constexpr int kRigFormatVersion = 1;

/// Layout: the 8-byte magic "RIGKIT\0\n", a little-endian uint64 header
/// length, a JSON header, then a payload of little-endian float32 values.
/// Header sections give (name, byte offset into the payload, shape).
/// Skin weights with more influences than the header cap are truncated and
/// renormalized on load, with a note appended to `warnings`.
void saveRig(const RigModel& model, const std::string& path);
RigModel loadRig(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// In-memory versions of the above.
std::string serializeRig(const RigModel& model);
RigModel deserializeRig(
    const std::string& bytes,
    const std::string& source = "<memory>",
    std::vector<std::string>* warnings = nullptr);

struct Mesh {
  VecX positions;
  MeshTopology topology;
};

/// OBJ (v/f records) or PLY (ASCII or binary), chosen by extension.
/// Polygons are fan-triangulated, with a note appended to `warnings`.
Mesh loadMesh(const std::string& path, std::vector<std::string>* warnings = nullptr);
/// OBJ text or binary little-endian PLY, chosen by extension.
void saveMesh(const std::string& path, const Mesh& mesh);
/// Vertices of an OBJ or PLY file as a point cloud.
std::vector<Vec3> loadPoints(const std::string& path);

Mesh readObj(std::istream& in, const std::string& source, std::vector<std::string>* warnings = nullptr);
void writeObj(std::ostream& out, const Mesh& mesh);
Mesh readPly(std::istream& in, const std::string& source, std::vector<std::string>* warnings = nullptr);
void writePly(std::ostream& out, const Mesh& mesh);

} // namespace rigkit
