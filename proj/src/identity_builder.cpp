#include "rigkit/identity_builder.hpp"

#include "rigkit/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace rigkit {

void SymmetryMap::validate() const {
  const size_t n = permutation.size();
  for (size_t i = 0; i < n; ++i) {
    require(permutation[i] < n, "symmetry map: index out of range at vertex " + std::to_string(i));
    require(
        permutation[permutation[i]] == i,
        "symmetry map is not an involution at vertex " + std::to_string(i));
  }
}

SymmetryMap SymmetryMap::fromTemplate(const VecX& positions, double tolerance) {
  require(tolerance > 0.0, "symmetry map: tolerance must be positive");
  const size_t n = size_t(positions.size() / 3);
  auto cellOf = [&](const Vec3& p) {
    return Eigen::Vector3i(
        int(std::floor(p.x() / tolerance)), int(std::floor(p.y() / tolerance)), int(std::floor(p.z() / tolerance)));
  };
  auto key = [](const Eigen::Vector3i& c) {
    return (uint64_t(uint32_t(c.x())) * 73856093ULL) ^ (uint64_t(uint32_t(c.y())) * 19349663ULL) ^
        (uint64_t(uint32_t(c.z())) * 83492791ULL);
  };
  std::unordered_multimap<uint64_t, uint32_t> grid;
  for (size_t i = 0; i < n; ++i) {
    grid.emplace(key(cellOf(vertexAt(positions, i))), uint32_t(i));
  }

  SymmetryMap map;
  map.permutation.resize(n);
  for (size_t i = 0; i < n; ++i) {
    Vec3 r = vertexAt(positions, i);
    r.x() = -r.x();
    const Eigen::Vector3i c = cellOf(r);
    double best = tolerance * tolerance;
    long match = -1;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto range = grid.equal_range(key(c + Eigen::Vector3i(dx, dy, dz)));
          for (auto it = range.first; it != range.second; ++it) {
            const double d = (vertexAt(positions, it->second) - r).squaredNorm();
            if (d <= best) {
              best = d;
              match = it->second;
            }
          }
        }
      }
    }
    require(match >= 0, "symmetry map: vertex " + std::to_string(i) + " has no mirror partner within tolerance");
    map.permutation[i] = uint32_t(match);
  }
  map.validate();
  return map;
}

VecX mirrorField(const VecX& field, const SymmetryMap& symmetry) {
  require(size_t(field.size()) == 3 * symmetry.size(), "mirror: field length != 3 x symmetry map size");
  VecX out(field.size());
  for (size_t i = 0; i < symmetry.size(); ++i) {
    Vec3 v = vertexAt(field, symmetry.permutation[i]);
    v.x() = -v.x();
    out.segment<3>(Eigen::Index(3 * i)) = v;
  }
  return out;
}

ShapeSet mirrorAugment(const ShapeSet& shapes, const SymmetryMap& symmetry) {
  symmetry.validate();
  ShapeSet out = shapes;
  for (size_t n = 0; n < shapes.shapes.size(); ++n) {
    out.shapes.push_back(mirrorField(shapes.shapes[n], symmetry));
    if (n < shapes.subjects.size()) {
      out.subjects.push_back(shapes.subjects[n] + "_mirror");
    }
  }
  return out;
}

VecX MaskedPca::standardDeviations() const {
  if (sampleCount < 2) {
    return VecX::Zero(singularValues.size());
  }
  return singularValues / std::sqrt(double(sampleCount - 1));
}

MaskedPca maskedPca(const ShapeSet& shapes, const RegionMask& mask, size_t count, std::vector<std::string>* warnings) {
  const size_t n = shapes.shapes.size();
  require(n >= 2, "masked PCA: at least two shapes are required");
  const Eigen::Index dim = shapes.shapes.front().size();
  require(dim % 3 == 0 && mask.weights.size() * 3 == dim, "masked PCA: mask length != vertex count");
  require(
      (mask.weights.array() >= 0.0).all() && (mask.weights.array() <= 1.0).all(),
      "masked PCA: region '" + mask.name + "' has weights outside [0, 1]");
  require(
      count <= std::min<size_t>(n - 1, size_t(dim)),
      "masked PCA: " + std::to_string(count) + " components requested from " + std::to_string(n) + " shapes");

  MatX data(Eigen::Index(n), dim);
  for (size_t s = 0; s < n; ++s) {
    require(shapes.shapes[s].size() == dim, "masked PCA: shape " + std::to_string(s) + " has a different length");
    for (Eigen::Index v = 0; v < mask.weights.size(); ++v) {
      data.row(Eigen::Index(s)).segment<3>(3 * v) = mask.weights[v] * shapes.shapes[s].segment<3>(3 * v).transpose();
    }
  }
  MaskedPca out;
  out.region = mask.name;
  out.mask = mask.weights;
  out.sampleCount = n;
  out.mean = data.colwise().mean().transpose();
  data.rowwise() -= out.mean.transpose();

  Eigen::BDCSVD<MatX> svd(data, Eigen::ComputeThinV);
  out.components = svd.matrixV().leftCols(Eigen::Index(count));
  out.singularValues = svd.singularValues().head(Eigen::Index(count));
  if (warnings) {
    for (Eigen::Index k = 0; k < out.singularValues.size(); ++k) {
      if (out.singularValues[k] < 1e-10) {
        warnings->push_back(
            "masked PCA: region '" + mask.name + "' is rank deficient from component " + std::to_string(k));
        break;
      }
    }
  }
  return out;
}

std::vector<size_t> detectAsymmetricComponents(const MatX& components, const SymmetryMap& symmetry, double threshold) {
  std::vector<size_t> flagged;
  for (Eigen::Index k = 0; k < components.cols(); ++k) {
    const VecX c = components.col(k);
    const double norm = c.norm();
    if (norm == 0.0) {
      continue;
    }
    if ((c + mirrorField(c, symmetry)).norm() / norm < threshold) {
      flagged.push_back(size_t(k));
    }
  }
  return flagged;
}

IdentitySpace assembleIdentitySpace(const std::vector<RegionSelection>& regions, std::vector<std::string>* warnings) {
  require(!regions.empty(), "identity assembly: no regions");
  const Eigen::Index dim = regions.front().pca.mean.size();
  VecX maskSum = VecX::Zero(regions.front().pca.mask.size());
  IdentitySpace out;
  out.mean = VecX::Zero(dim);

  std::vector<VecX> columns;
  std::vector<double> stddev;
  for (const auto& r : regions) {
    require(r.pca.mean.size() == dim, "identity assembly: region '" + r.pca.region + "' has a different vertex count");
    maskSum += r.pca.mask;
    out.mean += r.pca.mean;
    const VecX sd = r.pca.standardDeviations();
    size_t taken = 0;
    for (Eigen::Index k = 0; k < r.pca.components.cols() && taken < r.count; ++k) {
      if (std::find(r.removed.begin(), r.removed.end(), size_t(k)) != r.removed.end()) {
        continue;
      }
      columns.push_back(r.pca.components.col(k));
      stddev.push_back(sd[k]);
      out.regions.push_back(r.pca.region);
      out.basis.names.push_back(r.pca.region + "_" + std::to_string(taken));
      ++taken;
    }
    if (taken < r.count && warnings) {
      warnings->push_back(
          "identity assembly: region '" + r.pca.region + "' provides " + std::to_string(taken) + " of " +
          std::to_string(r.count) + " requested components");
    }
  }
  const double deviation = (maskSum.array() - 1.0).abs().maxCoeff();
  require(
      deviation <= 1e-6,
      "identity assembly: region masks do not sum to one (max deviation " + std::to_string(deviation) + ")");

  out.basis.deltas.resize(dim, Eigen::Index(columns.size()));
  out.basis.stddev.resize(Eigen::Index(columns.size()));
  for (size_t k = 0; k < columns.size(); ++k) {
    out.basis.deltas.col(Eigen::Index(k)) = columns[k];
    out.basis.stddev[Eigen::Index(k)] = stddev[k];
  }
  return out;
}

} // namespace rigkit
