#include "rigkit/skin_weights.hpp"

#include "rigkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rigkit {

uint32_t SkinWeights::dominantJoint(size_t vertex) const {
  const auto& infl = vertices.at(vertex);
  require(!infl.empty(), "skin weights: vertex " + std::to_string(vertex) + " has no influences");
  const Influence* best = &infl.front();
  for (const auto& i : infl) {
    if (i.weight > best->weight || (i.weight == best->weight && i.joint < best->joint)) {
      best = &i;
    }
  }
  return best->joint;
}

void SkinWeights::validate(size_t jointCount) const {
  for (size_t v = 0; v < vertices.size(); ++v) {
    const auto& infl = vertices[v];
    const std::string where = "skin weights: vertex " + std::to_string(v);
    require(!infl.empty(), where + " has zero total weight");
    require(infl.size() <= maxInfluences, where + " exceeds the influence cap");
    double sum = 0.0;
    for (const auto& i : infl) {
      require(i.joint < jointCount, where + " references joint " + std::to_string(i.joint));
      require(std::isfinite(i.weight) && i.weight >= 0.0, where + " has a negative or non-finite weight");
      sum += i.weight;
    }
    require(std::abs(sum - 1.0) <= 1e-6, where + " weights sum to " + std::to_string(sum) + " (expected 1)");
  }
}

SkinWeights capInfluences(std::vector<std::vector<Influence>> raw, size_t maxInfluences, size_t* truncated) {
  require(maxInfluences > 0, "skin weights: influence cap must be positive");
  SkinWeights result;
  result.maxInfluences = maxInfluences;
  size_t cut = 0;
  for (auto& infl : raw) {
    std::erase_if(infl, [](const Influence& i) { return !(i.weight > 0.0); });
    std::stable_sort(infl.begin(), infl.end(), [](const Influence& a, const Influence& b) {
      return a.weight > b.weight;
    });
    if (infl.size() > maxInfluences) {
      infl.resize(maxInfluences);
      ++cut;
    }
    double sum = 0.0;
    for (const auto& i : infl) {
      sum += i.weight;
    }
    if (sum > 0.0) {
      for (auto& i : infl) {
        i.weight /= sum;
      }
    }
    result.vertices.push_back(std::move(infl));
  }
  if (truncated) {
    *truncated = cut;
  }
  return result;
}

} // namespace rigkit
