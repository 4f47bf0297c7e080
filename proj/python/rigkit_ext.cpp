#include "rigkit/corrective_training.hpp"
#include "rigkit/error.hpp"
#include "rigkit/fitting.hpp"
#include "rigkit/identity_builder.hpp"
#include "rigkit/io.hpp"
#include "rigkit/lod_transfer.hpp"
#include "rigkit/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace rigkit;

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowTris = Eigen::Matrix<int64_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

RowPoints toRows(const VecX& flat) {
  return Eigen::Map<const RowPoints>(flat.data(), flat.size() / 3, 3);
}

VecX toFlat(const RowPoints& rows) {
  return Eigen::Map<const VecX>(rows.data(), rows.size());
}

std::vector<Vec3> toPoints(const RowPoints& rows) {
  std::vector<Vec3> out(size_t(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out[size_t(i)] = rows.row(i).transpose();
  }
  return out;
}

VecX orZeros(const std::optional<VecX>& v, size_t n, const char* what) {
  if (!v) {
    return VecX::Zero(Eigen::Index(n));
  }
  require(size_t(v->size()) == n, std::string(what) + ": expected " + std::to_string(n) + " values");
  return *v;
}

ModelInputs makeInputs(
    const RigModel& rig,
    const std::optional<VecX>& pose,
    const std::optional<VecX>& identity,
    const std::optional<VecX>& expression) {
  ModelInputs in;
  in.pose = orZeros(pose, rig.parameterCount(), "pose");
  in.identity = orZeros(identity, rig.identity.size(), "identity");
  in.expression = orZeros(expression, rig.expression.size(), "expression");
  return in;
}

MeshTopology toTopology(const RowTris& tris, size_t vertexCount) {
  MeshTopology topo;
  topo.vertexCount = vertexCount;
  for (Eigen::Index i = 0; i < tris.rows(); ++i) {
    topo.triangles.push_back({uint32_t(tris(i, 0)), uint32_t(tris(i, 1)), uint32_t(tris(i, 2))});
  }
  topo.validate();
  return topo;
}

} // namespace

PYBIND11_MODULE(_rigkit, m) {
  m.doc() = "Parametric body rig: evaluation, fitting, corrective training, identity PCA, LOD transfer.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<RigModel>(m, "Rig")
      .def_static("load", [](const std::string& path) { return loadRig(path); }, py::arg("path"))
      .def("save", [](const RigModel& r, const std::string& path) { saveRig(r, path); }, py::arg("path"))
      .def_property_readonly("vertex_count", &RigModel::vertexCount)
      .def_property_readonly("joint_count", &RigModel::jointCount)
      .def_property_readonly("parameter_count", &RigModel::parameterCount)
      .def_property_readonly("identity_count", [](const RigModel& r) { return r.identity.size(); })
      .def_property_readonly("expression_count", [](const RigModel& r) { return r.expression.size(); })
      .def_property_readonly("parameter_names", [](const RigModel& r) { return r.parameterTransform.names(); })
      .def_property_readonly(
          "joint_names",
          [](const RigModel& r) {
            std::vector<std::string> names;
            for (size_t j = 0; j < r.jointCount(); ++j) {
              names.push_back(r.skeleton.joint(j).name);
            }
            return names;
          })
      .def_property_readonly("rest_positions", [](const RigModel& r) { return toRows(r.restPositions); })
      .def_property_readonly(
          "triangles",
          [](const RigModel& r) {
            RowTris t(Eigen::Index(r.topology.triangles.size()), 3);
            for (size_t i = 0; i < r.topology.triangles.size(); ++i) {
              for (size_t k = 0; k < 3; ++k) {
                t(Eigen::Index(i), Eigen::Index(k)) = r.topology.triangles[i][k];
              }
            }
            return t;
          })
      .def(
          "evaluate",
          [](const RigModel& r,
             std::optional<VecX> pose,
             std::optional<VecX> identity,
             std::optional<VecX> expression) { return toRows(evaluate(r, makeInputs(r, pose, identity, expression))); },
          py::arg("pose") = py::none(),
          py::arg("identity") = py::none(),
          py::arg("expression") = py::none(),
          "Posed vertices (V x 3) for the given model parameters and coefficients.")
      .def(
          "joint_positions",
          [](const RigModel& r,
             std::optional<VecX> pose,
             std::optional<VecX> identity,
             std::optional<VecX> expression) {
            const auto joints = jointPositions(r, makeInputs(r, pose, identity, expression));
            RowPoints out(Eigen::Index(joints.size()), 3);
            for (size_t j = 0; j < joints.size(); ++j) {
              out.row(Eigen::Index(j)) = joints[j].transpose();
            }
            return out;
          },
          py::arg("pose") = py::none(),
          py::arg("identity") = py::none(),
          py::arg("expression") = py::none());

  m.def(
      "synthetic_rig",
      [](const std::string& spec) { return generateSyntheticRig(SyntheticRigSpec::fromJson(spec)); },
      py::arg("spec") = "{}",
      "Procedural rig from a JSON spec (layout, rings, identity_components, ...).");

  m.def(
      "fit",
      [](const RigModel& rig,
         const RowPoints& points,
         const std::map<std::string, Vec3>& keypoints,
         const std::string& free,
         size_t iterations,
         double learningRate,
         long identityComponents,
         uint64_t seed,
         std::optional<VecX> initPose) {
        ScanTarget target;
        target.points = toPoints(points);
        target.keypoints = keypoints;
        FitConfig cfg;
        cfg.free = FreeVariables::parse(free);
        cfg.iterations = iterations;
        cfg.learningRate = learningRate;
        cfg.identityComponents = identityComponents;
        cfg.seed = seed;
        ModelInputs init = makeInputs(rig, initPose, std::nullopt, std::nullopt);
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(rig, target, cfg, init);
        }
        py::dict out;
        out["pose"] = r.inputs.pose;
        out["identity"] = r.inputs.identity;
        out["expression"] = r.inputs.expression;
        out["offsets"] = r.offsets.size() ? py::cast(toRows(r.offsets)) : py::none();
        out["trace"] = r.trace;
        out["diverged"] = r.diverged;
        out["mesh"] = toRows(r.mesh);
        out["seconds"] = r.wallSeconds;
        return out;
      },
      py::arg("rig"),
      py::arg("points"),
      py::arg("keypoints") = std::map<std::string, Vec3>{},
      py::arg("free") = "pose,shape",
      py::arg("iterations") = 2500,
      py::arg("learning_rate") = 0.01,
      py::arg("identity_components") = -1,
      py::arg("seed") = 0,
      py::arg("init_pose") = py::none(),
      "Fit pose and shape to a point cloud. Returns a dict with pose, identity, expression, trace, diverged, mesh.");

  m.def(
      "data2model_mm",
      [](const RigModel& rig, const RowPoints& points, const RowPoints& mesh, std::vector<bool> excluded) {
        return evaluateData2Model(toPoints(points), toFlat(mesh), rig.topology, excluded);
      },
      py::arg("rig"),
      py::arg("points"),
      py::arg("mesh"),
      py::arg("excluded") = std::vector<bool>{},
      "Mean scan-to-mesh distance in millimeters, ignoring points nearest excluded vertices.");

  m.def(
      "train_correctives",
      [](const RigModel& rig,
         const std::vector<VecX>& poses,
         const std::vector<RowPoints>& targets,
         std::optional<std::vector<size_t>> joints,
         const std::string& kind,
         double l1,
         size_t epochs,
         double learningRate,
         size_t batchSize,
         std::vector<size_t> hidden,
         size_t embedding,
         uint64_t seed) {
        require(poses.size() == targets.size(), "train_correctives: poses and targets differ in length");
        require(kind == "rest" || kind == "posed", "train_correctives: kind must be 'rest' or 'posed'");
        std::vector<CorrectiveSample> data;
        for (size_t i = 0; i < poses.size(); ++i) {
          data.push_back({poses[i], toFlat(targets[i]), {}});
        }
        RigModel base = rig;
        base.correctives = {};
        base.finalize();
        std::vector<size_t> js;
        if (joints) {
          js = *joints;
        } else {
          for (size_t j = 1; j < rig.jointCount(); ++j) {
            js.push_back(j);
          }
        }
        CorrectiveArchitecture arch;
        arch.hiddenWidths = hidden;
        arch.embeddingSize = embedding;
        CorrectiveTrainingConfig cfg;
        cfg.l1 = l1;
        cfg.epochs = epochs;
        cfg.learningRate = learningRate;
        cfg.batchSize = batchSize;
        cfg.seed = seed;
        cfg.targetKind = kind == "rest" ? CorrectiveTargetKind::Residual : CorrectiveTargetKind::Posed;
        RigModel out = base;
        std::vector<double> losses;
        {
          py::gil_scoped_release release;
          const CorrectiveModel init =
              initCorrectiveModel(rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, js, arch, seed);
          auto result = trainCorrectives(base, init, data, cfg);
          out.correctives = std::move(result.model);
          losses = std::move(result.epochLoss);
        }
        out.finalize();
        return py::make_tuple(out, losses);
      },
      py::arg("rig"),
      py::arg("poses"),
      py::arg("targets"),
      py::arg("joints") = py::none(),
      py::arg("kind") = "rest",
      py::arg("l1") = 0.0,
      py::arg("epochs") = 200,
      py::arg("learning_rate") = 1e-3,
      py::arg("batch_size") = 32,
      py::arg("hidden") = std::vector<size_t>{32, 32},
      py::arg("embedding") = 8,
      py::arg("seed") = 0,
      "Train pose correctives from (pose, target mesh) pairs. Returns (rig, per-epoch loss).");

  m.def(
      "masked_pca",
      [](const std::vector<RowPoints>& shapes, const VecX& weights, size_t count) {
        ShapeSet set;
        for (size_t i = 0; i < shapes.size(); ++i) {
          set.shapes.push_back(toFlat(shapes[i]));
          set.subjects.push_back(std::to_string(i));
        }
        const MaskedPca pca = maskedPca(set, {"region", weights}, count);
        return py::make_tuple(toRows(pca.mean), MatX(pca.components), VecX(pca.standardDeviations()));
      },
      py::arg("shapes"),
      py::arg("weights"),
      py::arg("count"),
      "PCA of mask-weighted shapes. Returns (mean V x 3, components 3V x k, standard deviations).");

  m.def(
      "transfer_rig",
      [](const RigModel& rig,
         const RowPoints& vertices,
         const RowTris& triangles,
         bool smooth,
         bool reinitMasks,
         size_t maxInfluences) {
        LodTransferOptions opts;
        opts.smooth = smooth;
        opts.reinitMasks = reinitMasks;
        opts.maxInfluences = maxInfluences;
        const VecX positions = toFlat(vertices);
        return transferRig(rig, toTopology(triangles, size_t(vertices.rows())), positions, opts);
      },
      py::arg("rig"),
      py::arg("vertices"),
      py::arg("triangles"),
      py::arg("smooth") = false,
      py::arg("reinit_masks") = false,
      py::arg("max_influences") = 0,
      "Carry every rig attribute onto another mesh of the same body.");
}
