#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pct3d/common.hpp"

namespace pct3d {

struct PointCloud {
  PointMatrix coords;             // n x 3
  PointMatrix normals;            // n x 3, or 0 rows when absent
  std::vector<int> point_labels;  // per-point part labels, or empty
  int class_label = -1;           // -1 when unset

  int point_count() const { return static_cast<int>(coords.rows()); }
  bool has_normals() const { return normals.rows() > 0; }
  bool has_point_labels() const { return !point_labels.empty(); }
};

struct Dataset {
  std::vector<PointCloud> samples;
  int num_classes = 0;
  int num_parts = 0;  // 0 for classification-only data
  std::string split = "train";
};

// "x y z [nx ny nz]" per line.
PointCloud load_xyz(const std::string& path);
// Emits 17 significant digits so a reload round-trips.
void save_xyz(const PointCloud& pc, const std::string& path);

// OFF mesh; vertices become the cloud, per-vertex normals are the
// area-weighted average of incident triangle normals (faces fan-triangulated).
PointCloud load_off(const std::string& path);

// Centroid to the origin, max radius to 1. A cloud of identical points
// collapses to all zeros.
PointCloud normalize_unit_sphere(const PointCloud& pc);

// Keeps coordinates/normals/labels at the FPS-selected indices.
PointCloud resample_fps(const PointCloud& pc, int n_target);

enum class ShapeClass { kSphere, kCube, kTorus, kCylinder };

const char* shape_name(ShapeClass c);
ShapeClass shape_from_name(const std::string& name);
int shape_part_count(ShapeClass c);
// Part label of a canonical-pose surface point.
int shape_part_label(ShapeClass c, const Eigen::Vector3d& p);

// One sample in canonical pose, before rotation and jitter.
struct CanonicalSample {
  PointMatrix coords;
  PointMatrix normals;
  std::vector<int> parts;
};
CanonicalSample synth_canonical(ShapeClass shape, int n_points,
                                RandomStream& rng);

struct SynthConfig {
  std::vector<ShapeClass> classes = {ShapeClass::kSphere, ShapeClass::kCube,
                                     ShapeClass::kTorus, ShapeClass::kCylinder};
  int n_points = 64;
  int samples_per_class = 40;
  std::uint64_t seed = 1;
  bool rotate = true;
  double jitter = 0.02;  // uniform per-coordinate offset in [-jitter, jitter]
};

// Deterministic labeled dataset: analytic normals, per-point part labels
// (offset per class so label spaces do not collide), one random rigid
// rotation plus coordinate jitter per sample.
Dataset synth_shapes(const SynthConfig& cfg);

// Plain-text manifest, one "path,class_label" per line; paths are resolved
// relative to the manifest's directory.
Dataset load_manifest(const std::string& manifest_path);

}  // namespace pct3d
