#include "pct3d/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pct3d/geometry.hpp"

namespace pct3d {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + tok + "'", line_no);
  }
  if (used != tok.size()) {
    throw ParseError("trailing characters in number '" + tok + "'", line_no);
  }
  return v;
}

long parse_int(const std::string& tok, int line_no) {
  std::size_t used = 0;
  long v;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("expected an integer, got '" + tok + "'", line_no);
  }
  if (used != tok.size()) {
    throw ParseError("trailing characters in integer '" + tok + "'", line_no);
  }
  return v;
}

}  // namespace

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open '" + path + "'");
  std::vector<double> coords, normals;
  int width = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (width == 0) {
      if (toks.size() != 3 && toks.size() != 6) {
        throw ParseError("expected 3 or 6 columns, got " +
                             std::to_string(toks.size()),
                         line_no);
      }
      width = static_cast<int>(toks.size());
    } else if (static_cast<int>(toks.size()) != width) {
      throw ParseError("inconsistent column count", line_no);
    }
    for (int i = 0; i < 3; ++i) coords.push_back(parse_double(toks[i], line_no));
    if (width == 6) {
      for (int i = 3; i < 6; ++i) normals.push_back(parse_double(toks[i], line_no));
    }
  }
  if (coords.empty()) throw ParseError("no points in file", line_no);
  PointCloud pc;
  const int n = static_cast<int>(coords.size() / 3);
  pc.coords = Eigen::Map<const PointMatrix>(coords.data(), n, 3);
  if (!normals.empty()) {
    pc.normals = Eigen::Map<const PointMatrix>(normals.data(), n, 3);
  }
  return pc;
}

void save_xyz(const PointCloud& pc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write '" + path + "'");
  char buf[64];
  for (int i = 0; i < pc.point_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", pc.coords(i, c));
      out << (c ? " " : "") << buf;
    }
    if (pc.has_normals()) {
      for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", pc.normals(i, c));
        out << ' ' << buf;
      }
    }
    out << '\n';
  }
}

PointCloud load_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;
  auto next_content_line = [&](std::vector<std::string>& toks) -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      toks = tokenize(line);
      if (toks.empty() || toks[0][0] == '#') continue;
      return true;
    }
    return false;
  };

  std::vector<std::string> toks;
  if (!next_content_line(toks)) throw ParseError("empty OFF file", line_no);
  long nv = -1, nf = -1;
  if (toks[0] != "OFF") throw ParseError("missing OFF header", line_no);
  if (toks.size() == 4) {  // counts allowed on the header line
    nv = parse_int(toks[1], line_no);
    nf = parse_int(toks[2], line_no);
  } else if (toks.size() != 1) {
    throw ParseError("malformed OFF header", line_no);
  }
  if (nv < 0) {
    if (!next_content_line(toks)) throw ParseError("missing count line", line_no);
    if (toks.size() < 2) throw ParseError("malformed count line", line_no);
    nv = parse_int(toks[0], line_no);
    nf = parse_int(toks[1], line_no);
  }
  if (nv < 1 || nf < 0) throw ParseError("bad vertex/face counts", line_no);

  PointMatrix verts(nv, 3);
  for (long i = 0; i < nv; ++i) {
    if (!next_content_line(toks)) {
      throw ParseError("truncated vertex list: expected " + std::to_string(nv) +
                           " vertices, got " + std::to_string(i),
                       line_no);
    }
    if (toks.size() < 3) throw ParseError("vertex line needs 3 coordinates", line_no);
    for (int c = 0; c < 3; ++c) verts(i, c) = parse_double(toks[c], line_no);
  }

  PointMatrix normal_acc = PointMatrix::Zero(nv, 3);
  for (long f = 0; f < nf; ++f) {
    if (!next_content_line(toks)) {
      throw ParseError("truncated face list: expected " + std::to_string(nf) +
                           " faces, got " + std::to_string(f),
                       line_no);
    }
    const long m = parse_int(toks[0], line_no);
    if (m < 3 || static_cast<long>(toks.size()) < m + 1) {
      throw ParseError("malformed face line", line_no);
    }
    std::vector<long> vi(static_cast<std::size_t>(m));
    for (long j = 0; j < m; ++j) {
      vi[j] = parse_int(toks[j + 1], line_no);
      if (vi[j] < 0 || vi[j] >= nv) {
        throw ParseError("face references vertex " + std::to_string(vi[j]) +
                             " outside [0," + std::to_string(nv) + ")",
                         line_no);
      }
    }
    for (long j = 1; j + 1 < m; ++j) {  // fan triangulation
      const Eigen::Vector3d a = verts.row(vi[0]);
      const Eigen::Vector3d b = verts.row(vi[j]);
      const Eigen::Vector3d c = verts.row(vi[j + 1]);
      const Eigen::Vector3d cr = (b - a).cross(c - a);  // |cr| = 2 * area
      normal_acc.row(vi[0]) += cr.transpose();
      normal_acc.row(vi[j]) += cr.transpose();
      normal_acc.row(vi[j + 1]) += cr.transpose();
    }
  }

  PointCloud pc;
  pc.coords = verts;
  pc.normals = PointMatrix::Zero(nv, 3);
  for (long i = 0; i < nv; ++i) {
    const double len = normal_acc.row(i).norm();
    if (len > 1e-300) pc.normals.row(i) = normal_acc.row(i) / len;
  }
  return pc;
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
  if (pc.point_count() < 1) throw ValueError("normalize: empty cloud");
  PointCloud out = pc;
  const Eigen::RowVector3d centroid = pc.coords.colwise().mean();
  out.coords = pc.coords.rowwise() - centroid;
  const double r = out.coords.rowwise().norm().maxCoeff();
  if (r > 1e-300) {
    out.coords /= r;
  } else {
    out.coords.setZero();
  }
  return out;
}

PointCloud resample_fps(const PointCloud& pc, int n_target) {
  if (n_target > pc.point_count()) {
    throw ValueError("resample_fps: target " + std::to_string(n_target) +
                     " exceeds point count " + std::to_string(pc.point_count()));
  }
  const SampleResult sr = farthest_point_sample(pc.coords, n_target);
  PointCloud out;
  out.class_label = pc.class_label;
  out.coords.resize(n_target, 3);
  if (pc.has_normals()) out.normals.resize(n_target, 3);
  if (pc.has_point_labels()) out.point_labels.resize(n_target);
  for (int i = 0; i < n_target; ++i) {
    const int src = sr.indices[i];
    out.coords.row(i) = pc.coords.row(src);
    if (pc.has_normals()) out.normals.row(i) = pc.normals.row(src);
    if (pc.has_point_labels()) out.point_labels[i] = pc.point_labels[src];
  }
  return out;
}

const char* shape_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::kSphere: return "sphere";
    case ShapeClass::kCube: return "cube";
    case ShapeClass::kTorus: return "torus";
    case ShapeClass::kCylinder: return "cylinder";
  }
  return "?";
}

ShapeClass shape_from_name(const std::string& name) {
  if (name == "sphere") return ShapeClass::kSphere;
  if (name == "cube") return ShapeClass::kCube;
  if (name == "torus") return ShapeClass::kTorus;
  if (name == "cylinder") return ShapeClass::kCylinder;
  throw ValueError("unknown shape class '" + name + "'");
}

int shape_part_count(ShapeClass c) {
  switch (c) {
    case ShapeClass::kSphere: return 2;   // hemispheres
    case ShapeClass::kCube: return 6;     // faces
    case ShapeClass::kTorus: return 2;    // inner/outer ring
    case ShapeClass::kCylinder: return 3; // side + two caps
  }
  return 0;
}

namespace {
constexpr double kTorusMajor = 0.75;
constexpr double kTorusMinor = 0.25;
constexpr double kCylRadius = 0.5;
constexpr double kCylHalfHeight = 0.75;
}  // namespace

int shape_part_label(ShapeClass c, const Eigen::Vector3d& p) {
  switch (c) {
    case ShapeClass::kSphere:
      return p.z() >= 0.0 ? 0 : 1;
    case ShapeClass::kCube: {
      int axis = 0;
      double best = std::abs(p.x());
      if (std::abs(p.y()) > best) { best = std::abs(p.y()); axis = 1; }
      if (std::abs(p.z()) > best) { axis = 2; }
      return axis * 2 + (p[axis] < 0.0 ? 1 : 0);
    }
    case ShapeClass::kTorus:
      return std::hypot(p.x(), p.y()) < kTorusMajor ? 0 : 1;
    case ShapeClass::kCylinder:
      if (p.z() >= kCylHalfHeight - 1e-9) return 1;
      if (p.z() <= -kCylHalfHeight + 1e-9) return 2;
      return 0;
  }
  return 0;
}

CanonicalSample synth_canonical(ShapeClass shape, int n_points,
                                RandomStream& rng) {
  CanonicalSample s;
  s.coords.resize(n_points, 3);
  s.normals.resize(n_points, 3);
  s.parts.resize(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    Eigen::Vector3d p, nrm;
    switch (shape) {
      case ShapeClass::kSphere: {
        Eigen::Vector3d g(rng.normal(), rng.normal(), rng.normal());
        while (g.norm() < 1e-9) g = {rng.normal(), rng.normal(), rng.normal()};
        p = g.normalized();
        nrm = p;
        break;
      }
      case ShapeClass::kCube: {
        const int face = rng.uniform_int(6);
        const int axis = face / 2;
        const double sign = face % 2 == 0 ? 1.0 : -1.0;
        const double u = rng.uniform(-0.5, 0.5);
        const double v = rng.uniform(-0.5, 0.5);
        p.setZero();
        p[axis] = 0.5 * sign;
        p[(axis + 1) % 3] = u;
        p[(axis + 2) % 3] = v;
        nrm.setZero();
        nrm[axis] = sign;
        break;
      }
      case ShapeClass::kTorus: {
        const double phi = rng.uniform(0.0, 2.0 * EIGEN_PI);
        double theta;
        do {  // area-uniform: density proportional to R + r cos(theta)
          theta = rng.uniform(0.0, 2.0 * EIGEN_PI);
        } while (rng.uniform() >=
                 (kTorusMajor + kTorusMinor * std::cos(theta)) /
                     (kTorusMajor + kTorusMinor));
        const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
        p = {ring * std::cos(phi), ring * std::sin(phi),
             kTorusMinor * std::sin(theta)};
        nrm = {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
               std::sin(theta)};
        break;
      }
      case ShapeClass::kCylinder: {
        const double side_area = 2.0 * EIGEN_PI * kCylRadius * 2.0 * kCylHalfHeight;
        const double cap_area = EIGEN_PI * kCylRadius * kCylRadius;
        const double u = rng.uniform() * (side_area + 2.0 * cap_area);
        const double phi = rng.uniform(0.0, 2.0 * EIGEN_PI);
        if (u < side_area) {
          const double z = rng.uniform(-kCylHalfHeight, kCylHalfHeight);
          p = {kCylRadius * std::cos(phi), kCylRadius * std::sin(phi), z};
          nrm = {std::cos(phi), std::sin(phi), 0.0};
        } else {
          const double sign = u < side_area + cap_area ? 1.0 : -1.0;
          const double rad = kCylRadius * std::sqrt(rng.uniform());
          p = {rad * std::cos(phi), rad * std::sin(phi), sign * kCylHalfHeight};
          nrm = {0.0, 0.0, sign};
        }
        break;
      }
    }
    s.coords.row(i) = p.transpose();
    s.normals.row(i) = nrm.transpose();
    s.parts[i] = shape_part_label(shape, p);
  }
  return s;
}

Dataset synth_shapes(const SynthConfig& cfg) {
  if (cfg.n_points < 16) throw ValueError("synth_shapes: n_points must be >= 16");
  if (cfg.classes.empty()) throw ValueError("synth_shapes: no classes");
  Dataset ds;
  ds.num_classes = static_cast<int>(cfg.classes.size());
  std::vector<int> part_offset(cfg.classes.size(), 0);
  int total_parts = 0;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    part_offset[c] = total_parts;
    total_parts += shape_part_count(cfg.classes[c]);
  }
  ds.num_parts = total_parts;

  RandomStream rng(cfg.seed);
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (int k = 0; k < cfg.samples_per_class; ++k) {
      CanonicalSample cs = synth_canonical(cfg.classes[c], cfg.n_points, rng);
      PointCloud pc;
      pc.class_label = static_cast<int>(c);
      pc.point_labels.resize(cs.parts.size());
      for (std::size_t i = 0; i < cs.parts.size(); ++i)
        pc.point_labels[i] = cs.parts[i] + part_offset[c];
      if (cfg.rotate) {
        const Eigen::Matrix3d rot = rng.rotation();
        pc.coords = cs.coords * rot.transpose();
        pc.normals = cs.normals * rot.transpose();
      } else {
        pc.coords = cs.coords;
        pc.normals = cs.normals;
      }
      for (int i = 0; i < cfg.n_points; ++i)
        for (int d = 0; d < 3; ++d)
          pc.coords(i, d) += rng.uniform(-cfg.jitter, cfg.jitter);
      ds.samples.push_back(std::move(pc));
    }
  }
  return ds;
}

Dataset load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValueError("cannot open manifest '" + manifest_path + "'");
  const auto base = std::filesystem::path(manifest_path).parent_path();
  Dataset ds;
  std::string line;
  int line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw ParseError("expected 'path,class_label'", line_no);
    }
    const std::string rel = line.substr(0, comma);
    const int label = static_cast<int>(parse_int(line.substr(comma + 1), line_no));
    if (label < 0) throw ParseError("negative class label", line_no);
    const auto full = (base / rel).string();
    PointCloud pc;
    if (rel.size() >= 4 && rel.substr(rel.size() - 4) == ".off") {
      pc = load_off(full);
    } else {
      pc = load_xyz(full);
    }
    pc.class_label = label;
    max_label = std::max(max_label, label);
    ds.samples.push_back(std::move(pc));
  }
  if (ds.samples.empty()) throw ValueError("manifest lists no samples");
  ds.num_classes = max_label + 1;
  return ds;
}

}  // namespace pct3d
