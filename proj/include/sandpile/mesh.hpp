#ifndef SANDPILE_MESH_HPP
#define SANDPILE_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/geometry.hpp"

namespace sandpile {

using Triangle = std::array<int, 3>;

namespace detail {

// One (triangle, local edge) incidence. Local edge i is opposite local vertex i
// and is traversed from vertex (i+1)%3 to (i+2)%3 in counterclockwise order.
struct EdgeIncidence {
  int lo, hi;
  int tri;
  int local;
  bool forward;  // traversed lo -> hi
};

inline std::vector<EdgeIncidence> collect_edge_incidences(const std::vector<Triangle>& tris) {
  std::vector<EdgeIncidence> inc;
  inc.reserve(3 * tris.size());
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    for (int i = 0; i < 3; ++i) {
      const int a = tris[t][(i + 1) % 3];
      const int b = tris[t][(i + 2) % 3];
      inc.push_back({std::min(a, b), std::max(a, b), t, i, a < b});
    }
  }
  std::sort(inc.begin(), inc.end(), [](const EdgeIncidence& p, const EdgeIncidence& q) {
    if (p.lo != q.lo) return p.lo < q.lo;
    if (p.hi != q.hi) return p.hi < q.hi;
    return p.tri < q.tri;
  });
  return inc;
}

inline std::string edge_name(int a, int b) {
  return "edge (" + std::to_string(a) + ", " + std::to_string(b) + ")";
}

// True if p lies strictly inside segment [a, b].
inline bool on_open_segment(const Vec2& p, const Vec2& a, const Vec2& b, double tol) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double s = dot(p - a, ab) / len2;
  if (s <= 1e-9 || s >= 1.0 - 1e-9) return false;
  return std::abs(cross(ab, p - a)) <= tol * std::sqrt(len2);
}

}  // namespace detail

/// Conforming triangulation of a polygonal domain.
///
/// Construction validates the input and orients every triangle counterclockwise.
/// The mesh is immutable afterwards; fields and operators keep a pointer to it.
class TriMesh {
public:
  TriMesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    validate_and_orient();
    compute_geometry();
    compute_boundary();
  }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const Vec2& vertex(int v) const { return vertices_[v]; }
  const Triangle& triangle(int t) const { return triangles_[t]; }

  double area(int t) const { return areas_[t]; }
  const std::vector<double>& areas() const { return areas_; }
  double total_area() const { return total_area_; }
  Vec2 centroid(int t) const {
    const auto& tr = triangles_[t];
    return (vertices_[tr[0]] + vertices_[tr[1]] + vertices_[tr[2]]) / 3.0;
  }
  // Gradients of the three barycentric (hat) functions on triangle t.
  const std::array<Vec2, 3>& basis_gradients(int t) const { return grads_[t]; }

  double h_max() const { return h_max_; }

  const std::vector<bool>& boundary_vertex_flags() const { return boundary_; }
  bool is_boundary_vertex(int v) const { return boundary_[v]; }

  // Numbering of the U^h_0 unknowns; -1 for boundary vertices.
  int interior_index(int v) const { return interior_index_[v]; }
  const std::vector<int>& interior_vertices() const { return interior_vertices_; }
  int num_interior_vertices() const { return static_cast<int>(interior_vertices_.size()); }

  // Axis-aligned bounding box {xmin, xmax, ymin, ymax}.
  std::array<double, 4> bounding_box() const {
    std::array<double, 4> bb{vertices_[0].x, vertices_[0].x, vertices_[0].y, vertices_[0].y};
    for (const auto& p : vertices_) {
      bb[0] = std::min(bb[0], p.x);
      bb[1] = std::max(bb[1], p.x);
      bb[2] = std::min(bb[2], p.y);
      bb[3] = std::max(bb[3], p.y);
    }
    return bb;
  }

private:
  void validate_and_orient() {
    if (vertices_.empty() || triangles_.empty()) throw ValidationError("mesh has no triangles");
    const int nv = num_vertices();
    std::vector<bool> used(nv, false);
    for (int t = 0; t < num_triangles(); ++t) {
      auto& tr = triangles_[t];
      for (int v : tr) {
        if (v < 0 || v >= nv)
          throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                                std::to_string(v) + " outside [0, " + std::to_string(nv) + ")");
        used[v] = true;
      }
      if (tr[0] == tr[1] || tr[1] == tr[2] || tr[0] == tr[2])
        throw ValidationError("triangle " + std::to_string(t) + " repeats a vertex");
      if (signed_area2(vertices_[tr[0]], vertices_[tr[1]], vertices_[tr[2]]) < 0.0)
        std::swap(tr[1], tr[2]);
    }
    for (int v = 0; v < nv; ++v) {
      if (!std::isfinite(vertices_[v].x) || !std::isfinite(vertices_[v].y))
        throw ValidationError("vertex " + std::to_string(v) + " has non-finite coordinates");
      if (!used[v]) throw ValidationError("vertex " + std::to_string(v) + " belongs to no triangle");
    }
  }

  void compute_geometry() {
    const int nt = num_triangles();
    areas_.resize(nt);
    grads_.resize(nt);
    h_max_ = 0.0;
    total_area_ = 0.0;
    for (int t = 0; t < nt; ++t) {
      const auto& tr = triangles_[t];
      const Vec2 &a = vertices_[tr[0]], &b = vertices_[tr[1]], &c = vertices_[tr[2]];
      h_max_ = std::max({h_max_, norm(b - a), norm(c - b), norm(a - c)});
    }
    for (int t = 0; t < nt; ++t) {
      const auto& tr = triangles_[t];
      const Vec2 &a = vertices_[tr[0]], &b = vertices_[tr[1]], &c = vertices_[tr[2]];
      const double a2 = signed_area2(a, b, c);
      if (0.5 * a2 < 1e-14 * h_max_ * h_max_)
        throw GeometryError("triangle " + std::to_string(t) + " is degenerate (area " +
                            std::to_string(0.5 * a2) + ")");
      areas_[t] = 0.5 * a2;
      total_area_ += areas_[t];
      // grad lambda_i: opposite edge rotated by +90 degrees, over 2|T|.
      const std::array<Vec2, 3> p{a, b, c};
      for (int i = 0; i < 3; ++i) {
        const Vec2 e = p[(i + 2) % 3] - p[(i + 1) % 3];
        grads_[t][i] = Vec2{-e.y, e.x} / a2;
      }
    }
  }

  void compute_boundary() {
    const auto inc = detail::collect_edge_incidences(triangles_);
    boundary_.assign(num_vertices(), false);
    std::vector<std::array<int, 2>> boundary_edges;
    for (std::size_t i = 0; i < inc.size();) {
      std::size_t j = i;
      while (j < inc.size() && inc[j].lo == inc[i].lo && inc[j].hi == inc[i].hi) ++j;
      const std::size_t count = j - i;
      if (count > 2)
        throw ValidationError("non-conforming mesh: " + detail::edge_name(inc[i].lo, inc[i].hi) +
                              " is shared by " + std::to_string(count) + " triangles");
      if (count == 2 && inc[i].forward == inc[i + 1].forward)
        throw ValidationError("non-conforming mesh: triangles " + std::to_string(inc[i].tri) +
                              " and " + std::to_string(inc[i + 1].tri) + " overlap across " +
                              detail::edge_name(inc[i].lo, inc[i].hi));
      if (count == 1) {
        boundary_[inc[i].lo] = true;
        boundary_[inc[i].hi] = true;
        boundary_edges.push_back({inc[i].lo, inc[i].hi});
      }
      i = j;
    }
    // Hanging vertices show up as a boundary vertex in the interior of another
    // boundary edge. Only boundary vertices can be hanging.
    std::vector<int> bverts;
    for (int v = 0; v < num_vertices(); ++v)
      if (boundary_[v]) bverts.push_back(v);
    std::sort(bverts.begin(), bverts.end(),
              [&](int a, int b) { return vertices_[a].x < vertices_[b].x; });
    const double tol = 1e-10 * h_max_;
    for (const auto& e : boundary_edges) {
      const Vec2 &a = vertices_[e[0]], &b = vertices_[e[1]];
      const double xlo = std::min(a.x, b.x) - tol, xhi = std::max(a.x, b.x) + tol;
      auto it = std::lower_bound(bverts.begin(), bverts.end(), xlo,
                                 [&](int v, double x) { return vertices_[v].x < x; });
      for (; it != bverts.end() && vertices_[*it].x <= xhi; ++it) {
        const int v = *it;
        if (v == e[0] || v == e[1]) continue;
        if (detail::on_open_segment(vertices_[v], a, b, tol))
          throw ValidationError("non-conforming mesh: vertex " + std::to_string(v) +
                                " hangs on " + detail::edge_name(e[0], e[1]));
      }
    }
    interior_index_.assign(num_vertices(), -1);
    interior_vertices_.clear();
    for (int v = 0; v < num_vertices(); ++v) {
      if (!boundary_[v]) {
        interior_index_[v] = static_cast<int>(interior_vertices_.size());
        interior_vertices_.push_back(v);
      }
    }
  }

  std::vector<Vec2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<double> areas_;
  std::vector<std::array<Vec2, 3>> grads_;
  std::vector<bool> boundary_;
  std::vector<int> interior_index_;
  std::vector<int> interior_vertices_;
  double h_max_ = 0.0;
  double total_area_ = 0.0;
};

/// Oriented edge structure carrying the RT0 degrees of freedom.
///
/// Edges are numbered in lexicographic order of (lower vertex, higher vertex)
/// and oriented lower -> higher. The global unit normal of an edge is its
/// tangent rotated clockwise, so it is the outward normal of any triangle that
/// traverses the edge lower -> higher in counterclockwise order.
struct EdgeTopology {
  struct LocalEdge {
    int edge;
    int sign;  // +1 iff the global normal is the triangle's outward normal
  };

  const TriMesh* mesh = nullptr;
  std::vector<std::array<int, 2>> edges;
  std::vector<std::array<LocalEdge, 3>> edge_of_triangle;  // local edge i opposite local vertex i
  std::vector<std::array<int, 2>> edge_triangles;          // second is -1 on the boundary
  std::vector<bool> boundary_edge_flags;
  std::vector<double> edge_lengths;
  std::vector<Vec2> normals;

  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_boundary_edges() const {
    return static_cast<int>(std::count(boundary_edge_flags.begin(), boundary_edge_flags.end(), true));
  }
  Vec2 midpoint(int e) const {
    return 0.5 * (mesh->vertex(edges[e][0]) + mesh->vertex(edges[e][1]));
  }
};

inline EdgeTopology build_edge_topology(const TriMesh& mesh) {
  EdgeTopology topo;
  topo.mesh = &mesh;
  const auto inc = detail::collect_edge_incidences(mesh.triangles());
  topo.edge_of_triangle.assign(mesh.num_triangles(), {});
  for (std::size_t i = 0; i < inc.size();) {
    std::size_t j = i;
    while (j < inc.size() && inc[j].lo == inc[i].lo && inc[j].hi == inc[i].hi) ++j;
    const int count = static_cast<int>(j - i);
    if (count > 2 || (count == 2 && inc[i].forward == inc[i + 1].forward))
      throw ValidationError("non-conforming mesh at " + detail::edge_name(inc[i].lo, inc[i].hi));
    const int e = topo.num_edges();
    topo.edges.push_back({inc[i].lo, inc[i].hi});
    topo.edge_triangles.push_back({inc[i].tri, count == 2 ? inc[i + 1].tri : -1});
    topo.boundary_edge_flags.push_back(count == 1);
    const Vec2 a = mesh.vertex(inc[i].lo), b = mesh.vertex(inc[i].hi);
    const Vec2 tangent = b - a;
    const double len = norm(tangent);
    topo.edge_lengths.push_back(len);
    topo.normals.push_back(Vec2{tangent.y, -tangent.x} / len);
    for (std::size_t k = i; k < j; ++k)
      topo.edge_of_triangle[inc[k].tri][inc[k].local] = {e, inc[k].forward ? 1 : -1};
    i = j;
  }
  return topo;
}

// ---------------------------------------------------------------------------
// Generators

inline TriMesh generate_square_mesh(double xmin, double xmax, double ymin, double ymax, double h) {
  if (!(xmax > xmin) || !(ymax > ymin)) throw InvalidArgument("square mesh: empty box");
  if (!(h > 0.0)) throw InvalidArgument("square mesh: h must be positive");
  if (!(h < std::min(xmax - xmin, ymax - ymin)))
    throw InvalidArgument("square mesh: h must be smaller than both side lengths");
  // The small shave keeps e.g. 2/0.02 from rounding up to 101 cells.
  const int nx = static_cast<int>(std::ceil((xmax - xmin) / h - 1e-9));
  const int ny = static_cast<int>(std::ceil((ymax - ymin) / h - 1e-9));
  std::vector<Vec2> verts;
  verts.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    const double y = (j == ny) ? ymax : ymin + (ymax - ymin) * j / ny;
    for (int i = 0; i <= nx; ++i) {
      const double x = (i == nx) ? xmax : xmin + (xmax - xmin) * i / nx;
      verts.push_back({x, y});
    }
  }
  std::vector<Triangle> tris;
  tris.reserve(2 * nx * ny);
  const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = id(i, j), v10 = id(i + 1, j), v11 = id(i + 1, j + 1), v01 = id(i, j + 1);
      tris.push_back({v00, v10, v11});
      tris.push_back({v00, v11, v01});
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

/// Disk of the given radius centred at the origin, built from concentric rings.
///
/// Ring k (k = 1..K, K = ceil(radius/h)) sits at radius k*radius/K and carries
/// ceil(2*pi*k*radius/(K*h)) equally spaced vertices, odd rings rotated by half a
/// spacing. Adjacent rings are stitched by an angular sweep, the first ring is a
/// fan around the centre vertex.
inline TriMesh generate_disk_mesh(double radius, double h) {
  if (!(radius > 0.0)) throw InvalidArgument("disk mesh: radius must be positive");
  if (!(h > 0.0) || !(h < radius)) throw InvalidArgument("disk mesh: need 0 < h < radius");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const int K = static_cast<int>(std::ceil(radius / h - 1e-9));

  std::vector<Vec2> verts{{0.0, 0.0}};
  std::vector<int> ring_start{0}, ring_count{1};
  std::vector<double> ring_offset{0.0};
  for (int k = 1; k <= K; ++k) {
    const int n = std::max(3, static_cast<int>(std::ceil(two_pi * k * radius / (K * h) - 1e-9)));
    const double rk = (k == K) ? radius : radius * k / K;
    const double offset = (k % 2 == 1) ? 0.5 * two_pi / n : 0.0;
    ring_start.push_back(static_cast<int>(verts.size()));
    ring_count.push_back(n);
    ring_offset.push_back(offset);
    for (int i = 0; i < n; ++i) {
      const double th = offset + two_pi * i / n;
      verts.push_back({rk * std::cos(th), rk * std::sin(th)});
    }
  }

  std::vector<Triangle> tris;
  const auto add = [&](int a, int b, int c) {
    if (signed_area2(verts[a], verts[b], verts[c]) < 0.0) std::swap(b, c);
    tris.push_back({a, b, c});
  };
  {
    const int s = ring_start[1], n = ring_count[1];
    for (int i = 0; i < n; ++i) add(0, s + i, s + (i + 1) % n);
  }
  for (int k = 1; k < K; ++k) {
    const int si = ring_start[k], ni = ring_count[k];
    const int so = ring_start[k + 1], no = ring_count[k + 1];
    const auto angle_in = [&](int i) { return ring_offset[k] + two_pi * i / ni; };
    const auto angle_out = [&](int j) { return ring_offset[k + 1] + two_pi * j / no; };
    int i = 0, j = 0;
    while (i < ni || j < no) {
      const bool advance_inner =
          (j == no) || (i < ni && angle_in(i + 1) < angle_out(j + 1));
      if (advance_inner) {
        add(si + i % ni, si + (i + 1) % ni, so + j % no);
        ++i;
      } else {
        add(si + i % ni, so + (j + 1) % no, so + j % no);
        ++j;
      }
    }
  }
  return TriMesh(std::move(verts), std::move(tris));
}

// ---------------------------------------------------------------------------
// Quality

struct MeshQuality {
  double h_max;
  double h_min;
  double regularity;  // max over triangles of diameter / inradius
};

inline MeshQuality mesh_quality(const TriMesh& mesh) {
  MeshQuality q{0.0, std::numeric_limits<double>::infinity(), 0.0};
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tr = mesh.triangle(t);
    const double a = norm(mesh.vertex(tr[1]) - mesh.vertex(tr[0]));
    const double b = norm(mesh.vertex(tr[2]) - mesh.vertex(tr[1]));
    const double c = norm(mesh.vertex(tr[0]) - mesh.vertex(tr[2]));
    const double diam = std::max({a, b, c});
    const double inradius = 2.0 * mesh.area(t) / (a + b + c);
    q.h_max = std::max(q.h_max, diam);
    q.h_min = std::min(q.h_min, diam);
    q.regularity = std::max(q.regularity, diam / inradius);
  }
  return q;
}

/// Ring disk mesh whose longest edge does not exceed h. The ring target is
/// shrunk in 1% steps from h until the generated mesh satisfies the bound.
inline TriMesh generate_disk_mesh_max_diameter(double radius, double h) {
  if (!(radius > 0.0)) throw InvalidArgument("disk mesh: radius must be positive");
  if (!(h > 0.0) || !(h < radius)) throw InvalidArgument("disk mesh: need 0 < h < radius");
  for (int k = 0; k < 100; ++k) {
    TriMesh m = generate_disk_mesh(radius, h * (1.0 - 0.01 * k));
    if (mesh_quality(m).h_max <= h) return m;
  }
  throw GeometryError("disk mesh: could not meet the diameter bound " + std::to_string(h));
}

// ---------------------------------------------------------------------------
// Text format: "V T", V lines "x y", T lines "i j k" (0-based).

inline void write_mesh(const TriMesh& mesh, std::ostream& os) {
  char buf[96];
  os << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  for (const auto& p : mesh.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.x, p.y);
    os << buf;
  }
  for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline void write_mesh(const TriMesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_mesh(mesh, os);
  if (!os) throw IoError("write failed: " + path);
}

inline TriMesh read_mesh(std::istream& is) {
  std::string line;
  int lineno = 0;
  const auto next_line = [&]() -> std::istringstream {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    throw FormatError("unexpected end of file", lineno + 1);
  };
  const auto expect_end = [&](std::istringstream& ss) {
    std::string rest;
    if (ss >> rest) throw FormatError("trailing content '" + rest + "'", lineno);
  };

  long nv = 0, nt = 0;
  {
    auto ss = next_line();
    if (!(ss >> nv >> nt) || nv <= 0 || nt <= 0)
      throw FormatError("expected header 'V T' with positive counts", lineno);
    expect_end(ss);
  }
  std::vector<Vec2> verts(nv);
  for (auto& p : verts) {
    auto ss = next_line();
    if (!(ss >> p.x >> p.y)) throw FormatError("expected vertex 'x y'", lineno);
    expect_end(ss);
  }
  std::vector<Triangle> tris(nt);
  for (auto& t : tris) {
    auto ss = next_line();
    if (!(ss >> t[0] >> t[1] >> t[2])) throw FormatError("expected triangle 'i j k'", lineno);
    expect_end(ss);
  }
  return TriMesh(std::move(verts), std::move(tris));
}

inline TriMesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open mesh file " + path);
  return read_mesh(is);
}

}  // namespace sandpile

#endif  // SANDPILE_MESH_HPP
