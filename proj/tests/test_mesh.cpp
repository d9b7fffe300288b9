#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "helpers.hpp"
#include "sandpile/mesh.hpp"

using namespace sandpile;

TEST(SquareMesh, CountsForUnitCells) {
  const TriMesh m = generate_square_mesh(-1, 1, -1, 1, 1.0);
  EXPECT_EQ(m.num_triangles(), 8);
  EXPECT_EQ(m.num_vertices(), 9);
}

TEST(SquareMesh, CountsForFineGrid) {
  const TriMesh m = generate_square_mesh(-1, 1, -1, 1, 0.02);
  EXPECT_EQ(m.num_triangles(), 20000);
  EXPECT_EQ(m.num_vertices(), 10201);
  EXPECT_NEAR(m.total_area(), 4.0, 4e-12);
  EXPECT_LE(m.h_max(), std::sqrt(2.0) * 0.02 * (1 + 1e-12));
}

TEST(SquareMesh, RejectsBadSpacing) {
  EXPECT_THROW(generate_square_mesh(0, 1, 0, 1, 2.0), InvalidArgument);
  EXPECT_THROW(generate_square_mesh(0, 1, 0, 1, 0.0), InvalidArgument);
  EXPECT_THROW(generate_square_mesh(0, 1, 0, 1, -0.1), InvalidArgument);
  EXPECT_THROW(generate_square_mesh(1, 0, 0, 1, 0.1), InvalidArgument);
}

TEST(SquareMesh, HalfCellDiagonal) {
  EXPECT_NEAR(mesh_quality(generate_square_mesh(-1, 1, -1, 1, 0.5)).h_max, std::sqrt(2.0) / 2, 1e-14);
}

TEST(DiskMesh, BoundaryOnCircle) {
  const TriMesh m = generate_disk_mesh(1.0, 0.5);
  int nb = 0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (!m.is_boundary_vertex(v)) continue;
    ++nb;
    EXPECT_NEAR(norm(m.vertex(v)), 1.0, 1e-12);
  }
  EXPECT_GT(nb, 0);
}

TEST(DiskMesh, InscribedPolygonArea) {
  const double h = 0.04;
  const TriMesh m = generate_disk_mesh(1.0, h);
  EXPECT_LE(m.total_area(), std::numbers::pi);
  EXPECT_GE(m.total_area(), std::numbers::pi - std::numbers::pi * h * h / 2);
  EXPECT_LE(m.h_max(), 2 * h);
}

TEST(DiskMesh, BoundarySegmentsShorterThanH) {
  const double h = 0.1;
  const TriMesh m = generate_disk_mesh(1.0, h);
  const EdgeTopology topo = build_edge_topology(m);
  for (int e = 0; e < topo.num_edges(); ++e)
    if (topo.boundary_edge_flags[e]) { EXPECT_LE(topo.edge_lengths[e], h * (1 + 1e-12)); }
}

TEST(DiskMesh, RejectsBadSpacing) {
  EXPECT_THROW(generate_disk_mesh(1.0, 1.5), InvalidArgument);
  EXPECT_THROW(generate_disk_mesh(1.0, 0.0), InvalidArgument);
  EXPECT_THROW(generate_disk_mesh(-1.0, 0.1), InvalidArgument);
}

TEST(DiskMesh, MaxDiameterVariantHonoursBound) {
  for (double h : {0.3, 0.1, 0.04}) {
    const TriMesh m = generate_disk_mesh_max_diameter(1.0, h);
    EXPECT_LE(m.h_max(), h);
    EXPECT_GT(m.h_max(), 0.8 * h);
  }
}

TEST(TriMesh, ReorientsClockwiseInput) {
  const TriMesh m({{0, 0}, {0, 1}, {1, 0}}, {{0, 1, 2}});
  EXPECT_NEAR(m.area(0), 0.5, 1e-15);
}

TEST(TriMesh, RejectsInvalidInput) {
  EXPECT_THROW(TriMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 3}}), ValidationError);
  EXPECT_THROW(TriMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 1}}), ValidationError);
  EXPECT_THROW(TriMesh({{0, 0}, {1, 0}, {0, 1}, {5, 5}}, {{0, 1, 2}}), ValidationError);
  EXPECT_THROW(TriMesh({{0, 0}, {1, 0}, {2, 0}}, {{0, 1, 2}}), GeometryError);
}

TEST(TriMesh, RejectsHangingVertex) {
  // Vertex 4 sits on the midpoint of edge (1,2) of the left triangle.
  const std::vector<Vec2> v{{0, 0}, {1, 0}, {1, 1}, {2, 0}, {1, 0.5}, {2, 1}};
  const std::vector<Triangle> t{{0, 1, 2}, {1, 3, 4}, {4, 3, 5}, {4, 5, 2}};
  EXPECT_THROW(TriMesh(v, t), ValidationError);
}

TEST(TriMesh, RejectsEdgeSharedByThreeTriangles) {
  const std::vector<Vec2> v{{0, 0}, {1, 0}, {0.5, 1}, {0.5, -1}, {0.5, 2}};
  EXPECT_THROW(TriMesh(v, {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}}), ValidationError);
}

TEST(MeshQuality, KnownTriangles) {
  EXPECT_NEAR(mesh_quality(test::unit_triangle()).h_max, std::sqrt(2.0), 1e-15);
  const TriMesh eq({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}}, {{0, 1, 2}});
  EXPECT_NEAR(mesh_quality(eq).regularity, 2 * std::sqrt(3.0), 1e-12);
}

TEST(MeshIo, ReadSingleTriangle) {
  std::istringstream in("3 1\n0 0\n1 0\n0 1\n0 1 2\n");
  const TriMesh m = read_mesh(in);
  EXPECT_EQ(m.num_triangles(), 1);
  EXPECT_NEAR(m.area(0), 0.5, 1e-15);
}

TEST(MeshIo, DanglingIndexIsValidationError) {
  std::istringstream in("3 1\n0 0\n1 0\n0 1\n0 1 7\n");
  EXPECT_THROW(read_mesh(in), ValidationError);
}

TEST(MeshIo, ParseFailureCarriesLine) {
  std::istringstream in("3 1\n0 0\n1 zero\n0 1\n0 1 2\n");
  try {
    read_mesh(in);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(MeshIo, RoundTripIsExact) {
  const TriMesh m = test::jittered_square(0.25);
  std::stringstream ss;
  write_mesh(m, ss);
  const TriMesh r = read_mesh(ss);
  EXPECT_EQ(r.vertices(), m.vertices());
  EXPECT_EQ(r.triangles(), m.triangles());
  EXPECT_EQ(build_edge_topology(r).num_edges(), build_edge_topology(m).num_edges());
}

TEST(EdgeTopology, SmallMeshes) {
  const EdgeTopology one = build_edge_topology(test::unit_triangle());
  EXPECT_EQ(one.num_edges(), 3);
  EXPECT_EQ(one.num_boundary_edges(), 3);

  const TriMesh two = test::two_triangles();
  const EdgeTopology t2 = build_edge_topology(two);
  EXPECT_EQ(t2.num_edges(), 5);
  EXPECT_EQ(t2.num_boundary_edges(), 4);

  EXPECT_EQ(build_edge_topology(generate_square_mesh(-1, 1, -1, 1, 1.0)).num_edges(), 16);
}

TEST(EdgeTopology, InvariantsOnGeneratedMeshes) {
  for (const TriMesh& m : {generate_disk_mesh(1.0, 0.1), test::jittered_square(0.1)}) {
    const EdgeTopology topo = build_edge_topology(m);
    EXPECT_EQ(m.num_vertices() - topo.num_edges() + m.num_triangles(), 1);
    const int nb = topo.num_boundary_edges();
    EXPECT_EQ(3 * m.num_triangles(), 2 * (topo.num_edges() - nb) + nb);

    std::vector<int> sign_sum(topo.num_edges(), 0), refs(topo.num_edges(), 0);
    for (int t = 0; t < m.num_triangles(); ++t)
      for (const auto& le : topo.edge_of_triangle[t]) {
        sign_sum[le.edge] += le.sign;
        ++refs[le.edge];
      }
    for (int e = 0; e < topo.num_edges(); ++e) {
      EXPECT_LT(topo.edges[e][0], topo.edges[e][1]);
      if (topo.boundary_edge_flags[e]) {
        EXPECT_EQ(refs[e], 1);
      } else {
        EXPECT_EQ(refs[e], 2);
        EXPECT_EQ(sign_sum[e], 0);
      }
    }
  }
}

TEST(EdgeTopology, SignMatchesOutwardNormal) {
  const TriMesh m = test::jittered_square(0.2);
  const EdgeTopology topo = build_edge_topology(m);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 c = m.centroid(t);
    for (const auto& le : topo.edge_of_triangle[t]) {
      const Vec2 outward = topo.midpoint(le.edge) - c;
      EXPECT_GT(le.sign * dot(topo.normals[le.edge], outward), 0.0);
    }
  }
}
