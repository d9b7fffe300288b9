#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "sandpile/material.hpp"

using namespace sandpile;
using test::uniform;

TEST(BuildSupport, Flat) {
  const TriMesh m = generate_disk_mesh(1.0, 0.1);
  const SupportData s = build_support(FlatSupport{}, m, 0.4);
  for (double v : s.w0_nodal.values) EXPECT_EQ(v, 0.0);
  for (double v : s.w0h_cell.values) EXPECT_EQ(v, 0.0);
  for (double v : s.k1h_cell.values) EXPECT_EQ(v, 0.4);
  EXPECT_TRUE(s.warnings.empty());
}

TEST(BuildSupport, ConeIsSteep) {
  const TriMesh m = generate_disk_mesh(1.0, 0.04);
  const SupportData s = build_support(ConeSupport{{0, 0}, 0.4}, m, 0.4);
  int inside = 0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    double rmin = 1.0, rmax = 0.0;
    for (int v : m.triangle(t)) {
      rmin = std::min(rmin, norm(m.vertex(v)));
      rmax = std::max(rmax, norm(m.vertex(v)));
    }
    if (rmax < 0.4 - 1e-12 && rmin > 0.05) {
      EXPECT_NEAR(s.k1h_cell[t], 1.0, m.h_max() / rmin);
      ++inside;
    }
    EXPECT_GE(s.k1h_cell[t], 0.4);
  }
  EXPECT_GT(inside, 50);
}

TEST(BuildSupport, PyramidFacesAndMargin) {
  const TriMesh m = generate_square_mesh(-1, 1, -1, 1, 0.05);
  const SupportData s = build_support(PyramidSupport{0.1}, m, 0.4);
  int faces = 0, margin = 0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 c = m.centroid(t);
    const double ax = std::abs(c.x), ay = std::abs(c.y);
    if (std::max(ax, ay) > 0.9 + 0.05) {
      EXPECT_DOUBLE_EQ(s.k1h_cell[t], 0.4);
      ++margin;
    } else if (std::max(ax, ay) < 0.85 && std::abs(ax - ay) > 0.1) {
      EXPECT_NEAR(s.k1h_cell[t], 1.0, 1e-12);
      ++faces;
    }
  }
  EXPECT_GT(faces, 100);
  EXPECT_GT(margin, 100);
}

TEST(BuildSupport, MustVanishOnBoundary) {
  const TriMesh m = generate_disk_mesh(1.0, 0.1);
  EXPECT_THROW(build_support(ConeSupport{{0, 0}, 2.0}, m, 0.4), ValidationError);
  EXPECT_THROW(build_support(ExpressionSupport{"0.1"}, m, 0.4), ValidationError);
  EXPECT_THROW(build_support(FlatSupport{}, m, 0.0), InvalidArgument);
}

TEST(BuildSupport, ExpressionWarnsAboutInflow) {
  const TriMesh m = generate_disk_mesh(1.0, 0.1);
  const SupportData s = build_support(ExpressionSupport{"max(0.4 - r, 0)"}, m, 0.4);
  EXPECT_EQ(s.warnings.size(), 1u);
  const SupportData cone = build_support(ConeSupport{{0, 0}, 0.4}, m, 0.4);
  for (int v = 0; v < m.num_vertices(); ++v) EXPECT_NEAR(s.w0_nodal[v], cone.w0_nodal[v], 1e-15);
}

TEST(MEpsPoint, Examples) {
  const double w0 = 0.3, eps = 0.01, k0 = 0.4, k1 = 1.0;
  EXPECT_DOUBLE_EQ(m_eps_point(w0 + eps, w0, k1, k0, eps), k0);
  EXPECT_DOUBLE_EQ(m_eps_point(w0, w0, k1, k0, eps), k1);
  EXPECT_NEAR(m_eps_point(w0 + eps / 2, w0, k1, k0, eps), 0.7, 1e-14);
  EXPECT_DOUBLE_EQ(m_eps_point(w0 - 1.0, w0, k1, k0, eps), k1);
  EXPECT_DOUBLE_EQ(m_eps_point(w0 + 1.0, w0, k1, k0, eps), k0);
}

TEST(MEpsPoint, LipschitzMonotoneAndBounded) {
  for (int i = 0; i < 10000; ++i) {
    const double k0 = uniform(0.1, 1), k1 = k0 + uniform(0, 2), eps = uniform(1e-3, 0.1);
    const double w0 = uniform(-0.5, 0.5);
    const double a = w0 + uniform(-2 * eps, 3 * eps), b = w0 + uniform(-2 * eps, 3 * eps);
    const double ma = m_eps_point(a, w0, k1, k0, eps), mb = m_eps_point(b, w0, k1, k0, eps);
    EXPECT_LE(std::abs(ma - mb), (k1 - k0) / eps * std::abs(a - b) * (1 + 1e-12) + 1e-15);
    if (a >= b) { EXPECT_LE(ma, mb + 1e-15); }
    EXPECT_GE(ma, k0);
    EXPECT_LE(ma, k1);
  }
}

TEST(MEpsH, FlatAndSupportLevel) {
  const TriMesh m = generate_disk_mesh(1.0, 0.1);
  ModelParams p;
  const SupportData flat = build_support(FlatSupport{}, m, p.k0);
  for (double v : m_eps_h(CellField(m, p.eps), flat, p).values) EXPECT_DOUBLE_EQ(v, p.k0);

  const SupportData cone = build_support(ConeSupport{{0, 0}, 0.4}, m, p.k0);
  const CellField at = m_eps_h(cone.w0h_cell, cone, p);
  for (int t = 0; t < m.num_triangles(); ++t) EXPECT_DOUBLE_EQ(at[t], cone.k1h_cell[t]);
}

TEST(MEpsH, MonotoneAndInRange) {
  const TriMesh m = test::jittered_square(0.1);
  ModelParams p;
  const SupportData s = build_support(ConeSupport{{0.3, 0}, 0.5}, m, p.k0);
  for (int trial = 0; trial < 20; ++trial) {
    CellField e1(m), e2(m);
    for (int t = 0; t < m.num_triangles(); ++t) {
      e2[t] = s.w0h_cell[t] + uniform(-p.eps, 2 * p.eps);
      e1[t] = e2[t] + uniform(0, p.eps);
    }
    const CellField m1 = m_eps_h(e1, s, p), m2 = m_eps_h(e2, s, p);
    for (int t = 0; t < m.num_triangles(); ++t) {
      EXPECT_LE(m1[t], m2[t]);
      EXPECT_GE(m1[t], p.k0);
      EXPECT_LE(m2[t], s.k1h_cell[t]);
    }
  }
}

namespace {

// max and area-weighted mean over cells of |M_eps(eta) - M_eps^h(eta)|, with
// M_eps evaluated from the exact support and its exact gradient at centroids.
std::pair<double, double> support_gap(double h, const ScalarFunction& w0, const VectorFunction& grad_w0,
                                      const SupportSpec& spec) {
  const TriMesh m = generate_disk_mesh(1.0, h);
  ModelParams p;
  p.eps = 0.05;
  const SupportData s = build_support(spec, m, p.k0);
  const CellField eta = p0_project([&](const Vec2& x) { return w0(x) + 0.5 * p.eps * (1 + std::sin(5 * x.x)); }, m);
  const CellField mh = m_eps_h(eta, s, p);
  double worst = 0.0, mean = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 c = m.centroid(t);
    const double k1 = std::max(p.k0, norm(grad_w0(c)));
    const double gap = std::abs(m_eps_point(eta[t], w0(c), k1, p.k0, p.eps) - mh[t]);
    worst = std::max(worst, gap);
    mean += m.area(t) * gap;
  }
  return {worst, mean / m.total_area()};
}

}  // namespace

TEST(SupportGapTrend, SmoothSupportMaxGapShrinks) {
  // C^1 bump with peak slope about 0.62 > k0.
  const auto w0 = [](const Vec2& x) {
    const double s = std::max(1 - dot(x, x) / 0.81, 0.0);
    return 0.4 * s * s;
  };
  const auto g = [](const Vec2& x) {
    const double s = std::max(1 - dot(x, x) / 0.81, 0.0);
    return (-4 * 0.4 * s / 0.81) * x;
  };
  const SupportSpec spec = ExpressionSupport{"0.4 * max(1 - r^2 / 0.81, 0)^2"};
  double prev = 1e9;
  for (double h : {0.1, 0.05, 0.025}) {
    const double gap = support_gap(h, w0, g, spec).first;
    EXPECT_LT(gap, prev);
    prev = gap;
  }
}

TEST(SupportGapTrend, ConeSupportMeanGapShrinks) {
  const auto w0 = [](const Vec2& x) { return std::max(0.4 - norm(x), 0.0); };
  const auto g = [](const Vec2& x) {
    const double r = norm(x);
    return (r > 0 && r < 0.4) ? (-1.0 / r) * x : Vec2{};
  };
  double prev = 1e9;
  for (double h : {0.1, 0.05, 0.025}) {
    const double gap = support_gap(h, w0, g, ConeSupport{{0, 0}, 0.4}).second;
    EXPECT_LT(gap, prev);
    prev = gap;
  }
}

TEST(Sources, ConstantAndDisk) {
  const TriMesh m = generate_disk_mesh(1.0, 0.05);
  for (double v : source_field_cells(ConstantSource{0.25}, m).values) EXPECT_EQ(v, 0.25);
  for (double v : source_field_nodes(ConstantSource{0.25}, m).values) EXPECT_EQ(v, 0.25);

  const CellField fc = source_field_cells(UniformDiskSource{{0, 0}, 0.2, 1.0}, m);
  const NodalField fn = source_field_nodes(UniformDiskSource{{0, 0}, 0.2, 1.0}, m);
  EXPECT_NEAR(integral(fc), 1.0, 1e-12);
  EXPECT_NEAR(integral(fn), 1.0, 1e-12);
  for (int t = 0; t < m.num_triangles(); ++t)
    if (norm(m.centroid(t)) > 0.2 + 1e-9) { EXPECT_EQ(fc[t], 0.0); }

  for (double v : source_field_cells(UniformDiskSource{{0, 0}, 0.2, 0.0}, m).values) EXPECT_EQ(v, 0.0);
}

TEST(Sources, DiskOutsideDomain) {
  const TriMesh m = generate_disk_mesh(1.0, 0.1);
  EXPECT_THROW(source_field_cells(UniformDiskSource{{5, 5}, 0.2, 1.0}, m), ValidationError);
  EXPECT_THROW(source_field_nodes(UniformDiskSource{{5, 5}, 0.2, 1.0}, m), ValidationError);
  EXPECT_THROW(source_field_cells(UniformDiskSource{{0, 0}, -1.0, 1.0}, m), InvalidArgument);
  EXPECT_THROW(source_field_cells(ConstantSource{-1.0}, m), InvalidArgument);
}

TEST(ModelParams, Validation) {
  ModelParams p;
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.num_steps(), 10);
  p.tau = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.r = 2.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.delta = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Expression, Evaluates) {
  const Expression e("2*x - y^2 + abs(-3) + sqrt(4) * min(1, 2) + max(r, 0) + 0*pi");
  EXPECT_NEAR(e({0.5, 2.0}), 1.0 - 4.0 + 3.0 + 2.0 + std::hypot(0.5, 2.0), 1e-14);
  EXPECT_NEAR(Expression("-2^2")({0, 0}), -4.0, 1e-15);
  EXPECT_NEAR(Expression("exp(0) + sin(0) + cos(0)")({0, 0}), 2.0, 1e-15);
  EXPECT_THROW(Expression("x +"), InvalidArgument);
  EXPECT_THROW(Expression("foo(x)"), InvalidArgument);
  EXPECT_THROW(Expression("(x"), InvalidArgument);
}
