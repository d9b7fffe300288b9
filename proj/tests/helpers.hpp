#ifndef SANDPILE_TESTS_HELPERS_HPP
#define SANDPILE_TESTS_HELPERS_HPP

#include <random>

#include "sandpile/mesh.hpp"

namespace sandpile::test {

inline TriMesh unit_triangle() { return TriMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}); }

// Two triangles sharing the diagonal of the unit square.
inline TriMesh two_triangles() { return TriMesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}}); }

inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240607);
  return gen;
}

inline double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng()); }

// Square mesh with jittered interior vertices, so tests do not depend on grid symmetry.
inline TriMesh jittered_square(double h, double amount = 0.25) {
  const TriMesh base = generate_square_mesh(-1, 1, -1, 1, h);
  std::vector<Vec2> v = base.vertices();
  for (int i = 0; i < base.num_vertices(); ++i)
    if (!base.is_boundary_vertex(i)) v[i] += Vec2{uniform(-amount, amount) * h, uniform(-amount, amount) * h};
  return TriMesh(std::move(v), base.triangles());
}

}  // namespace sandpile::test

#endif
