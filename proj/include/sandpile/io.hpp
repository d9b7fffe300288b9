#ifndef SANDPILE_IO_HPP
#define SANDPILE_IO_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "sandpile/errors.hpp"
#include "sandpile/fem.hpp"

namespace sandpile {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Legacy ASCII VTK

struct VtkField {
  std::string name;
  std::variant<NodalField, CellField, CellVectorField> data;
};

inline void export_vtk(const TriMesh& mesh, const std::vector<VtkField>& fields, std::ostream& os) {
  os << "# vtk DataFile Version 3.0\n"
     << "sandpile\n"
     << "ASCII\n"
     << "DATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& p : mesh.vertices()) os << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
  os << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.num_triangles() << '\n';
  for (int t = 0; t < mesh.num_triangles(); ++t) os << "5\n";

  std::vector<const VtkField*> point_fields, cell_fields;
  for (const auto& f : fields) {
    const bool is_point = std::holds_alternative<NodalField>(f.data);
    const TriMesh* m = std::visit([](const auto& d) { return d.mesh; }, f.data);
    if (m != &mesh) throw InvalidArgument("export_vtk: field '" + f.name + "' lives on another mesh");
    (is_point ? point_fields : cell_fields).push_back(&f);
  }
  if (!point_fields.empty()) {
    os << "POINT_DATA " << mesh.num_vertices() << '\n';
    for (const auto* f : point_fields) {
      os << "SCALARS " << f->name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : std::get<NodalField>(f->data).values) os << format_double(v) << '\n';
    }
  }
  if (!cell_fields.empty()) {
    os << "CELL_DATA " << mesh.num_triangles() << '\n';
    for (const auto* f : cell_fields) {
      if (const auto* c = std::get_if<CellField>(&f->data)) {
        os << "SCALARS " << f->name << " double 1\nLOOKUP_TABLE default\n";
        for (double v : c->values) os << format_double(v) << '\n';
      } else {
        os << "VECTORS " << f->name << " double\n";
        for (const auto& v : std::get<CellVectorField>(f->data).values)
          os << format_double(v.x) << ' ' << format_double(v.y) << " 0\n";
      }
    }
  }
}

inline void export_vtk(const TriMesh& mesh, const std::vector<VtkField>& fields, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  export_vtk(mesh, fields, os);
  if (!os) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(const std::vector<double>& values) {
    std::vector<std::string> row;
    row.reserve(values.size());
    for (double v : values) row.push_back(format_double(v));
    rows.push_back(std::move(row));
  }
};

inline void export_csv(const CsvTable& table, std::ostream& os) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
}

inline void export_csv(const CsvTable& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  export_csv(table, os);
  if (!os) throw IoError("write failed: " + path);
}

// Radial profiles sorted by R. Surface rows are nodes (P1) or cells (P0); flux
// rows are cells, sampled at the centroid.
inline CsvTable radial_surface_profile(const NodalField& w, const ScalarFunction& exact) {
  const TriMesh& mesh = *w.mesh;
  std::vector<int> order(mesh.num_vertices());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norm(mesh.vertex(a)) < norm(mesh.vertex(b)); });
  CsvTable tab{{"R", "w_exact", "w_numeric"}, {}};
  for (int v : order) tab.add_row({norm(mesh.vertex(v)), exact ? exact(mesh.vertex(v)) : 0.0, w[v]});
  return tab;
}

inline CsvTable radial_cell_profile(const CellField* w, const CellVectorField& q, const ScalarFunction& w_exact,
                                    const VectorFunction& q_exact) {
  const TriMesh& mesh = *q.mesh;
  std::vector<int> order(mesh.num_triangles());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norm(mesh.centroid(a)) < norm(mesh.centroid(b)); });
  CsvTable tab;
  if (w) tab.columns = {"R", "w_exact", "w_numeric", "q_exact", "q_numeric"};
  else tab.columns = {"R", "q_exact", "q_numeric"};
  for (int t : order) {
    const Vec2 c = mesh.centroid(t);
    const double qe = q_exact ? norm(q_exact(c)) : 0.0;
    if (w) tab.add_row({norm(c), w_exact ? w_exact(c) : 0.0, (*w)[t], qe, norm(q[t])});
    else tab.add_row({norm(c), qe, norm(q[t])});
  }
  return tab;
}

}  // namespace sandpile

#endif  // SANDPILE_IO_HPP
