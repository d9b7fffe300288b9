#ifndef SANDPILE_SCENARIO_HPP
#define SANDPILE_SCENARIO_HPP

// Scenario files, the built-in experiment registry and the end-to-end driver.
//
// A scenario is a flat `key = value` file; `#` starts a comment. Keys that do
// not apply to the selected variant (say `support.height` with a flat support)
// are rejected, so every accepted file has one canonical form.

#include <chrono>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sandpile/analytic.hpp"
#include "sandpile/errors.hpp"
#include "sandpile/io.hpp"
#include "sandpile/material.hpp"
#include "sandpile/mesh.hpp"
#include "sandpile/solver_a.hpp"
#include "sandpile/solver_b.hpp"

namespace sandpile {

struct DiskDomain {
  double radius = 1.0;
  bool operator==(const DiskDomain&) const = default;
};

struct SquareDomain {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
  bool operator==(const SquareDomain&) const = default;
};

using DomainSpec = std::variant<std::monostate, DiskDomain, SquareDomain>;

// h is the largest admissible element diameter.
struct GeneratedMesh {
  double h = 0.04;
  bool operator==(const GeneratedMesh&) const = default;
};

struct FileMesh {
  std::string path;
  bool operator==(const FileMesh&) const = default;
};

using MeshSpec = std::variant<GeneratedMesh, FileMesh>;

struct SolverA {
  double rho = 1.0;
  StoppingParamsA stopping;
  bool operator==(const SolverA&) const = default;
};

struct SolverB {
  StoppingParamsB stopping;
  SolveOptions linear;
  bool operator==(const SolverB&) const = default;
};

using SolverSpec = std::variant<SolverA, SolverB>;

enum class AnalyticRef { none, ex1, ex3 };

struct ScenarioConfig {
  std::string name = "scenario";
  DomainSpec domain = DiskDomain{};
  MeshSpec mesh = GeneratedMesh{};
  SupportSpec support = FlatSupport{};
  SourceSpec source = UniformDiskSource{};
  ModelParams params;
  SolverSpec solver = SolverB{};
  bool write_csv = true;
  bool write_vtk = false;
  std::vector<double> snapshots;
  AnalyticRef analytic = AnalyticRef::none;

  bool operator==(const ScenarioConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_number(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v))
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  return v;
}

inline int parse_int(const std::string& key, const std::string& text) {
  int v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key, "expected an integer, got '" + text + "'");
  return v;
}

inline std::vector<double> parse_numbers(const std::string& key, const std::string& text, std::size_t expect = 0) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number(key, item));
  if (expect != 0 && out.size() != expect)
    throw ConfigError(key, "expected " + std::to_string(expect) + " comma-separated numbers");
  return out;
}

inline Vec2 parse_point(const std::string& key, const std::string& text) {
  const auto v = parse_numbers(key, text, 2);
  return {v[0], v[1]};
}

// Key/value table that remembers which entries were consumed.
class KeyTable {
public:
  void set(const std::string& key, const std::string& value, int line) {
    if (!entries_.emplace(key, value).second)
      throw ConfigError(key, "duplicate key (line " + std::to_string(line) + ")");
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v) throw ConfigError(key, "missing required key");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    auto v = take(key);
    return v ? parse_number(key, *v) : fallback;
  }

  void finish() const {
    for (const auto& [k, v] : entries_)
      if (!used_.count(k)) throw ConfigError(k, "unknown key or key not applicable to this scenario");
  }

private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> used_;
};

inline void check_snapshots(const ScenarioConfig& cfg) {
  for (double t : cfg.snapshots) {
    const double k = std::round(t / cfg.params.tau);
    if (!(t > 0.0) || std::abs(t - k * cfg.params.tau) > 1e-12 * std::max(1.0, t))
      throw ConfigError("output.snapshots", "snapshot time " + format_double(t) + " is not a multiple of tau");
    if (k > cfg.params.num_steps())
      throw ConfigError("output.snapshots", "snapshot time " + format_double(t) + " exceeds T");
  }
}

inline void check_params(const ModelParams& p) {
  const std::pair<const char*, bool> checks[] = {
      {"params.k0", p.k0 > 0.0},     {"params.eps", p.eps > 0.0},     {"params.r", p.r > 1.0 && p.r < 2.0},
      {"params.delta", p.delta > 0.0}, {"params.T", p.T > 0.0},       {"params.tau", p.tau > 0.0}};
  for (const auto& [key, ok] : checks)
    if (!ok) throw ConfigError(key, "value out of range");
  if (std::abs(p.num_steps() * p.tau - p.T) > 1e-9 * p.T)
    throw ConfigError("params.T", "T must be a whole number of time steps");
}

}  // namespace detail

inline ScenarioConfig parse_scenario_text(const std::string& text) {
  detail::KeyTable kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", lineno);
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw FormatError("empty key", lineno);
    kv.set(key, value, lineno);
  }

  ScenarioConfig cfg;
  if (auto v = kv.take("name")) cfg.name = *v;

  if (auto f = kv.take("mesh.file")) {
    if (kv.take("mesh.h")) throw ConfigError("mesh.h", "give either mesh.h or mesh.file, not both");
    cfg.mesh = FileMesh{*f};
    cfg.domain = std::monostate{};
    if (kv.take("domain")) throw ConfigError("domain", "the domain comes from the mesh file");
  } else {
    const double h = detail::parse_number("mesh.h", kv.require("mesh.h"));
    if (!(h > 0.0)) throw ConfigError("mesh.h", "must be positive");
    cfg.mesh = GeneratedMesh{h};
    const std::string d = kv.require("domain");
    if (d == "disk") {
      const double r = kv.number("domain.radius", 1.0);
      if (!(r > h)) throw ConfigError("domain.radius", "must exceed mesh.h");
      cfg.domain = DiskDomain{r};
    } else if (d == "square") {
      SquareDomain s;
      if (auto b = kv.take("domain.bounds")) {
        const auto v = detail::parse_numbers("domain.bounds", *b, 4);
        s = {v[0], v[1], v[2], v[3]};
      }
      if (!(s.xmax > s.xmin && s.ymax > s.ymin)) throw ConfigError("domain.bounds", "empty box");
      if (!(h < std::min(s.xmax - s.xmin, s.ymax - s.ymin))) throw ConfigError("mesh.h", "must be below the side length");
      cfg.domain = s;
    } else {
      throw ConfigError("domain", "expected disk or square, got '" + d + "'");
    }
  }

  const std::string sup = kv.take("support").value_or("flat");
  if (sup == "flat") {
    cfg.support = FlatSupport{};
  } else if (sup == "cone") {
    ConeSupport c;
    if (auto v = kv.take("support.center")) c.center = detail::parse_point("support.center", *v);
    c.height = kv.number("support.height", c.height);
    if (!(c.height > 0.0)) throw ConfigError("support.height", "must be positive");
    cfg.support = c;
  } else if (sup == "pyramid") {
    PyramidSupport p;
    p.margin = kv.number("support.margin", p.margin);
    if (!(p.margin > 0.0)) throw ConfigError("support.margin", "must be positive");
    cfg.support = p;
  } else if (sup == "expression") {
    ExpressionSupport e{kv.require("support.expr")};
    try {
      Expression probe(e.expr);
    } catch (const Error& err) {
      throw ConfigError("support.expr", err.what());
    }
    cfg.support = e;
  } else {
    throw ConfigError("support", "expected flat, cone, pyramid or expression, got '" + sup + "'");
  }

  const std::string src = kv.take("source").value_or("disk");
  if (src == "disk") {
    UniformDiskSource s;
    if (auto v = kv.take("source.center")) s.center = detail::parse_point("source.center", *v);
    s.radius = kv.number("source.radius", s.radius);
    s.total_rate = kv.number("source.rate", s.total_rate);
    if (!(s.radius > 0.0)) throw ConfigError("source.radius", "must be positive");
    if (!(s.total_rate >= 0.0)) throw ConfigError("source.rate", "must be non-negative");
    cfg.source = s;
  } else if (src == "constant") {
    ConstantSource s;
    s.rate = kv.number("source.rate", s.rate);
    if (!(s.rate >= 0.0)) throw ConfigError("source.rate", "must be non-negative");
    cfg.source = s;
  } else {
    throw ConfigError("source", "expected disk or constant, got '" + src + "'");
  }

  ModelParams& p = cfg.params;
  p.k0 = kv.number("params.k0", p.k0);
  p.eps = kv.number("params.eps", p.eps);
  p.r = kv.number("params.r", p.r);
  p.delta = kv.number("params.delta", p.delta);
  p.T = kv.number("params.T", p.T);
  p.tau = kv.number("params.tau", p.tau);
  detail::check_params(p);

  const std::string solver = kv.require("solver");
  if (solver == "A") {
    SolverA a;
    a.rho = kv.number("solver.rho", std::holds_alternative<FlatSupport>(cfg.support) ? 1.0 : 0.05);
    a.stopping.tol_w = kv.number("solver.tol_w", a.stopping.tol_w);
    a.stopping.tol_phi = kv.number("solver.tol_phi", a.stopping.tol_phi);
    if (auto v = kv.take("solver.max_iters")) a.stopping.max_iters = detail::parse_int("solver.max_iters", *v);
    if (!(a.rho > 0.0)) throw ConfigError("solver.rho", "must be positive");
    if (!(a.stopping.tol_w > 0.0)) throw ConfigError("solver.tol_w", "must be positive");
    if (!(a.stopping.tol_phi > 0.0)) throw ConfigError("solver.tol_phi", "must be positive");
    if (a.stopping.max_iters < 1) throw ConfigError("solver.max_iters", "must be at least 1");
    cfg.solver = a;
  } else if (solver == "B") {
    SolverB b;
    b.stopping.tol = kv.number("solver.tol", b.stopping.tol);
    if (auto v = kv.take("solver.max_iters")) b.stopping.max_iters = detail::parse_int("solver.max_iters", *v);
    if (auto v = kv.take("solver.linear")) {
      if (*v == "cholesky") b.linear.method = SolveMethod::direct_cholesky;
      else if (*v == "cg") b.linear.method = SolveMethod::conjugate_gradient;
      else throw ConfigError("solver.linear", "expected cholesky or cg, got '" + *v + "'");
    }
    if (!(b.stopping.tol > 0.0)) throw ConfigError("solver.tol", "must be positive");
    if (b.stopping.max_iters < 1) throw ConfigError("solver.max_iters", "must be at least 1");
    cfg.solver = b;
  } else {
    throw ConfigError("solver", "expected A or B, got '" + solver + "'");
  }

  if (auto v = kv.take("output")) {
    cfg.write_csv = cfg.write_vtk = false;
    for (const auto& item : detail::split_list(*v)) {
      if (item == "csv") cfg.write_csv = true;
      else if (item == "vtk") cfg.write_vtk = true;
      else if (item != "none") throw ConfigError("output", "expected csv, vtk or none, got '" + item + "'");
    }
  }
  if (auto v = kv.take("output.snapshots"); v && !v->empty())
    cfg.snapshots = detail::parse_numbers("output.snapshots", *v);
  detail::check_snapshots(cfg);

  const std::string an = kv.take("analytic").value_or("none");
  if (an == "none") cfg.analytic = AnalyticRef::none;
  else if (an == "ex1") cfg.analytic = AnalyticRef::ex1;
  else if (an == "ex3") cfg.analytic = AnalyticRef::ex3;
  else throw ConfigError("analytic", "expected none, ex1 or ex3, got '" + an + "'");
  if (cfg.analytic != AnalyticRef::none) {
    const auto* disk = std::get_if<UniformDiskSource>(&cfg.source);
    if (!disk || disk->center != Vec2{}) throw ConfigError("analytic", "reference needs a disk source at the origin");
    if (cfg.analytic == AnalyticRef::ex1 && !std::holds_alternative<FlatSupport>(cfg.support))
      throw ConfigError("analytic", "ex1 reference needs a flat support");
    if (cfg.analytic == AnalyticRef::ex3) {
      const auto* cone = std::get_if<ConeSupport>(&cfg.support);
      if (!cone || cone->center != Vec2{}) throw ConfigError("analytic", "ex3 reference needs a cone support at the origin");
    }
  }

  kv.finish();
  return cfg;
}

inline ScenarioConfig parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

/// Canonical text: every applicable key, fixed order, 17 significant digits.
inline std::string emit_scenario(const ScenarioConfig& cfg) {
  std::ostringstream os;
  const auto num = [](double v) { return detail::shortest(v); };
  const auto pt = [&](const Vec2& v) { return num(v.x) + ", " + num(v.y); };
  os << "name = " << cfg.name << '\n';
  if (const auto* d = std::get_if<DiskDomain>(&cfg.domain)) {
    os << "domain = disk\ndomain.radius = " << num(d->radius) << '\n';
  } else if (const auto* s = std::get_if<SquareDomain>(&cfg.domain)) {
    os << "domain = square\ndomain.bounds = " << num(s->xmin) << ", " << num(s->xmax) << ", " << num(s->ymin) << ", "
       << num(s->ymax) << '\n';
  }
  if (const auto* g = std::get_if<GeneratedMesh>(&cfg.mesh)) os << "mesh.h = " << num(g->h) << '\n';
  else os << "mesh.file = " << std::get<FileMesh>(cfg.mesh).path << '\n';

  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FlatSupport>) {
          os << "support = flat\n";
        } else if constexpr (std::is_same_v<S, ConeSupport>) {
          os << "support = cone\nsupport.center = " << pt(s.center) << "\nsupport.height = " << num(s.height) << '\n';
        } else if constexpr (std::is_same_v<S, PyramidSupport>) {
          os << "support = pyramid\nsupport.margin = " << num(s.margin) << '\n';
        } else {
          os << "support = expression\nsupport.expr = " << s.expr << '\n';
        }
      },
      cfg.support);
  if (const auto* d = std::get_if<UniformDiskSource>(&cfg.source)) {
    os << "source = disk\nsource.center = " << pt(d->center) << "\nsource.radius = " << num(d->radius)
       << "\nsource.rate = " << num(d->total_rate) << '\n';
  } else {
    os << "source = constant\nsource.rate = " << num(std::get<ConstantSource>(cfg.source).rate) << '\n';
  }

  const ModelParams& p = cfg.params;
  os << "params.k0 = " << num(p.k0) << "\nparams.eps = " << num(p.eps) << "\nparams.r = " << num(p.r)
     << "\nparams.delta = " << num(p.delta) << "\nparams.T = " << num(p.T) << "\nparams.tau = " << num(p.tau) << '\n';

  if (const auto* a = std::get_if<SolverA>(&cfg.solver)) {
    os << "solver = A\nsolver.rho = " << num(a->rho) << "\nsolver.tol_w = " << num(a->stopping.tol_w)
       << "\nsolver.tol_phi = " << num(a->stopping.tol_phi) << "\nsolver.max_iters = " << a->stopping.max_iters
       << '\n';
  } else {
    const auto& b = std::get<SolverB>(cfg.solver);
    os << "solver = B\nsolver.tol = " << num(b.stopping.tol) << "\nsolver.max_iters = " << b.stopping.max_iters
       << "\nsolver.linear = " << (b.linear.method == SolveMethod::direct_cholesky ? "cholesky" : "cg") << '\n';
  }

  std::string out;
  if (cfg.write_csv) out += "csv";
  if (cfg.write_vtk) out += out.empty() ? "vtk" : ", vtk";
  os << "output = " << (out.empty() ? "none" : out) << '\n';
  if (!cfg.snapshots.empty()) {
    os << "output.snapshots = ";
    for (std::size_t i = 0; i < cfg.snapshots.size(); ++i) os << (i ? ", " : "") << num(cfg.snapshots[i]);
    os << '\n';
  }
  static constexpr const char* names[] = {"none", "ex1", "ex3"};
  os << "analytic = " << names[static_cast<int>(cfg.analytic)] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Built-in experiments

namespace detail {

inline std::string ex1_text(const char* name, char solver, double h) {
  std::string s = std::string("name = ") + name +
                  "\ndomain = disk\nmesh.h = " + format_double(h) +
                  "\nsupport = flat\nsource = disk\nsource.radius = 0.2\nparams.eps = 0.01\nparams.T = 0.1\n";
  if (solver == 'A') s += "params.tau = 0.01\nsolver = A\nsolver.rho = 1\n";
  else s += "params.tau = 0.005\nsolver = B\n";
  return s + "output.snapshots = 0.05, 0.1\nanalytic = ex1\n";
}

inline std::string ex3_text(const char* name, double h) {
  return std::string("name = ") + name + "\ndomain = disk\nmesh.h = " + format_double(h) +
         "\nsupport = cone\nsupport.height = 0.4\nsource = disk\nsource.radius = 0.2\n"
         "params.eps = 0.005\nparams.T = 0.1\nparams.tau = 0.0005\nsolver = B\n"
         "output.snapshots = 0.05, 0.1\nanalytic = ex3\n";
}

}  // namespace detail

/// The four reference experiments, in each solver variant they were run with.
inline const std::map<std::string, std::string>& builtin_scenario_texts() {
  static const std::map<std::string, std::string> table = {
      {"ex1-qa-h04", detail::ex1_text("ex1-qa-h04", 'A', 0.04)},
      {"ex1-qa-h02", detail::ex1_text("ex1-qa-h02", 'A', 0.02)},
      {"ex1-qb-h04", detail::ex1_text("ex1-qb-h04", 'B', 0.04)},
      {"ex1-qb-h02", detail::ex1_text("ex1-qb-h02", 'B', 0.02)},
      {"ex2-qa",
       "name = ex2-qa\ndomain = square\ndomain.bounds = -1, 1, -1, 1\nmesh.h = 0.02\n"
       "support = cone\nsupport.center = 0.3, 0\nsupport.height = 0.5\n"
       "source = disk\nsource.radius = 0.7\nsource.rate = 1\n"
       "params.eps = 0.01\nparams.T = 0.1\nparams.tau = 0.005\nsolver = A\nsolver.rho = 0.05\n"
       "output.snapshots = 0.05, 0.1\n"},
      {"ex3-qb-h04", detail::ex3_text("ex3-qb-h04", 0.04)},
      {"ex3-qb-h02", detail::ex3_text("ex3-qb-h02", 0.02)},
      // Fluxes on the pyramid faces start out at the delta scale and the lagged
      // iteration grows them by only a few percent per sweep, so the first
      // active steps need more sweeps than the default allows.
      {"ex4-pyramid",
       "name = ex4-pyramid\ndomain = square\ndomain.bounds = -1, 1, -1, 1\nmesh.h = 0.02\n"
       "support = pyramid\nsupport.margin = 0.1\nsource = constant\nsource.rate = 0.25\n"
       "params.eps = 0.02\nparams.T = 0.075\nparams.tau = 0.0025\nsolver = B\nsolver.max_iters = 5000\n"
       "output.snapshots = 0.025, 0.05, 0.075\n"},
  };
  return table;
}

inline ScenarioConfig builtin_scenario(const std::string& name) {
  const auto& t = builtin_scenario_texts();
  auto it = t.find(name);
  if (it == t.end()) throw ConfigError("name", "no built-in scenario called '" + name + "'");
  return parse_scenario_text(it->second);
}

/// A path to a scenario file, or the name of a built-in one.
inline ScenarioConfig load_scenario(const std::string& path_or_name) {
  if (std::filesystem::exists(path_or_name)) return parse_scenario(path_or_name);
  if (builtin_scenario_texts().count(path_or_name)) return builtin_scenario(path_or_name);
  throw IoError("no scenario file or built-in scenario named " + path_or_name);
}

// ---------------------------------------------------------------------------
// Setup

struct ScenarioSetup {
  std::unique_ptr<TriMesh> mesh;
  std::unique_ptr<EdgeTopology> topo;  // solver B only
  SupportData support;
  NodalField source_nodes;
  CellField source_cells;
};

inline TriMesh build_mesh(const ScenarioConfig& cfg) {
  if (const auto* f = std::get_if<FileMesh>(&cfg.mesh)) return load_mesh(f->path);
  const double h = std::get<GeneratedMesh>(cfg.mesh).h;
  if (const auto* d = std::get_if<DiskDomain>(&cfg.domain)) return generate_disk_mesh_max_diameter(d->radius, h);
  const auto& s = std::get<SquareDomain>(cfg.domain);
  return generate_square_mesh(s.xmin, s.xmax, s.ymin, s.ymax, h / std::sqrt(2.0));
}

inline ScenarioSetup build_setup(const ScenarioConfig& cfg) {
  ScenarioSetup s;
  s.mesh = std::make_unique<TriMesh>(build_mesh(cfg));
  s.support = build_support(cfg.support, *s.mesh, cfg.params.k0);
  if (std::holds_alternative<SolverA>(cfg.solver)) {
    s.source_nodes = source_field_nodes(cfg.source, *s.mesh);
  } else {
    s.topo = std::make_unique<EdgeTopology>(build_edge_topology(*s.mesh));
    s.source_cells = source_field_cells(cfg.source, *s.mesh);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Analytic references

struct ExactSolution {
  ScalarFunction surface;
  VectorFunction flux;
};

/// Exact surface and flux at time t, or nothing when the scenario has no
/// reference or t lies outside the regime the reference covers.
inline std::optional<ExactSolution> exact_solution(const ScenarioConfig& cfg, double t) {
  if (cfg.analytic == AnalyticRef::none) return std::nullopt;
  const auto& src = std::get<UniformDiskSource>(cfg.source);
  const double k0 = cfg.params.k0, R0 = src.radius, rate = src.total_rate;
  if (cfg.analytic == AnalyticRef::ex1) {
    if (t < ex1_tstar(k0, R0) / rate) return std::nullopt;
    return ExactSolution{[=](const Vec2& x) { return ex1_surface(t, norm(x), k0, R0, rate); },
                         radial_field([=](double R) { return ex1_flux(t, R, k0, R0, rate); })};
  }
  const double c = std::get<ConeSupport>(cfg.support).height;
  try {
    ex3_radii(t, k0, c, rate);
  } catch (const OutOfRegime&) {
    return std::nullopt;
  }
  return ExactSolution{[=](const Vec2& x) { return ex3_surface(t, norm(x), k0, c, rate); },
                       radial_field([=](double R) { return ex3_flux(t, R, k0, R0, c, rate); })};
}

// ---------------------------------------------------------------------------
// Running

struct ErrorReport {
  struct Row {
    double t = 0.0;
    std::optional<double> surface_error;
    std::optional<double> flux_error;
    int iterations = 0;  // cumulative up to t
    double wall_time = 0.0;
  };
  std::string scenario;
  std::vector<Row> rows;

  CsvTable to_csv() const {
    CsvTable tab{{"t", "surface_error", "flux_error", "iterations", "wall_time"}, {}};
    const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : rows)
      tab.rows.push_back({format_double(r.t), opt(r.surface_error), opt(r.flux_error), std::to_string(r.iterations),
                          format_double(r.wall_time)});
    return tab;
  }
};

struct StepLog {
  int step = 0;
  double t = 0.0;
  int iterations = 0;
  double volume = 0.0;
  double wall_time = 0.0;
  // solver A: complementarity and gradient-bound excess; solver B: balance residual and max|W|
  double monitor1 = 0.0;
  double monitor2 = 0.0;
};

struct ScenarioResult {
  ScenarioConfig config;
  ScenarioSetup setup;
  std::optional<QaRun> qa;
  std::optional<QbRun> qb;
  std::vector<StepLog> steps;
  ErrorReport report;
  double wall_time = 0.0;
};

using ProgressCallback = std::function<void(const StepLog&)>;

namespace detail {

inline std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

inline void write_outputs(const ScenarioResult& res, const std::filesystem::path& dir) {
  const ScenarioConfig& cfg = res.config;
  const TriMesh& mesh = *res.setup.mesh;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::string stem = (dir / cfg.name).string();

  if (cfg.write_csv) {
    export_csv(res.report.to_csv(), stem + "_report.csv");
    const bool a = res.qa.has_value();
    CsvTable steps{{"step", "t", "iterations", "volume", "wall_time",
                    a ? "complementarity" : "balance_residual", a ? "gradient_excess" : "max_abs_w"},
                   {}};
    for (const auto& s : res.steps)
      steps.add_row({double(s.step), s.t, double(s.iterations), s.volume, s.wall_time, s.monitor1, s.monitor2});
    export_csv(steps, stem + "_steps.csv");
  }

  const auto snap_io = [&](double t, const auto& write_profiles, const auto& vtk_fields) {
    const auto exact = exact_solution(cfg, t);
    const std::string tag = stem + "_t" + time_tag(t);
    if (cfg.write_csv) write_profiles(tag, exact);
    if (cfg.write_vtk) export_vtk(mesh, vtk_fields(), tag + ".vtk");
  };
  const auto rel = [&](const auto& f, const auto& w0) {
    auto d = f;
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] -= w0.values[i];
    return d;
  };

  if (res.qa) {
    for (const auto& s : res.qa->snapshots) {
      snap_io(
          s.t,
          [&](const std::string& tag, const std::optional<ExactSolution>& ex) {
            export_csv(radial_surface_profile(s.W, ex ? ex->surface : ScalarFunction{}), tag + "_surface.csv");
            export_csv(radial_cell_profile(nullptr, s.Q, {}, ex ? ex->flux : VectorFunction{}), tag + "_flux.csv");
          },
          [&] {
            return std::vector<VtkField>{{"W", s.W},
                                         {"depth", rel(s.W, res.setup.support.w0_nodal)},
                                         {"Q", s.Q}};
          });
    }
  } else {
    for (const auto& s : res.qb->snapshots) {
      const CellVectorField qc = rt0_cell_centers(s.Q);
      snap_io(
          s.t,
          [&](const std::string& tag, const std::optional<ExactSolution>& ex) {
            export_csv(radial_cell_profile(&s.W, qc, ex ? ex->surface : ScalarFunction{},
                                           ex ? ex->flux : VectorFunction{}),
                       tag + "_profile.csv");
          },
          [&] {
            CellField qabs(mesh);
            for (int t = 0; t < mesh.num_triangles(); ++t) qabs[t] = norm(qc[t]);
            return std::vector<VtkField>{
                {"W", s.W}, {"depth", rel(s.W, res.setup.support.w0h_cell)}, {"Q", qc}, {"abs_Q", qabs}};
          });
    }
  }
}

}  // namespace detail

/// Builds the discrete problem, runs the selected solver, scores snapshots
/// against the analytic reference (if any) and writes outputs into out_dir
/// unless the scenario asks for none.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {},
                                   const ProgressCallback& progress = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  ScenarioResult res;
  res.config = cfg;
  res.setup = build_setup(cfg);
  res.report.scenario = cfg.name;
  const auto log = [&](StepLog s) {
    s.wall_time = elapsed();
    res.steps.push_back(s);
    if (progress) progress(s);
  };

  if (const auto* a = std::get_if<SolverA>(&cfg.solver)) {
    QaProblem prob;
    prob.mesh = res.setup.mesh.get();
    prob.support = &res.setup.support;
    prob.source = res.setup.source_nodes;
    prob.params = cfg.params;
    prob.rho = a->rho;
    prob.stopping = a->stopping;
    prob.snapshot_times = cfg.snapshots;
    res.qa = run_qa(prob, [&](const SolverStateA&, const QaStepRecord& r) {
      log({r.step, r.t, r.iterations, r.volume, 0.0, r.complementarity, r.gradient_excess});
    });
  } else {
    const auto& b = std::get<SolverB>(cfg.solver);
    QbProblem prob;
    prob.topo = res.setup.topo.get();
    prob.support = &res.setup.support;
    prob.source = res.setup.source_cells;
    prob.params = cfg.params;
    prob.stopping = b.stopping;
    prob.linear = b.linear;
    prob.snapshot_times = cfg.snapshots;
    res.qb = run_qb(prob, [&](const SolverStateB&, const QbStepRecord& r) {
      log({r.step, r.t, r.iterations, r.volume, 0.0, r.balance_residual, r.max_abs_w});
    });
  }

  const auto row_for = [&](double t) {
    ErrorReport::Row row;
    row.t = t;
    for (const auto& s : res.steps) {
      if (s.t > t * (1.0 + 1e-12)) break;
      row.iterations += s.iterations;
      row.wall_time = s.wall_time;
    }
    return row;
  };
  if (res.qa) {
    for (const auto& s : res.qa->snapshots) {
      ErrorReport::Row row = row_for(s.t);
      if (const auto ex = exact_solution(cfg, s.t)) {
        row.surface_error = rel_l1_error_surface(s.W, ex->surface);
        row.flux_error = rel_l1_error_flux(s.Q, ex->flux);
      }
      res.report.rows.push_back(row);
    }
  } else {
    for (const auto& s : res.qb->snapshots) {
      ErrorReport::Row row = row_for(s.t);
      if (const auto ex = exact_solution(cfg, s.t)) {
        row.surface_error = rel_l1_error_surface(s.W, ex->surface);
        row.flux_error = rel_l1_error_flux(s.Q, ex->flux);
      }
      res.report.rows.push_back(row);
    }
  }
  res.wall_time = elapsed();
  if (out_dir && (cfg.write_csv || cfg.write_vtk)) detail::write_outputs(res, *out_dir);
  return res;
}

}  // namespace sandpile

#endif  // SANDPILE_SCENARIO_HPP
