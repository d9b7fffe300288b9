// Command line front end: run scenarios, print analytic profiles, inspect meshes.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "sandpile/scenario.hpp"

namespace {

using namespace sandpile;

enum ExitCode { ok = 0, failure = 1, config_error = 2, non_convergence = 3, io_error = 4 };

std::mutex out_mutex;

void print_report(const ErrorReport& rep, double wall) {
  std::lock_guard lock(out_mutex);
  std::printf("%s\n", rep.scenario.c_str());
  std::printf("  %-8s %-14s %-14s %-10s %s\n", "t", "surface_err", "flux_err", "iters", "wall[s]");
  for (const auto& r : rep.rows) {
    const auto pct = [](const std::optional<double>& v) {
      char buf[32];
      if (v) std::snprintf(buf, sizeof buf, "%.3f%%", 100.0 * *v);
      else std::snprintf(buf, sizeof buf, "-");
      return std::string(buf);
    };
    std::printf("  %-8g %-14s %-14s %-10d %.1f\n", r.t, pct(r.surface_error).c_str(), pct(r.flux_error).c_str(),
                r.iterations, r.wall_time);
  }
  std::printf("  total wall time %.1f s\n", wall);
}

// Runs `body`, mapping library errors onto exit codes.
template <class F>
int guarded(const std::string& what, F&& body) {
  try {
    body();
    return ok;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s: config error [%s]: %s\n", what.c_str(), e.key().c_str(), e.what());
    return config_error;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "%s: line %d: %s\n", what.c_str(), e.line(), e.what());
    return config_error;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "%s: %s\n", what.c_str(), e.what());
    return non_convergence;
  } catch (const IoError& e) {
    std::fprintf(stderr, "%s: %s\n", what.c_str(), e.what());
    return io_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: %s\n", what.c_str(), e.what());
    return failure;
  }
}

int cmd_run(const std::vector<std::string>& configs, const std::string& out, bool sweep, unsigned jobs, bool verbose) {
  if (configs.size() > 1 && !sweep) {
    std::fprintf(stderr, "run: several configs given; pass --sweep to run them all\n");
    return config_error;
  }
  std::vector<ScenarioConfig> cfgs;
  for (const auto& c : configs) {
    ScenarioConfig cfg;
    if (int rc = guarded(c, [&] { cfg = load_scenario(c); }); rc != ok) return rc;
    cfgs.push_back(std::move(cfg));
  }

  const auto run_one = [&](const ScenarioConfig& cfg) {
    const std::filesystem::path dir = sweep ? std::filesystem::path(out) / cfg.name : std::filesystem::path(out);
    return guarded(cfg.name, [&] {
      const auto progress = [&](const StepLog& s) {
        if (!verbose) return;
        std::lock_guard lock(out_mutex);
        std::fprintf(stderr, "[%s] step %d t=%g iters=%d volume=%.6g (%.1f s)\n", cfg.name.c_str(), s.step, s.t,
                     s.iterations, s.volume, s.wall_time);
      };
      const ScenarioResult res = run_scenario(cfg, dir, progress);
      for (const auto& w : res.setup.support.warnings) std::fprintf(stderr, "[%s] warning: %s\n", cfg.name.c_str(), w.c_str());
      print_report(res.report, res.wall_time);
    });
  };

  if (!sweep) return run_one(cfgs.front());

  std::atomic<std::size_t> next{0};
  std::vector<int> codes(cfgs.size(), ok);
  {
    std::vector<std::jthread> pool;
    const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cfgs.size())));
    for (unsigned w = 0; w < n; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cfgs.size(); i = next++) codes[i] = run_one(cfgs[i]);
      });
  }
  const auto bad = std::find_if(codes.begin(), codes.end(), [](int c) { return c != ok; });
  return bad == codes.end() ? ok : *bad;
}

int cmd_compare(const std::string& config) {
  return guarded(config, [&] {
    ScenarioConfig cfg = load_scenario(config);
    if (cfg.analytic == AnalyticRef::none) throw ConfigError("analytic", "scenario has no analytic reference to compare with");
    cfg.write_csv = cfg.write_vtk = false;
    const ScenarioResult res = run_scenario(cfg);
    print_report(res.report, res.wall_time);
  });
}

int cmd_mesh_info(const std::string& config) {
  return guarded(config, [&] {
    const ScenarioConfig cfg = load_scenario(config);
    const TriMesh mesh = build_mesh(cfg);
    const EdgeTopology topo = build_edge_topology(mesh);
    const MeshQuality q = mesh_quality(mesh);
    std::printf("vertices        %d\n", mesh.num_vertices());
    std::printf("triangles       %d\n", mesh.num_triangles());
    std::printf("edges           %d (%d on the boundary)\n", topo.num_edges(), topo.num_boundary_edges());
    std::printf("area            %.10g\n", mesh.total_area());
    std::printf("h_max           %.6g\n", q.h_max);
    std::printf("h_min           %.6g\n", q.h_min);
    std::printf("regularity      %.6g\n", q.regularity);
  });
}

int cmd_analytic(const std::string& which, double t, int samples, double k0, double R0, double cone, double rate,
                 double rmax) {
  return guarded("analytic", [&] {
    if (samples < 2) throw InvalidArgument("need at least 2 samples");
    std::printf("R,w,q\n");
    for (int i = 0; i < samples; ++i) {
      const double R = rmax * i / (samples - 1);
      double w, q;
      if (which == "ex1") {
        w = ex1_surface(t, R, k0, R0, rate);
        q = ex1_flux(t, R, k0, R0, rate);
      } else {
        w = ex3_surface(t, R, k0, cone, rate);
        q = ex3_flux(t, R, k0, R0, cone, rate);
      }
      std::printf("%s,%s,%s\n", format_double(R).c_str(), format_double(w).c_str(), format_double(q).c_str());
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Growing sand piles: mixed finite element solvers and reference solutions"};
  app.require_subcommand(1);

  std::vector<std::string> run_configs;
  std::string out_dir = "out";
  bool sweep = false, verbose = false;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* run = app.add_subcommand("run", "run a scenario file or built-in scenario and write its outputs");
  run->add_option("config", run_configs, "scenario file(s) or built-in names")->required();
  run->add_option("--out", out_dir, "output directory")->capture_default_str();
  run->add_flag("--sweep", sweep, "run several scenarios on a worker pool, one sub-directory each");
  run->add_option("--jobs", jobs, "workers for --sweep")->check(CLI::PositiveNumber);
  run->add_flag("-v,--verbose", verbose, "print per-step progress");

  std::string compare_config;
  auto* compare = app.add_subcommand("compare", "run without writing files and print errors against the reference");
  compare->add_option("config", compare_config)->required();

  std::string mesh_config;
  auto* mesh = app.add_subcommand("mesh-info", "print size and quality of a scenario's mesh");
  mesh->add_option("config", mesh_config)->required();

  std::string which;
  double t = 0.1, k0 = 0.4, R0 = 0.2, cone = 0.4, rate = 1.0, rmax = 1.0;
  int samples = 101;
  auto* analytic = app.add_subcommand("analytic", "print a reference profile R,w,q as CSV");
  analytic->add_option("which", which)->required()->check(CLI::IsMember({"ex1", "ex3"}));
  analytic->add_option("--t", t, "time")->capture_default_str();
  analytic->add_option("--samples", samples, "number of radii in [0, rmax]")->capture_default_str();
  analytic->add_option("--k0", k0)->capture_default_str();
  analytic->add_option("--R0", R0, "source radius")->capture_default_str();
  analytic->add_option("--cone", cone, "cone height (ex3)")->capture_default_str();
  analytic->add_option("--rate", rate, "total source rate")->capture_default_str();
  analytic->add_option("--rmax", rmax)->capture_default_str();

  auto* list = app.add_subcommand("list", "list built-in scenarios");
  std::string show_name;
  auto* show = app.add_subcommand("show", "print the canonical text of a scenario");
  show->add_option("config", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  if (*run) return cmd_run(run_configs, out_dir, sweep, jobs, verbose);
  if (*compare) return cmd_compare(compare_config);
  if (*mesh) return cmd_mesh_info(mesh_config);
  if (*analytic) return cmd_analytic(which, t, samples, k0, R0, cone, rate, rmax);
  if (*list) {
    for (const auto& [name, text] : builtin_scenario_texts()) std::printf("%s\n", name.c_str());
    return ok;
  }
  if (*show) return guarded(show_name, [&] { std::fputs(emit_scenario(load_scenario(show_name)).c_str(), stdout); });
  return ok;
}
