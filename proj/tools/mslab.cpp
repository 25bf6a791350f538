// mslab: mean shift clustering with automatic bandwidth matrices.

#include "mslab/harness.hpp"
#include "mslab/io.hpp"
#include "mslab/parallel.hpp"
#include "mslab/partition.hpp"
#include "mslab/registry.hpp"
#include "mslab/selectors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace mslab;
using nlohmann::json;

namespace {

struct Shared {
  int threads = default_threads();
  bool verbose = false;
  std::string registry_path;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

const ModelRegistry& registry_for(const Shared& shared) {
  static ModelRegistry custom;
  static bool loaded = false;
  if (shared.registry_path.empty()) return ModelRegistry::builtin();
  if (!loaded) {
    custom = ModelRegistry::from_file(shared.registry_path);
    loaded = true;
  }
  return custom;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "a,b;c,d" -> 2x2 matrix
Matrix parse_matrix(const std::string& text) {
  return PilotRule::parse("fixed:" + text).fixed;
}

BandwidthMatrix restrict_to_class(const BandwidthMatrix& H, SearchClass search) {
  return search == SearchClass::Diagonal ? BandwidthMatrix::diagonal(H.matrix().diagonal()) : H;
}

// ---------------------------------------------------------------- select

struct SelectArgs {
  std::string data;
  std::string selector = "ns";
  std::string pilot = "normal-scale";
  bool dry_run = false;
  double x_tol = SimplexSettings{}.x_tol;
  double f_tol = SimplexSettings{}.f_tol;
  int max_evaluations = SimplexSettings{}.max_evaluations;
  std::string out;
};

SelectorSpec make_spec(const std::string& name, const std::string& pilot, double x_tol, double f_tol,
                       int max_evaluations) {
  SelectorSpec spec = SelectorSpec::parse(name);
  spec.pilot = PilotRule::parse(pilot);
  spec.optimizer.x_tol = x_tol;
  spec.optimizer.f_tol = f_tol;
  spec.optimizer.max_evaluations = max_evaluations;
  return spec;
}

int run_select(const SelectArgs& a) {
  const DataSet data = read_data_csv(a.data);
  const SelectorSpec spec = make_spec(a.selector, a.pilot, a.x_tol, a.f_tol, a.max_evaluations);
  json out;
  if (a.dry_run) {
    out = {{"selector", spec.name()}, {"dry_run", true}};
    if (spec.method == SelectorMethod::NS || spec.method == SelectorMethod::AT) {
      out["H"] = to_json(select_bandwidth(spec, data).H.matrix());
    } else {
      const BandwidthMatrix start = restrict_to_class(ns_bandwidth(data), spec.search);
      out["H_start"] = to_json(start.matrix());
      out["value"] = evaluate_criterion(spec, data, start);
      if (spec.needs_pilot()) out["pilot_rule"] = spec.pilot.describe();
    }
  } else {
    out = to_json(select_bandwidth(spec, data), spec);
  }
  out["n"] = data.size();
  out["d"] = data.dim();
  emit(out.dump(2) + "\n", a.out);
  return 0;
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string data;
  std::string H;
  std::string selector;
  std::string pilot = "normal-scale";
  int grid = 0;
  double pad = 3.0;
  std::string labels_out;
  std::string partition_out;
  std::string meta_out;
  double step_tol = MeanShiftConfig{}.step_tol;
  double merge_tol = MeanShiftConfig{}.merge_tol;
  int max_iterations = MeanShiftConfig{}.max_iterations;
};

int run_cluster(const ClusterArgs& a, const Shared& shared) {
  const DataSet data = read_data_csv(a.data);
  if (a.H.empty() == a.selector.empty()) throw std::invalid_argument("give exactly one of --H and --selector");
  MeanShiftConfig cfg;
  cfg.step_tol = a.step_tol;
  cfg.merge_tol = a.merge_tol;
  cfg.max_iterations = a.max_iterations;
  cfg.validate();

  json meta = {{"data", a.data}, {"n", data.size()}, {"d", data.dim()}};
  std::optional<BandwidthMatrix> H;
  if (!a.H.empty()) {
    H = BandwidthMatrix(parse_matrix(a.H));
    meta["bandwidth_source"] = "given";
  } else {
    SelectorSpec spec = SelectorSpec::parse(a.selector);
    spec.pilot = PilotRule::parse(a.pilot);
    const SelectionResult sel = select_bandwidth(spec, data);
    H = sel.H;
    meta["selection"] = to_json(sel, spec);
  }
  if (H->dim() != data.dim()) throw std::invalid_argument("--H dimension differs from the data");
  meta["H"] = to_json(H->matrix());

  const ClusterResult result = cluster(data.points(), data, *H, cfg, shared.threads);
  std::ostringstream labels;
  write_labels_csv(labels, data.points(), result.labels);
  emit(labels.str(), a.labels_out);
  meta["clusters"] = result.cluster_count();
  meta["modes"] = to_json(result.modes);
  meta["nonconverged"] = result.nonconverged;
  meta["meanshift"] = {{"step_tol", cfg.step_tol}, {"merge_tol", cfg.merge_tol},
                       {"max_iterations", cfg.max_iterations}};

  if (a.grid > 0) {
    // data bounding box widened by `pad` kernel standard deviations
    const Vector sd = H->matrix().diagonal().cwiseSqrt();
    const Vector lo = data.points().colwise().minCoeff().transpose() - a.pad * sd;
    const Vector hi = data.points().colwise().maxCoeff().transpose() + a.pad * sd;
    const GridSpec grid(lo, hi, a.grid);
    LabelingInfo info;
    const SpacePartition part = label_grid(grid, data, *H, cfg, {}, shared.threads, &info);
    meta["grid"] = to_json(grid);
    meta["grid_clusters"] = part.cluster_count();
    meta["grid_total_mass"] = part.total_mass();
    meta["grid_nonconverged"] = info.nonconverged;
    if (!a.partition_out.empty()) {
      std::ostringstream out;
      write_partition_csv(out, part);
      write_text_file(a.partition_out, out.str());
    }
  } else if (!a.partition_out.empty()) {
    throw std::invalid_argument("--partition-out needs --grid");
  }
  if (!a.meta_out.empty()) write_text_file(a.meta_out, meta.dump(2) + "\n");
  if (shared.verbose) std::cerr << result.cluster_count() << " clusters\n";
  return 0;
}

// ---------------------------------------------------------------- distance

int run_distance(const std::string& a_path, const std::string& b_path, const std::string& out) {
  const SpacePartition a = read_partition_csv(a_path);
  const SpacePartition b = read_partition_csv(b_path);
  json report = to_json(distance_in_measure(a, b));
  report["a"] = a_path;
  report["b"] = b_path;
  report["resolution"] = a.grid.resolution;
  report["clusters"] = {a.cluster_count(), b.cluster_count()};
  emit(report.dump(2) + "\n", out);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::string models;
  std::string selectors;
  int reps = -1;
  int n = -1;
  int grid = -1;
  long long seed = -1;
  std::string pilot;
  std::string out = "mslab-report";
  std::string cache;
  bool no_cache = false;
  bool record_timing = false;
};

ExperimentConfig simulate_config(const SimulateArgs& a, const Shared& shared) {
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    const json j = json::parse(read_text_file(a.config));
    static const std::set<std::string> known = {"models", "selectors", "replications", "sample_size",
                                                "resolution", "seed", "pilot"};
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    }
    if (j.contains("models")) cfg.models = j["models"].get<std::vector<std::string>>();
    if (j.contains("selectors")) cfg.selectors = j["selectors"].get<std::vector<std::string>>();
    if (j.contains("replications")) cfg.replications = j["replications"].get<int>();
    if (j.contains("sample_size")) cfg.sample_size = j["sample_size"].get<int>();
    if (j.contains("resolution")) cfg.resolution = j["resolution"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("pilot")) cfg.pilot = PilotRule::parse(j["pilot"].get<std::string>());
  }
  if (!a.models.empty()) cfg.models = split_list(a.models);
  if (!a.selectors.empty()) cfg.selectors = split_list(a.selectors);
  if (a.reps >= 0) cfg.replications = a.reps;
  if (a.n >= 0) cfg.sample_size = a.n;
  if (a.grid >= 0) cfg.resolution = a.grid;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.pilot.empty()) cfg.pilot = PilotRule::parse(a.pilot);
  cfg.threads = shared.threads;
  cfg.record_timing = a.record_timing;
  if (!a.no_cache) cfg.cache_dir = a.cache.empty() ? (fs::path(a.out) / "cache").string() : a.cache;
  return cfg;
}

int run_simulate(const SimulateArgs& a, const Shared& shared) {
  const ExperimentConfig cfg = simulate_config(a, shared);
  ProgressFn progress;
  if (shared.verbose) progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
  const ExperimentReport report = run(cfg, registry_for(shared), progress);
  write_report(report, a.out);
  int failures = 0;
  for (const auto& row : report.rows) failures += row.failed ? 1 : 0;
  std::cerr << report.rows.size() << " rows written to " << a.out << " (" << failures << " failed)\n";
  return 0;
}

// ---------------------------------------------------------------- models

int run_models_list(const Shared& shared) {
  const auto& reg = registry_for(shared);
  for (const auto& name : reg.names()) {
    const json& e = reg.entry(name);
    std::cout << name << '\t' << e.value("type", "?") << '\t' << e.value("true_clusters", 0) << " clusters"
              << (e.value("reconstruction", false) ? "\treconstruction" : "") << '\n';
  }
  return 0;
}

int run_models_show(const std::string& name, const Shared& shared) {
  const auto& reg = registry_for(shared);
  if (!reg.contains(name)) throw std::invalid_argument("unknown model '" + name + "'");
  std::cout << reg.entry(name).dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- plot

int plot_partition(const std::string& path, const std::string& prefix) {
  const SpacePartition part = read_partition_csv(path);
  if (part.grid.dim() != 2) throw std::invalid_argument("partition plots need 2-D grids");
  const std::string data_file = prefix + ".csv";
  std::ostringstream data;
  write_partition_csv(data, part);
  write_text_file(data_file, data.str());
  std::ostringstream gp;
  gp << "# partition of " << path << " (" << part.cluster_count() << " clusters)\n"
     << "set datafile separator ','\n"
     << "set terminal pngcairo size 800,800\n"
     << "set output '" << fs::path(prefix).filename().string() << ".png'\n"
     << "set size ratio -1\n"
     << "set key off\n"
     << "set palette maxcolors " << std::max(2, part.cluster_count()) << "\n"
     << "set cbrange [-0.5:" << part.cluster_count() - 0.5 << "]\n"
     << "set xrange [" << format_number(part.grid.lo(0)) << ':' << format_number(part.grid.hi(0)) << "]\n"
     << "set yrange [" << format_number(part.grid.lo(1)) << ':' << format_number(part.grid.hi(1)) << "]\n"
     << "plot '" << fs::path(data_file).filename().string()
     << "' skip 1 using 1:2:3 with points pt 5 ps 0.5 lc palette\n";
  write_text_file(prefix + ".gp", gp.str());
  return 0;
}

std::vector<std::vector<std::string>> read_csv_cells(const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream cs(line);
    std::string cell;
    while (std::getline(cs, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int plot_report(const std::string& dir, const std::string& prefix) {
  const fs::path summary = fs::path(dir) / "summary.csv";
  if (!fs::exists(summary)) throw std::invalid_argument("no summary.csv in '" + dir + "'");
  const auto rows = read_csv_cells(summary.string());
  if (rows.size() < 2) throw std::invalid_argument("report '" + dir + "' is empty");
  const auto& header = rows.front();
  if (header.size() < 3) throw std::invalid_argument("report '" + dir + "' has no selector columns");

  // rows: selector, then the median for each model
  std::vector<std::string> models;
  std::vector<std::vector<std::string>> medians;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2 || rows[r][1] != "median") continue;
    models.push_back(rows[r][0]);
    medians.push_back(rows[r]);
  }
  if (models.empty()) throw std::invalid_argument("report '" + dir + "' has no median rows");
  std::ostringstream data;
  data << "selector";
  for (const auto& m : models) data << ',' << m;
  data << '\n';
  for (std::size_t c = 2; c < header.size(); ++c) {
    data << header[c];
    for (const auto& row : medians) data << ',' << (c < row.size() && !row[c].empty() ? row[c] : "NaN");
    data << '\n';
  }
  write_text_file(prefix + ".csv", data.str());

  std::ostringstream gp;
  gp << "# median distance in measure per selector, from " << dir << "\n"
     << "set datafile separator ','\n"
     << "set terminal pngcairo size 1000,500\n"
     << "set output '" << fs::path(prefix).filename().string() << ".png'\n"
     << "set style data histogram\n"
     << "set style histogram clustered\n"
     << "set style fill solid 0.8\n"
     << "set logscale y\n"
     << "set ylabel 'median distance in measure'\n"
     << "set key outside right\n"
     << "plot for [k=2:" << models.size() + 1 << "] '" << fs::path(prefix + ".csv").filename().string()
     << "' using k:xtic(1) title columnheader(k)\n";
  write_text_file(prefix + ".gp", gp.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mslab: mean shift clustering with automatic bandwidth matrix selection"};
  app.require_subcommand(1);
  Shared shared;
  app.add_option("--threads", shared.threads, "worker threads (default: MSLAB_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", shared.verbose, "progress messages on stderr");
  app.add_option("--registry", shared.registry_path, "model catalogue JSON (default: built-in)");

  SelectArgs sel;
  auto* select_cmd = app.add_subcommand("select", "choose a bandwidth matrix for a data set");
  select_cmd->add_option("data", sel.data, "data CSV")->required();
  select_cmd->add_option("-s,--selector", sel.selector, "ns|at|cvu|cvd|piu|pid|scvu|scvd|itu|itd");
  select_cmd->add_option("--pilot", sel.pilot, "normal-scale | fixed:a,b;c,d");
  select_cmd->add_flag("--dry-run", sel.dry_run, "evaluate the criterion at the normal-scale start only");
  select_cmd->add_option("--x-tol", sel.x_tol, "simplex size tolerance")->check(CLI::PositiveNumber);
  select_cmd->add_option("--f-tol", sel.f_tol, "relative criterion tolerance")->check(CLI::PositiveNumber);
  select_cmd->add_option("--max-evals", sel.max_evaluations, "criterion evaluation budget")
      ->check(CLI::PositiveNumber);
  select_cmd->add_option("-o,--out", sel.out, "output JSON (default stdout)");

  ClusterArgs cl;
  auto* cluster_cmd = app.add_subcommand("cluster", "mean shift clustering of a data set");
  cluster_cmd->add_option("data", cl.data, "data CSV")->required();
  cluster_cmd->add_option("--H", cl.H, "bandwidth matrix as a,b;c,d");
  cluster_cmd->add_option("-s,--selector", cl.selector, "select the bandwidth with this method");
  cluster_cmd->add_option("--pilot", cl.pilot, "pilot rule for piu/pid/scvu/scvd/itu/itd");
  cluster_cmd->add_option("--grid", cl.grid, "also label a grid with this many points per axis")
      ->check(CLI::Range(2, 100000));
  cluster_cmd->add_option("--pad", cl.pad, "grid margin in kernel standard deviations")
      ->check(CLI::NonNegativeNumber);
  cluster_cmd->add_option("-o,--labels-out", cl.labels_out, "labels CSV (default stdout)");
  cluster_cmd->add_option("--partition-out", cl.partition_out, "grid partition CSV");
  cluster_cmd->add_option("--meta-out", cl.meta_out, "metadata JSON");
  cluster_cmd->add_option("--step-tol", cl.step_tol, "mean shift step tolerance");
  cluster_cmd->add_option("--merge-tol", cl.merge_tol, "mode merge tolerance");
  cluster_cmd->add_option("--max-iter", cl.max_iterations, "mean shift iteration cap");

  std::string dist_a, dist_b, dist_out;
  auto* distance_cmd = app.add_subcommand("distance", "distance in measure between two grid partitions");
  distance_cmd->add_option("a", dist_a, "partition CSV (its masses define the measure)")->required();
  distance_cmd->add_option("b", dist_b, "partition CSV on the same grid")->required();
  distance_cmd->add_option("-o,--out", dist_out, "output JSON (default stdout)");

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "run the selector comparison study");
  simulate_cmd->add_option("--config", sim.config, "JSON with models, selectors, replications, "
                                                   "sample_size, resolution, seed, pilot");
  simulate_cmd->add_option("--models", sim.models, "comma-separated model names (default all)");
  simulate_cmd->add_option("--selectors", sim.selectors, "comma-separated selectors (default all)");
  simulate_cmd->add_option("-R,--reps", sim.reps, "replications (default 20)")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("-n,--sample-size", sim.n, "sample size (default 500)")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--grid", sim.grid, "grid points per axis (default 60)")->check(CLI::Range(2, 100000));
  simulate_cmd->add_option("--seed", sim.seed, "master seed")->check(CLI::NonNegativeNumber);
  simulate_cmd->add_option("--pilot", sim.pilot, "pilot rule");
  simulate_cmd->add_option("-o,--out", sim.out, "report directory");
  simulate_cmd->add_option("--cache", sim.cache, "ideal partition cache (default <out>/cache)");
  simulate_cmd->add_flag("--no-cache", sim.no_cache, "always recompute ideal partitions");
  simulate_cmd->add_flag("--record-timing", sim.record_timing, "fill the seconds column");

  auto* models_cmd = app.add_subcommand("models", "inspect the model catalogue");
  models_cmd->require_subcommand(1);
  auto* models_list = models_cmd->add_subcommand("list", "list models");
  std::string show_name;
  auto* models_show = models_cmd->add_subcommand("show", "print a model definition");
  models_show->add_option("name", show_name)->required();

  std::string plot_partition_path, plot_report_dir, plot_prefix = "mslab-plot";
  auto* plot_cmd = app.add_subcommand("plot", "write gnuplot scripts for a partition or a report");
  auto* plot_part_opt = plot_cmd->add_option("--partition", plot_partition_path, "partition CSV");
  auto* plot_rep_opt = plot_cmd->add_option("--report", plot_report_dir, "simulate output directory");
  plot_part_opt->excludes(plot_rep_opt);
  plot_cmd->add_option("-o,--out", plot_prefix, "output prefix for .gp and .csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*select_cmd) return run_select(sel);
    if (*cluster_cmd) return run_cluster(cl, shared);
    if (*distance_cmd) return run_distance(dist_a, dist_b, dist_out);
    if (*simulate_cmd) return run_simulate(sim, shared);
    if (*models_list) return run_models_list(shared);
    if (*models_show) return run_models_show(show_name, shared);
    if (*plot_cmd) {
      if (!plot_partition_path.empty()) return plot_partition(plot_partition_path, plot_prefix);
      if (!plot_report_dir.empty()) return plot_report(plot_report_dir, plot_prefix);
      throw std::invalid_argument("plot needs --partition or --report");
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
