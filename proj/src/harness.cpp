#include "mslab/harness.hpp"

#include "mslab/io.hpp"
#include "mslab/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

namespace mslab {

namespace {

constexpr const char* kVersion = "1.0.0";

std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

nlohmann::json ideal_key(const nlohmann::json& entry, const GridSpec& grid, const IdealConfig& cfg) {
  return {{"format", "mslab-ideal-1"},
          {"model", entry},
          {"grid", to_json(grid)},
          {"ideal", {{"step_factor", cfg.step_factor},
                     {"step_tol", cfg.step_tol},
                     {"merge_tol", cfg.merge_tol},
                     {"max_iterations", cfg.max_iterations},
                     {"connect_radius", cfg.connect_radius},
                     {"ridge_dip", cfg.ridge_dip}}}};
}

struct Job {
  int model;
  int rep;
  int selector;
};

}  // namespace

void ExperimentConfig::resolve(const ModelRegistry& registry) {
  if (models.empty()) models = registry.names();
  if (selectors.empty()) selectors = selector_names();
  if (replications < 1) throw std::invalid_argument("replications must be at least 1");
  if (resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  meanshift.validate();
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (!registry.contains(m)) throw std::invalid_argument("unknown model '" + m + "'");
    if (!seen.insert(m).second) throw std::invalid_argument("model '" + m + "' listed twice");
    if (sample_size < registry.get(m)->dim() + 1) {
      throw std::invalid_argument("sample size must be at least d + 1");
    }
  }
  seen.clear();
  for (auto& s : selectors) {
    s = SelectorSpec::parse(s).name();  // validates and normalizes case
    if (!seen.insert(s).second) throw std::invalid_argument("selector '" + s + "' listed twice");
  }
}

std::uint64_t replication_seed(std::uint64_t master, const std::string& model, int replication) {
  std::uint64_t h = fnv1a(model, splitmix(master));
  h = splitmix(h ^ static_cast<std::uint64_t>(replication));
  return h;
}

IdealClustering cached_ideal(const std::string& model_name, const nlohmann::json& model_entry,
                             const DensityModel& model, const GridSpec& grid, const IdealConfig& cfg,
                             const std::string& cache_dir, int threads, bool* from_cache) {
  if (from_cache) *from_cache = false;
  const nlohmann::json key = ideal_key(model_entry, grid, cfg);
  std::filesystem::path file;
  if (!cache_dir.empty()) {
    file = std::filesystem::path(cache_dir) / ("ideal-" + model_name + "-" + hex(fnv1a(key.dump())) + ".json");
    if (std::filesystem::exists(file)) {
      try {
        const auto doc = nlohmann::json::parse(read_text_file(file.string()));
        if (doc.at("key") == key) {
          IdealClustering out;
          out.partition = SpacePartition(grid, doc.at("labels").get<std::vector<int>>(),
                                         cell_masses(model, grid, threads));
          out.modes = matrix_from_json(doc.at("modes"));
          out.model_name = model_name;
          out.nonconverged = doc.at("nonconverged").get<int>();
          out.saddle_restarts = doc.at("saddle_restarts").get<int>();
          out.matches_declared = out.partition.cluster_count() == model.info().true_clusters;
          if (from_cache) *from_cache = true;
          return out;
        }
      } catch (const std::exception&) {
        // unreadable cache entries are recomputed and overwritten
      }
    }
  }
  IdealClustering out = ideal_clustering(model, grid, cfg, threads);
  if (!file.empty()) {
    const nlohmann::json doc = {{"key", key},
                                {"labels", out.partition.labels},
                                {"modes", to_json(out.modes)},
                                {"nonconverged", out.nonconverged},
                                {"saddle_restarts", out.saddle_restarts}};
    write_text_file(file.string(), doc.dump());
  }
  return out;
}

ExperimentReport run(ExperimentConfig config, const ModelRegistry& registry, const ProgressFn& progress) {
  config.resolve(registry);
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config;

  std::vector<SelectorSpec> specs;
  for (const auto& s : config.selectors) {
    SelectorSpec spec = SelectorSpec::parse(s);
    spec.pilot = config.pilot;
    spec.optimizer = config.optimizer;
    specs.push_back(spec);
  }

  struct ModelState {
    std::shared_ptr<const DensityModel> model;
    GridSpec grid;
    IdealClustering ideal;
  };
  std::vector<ModelState> states;
  for (const auto& name : config.models) {
    ModelState st;
    st.model = registry.get(name);
    st.grid = build_grid(*st.model, config.resolution);
    bool cached = false;
    st.ideal = cached_ideal(name, registry.entry(name), *st.model, st.grid, config.ideal,
                            config.cache_dir, config.threads, &cached);
    IdealSummary summary;
    summary.model = name;
    summary.grid = st.grid;
    summary.clusters = st.ideal.partition.cluster_count();
    summary.declared = st.model->info().true_clusters;
    summary.total_mass = st.ideal.partition.total_mass();
    summary.nonconverged = st.ideal.nonconverged;
    summary.from_cache = cached;
    report.ideals.push_back(summary);
    if (progress) {
      progress("ideal " + name + ": " + std::to_string(summary.clusters) + " clusters (declared " +
               std::to_string(summary.declared) + ")" + (cached ? " [cached]" : ""));
    }
    states.push_back(std::move(st));
  }

  std::vector<Job> jobs;
  for (int m = 0; m < static_cast<int>(states.size()); ++m) {
    for (int r = 0; r < config.replications; ++r) {
      for (int s = 0; s < static_cast<int>(specs.size()); ++s) jobs.push_back({m, r, s});
    }
  }
  report.rows.resize(jobs.size());
  std::atomic<int> done{0};
  std::mutex progress_mutex;

  parallel_for(static_cast<int>(jobs.size()), config.threads, [&](int j) {
    const Job& job = jobs[j];
    const ModelState& st = states[job.model];
    const auto started = std::chrono::steady_clock::now();
    ReportRow row;
    row.model = config.models[job.model];
    row.selector = specs[job.selector].name();
    row.rep = job.rep + 1;
    try {
      const DataSet data =
          st.model->sample(config.sample_size, replication_seed(config.seed, row.model, row.rep));
      const SelectionResult sel = select_bandwidth(specs[job.selector], data);
      row.H = sel.H.matrix();
      if (!sel.converged) row.flags.push_back("select-nonconverged");
      LabelingInfo info;
      const SpacePartition part =
          label_grid(st.grid, data, sel.H, config.meanshift, st.ideal.partition.masses, 1, &info);
      if (info.nonconverged) row.flags.push_back("meanshift-nonconverged=" + std::to_string(info.nonconverged));
      if (info.below_floor) row.flags.push_back("below-floor=" + std::to_string(info.below_floor));
      if (info.ascent_violations) {
        row.flags.push_back("ascent-violations=" + std::to_string(info.ascent_violations));
      }
      row.n_clusters = part.cluster_count();
      row.distance = distance_in_measure(st.ideal.partition, part).distance;
    } catch (const std::exception& e) {
      row.failed = true;
      row.distance = std::numeric_limits<double>::quiet_NaN();
      row.n_clusters = 0;
      std::string what = e.what();
      std::replace(what.begin(), what.end(), ';', ' ');
      row.flags.push_back("error=" + what);
    }
    if (config.record_timing) row.seconds = seconds_since(started);
    report.rows[j] = std::move(row);
    const int finished = ++done;
    if (progress && (finished % 50 == 0 || finished == static_cast<int>(jobs.size()))) {
      std::lock_guard lock(progress_mutex);
      progress(std::to_string(finished) + "/" + std::to_string(jobs.size()) + " jobs done");
    }
  });

  report.wall_seconds = seconds_since(t0);
  return report;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - lo;
  // exact when the neighbours coincide, so constant samples give IQR 0
  if (values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<SummaryRow> summarize(const ExperimentReport& report) {
  if (report.rows.empty()) throw std::invalid_argument("empty report");
  std::vector<SummaryRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::map<std::size_t, std::vector<double>> distances;
  for (const auto& row : report.rows) {
    const auto key = std::make_pair(row.model, row.selector);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      SummaryRow s;
      s.model = row.model;
      s.selector = row.selector;
      out.push_back(s);
    }
    SummaryRow& s = out[it->second];
    ++s.runs;
    if (!row.flags.empty()) ++s.flagged;
    if (row.failed) {
      ++s.failures;
    } else {
      distances[it->second].push_back(row.distance);
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& v = distances[k];
    if (v.empty()) {
      out[k].median = out[k].q1 = out[k].q3 = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out[k].median = quantile(v, 0.5);
    out[k].q1 = quantile(v, 0.25);
    out[k].q3 = quantile(v, 0.75);
  }
  return out;
}

int CountRow::total() const {
  int t = 0;
  for (const auto& [k, c] : counts) t += c;
  return t;
}

std::vector<CountRow> count_table(const ExperimentReport& report) {
  if (report.rows.empty()) throw std::invalid_argument("empty report");
  std::vector<CountRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& row : report.rows) {
    const auto key = std::make_pair(row.model, row.selector);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({row.model, row.selector, {}});
    }
    ++out[it->second].counts[row.failed ? 0 : row.n_clusters];
  }
  return out;
}

std::string raw_csv(const ExperimentReport& report) {
  int d = 0;
  for (const auto& row : report.rows) d = std::max(d, static_cast<int>(row.H.rows()));
  std::ostringstream out;
  out << "model,selector,rep,distance,n_clusters,flags,seconds";
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) out << ",h" << i + 1 << j + 1;
  }
  out << '\n';
  for (const auto& row : report.rows) {
    out << csv_field(row.model) << ',' << row.selector << ',' << row.rep << ','
        << (row.failed ? "" : format_number(row.distance)) << ',' << row.n_clusters << ','
        << csv_field(join(row.flags, ';')) << ',' << (row.seconds >= 0.0 ? format_number(row.seconds) : "");
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        out << ',';
        if (i < row.H.rows() && j < row.H.cols()) out << format_number(row.H(i, j));
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string summary_csv(const ExperimentReport& report) {
  const auto rows = summarize(report);
  const auto& cfg = report.config;
  std::map<std::pair<std::string, std::string>, const SummaryRow*> lookup;
  for (const auto& r : rows) lookup[{r.model, r.selector}] = &r;

  std::ostringstream out;
  out << "model,statistic";
  for (const auto& s : cfg.selectors) out << ',' << s;
  out << '\n';
  const std::vector<std::pair<const char*, double (*)(const SummaryRow&)>> stats = {
      {"median", [](const SummaryRow& r) { return r.median; }},
      {"iqr", [](const SummaryRow& r) { return r.iqr(); }},
      {"flag_rate", [](const SummaryRow& r) { return r.flag_rate(); }},
  };
  for (const auto& m : cfg.models) {
    for (const auto& [label, fn] : stats) {
      out << csv_field(m) << ',' << label;
      for (const auto& s : cfg.selectors) {
        out << ',';
        const auto it = lookup.find({m, s});
        if (it != lookup.end() && !std::isnan(fn(*it->second))) out << format_number(fn(*it->second));
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string counts_csv(const ExperimentReport& report) {
  const auto rows = count_table(report);
  int max_count = 1;
  for (const auto& r : rows) {
    if (!r.counts.empty()) max_count = std::max(max_count, r.counts.rbegin()->first);
  }
  for (const auto& ideal : report.ideals) max_count = std::max(max_count, ideal.declared);
  std::ostringstream out;
  out << "model,selector,true_clusters,failed";
  for (int k = 1; k <= max_count; ++k) out << ',' << k;
  out << '\n';
  std::map<std::string, int> declared;
  for (const auto& ideal : report.ideals) declared[ideal.model] = ideal.declared;
  for (const auto& r : rows) {
    auto count = [&](int k) {
      const auto it = r.counts.find(k);
      return it == r.counts.end() ? 0 : it->second;
    };
    out << csv_field(r.model) << ',' << r.selector << ',' << declared[r.model] << ',' << count(0);
    for (int k = 1; k <= max_count; ++k) out << ',' << count(k);
    out << '\n';
  }
  return out.str();
}

nlohmann::json metadata(const ExperimentReport& report) {
  const auto& c = report.config;
  nlohmann::json ideals = nlohmann::json::array();
  for (const auto& i : report.ideals) {
    ideals.push_back({{"model", i.model},
                      {"grid", to_json(i.grid)},
                      {"clusters", i.clusters},
                      {"declared_clusters", i.declared},
                      {"total_mass", i.total_mass},
                      {"leakage", 1.0 - i.total_mass},
                      {"nonconverged", i.nonconverged}});
  }
  std::map<std::string, int> flag_counts;
  int failures = 0;
  for (const auto& row : report.rows) {
    failures += row.failed ? 1 : 0;
    for (const auto& f : row.flags) flag_counts[f.substr(0, f.find('='))]++;
  }
  // Nothing here depends on the worker count or the cache state, so reruns
  // are byte-identical; wall time is only recorded on request.
  nlohmann::json out = {{"tool", "mslab"},
          {"version", kVersion},
          {"config",
           {{"models", c.models},
            {"selectors", c.selectors},
            {"replications", c.replications},
            {"sample_size", c.sample_size},
            {"resolution", c.resolution},
            {"seed", c.seed},
            {"pilot", c.pilot.describe()},
            {"optimizer",
             {{"initial_step", c.optimizer.initial_step},
              {"x_tol", c.optimizer.x_tol},
              {"f_tol", c.optimizer.f_tol},
              {"max_evaluations", c.optimizer.max_evaluations}}},
            {"meanshift",
             {{"step_tol", c.meanshift.step_tol},
              {"merge_tol", c.meanshift.merge_tol},
              {"max_iterations", c.meanshift.max_iterations},
              {"density_floor", c.meanshift.density_floor}}},
            {"ideal",
             {{"step_factor", c.ideal.step_factor},
              {"step_tol", c.ideal.step_tol},
              {"merge_tol", c.ideal.merge_tol},
              {"max_iterations", c.ideal.max_iterations},
              {"connect_radius", c.ideal.connect_radius},
              {"ridge_dip", c.ideal.ridge_dip}}},
            {"record_timing", c.record_timing}}},
          {"quantiles", "linear interpolation at p (m - 1) of the sorted sample"},
          {"ideal", ideals},
          {"rows", report.rows.size()},
          {"failures", failures},
          {"flag_counts", flag_counts}};
  if (c.record_timing) out["wall_seconds"] = report.wall_seconds;
  return out;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  const std::filesystem::path base(dir);
  write_text_file((base / "raw.csv").string(), raw_csv(report));
  write_text_file((base / "summary.csv").string(), summary_csv(report));
  write_text_file((base / "counts.csv").string(), counts_csv(report));
  write_text_file((base / "metadata.json").string(), metadata(report).dump(2) + "\n");
}

}  // namespace mslab
