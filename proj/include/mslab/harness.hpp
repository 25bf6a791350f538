#pragma once

// Simulation driver: for every model and replication draw a sample, run each
// bandwidth selector, cluster the grid by mean shift and record the distance
// in measure to the ideal population clustering.

#include "mslab/ideal.hpp"
#include "mslab/meanshift.hpp"
#include "mslab/registry.hpp"
#include "mslab/selectors.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mslab {

struct ExperimentConfig {
  std::vector<std::string> models;     // empty: every registered model
  std::vector<std::string> selectors;  // empty: all ten
  int replications = 20;
  int sample_size = 500;
  int resolution = 60;
  std::uint64_t seed = 20130917;
  int threads = 1;
  PilotRule pilot;
  SimplexSettings optimizer;
  MeanShiftConfig meanshift;
  IdealConfig ideal;
  std::string cache_dir;  // ideal partitions are cached here when non-empty
  bool record_timing = false;

  // Fills empty model/selector lists and checks everything against the registry.
  void resolve(const ModelRegistry& registry);
};

// Sample seed for one (model, replication); independent of the selector list.
std::uint64_t replication_seed(std::uint64_t master, const std::string& model, int replication);

struct ReportRow {
  std::string model;
  std::string selector;
  int rep = 0;
  double distance = 0.0;  // NaN when the job failed
  int n_clusters = 0;     // 0 when the job failed
  std::vector<std::string> flags;
  double seconds = -1.0;  // negative when timing is off
  Matrix H;               // empty when selection failed
  bool failed = false;
};

struct IdealSummary {
  std::string model;
  GridSpec grid;
  int clusters = 0;
  int declared = 0;
  double total_mass = 0.0;
  int nonconverged = 0;
  bool from_cache = false;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReportRow> rows;  // ordered by model, rep, selector
  std::vector<IdealSummary> ideals;
  double wall_seconds = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

ExperimentReport run(ExperimentConfig config, const ModelRegistry& registry = ModelRegistry::builtin(),
                     const ProgressFn& progress = {});

// Ideal clustering for a model on its grid, read from or written to the cache
// directory when one is given.
IdealClustering cached_ideal(const std::string& model_name, const nlohmann::json& model_entry,
                             const DensityModel& model, const GridSpec& grid, const IdealConfig& cfg,
                             const std::string& cache_dir, int threads, bool* from_cache = nullptr);

// Quantile with linear interpolation between order statistics:
// position p * (m - 1) in the sorted sample.
double quantile(std::vector<double> values, double p);

struct SummaryRow {
  std::string model;
  std::string selector;
  int runs = 0;
  int failures = 0;
  int flagged = 0;  // rows carrying at least one flag
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
  double flag_rate() const { return runs ? static_cast<double>(flagged) / runs : 0.0; }
};

// Median and quartiles of the distances of successful rows per (model, selector).
std::vector<SummaryRow> summarize(const ExperimentReport& report);

struct CountRow {
  std::string model;
  std::string selector;
  std::map<int, int> counts;  // cluster number -> replications; 0 collects failures
  int total() const;
};

std::vector<CountRow> count_table(const ExperimentReport& report);

std::string raw_csv(const ExperimentReport& report);
std::string summary_csv(const ExperimentReport& report);
std::string counts_csv(const ExperimentReport& report);
nlohmann::json metadata(const ExperimentReport& report);

// Writes raw.csv, summary.csv, counts.csv and metadata.json into `dir`.
void write_report(const ExperimentReport& report, const std::string& dir);

}  // namespace mslab
