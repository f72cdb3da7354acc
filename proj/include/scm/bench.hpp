#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scm/denoiser.hpp"

namespace scm {

enum class RunMode { Dense, Turbo, CacheOnly, PruneOnly, BypassOnly, RandomPrune };

const char* run_mode_name(RunMode mode) noexcept;
RunMode parse_run_mode(std::string_view name);

struct RunConfig {
  LatentDims dims{5, 8, 8, 8, 32};
  std::size_t heads = 2;
  std::size_t layers = 6;
  std::size_t steps = 20;
  std::uint64_t seed = 42;
  RunMode mode = RunMode::Turbo;
  double topk_ratio = 0.2;
  bool per_axis_ratio = false;
  std::size_t delta_t = 3;
  double alpha = 0.9;
  std::size_t warmup = 2;
  bool compare_dense = false;
  bool zero_refill = false;
  double elevation = 30.0;
  std::size_t repeats = 1;  // timing repetitions; the fastest is reported
  bool similarity_log = false;
  std::string output;  // report path; empty picks a name under the output directory
};

/// Throws UsageError naming the first offending key.
void validate(const RunConfig& config);

nlohmann::ordered_json to_json(const RunConfig& config);

/// Overlays the keys of `j` onto `base`. Unknown keys, wrong types and
/// out-of-range values raise UsageError.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

SamplerConfig sampler_config(const RunConfig& config);

/// Seeds for weights, priors and the initial latent, drawn in that order.
struct RunSeeds {
  std::uint64_t model;
  std::uint64_t priors;
  std::uint64_t noise;
};
RunSeeds derive_seeds(std::uint64_t seed);

struct Drift {
  double cosine = 0.0;
  double psnr = 0.0;
};

struct RunReport {
  RunConfig config;
  SampleResult result;
  std::optional<Drift> drift;
  std::optional<double> dense_wall_us;
  std::optional<double> speedup;
  std::optional<double> attention_flop_ratio;
  std::optional<LatentTensor> dense_final;
};

RunReport run_benchmark(const RunConfig& config);

/// Mean logged cosine per step that logged any similarity, in step order.
std::vector<std::pair<std::size_t, double>> compute_step_similarity(const std::vector<SimilarityRecord>& log);

/// FNV-1a over the bit patterns of the values.
std::uint64_t latent_digest(const LatentTensor& z);

nlohmann::ordered_json report_json(const RunReport& report);

/// Drops every key containing "wall" or "speedup", recursively.
nlohmann::ordered_json strip_timing(nlohmann::ordered_json j);

std::filesystem::path default_output_dir();
std::filesystem::path report_path(const RunConfig& config);

/// Writes the JSON report, a sibling per-step .csv and, if enabled, a
/// .similarity.csv. Returns the JSON path.
std::filesystem::path emit_report(const RunReport& report, const std::filesystem::path& path);

/// One config per value, each obtained by setting key `param`.
std::vector<RunConfig> sweep_configs(const RunConfig& base, const std::string& param,
                                     const std::vector<std::string>& values);

}  // namespace scm
