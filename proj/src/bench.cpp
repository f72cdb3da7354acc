#include "scm/bench.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

#include "scm/error.hpp"
#include "scm/kernels.hpp"

namespace scm {

namespace {

constexpr std::pair<RunMode, const char*> kModeNames[] = {
    {RunMode::Dense, "dense"},          {RunMode::Turbo, "turbo"},
    {RunMode::CacheOnly, "cache-only"}, {RunMode::PruneOnly, "prune-only"},
    {RunMode::BypassOnly, "bypass-only"}, {RunMode::RandomPrune, "random-prune"},
};

[[noreturn]] void usage(const std::string& key, const std::string& what) { throw UsageError(key + ": " + what); }

// Shortest text that round-trips.
std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

const char* run_mode_name(RunMode mode) noexcept {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "?";
}

RunMode parse_run_mode(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (name == n) return m;
  }
  usage("mode", "unknown mode '" + std::string(name) +
                    "' (expected dense, turbo, cache-only, prune-only, bypass-only or random-prune)");
}

void validate(const RunConfig& c) {
  const LatentDims& d = c.dims;
  if (d.frames == 0) usage("frames", "must be >= 1");
  if (d.views == 0) usage("views", "must be >= 1");
  if (d.height == 0) usage("height", "must be >= 1");
  if (d.width == 0) usage("width", "must be >= 1");
  if (d.channels == 0) usage("channels", "must be >= 1");
  if (c.heads == 0) usage("heads", "must be >= 1");
  if (d.channels % c.heads != 0) {
    usage("heads", "channels " + std::to_string(d.channels) + " not divisible by " + std::to_string(c.heads));
  }
  if (c.layers == 0) usage("layers", "must be >= 1");
  if (c.steps == 0) usage("steps", "must be >= 1");
  if (!(c.topk_ratio > 0.0 && c.topk_ratio <= 1.0)) usage("topk_ratio", "must be in (0, 1], got " + format_double(c.topk_ratio));
  if (!(c.alpha > 0.0) || !std::isfinite(c.alpha)) usage("alpha", "must be a finite value > 0");
  if (c.mode != RunMode::Dense && c.warmup == 0) usage("warmup", "must be >= 1 so the cache fills before use");
  if (!std::isfinite(c.elevation)) usage("elevation", "must be finite");
  if (c.repeats == 0) usage("repeats", "must be >= 1");
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["frames"] = c.dims.frames;
  j["views"] = c.dims.views;
  j["height"] = c.dims.height;
  j["width"] = c.dims.width;
  j["channels"] = c.dims.channels;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["mode"] = run_mode_name(c.mode);
  j["topk_ratio"] = c.topk_ratio;
  j["per_axis_ratio"] = c.per_axis_ratio;
  j["delta_t"] = c.delta_t;
  j["alpha"] = c.alpha;
  j["warmup"] = c.warmup;
  j["compare_dense"] = c.compare_dense;
  j["zero_refill"] = c.zero_refill;
  j["elevation"] = c.elevation;
  j["repeats"] = c.repeats;
  j["similarity_log"] = c.similarity_log;
  j["output"] = c.output;
  return j;
}

RunConfig apply_json(RunConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    auto count = [&]() -> std::size_t {
      if (v.is_number_unsigned()) return v.get<std::size_t>();
      if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
      usage(key, "expected a non-negative integer, got " + v.dump());
    };
    auto real = [&]() -> double {
      if (!v.is_number()) usage(key, "expected a number, got " + v.dump());
      return v.get<double>();
    };
    auto flag = [&]() -> bool {
      if (!v.is_boolean()) usage(key, "expected true or false, got " + v.dump());
      return v.get<bool>();
    };
    auto text = [&]() -> std::string {
      if (!v.is_string()) usage(key, "expected a string, got " + v.dump());
      return v.get<std::string>();
    };

    if (key == "frames") c.dims.frames = count();
    else if (key == "views") c.dims.views = count();
    else if (key == "height") c.dims.height = count();
    else if (key == "width") c.dims.width = count();
    else if (key == "channels") c.dims.channels = count();
    else if (key == "heads") c.heads = count();
    else if (key == "layers") c.layers = count();
    else if (key == "steps") c.steps = count();
    else if (key == "seed") c.seed = count();
    else if (key == "mode") c.mode = parse_run_mode(text());
    else if (key == "topk_ratio") c.topk_ratio = real();
    else if (key == "per_axis_ratio") c.per_axis_ratio = flag();
    else if (key == "delta_t") c.delta_t = count();
    else if (key == "alpha") c.alpha = real();
    else if (key == "warmup") c.warmup = count();
    else if (key == "compare_dense") c.compare_dense = flag();
    else if (key == "zero_refill") c.zero_refill = flag();
    else if (key == "elevation") c.elevation = real();
    else if (key == "repeats") c.repeats = count();
    else if (key == "similarity_log") c.similarity_log = flag();
    else if (key == "output") c.output = text();
    else usage(key, "unknown config key");
  }
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config: malformed JSON in " + path.string() + ": " + e.what());
  }
  return apply_json(std::move(base), j);
}

SamplerConfig sampler_config(const RunConfig& c) {
  SamplerConfig s;
  s.scheduler.warmup = c.warmup;
  s.scheduler.alpha = c.alpha;
  s.scheduler.delta_t = c.delta_t;
  s.prune.ratio = c.topk_ratio;
  s.prune.per_axis = c.per_axis_ratio;
  s.prune.refill = c.zero_refill ? RefillPolicy::Zero : RefillPolicy::Cache;
  auto flags = [&](bool prune, bool reuse, bool bypass) {
    s.scheduler.prune = prune;
    s.scheduler.reuse = reuse;
    s.scheduler.bypass = bypass;
  };
  switch (c.mode) {
    case RunMode::Dense:
      s.use_cache = false;
      flags(false, false, false);
      break;
    case RunMode::Turbo: flags(true, true, true); break;
    case RunMode::CacheOnly: flags(false, true, false); break;
    case RunMode::PruneOnly: flags(true, false, false); break;
    case RunMode::BypassOnly: flags(false, false, true); break;
    case RunMode::RandomPrune:
      flags(true, true, true);
      s.prune.policy = IndexPolicy::Random;
      break;
  }
  return s;
}

RunSeeds derive_seeds(std::uint64_t seed) {
  Rng root(seed);
  RunSeeds s{};
  s.model = root.next_u64();
  s.priors = root.next_u64();
  s.noise = root.next_u64();
  return s;
}

RunReport run_benchmark(const RunConfig& config) {
  validate(config);
  const RunSeeds seeds = derive_seeds(config.seed);
  const ToyModel model = build_toy_model(config.dims, config.heads, config.layers, seeds.model);
  Rng prior_rng(seeds.priors);
  const PriorSet priors =
      synth_priors(config.dims, CameraTrajectory::orbit(config.dims.views, config.elevation), prior_rng);
  const DiffusionSchedule schedule = DiffusionSchedule::cosine(config.steps);

  // Repeats only differ in timing; the fastest is kept.
  auto timed = [&](const SamplerConfig& sc) {
    std::optional<SampleResult> best;
    for (std::size_t r = 0; r < config.repeats; ++r) {
      Rng rng(seeds.noise);
      SampleResult res = sample(model, priors, schedule, sc, rng);
      if (!best || res.wall_us < best->wall_us) best = std::move(res);
    }
    return std::move(*best);
  };

  RunReport report;
  report.config = config;
  report.result = timed(sampler_config(config));
  if (config.compare_dense) {
    RunConfig dense_cfg = config;
    dense_cfg.mode = RunMode::Dense;
    SampleResult dense = timed(sampler_config(dense_cfg));
    const Tensor& a = dense.z_final.tensor();
    const Tensor& b = report.result.z_final.tensor();
    report.drift = Drift{cosine(a, b), psnr(a, b)};
    report.dense_wall_us = dense.wall_us;
    report.speedup = dense.wall_us / report.result.wall_us;
    if (dense.totals.flops_attention > 0) {
      report.attention_flop_ratio = static_cast<double>(report.result.totals.flops_attention) /
                                    static_cast<double>(dense.totals.flops_attention);
    }
    report.dense_final = std::move(dense.z_final);
  }
  return report;
}

std::vector<std::pair<std::size_t, double>> compute_step_similarity(const std::vector<SimilarityRecord>& log) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : log) {
    auto& [sum, n] = acc[r.step];
    sum += r.cosine;
    ++n;
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& [step, sn] : acc) out.emplace_back(step, sn.first / static_cast<double>(sn.second));
  return out;
}

std::uint64_t latent_digest(const LatentTensor& z) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : z.tensor().values()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

namespace {

nlohmann::ordered_json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double rms(const LatentTensor& z) {
  double ss = 0.0;
  for (double v : z.tensor().values()) ss += v * v;
  return std::sqrt(ss / static_cast<double>(z.tensor().size()));
}

std::string join_layers(const std::vector<std::size_t>& layers, char sep) {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(layers[i]);
  }
  return s;
}

}  // namespace

nlohmann::ordered_json report_json(const RunReport& report) {
  using oj = nlohmann::ordered_json;
  const SampleResult& r = report.result;
  oj j;
  j["config"] = to_json(report.config);

  oj counts = {{"dense", 0}, {"prune", 0}, {"reuse", 0}, {"bypassed", 0}};
  for (const auto& s : r.steps) {
    counts[step_kind_name(s.mode.kind)] = counts[step_kind_name(s.mode.kind)].get<int>() + 1;
    if (!s.mode.bypass.empty()) counts["bypassed"] = counts["bypassed"].get<int>() + 1;
  }
  oj summary;
  summary["steps"] = r.steps.size();
  summary["mode_counts"] = counts;
  summary["bypass_start"] = r.bypass_start ? oj(*r.bypass_start) : oj(nullptr);
  summary["flops_attention"] = r.totals.flops_attention;
  summary["flops_ffn"] = r.totals.flops_ffn;
  summary["flops_other"] = r.totals.flops_other;
  summary["flops_total"] = r.totals.total_flops();
  summary["peak_live_elements"] = r.totals.peak_live_elements;
  summary["wall_us"] = r.wall_us;
  summary["final_latent"] = {{"rms", rms(r.z_final)}, {"digest", hex64(latent_digest(r.z_final))}};
  j["summary"] = summary;

  oj steps = oj::array();
  for (const auto& s : r.steps) {
    oj e;
    e["step"] = s.step;
    e["t"] = s.t;
    e["mode"] = step_kind_name(s.mode.kind);
    e["bypass"] = s.mode.bypass;
    e["asr"] = s.asr ? oj(*s.asr) : oj(nullptr);
    e["flops_attention"] = s.flops_attention;
    e["flops_ffn"] = s.flops_ffn;
    e["flops_other"] = s.flops_other;
    e["wall_us"] = s.wall_us;
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);

  oj asr = oj::array();
  for (const auto& [step, value] : r.asr_trace) asr.push_back({{"step", step}, {"asr", value}});
  j["asr_trace"] = std::move(asr);

  oj sim = oj::array();
  for (const auto& [step, mean] : compute_step_similarity(r.similarity_log)) {
    sim.push_back({{"step", step}, {"mean_cosine", mean}});
  }
  j["similarity"] = {{"records", r.similarity_log.size()}, {"per_step", std::move(sim)}};

  if (report.drift) {
    oj cmp;
    cmp["dense_wall_us"] = *report.dense_wall_us;
    cmp["speedup"] = *report.speedup;
    cmp["attention_flop_ratio"] =
        report.attention_flop_ratio ? oj(*report.attention_flop_ratio) : oj(nullptr);
    cmp["drift"] = {{"cosine", report.drift->cosine}, {"psnr", number_or_inf(report.drift->psnr)}};
    j["comparison"] = std::move(cmp);
  }
  return j;
}

nlohmann::ordered_json strip_timing(nlohmann::ordered_json j) {
  if (j.is_object()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (auto& [k, v] : j.items()) {
      if (k.find("wall") != std::string::npos || k.find("speedup") != std::string::npos) continue;
      out[k] = strip_timing(v);
    }
    return out;
  }
  if (j.is_array()) {
    for (auto& v : j) v = strip_timing(std::move(v));
  }
  return j;
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("SCM_BENCH_OUT"); env && *env) return env;
  return ".";
}

std::filesystem::path report_path(const RunConfig& config) {
  if (!config.output.empty()) return config.output;
  return default_output_dir() /
         ("scm_" + std::string(run_mode_name(config.mode)) + "_seed" + std::to_string(config.seed) + ".json");
}

std::filesystem::path emit_report(const RunReport& report, const std::filesystem::path& path) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
  };
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  {
    auto os = open(path);
    os << report_json(report).dump(2) << '\n';
    if (!os.flush()) throw IoError("write failed: " + path.string());
  }
  {
    std::filesystem::path csv = path;
    csv.replace_extension(".csv");
    auto os = open(csv);
    os << "step,t,mode,bypass,asr,flops_attention,flops_ffn,flops_other,wall_us\n";
    for (const auto& s : report.result.steps) {
      os << s.step << ',' << s.t << ',' << step_kind_name(s.mode.kind) << ',' << join_layers(s.mode.bypass, ';')
         << ',' << (s.asr ? format_double(*s.asr) : "") << ',' << s.flops_attention << ',' << s.flops_ffn << ','
         << s.flops_other << ',' << format_double(s.wall_us) << '\n';
    }
    if (!os.flush()) throw IoError("write failed: " + csv.string());
  }
  if (report.config.similarity_log) {
    std::filesystem::path sim = path;
    sim.replace_extension(".similarity.csv");
    auto os = open(sim);
    write_similarity_csv(os, report.result.similarity_log);
    if (!os.flush()) throw IoError("write failed: " + sim.string());
  }
  return path;
}

std::vector<RunConfig> sweep_configs(const RunConfig& base, const std::string& param,
                                     const std::vector<std::string>& values) {
  if (values.empty()) throw UsageError("values: sweep needs at least one value");
  std::vector<RunConfig> out;
  for (const auto& text : values) {
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      v = text;
    }
    RunConfig c = apply_json(base, nlohmann::json{{param, v}});
    c.output.clear();
    validate(c);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace scm
