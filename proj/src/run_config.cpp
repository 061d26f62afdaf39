#include "meshswap/run_config.hpp"

#include "meshswap/morton_key.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace meshswap {

Mode parse_mode(const std::string& s) {
  if (s == "2d") return Mode::two_d;
  if (s == "3d") return Mode::three_d;
  if (s == "3d-extruded") return Mode::three_d_extruded;
  throw ConfigError("mode", "expected one of 2d, 3d, 3d-extruded, got '" + s + "'");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::two_d:
      return "2d";
    case Mode::three_d:
      return "3d";
    case Mode::three_d_extruded:
      return "3d-extruded";
  }
  return "?";
}

RunConfig default_config(Mode mode) {
  RunConfig c;
  c.mode = mode;
  if (mode != Mode::two_d) {
    c.producer_cells = 4;
    c.producer_max_level = 4;
  }
  if (mode == Mode::three_d_extruded) {
    c.consumer_trees_q = 2;
    c.consumer_trees_p = 2;
  }
  return c;
}

namespace {

using json = nlohmann::json;

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(key, "must be non-negative");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(key, "expected an array of numbers");
      std::vector<double> out;
      for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(key, "expected an array of numbers");
        out.push_back(x.get<double>());
      }
      return out;
    }
  } catch (const json::exception&) {
    throw ConfigError(key, "value out of range");
  }
}

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
Setter bind(T RunConfig::*member, const std::string& key) {
  return [member, key](RunConfig& c, const json& v) { c.*member = get_as<T>(v, key); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto add = [&t](const std::string& key, auto member) { t[key] = bind(member, key); };
    add("ranks", &RunConfig::ranks);
    add("threads", &RunConfig::threads);
    add("seed", &RunConfig::seed);
    add("t_sync", &RunConfig::t_sync);
    add("dt_p", &RunConfig::dt_p);
    add("dt_c", &RunConfig::dt_c);
    add("t_end", &RunConfig::t_end);
    add("producer_trees", &RunConfig::producer_trees);
    add("producer_extent_km", &RunConfig::producer_extent_km);
    add("producer_cells", &RunConfig::producer_cells);
    add("producer_base_level", &RunConfig::producer_base_level);
    add("producer_max_level", &RunConfig::producer_max_level);
    add("producer_refine_tol", &RunConfig::producer_refine_tol);
    add("producer_max_leaves", &RunConfig::producer_max_leaves);
    add("pulse_amplitude", &RunConfig::pulse_amplitude);
    add("pulse_speed_km_s", &RunConfig::pulse_speed_km_s);
    add("pulse_width_km", &RunConfig::pulse_width_km);
    add("origin_lat_deg", &RunConfig::origin_lat_deg);
    add("origin_lon_deg", &RunConfig::origin_lon_deg);
    add("consumer_alt_min_km", &RunConfig::consumer_alt_min_km);
    add("consumer_alt_max_km", &RunConfig::consumer_alt_max_km);
    add("consumer_half_width_km", &RunConfig::consumer_half_width_km);
    add("consumer_trees_q", &RunConfig::consumer_trees_q);
    add("consumer_trees_p", &RunConfig::consumer_trees_p);
    add("consumer_trees_lambda", &RunConfig::consumer_trees_lambda);
    add("consumer_cells_q", &RunConfig::consumer_cells_q);
    add("consumer_cells_p", &RunConfig::consumer_cells_p);
    add("consumer_base_level", &RunConfig::consumer_base_level);
    add("consumer_max_level", &RunConfig::consumer_max_level);
    add("consumer_refine_threshold", &RunConfig::consumer_refine_threshold);
    add("consumer_max_leaves", &RunConfig::consumer_max_leaves);
    add("extrusion_layers", &RunConfig::extrusion_layers);
    add("coupling_gain", &RunConfig::coupling_gain);
    add("interp_stencil", &RunConfig::interp_stencil);
    add("adapt", &RunConfig::adapt);
    add("record_wall_times", &RunConfig::record_wall_times);
    add("sweep_multipliers", &RunConfig::sweep_multipliers);
    add("sweep_repeats", &RunConfig::sweep_repeats);
    add("sweep_time", &RunConfig::sweep_time);
    add("out_dir", &RunConfig::out_dir);
    return t;
  }();
  return table;
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

double ipow(int base, int exp) { return std::pow(static_cast<double>(base), exp); }

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const ConfigOverrides& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  if (!j.contains("config_version")) throw ConfigError("config_version", "missing");
  const int version = get_as<int>(j["config_version"], "config_version");
  if (version != config_version) {
    throw ConfigError("config_version", "unsupported version " + std::to_string(version) + ", expected " +
                                            std::to_string(config_version));
  }

  Mode mode = Mode::two_d;
  if (j.contains("mode")) mode = parse_mode(get_as<std::string>(j["mode"], "mode"));
  if (overrides.mode) mode = *overrides.mode;
  RunConfig c = default_config(mode);

  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    if (key == "config_version" || key == "mode") continue;
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown key");
    it->second(c, value);
  }
  if (overrides.ranks) c.ranks = *overrides.ranks;
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

void validate(const RunConfig& c) {
  const int dp = c.mode == Mode::two_d ? 2 : 3;
  const int dc = c.mode == Mode::three_d_extruded ? 2 : 3;

  require(c.ranks >= 1 && c.ranks <= 4096, "ranks", "must be in [1, 4096]");
  require(c.threads >= 1 && c.threads <= 256, "threads", "must be in [1, 256]");

  require(finite_positive(c.t_sync), "t_sync", "must be positive");
  require(finite_positive(c.dt_p), "dt_p", "must be positive");
  require(finite_positive(c.dt_c), "dt_c", "must be positive");
  require(finite_positive(c.t_end), "t_end", "must be positive");
  require(c.t_end / c.t_sync <= 1e6, "t_end", "more than 1e6 sync intervals");
  require(c.t_sync / std::min(c.dt_p, c.dt_c) <= 1e7, "t_sync", "more than 1e7 steps per interval");
  if (c.t_sync < std::max(c.dt_p, c.dt_c)) {
    spdlog::warn("t_sync {} is shorter than the largest time step; some intervals have no steps", c.t_sync);
  }

  require(c.producer_trees >= 1 && c.producer_trees <= 16, "producer_trees", "must be in [1, 16]");
  require(finite_positive(c.producer_extent_km), "producer_extent_km", "must be positive");
  require(c.producer_cells >= 1 && c.producer_cells <= 64, "producer_cells", "must be in [1, 64]");
  const int pmax = dp == 2 ? max_level<2> : max_level<3>;
  require(c.producer_base_level >= 0 && c.producer_base_level <= 10, "producer_base_level", "must be in [0, 10]");
  require(c.producer_max_level >= c.producer_base_level && c.producer_max_level <= pmax, "producer_max_level",
          "must be between producer_base_level and the key depth limit");
  require(finite_positive(c.producer_refine_tol), "producer_refine_tol", "must be positive");
  const double producer_base = ipow(c.producer_trees, dp) * ipow(2, dp * c.producer_base_level);
  require(producer_base <= 2e6, "producer_base_level", "base mesh exceeds 2e6 patches");
  require(producer_base >= c.ranks, "producer_base_level", "fewer producer patches than ranks");
  require(static_cast<double>(c.producer_max_leaves) >= producer_base, "producer_max_leaves",
          "smaller than the base mesh");

  require(std::isfinite(c.pulse_amplitude), "pulse_amplitude", "must be finite");
  require(std::isfinite(c.pulse_speed_km_s) && c.pulse_speed_km_s >= 0.0, "pulse_speed_km_s",
          "must be non-negative");
  require(finite_positive(c.pulse_width_km), "pulse_width_km", "must be positive");

  require(std::isfinite(c.origin_lat_deg) && std::abs(c.origin_lat_deg) <= 80.0, "origin_lat_deg",
          "must be within [-80, 80]");
  require(std::isfinite(c.origin_lon_deg) && std::abs(c.origin_lon_deg) <= 180.0, "origin_lon_deg",
          "must be within [-180, 180]");
  require(std::isfinite(c.consumer_alt_min_km) && c.consumer_alt_min_km >= 0.0, "consumer_alt_min_km",
          "must be non-negative");
  require(std::isfinite(c.consumer_alt_max_km) && c.consumer_alt_max_km > c.consumer_alt_min_km,
          "consumer_alt_max_km", "must exceed consumer_alt_min_km");
  require(c.consumer_alt_max_km <= 5000.0, "consumer_alt_max_km", "must be at most 5000");
  require(finite_positive(c.consumer_half_width_km) && c.consumer_half_width_km <= 2000.0,
          "consumer_half_width_km", "must be in (0, 2000]");

  require(c.consumer_trees_q >= 1 && c.consumer_trees_q <= 64, "consumer_trees_q", "must be in [1, 64]");
  require(c.consumer_trees_p >= 1 && c.consumer_trees_p <= 64, "consumer_trees_p", "must be in [1, 64]");
  require(c.consumer_trees_lambda >= 1 && c.consumer_trees_lambda <= 64, "consumer_trees_lambda",
          "must be in [1, 64]");
  require(c.consumer_cells_q >= 1 && c.consumer_cells_q <= 64, "consumer_cells_q", "must be in [1, 64]");
  require(c.consumer_cells_p >= 1 && c.consumer_cells_p <= 64, "consumer_cells_p", "must be in [1, 64]");
  require(c.consumer_base_level >= 0 && c.consumer_base_level <= 8, "consumer_base_level", "must be in [0, 8]");
  const int cmax = dc == 2 ? max_level<2> : max_level<3>;
  require(c.consumer_max_level >= c.consumer_base_level && c.consumer_max_level <= cmax, "consumer_max_level",
          "must be between consumer_base_level and the key depth limit");
  require(std::isfinite(c.consumer_refine_threshold) && c.consumer_refine_threshold >= 0.0,
          "consumer_refine_threshold", "must be non-negative");
  double consumer_trees = static_cast<double>(c.consumer_trees_q) * c.consumer_trees_p;
  if (dc == 3) consumer_trees *= c.consumer_trees_lambda;
  const double consumer_base = consumer_trees * ipow(2, dc * c.consumer_base_level);
  require(consumer_base <= 2e6, "consumer_base_level", "base mesh exceeds 2e6 patches");
  require(consumer_base >= c.ranks, "consumer_base_level", "fewer consumer patches than ranks");
  require(static_cast<double>(c.consumer_max_leaves) >= consumer_base, "consumer_max_leaves",
          "smaller than the base mesh");
  require(c.extrusion_layers >= 1 && c.extrusion_layers <= 256, "extrusion_layers", "must be in [1, 256]");
  require(std::isfinite(c.coupling_gain), "coupling_gain", "must be finite");

  require(c.interp_stencil == "clamp" || c.interp_stencil == "extrapolate", "interp_stencil",
          "expected clamp or extrapolate");

  require(c.sweep_multipliers.size() >= 3, "sweep_multipliers", "need at least 3 values for a fit");
  for (double m : c.sweep_multipliers) {
    require(m >= 1.0 && m <= 1024.0 && m == std::floor(m), "sweep_multipliers", "values must be integers in [1, 1024]");
  }
  require(c.sweep_repeats >= 1 && c.sweep_repeats <= 1000, "sweep_repeats", "must be in [1, 1000]");
  require(std::isfinite(c.sweep_time) && c.sweep_time >= 0.0, "sweep_time", "must be non-negative");
  require(!c.out_dir.empty(), "out_dir", "must not be empty");
}

std::string to_json(const RunConfig& c) {
  json j;
  j["config_version"] = config_version;
  j["mode"] = to_string(c.mode);
  j["ranks"] = c.ranks;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["t_sync"] = c.t_sync;
  j["dt_p"] = c.dt_p;
  j["dt_c"] = c.dt_c;
  j["t_end"] = c.t_end;
  j["producer_trees"] = c.producer_trees;
  j["producer_extent_km"] = c.producer_extent_km;
  j["producer_cells"] = c.producer_cells;
  j["producer_base_level"] = c.producer_base_level;
  j["producer_max_level"] = c.producer_max_level;
  j["producer_refine_tol"] = c.producer_refine_tol;
  j["producer_max_leaves"] = c.producer_max_leaves;
  j["pulse_amplitude"] = c.pulse_amplitude;
  j["pulse_speed_km_s"] = c.pulse_speed_km_s;
  j["pulse_width_km"] = c.pulse_width_km;
  j["origin_lat_deg"] = c.origin_lat_deg;
  j["origin_lon_deg"] = c.origin_lon_deg;
  j["consumer_alt_min_km"] = c.consumer_alt_min_km;
  j["consumer_alt_max_km"] = c.consumer_alt_max_km;
  j["consumer_half_width_km"] = c.consumer_half_width_km;
  j["consumer_trees_q"] = c.consumer_trees_q;
  j["consumer_trees_p"] = c.consumer_trees_p;
  j["consumer_trees_lambda"] = c.consumer_trees_lambda;
  j["consumer_cells_q"] = c.consumer_cells_q;
  j["consumer_cells_p"] = c.consumer_cells_p;
  j["consumer_base_level"] = c.consumer_base_level;
  j["consumer_max_level"] = c.consumer_max_level;
  j["consumer_refine_threshold"] = c.consumer_refine_threshold;
  j["consumer_max_leaves"] = c.consumer_max_leaves;
  j["extrusion_layers"] = c.extrusion_layers;
  j["coupling_gain"] = c.coupling_gain;
  j["interp_stencil"] = c.interp_stencil;
  j["adapt"] = c.adapt;
  j["record_wall_times"] = c.record_wall_times;
  j["sweep_multipliers"] = c.sweep_multipliers;
  j["sweep_repeats"] = c.sweep_repeats;
  j["sweep_time"] = c.sweep_time;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

}  // namespace meshswap
