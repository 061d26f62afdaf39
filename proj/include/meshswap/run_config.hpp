#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshswap {

/// Invalid configuration; what() names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Mode { two_d, three_d, three_d_extruded };

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

inline constexpr int config_version = 1;

struct RunConfig {
  Mode mode = Mode::two_d;
  int ranks = 8;
  int threads = 1;
  std::uint64_t seed = 1;

  double t_sync = 10.0;
  double dt_p = 10.0 / 19;
  double dt_c = 10.0 / 27;
  double t_end = 300.0;

  // Producer: tangent-plane forest, n^D trees over `producer_extent_km`.
  int producer_trees = 2;
  double producer_extent_km = 400.0;
  int producer_cells = 8;
  int producer_base_level = 1;
  int producer_max_level = 6;
  double producer_refine_tol = 5e-3;  // envelope gradient, 1/km
  std::size_t producer_max_leaves = 20000;

  double pulse_amplitude = 1.0;
  double pulse_speed_km_s = 1.0;
  double pulse_width_km = 15.0;

  double origin_lat_deg = 30.0;
  double origin_lon_deg = 0.0;

  // Consumer: dipole box covering an ENU block above the origin.
  double consumer_alt_min_km = 150.0;
  double consumer_alt_max_km = 600.0;
  double consumer_half_width_km = 300.0;
  int consumer_trees_q = 1;
  int consumer_trees_p = 1;
  int consumer_trees_lambda = 2;
  int consumer_cells_q = 8;
  int consumer_cells_p = 16;
  int consumer_base_level = 1;
  int consumer_max_level = 3;
  double consumer_refine_threshold = 0.05;
  std::size_t consumer_max_leaves = 20000;
  int extrusion_layers = 1;
  double coupling_gain = 1e-3;

  std::string interp_stencil = "extrapolate";
  bool adapt = true;
  bool record_wall_times = true;

  std::vector<double> sweep_multipliers{1, 2, 4, 8};
  int sweep_repeats = 5;
  double sweep_time = 250.0;

  std::string out_dir = "out";
};

struct ConfigOverrides {
  std::optional<Mode> mode;
  std::optional<int> ranks;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Defaults that depend on the producer dimension.
RunConfig default_config(Mode mode);

/// Parses a flat JSON object. Unknown keys and wrong types are errors.
RunConfig parse_run_config(const std::string& json_text, const ConfigOverrides& overrides = {});
RunConfig load_run_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Throws ConfigError for the first violated constraint.
void validate(const RunConfig& c);

std::string to_json(const RunConfig& c);

}  // namespace meshswap
