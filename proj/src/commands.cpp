#include "meshswap/commands.hpp"

#include "meshswap/scenario.hpp"
#include "meshswap/sweep.hpp"
#include "meshswap/verify.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace meshswap {

namespace fs = std::filesystem;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("meshswap");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MESHSWAP_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("MESHSWAP_LOG='{}' not recognised, keeping warn", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

RunConfig resolve_config(const CliOptions& opts) {
  if (opts.config_path) return load_run_config(*opts.config_path, opts.overrides);
  // No file: defaults, still passed through the same override and
  // validation path.
  std::string text = R"({"config_version": 1})";
  return parse_run_config(text, opts.overrides);
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_validation;
  }
}

}  // namespace

int cmd_run(const CliOptions& opts) {
  return guarded([&] {
    const auto config = resolve_config(opts);
    const bool timing = config.record_wall_times && !opts.no_timing;
    const auto out = run_scenario(config);
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);
    std::ostringstream run_csv, exchange_csv;
    write_run_csv(run_csv, out.rows, timing);
    write_exchange_csv(exchange_csv, out.rows, timing);
    write_file(dir / "run_report.csv", run_csv.str());
    write_file(dir / "exchange_report.csv", exchange_csv.str());
    write_file(dir / "producer_forest.json", out.producer_json);
    write_file(dir / "consumer_forest.json", out.consumer_json);
    write_file(dir / "config.json", to_json(config));
    std::size_t queries = 0, found = 0;
    for (const auto& r : out.rows) {
      queries += r.queries;
      found += r.found;
    }
    std::cout << fmt::format("{} syncs, {} queries, {} found; reports in {}\n", out.rows.size(), queries, found,
                             dir.string());
    return static_cast<int>(exit_ok);
  });
}

int cmd_sweep(const CliOptions& opts) {
  return guarded([&] {
    auto config = resolve_config(opts);
    if (!opts.multipliers.empty()) {
      config.sweep_multipliers = opts.multipliers;
      validate(config);
    }
    const bool timing = config.record_wall_times && !opts.no_timing;
    const auto result = run_sweep(config);
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    write_sweep_csv(csv, result, timing);
    write_file(dir / "sweep.csv", csv.str());
    std::cout << csv.str();
    std::cout << fmt::format("fit: slope {:.6e} s/patch, intercept {:.6e} s, R^2 {:.4f}\n", result.fit.slope,
                             result.fit.intercept, result.fit.r2);
    return static_cast<int>(exit_ok);
  });
}

int cmd_verify(const CliOptions& opts) {
  return guarded([&] {
    VerifyOptions v;
    if (!opts.inject_fault.empty()) {
      if (opts.inject_fault != "markers") throw ConfigError("inject-fault", "only 'markers' is supported");
      v.fault_markers = true;
    }
    bool ok = true;
    for (const auto& s : run_verify(v)) {
      std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << ": " << s.detail << '\n';
      ok = ok && s.passed;
    }
    return static_cast<int>(ok ? exit_ok : exit_verification);
  });
}

}  // namespace meshswap
