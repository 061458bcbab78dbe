#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "isoc/serialize.hpp"

namespace isoc::cli {

// config problems exit with code 2; solver failures with code 3
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// parses and schema-checks the file; throws validation_error with a
// field-path message on any problem
ordered_json load_config(const std::string& path);
void validate_config(const ordered_json& cfg);

struct run_options {
  std::string output_dir;      // overrides cfg["output_dir"] when nonempty
  bool has_seed_override = false;
  std::uint64_t seed_override = 0;
};

// executes the configured experiment and writes outputs + manifest.json
// (manifest last); returns the output directory used
std::string run_experiment(ordered_json cfg, const run_options& opt);

// prints "name = value" rows from every *_summary.json in the manifest
void report_dir(const std::string& dir);

}  // namespace isoc::cli
