#pragma once

// Reproducible experiments behind the eplab command line. Each run writes its
// artifacts plus manifest.json into the output directory and returns a list
// of named checks.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace eplab {

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::map<std::string, std::string> overrides;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentOutcome {
  std::vector<Check> checks;
  nlohmann::json summary;
  std::vector<std::string> artifacts;

  bool passed() const;
};

const std::vector<std::string>& experiment_names();

/// Default parameters of an experiment; keys accepted by --set.
nlohmann::json experiment_defaults(const std::string& experiment);

/// Throws DomainError for an unknown experiment or override key, or an
/// override value that does not parse as the default's type.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// "key=value" -> (key, value); throws DomainError without '='.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Fixed-format CSV: header row, doubles printed with %.17g.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& cell(double v);
  CsvWriter& cell(long long v);
  CsvWriter& cell(const std::string& v);
  void end_row();

 private:
  void sep();
  std::ofstream out_;
  bool row_started_ = false;
};

}  // namespace eplab
