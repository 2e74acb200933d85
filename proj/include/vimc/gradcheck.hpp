#pragma once

// Central finite differences against the tape's analytic gradients for a
// small randomly initialized instance of one model component.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vimc::gradcheck {

enum class Component { ViWordFormer, OptionInference, Heads };

Component parse_component(const std::string& name);
std::string to_string(Component c);

struct Options {
  double tolerance = 1e-3;
  double step = 1e-5;
  /// Denominator floor for the relative error of near-zero gradients.
  double floor = 1e-6;
  int d_model = 8;
  /// Zeroes this parameter's analytic gradient before comparing.
  std::optional<std::string> corrupt_parameter;
};

struct ParameterResult {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
  bool finite = true;
};

struct Report {
  Component component = Component::ViWordFormer;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  bool passed = false;
  std::string failure;  // empty on pass
  std::vector<ParameterResult> parameters;

  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

Report run(Component component, std::uint64_t seed, const Options& options = {});

/// Parameter names of the instance `run` builds.
std::vector<std::string> parameter_names(Component component, const Options& options = {});

}  // namespace vimc::gradcheck
