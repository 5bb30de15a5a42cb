#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sphnn/errors.hpp"

namespace sphnn {

// Sampled states (and optionally inputs) on a strictly increasing time grid.
struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> inputs;  // empty, or one row per time
  std::vector<std::string> state_names;
  std::vector<std::string> input_names;

  std::size_t size() const { return times.size(); }
  std::size_t state_dim() const { return states.empty() ? state_names.size() : states.front().size(); }
  std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
  bool has_inputs() const { return !inputs.empty(); }

  // Throws DataError when the invariants (equal lengths, finite values,
  // increasing times) do not hold.
  void validate() const {
    if (states.size() != times.size()) throw DataError("trajectory: state rows do not match time samples");
    if (!inputs.empty() && inputs.size() != times.size()) {
      throw DataError("trajectory: input rows do not match time samples");
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (!std::isfinite(times[k])) throw DataError("trajectory: non-finite time at sample " + std::to_string(k));
      if (k > 0 && !(times[k] > times[k - 1])) {
        throw DataError("trajectory: times not strictly increasing at sample " + std::to_string(k));
      }
      if (states[k].size() != state_dim()) throw DataError("trajectory: ragged state row " + std::to_string(k));
      for (double v : states[k]) {
        if (!std::isfinite(v)) throw DataError("trajectory: non-finite state at sample " + std::to_string(k));
      }
      if (!inputs.empty()) {
        if (inputs[k].size() != input_dim()) throw DataError("trajectory: ragged input row " + std::to_string(k));
        for (double v : inputs[k]) {
          if (!std::isfinite(v)) throw DataError("trajectory: non-finite input at sample " + std::to_string(k));
        }
      }
    }
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline std::vector<std::string> default_names(const char* prefix, std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

}  // namespace sphnn
