#pragma once

// Central finite-difference verification of the analytic gradients.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "modgate/tensor.hpp"

namespace modgate {

struct GradCheckOptions {
  double step = 1e-4;
  double rtol = 1e-4;
  double atol = 1e-6;
  /// Entries probed per input tensor; 0 checks every entry.
  std::size_t max_entries = 0;
};

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_abs_diff = 0.0;
  /// Largest |analytic - numeric| / (atol + rtol * max(|analytic|, |numeric|)).
  double worst_ratio = 0.0;
  bool passed = true;
};

/// Compares d loss / d input from backward() with central differences for
/// every entry of every `inputs` leaf. `loss` must rebuild the graph on each
/// call and return a scalar.
GradCheckResult check_gradients(std::string name, const std::vector<Tensor>& inputs,
                                const std::function<Tensor()>& loss, const GradCheckOptions& options = {});

/// tensor, visual, audio, imd, model.
std::vector<std::string> grad_check_modules();
/// Runs the checks for one module, or all of them for "all".
std::vector<GradCheckResult> run_grad_check(std::string_view module, const GradCheckOptions& options = {});

}  // namespace modgate
