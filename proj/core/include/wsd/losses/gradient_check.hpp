#pragma once

#include <cstdint>
#include <functional>
#include <span>

namespace wsd::losses {

/// Loss evaluated at `params`. When `grad` is non-empty it has the size of
/// `params` and receives the analytic gradient (overwritten, not accumulated).
using LossFunction = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int probes = 0;
};

/// Compares the analytic gradient with central differences on `probe_count`
/// distinct, randomly chosen coordinates. Relative error is
/// |analytic - numeric| / max(|numeric|, 1e-8).
/// Requires epsilon in [1e-6, 1e-2] and probe_count >= 1; a non-finite loss
/// throws NumericalError.
GradientCheckResult gradient_check(const LossFunction& loss, std::span<const double> params, int probe_count,
                                   double epsilon, std::uint64_t seed = 0);

}  // namespace wsd::losses
