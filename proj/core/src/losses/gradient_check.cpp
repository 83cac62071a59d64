#include "wsd/losses/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "wsd/errors.hpp"

namespace wsd::losses {

namespace {

double checked(double v) {
    if (!std::isfinite(v)) {
        throw NumericalError("gradient check: loss is not finite");
    }
    return v;
}

}  // namespace

GradientCheckResult gradient_check(const LossFunction& loss, std::span<const double> params, int probe_count,
                                   double epsilon, std::uint64_t seed) {
    if (!(epsilon >= 1e-6 && epsilon <= 1e-2)) {
        throw ConfigError("gradient check: epsilon must lie in [1e-6, 1e-2]");
    }
    if (probe_count < 1 || params.empty()) {
        throw ConfigError("gradient check: need at least one probe and one parameter");
    }
    std::vector<double> analytic(params.size(), 0.0);
    checked(loss(params, analytic));

    std::vector<std::size_t> indices(params.size());
    std::iota(indices.begin(), indices.end(), 0);
    std::mt19937_64 rng(seed);
    const auto probes = std::min<std::size_t>(static_cast<std::size_t>(probe_count), indices.size());
    for (std::size_t i = 0; i < probes; ++i) {
        std::swap(indices[i], indices[std::uniform_int_distribution<std::size_t>(i, indices.size() - 1)(rng)]);
    }

    std::vector<double> work(params.begin(), params.end());
    GradientCheckResult result;
    for (std::size_t p = 0; p < probes; ++p) {
        const std::size_t idx = indices[p];
        const double saved = work[idx];
        work[idx] = saved + epsilon;
        const double up = checked(loss(work, {}));
        work[idx] = saved - epsilon;
        const double down = checked(loss(work, {}));
        work[idx] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double err = std::abs(analytic[idx] - numeric) / std::max(std::abs(numeric), 1e-8);
        if (p == 0 || err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_index = idx;
            result.worst_analytic = analytic[idx];
            result.worst_numeric = numeric;
        }
        ++result.probes;
    }
    return result;
}

}  // namespace wsd::losses
