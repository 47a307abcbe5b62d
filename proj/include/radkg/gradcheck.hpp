#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "radkg/scoring.hpp"

namespace radkg {

/// Finite-difference audit of the full loss pipeline (BCE . sigmoid . psi . embed) on random
/// models, random feature codes and random closed-world targets.
struct GradCheckConfig {
    ScorerKind kind = ScorerKind::DistMult;
    /// Geometries cycled through, one per model. Empty means the default geometry for `kind`.
    std::vector<ModelDims> geometries;
    std::size_t models = 100;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Coordinates checked per block; blocks at or below this size are checked exhaustively.
    std::size_t coordinates_per_block = 64;
    /// Models whose ReLU pre-activations come within this distance of 0 are redrawn. A step of
    /// 1e-5 moves a pre-activation by far less than this.
    double kink_margin = 1e-4;
    /// Test hook: perturb one analytic coordinate so the audit must fail.
    bool corrupt = false;
};

struct GradCheckResult {
    std::size_t models_checked = 0;
    std::size_t models_redrawn = 0;
    std::size_t coordinates_checked = 0;
    double max_relative_error = 0.0;
    std::string worst_location;
    bool passed = false;
};

/// |a - f| / max(|a|, |f|, 1e-6).
double relative_error(double analytic, double numeric);

GradCheckResult run_gradcheck(const GradCheckConfig& config);

}  // namespace radkg
