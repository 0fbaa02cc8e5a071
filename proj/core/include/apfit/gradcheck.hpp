// Registered finite-difference suites over every differentiable operation,
// plus a Stage wrapper around the full render for end-to-end checks.

#pragma once

#include <string>
#include <vector>

#include "apfit/adjoint.hpp"
#include "apfit/render.hpp"

namespace apfit {

struct GradcheckCase {
  std::string         suite;
  std::string         op;
  Stage               stage;
  std::vector<double> inputs;
  std::size_t         sample_count = 64;
};

struct GradcheckReport {
  std::string              suite;
  std::string              op;
  FdCheckResult            result;
  double                   fraction_within = 0;
  bool                     passed          = false;
  std::vector<std::size_t> failing;  // coordinates above the tolerance
  std::string              error;    // set when the check itself threw
};

// "geometry", "rasterizer", "shading", "loss", "pipeline".
const std::vector<std::string>& gradcheck_suites();

// Throws std::invalid_argument for an unknown suite name ("all" selects
// every suite).
std::vector<GradcheckCase> gradcheck_cases(const std::string& suite);

// A case passes when at least `min_fraction` of the compared coordinates
// have relative error <= tolerance.
std::vector<GradcheckReport> run_gradcheck(const std::string& suite, double epsilon = 1e-4,
    double tolerance = 1e-3, double min_fraction = 0.95);

// Small textured, displaced sphere with every component learnable.
Asset make_toy_asset(std::uint64_t seed = 3);
View  make_toy_view(int width, int height);

// Stage over the named registry tensors of a copy of `asset`; outputs the
// rendered color. Coverage fingerprints every raster layer, the antialias
// blend pairs and the tangent handedness.
Stage pipeline_stage(const Asset& asset, const View& view, const RenderOptions& options,
    const std::vector<std::string>& params);
std::vector<double> gather_params(const Asset& asset, const std::vector<std::string>& params);

}  // namespace apfit
