#pragma once

#include <vector>

#include "headgan/morphable.hpp"
#include "headgan/tensor.hpp"

namespace headgan::metrics {

struct FitResult {
    std::vector<double> expression;
    morph::CameraParams camera;
    double residual = 0.0;  // mean squared pixel difference of the final render
    bool converged = false;
    int iterations = 0;  // accepted parameter updates
};

struct FitOptions {
    int starts = 3;              // multi-start seeds 0 (given init), 101, 102
    int coarse_sweeps = 60;      // pattern-search sweeps before refinement
    int refine_rounds = 4;       // alternating joint-refine / polish rounds
    int polish_sweeps = 40;
    double mse_threshold = 1e-9;  // "converged" means essentially exact match
};

/// Analysis-by-synthesis in the face-map domain: minimizes the mean squared
/// pixel difference between rasterize(synthesize_shape(identity, p_exp),
/// camera) and the target, over (p_exp, camera) with the identity fixed.
/// Coordinate-wise pattern search (strict MSE decreases only) alternates
/// with damped Gauss-Newton steps that align the candidate render's
/// per-triangle pixel centroids to the target's; the candidate is
/// re-rendered every step so both sides of each correspondence are measured
/// identically and silhouette truncation cancels instead of biasing the
/// solution. The returned parameters are the best render encountered, so
/// the residual never exceeds the initialization's. Non-convergence is
/// reported through the result, never thrown.
FitResult fit_facemap(const Tensor& target_map, const morph::MorphableModel& model,
                      const std::vector<double>& identity, const morph::ShapeParams& init_params,
                      const morph::CameraParams& init_camera, const FitOptions& options = {});

/// Mean over frames of the L1 distance between driver and recovered
/// expression coefficient vectors.
double aed(const std::vector<std::vector<double>>& driver_expressions,
           const std::vector<std::vector<double>>& recovered_expressions);

}  // namespace headgan::metrics
