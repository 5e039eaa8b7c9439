#include "headgan/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_map>

#include "headgan/errors.hpp"
#include "headgan/rasterizer.hpp"
#include "headgan/rng.hpp"

namespace headgan::metrics {

namespace {

// Flat parameter vector: [expression..., rx, ry, rz, tx, ty, scale].
struct FitProblem {
    const Tensor* target;
    const morph::MorphableModel* model;
    const std::vector<double>* identity;
    int h, w, n_exp;

    morph::ShapeParams shape_params(const std::vector<double>& theta) const {
        morph::ShapeParams p;
        p.identity = *identity;
        p.expression.assign(theta.begin(), theta.begin() + n_exp);
        return p;
    }
    morph::CameraParams camera(const std::vector<double>& theta) const {
        morph::CameraParams c;
        c.rx = theta[static_cast<std::size_t>(n_exp)];
        c.ry = theta[static_cast<std::size_t>(n_exp) + 1];
        c.rz = theta[static_cast<std::size_t>(n_exp) + 2];
        c.tx = theta[static_cast<std::size_t>(n_exp) + 3];
        c.ty = theta[static_cast<std::size_t>(n_exp) + 4];
        c.scale = theta[static_cast<std::size_t>(n_exp) + 5];
        return c;
    }

    double mse(const std::vector<double>& theta) const {
        morph::FaceShape shape = morph::synthesize_shape(*model, shape_params(theta));
        raster::RasterResult r = raster::rasterize(shape, camera(theta), *model, h, w);
        double acc = 0.0;
        for (std::int64_t i = 0; i < r.face_map.numel(); ++i) {
            const double d = static_cast<double>(r.face_map[i]) - static_cast<double>((*target)[i]);
            acc += d * d;
        }
        return acc / static_cast<double>(r.face_map.numel());
    }
};

struct PixelCentroid {
    int triangle = -1;
    double x = 0.0, y = 0.0;  // mean pixel-center position of the triangle's pixels
    int count = 0;            // visible pixels backing the centroid
};

std::uint64_t color_key(float r, float g, float b) {
    std::uint32_t ri, gi, bi;
    std::memcpy(&ri, &r, 4);
    std::memcpy(&gi, &g, 4);
    std::memcpy(&bi, &b, 4);
    // 96 bits folded to 64; collisions are broken by an exact color check.
    return (static_cast<std::uint64_t>(ri) << 32) ^ (static_cast<std::uint64_t>(gi) << 11) ^ bi;
}

/// Decodes which triangle each target pixel shows (colors identify
/// triangles bitwise) and returns per-triangle pixel centroids.
std::vector<PixelCentroid> decode_centroids(const Tensor& target,
                                            const morph::MorphableModel& model) {
    const std::vector<std::array<float, 3>> colors = raster::triangle_colors(model);
    std::unordered_map<std::uint64_t, std::vector<int>> lookup;
    for (std::size_t t = 0; t < colors.size(); ++t)
        lookup[color_key(colors[t][0], colors[t][1], colors[t][2])].push_back(static_cast<int>(t));

    const int h = target.dim(1), w = target.dim(2);
    std::vector<int> count(colors.size(), 0);
    std::vector<double> sx(colors.size(), 0.0), sy(colors.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float r = target.at(0, y, x), g = target.at(1, y, x), b = target.at(2, y, x);
            if (r == 0.0f && g == 0.0f && b == 0.0f) continue;  // background
            auto it = lookup.find(color_key(r, g, b));
            if (it == lookup.end()) continue;
            for (int t : it->second) {
                if (colors[static_cast<std::size_t>(t)][0] == r &&
                    colors[static_cast<std::size_t>(t)][1] == g &&
                    colors[static_cast<std::size_t>(t)][2] == b) {
                    ++count[static_cast<std::size_t>(t)];
                    sx[static_cast<std::size_t>(t)] += x + 0.5;
                    sy[static_cast<std::size_t>(t)] += y + 0.5;
                    break;
                }
            }
        }
    }
    std::vector<PixelCentroid> out;
    for (std::size_t t = 0; t < colors.size(); ++t) {
        if (count[t] == 0) continue;
        PixelCentroid c;
        c.triangle = static_cast<int>(t);
        c.x = sx[t] / count[t];
        c.y = sy[t] / count[t];
        c.count = count[t];
        out.push_back(c);
    }
    return out;
}

/// One full render of a candidate: pixel MSE against the target plus
/// per-triangle visible-pixel centroids taken from the visibility mask.
struct RenderEval {
    double mse = 0.0;
    std::vector<PixelCentroid> cents;
    std::vector<int> index_of_tri;  // triangle -> index into cents, -1 if hidden
};

RenderEval evaluate_render(const FitProblem& prob, const std::vector<double>& theta) {
    morph::FaceShape shape = morph::synthesize_shape(*prob.model, prob.shape_params(theta));
    raster::RasterResult r =
        raster::rasterize(shape, prob.camera(theta), *prob.model, prob.h, prob.w);
    RenderEval ev;
    double acc = 0.0;
    for (std::int64_t i = 0; i < r.face_map.numel(); ++i) {
        const double d = static_cast<double>(r.face_map[i]) - static_cast<double>((*prob.target)[i]);
        acc += d * d;
    }
    ev.mse = acc / static_cast<double>(r.face_map.numel());
    const std::size_t ntri = prob.model->triangles.size();
    std::vector<int> count(ntri, 0);
    std::vector<double> sx(ntri, 0.0), sy(ntri, 0.0);
    for (int y = 0; y < prob.h; ++y) {
        for (int x = 0; x < prob.w; ++x) {
            const int t = r.mask.at(y, x);
            if (t < 0) continue;
            ++count[static_cast<std::size_t>(t)];
            sx[static_cast<std::size_t>(t)] += x + 0.5;
            sy[static_cast<std::size_t>(t)] += y + 0.5;
        }
    }
    ev.index_of_tri.assign(ntri, -1);
    for (std::size_t t = 0; t < ntri; ++t) {
        if (count[t] == 0) continue;
        ev.index_of_tri[t] = static_cast<int>(ev.cents.size());
        PixelCentroid c;
        c.triangle = static_cast<int>(t);
        c.x = sx[t] / count[t];
        c.y = sy[t] / count[t];
        c.count = count[t];
        ev.cents.push_back(c);
    }
    return ev;
}

/// Projected center of each corresponded triangle under theta.
std::vector<double> projected_centers(const FitProblem& prob,
                                      const std::vector<PixelCentroid>& corr,
                                      const std::vector<double>& theta) {
    morph::FaceShape shape = morph::synthesize_shape(*prob.model, prob.shape_params(theta));
    raster::ProjectedVertices pv =
        raster::project(shape, prob.camera(theta), prob.h, prob.w);
    std::vector<double> centers(corr.size() * 2);
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const auto& tr = prob.model->triangles[static_cast<std::size_t>(corr[i].triangle)];
        centers[2 * i] = (pv.x[static_cast<std::size_t>(tr[0])] + pv.x[static_cast<std::size_t>(tr[1])] +
                          pv.x[static_cast<std::size_t>(tr[2])]) /
                         3.0;
        centers[2 * i + 1] = (pv.y[static_cast<std::size_t>(tr[0])] + pv.y[static_cast<std::size_t>(tr[1])] +
                              pv.y[static_cast<std::size_t>(tr[2])]) /
                             3.0;
    }
    return centers;
}

struct SearchSteps {
    double exp, rot, trans, scale;
};

/// Coordinate-wise pattern search; accepts only strict MSE decreases and
/// halves the step set after a sweep with no improvement.
void pattern_search(const FitProblem& prob, std::vector<double>& theta, double& best,
                    SearchSteps steps, int max_sweeps, double min_scale_value, int& iterations) {
    const int dims = prob.n_exp + 6;
    auto step_of = [&](int d) {
        if (d < prob.n_exp) return steps.exp;
        if (d < prob.n_exp + 3) return steps.rot;
        if (d < prob.n_exp + 5) return steps.trans;
        return steps.scale;
    };
    double shrink = 1.0;
    for (int sweep = 0; sweep < max_sweeps && best > 0.0; ++sweep) {
        bool improved = false;
        for (int d = 0; d < dims; ++d) {
            const double step = step_of(d) * shrink;
            if (step < 1e-7) continue;
            for (double sign : {1.0, -1.0}) {
                std::vector<double> cand = theta;
                cand[static_cast<std::size_t>(d)] += sign * step;
                if (d == prob.n_exp + 5 && cand[static_cast<std::size_t>(d)] < min_scale_value)
                    continue;
                const double m = prob.mse(cand);
                if (m < best) {
                    best = m;
                    theta = std::move(cand);
                    improved = true;
                    ++iterations;
                    break;
                }
            }
        }
        if (!improved) {
            shrink *= 0.5;
            if (shrink < 1e-4) break;
        }
    }
}

/// A target/candidate centroid pair held fixed for one alignment step.
struct MatchRow {
    int triangle = -1;
    double tx = 0.0, ty = 0.0;  // target centroid
    double cx = 0.0, cy = 0.0;  // candidate centroid at the step's base render
    double w = 0.0;             // pixel-count weight
    double base_r2 = 0.0;       // squared misalignment at the base render
};

/// Weighted squared centroid misalignment of a render over a fixed match
/// set. A triangle that vanishes from the render keeps its base residual,
/// so hiding geometry is never rewarded.
double alignment_cost(const std::vector<MatchRow>& rows, const RenderEval& ev) {
    double acc = 0.0;
    for (const MatchRow& m : rows) {
        const int idx = ev.index_of_tri[static_cast<std::size_t>(m.triangle)];
        if (idx < 0) {
            acc += m.w * m.base_r2;
            continue;
        }
        const double dx = m.tx - ev.cents[static_cast<std::size_t>(idx)].x;
        const double dy = m.ty - ev.cents[static_cast<std::size_t>(idx)].y;
        acc += m.w * (dx * dx + dy * dy);
    }
    return acc;
}

/// One damped Gauss-Newton step aligning the candidate render's pixel
/// centroids to the target's. The candidate is re-rendered every trial, so
/// both sides of each correspondence are measured the same way: silhouette
/// and occlusion truncation cancel instead of biasing the solution, and the
/// misalignment is exactly zero at the true parameters. With
/// rendered_jacobian false the smooth projected triangle centers stand in
/// for the quantized rendered centroids in the Jacobian; with true the
/// Jacobian is a secant through actual re-renders at deltas large enough to
/// flip pixels, which follows the quantized cost staircase where the smooth
/// surrogate misleads. Acceptance (with step halving) requires a strict
/// decrease of the alignment cost; every render along the way still updates
/// the best-seen pixel MSE so the reported residual stays monotone.
bool alignment_step(const FitProblem& prob, const std::vector<PixelCentroid>& target,
                    const std::vector<int>& target_of_tri, std::vector<double>& theta,
                    RenderEval& cur, double min_scale_value, int& iterations, double& best_mse,
                    std::vector<double>& best_theta, bool rendered_jacobian) {
    std::vector<MatchRow> rows;
    std::vector<PixelCentroid> matched;  // carries triangle ids for the Jacobian
    rows.reserve(cur.cents.size());
    for (const PixelCentroid& c : cur.cents) {
        const int ti = target_of_tri[static_cast<std::size_t>(c.triangle)];
        if (ti < 0) continue;
        const PixelCentroid& t = target[static_cast<std::size_t>(ti)];
        MatchRow m;
        m.triangle = c.triangle;
        m.tx = t.x;
        m.ty = t.y;
        m.cx = c.x;
        m.cy = c.y;
        m.w = static_cast<double>(std::min(t.count, c.count));
        m.base_r2 = (m.tx - m.cx) * (m.tx - m.cx) + (m.ty - m.cy) * (m.ty - m.cy);
        rows.push_back(m);
        matched.push_back(c);
    }
    const int dims = prob.n_exp + 6;
    if (static_cast<int>(rows.size()) * 2 < dims) return false;

    double base_cost = 0.0;
    for (const MatchRow& m : rows) base_cost += m.w * m.base_r2;
    if (base_cost == 0.0) return false;  // centroids already aligned exactly

    const auto nrows = static_cast<Eigen::Index>(rows.size() * 2);
    Eigen::VectorXd r(nrows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double sw = std::sqrt(rows[i].w);
        r[static_cast<Eigen::Index>(2 * i)] = sw * (rows[i].tx - rows[i].cx);
        r[static_cast<Eigen::Index>(2 * i + 1)] = sw * (rows[i].ty - rows[i].cy);
    }

    Eigen::MatrixXd jac(nrows, dims);
    if (rendered_jacobian) {
        for (int d = 0; d < dims; ++d) {
            double delta;
            if (d < prob.n_exp + 3) delta = 0.02;      // expression, rotation
            else if (d < prob.n_exp + 5) delta = 0.5;  // translation (pixels)
            else delta = 0.01 * std::max(1.0, theta[static_cast<std::size_t>(d)]);
            std::vector<double> bumped = theta;
            bumped[static_cast<std::size_t>(d)] += delta;
            const RenderEval bev = evaluate_render(prob, bumped);
            if (bev.mse < best_mse) {
                best_mse = bev.mse;
                best_theta = bumped;
            }
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const int idx = bev.index_of_tri[static_cast<std::size_t>(rows[i].triangle)];
                const double bx = idx < 0 ? rows[i].cx : bev.cents[static_cast<std::size_t>(idx)].x;
                const double by = idx < 0 ? rows[i].cy : bev.cents[static_cast<std::size_t>(idx)].y;
                const double sw = std::sqrt(rows[i].w);
                jac(static_cast<Eigen::Index>(2 * i), d) = sw * (bx - rows[i].cx) / delta;
                jac(static_cast<Eigen::Index>(2 * i + 1), d) = sw * (by - rows[i].cy) / delta;
            }
        }
    } else {
        const std::vector<double> centers = projected_centers(prob, matched, theta);
        for (int d = 0; d < dims; ++d) {
            double delta;
            if (d < prob.n_exp + 3) delta = 1e-4;      // expression, rotation
            else if (d < prob.n_exp + 5) delta = 1e-2;  // translation (pixels)
            else delta = 1e-4 * std::max(1.0, theta[static_cast<std::size_t>(d)]);
            std::vector<double> bumped = theta;
            bumped[static_cast<std::size_t>(d)] += delta;
            const std::vector<double> c2 = projected_centers(prob, matched, bumped);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const double sw = std::sqrt(rows[i].w);
                jac(static_cast<Eigen::Index>(2 * i), d) = sw * (c2[2 * i] - centers[2 * i]) / delta;
                jac(static_cast<Eigen::Index>(2 * i + 1), d) =
                    sw * (c2[2 * i + 1] - centers[2 * i + 1]) / delta;
            }
        }
    }

    Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double damping = 1e-8 * jtj.trace() / dims + 1e-12;
    jtj += damping * Eigen::MatrixXd::Identity(dims, dims);
    const Eigen::VectorXd dtheta = jtj.ldlt().solve(jac.transpose() * r);
    if (!dtheta.allFinite()) return false;

    double alpha = 1.0;
    for (int halving = 0; halving < 8; ++halving, alpha *= 0.5) {
        std::vector<double> cand = theta;
        for (int d = 0; d < dims; ++d) cand[static_cast<std::size_t>(d)] += alpha * dtheta[d];
        if (cand[static_cast<std::size_t>(prob.n_exp) + 5] < min_scale_value) continue;
        RenderEval trial = evaluate_render(prob, cand);
        if (trial.mse < best_mse) {
            best_mse = trial.mse;
            best_theta = cand;
        }
        if (alignment_cost(rows, trial) < base_cost) {
            theta = std::move(cand);
            cur = std::move(trial);
            ++iterations;
            return true;
        }
    }
    return false;
}

}  // namespace

FitResult fit_facemap(const Tensor& target_map, const morph::MorphableModel& model,
                      const std::vector<double>& identity, const morph::ShapeParams& init_params,
                      const morph::CameraParams& init_camera, const FitOptions& options) {
    if (target_map.ndim() != 3 || target_map.dim(0) != 3)
        throw DataError("fit_facemap: target must be a (3,H,W) face map");
    if (static_cast<int>(identity.size()) != model.n_id)
        throw DataError("fit_facemap: identity size does not match the model");
    if (static_cast<int>(init_params.expression.size()) != model.n_exp)
        throw DataError("fit_facemap: init expression size does not match the model");

    FitProblem prob{&target_map, &model, &identity,
                    target_map.dim(1), target_map.dim(2), model.n_exp};
    const double min_scale_value = std::max(1e-6, 0.05 * init_camera.scale);
    const std::vector<PixelCentroid> corr = decode_centroids(target_map, model);

    auto flatten = [&](const morph::ShapeParams& p, const morph::CameraParams& c) {
        std::vector<double> theta(static_cast<std::size_t>(model.n_exp) + 6);
        std::copy(p.expression.begin(), p.expression.end(), theta.begin());
        theta[static_cast<std::size_t>(model.n_exp)] = c.rx;
        theta[static_cast<std::size_t>(model.n_exp) + 1] = c.ry;
        theta[static_cast<std::size_t>(model.n_exp) + 2] = c.rz;
        theta[static_cast<std::size_t>(model.n_exp) + 3] = c.tx;
        theta[static_cast<std::size_t>(model.n_exp) + 4] = c.ty;
        theta[static_cast<std::size_t>(model.n_exp) + 5] = c.scale;
        return theta;
    };

    FitResult result;
    double overall_best = std::numeric_limits<double>::infinity();
    std::vector<int> target_of_tri(model.triangles.size(), -1);
    for (std::size_t i = 0; i < corr.size(); ++i)
        target_of_tri[static_cast<std::size_t>(corr[i].triangle)] = static_cast<int>(i);

    for (int start = 0; start < std::max(1, options.starts); ++start) {
        std::vector<double> theta = flatten(init_params, init_camera);
        if (start > 0) {
            Rng rng(100 + static_cast<std::uint64_t>(start));  // documented jitter seeds 101, 102
            for (int d = 0; d < model.n_exp; ++d)
                theta[static_cast<std::size_t>(d)] += rng.uniform(-0.05, 0.05);
            for (int d = 0; d < 3; ++d)
                theta[static_cast<std::size_t>(model.n_exp + d)] += rng.uniform(-0.02, 0.02);
            for (int d = 3; d < 5; ++d)
                theta[static_cast<std::size_t>(model.n_exp + d)] += rng.uniform(-0.5, 0.5);
            theta[static_cast<std::size_t>(model.n_exp) + 5] *= 1.0 + rng.uniform(-0.01, 0.01);
        }

        double best = prob.mse(theta);
        int iterations = 0;
        const SearchSteps coarse{0.08, 0.04, 1.0, 0.02 * init_camera.scale};
        const SearchSteps fine{0.008, 0.004, 0.1, 0.002 * init_camera.scale};
        pattern_search(prob, theta, best, coarse, options.coarse_sweeps, min_scale_value,
                       iterations);
        std::vector<double> best_theta = theta;  // pattern search keeps best == mse(theta)

        RenderEval cur;
        if (best > options.mse_threshold) cur = evaluate_render(prob, theta);
        for (int round = 0; round < options.refine_rounds && best > options.mse_threshold;
             ++round) {
            for (int gn = 0; gn < 12; ++gn) {
                if (!alignment_step(prob, corr, target_of_tri, theta, cur, min_scale_value,
                                    iterations, best, best_theta, false) &&
                    !alignment_step(prob, corr, target_of_tri, theta, cur, min_scale_value,
                                    iterations, best, best_theta, true))
                    break;
            }
            double polish = cur.mse;
            pattern_search(prob, theta, polish, fine, options.polish_sweeps, min_scale_value,
                           iterations);
            if (polish < best) {
                best = polish;
                best_theta = theta;
            }
            if (round + 1 < options.refine_rounds && best > options.mse_threshold)
                cur = evaluate_render(prob, theta);
        }

        if (best < overall_best) {
            overall_best = best;
            result.expression.assign(best_theta.begin(), best_theta.begin() + model.n_exp);
            result.camera = prob.camera(best_theta);
            result.residual = best;
            result.iterations = iterations;
        }
        if (overall_best <= options.mse_threshold) break;
    }
    result.converged = overall_best <= options.mse_threshold;
    return result;
}

double aed(const std::vector<std::vector<double>>& driver_expressions,
           const std::vector<std::vector<double>>& recovered_expressions) {
    if (driver_expressions.empty() || driver_expressions.size() != recovered_expressions.size())
        throw DataError("aed: inputs must be same-length non-empty lists");
    double acc = 0.0;
    for (std::size_t i = 0; i < driver_expressions.size(); ++i) {
        const auto& d = driver_expressions[i];
        const auto& r = recovered_expressions[i];
        if (d.size() != r.size()) throw DataError("aed: coefficient count mismatch");
        double frame = 0.0;
        for (std::size_t j = 0; j < d.size(); ++j) frame += std::abs(d[j] - r[j]);
        acc += frame;
    }
    return acc / static_cast<double>(driver_expressions.size());
}

}  // namespace headgan::metrics
