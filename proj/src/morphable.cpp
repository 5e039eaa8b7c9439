#include "headgan/morphable.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "headgan/errors.hpp"
#include "headgan/rasterizer.hpp"
#include "headgan/rng.hpp"

namespace headgan::morph {

void MorphableModel::validate() const {
    const std::int64_t n3 = 3LL * n_vertices;
    if (mean_shape.numel() != n3) throw DataError("morphable model: mean shape length mismatch");
    if (identity_basis.ndim() != 2 || identity_basis.dim(0) != n3 || identity_basis.dim(1) != n_id)
        throw DataError("morphable model: identity basis shape mismatch");
    if (expression_basis.ndim() != 2 || expression_basis.dim(0) != n3 ||
        expression_basis.dim(1) != n_exp)
        throw DataError("morphable model: expression basis shape mismatch");
    for (const auto& t : triangles)
        for (int v : t)
            if (v < 0 || v >= n_vertices) throw DataError("morphable model: triangle index out of range");
    if (mouth_vertices.empty()) throw DataError("morphable model: empty mouth region");
    for (int v : mouth_vertices)
        if (v < 0 || v >= n_vertices) throw DataError("morphable model: mouth index out of range");
}

FaceShape synthesize_shape(const MorphableModel& model, const ShapeParams& params) {
    if (static_cast<int>(params.identity.size()) != model.n_id ||
        static_cast<int>(params.expression.size()) != model.n_exp)
        throw std::invalid_argument("synthesize_shape: parameter dimensions do not match model (" +
                                    std::to_string(params.identity.size()) + "," +
                                    std::to_string(params.expression.size()) + ") vs (" +
                                    std::to_string(model.n_id) + "," + std::to_string(model.n_exp) +
                                    ")");
    const std::int64_t n3 = 3LL * model.n_vertices;
    FaceShape out;
    out.vertices.resize(static_cast<std::size_t>(n3));
    for (std::int64_t r = 0; r < n3; ++r) {
        double acc = model.mean_shape[r];
        const float* idrow = model.identity_basis.data() + r * model.n_id;
        for (int j = 0; j < model.n_id; ++j) acc += static_cast<double>(idrow[j]) * params.identity[static_cast<std::size_t>(j)];
        const float* exrow = model.expression_basis.data() + r * model.n_exp;
        for (int j = 0; j < model.n_exp; ++j) acc += static_cast<double>(exrow[j]) * params.expression[static_cast<std::size_t>(j)];
        out.vertices[static_cast<std::size_t>(r)] = acc;
    }
    return out;
}

ShapeParams adapt_identity(const ShapeParams& source, const ShapeParams& driver) {
    ShapeParams out;
    out.identity = source.identity;
    out.expression = driver.expression;
    return out;
}

namespace {

struct GridLayout {
    int rows = 0, base_cols = 0;
    std::vector<int> row_len;    // columns per row
    std::vector<int> row_base;   // first vertex index per row
    std::vector<double> u, v;    // per-vertex grid coordinates in [-1,1]
};

GridLayout grid_layout(int n_vertices) {
    GridLayout g;
    g.rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_vertices))));
    if (g.rows < 2) g.rows = 2;
    g.base_cols = n_vertices / g.rows;
    const int rem = n_vertices - g.rows * g.base_cols;
    g.row_len.assign(static_cast<std::size_t>(g.rows), g.base_cols);
    g.row_len.back() += rem;
    g.row_base.resize(static_cast<std::size_t>(g.rows));
    int base = 0;
    for (int r = 0; r < g.rows; ++r) {
        g.row_base[static_cast<std::size_t>(r)] = base;
        base += g.row_len[static_cast<std::size_t>(r)];
    }
    g.u.resize(static_cast<std::size_t>(n_vertices));
    g.v.resize(static_cast<std::size_t>(n_vertices));
    for (int r = 0; r < g.rows; ++r) {
        const int len = g.row_len[static_cast<std::size_t>(r)];
        for (int i = 0; i < len; ++i) {
            const int idx = g.row_base[static_cast<std::size_t>(r)] + i;
            g.u[static_cast<std::size_t>(idx)] = len > 1 ? 2.0 * i / (len - 1) - 1.0 : 0.0;
            g.v[static_cast<std::size_t>(idx)] = 2.0 * r / (g.rows - 1) - 1.0;
        }
    }
    return g;
}

// Strip triangulation between two (possibly unequal) vertex rows: advance
// the pointer that has made the least fractional progress.
void triangulate_rows(int base_a, int len_a, int base_b, int len_b,
                      std::vector<std::array<int, 3>>& out) {
    int i = 0, j = 0;
    while (i < len_a - 1 || j < len_b - 1) {
        const double fa = len_a > 1 ? static_cast<double>(i + 1) / (len_a - 1) : 2.0;
        const double fb = len_b > 1 ? static_cast<double>(j + 1) / (len_b - 1) : 2.0;
        if (j >= len_b - 1 || (i < len_a - 1 && fa <= fb)) {
            out.push_back({base_a + i, base_b + j, base_a + i + 1});
            ++i;
        } else {
            out.push_back({base_a + i, base_b + j, base_b + j + 1});
            ++j;
        }
    }
}

// Smooth random displacement field over the grid: a few random sinusoids
// per coordinate, evaluated at (u,v).
void fill_smooth_column(Rng& rng, const GridLayout& g, int n_vertices, double* col) {
    struct Wave {
        double ax, ay, az, ku, kv, phase;
    };
    std::array<Wave, 3> waves;
    for (auto& wv : waves) {
        wv.ax = rng.normal();
        wv.ay = rng.normal();
        wv.az = 0.6 * rng.normal();
        wv.ku = rng.uniform(0.5, 2.5);
        wv.kv = rng.uniform(0.5, 2.5);
        wv.phase = rng.uniform(0.0, 6.283185307179586);
    }
    for (int vtx = 0; vtx < n_vertices; ++vtx) {
        double dx = 0, dy = 0, dz = 0;
        for (const auto& wv : waves) {
            const double s = std::sin(wv.ku * g.u[static_cast<std::size_t>(vtx)] +
                                      wv.kv * g.v[static_cast<std::size_t>(vtx)] + wv.phase);
            dx += wv.ax * s;
            dy += wv.ay * s;
            dz += wv.az * s;
        }
        col[3 * vtx + 0] = dx;
        col[3 * vtx + 1] = dy;
        col[3 * vtx + 2] = dz;
    }
}

Tensor to_f32_matrix(const Eigen::MatrixXd& m) {
    Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            t[static_cast<std::int64_t>(r) * m.cols() + c] = static_cast<float>(m(r, c));
    return t;
}

// Thin QR with the sign convention diag(R) > 0 so results are reproducible
// and the first column keeps the direction of its seed vector.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& a) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd r = q.transpose() * a;
    for (int c = 0; c < q.cols(); ++c)
        if (r(c, c) < 0) q.col(c) *= -1.0;
    return q;
}

}  // namespace

MorphableModel make_synthetic_model(std::uint64_t seed, int n_vertices, int n_id, int n_exp) {
    if (n_vertices < 4 || n_id < 1 || n_exp < 1 || 3 * n_vertices < n_id + n_exp)
        throw std::invalid_argument("make_synthetic_model: infeasible dimensions");
    Rng rng(seed);
    const GridLayout g = grid_layout(n_vertices);
    const std::int64_t n3 = 3LL * n_vertices;

    MorphableModel model;
    model.n_vertices = n_vertices;
    model.n_id = n_id;
    model.n_exp = n_exp;

    // Dome-shaped base mesh with a gentle seeded perturbation.
    Rng shape_rng = rng.fork(1);
    model.mean_shape = Tensor({static_cast<int>(n3)});
    std::vector<double> bump(static_cast<std::size_t>(n_vertices));
    for (auto& b : bump) b = 0.03 * shape_rng.normal();
    for (int vtx = 0; vtx < n_vertices; ++vtx) {
        const double u = g.u[static_cast<std::size_t>(vtx)];
        const double v = g.v[static_cast<std::size_t>(vtx)];
        const double r2 = 0.55 * (u * u + 0.81 * v * v);
        const double dome = 0.9 * std::sqrt(std::max(0.0, 1.0 - r2));
        model.mean_shape[3LL * vtx + 0] = static_cast<float>(u);
        model.mean_shape[3LL * vtx + 1] = static_cast<float>(-1.2 * v);
        model.mean_shape[3LL * vtx + 2] = static_cast<float>(dome + bump[static_cast<std::size_t>(vtx)]);
    }

    // Triangles row strip by row strip.
    for (int r = 0; r + 1 < g.rows; ++r)
        triangulate_rows(g.row_base[static_cast<std::size_t>(r)], g.row_len[static_cast<std::size_t>(r)],
                         g.row_base[static_cast<std::size_t>(r + 1)],
                         g.row_len[static_cast<std::size_t>(r + 1)], model.triangles);

    // Mouth region: lower-middle box in grid coordinates, nearest-vertex fallback.
    for (int vtx = 0; vtx < n_vertices; ++vtx) {
        const double u = g.u[static_cast<std::size_t>(vtx)];
        const double v = g.v[static_cast<std::size_t>(vtx)];
        if (std::abs(u) <= 0.4 && v >= 0.35 && v <= 0.8) model.mouth_vertices.push_back(vtx);
    }
    if (model.mouth_vertices.empty()) {
        int best = 0;
        double best_d = 1e30;
        for (int vtx = 0; vtx < n_vertices; ++vtx) {
            const double du = g.u[static_cast<std::size_t>(vtx)];
            const double dv = g.v[static_cast<std::size_t>(vtx)] - 0.55;
            const double d = du * du + dv * dv;
            if (d < best_d) {
                best_d = d;
                best = vtx;
            }
        }
        model.mouth_vertices.push_back(best);
    }

    // Expression basis: column 0 seeded with a jaw-opening displacement
    // (mouth region moves down), the rest smooth random fields; then QR.
    Rng exp_rng = rng.fork(2);
    Eigen::MatrixXd raw_exp(n3, n_exp);
    raw_exp.setZero();
    double mouth_cu = 0, mouth_cv = 0;
    for (int vtx : model.mouth_vertices) {
        mouth_cu += g.u[static_cast<std::size_t>(vtx)];
        mouth_cv += g.v[static_cast<std::size_t>(vtx)];
    }
    mouth_cu /= static_cast<double>(model.mouth_vertices.size());
    mouth_cv /= static_cast<double>(model.mouth_vertices.size());
    for (int vtx = 0; vtx < n_vertices; ++vtx) {
        const double du = g.u[static_cast<std::size_t>(vtx)] - mouth_cu;
        const double dv = g.v[static_cast<std::size_t>(vtx)] - mouth_cv;
        const double wgt = std::exp(-(du * du + dv * dv) / (0.35 * 0.35));
        raw_exp(3LL * vtx + 1, 0) = -0.8 * wgt;  // open: lower-face y drops
        raw_exp(3LL * vtx + 2, 0) = -0.2 * wgt;
    }
    std::vector<double> col(static_cast<std::size_t>(n3));
    for (int j = 1; j < n_exp; ++j) {
        fill_smooth_column(exp_rng, g, n_vertices, col.data());
        for (std::int64_t r = 0; r < n3; ++r) raw_exp(r, j) = col[static_cast<std::size_t>(r)];
    }
    model.expression_basis = to_f32_matrix(orthonormalize(raw_exp));

    Rng id_rng = rng.fork(3);
    Eigen::MatrixXd raw_id(n3, n_id);
    for (int j = 0; j < n_id; ++j) {
        fill_smooth_column(id_rng, g, n_vertices, col.data());
        for (std::int64_t r = 0; r < n3; ++r) raw_id(r, j) = col[static_cast<std::size_t>(r)];
    }
    model.identity_basis = to_f32_matrix(orthonormalize(raw_id));

    model.validate();
    return model;
}

SyntheticSequence make_synthetic_sequence(const MorphableModel& model, std::uint64_t seed,
                                          int frames, int resolution) {
    if (frames < 3) throw std::invalid_argument("make_synthetic_sequence: need at least 3 frames");
    if (resolution < 8) throw std::invalid_argument("make_synthetic_sequence: resolution too small");
    Rng rng(seed);
    SyntheticSequence seq;
    seq.resolution = resolution;

    seq.identity.resize(static_cast<std::size_t>(model.n_id));
    for (auto& idc : seq.identity) idc = std::clamp(0.8 * rng.normal(), -2.0, 2.0);

    // Jaw coefficient: slow sinusoid plus a little noise, inside [0, clip];
    // remaining coefficients: AR(1) band-limited walks clipped to +-clip.
    const double jaw_period = 5.0 + rng.uniform(0.0, 3.0);
    const double jaw_phase = rng.uniform(0.0, 6.283185307179586);
    std::vector<double> state(static_cast<std::size_t>(model.n_exp), 0.0);
    for (std::size_t j = 1; j < state.size(); ++j) state[j] = 0.5 * rng.normal();

    morph::CameraParams cam;
    cam.rx = rng.uniform(-0.25, 0.25);
    cam.ry = rng.uniform(-0.3, 0.3);
    cam.rz = rng.uniform(-0.15, 0.15);
    cam.tx = rng.uniform(-3.0, 3.0);
    cam.ty = rng.uniform(-3.0, 3.0);
    double scale_walk = rng.uniform(-0.5, 0.5);
    cam.scale = resolution * (0.30 + 0.04 * scale_walk);

    const int part_len = seq.sample_rate / 25;
    for (int t = 0; t < frames; ++t) {
        ShapeParams p;
        p.identity = seq.identity;
        p.expression.resize(static_cast<std::size_t>(model.n_exp));
        const double jaw = 1.3 + 1.1 * std::sin(6.283185307179586 * t / jaw_period + jaw_phase) +
                           0.15 * rng.normal();
        p.expression[0] = std::clamp(jaw, 0.0, kExpressionClip);
        for (int j = 1; j < model.n_exp; ++j) {
            state[static_cast<std::size_t>(j)] =
                0.92 * state[static_cast<std::size_t>(j)] + 0.25 * rng.normal();
            p.expression[static_cast<std::size_t>(j)] =
                std::clamp(state[static_cast<std::size_t>(j)], -kExpressionClip, kExpressionClip);
        }
        seq.params.push_back(p);
        seq.cameras.push_back(cam);

        // Advance the camera walk; per-frame deltas stay strictly inside the
        // documented step bounds (0.05*range + step < bound).
        cam.rx = std::clamp(0.95 * cam.rx + rng.uniform(-0.055, 0.055), -0.45, 0.45);
        cam.ry = std::clamp(0.95 * cam.ry + rng.uniform(-0.055, 0.055), -0.45, 0.45);
        cam.rz = std::clamp(0.95 * cam.rz + rng.uniform(-0.055, 0.055), -0.45, 0.45);
        cam.tx = std::clamp(0.95 * cam.tx + rng.uniform(-1.0, 1.0), -6.0, 6.0);
        cam.ty = std::clamp(0.95 * cam.ty + rng.uniform(-1.0, 1.0), -6.0, 6.0);
        scale_walk = std::clamp(0.9 * scale_walk + rng.uniform(-0.25, 0.25), -1.0, 1.0);
        cam.scale = resolution * (0.30 + 0.04 * scale_walk);

        // Sinusoid-mixture audio part, amplitude tied to the jaw opening.
        const double amp = 0.1 + 0.5 * (p.expression[0] / kExpressionClip);
        const double f1 = 200.0 + 15.0 * t;
        const double f2 = 450.0 + 10.0 * t;
        std::vector<float> samples(static_cast<std::size_t>(part_len));
        for (int i = 0; i < part_len; ++i) {
            const double arg = static_cast<double>(i) / seq.sample_rate;
            samples[static_cast<std::size_t>(i)] = static_cast<float>(
                amp * (0.6 * std::sin(6.283185307179586 * f1 * arg) +
                       0.4 * std::sin(6.283185307179586 * f2 * arg + 1.3)));
        }
        seq.audio_parts.push_back(std::move(samples));
    }
    seq.reference_index = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(frames)));

    for (int t = 0; t < frames; ++t) {
        const FaceShape s = synthesize_shape(model, seq.params[static_cast<std::size_t>(t)]);
        seq.frames.push_back(raster::render_frame(s, seq.cameras[static_cast<std::size_t>(t)],
                                                  model, seq.identity, resolution, resolution));
    }
    return seq;
}

void save_model(const MorphableModel& model, ArrayFile& file) {
    file.put("mean_shape", model.mean_shape);
    file.put("identity_basis", model.identity_basis);
    file.put("expression_basis", model.expression_basis);
    std::vector<std::int32_t> tri;
    tri.reserve(model.triangles.size() * 3);
    for (const auto& t : model.triangles)
        for (int v : t) tri.push_back(v);
    file.put_i32("triangles", {static_cast<int>(model.triangles.size()), 3}, std::move(tri));
    std::vector<std::int32_t> mouth(model.mouth_vertices.begin(), model.mouth_vertices.end());
    const int n_mouth = static_cast<int>(mouth.size());
    file.put_i32("mouth_vertices", {n_mouth}, std::move(mouth));
    file.put_scalar_i32("n_vertices", model.n_vertices);
}

MorphableModel load_model(const ArrayFile& file) {
    MorphableModel model;
    model.mean_shape = file.tensor("mean_shape");
    model.identity_basis = file.tensor("identity_basis");
    model.expression_basis = file.tensor("expression_basis");
    model.n_vertices = file.scalar_i32("n_vertices");
    model.n_id = model.identity_basis.dim(1);
    model.n_exp = model.expression_basis.dim(1);
    const NamedArray& tri = file.get("triangles");
    if (tri.shape.size() != 2 || tri.shape[1] != 3) throw DataError("triangles array must be (n,3)");
    for (int i = 0; i < tri.shape[0]; ++i)
        model.triangles.push_back({tri.i32[static_cast<std::size_t>(3 * i)],
                                   tri.i32[static_cast<std::size_t>(3 * i + 1)],
                                   tri.i32[static_cast<std::size_t>(3 * i + 2)]});
    for (std::int32_t v : file.get("mouth_vertices").i32) model.mouth_vertices.push_back(v);
    model.validate();
    return model;
}

void save_sequence(const SyntheticSequence& seq, ArrayFile& file) {
    const int t = seq.length();
    const int n_id = static_cast<int>(seq.identity.size());
    const int n_exp = t > 0 ? static_cast<int>(seq.params[0].expression.size()) : 0;
    std::vector<float> idv(seq.identity.begin(), seq.identity.end());
    file.put_f32("identity", {n_id}, std::move(idv));
    std::vector<float> exprs;
    std::vector<float> cams;
    for (int i = 0; i < t; ++i) {
        for (double e : seq.params[static_cast<std::size_t>(i)].expression)
            exprs.push_back(static_cast<float>(e));
        const CameraParams& c = seq.cameras[static_cast<std::size_t>(i)];
        for (double x : {c.rx, c.ry, c.rz, c.tx, c.ty, c.scale}) cams.push_back(static_cast<float>(x));
    }
    file.put_f32("expressions", {t, n_exp}, std::move(exprs));
    file.put_f32("cameras", {t, 6}, std::move(cams));
    const int part_len = t > 0 ? static_cast<int>(seq.audio_parts[0].size()) : 0;
    std::vector<float> audio;
    for (const auto& part : seq.audio_parts) {
        if (static_cast<int>(part.size()) != part_len)
            throw DataError("sequence audio parts have inconsistent lengths");
        audio.insert(audio.end(), part.begin(), part.end());
    }
    file.put_f32("audio", {t, part_len}, std::move(audio));
    file.put_scalar_i32("sample_rate", seq.sample_rate);
    const int res = seq.resolution;
    std::vector<float> frames;
    frames.reserve(static_cast<std::size_t>(t) * 3 * res * res);
    for (const auto& f : seq.frames)
        frames.insert(frames.end(), f.storage().begin(), f.storage().end());
    file.put_f32("frames", {t, 3, res, res}, std::move(frames));
    file.put_scalar_i32("resolution", res);
    file.put_scalar_i32("reference_index", seq.reference_index);
}

SyntheticSequence load_sequence(const ArrayFile& file) {
    SyntheticSequence seq;
    const NamedArray& idv = file.get("identity");
    seq.identity.assign(idv.f32.begin(), idv.f32.end());
    const NamedArray& exprs = file.get("expressions");
    const NamedArray& cams = file.get("cameras");
    if (exprs.shape.size() != 2 || cams.shape.size() != 2 || cams.shape[1] != 6)
        throw DataError("sequence file: malformed expressions/cameras");
    const int t = exprs.shape[0];
    const int n_exp = exprs.shape[1];
    if (cams.shape[0] != t) throw DataError("sequence file: camera count mismatch");
    for (int i = 0; i < t; ++i) {
        ShapeParams p;
        p.identity = seq.identity;
        p.expression.assign(exprs.f32.begin() + static_cast<std::ptrdiff_t>(i) * n_exp,
                            exprs.f32.begin() + static_cast<std::ptrdiff_t>(i + 1) * n_exp);
        seq.params.push_back(std::move(p));
        const float* c = cams.f32.data() + static_cast<std::ptrdiff_t>(i) * 6;
        CameraParams cam;
        cam.rx = c[0];
        cam.ry = c[1];
        cam.rz = c[2];
        cam.tx = c[3];
        cam.ty = c[4];
        cam.scale = c[5];
        seq.cameras.push_back(cam);
    }
    const NamedArray& audio = file.get("audio");
    if (audio.shape.size() != 2 || audio.shape[0] != t) throw DataError("sequence file: malformed audio");
    const int part_len = audio.shape[1];
    for (int i = 0; i < t; ++i)
        seq.audio_parts.emplace_back(audio.f32.begin() + static_cast<std::ptrdiff_t>(i) * part_len,
                                     audio.f32.begin() + static_cast<std::ptrdiff_t>(i + 1) * part_len);
    seq.sample_rate = file.scalar_i32("sample_rate");
    seq.resolution = file.scalar_i32("resolution");
    seq.reference_index = file.scalar_i32("reference_index");
    const NamedArray& frames = file.get("frames");
    if (frames.shape.size() != 4 || frames.shape[0] != t || frames.shape[1] != 3 ||
        frames.shape[2] != seq.resolution || frames.shape[3] != seq.resolution)
        throw DataError("sequence file: malformed frames array");
    const std::ptrdiff_t fsz = 3LL * seq.resolution * seq.resolution;
    for (int i = 0; i < t; ++i) {
        std::vector<float> data(frames.f32.begin() + i * fsz, frames.f32.begin() + (i + 1) * fsz);
        seq.frames.emplace_back(std::vector<int>{3, seq.resolution, seq.resolution}, std::move(data));
    }
    if (seq.reference_index < 0 || seq.reference_index >= t)
        throw DataError("sequence file: reference index out of range");
    return seq;
}

}  // namespace headgan::morph
