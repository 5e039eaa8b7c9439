// Rasterizer: projection math against an independent matrix oracle,
// z-buffer resolution against a brute-force per-pixel oracle, bitwise
// pose-independence of the semantic face-map colors, mouth-box clamping,
// and ground-truth frame rendering.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "headgan/morphable.hpp"
#include "headgan/rasterizer.hpp"
#include "headgan/rng.hpp"

using headgan::Rng;
using headgan::Tensor;
namespace morph = headgan::morph;
namespace raster = headgan::raster;

namespace {

using Mat3 = std::array<double, 9>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(3 * i + j)] += a[static_cast<std::size_t>(3 * i + k)] * b[static_cast<std::size_t>(3 * k + j)];
    return c;
}

// Independent composition R = Rz * Ry * Rx from explicit axis matrices.
Mat3 oracle_rotation(double rx, double ry, double rz) {
    const double cx = std::cos(rx), sx = std::sin(rx);
    const double cy = std::cos(ry), sy = std::sin(ry);
    const double cz = std::cos(rz), sz = std::sin(rz);
    const Mat3 mx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
    const Mat3 my{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    const Mat3 mz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
    return matmul(mz, matmul(my, mx));
}

// Minimal hand-built model: rasterize/mouth_box only touch mean_shape,
// triangles, mouth_vertices and n_vertices.
morph::MorphableModel two_triangle_model(const std::vector<double>& verts,
                                         const std::vector<std::array<int, 3>>& tris) {
    morph::MorphableModel m;
    m.n_vertices = static_cast<int>(verts.size() / 3);
    m.n_id = 1;
    m.n_exp = 1;
    m.mean_shape = Tensor({static_cast<int>(verts.size())});
    for (std::size_t i = 0; i < verts.size(); ++i) m.mean_shape[i] = static_cast<float>(verts[i]);
    m.triangles = tris;
    m.mouth_vertices = {0};
    return m;
}

struct OracleTri {
    double x[3], y[3], z[3];
};

// Brute-force coverage + interpolated depth; returns false for pixels too
// close to an edge to classify robustly (those are skipped by the caller).
bool oracle_inside(const OracleTri& t, double px, double py, double* depth, double margin) {
    double x0 = t.x[0], y0 = t.y[0], x1 = t.x[1], y1 = t.y[1], x2 = t.x[2], y2 = t.y[2];
    double z0 = t.z[0], z1 = t.z[1], z2 = t.z[2];
    double area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0);
    if (area < 0.0) {
        std::swap(x1, x2);
        std::swap(y1, y2);
        std::swap(z1, z2);
        area = -area;
    }
    const double e01 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
    const double e12 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    const double e20 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2);
    if (e01 <= margin || e12 <= margin || e20 <= margin) return false;
    *depth = (e12 * z0 + e20 * z1 + e01 * z2) / area;
    return true;
}

bool oracle_strictly_outside(const OracleTri& t, double px, double py, double margin) {
    double x0 = t.x[0], y0 = t.y[0], x1 = t.x[1], y1 = t.y[1], x2 = t.x[2], y2 = t.y[2];
    double area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0);
    if (area < 0.0) {
        std::swap(x1, x2);
        std::swap(y1, y2);
    }
    const double e01 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
    const double e12 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    const double e20 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2);
    return e01 < -margin || e12 < -margin || e20 < -margin;
}

}  // namespace

TEST_CASE("projection matches the explicit matrix oracle") {
    Rng rng(50);
    for (int trial = 0; trial < 25; ++trial) {
        morph::CameraParams cam;
        cam.rx = rng.uniform(-0.6, 0.6);
        cam.ry = rng.uniform(-0.6, 0.6);
        cam.rz = rng.uniform(-0.6, 0.6);
        cam.tx = rng.uniform(-8.0, 8.0);
        cam.ty = rng.uniform(-8.0, 8.0);
        cam.scale = rng.uniform(5.0, 40.0);
        morph::FaceShape shape;
        for (int i = 0; i < 4; ++i)
            for (int a = 0; a < 3; ++a) shape.vertices.push_back(rng.uniform(-1.0, 1.0));

        const int h = 48, w = 64;
        const raster::ProjectedVertices pv = raster::project(shape, cam, h, w);
        const Mat3 r = oracle_rotation(cam.rx, cam.ry, cam.rz);
        for (int i = 0; i < 4; ++i) {
            const double vx = shape.vertices[static_cast<std::size_t>(3 * i)];
            const double vy = shape.vertices[static_cast<std::size_t>(3 * i + 1)];
            const double vz = shape.vertices[static_cast<std::size_t>(3 * i + 2)];
            const double px = r[0] * vx + r[1] * vy + r[2] * vz;
            const double py = r[3] * vx + r[4] * vy + r[5] * vz;
            const double pz = r[6] * vx + r[7] * vy + r[8] * vz;
            CHECK(pv.x[static_cast<std::size_t>(i)] ==
                  doctest::Approx(0.5 * w + cam.scale * px + cam.tx).epsilon(1e-12));
            CHECK(pv.y[static_cast<std::size_t>(i)] ==
                  doctest::Approx(0.5 * h - cam.scale * py + cam.ty).epsilon(1e-12));
            CHECK(pv.z[static_cast<std::size_t>(i)] ==
                  doctest::Approx(cam.scale * pz).epsilon(1e-12));
        }
    }
}

TEST_CASE("projection conventions: image y is flipped, depth is rotated z") {
    morph::FaceShape shape;
    shape.vertices = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
    morph::CameraParams cam;
    cam.scale = 10.0;
    const raster::ProjectedVertices flat = raster::project(shape, cam, 32, 32);
    CHECK(flat.x[0] == doctest::Approx(26.0));  // 16 + 10*1
    CHECK(flat.y[0] == doctest::Approx(16.0));
    CHECK(flat.y[1] == doctest::Approx(6.0));  // up in model space -> smaller row
    CHECK(flat.z[0] == doctest::Approx(0.0));

    // 90 degrees about y sends +x to -z: the point lands at the center with
    // depth -scale (farther than anything at z >= 0).
    cam.ry = 1.5707963267948966;
    const raster::ProjectedVertices turned = raster::project(shape, cam, 32, 32);
    CHECK(turned.x[0] == doctest::Approx(16.0).epsilon(1e-9));
    CHECK(turned.z[0] == doctest::Approx(-10.0).epsilon(1e-9));

    cam.scale = 0.0;
    CHECK_THROWS_AS(raster::project(shape, cam, 32, 32), std::invalid_argument);
}

TEST_CASE("z-buffer picks the nearer triangle: constant depths") {
    // Large far triangle (depth 0.1) behind a small near one (depth 0.5).
    const morph::MorphableModel m = two_triangle_model(
        {-0.8, -0.8, 0.1, 0.8, -0.8, 0.1, 0.0, 0.8, 0.1,
         -0.4, -0.4, 0.5, 0.4, -0.4, 0.5, 0.0, 0.4, 0.5},
        {{0, 1, 2}, {3, 4, 5}});
    morph::FaceShape shape;
    shape.vertices.assign(m.mean_shape.storage().begin(), m.mean_shape.storage().end());
    morph::CameraParams cam;
    cam.scale = 16.0;
    const int hw = 32;
    const raster::RasterResult rr = raster::rasterize(shape, cam, m, hw, hw);

    const raster::ProjectedVertices pv = raster::project(shape, cam, hw, hw);
    OracleTri tris[2];
    for (int ti = 0; ti < 2; ++ti)
        for (int v = 0; v < 3; ++v) {
            const int idx = m.triangles[static_cast<std::size_t>(ti)][static_cast<std::size_t>(v)];
            tris[ti].x[v] = pv.x[static_cast<std::size_t>(idx)];
            tris[ti].y[v] = pv.y[static_cast<std::size_t>(idx)];
            tris[ti].z[v] = pv.z[static_cast<std::size_t>(idx)];
        }

    int checked = 0;
    const double margin = 1e-6;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            const double cx = x + 0.5, cy = y + 0.5;
            double d0 = 0, d1 = 0;
            const bool in0 = oracle_inside(tris[0], cx, cy, &d0, margin);
            const bool in1 = oracle_inside(tris[1], cx, cy, &d1, margin);
            const bool out0 = oracle_strictly_outside(tris[0], cx, cy, margin);
            const bool out1 = oracle_strictly_outside(tris[1], cx, cy, margin);
            if (in0 && in1) {
                CHECK(rr.mask.at(y, x) == (d1 > d0 ? 1 : 0));
                ++checked;
            } else if (in0 && out1) {
                CHECK(rr.mask.at(y, x) == 0);
                ++checked;
            } else if (in1 && out0) {
                CHECK(rr.mask.at(y, x) == 1);
                ++checked;
            } else if (out0 && out1) {
                CHECK(rr.mask.at(y, x) == -1);
                ++checked;
            }
        }
    CHECK(checked > 700);  // nearly every pixel classified unambiguously
}

TEST_CASE("z-buffer picks the nearer triangle: interpenetrating depths") {
    // Triangle 0 tilts from depth -1 (left) to +1 (right); triangle 1 is the
    // constant-depth plane z = 0. The winner flips across the image, and the
    // crossover is decided per pixel by interpolated depth.
    const morph::MorphableModel m = two_triangle_model(
        {-0.9, -0.9, -1.0, 0.9, -0.9, 1.0, 0.0, 0.9, 0.0,
         -0.9, -0.85, 0.0, 0.9, -0.85, 0.0, 0.0, 0.85, 0.0},
        {{0, 1, 2}, {3, 4, 5}});
    morph::FaceShape shape;
    shape.vertices.assign(m.mean_shape.storage().begin(), m.mean_shape.storage().end());
    morph::CameraParams cam;
    cam.scale = 20.0;
    const int hw = 40;
    const raster::RasterResult rr = raster::rasterize(shape, cam, m, hw, hw);

    const raster::ProjectedVertices pv = raster::project(shape, cam, hw, hw);
    OracleTri tris[2];
    for (int ti = 0; ti < 2; ++ti)
        for (int v = 0; v < 3; ++v) {
            const int idx = m.triangles[static_cast<std::size_t>(ti)][static_cast<std::size_t>(v)];
            tris[ti].x[v] = pv.x[static_cast<std::size_t>(idx)];
            tris[ti].y[v] = pv.y[static_cast<std::size_t>(idx)];
            tris[ti].z[v] = pv.z[static_cast<std::size_t>(idx)];
        }

    int both = 0, flips0 = 0, flips1 = 0;
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            const double cx = x + 0.5, cy = y + 0.5;
            double d0 = 0, d1 = 0;
            if (oracle_inside(tris[0], cx, cy, &d0, 1e-6) &&
                oracle_inside(tris[1], cx, cy, &d1, 1e-6) && std::abs(d0 - d1) > 1e-9) {
                const int want = d1 > d0 ? 1 : 0;
                CHECK(rr.mask.at(y, x) == want);
                ++both;
                (want == 0 ? flips0 : flips1) += 1;
            }
        }
    CHECK(both > 300);
    CHECK(flips0 > 50);  // each triangle wins somewhere
    CHECK(flips1 > 50);
}

TEST_CASE("face-map colors are pose-independent, bitwise, background exactly zero") {
    const morph::MorphableModel m = morph::make_synthetic_model(7, 96, 12, 8);
    morph::ShapeParams params;
    params.identity.assign(static_cast<std::size_t>(m.n_id), 0.0);
    params.expression.assign(static_cast<std::size_t>(m.n_exp), 0.0);
    Rng rng(51);
    params.identity[0] = 0.7;
    params.expression[0] = 1.1;
    const morph::FaceShape shape = morph::synthesize_shape(m, params);
    const std::vector<std::array<float, 3>> colors = raster::triangle_colors(m);
    REQUIRE(colors.size() == m.triangles.size());

    const int res = 64;
    for (int pose = 0; pose < 20; ++pose) {
        morph::CameraParams cam;
        cam.rx = rng.uniform(-0.45, 0.45);
        cam.ry = rng.uniform(-0.45, 0.45);
        cam.rz = rng.uniform(-0.45, 0.45);
        cam.tx = rng.uniform(-6.0, 6.0);
        cam.ty = rng.uniform(-6.0, 6.0);
        cam.scale = res * rng.uniform(0.26, 0.34);
        const raster::RasterResult rr = raster::rasterize(shape, cam, m, res, res);

        int face_pixels = 0;
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                const int ti = rr.mask.at(y, x);
                if (ti < 0) {
                    CHECK(rr.face_map.at(0, y, x) == 0.0f);
                    CHECK(rr.face_map.at(1, y, x) == 0.0f);
                    CHECK(rr.face_map.at(2, y, x) == 0.0f);
                } else {
                    ++face_pixels;
                    REQUIRE(ti < static_cast<int>(colors.size()));
                    // Bitwise equality with the pose-independent palette.
                    CHECK(rr.face_map.at(0, y, x) == colors[static_cast<std::size_t>(ti)][0]);
                    CHECK(rr.face_map.at(1, y, x) == colors[static_cast<std::size_t>(ti)][1]);
                    CHECK(rr.face_map.at(2, y, x) == colors[static_cast<std::size_t>(ti)][2]);
                    for (int a = 0; a < 3; ++a) {
                        CHECK(rr.face_map.at(a, y, x) > 0.0f);
                        CHECK(rr.face_map.at(a, y, x) <= 1.0f);
                    }
                }
            }
        CHECK(face_pixels > 50);
    }
}

TEST_CASE("triangle palette normalizes mean-shape centers into (0,1]") {
    const morph::MorphableModel m = morph::make_synthetic_model(7, 96, 12, 8);
    const raster::ColorBox box = raster::color_box(m);
    const std::vector<std::array<float, 3>> colors = raster::triangle_colors(m);
    for (std::size_t ti = 0; ti < m.triangles.size(); ++ti)
        for (int a = 0; a < 3; ++a) {
            const auto& tr = m.triangles[ti];
            const double center = (m.mean_shape[3LL * tr[0] + a] + m.mean_shape[3LL * tr[1] + a] +
                                   m.mean_shape[3LL * tr[2] + a]) /
                                  3.0;
            const double expect = (center - box.lo[a]) / (box.hi[a] - box.lo[a]);
            CHECK(colors[ti][static_cast<std::size_t>(a)] ==
                  doctest::Approx(expect).epsilon(1e-6));
            CHECK(colors[ti][static_cast<std::size_t>(a)] > 0.0f);
            CHECK(colors[ti][static_cast<std::size_t>(a)] <= 1.0f);
        }
}

TEST_CASE("mouth box follows the projected mouth and clamps to the image") {
    const morph::MorphableModel m = morph::make_synthetic_model(7, 96, 12, 8);
    morph::ShapeParams params;
    params.identity.assign(static_cast<std::size_t>(m.n_id), 0.0);
    params.expression.assign(static_cast<std::size_t>(m.n_exp), 0.0);
    const morph::FaceShape shape = morph::synthesize_shape(m, params);
    const int res = 64, size = 16;

    morph::CameraParams cam;
    cam.scale = 18.0;
    const raster::MouthBox box = raster::mouth_box(shape, cam, m, res, res, size);
    const raster::ProjectedVertices pv = raster::project(shape, cam, res, res);
    double cx = 0, cy = 0;
    for (int v : m.mouth_vertices) {
        cx += pv.x[static_cast<std::size_t>(v)];
        cy += pv.y[static_cast<std::size_t>(v)];
    }
    cx /= static_cast<double>(m.mouth_vertices.size());
    cy /= static_cast<double>(m.mouth_vertices.size());
    CHECK(box.size == size);
    CHECK(box.x0 == std::clamp(static_cast<int>(std::lround(cx - size / 2.0)), 0, res - size));
    CHECK(box.y0 == std::clamp(static_cast<int>(std::lround(cy - size / 2.0)), 0, res - size));
    CHECK(box.x0 >= 0);
    CHECK(box.x0 + size <= res);

    cam.tx = 1000.0;
    cam.ty = -1000.0;
    const raster::MouthBox clamped = raster::mouth_box(shape, cam, m, res, res, size);
    CHECK(clamped.x0 == res - size);
    CHECK(clamped.y0 == 0);

    CHECK_THROWS_AS(raster::mouth_box(shape, cam, m, res, res, 0), std::invalid_argument);
    CHECK_THROWS_AS(raster::mouth_box(shape, cam, m, res, res, res + 1), std::invalid_argument);
}

TEST_CASE("ground-truth frames live in [-1,1] with background -1") {
    const morph::MorphableModel m = morph::make_synthetic_model(7, 96, 12, 8);
    morph::ShapeParams params;
    params.identity.assign(static_cast<std::size_t>(m.n_id), 0.0);
    params.expression.assign(static_cast<std::size_t>(m.n_exp), 0.0);
    params.identity[0] = 1.5;
    const morph::FaceShape shape = morph::synthesize_shape(m, params);
    morph::CameraParams cam;
    cam.scale = 18.0;
    const Tensor frame = raster::render_frame(shape, cam, m, params.identity, 64, 64);
    const raster::RasterResult rr = raster::rasterize(shape, cam, m, 64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            for (int a = 0; a < 3; ++a) {
                const float v = frame.at(a, y, x);
                CHECK(v >= -1.0f);
                CHECK(v <= 1.0f);
                if (rr.mask.at(y, x) < 0) CHECK(v == -1.0f);
            }

    morph::FaceShape off = shape;
    off.vertices.pop_back();
    off.vertices.pop_back();
    off.vertices.pop_back();
    CHECK_THROWS_AS(raster::rasterize(off, cam, m, 64, 64), std::invalid_argument);
}
