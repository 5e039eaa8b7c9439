#include "headgan/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace headgan::raster {

namespace {

struct Rot {
    double m[3][3];
};

Rot rotation(const morph::CameraParams& c) {
    const double cx = std::cos(c.rx), sx = std::sin(c.rx);
    const double cy = std::cos(c.ry), sy = std::sin(c.ry);
    const double cz = std::cos(c.rz), sz = std::sin(c.rz);
    // R = Rz * Ry * Rx
    Rot r;
    r.m[0][0] = cz * cy;
    r.m[0][1] = cz * sy * sx - sz * cx;
    r.m[0][2] = cz * sy * cx + sz * sx;
    r.m[1][0] = sz * cy;
    r.m[1][1] = sz * sy * sx + cz * cx;
    r.m[1][2] = sz * sy * cx - cz * sx;
    r.m[2][0] = -sy;
    r.m[2][1] = cy * sx;
    r.m[2][2] = cy * cx;
    return r;
}

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Top-left fill rule for boundary pixels (image y grows downward): an edge
// owns its boundary pixels when it is a "top" edge (horizontal, pointing
// left in CCW order) or a "left" edge (pointing up).
inline bool edge_accepts(double e, double dx, double dy) {
    if (e > 0.0) return true;
    if (e < 0.0) return false;
    if (dy == 0.0) return dx < 0.0;
    return dy < 0.0;
}

struct TriScreen {
    double x0, y0, x1, y1, x2, y2;  // pixel coordinates
    double z0, z1, z2;              // depths
};

// Scans a projected triangle; calls visit(y, x, depth) for covered pixels.
template <typename Fn>
void scan_triangle(const TriScreen& t, int h, int w, Fn&& visit) {
    double x0 = t.x0, y0 = t.y0, x1 = t.x1, y1 = t.y1, x2 = t.x2, y2 = t.y2;
    double z0 = t.z0, z1 = t.z1, z2 = t.z2;
    double area = edge_fn(x0, y0, x1, y1, x2, y2);
    if (area == 0.0) return;  // degenerate
    if (area < 0.0) {         // keep CCW winding; no back-face culling
        std::swap(x1, x2);
        std::swap(y1, y2);
        std::swap(z1, z2);
        area = -area;
    }
    const int min_x = std::max(0, static_cast<int>(std::floor(std::min({x0, x1, x2}) - 0.5)));
    const int max_x = std::min(w - 1, static_cast<int>(std::ceil(std::max({x0, x1, x2}) - 0.5)));
    const int min_y = std::max(0, static_cast<int>(std::floor(std::min({y0, y1, y2}) - 0.5)));
    const int max_y = std::min(h - 1, static_cast<int>(std::ceil(std::max({y0, y1, y2}) - 0.5)));
    for (int py = min_y; py <= max_y; ++py) {
        const double cy = py + 0.5;
        for (int px = min_x; px <= max_x; ++px) {
            const double cx = px + 0.5;
            const double e01 = edge_fn(x0, y0, x1, y1, cx, cy);
            const double e12 = edge_fn(x1, y1, x2, y2, cx, cy);
            const double e20 = edge_fn(x2, y2, x0, y0, cx, cy);
            if (!edge_accepts(e01, x1 - x0, y1 - y0)) continue;
            if (!edge_accepts(e12, x2 - x1, y2 - y1)) continue;
            if (!edge_accepts(e20, x0 - x2, y0 - y2)) continue;
            const double w0 = e12 / area;  // barycentric weight of vertex 0
            const double w1 = e20 / area;
            const double w2 = e01 / area;
            visit(py, px, w0 * z0 + w1 * z1 + w2 * z2);
        }
    }
}

}  // namespace

ProjectedVertices project(const morph::FaceShape& shape, const morph::CameraParams& camera,
                          int h, int w) {
    if (camera.scale <= 0.0) throw std::invalid_argument("project: camera scale must be positive");
    const Rot r = rotation(camera);
    const int n = shape.n_vertices();
    ProjectedVertices out;
    out.x.resize(static_cast<std::size_t>(n));
    out.y.resize(static_cast<std::size_t>(n));
    out.z.resize(static_cast<std::size_t>(n));
    const double cxp = 0.5 * w, cyp = 0.5 * h;
    for (int i = 0; i < n; ++i) {
        const double vx = shape.vertices[static_cast<std::size_t>(3 * i)];
        const double vy = shape.vertices[static_cast<std::size_t>(3 * i + 1)];
        const double vz = shape.vertices[static_cast<std::size_t>(3 * i + 2)];
        const double rx = r.m[0][0] * vx + r.m[0][1] * vy + r.m[0][2] * vz;
        const double ry = r.m[1][0] * vx + r.m[1][1] * vy + r.m[1][2] * vz;
        const double rz = r.m[2][0] * vx + r.m[2][1] * vy + r.m[2][2] * vz;
        out.x[static_cast<std::size_t>(i)] = cxp + camera.scale * rx + camera.tx;
        out.y[static_cast<std::size_t>(i)] = cyp - camera.scale * ry + camera.ty;
        out.z[static_cast<std::size_t>(i)] = camera.scale * rz;
    }
    return out;
}

ColorBox color_box(const morph::MorphableModel& model) {
    ColorBox box;
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::numeric_limits<double>::infinity();
        box.hi[a] = -std::numeric_limits<double>::infinity();
    }
    for (int i = 0; i < model.n_vertices; ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = model.mean_shape[3LL * i + a];
            box.lo[a] = std::min(box.lo[a], v);
            box.hi[a] = std::max(box.hi[a], v);
        }
    for (int a = 0; a < 3; ++a) {
        double extent = box.hi[a] - box.lo[a];
        if (extent <= 0.0) extent = 1.0;
        box.lo[a] -= 0.05 * extent;
        box.hi[a] += 0.05 * extent;
    }
    return box;
}

std::vector<std::array<float, 3>> triangle_colors(const morph::MorphableModel& model) {
    const ColorBox box = color_box(model);
    std::vector<std::array<float, 3>> colors(model.triangles.size());
    for (std::size_t ti = 0; ti < model.triangles.size(); ++ti) {
        const auto& tr = model.triangles[ti];
        // Pose-independent color: the triangle's center on the MEAN shape,
        // normalized by the model's expanded bounding box into (0,1].
        for (int a = 0; a < 3; ++a) {
            const double center = (model.mean_shape[3LL * tr[0] + a] + model.mean_shape[3LL * tr[1] + a] +
                                   model.mean_shape[3LL * tr[2] + a]) /
                                  3.0;
            colors[ti][static_cast<std::size_t>(a)] =
                static_cast<float>((center - box.lo[a]) / (box.hi[a] - box.lo[a]));
        }
    }
    return colors;
}

RasterResult rasterize(const morph::FaceShape& shape, const morph::CameraParams& camera,
                       const morph::MorphableModel& model, int h, int w) {
    if (shape.n_vertices() != model.n_vertices)
        throw std::invalid_argument("rasterize: shape/model vertex count mismatch");
    const ProjectedVertices pv = project(shape, camera, h, w);
    RasterResult out;
    out.mask.h = h;
    out.mask.w = w;
    out.mask.grid.assign(static_cast<std::size_t>(h) * w, -1);
    out.face_map = Tensor({3, h, w});
    std::vector<double> zbuf(static_cast<std::size_t>(h) * w,
                             -std::numeric_limits<double>::infinity());

    const std::vector<std::array<float, 3>> colors = triangle_colors(model);
    for (std::size_t ti = 0; ti < model.triangles.size(); ++ti) {
        const auto& tr = model.triangles[ti];
        TriScreen ts{pv.x[static_cast<std::size_t>(tr[0])], pv.y[static_cast<std::size_t>(tr[0])],
                     pv.x[static_cast<std::size_t>(tr[1])], pv.y[static_cast<std::size_t>(tr[1])],
                     pv.x[static_cast<std::size_t>(tr[2])], pv.y[static_cast<std::size_t>(tr[2])],
                     pv.z[static_cast<std::size_t>(tr[0])], pv.z[static_cast<std::size_t>(tr[1])],
                     pv.z[static_cast<std::size_t>(tr[2])]};
        const float* color = colors[ti].data();
        scan_triangle(ts, h, w, [&](int py, int px, double depth) {
            const std::size_t idx = static_cast<std::size_t>(py) * w + px;
            if (depth > zbuf[idx]) {
                zbuf[idx] = depth;
                out.mask.grid[idx] = static_cast<int>(ti);
                out.face_map.at(0, py, px) = color[0];
                out.face_map.at(1, py, px) = color[1];
                out.face_map.at(2, py, px) = color[2];
            }
        });
    }
    return out;
}

MouthBox mouth_box(const morph::FaceShape& shape, const morph::CameraParams& camera,
                   const morph::MorphableModel& model, int h, int w, int size) {
    if (size <= 0 || size > w || size > h)
        throw std::invalid_argument("mouth_box: size must fit inside the image");
    const ProjectedVertices pv = project(shape, camera, h, w);
    double cx = 0.0, cy = 0.0;
    for (int v : model.mouth_vertices) {
        cx += pv.x[static_cast<std::size_t>(v)];
        cy += pv.y[static_cast<std::size_t>(v)];
    }
    cx /= static_cast<double>(model.mouth_vertices.size());
    cy /= static_cast<double>(model.mouth_vertices.size());
    MouthBox box;
    box.size = size;
    box.x0 = std::clamp(static_cast<int>(std::lround(cx - size / 2.0)), 0, w - size);
    box.y0 = std::clamp(static_cast<int>(std::lround(cy - size / 2.0)), 0, h - size);
    return box;
}

Tensor render_frame(const morph::FaceShape& shape, const morph::CameraParams& camera,
                    const morph::MorphableModel& model, const std::vector<double>& identity,
                    int h, int w) {
    const ProjectedVertices pv = project(shape, camera, h, w);
    Tensor frame = Tensor::full({3, h, w}, -1.0f);
    std::vector<double> zbuf(static_cast<std::size_t>(h) * w,
                             -std::numeric_limits<double>::infinity());

    // Identity-dependent tint in [-0.2, 0.2] per channel.
    double tint[3] = {0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < identity.size(); ++j)
        tint[j % 3] += 0.08 * identity[j];
    for (double& t : tint) t = std::clamp(t, -0.2, 0.2);

    const Rot rot = rotation(camera);
    const double light[3] = {0.3, -0.5, 0.8};
    const double lnorm = std::sqrt(light[0] * light[0] + light[1] * light[1] + light[2] * light[2]);

    for (std::size_t ti = 0; ti < model.triangles.size(); ++ti) {
        const auto& tr = model.triangles[ti];
        TriScreen ts{pv.x[static_cast<std::size_t>(tr[0])], pv.y[static_cast<std::size_t>(tr[0])],
                     pv.x[static_cast<std::size_t>(tr[1])], pv.y[static_cast<std::size_t>(tr[1])],
                     pv.x[static_cast<std::size_t>(tr[2])], pv.y[static_cast<std::size_t>(tr[2])],
                     pv.z[static_cast<std::size_t>(tr[0])], pv.z[static_cast<std::size_t>(tr[1])],
                     pv.z[static_cast<std::size_t>(tr[2])]};

        // Flat shading from the posed triangle normal.
        double e1[3], e2[3], n[3];
        for (int a = 0; a < 3; ++a) {
            e1[a] = shape.vertices[static_cast<std::size_t>(3 * tr[1] + a)] -
                    shape.vertices[static_cast<std::size_t>(3 * tr[0] + a)];
            e2[a] = shape.vertices[static_cast<std::size_t>(3 * tr[2] + a)] -
                    shape.vertices[static_cast<std::size_t>(3 * tr[0] + a)];
        }
        n[0] = e1[1] * e2[2] - e1[2] * e2[1];
        n[1] = e1[2] * e2[0] - e1[0] * e2[2];
        n[2] = e1[0] * e2[1] - e1[1] * e2[0];
        double rn[3];
        for (int a = 0; a < 3; ++a)
            rn[a] = rot.m[a][0] * n[0] + rot.m[a][1] * n[1] + rot.m[a][2] * n[2];
        const double nlen = std::sqrt(rn[0] * rn[0] + rn[1] * rn[1] + rn[2] * rn[2]);
        double shade = 0.45;
        if (nlen > 0.0) {
            if (rn[2] < 0.0)
                for (double& a : rn) a = -a;  // face the camera
            const double ndl = (rn[0] * light[0] + rn[1] * light[1] + rn[2] * light[2]) / (nlen * lnorm);
            shade = 0.45 + 0.55 * std::max(0.0, ndl);
        }

        float color[3];
        for (int a = 0; a < 3; ++a) {
            const double base =
                0.5 + 0.32 * std::sin(2.399963229728653 * (static_cast<double>(ti) + 1.0) *
                                      (a + 1.0));
            const double c = std::clamp((base + tint[a]) * shade, 0.0, 1.0);
            color[a] = static_cast<float>(2.0 * c - 1.0);
        }
        scan_triangle(ts, h, w, [&](int py, int px, double depth) {
            const std::size_t idx = static_cast<std::size_t>(py) * w + px;
            if (depth > zbuf[idx]) {
                zbuf[idx] = depth;
                frame.at(0, py, px) = color[0];
                frame.at(1, py, px) = color[1];
                frame.at(2, py, px) = color[2];
            }
        });
    }
    return frame;
}

}  // namespace headgan::raster
