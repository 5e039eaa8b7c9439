#pragma once

#include <vector>

#include "headgan/morphable.hpp"
#include "headgan/tensor.hpp"

namespace headgan::raster {

/// Per-pixel index of the visible triangle, -1 for background.
struct VisibilityMask {
    int h = 0, w = 0;
    std::vector<int> grid;

    int at(int y, int x) const { return grid[static_cast<std::size_t>(y) * w + x]; }
    int& at(int y, int x) { return grid[static_cast<std::size_t>(y) * w + x]; }
};

struct ProjectedVertices {
    std::vector<double> x, y;  // pixel coordinates
    std::vector<double> z;     // depth; larger = nearer to the camera
};

struct RasterResult {
    VisibilityMask mask;
    Tensor face_map;  // (3,H,W); background exactly 0, face colors in (0,1]
};

struct MouthBox {
    int x0 = 0, y0 = 0, size = 0;
};

/// Pixel mapping: x_pix = W/2 + scale*px + tx, y_pix = H/2 - scale*py + ty
/// (model y points up, image y points down). Depth is the rotated z, so the
/// camera looks along -z and larger depth wins the z-buffer.
ProjectedVertices project(const morph::FaceShape& shape, const morph::CameraParams& camera,
                          int h, int w);

RasterResult rasterize(const morph::FaceShape& shape, const morph::CameraParams& camera,
                       const morph::MorphableModel& model, int h, int w);

MouthBox mouth_box(const morph::FaceShape& shape, const morph::CameraParams& camera,
                   const morph::MorphableModel& model, int h, int w, int size);

/// Shaded flat-color render used as synthetic ground-truth footage. The
/// identity vector tints per-triangle base colors; output is (3,H,W) in
/// [-1,1] with background -1.
Tensor render_frame(const morph::FaceShape& shape, const morph::CameraParams& camera,
                    const morph::MorphableModel& model, const std::vector<double>& identity,
                    int h, int w);

/// Axis-aligned bounding box of the mean shape expanded by 5% per axis;
/// source of the pose-independent face-map colors.
struct ColorBox {
    double lo[3], hi[3];
};
ColorBox color_box(const morph::MorphableModel& model);

/// The pose-independent color of every triangle — exactly the values
/// rasterize writes into face maps, so colors identify triangles bitwise.
std::vector<std::array<float, 3>> triangle_colors(const morph::MorphableModel& model);

}  // namespace headgan::raster
