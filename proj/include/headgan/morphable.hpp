#pragma once

#include <array>
#include <vector>

#include "headgan/container.hpp"
#include "headgan/tensor.hpp"

namespace headgan::morph {

/// Coefficients of the linear face model: s = mean + U_id * identity +
/// U_exp * expression.
struct ShapeParams {
    std::vector<double> identity;
    std::vector<double> expression;
};

/// Orthographic camera: Euler rotation (rz * ry * rx), in-plane pixel
/// translation, pixels-per-model-unit scale.
struct CameraParams {
    double rx = 0.0, ry = 0.0, rz = 0.0;
    double tx = 0.0, ty = 0.0;
    double scale = 1.0;
};

struct FaceShape {
    std::vector<double> vertices;  // x1,y1,z1,...,xN,yN,zN
    int n_vertices() const { return static_cast<int>(vertices.size() / 3); }
};

struct MorphableModel {
    Tensor mean_shape;        // (3N)
    Tensor identity_basis;    // (3N, n_id), orthonormal columns
    Tensor expression_basis;  // (3N, n_exp), orthonormal columns
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> mouth_vertices;
    int n_vertices = 0;
    int n_id = 0;
    int n_exp = 0;

    void validate() const;  // throws DataError on broken invariants
};

struct SyntheticSequence {
    std::vector<double> identity;        // fixed per sequence
    std::vector<ShapeParams> params;     // T entries, identity replicated
    std::vector<CameraParams> cameras;   // T entries
    std::vector<std::vector<float>> audio_parts;  // T entries
    int sample_rate = 16000;
    std::vector<Tensor> frames;          // T images (3,H,W) in [-1,1]
    int resolution = 64;
    int reference_index = 0;

    int length() const { return static_cast<int>(params.size()); }
};

FaceShape synthesize_shape(const MorphableModel& model, const ShapeParams& params);
ShapeParams adapt_identity(const ShapeParams& source, const ShapeParams& driver);

MorphableModel make_synthetic_model(std::uint64_t seed, int n_vertices, int n_id, int n_exp);

/// Step bounds of the synthetic camera walk; the generated walk is asserted
/// against these in tests.
inline constexpr double kCameraRotStepBound = 0.08;   // radians per frame
inline constexpr double kCameraTransStepBound = 1.5;  // pixels per frame
inline constexpr double kExpressionClip = 3.0;

SyntheticSequence make_synthetic_sequence(const MorphableModel& model, std::uint64_t seed,
                                          int frames, int resolution = 64);

void save_model(const MorphableModel& model, ArrayFile& file);
MorphableModel load_model(const ArrayFile& file);
void save_sequence(const SyntheticSequence& seq, ArrayFile& file);
SyntheticSequence load_sequence(const ArrayFile& file);

}  // namespace headgan::morph
