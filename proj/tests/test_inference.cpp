// Reenactment pipeline: source extraction, per-frame identity adaptation
// against a rasterizer oracle, camera passthrough, and generator-driven
// synthesis over a full driver sequence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "headgan/errors.hpp"
#include "headgan/inference.hpp"
#include "headgan/rasterizer.hpp"

using headgan::ConfigError;
using headgan::DataError;
using headgan::Tensor;
namespace infer = headgan::infer;
namespace morph = headgan::morph;
namespace nn = headgan::nn;
namespace raster = headgan::raster;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("source extraction copies the requested frame verbatim") {
    const morph::MorphableModel model = morph::make_synthetic_model(3, 96, 12, 8);
    const morph::SyntheticSequence seq = morph::make_synthetic_sequence(model, 40, 5, 32);

    const infer::SourceBundle s = infer::source_from_sequence(seq, 2);
    CHECK(bitwise_equal(s.reference_frame, seq.frames[2]));
    CHECK(s.params.identity == seq.params[2].identity);
    CHECK(s.params.expression == seq.params[2].expression);
    CHECK(s.camera.rx == seq.cameras[2].rx);
    CHECK(s.camera.ry == seq.cameras[2].ry);
    CHECK(s.camera.rz == seq.cameras[2].rz);
    CHECK(s.camera.tx == seq.cameras[2].tx);
    CHECK(s.camera.ty == seq.cameras[2].ty);
    CHECK(s.camera.scale == seq.cameras[2].scale);

    CHECK_THROWS_AS(infer::source_from_sequence(seq, -1), DataError);
    CHECK_THROWS_AS(infer::source_from_sequence(seq, 5), DataError);
}

TEST_CASE("preprocess adapts identity and renders with the driver camera") {
    const morph::MorphableModel model = morph::make_synthetic_model(3, 96, 12, 8);
    const morph::SyntheticSequence src_seq = morph::make_synthetic_sequence(model, 41, 4, 32);
    const morph::SyntheticSequence drv_seq = morph::make_synthetic_sequence(model, 42, 6, 32);
    const infer::SourceBundle source = infer::source_from_sequence(src_seq, 1);

    const infer::PreprocessResult pre = infer::preprocess(model, source, drv_seq, 32);
    REQUIRE(pre.adapted_maps.size() == 6);
    REQUIRE(pre.adapted_params.size() == 6);

    // Adapted parameters: source identity, driver expression — exactly.
    for (int t = 0; t < 6; ++t) {
        CHECK(pre.adapted_params[static_cast<std::size_t>(t)].identity ==
              source.params.identity);
        CHECK(pre.adapted_params[static_cast<std::size_t>(t)].expression ==
              drv_seq.params[static_cast<std::size_t>(t)].expression);
    }

    // Each adapted map equals a direct rasterization of the adapted shape
    // under the driver's camera for that frame — bitwise.
    for (int t = 0; t < 6; ++t) {
        const morph::ShapeParams adapted = morph::adapt_identity(
            source.params, drv_seq.params[static_cast<std::size_t>(t)]);
        const morph::FaceShape shape = morph::synthesize_shape(model, adapted);
        const Tensor oracle =
            raster::rasterize(shape, drv_seq.cameras[static_cast<std::size_t>(t)], model, 32, 32)
                .face_map;
        CHECK(bitwise_equal(pre.adapted_maps[static_cast<std::size_t>(t)], oracle));
    }

    // The reference map renders the source's own parameters and camera.
    const Tensor ref_oracle =
        raster::rasterize(morph::synthesize_shape(model, source.params), source.camera, model, 32,
                          32)
            .face_map;
    CHECK(bitwise_equal(pre.reference_map, ref_oracle));

    // A different source identity yields different adapted maps than the
    // driver's own rendering of itself.
    const morph::FaceShape own = morph::synthesize_shape(model, drv_seq.params[0]);
    const Tensor own_map = raster::rasterize(own, drv_seq.cameras[0], model, 32, 32).face_map;
    CHECK(!bitwise_equal(pre.adapted_maps[0], own_map));
}

TEST_CASE("self-reenactment preprocessing reproduces the driver's own maps") {
    const morph::MorphableModel model = morph::make_synthetic_model(5, 96, 12, 8);
    const morph::SyntheticSequence seq = morph::make_synthetic_sequence(model, 43, 5, 32);
    const infer::SourceBundle source = infer::source_from_sequence(seq, seq.reference_index);

    // Within one sequence the identity is replicated, so adaptation is the
    // identity operation and every adapted map matches the driver frame map.
    const infer::PreprocessResult pre = infer::preprocess(model, source, seq, 32);
    for (int t = 0; t < 5; ++t) {
        const morph::FaceShape shape =
            morph::synthesize_shape(model, seq.params[static_cast<std::size_t>(t)]);
        const Tensor oracle =
            raster::rasterize(shape, seq.cameras[static_cast<std::size_t>(t)], model, 32, 32)
                .face_map;
        CHECK(bitwise_equal(pre.adapted_maps[static_cast<std::size_t>(t)], oracle));
    }
}

TEST_CASE("preprocess validates parameter dimensions and non-empty drivers") {
    const morph::MorphableModel model = morph::make_synthetic_model(3, 96, 12, 8);
    const morph::SyntheticSequence seq = morph::make_synthetic_sequence(model, 44, 3, 32);

    infer::SourceBundle bad = infer::source_from_sequence(seq, 0);
    bad.params.identity.resize(5);
    CHECK_THROWS_AS(infer::preprocess(model, bad, seq, 32), DataError);

    const infer::SourceBundle good = infer::source_from_sequence(seq, 0);
    const morph::SyntheticSequence empty;
    CHECK_THROWS_AS(infer::preprocess(model, good, empty, 32), DataError);

    morph::SyntheticSequence mangled = seq;
    mangled.params[1].expression.resize(3);
    CHECK_THROWS_AS(infer::preprocess(model, good, mangled, 32), DataError);
}

TEST_CASE("reenactment emits one in-range frame per driver frame") {
    const morph::MorphableModel model = morph::make_synthetic_model(6, 96, 12, 8);
    const morph::SyntheticSequence src_seq = morph::make_synthetic_sequence(model, 45, 3, 64);
    const morph::SyntheticSequence drv_seq = morph::make_synthetic_sequence(model, 46, 4, 64);
    const infer::SourceBundle source = infer::source_from_sequence(src_seq, 0);

    nn::ArchPreset preset = nn::desk_preset();
    nn::Generator gen(preset, 12);
    headgan::audio::ToyExtractor ex(7);

    const std::vector<Tensor> frames = infer::reenact(gen, model, source, drv_seq, ex, 4);
    REQUIRE(frames.size() == 4);
    for (const Tensor& f : frames) {
        REQUIRE(f.ndim() == 3);
        CHECK(f.dim(0) == 3);
        CHECK(f.dim(1) == 64);
        CHECK(f.dim(2) == 64);
        for (std::int64_t i = 0; i < f.numel(); ++i) {
            CHECK(f[i] >= -1.0f);
            CHECK(f[i] <= 1.0f);
        }
    }

    // Deterministic: a second run reproduces every frame bitwise.
    const std::vector<Tensor> again = infer::reenact(gen, model, source, drv_seq, ex, 4);
    for (std::size_t t = 0; t < frames.size(); ++t) CHECK(bitwise_equal(frames[t], again[t]));

    // A single-frame driver still works (the map window replicates frame 0).
    const morph::SyntheticSequence one = [&] {
        morph::SyntheticSequence s = morph::make_synthetic_sequence(model, 47, 3, 64);
        s.params.resize(1);
        s.cameras.resize(1);
        s.audio_parts.resize(1);
        s.frames.resize(1);
        s.reference_index = 0;
        return s;
    }();
    CHECK(infer::reenact(gen, model, source, one, ex, 4).size() == 1);
}

TEST_CASE("reenactment validates frame shape and audio dimensions") {
    const morph::MorphableModel model = morph::make_synthetic_model(6, 96, 12, 8);
    const morph::SyntheticSequence drv = morph::make_synthetic_sequence(model, 48, 3, 64);
    nn::ArchPreset preset = nn::desk_preset();
    nn::Generator gen(preset, 12);
    headgan::audio::ToyExtractor ex(7);

    infer::SourceBundle source = infer::source_from_sequence(drv, 0);
    // Audio window 1 yields 138 features; the generator expects 300.
    CHECK_THROWS_AS(infer::reenact(gen, model, source, drv, ex, 1), ConfigError);

    source.reference_frame = Tensor::zeros({3, 32, 32});
    CHECK_THROWS_AS(infer::reenact(gen, model, source, drv, ex, 4), DataError);
}
