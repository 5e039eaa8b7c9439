#include "headgan/inference.hpp"

#include <algorithm>

#include "headgan/errors.hpp"
#include "headgan/rasterizer.hpp"

namespace headgan::infer {

SourceBundle source_from_sequence(const morph::SyntheticSequence& seq, int frame_index) {
    if (frame_index < 0 || frame_index >= seq.length())
        throw DataError("source frame index " + std::to_string(frame_index) +
                        " out of range for sequence of length " + std::to_string(seq.length()));
    SourceBundle s;
    s.params = seq.params[static_cast<std::size_t>(frame_index)];
    s.camera = seq.cameras[static_cast<std::size_t>(frame_index)];
    s.reference_frame = seq.frames[static_cast<std::size_t>(frame_index)];
    return s;
}

PreprocessResult preprocess(const morph::MorphableModel& model, const SourceBundle& source,
                            const morph::SyntheticSequence& driver, int resolution) {
    if (static_cast<int>(source.params.identity.size()) != model.n_id)
        throw DataError("source identity has " + std::to_string(source.params.identity.size()) +
                        " coefficients but the model expects " + std::to_string(model.n_id));
    if (driver.length() == 0) throw DataError("driver sequence is empty");
    for (const morph::ShapeParams& p : driver.params) {
        if (static_cast<int>(p.identity.size()) != model.n_id ||
            static_cast<int>(p.expression.size()) != model.n_exp)
            throw DataError("driver parameters do not match the model's basis sizes");
    }

    PreprocessResult out;
    morph::FaceShape ref_shape = morph::synthesize_shape(model, source.params);
    out.reference_map =
        raster::rasterize(ref_shape, source.camera, model, resolution, resolution).face_map;
    out.adapted_maps.reserve(static_cast<std::size_t>(driver.length()));
    out.adapted_params.reserve(static_cast<std::size_t>(driver.length()));
    for (int t = 0; t < driver.length(); ++t) {
        morph::ShapeParams adapted =
            morph::adapt_identity(source.params, driver.params[static_cast<std::size_t>(t)]);
        morph::FaceShape shape = morph::synthesize_shape(model, adapted);
        const morph::CameraParams& cam = driver.cameras[static_cast<std::size_t>(t)];
        out.adapted_maps.push_back(
            raster::rasterize(shape, cam, model, resolution, resolution).face_map);
        out.adapted_params.push_back(std::move(adapted));
    }
    return out;
}

std::vector<Tensor> reenact(nn::Generator& generator, const morph::MorphableModel& model,
                            const SourceBundle& source, const morph::SyntheticSequence& driver,
                            const audio::FeatureExtractor& extractor, int audio_window) {
    const nn::ArchPreset& preset = generator.preset();
    const int res = preset.resolution;
    if (source.reference_frame.ndim() != 3 || source.reference_frame.dim(0) != 3 ||
        source.reference_frame.dim(1) != res || source.reference_frame.dim(2) != res)
        throw DataError("reference frame shape " + source.reference_frame.shape_str() +
                        " does not match the generator resolution " + std::to_string(res));
    const int expected_audio = 84 + 2 * audio_window * 27;
    if (expected_audio != preset.audio_dim)
        throw ConfigError("audio window " + std::to_string(audio_window) + " yields dimension " +
                          std::to_string(expected_audio) + " but the generator expects " +
                          std::to_string(preset.audio_dim));

    PreprocessResult pre = preprocess(model, source, driver, res);

    std::vector<audio::AudioPart> parts(static_cast<std::size_t>(driver.length()));
    for (int t = 0; t < driver.length(); ++t)
        parts[static_cast<std::size_t>(t)] = {driver.audio_parts[static_cast<std::size_t>(t)],
                                              driver.sample_rate};

    ad::NoGradGuard guard;
    ad::Var ref_frame = ad::Var::constant(source.reference_frame);
    ad::Var ref_map = ad::Var::constant(pre.reference_map);

    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(driver.length()));
    for (int t = 0; t < driver.length(); ++t) {
        Tensor stack({3 * (preset.k + 1), res, res});
        for (int i = 0; i <= preset.k; ++i) {
            const int idx = std::max(0, t - preset.k + i);
            const Tensor& m = pre.adapted_maps[static_cast<std::size_t>(idx)];
            std::copy(m.data(), m.data() + m.numel(),
                      stack.data() + static_cast<std::int64_t>(i) * m.numel());
        }
        audio::AudioFeature feat = audio::extract(parts, t, audio_window, extractor);
        nn::GeneratorInput in{ad::Var::constant(std::move(stack)), ref_frame, ref_map,
                              ad::Var::constant(feat.tensor())};
        nn::GeneratorOutput out = generator.forward(in);
        frames.push_back(out.frame.value());
    }
    return frames;
}

}  // namespace headgan::infer
