#pragma once

#include <string>
#include <vector>

#include "headgan/audio.hpp"
#include "headgan/morphable.hpp"
#include "headgan/networks.hpp"
#include "headgan/tensor.hpp"

namespace headgan::infer {

/// The source side of a reenactment: one appearance frame plus the shape
/// and camera parameters it was rendered with (parameter bundles stand in
/// for an RGB model fitter, which can slot in behind the same interface).
struct SourceBundle {
    morph::ShapeParams params;
    morph::CameraParams camera;
    Tensor reference_frame;  // (3, H, W) in [-1, 1]
};

SourceBundle source_from_sequence(const morph::SyntheticSequence& seq, int frame_index);

struct PreprocessResult {
    Tensor reference_map;                            // source rendered with (p_ref, c_ref)
    std::vector<Tensor> adapted_maps;                // one per driver frame
    std::vector<morph::ShapeParams> adapted_params;  // source identity + driver expression
};

/// Per-frame identity adaptation: the source identity is combined with the
/// driver's expression and camera, then rasterized to a face map.
PreprocessResult preprocess(const morph::MorphableModel& model, const SourceBundle& source,
                            const morph::SyntheticSequence& driver, int resolution);

/// Sliding k+1 window over adapted maps (earliest map replicated at the
/// start), per-frame audio features, one generator pass per frame. Output
/// frames are in [-1, 1]; length equals the driver length.
std::vector<Tensor> reenact(nn::Generator& generator, const morph::MorphableModel& model,
                            const SourceBundle& source, const morph::SyntheticSequence& driver,
                            const audio::FeatureExtractor& extractor, int audio_window);

}  // namespace headgan::infer
