#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "headgan/audio.hpp"
#include "headgan/losses.hpp"
#include "headgan/morphable.hpp"
#include "headgan/networks.hpp"
#include "headgan/params.hpp"
#include "headgan/rasterizer.hpp"
#include "headgan/rng.hpp"
#include "headgan/tensor.hpp"

namespace headgan::train {

struct TrainConfig {
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch_size = 4;
    int steps = 500;
    int k = 2;
    std::uint64_t seed = 1;
    std::string preset = "desk64";
    double lambda_l1 = 50.0;
    double lambda_vgg = 10.0;
    double lambda_fm = 10.0;
    double lambda_temp = 30.0;
    int checkpoint_every = 250;
    int audio_window = 4;  // L: the feature window spans 2L audio parts
    std::string audio_extractor = "toy";

    loss::LossWeights weights() const;
    void validate() const;  // ConfigError on out-of-range values

    /// Applies `key = value` lines over the defaults; unknown keys raise
    /// ConfigError naming the key.
    static TrainConfig from_file(const std::string& path);
    static TrainConfig from_text(const std::string& text, const std::string& origin);

    /// All keys with their current values, in documented order.
    std::string to_text() const;
};

/// A sequence with everything the sampler needs precomputed once: face
/// maps, audio features, and mouth boxes for every frame.
struct SequenceData {
    morph::SyntheticSequence seq;
    std::vector<Tensor> maps;         // (3,H,W) per frame
    std::vector<Tensor> audio_feats;  // (audio_dim) per frame
    std::vector<raster::MouthBox> mouths;
};

/// Precomputes maps/features/mouth boxes for one raw sequence.
SequenceData make_sequence_data(const morph::MorphableModel& model, morph::SyntheticSequence seq,
                                int audio_window, const audio::FeatureExtractor& extractor,
                                int mouth_size);

class Dataset {
public:
    /// Reads manifest.txt, model.hga and seq_NNNN.hga from `dir` and
    /// precomputes per-frame conditioning inputs.
    static Dataset load(const std::string& dir, int audio_window,
                        const audio::FeatureExtractor& extractor, int mouth_size = 16);

    static Dataset from_parts(morph::MorphableModel model, std::vector<SequenceData> seqs);

    const morph::MorphableModel& model() const { return model_; }
    const std::vector<SequenceData>& sequences() const { return seqs_; }
    int resolution() const { return resolution_; }

private:
    morph::MorphableModel model_;
    std::vector<SequenceData> seqs_;
    int resolution_ = 0;
};

/// One self-reenactment sample: reference + the consecutive driving pair
/// (t-1, t) with ground-truth frames, mouth boxes and audio features.
struct TrainSample {
    int seq_index = 0;
    int t = 0;    // >= 1
    int ref = 0;  // reference frame index within the same sequence
    Tensor reference_frame, reference_map;
    Tensor driving_prev, driving_curr;  // (3(k+1), H, W), oldest channels first
    Tensor target_prev, target_curr;    // (3, H, W)
    raster::MouthBox mouth_prev, mouth_curr;
    Tensor audio_prev, audio_curr;  // (audio_dim)
};

/// Driving stack for frame t: maps at indices t-k .. t clamped to >= 0
/// (earliest map replicated at the clip start), concatenated channelwise.
Tensor driving_stack(const SequenceData& s, int t, int k);

/// Uniform sequence / t / reference sampling over usable sequences
/// (length >= 2); shorter sequences are skipped with a warning (once).
std::vector<TrainSample> sample_batch(const Dataset& data, const TrainConfig& config, Rng& rng);

struct Models {
    nn::Generator generator;
    nn::DiscriminatorPair discriminators;
    loss::RandomPerceptual perceptual;

    Models(const nn::ArchPreset& preset, std::uint64_t seed);
};

struct StepRecord {
    std::vector<std::pair<std::string, double>> terms;
    double get(const std::string& name) const;  // RunError if missing
};

/// One D + D_m update on detached fakes, then one G update through the
/// full objective; both generator passes (t-1, t) feed the temporal term.
StepRecord train_step(Models& models, const std::vector<TrainSample>& batch, nn::Adam& opt_g,
                      nn::Adam& opt_d, const loss::LossWeights& weights);

// ---- checkpointing ----

void save_checkpoint(const std::string& path, Models& models, const nn::Adam& opt_g,
                     const nn::Adam& opt_d, int step, const Rng& sampler,
                     const TrainConfig& config);

struct CheckpointInfo {
    std::string preset;
    std::uint64_t seed = 0;
    int step = 0;
    int k = 2;
    int audio_window = 4;
    std::string audio_extractor = "toy";
};
/// Reads the sidecar manifest ("<path>.manifest") without touching arrays.
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Loads parameters (and optimizer/sampler state when given) into models
/// built with the matching preset; returns the stored step counter.
int load_checkpoint(const std::string& path, Models& models, nn::Adam* opt_g, nn::Adam* opt_d,
                    Rng* sampler);

struct TrainResult {
    std::string final_checkpoint;
    std::string loss_log;
    int steps_done = 0;
};

/// Full loop: sample, step, log ("step\tname\tvalue" lines), checkpoint
/// every checkpoint_every steps and at the end. With `resume_path` the run
/// continues the stored step counter and sampler state.
TrainResult train(const TrainConfig& config, const Dataset& data, const std::string& out_dir,
                  const std::string& resume_path = "");

}  // namespace headgan::train
