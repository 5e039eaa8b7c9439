#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan::audio {

struct AudioPart {
    std::vector<float> samples;
    int sample_rate = 16000;
};

struct AudioFeature {
    std::vector<float> low_level;  // fixed 84 entries
    std::vector<float> logits;     // 2L * 27 entries, window order
    std::vector<float> combined;   // concat(low_level, logits)

    Tensor tensor() const { return Tensor({static_cast<int>(combined.size())}, combined); }
};

/// Pluggable pair of extractors: one maps a whole window of parts to an
/// 84-dim low-level vector, the other maps a single part to 27 logits.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<float> low_level(const std::vector<AudioPart>& window) const = 0;
    virtual std::vector<float> logits(const AudioPart& part) const = 0;
    int low_level_dim() const { return 84; }
    int logit_dim() const { return 27; }
};

/// Dependency-free deterministic stand-in: short-time energy, zero-crossing
/// rate and spectral centroid over 12 sub-windows plus 16 triangular
/// filterbank energies over 3 sub-windows (84 total); logits are a seeded
/// random linear map over the part's log-filterbank, softmax-normalized.
class ToyExtractor : public FeatureExtractor {
public:
    explicit ToyExtractor(std::uint64_t seed = 7);
    std::vector<float> low_level(const std::vector<AudioPart>& window) const override;
    std::vector<float> logits(const AudioPart& part) const override;

private:
    std::vector<float> logit_weights_;  // 27 x 16
    std::vector<float> logit_bias_;     // 27
};

/// Window of exactly 2L parts around frame t: indices t-L .. t+L-1, each
/// clamped to [0, T-1].
std::vector<int> window_indices(int t, int total_parts, int l);
std::vector<AudioPart> window(const std::vector<AudioPart>& parts, int t, int l);

AudioFeature extract(const std::vector<AudioPart>& parts, int t, int l,
                     const FeatureExtractor& extractor);

/// "toy" is implemented; "deepspeech" and "pyaudio" are reserved names for
/// real backends and rejected with a config error.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed = 7);

}  // namespace headgan::audio
