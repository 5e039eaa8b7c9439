#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "headgan/autodiff.hpp"
#include "headgan/params.hpp"
#include "headgan/rng.hpp"

namespace headgan::nn {

/// Two named presets share one topology; the desk preset quarters the
/// channel widths and resolution, keeping every ratio of the full-size
/// architecture (encoder widths, pixel-shuffle transitions).
struct ArchPreset {
    std::string name;
    int resolution = 64;
    int w1 = 8, w2 = 32, w3 = 128;  // encoder widths at scales 1, 1/2, 1/4
    int head_hidden = 32;           // SPADE/AdaIN modulation head width
    int disc_base = 16;             // discriminator base width
    int mouth_size = 16;            // mouth crop side
    int k = 2;                      // past driving maps
    int audio_dim = 300;
};

ArchPreset desk_preset();
ArchPreset paper_preset();
ArchPreset preset_by_name(const std::string& name);  // ConfigError on unknown

struct ShapeTraceRow {
    int h = 0, w = 0, c = 0;
    bool operator==(const ShapeTraceRow&) const = default;
};
using ShapeTrace = std::vector<ShapeTraceRow>;
std::string trace_to_string(const ShapeTrace& t);

// ---- layers ----

struct Conv2d {
    ad::Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
           int pad, Rng& rng, float gain = 1.41421356f);
    ad::Var forward(const ad::Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

/// Conv whose weight is divided by a power-iteration estimate of its top
/// singular value. The u/v vectors are persisted buffers updated once per
/// recorded forward (frozen under NoGradGuard).
struct SpectralConv2d {
    ad::Var w, b;
    std::shared_ptr<Tensor> u, v;
    int stride = 1, pad = 0;

    SpectralConv2d() = default;
    SpectralConv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                   int stride, int pad, Rng& rng);
    void power_iterate();
    ad::Var forward(const ad::Var& x) const;
};

/// Normalize -> per-pixel modulation predicted from a spatial input ->
/// conv -> LeakyReLU; channel count preserved.
struct SpadeBlock {
    Conv2d head_shared, head_gamma, head_beta, conv;

    SpadeBlock() = default;
    SpadeBlock(ParamStore& ps, const std::string& name, int channels, int mod_channels,
               int hidden, Rng& rng);
    ad::Var forward(const ad::Var& x, const ad::Var& modulation) const;
};

/// Normalize -> per-channel modulation predicted from a vector -> conv ->
/// LeakyReLU; shape preserved.
struct AdainBlock {
    ad::Var gamma_w, gamma_b, beta_w, beta_b;
    Conv2d conv;

    AdainBlock() = default;
    AdainBlock(ParamStore& ps, const std::string& name, int channels, int vector_dim, Rng& rng);
    ad::Var forward(const ad::Var& x, const ad::Var& vec) const;
};

/// Shared encoder topology of both generator halves: 7x7 stride-1 then two
/// 3x3 stride-2 convs, each followed by instance norm + ReLU.
struct Encoder3 {
    Conv2d c1, c2, c3;

    Encoder3() = default;
    Encoder3(ParamStore& ps, const std::string& name, int cin, const ArchPreset& p, Rng& rng);
    std::array<ad::Var, 3> forward(const ad::Var& x) const;
};

ad::Var downsample_flow(const ad::Var& flow);  // bilinear half-size, values / 2

// ---- generator ----

struct GeneratorInput {
    ad::Var driving_maps;     // (3(k+1), H, W)
    ad::Var reference_image;  // (3, H, W)
    ad::Var reference_map;    // (3, H, W)
    ad::Var audio;            // (audio_dim)
};

struct GeneratorOutput {
    ad::Var frame;       // (3, H, W), tanh-bounded
    ad::Var flow;        // (2, H, W)
    ad::Var warped_h1, warped_h2, warped_h3;
    ad::Var warped_reference;  // (3, H, W)
};

class Generator {
public:
    Generator(const ArchPreset& preset, std::uint64_t seed);

    /// zero_flow replaces F's output with a zero field (ablation); traces,
    /// when given, receive one (H,W,C) row per architecture table row.
    GeneratorOutput forward(const GeneratorInput& input, bool zero_flow = false,
                            ShapeTrace* trace_flow = nullptr,
                            ShapeTrace* trace_render = nullptr);

    const ArchPreset& preset() const { return preset_; }
    ParamStore& params() { return params_; }

private:
    ArchPreset preset_;
    ParamStore params_;
    Encoder3 flow_enc_, render_enc_;
    SpadeBlock f_s1_, f_s2_, f_s3_, f_s4_;
    Conv2d f_out_;
    SpadeBlock r_s3_, r_s2_, r_s1_, r_sref_;
    AdainBlock r_a3_, r_a2_, r_a1_;
    Conv2d r_out_;
};

// ---- discriminators ----

struct DiscOutput {
    ad::Var score;                  // patch score map (1, h', w')
    std::vector<ad::Var> features;  // post-activation feature maps per layer
};

/// Patch discriminator: spectrally normalized 4x4 convs (stride 2), depth
/// adapted to the input size (capped at 4), LeakyReLU(0.2), 1-channel head.
class PatchDiscriminator {
public:
    PatchDiscriminator() = default;
    PatchDiscriminator(ParamStore& ps, const std::string& name, int cin, int base,
                       int input_size, Rng& rng);
    DiscOutput forward(const ad::Var& x) const;

private:
    std::vector<SpectralConv2d> convs_;
    SpectralConv2d head_;
};

/// D (face map + frame pair) and D_m (mouth crop + spatially replicated
/// audio) behind one parameter store, updated jointly.
class DiscriminatorPair {
public:
    DiscriminatorPair(const ArchPreset& preset, std::uint64_t seed);

    DiscOutput frame_disc(const ad::Var& face_map, const ad::Var& frame) const;
    DiscOutput mouth_disc(const ad::Var& audio, const ad::Var& mouth_crop) const;

    ParamStore& params() { return params_; }
    const ArchPreset& preset() const { return preset_; }

private:
    ArchPreset preset_;
    ParamStore params_;
    PatchDiscriminator d_, dm_;
};

}  // namespace headgan::nn
