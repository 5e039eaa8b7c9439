#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "headgan/autodiff.hpp"
#include "headgan/tensor.hpp"

namespace headgan::loss {

struct LossWeights {
    float l1 = 50.0f;
    float vgg = 10.0f;
    float fm = 10.0f;
    float temp = 30.0f;
};

/// Multi-layer feature extractor for the perceptual loss.
class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;
    virtual std::vector<ad::Var> features(const ad::Var& image) const = 0;
    virtual int layer_count() const = 0;
};

/// Frozen seeded 4-layer conv pyramid (stride 2, LeakyReLU). Random frozen
/// features are a standard stand-in for a pretrained backbone; a real one
/// can be dropped in behind the same interface.
class RandomPerceptual : public PerceptualExtractor {
public:
    explicit RandomPerceptual(std::uint64_t seed = 11, int cin = 3);
    std::vector<ad::Var> features(const ad::Var& image) const override;
    int layer_count() const override { return 4; }

private:
    std::vector<Tensor> weights_, biases_;
};

// Hinge objectives; all reductions are means over map elements.
ad::Var hinge_d(const ad::Var& real_scores, const ad::Var& fake_scores);
ad::Var hinge_g(const ad::Var& fake_scores_d, const ad::Var& fake_scores_dm);

ad::Var recon_l1(const ad::Var& generated, const ad::Var& target);
ad::Var perceptual(const ad::Var& generated, const ad::Var& target,
                   const PerceptualExtractor& extractor);
ad::Var feature_match(const std::vector<ad::Var>& real_features,
                      const std::vector<ad::Var>& fake_features);
std::pair<ad::Var, ad::Var> warp_losses(const ad::Var& warped_reference, const ad::Var& target,
                                        const PerceptualExtractor& extractor);
ad::Var temporal_loss(const std::array<ad::Var, 3>& pyramid_prev,
                      const std::array<ad::Var, 3>& pyramid_curr);

struct GeneratorTerms {
    ad::Var adv, l1_g, vgg_g, fm, l1_f, vgg_f, temp;
};
ad::Var total_g(const GeneratorTerms& terms, const LossWeights& weights);
ad::Var total_d(const ad::Var& hinge_term);
ad::Var total_dm(const ad::Var& hinge_term);

}  // namespace headgan::loss
