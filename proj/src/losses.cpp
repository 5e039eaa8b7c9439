#include "headgan/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "headgan/errors.hpp"
#include "headgan/rng.hpp"

namespace headgan::loss {

RandomPerceptual::RandomPerceptual(std::uint64_t seed, int cin) {
    Rng rng(seed);
    int widths[4] = {8, 16, 32, 64};
    int prev = cin;
    for (int l = 0; l < 4; ++l) {
        const int cout = widths[l];
        Tensor w({cout, prev, 3, 3});
        const float stddev = std::sqrt(2.0f / static_cast<float>(prev * 9));
        for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal() * stddev;
        Tensor b({cout});
        b.fill(0.0f);
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
        prev = cout;
    }
}

std::vector<ad::Var> RandomPerceptual::features(const ad::Var& image) const {
    std::vector<ad::Var> out;
    ad::Var h = image;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        ad::Var w = ad::Var::constant(weights_[l]);
        ad::Var b = ad::Var::constant(biases_[l]);
        h = ad::leaky_relu(ad::conv2d(h, w, b, /*stride=*/2, /*pad=*/1), 0.2f);
        out.push_back(h);
    }
    return out;
}

ad::Var hinge_d(const ad::Var& real_scores, const ad::Var& fake_scores) {
    // mean(max(0, 1 - real)) + mean(max(0, 1 + fake))
    ad::Var real_term = ad::mean_all(ad::relu(ad::affine(real_scores, -1.0f, 1.0f)));
    ad::Var fake_term = ad::mean_all(ad::relu(ad::affine(fake_scores, 1.0f, 1.0f)));
    return real_term + fake_term;
}

ad::Var hinge_g(const ad::Var& fake_scores_d, const ad::Var& fake_scores_dm) {
    ad::Var a = ad::affine(ad::mean_all(fake_scores_d), -1.0f, 0.0f);
    ad::Var b = ad::affine(ad::mean_all(fake_scores_dm), -1.0f, 0.0f);
    return a + b;
}

ad::Var recon_l1(const ad::Var& generated, const ad::Var& target) {
    return ad::mean_all(ad::abs_act(generated - target));
}

ad::Var perceptual(const ad::Var& generated, const ad::Var& target,
                   const PerceptualExtractor& extractor) {
    std::vector<ad::Var> fa = extractor.features(generated);
    std::vector<ad::Var> fb = extractor.features(target);
    if (fa.size() != fb.size()) throw RunError("perceptual: mismatched feature pyramids");
    ad::Var total = ad::Var::scalar_const(0.0f);
    for (std::size_t l = 0; l < fa.size(); ++l) {
        total = total + ad::mean_all(ad::abs_act(fa[l] - fb[l]));
    }
    return total;
}

ad::Var feature_match(const std::vector<ad::Var>& real_features,
                      const std::vector<ad::Var>& fake_features) {
    if (real_features.size() != fake_features.size())
        throw RunError("feature_match: mismatched feature lists");
    ad::Var total = ad::Var::scalar_const(0.0f);
    for (std::size_t l = 0; l < real_features.size(); ++l) {
        total = total + ad::mean_all(ad::abs_act(fake_features[l] - real_features[l].detach()));
    }
    return total;
}

std::pair<ad::Var, ad::Var> warp_losses(const ad::Var& warped_reference, const ad::Var& target,
                                        const PerceptualExtractor& extractor) {
    ad::Var l1 = recon_l1(warped_reference, target);
    ad::Var vgg = perceptual(warped_reference, target, extractor);
    return {l1, vgg};
}

ad::Var temporal_loss(const std::array<ad::Var, 3>& pyramid_prev,
                      const std::array<ad::Var, 3>& pyramid_curr) {
    ad::Var total = ad::Var::scalar_const(0.0f);
    for (int l = 0; l < 3; ++l) {
        total = total + ad::mean_all(ad::abs_act(pyramid_prev[l] - pyramid_curr[l]));
    }
    return total;
}

ad::Var total_g(const GeneratorTerms& t, const LossWeights& w) {
    ad::Var rec = ad::affine(t.l1_g + t.l1_f, w.l1, 0.0f);
    ad::Var per = ad::affine(t.vgg_g + t.vgg_f, w.vgg, 0.0f);
    ad::Var fm = ad::affine(t.fm, w.fm, 0.0f);
    ad::Var tmp = ad::affine(t.temp, w.temp, 0.0f);
    return t.adv + rec + per + fm + tmp;
}

ad::Var total_d(const ad::Var& hinge_term) { return hinge_term; }
ad::Var total_dm(const ad::Var& hinge_term) { return hinge_term; }

}  // namespace headgan::loss
