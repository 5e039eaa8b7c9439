#pragma once

#include <cstdint>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan::metrics {

/// Image -> unit-norm embedding (identity-encoder role). Deterministic,
/// fixed dimension; real backbones can slot in behind this interface.
class EmbeddingExtractor {
public:
    virtual ~EmbeddingExtractor() = default;
    virtual std::vector<double> embed(const Tensor& image) const = 0;
    virtual int dim() const = 0;
};

/// Frozen seeded conv encoder: four stride-2 convs with LeakyReLU, global
/// average pooling, L2 normalization. The clip variant average-pools frame
/// features over time before normalizing.
class ConvEmbedder : public EmbeddingExtractor {
public:
    explicit ConvEmbedder(std::uint64_t seed = 13, int cin = 3, int dim = 32);
    std::vector<double> embed(const Tensor& image) const override;
    std::vector<double> embed_clip(const std::vector<Tensor>& frames) const;
    int dim() const override { return dim_; }

private:
    std::vector<double> pooled(const Tensor& image) const;
    std::vector<Tensor> weights_, biases_;
    int dim_ = 32;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Mean cosine similarity over corresponding real/fake pairs.
double csim(const std::vector<Tensor>& real_frames, const std::vector<Tensor>& fake_frames,
            const EmbeddingExtractor& extractor);

/// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)) between Gaussians fitted
/// to the two feature sets. Covariances get +1e-6 I; negative eigenvalues
/// from numerical noise are clipped before the square root.
double frechet_distance(const std::vector<std::vector<double>>& features_a,
                        const std::vector<std::vector<double>>& features_b);

/// Symmetric PSD square root via eigendecomposition (row-major n x n).
std::vector<double> matrix_sqrt_psd(const std::vector<double>& m, int n);

}  // namespace headgan::metrics
