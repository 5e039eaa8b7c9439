#include "headgan/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "headgan/autodiff.hpp"
#include "headgan/errors.hpp"
#include "headgan/rng.hpp"

namespace headgan::metrics {

ConvEmbedder::ConvEmbedder(std::uint64_t seed, int cin, int dim) : dim_(dim) {
    Rng rng(seed);
    int widths[4] = {8, 16, 32, dim};
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

std::vector<double> ConvEmbedder::pooled(const Tensor& image) const {
    if (image.ndim() != 3) throw DataError("embedder expects a (C,H,W) image");
    ad::NoGradGuard guard;
    ad::Var h = ad::Var::constant(image);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        h = ad::leaky_relu(ad::conv2d(h, ad::Var::constant(weights_[l]),
                                      ad::Var::constant(biases_[l]), /*stride=*/2, /*pad=*/1),
                           0.2f);
    }
    const Tensor& f = h.value();
    const int c = f.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(f.dim(1)) * f.dim(2);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const float* p = f.data() + static_cast<std::int64_t>(ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
        out[static_cast<std::size_t>(ch)] = acc / static_cast<double>(plane);
    }
    return out;
}

namespace {

void l2_normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        if (!v.empty()) v[0] = 1.0;  // deterministic fallback for a zero feature
        return;
    }
    for (double& x : v) x /= norm;
}

}  // namespace

std::vector<double> ConvEmbedder::embed(const Tensor& image) const {
    std::vector<double> v = pooled(image);
    l2_normalize(v);
    return v;
}

std::vector<double> ConvEmbedder::embed_clip(const std::vector<Tensor>& frames) const {
    if (frames.empty()) throw DataError("embed_clip: empty clip");
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    for (const Tensor& f : frames) {
        std::vector<double> v = pooled(f);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
    for (double& x : acc) x /= static_cast<double>(frames.size());
    l2_normalize(acc);
    return acc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw DataError("cosine: mismatched vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    if (denom < 1e-24) return 0.0;
    return dot / denom;
}

double csim(const std::vector<Tensor>& real_frames, const std::vector<Tensor>& fake_frames,
            const EmbeddingExtractor& extractor) {
    if (real_frames.empty() || real_frames.size() != fake_frames.size())
        throw DataError("csim: inputs must be same-length non-empty lists");
    double acc = 0.0;
    for (std::size_t i = 0; i < real_frames.size(); ++i) {
        acc += cosine(extractor.embed(real_frames[i]), extractor.embed(fake_frames[i]));
    }
    return acc / static_cast<double>(real_frames.size());
}

namespace {

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) throw RunError("eigendecomposition failed");
    Eigen::VectorXd vals = solver.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) vals[i] = vals[i] > 0.0 ? std::sqrt(vals[i]) : 0.0;
    return solver.eigenvectors() * vals.asDiagonal() * solver.eigenvectors().transpose();
}

void fit_gaussian(const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& sigma) {
    const auto n = static_cast<Eigen::Index>(feats.size());
    const auto d = static_cast<Eigen::Index>(feats.front().size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            x(i, j) = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    if (n > 1)
        sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
    else
        sigma = Eigen::MatrixXd::Zero(d, d);
    sigma += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    if (!sigma.allFinite()) throw DataError("non-finite covariance");
}

}  // namespace

double frechet_distance(const std::vector<std::vector<double>>& features_a,
                        const std::vector<std::vector<double>>& features_b) {
    if (features_a.empty() || features_b.empty())
        throw DataError("frechet_distance: empty feature set");
    const std::size_t d = features_a.front().size();
    for (const auto& f : features_a)
        if (f.size() != d) throw DataError("frechet_distance: ragged feature set");
    for (const auto& f : features_b)
        if (f.size() != d) throw DataError("frechet_distance: ragged feature set");

    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    fit_gaussian(features_a, mu1, s1);
    fit_gaussian(features_b, mu2, s2);

    // Tr sqrt(S1 S2) computed via the symmetric form sqrt(A S2 A), A = sqrt(S1).
    Eigen::MatrixXd a = sqrt_psd(s1);
    Eigen::MatrixXd cross = sqrt_psd(a * s2 * a);
    const double dist = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross.trace();
    if (!std::isfinite(dist)) throw RunError("frechet_distance: non-finite result");
    return std::max(0.0, dist);
}

std::vector<double> matrix_sqrt_psd(const std::vector<double>& m, int n) {
    if (static_cast<std::size_t>(n) * static_cast<std::size_t>(n) != m.size())
        throw DataError("matrix_sqrt_psd: size mismatch");
    Eigen::MatrixXd mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mat(i, j) = m[static_cast<std::size_t>(i) * n + j];
    Eigen::MatrixXd root = sqrt_psd(mat);
    std::vector<double> out(m.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = root(i, j);
    return out;
}

}  // namespace headgan::metrics
