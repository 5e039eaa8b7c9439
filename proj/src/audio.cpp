#include "headgan/audio.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "headgan/errors.hpp"
#include "headgan/rng.hpp"

namespace headgan::audio {

namespace {

constexpr int kSubWindows = 12;    // energy / zcr / centroid grid
constexpr int kBankWindows = 3;    // filterbank grid
constexpr int kBankSize = 16;

// Power spectrum by direct DFT; window sizes here are a few hundred samples.
std::vector<double> power_spectrum(const float* x, int n) {
    const int bins = n / 2 + 1;
    std::vector<double> power(static_cast<std::size_t>(bins), 0.0);
    if (n <= 0) return power;
    for (int k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        const double w = -2.0 * 3.141592653589793 * k / n;
        for (int i = 0; i < n; ++i) {
            re += x[i] * std::cos(w * i);
            im += x[i] * std::sin(w * i);
        }
        power[static_cast<std::size_t>(k)] = re * re + im * im;
    }
    return power;
}

// 16 triangular filters with edges linearly spaced over [0, Nyquist].
std::vector<double> filterbank_energies(const float* x, int n) {
    std::vector<double> out(kBankSize, 0.0);
    if (n < 4) return out;
    const std::vector<double> power = power_spectrum(x, n);
    const int bins = static_cast<int>(power.size());
    const double edge_step = static_cast<double>(bins - 1) / (kBankSize + 1);
    for (int f = 0; f < kBankSize; ++f) {
        const double lo = edge_step * f;
        const double mid = edge_step * (f + 1);
        const double hi = edge_step * (f + 2);
        double acc = 0.0;
        for (int k = static_cast<int>(std::ceil(lo)); k <= static_cast<int>(std::floor(hi)) && k < bins; ++k) {
            double wgt = 0.0;
            if (k <= mid)
                wgt = (k - lo) / (mid - lo);
            else
                wgt = (hi - k) / (hi - mid);
            if (wgt > 0.0) acc += wgt * power[static_cast<std::size_t>(k)];
        }
        out[static_cast<std::size_t>(f)] = acc / n;
    }
    return out;
}

}  // namespace

ToyExtractor::ToyExtractor(std::uint64_t seed) {
    Rng rng(seed);
    logit_weights_.resize(27 * kBankSize);
    for (auto& w : logit_weights_) w = static_cast<float>(0.5 * rng.normal());
    logit_bias_.resize(27);
    for (auto& b : logit_bias_) b = static_cast<float>(0.1 * rng.normal());
}

std::vector<float> ToyExtractor::low_level(const std::vector<AudioPart>& win) const {
    std::vector<float> all;
    for (const auto& part : win) all.insert(all.end(), part.samples.begin(), part.samples.end());
    const int n = static_cast<int>(all.size());

    std::vector<float> out;
    out.reserve(84);
    // Sub-window [i0, i1) boundaries distribute the remainder evenly.
    auto bounds = [n](int idx, int count) {
        return std::pair<int, int>{static_cast<int>(static_cast<std::int64_t>(n) * idx / count),
                                   static_cast<int>(static_cast<std::int64_t>(n) * (idx + 1) / count)};
    };

    std::vector<float> zcr, centroid;
    for (int s = 0; s < kSubWindows; ++s) {
        const auto [i0, i1] = bounds(s, kSubWindows);
        const int len = i1 - i0;
        double energy = 0.0;
        int crossings = 0;
        for (int i = i0; i < i1; ++i) {
            energy += static_cast<double>(all[static_cast<std::size_t>(i)]) * all[static_cast<std::size_t>(i)];
            if (i > i0 && (all[static_cast<std::size_t>(i)] >= 0.0f) != (all[static_cast<std::size_t>(i - 1)] >= 0.0f))
                ++crossings;
        }
        out.push_back(len > 0 ? static_cast<float>(energy / len) : 0.0f);
        zcr.push_back(len > 1 ? static_cast<float>(crossings) / (len - 1) : 0.0f);

        double cent = 0.0;
        if (len >= 4) {
            const std::vector<double> power = power_spectrum(all.data() + i0, len);
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < power.size(); ++k) {
                num += static_cast<double>(k) * power[k];
                den += power[k];
            }
            if (den > 0.0) cent = num / (den * (power.size() - 1));
        }
        centroid.push_back(static_cast<float>(cent));
    }
    out.insert(out.end(), zcr.begin(), zcr.end());
    out.insert(out.end(), centroid.begin(), centroid.end());
    for (int s = 0; s < kBankWindows; ++s) {
        const auto [i0, i1] = bounds(s, kBankWindows);
        for (double e : filterbank_energies(all.data() + i0, i1 - i0))
            out.push_back(static_cast<float>(e));
    }
    return out;
}

std::vector<float> ToyExtractor::logits(const AudioPart& part) const {
    const std::vector<double> bank =
        filterbank_energies(part.samples.data(), static_cast<int>(part.samples.size()));
    std::vector<double> logfb(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) logfb[i] = std::log(1e-8 + bank[i]);

    std::vector<double> raw(27);
    for (int o = 0; o < 27; ++o) {
        double acc = logit_bias_[static_cast<std::size_t>(o)];
        for (int i = 0; i < kBankSize; ++i)
            acc += static_cast<double>(logit_weights_[static_cast<std::size_t>(o * kBankSize + i)]) * logfb[static_cast<std::size_t>(i)];
        raw[static_cast<std::size_t>(o)] = acc;
    }
    const double mx = *std::max_element(raw.begin(), raw.end());
    double denom = 0.0;
    for (double& r : raw) {
        r = std::exp(r - mx);
        denom += r;
    }
    std::vector<float> out(27);
    for (int o = 0; o < 27; ++o) out[static_cast<std::size_t>(o)] = static_cast<float>(raw[static_cast<std::size_t>(o)] / denom);
    return out;
}

std::vector<int> window_indices(int t, int total_parts, int l) {
    if (l < 1) throw std::invalid_argument("window: L must be >= 1");
    if (total_parts <= 0) throw std::invalid_argument("window: empty part list");
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(2 * l));
    for (int i = t - l; i <= t + l - 1; ++i) idx.push_back(std::clamp(i, 0, total_parts - 1));
    return idx;
}

std::vector<AudioPart> window(const std::vector<AudioPart>& parts, int t, int l) {
    std::vector<AudioPart> out;
    for (int i : window_indices(t, static_cast<int>(parts.size()), l))
        out.push_back(parts[static_cast<std::size_t>(i)]);
    return out;
}

AudioFeature extract(const std::vector<AudioPart>& parts, int t, int l,
                     const FeatureExtractor& extractor) {
    const std::vector<AudioPart> win = window(parts, t, l);
    AudioFeature feat;
    feat.low_level = extractor.low_level(win);
    if (static_cast<int>(feat.low_level.size()) != extractor.low_level_dim())
        throw RunError("audio extractor produced " + std::to_string(feat.low_level.size()) +
                       " low-level values, expected " + std::to_string(extractor.low_level_dim()));
    for (const auto& part : win) {
        const std::vector<float> lg = extractor.logits(part);
        if (static_cast<int>(lg.size()) != extractor.logit_dim())
            throw RunError("audio extractor produced " + std::to_string(lg.size()) +
                           " logits, expected " + std::to_string(extractor.logit_dim()));
        feat.logits.insert(feat.logits.end(), lg.begin(), lg.end());
    }
    feat.combined = feat.low_level;
    feat.combined.insert(feat.combined.end(), feat.logits.begin(), feat.logits.end());
    return feat;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed) {
    if (name == "toy") return std::make_unique<ToyExtractor>(seed);
    if (name == "deepspeech" || name == "pyaudio")
        throw ConfigError("audio extractor '" + name + "' is a reserved name without an implementation; use 'toy'");
    throw ConfigError("unknown audio extractor '" + name + "'");
}

}  // namespace headgan::audio
