// Audio windowing and the deterministic stand-in feature extractor:
// window index arithmetic (including edge clamping), feature dimensions,
// locality, hand-computable low-level coordinates, and extractor registry.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "headgan/audio.hpp"
#include "headgan/errors.hpp"

namespace audio = headgan::audio;
using audio::AudioPart;

namespace {

AudioPart sine_part(double amp, double freq, int n = 640, int sr = 16000, double phase = 0.0) {
    AudioPart p;
    p.sample_rate = sr;
    p.samples.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        p.samples[static_cast<std::size_t>(i)] =
            static_cast<float>(amp * std::sin(2.0 * 3.141592653589793 * freq * i / sr + phase));
    return p;
}

AudioPart constant_part(float value, int n = 640) {
    AudioPart p;
    p.samples.assign(static_cast<std::size_t>(n), value);
    return p;
}

std::vector<AudioPart> sine_track(int count) {
    std::vector<AudioPart> parts;
    for (int t = 0; t < count; ++t) parts.push_back(sine_part(0.5, 150.0 + 20.0 * t));
    return parts;
}

}  // namespace

TEST_CASE("window indices run t-L..t+L-1 clamped to the track") {
    // Interior: frame 10 of 20 with L=4 listens to parts 6..13.
    CHECK(audio::window_indices(10, 20, 4) == std::vector<int>{6, 7, 8, 9, 10, 11, 12, 13});

    // Leading edge: negative indices clamp to part 0.
    CHECK(audio::window_indices(0, 10, 4) == std::vector<int>{0, 0, 0, 0, 0, 1, 2, 3});
    CHECK(audio::window_indices(1, 10, 2) == std::vector<int>{0, 0, 1, 2});

    // Trailing edge: indices past the end clamp to T-1.
    CHECK(audio::window_indices(9, 10, 4) == std::vector<int>{5, 6, 7, 8, 9, 9, 9, 9});

    // Window length is always exactly 2L, even for a single-part track.
    CHECK(audio::window_indices(0, 1, 4) == std::vector<int>{0, 0, 0, 0, 0, 0, 0, 0});
    for (int l = 1; l <= 6; ++l)
        CHECK(audio::window_indices(3, 7, l).size() == static_cast<std::size_t>(2 * l));

    CHECK_THROWS_AS(audio::window_indices(0, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(audio::window_indices(0, 0, 2), std::invalid_argument);
}

TEST_CASE("feature dimension is 84 + 2L*27") {
    const audio::ToyExtractor ex(7);
    const std::vector<AudioPart> parts = sine_track(12);
    const audio::AudioFeature f4 = audio::extract(parts, 6, 4, ex);
    CHECK(f4.low_level.size() == 84);
    CHECK(f4.logits.size() == 8 * 27);
    CHECK(f4.combined.size() == 300);
    CHECK(f4.tensor().numel() == 300);
    CHECK(f4.tensor().ndim() == 1);

    const audio::AudioFeature f1 = audio::extract(parts, 6, 1, ex);
    CHECK(f1.combined.size() == 84 + 2 * 27);

    // combined is low_level followed by the window's logits.
    for (std::size_t i = 0; i < f4.low_level.size(); ++i)
        CHECK(f4.combined[i] == f4.low_level[i]);
    for (std::size_t i = 0; i < f4.logits.size(); ++i)
        CHECK(f4.combined[84 + i] == f4.logits[i]);
}

TEST_CASE("logit blocks line up with the window parts") {
    const audio::ToyExtractor ex(7);
    const std::vector<AudioPart> parts = sine_track(10);
    const int t = 5, l = 2;
    const audio::AudioFeature feat = audio::extract(parts, t, l, ex);
    const std::vector<int> idx = audio::window_indices(t, 10, l);
    for (std::size_t p = 0; p < idx.size(); ++p) {
        const std::vector<float> lg = ex.logits(parts[static_cast<std::size_t>(idx[p])]);
        for (int o = 0; o < 27; ++o)
            CHECK(feat.logits[p * 27 + static_cast<std::size_t>(o)] == lg[static_cast<std::size_t>(o)]);
    }
}

TEST_CASE("features are local: parts outside the window cannot matter") {
    const audio::ToyExtractor ex(7);
    std::vector<AudioPart> parts = sine_track(12);
    const audio::AudioFeature before = audio::extract(parts, 8, 4, ex);

    // Window of t=8 at L=4 is parts 4..11; clobbering part 0 is inaudible.
    parts[0] = constant_part(0.9f);
    const audio::AudioFeature far_changed = audio::extract(parts, 8, 4, ex);
    CHECK(far_changed.combined == before.combined);

    // Clobbering part 5 (inside the window) must change the feature.
    parts[5] = constant_part(0.9f);
    const audio::AudioFeature near_changed = audio::extract(parts, 8, 4, ex);
    CHECK(near_changed.combined != before.combined);
}

TEST_CASE("low-level coordinates on a constant window are hand-computable") {
    const audio::ToyExtractor ex(7);
    std::vector<AudioPart> parts(6, constant_part(0.5f));
    const audio::AudioFeature feat = audio::extract(parts, 3, 2, ex);

    // Entries 0..11: short-time energy (mean square) = 0.25 everywhere.
    for (int s = 0; s < 12; ++s)
        CHECK(feat.low_level[static_cast<std::size_t>(s)] == doctest::Approx(0.25).epsilon(1e-6));
    // Entries 12..23: zero-crossing rate of a constant signal is 0.
    for (int s = 12; s < 24; ++s) CHECK(feat.low_level[static_cast<std::size_t>(s)] == 0.0f);
    // Entries 24..35: spectral centroid of a DC signal is 0.
    for (int s = 24; s < 36; ++s)
        CHECK(std::abs(feat.low_level[static_cast<std::size_t>(s)]) <= 1e-6f);
    // Entries 36..83: triangular filters start above DC, so the filterbank
    // energies of a constant signal are (numerically) zero.
    for (int s = 36; s < 84; ++s)
        CHECK(std::abs(feat.low_level[static_cast<std::size_t>(s)]) <= 1e-6f);
}

TEST_CASE("energy scales with amplitude; alternating signal has unit ZCR") {
    const audio::ToyExtractor ex(7);
    std::vector<AudioPart> quiet(8, sine_part(0.2, 300.0));
    std::vector<AudioPart> loud(8, sine_part(0.8, 300.0));
    const audio::AudioFeature fq = audio::extract(quiet, 4, 4, ex);
    const audio::AudioFeature fl = audio::extract(loud, 4, 4, ex);
    for (int s = 0; s < 12; ++s) {
        CHECK(fl.low_level[static_cast<std::size_t>(s)] > fq.low_level[static_cast<std::size_t>(s)]);
        // Mean-square energy scales with amplitude^2 = 16x.
        CHECK(fl.low_level[static_cast<std::size_t>(s)] ==
              doctest::Approx(16.0 * fq.low_level[static_cast<std::size_t>(s)]).epsilon(1e-4));
    }

    AudioPart alt;
    alt.samples.resize(640);
    for (int i = 0; i < 640; ++i) alt.samples[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 1.0f : -1.0f;
    std::vector<AudioPart> alts(4, alt);
    const audio::AudioFeature fa = audio::extract(alts, 2, 2, ex);
    for (int s = 12; s < 24; ++s) CHECK(fa.low_level[static_cast<std::size_t>(s)] == 1.0f);
}

TEST_CASE("logits are a softmax: positive, summing to one, seed-deterministic") {
    const audio::ToyExtractor a(7), b(7), c(8);
    const AudioPart part = sine_part(0.6, 440.0);
    const std::vector<float> la = a.logits(part);
    const std::vector<float> lb = b.logits(part);
    const std::vector<float> lc = c.logits(part);
    REQUIRE(la.size() == 27);
    double sum = 0.0;
    for (float v : la) {
        CHECK(v > 0.0f);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(la == lb);
    CHECK(la != lc);
}

TEST_CASE("extractor registry: toy exists, real backends are reserved") {
    auto toy = audio::make_extractor("toy", 7);
    REQUIRE(toy != nullptr);
    CHECK(toy->low_level_dim() == 84);
    CHECK(toy->logit_dim() == 27);

    CHECK_THROWS_AS(audio::make_extractor("deepspeech"), headgan::ConfigError);
    CHECK_THROWS_AS(audio::make_extractor("pyaudio"), headgan::ConfigError);
    CHECK_THROWS_AS(audio::make_extractor("mfcc"), headgan::ConfigError);
}
