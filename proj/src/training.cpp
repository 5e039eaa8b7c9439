#include "headgan/training.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "headgan/config.hpp"
#include "headgan/errors.hpp"

namespace fs = std::filesystem;

namespace headgan::train {

loss::LossWeights TrainConfig::weights() const {
    loss::LossWeights w;
    w.l1 = static_cast<float>(lambda_l1);
    w.vgg = static_cast<float>(lambda_vgg);
    w.fm = static_cast<float>(lambda_fm);
    w.temp = static_cast<float>(lambda_temp);
    return w;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(adam_beta1 > 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1 must be in (0, 1)");
    if (!(adam_beta2 > 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2 must be in (0, 1)");
    if (batch_size <= 0) throw ConfigError("batch_size must be > 0");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (lambda_l1 < 0 || lambda_vgg < 0 || lambda_fm < 0 || lambda_temp < 0)
        throw ConfigError("loss weights must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (audio_window < 1) throw ConfigError("audio_window must be >= 1");
    nn::preset_by_name(preset);  // throws on unknown preset
}

TrainConfig TrainConfig::from_text(const std::string& text, const std::string& origin) {
    KeyValueFile kv = KeyValueFile::parse_string(text, origin);
    TrainConfig c;
    for (const auto& [key, value] : kv.entries()) {
        (void)value;
        if (key == "learning_rate") c.learning_rate = kv.get_double(key);
        else if (key == "adam_beta1") c.adam_beta1 = kv.get_double(key);
        else if (key == "adam_beta2") c.adam_beta2 = kv.get_double(key);
        else if (key == "batch_size") c.batch_size = static_cast<int>(kv.get_int(key));
        else if (key == "steps") c.steps = static_cast<int>(kv.get_int(key));
        else if (key == "k") c.k = static_cast<int>(kv.get_int(key));
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(kv.get_int(key));
        else if (key == "preset") c.preset = kv.get(key);
        else if (key == "lambda_l1") c.lambda_l1 = kv.get_double(key);
        else if (key == "lambda_vgg") c.lambda_vgg = kv.get_double(key);
        else if (key == "lambda_fm") c.lambda_fm = kv.get_double(key);
        else if (key == "lambda_temp") c.lambda_temp = kv.get_double(key);
        else if (key == "checkpoint_every") c.checkpoint_every = static_cast<int>(kv.get_int(key));
        else if (key == "audio_window") c.audio_window = static_cast<int>(kv.get_int(key));
        else if (key == "audio_extractor") c.audio_extractor = kv.get(key);
        else throw ConfigError("unknown config key '" + key + "' in " + origin);
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
}

std::string TrainConfig::to_text() const {
    KeyValueFile kv;
    kv.set_double("learning_rate", learning_rate);
    kv.set_double("adam_beta1", adam_beta1);
    kv.set_double("adam_beta2", adam_beta2);
    kv.set_int("batch_size", batch_size);
    kv.set_int("steps", steps);
    kv.set_int("k", k);
    kv.set_int("seed", static_cast<std::int64_t>(seed));
    kv.set("preset", preset);
    kv.set_double("lambda_l1", lambda_l1);
    kv.set_double("lambda_vgg", lambda_vgg);
    kv.set_double("lambda_fm", lambda_fm);
    kv.set_double("lambda_temp", lambda_temp);
    kv.set_int("checkpoint_every", checkpoint_every);
    kv.set_int("audio_window", audio_window);
    kv.set("audio_extractor", audio_extractor);
    return kv.to_string();
}

// ---- dataset ----

SequenceData make_sequence_data(const morph::MorphableModel& model, morph::SyntheticSequence seq,
                                int audio_window, const audio::FeatureExtractor& extractor,
                                int mouth_size) {
    SequenceData s;
    s.seq = std::move(seq);
    const int t_count = s.seq.length();
    std::vector<audio::AudioPart> parts(static_cast<std::size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
        parts[static_cast<std::size_t>(t)] = {s.seq.audio_parts[static_cast<std::size_t>(t)],
                                              s.seq.sample_rate};
    }
    for (int t = 0; t < t_count; ++t) {
        morph::FaceShape shape =
            morph::synthesize_shape(model, s.seq.params[static_cast<std::size_t>(t)]);
        const morph::CameraParams& cam = s.seq.cameras[static_cast<std::size_t>(t)];
        raster::RasterResult r =
            raster::rasterize(shape, cam, model, s.seq.resolution, s.seq.resolution);
        s.maps.push_back(std::move(r.face_map));
        s.mouths.push_back(
            raster::mouth_box(shape, cam, model, s.seq.resolution, s.seq.resolution, mouth_size));
        audio::AudioFeature f = audio::extract(parts, t, audio_window, extractor);
        s.audio_feats.push_back(f.tensor());
    }
    return s;
}

Dataset Dataset::load(const std::string& dir, int audio_window,
                      const audio::FeatureExtractor& extractor, int mouth_size) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.txt";
    if (!fs::exists(manifest_path))
        throw DataError("dataset manifest not found: " + manifest_path.string());
    KeyValueFile manifest = KeyValueFile::parse_file(manifest_path.string());
    const int n = static_cast<int>(manifest.get_int("num_sequences"));
    if (n <= 0) throw DataError("dataset has no sequences: " + dir);

    Dataset d;
    d.model_ = morph::load_model(ArrayFile::load((root / "model.hga").string()));
    d.model_.validate();
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "seq_%04d.hga", i);
        morph::SyntheticSequence seq = morph::load_sequence(ArrayFile::load((root / name).string()));
        if (d.resolution_ == 0) d.resolution_ = seq.resolution;
        if (seq.resolution != d.resolution_)
            throw DataError("mixed resolutions in dataset: " + dir);
        d.seqs_.push_back(
            make_sequence_data(d.model_, std::move(seq), audio_window, extractor, mouth_size));
    }
    return d;
}

Dataset Dataset::from_parts(morph::MorphableModel model, std::vector<SequenceData> seqs) {
    Dataset d;
    d.model_ = std::move(model);
    d.seqs_ = std::move(seqs);
    if (!d.seqs_.empty()) d.resolution_ = d.seqs_.front().seq.resolution;
    return d;
}

// ---- sampling ----

Tensor driving_stack(const SequenceData& s, int t, int k) {
    const Tensor& first = s.maps.at(0);
    const int h = first.dim(1), w = first.dim(2);
    Tensor out({3 * (k + 1), h, w});
    for (int i = 0; i <= k; ++i) {
        const int idx = std::max(0, t - k + i);
        const Tensor& m = s.maps.at(static_cast<std::size_t>(idx));
        std::copy(m.data(), m.data() + m.numel(), out.data() + static_cast<std::int64_t>(i) * m.numel());
    }
    return out;
}

std::vector<TrainSample> sample_batch(const Dataset& data, const TrainConfig& config, Rng& rng) {
    std::vector<int> usable;
    int skipped = 0;
    for (std::size_t i = 0; i < data.sequences().size(); ++i) {
        if (data.sequences()[i].seq.length() >= 2) usable.push_back(static_cast<int>(i));
        else ++skipped;
    }
    if (skipped > 0) {
        static bool warned = false;
        if (!warned) {
            std::cerr << "warning: skipping " << skipped
                      << " sequence(s) shorter than 2 frames\n";
            warned = true;
        }
    }
    if (usable.empty()) throw DataError("no usable sequences (need length >= 2)");

    std::vector<TrainSample> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
        TrainSample smp;
        smp.seq_index = usable[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(usable.size())))];
        const SequenceData& s = data.sequences()[static_cast<std::size_t>(smp.seq_index)];
        const int t_count = s.seq.length();
        smp.t = 1 + rng.uniform_int(t_count - 1);
        smp.ref = rng.uniform_int(t_count);

        smp.reference_frame = s.seq.frames.at(static_cast<std::size_t>(smp.ref));
        smp.reference_map = s.maps.at(static_cast<std::size_t>(smp.ref));
        smp.driving_prev = driving_stack(s, smp.t - 1, config.k);
        smp.driving_curr = driving_stack(s, smp.t, config.k);
        smp.target_prev = s.seq.frames.at(static_cast<std::size_t>(smp.t - 1));
        smp.target_curr = s.seq.frames.at(static_cast<std::size_t>(smp.t));
        smp.mouth_prev = s.mouths.at(static_cast<std::size_t>(smp.t - 1));
        smp.mouth_curr = s.mouths.at(static_cast<std::size_t>(smp.t));
        smp.audio_prev = s.audio_feats.at(static_cast<std::size_t>(smp.t - 1));
        smp.audio_curr = s.audio_feats.at(static_cast<std::size_t>(smp.t));
        batch.push_back(std::move(smp));
    }
    return batch;
}

// ---- models & step ----

Models::Models(const nn::ArchPreset& preset, std::uint64_t seed)
    : generator(preset, Rng(seed).next_u64()),
      discriminators(preset, Rng(seed).fork(1).next_u64()),
      perceptual(11) {}

double StepRecord::get(const std::string& name) const {
    for (const auto& [n, v] : terms)
        if (n == name) return v;
    throw RunError("missing loss term: " + name);
}

namespace {

ad::Var mouth_crop(const ad::Var& frame, const raster::MouthBox& box) {
    return ad::crop(frame, box.y0, box.x0, box.size, box.size);
}

}  // namespace

StepRecord train_step(Models& models, const std::vector<TrainSample>& batch, nn::Adam& opt_g,
                      nn::Adam& opt_d, const loss::LossWeights& weights) {
    if (batch.empty()) throw RunError("train_step: empty batch");
    const int b_count = static_cast<int>(batch.size());
    nn::Generator& gen = models.generator;
    nn::DiscriminatorPair& disc = models.discriminators;

    struct Pass {
        ad::Var map, real, audio;  // driving map of the frame, ground truth, audio feature
        raster::MouthBox box;
        nn::GeneratorOutput out;
    };
    struct SamplePasses {
        Pass prev, curr;
    };

    // Generator forwards for the consecutive pair, shared by both phases.
    std::vector<SamplePasses> passes;
    passes.reserve(batch.size());
    for (const TrainSample& smp : batch) {
        SamplePasses sp;
        ad::Var ref_frame = ad::Var::constant(smp.reference_frame);
        ad::Var ref_map = ad::Var::constant(smp.reference_map);

        // The discriminator conditions on the newest map of each stack.
        auto newest_map = [](const Tensor& stack) {
            const int h = stack.dim(1), w = stack.dim(2);
            Tensor m({3, h, w});
            const std::int64_t plane = static_cast<std::int64_t>(3) * h * w;
            std::copy(stack.data() + stack.numel() - plane, stack.data() + stack.numel(), m.data());
            return m;
        };
        sp.prev.map = ad::Var::constant(newest_map(smp.driving_prev));
        sp.curr.map = ad::Var::constant(newest_map(smp.driving_curr));
        sp.prev.real = ad::Var::constant(smp.target_prev);
        sp.curr.real = ad::Var::constant(smp.target_curr);
        sp.prev.audio = ad::Var::constant(smp.audio_prev);
        sp.curr.audio = ad::Var::constant(smp.audio_curr);
        sp.prev.box = smp.mouth_prev;
        sp.curr.box = smp.mouth_curr;

        nn::GeneratorInput in_prev{ad::Var::constant(smp.driving_prev), ref_frame, ref_map,
                                   sp.prev.audio};
        nn::GeneratorInput in_curr{ad::Var::constant(smp.driving_curr), ref_frame, ref_map,
                                   sp.curr.audio};
        sp.prev.out = gen.forward(in_prev);
        sp.curr.out = gen.forward(in_curr);
        passes.push_back(std::move(sp));
    }

    // ---- discriminator phase: one D + D_m update on detached fakes ----
    disc.params().zero_grad();
    ad::Var d_sum = ad::Var::scalar_const(0.0f);
    ad::Var dm_sum = ad::Var::scalar_const(0.0f);
    for (const SamplePasses& sp : passes) {
        for (const Pass* p : {&sp.prev, &sp.curr}) {
            ad::Var fake = p->out.frame.detach();
            nn::DiscOutput d_real = disc.frame_disc(p->map, p->real);
            nn::DiscOutput d_fake = disc.frame_disc(p->map, fake);
            d_sum = d_sum + loss::hinge_d(d_real.score, d_fake.score);
            nn::DiscOutput m_real = disc.mouth_disc(p->audio, mouth_crop(p->real, p->box));
            nn::DiscOutput m_fake = disc.mouth_disc(p->audio, mouth_crop(fake, p->box));
            dm_sum = dm_sum + loss::hinge_d(m_real.score, m_fake.score);
        }
    }
    const float inv_pass = 1.0f / static_cast<float>(2 * b_count);
    ad::Var d_total = ad::scale(d_sum, inv_pass);
    ad::Var dm_total = ad::scale(dm_sum, inv_pass);
    ad::Var d_loss = d_total + dm_total;
    ad::backward(d_loss);
    opt_d.step();

    // ---- generator phase: full objective through the updated D ----
    gen.params().zero_grad();
    ad::Var adv = ad::Var::scalar_const(0.0f);
    ad::Var l1_g = ad::Var::scalar_const(0.0f);
    ad::Var vgg_g = ad::Var::scalar_const(0.0f);
    ad::Var fm = ad::Var::scalar_const(0.0f);
    ad::Var l1_f = ad::Var::scalar_const(0.0f);
    ad::Var vgg_f = ad::Var::scalar_const(0.0f);
    ad::Var temp = ad::Var::scalar_const(0.0f);
    for (const SamplePasses& sp : passes) {
        for (const Pass* p : {&sp.prev, &sp.curr}) {
            const ad::Var& fake = p->out.frame;
            nn::DiscOutput d_fake = disc.frame_disc(p->map, fake);
            nn::DiscOutput m_fake = disc.mouth_disc(p->audio, mouth_crop(fake, p->box));
            adv = adv + loss::hinge_g(d_fake.score, m_fake.score);
            nn::DiscOutput d_real = disc.frame_disc(p->map, p->real);
            nn::DiscOutput m_real = disc.mouth_disc(p->audio, mouth_crop(p->real, p->box));
            fm = fm + loss::feature_match(d_real.features, d_fake.features) +
                 loss::feature_match(m_real.features, m_fake.features);
            l1_g = l1_g + loss::recon_l1(fake, p->real);
            vgg_g = vgg_g + loss::perceptual(fake, p->real, models.perceptual);
            auto [wl1, wvgg] = loss::warp_losses(p->out.warped_reference, p->real, models.perceptual);
            l1_f = l1_f + wl1;
            vgg_f = vgg_f + wvgg;
        }
        temp = temp + loss::temporal_loss(
                          {sp.prev.out.warped_h1, sp.prev.out.warped_h2, sp.prev.out.warped_h3},
                          {sp.curr.out.warped_h1, sp.curr.out.warped_h2, sp.curr.out.warped_h3});
    }
    loss::GeneratorTerms terms;
    terms.adv = ad::scale(adv, inv_pass);
    terms.l1_g = ad::scale(l1_g, inv_pass);
    terms.vgg_g = ad::scale(vgg_g, inv_pass);
    terms.fm = ad::scale(fm, inv_pass);
    terms.l1_f = ad::scale(l1_f, inv_pass);
    terms.vgg_f = ad::scale(vgg_f, inv_pass);
    terms.temp = ad::scale(temp, 1.0f / static_cast<float>(b_count));
    ad::Var g_total = loss::total_g(terms, weights);
    ad::backward(g_total);
    opt_g.step();

    StepRecord rec;
    rec.terms = {{"g_total", g_total.scalar()}, {"g_adv", terms.adv.scalar()},
                 {"g_l1", terms.l1_g.scalar()}, {"g_vgg", terms.vgg_g.scalar()},
                 {"g_fm", terms.fm.scalar()},   {"f_l1", terms.l1_f.scalar()},
                 {"f_vgg", terms.vgg_f.scalar()}, {"f_temp", terms.temp.scalar()},
                 {"d_total", d_total.scalar()}, {"dm_total", dm_total.scalar()}};
    for (const auto& [name, value] : rec.terms) {
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << "non-finite loss term '" << name << "':";
            for (const auto& [n2, v2] : rec.terms) msg << ' ' << n2 << '=' << v2;
            throw RunError(msg.str());
        }
    }
    return rec;
}

// ---- checkpointing ----

namespace {

std::vector<std::int32_t> pack_rng_state(const Rng& rng) {
    std::vector<std::int32_t> out;
    for (std::uint64_t word : rng.state()) {
        out.push_back(std::bit_cast<std::int32_t>(static_cast<std::uint32_t>(word & 0xffffffffu)));
        out.push_back(std::bit_cast<std::int32_t>(static_cast<std::uint32_t>(word >> 32)));
    }
    return out;
}

void unpack_rng_state(const std::vector<std::int32_t>& packed, Rng& rng) {
    if (packed.size() != 8) throw DataError("checkpoint rng state must hold 8 words");
    std::array<std::uint64_t, 4> s{};
    for (int i = 0; i < 4; ++i) {
        const auto lo = std::bit_cast<std::uint32_t>(packed[static_cast<std::size_t>(2 * i)]);
        const auto hi = std::bit_cast<std::uint32_t>(packed[static_cast<std::size_t>(2 * i + 1)]);
        s[static_cast<std::size_t>(i)] = (static_cast<std::uint64_t>(hi) << 32) | lo;
    }
    rng.set_state(s);
}

}  // namespace

void save_checkpoint(const std::string& path, Models& models, const nn::Adam& opt_g,
                     const nn::Adam& opt_d, int step, const Rng& sampler,
                     const TrainConfig& config) {
    ArrayFile af;
    models.generator.params().save(af, "g.");
    models.discriminators.params().save(af, "d.");
    opt_g.save(af, "adam_g.");
    opt_d.save(af, "adam_d.");
    af.put_scalar_i32("step", step);
    af.put_i32("rng_state", {8}, pack_rng_state(sampler));
    af.save(path);

    KeyValueFile mf;
    mf.set("preset", config.preset);
    mf.set_int("seed", static_cast<std::int64_t>(config.seed));
    mf.set_int("step", step);
    mf.set_int("k", config.k);
    mf.set_int("audio_window", config.audio_window);
    mf.set("audio_extractor", config.audio_extractor);
    mf.save(path + ".manifest");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    const std::string mpath = path + ".manifest";
    if (!fs::exists(mpath)) throw DataError("checkpoint manifest not found: " + mpath);
    KeyValueFile mf;
    try {
        mf = KeyValueFile::parse_file(mpath);
    } catch (const std::exception& e) {
        throw DataError("broken checkpoint manifest " + mpath + ": " + e.what());
    }
    CheckpointInfo info;
    info.preset = mf.get("preset");
    info.seed = static_cast<std::uint64_t>(mf.get_int("seed"));
    info.step = static_cast<int>(mf.get_int("step"));
    info.k = static_cast<int>(mf.get_int("k"));
    info.audio_window = static_cast<int>(mf.get_int("audio_window"));
    info.audio_extractor = mf.get("audio_extractor");
    return info;
}

int load_checkpoint(const std::string& path, Models& models, nn::Adam* opt_g, nn::Adam* opt_d,
                    Rng* sampler) {
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
    ArrayFile af = ArrayFile::load(path);
    models.generator.params().load(af, "g.");
    models.discriminators.params().load(af, "d.");
    if (opt_g != nullptr) opt_g->load(af, "adam_g.");
    if (opt_d != nullptr) opt_d->load(af, "adam_d.");
    if (sampler != nullptr) {
        const NamedArray& arr = af.get("rng_state");
        unpack_rng_state(arr.i32, *sampler);
    }
    return af.scalar_i32("step");
}

// ---- loop ----

TrainResult train(const TrainConfig& config, const Dataset& data, const std::string& out_dir,
                  const std::string& resume_path) {
    config.validate();
    nn::ArchPreset preset = nn::preset_by_name(config.preset);
    preset.k = config.k;
    preset.audio_dim = 84 + 2 * config.audio_window * 27;
    if (data.resolution() != 0 && data.resolution() != preset.resolution) {
        throw DataError("dataset resolution " + std::to_string(data.resolution()) +
                        " does not match preset '" + config.preset + "' (" +
                        std::to_string(preset.resolution) + ")");
    }

    Models models(preset, config.seed);
    nn::Adam opt_g(models.generator.params(), static_cast<float>(config.learning_rate),
                   static_cast<float>(config.adam_beta1), static_cast<float>(config.adam_beta2));
    nn::Adam opt_d(models.discriminators.params(), static_cast<float>(config.learning_rate),
                   static_cast<float>(config.adam_beta1), static_cast<float>(config.adam_beta2));
    Rng sampler = Rng(config.seed).fork(17);

    int start_step = 0;
    if (!resume_path.empty()) {
        CheckpointInfo info = read_checkpoint_info(resume_path);
        if (info.preset != config.preset)
            throw ConfigError("checkpoint preset '" + info.preset + "' does not match config '" +
                              config.preset + "'");
        start_step = load_checkpoint(resume_path, models, &opt_g, &opt_d, &sampler);
    }

    fs::create_directories(out_dir);
    const std::string log_path = (fs::path(out_dir) / "loss_log.tsv").string();
    std::ofstream log(log_path, resume_path.empty()
                                    ? std::ios::binary | std::ios::trunc
                                    : std::ios::binary | std::ios::app);
    if (!log) throw RunError("cannot open loss log for writing: " + log_path);

    const loss::LossWeights weights = config.weights();
    for (int step = start_step; step < config.steps; ++step) {
        std::vector<TrainSample> batch = sample_batch(data, config, sampler);
        StepRecord rec = train_step(models, batch, opt_g, opt_d, weights);
        for (const auto& [name, value] : rec.terms) {
            log << step << '\t' << name << '\t' << format_double(value) << '\n';
        }
        log.flush();
        if (!log) throw RunError("failed writing loss log: " + log_path);

        const int done = step + 1;
        if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 &&
            done != config.steps) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_step%06d.hga", done);
            save_checkpoint((fs::path(out_dir) / name).string(), models, opt_g, opt_d, done,
                            sampler, config);
        }
    }

    TrainResult result;
    result.final_checkpoint = (fs::path(out_dir) / "ckpt_final.hga").string();
    result.loss_log = log_path;
    result.steps_done = config.steps - start_step;
    save_checkpoint(result.final_checkpoint, models, opt_g, opt_d, config.steps, sampler, config);
    return result;
}

}  // namespace headgan::train
