// Command-line front end: dataset synthesis, training, reenactment,
// evaluation and preview rendering over the shared array container.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "headgan/config.hpp"
#include "headgan/errors.hpp"
#include "headgan/fitting.hpp"
#include "headgan/image_io.hpp"
#include "headgan/inference.hpp"
#include "headgan/metrics.hpp"
#include "headgan/preview.hpp"
#include "headgan/threading.hpp"
#include "headgan/training.hpp"

namespace fs = std::filesystem;
using namespace headgan;

namespace {

int env_threads() {
    const char* v = std::getenv("HEADGAN_LAB_THREADS");
    if (v == nullptr) return 1;
    try {
        return std::max(1, std::stoi(v));
    } catch (const std::exception&) {
        return 1;
    }
}

struct SynthArgs {
    std::uint64_t seed = 1;
    int num_sequences = 4;
    int frames = 8;
    int resolution = 64;
    int vertices = 300;
    int n_id = 8;
    int n_exp = 8;
    std::string out;
    bool force = false;
};

void run_synth(const SynthArgs& a) {
    if (a.frames < 3) throw ConfigError("--frames must be >= 3");
    if (a.num_sequences < 1) throw ConfigError("--num-sequences must be >= 1");
    const fs::path out(a.out);
    if (fs::exists(out) && !fs::is_empty(out) && !a.force)
        throw ConfigError("output directory is not empty (use --force): " + a.out);
    fs::create_directories(out);

    morph::MorphableModel model = morph::make_synthetic_model(a.seed, a.vertices, a.n_id, a.n_exp);
    ArrayFile mf;
    morph::save_model(model, mf);
    mf.save((out / "model.hga").string());

    for (int i = 0; i < a.num_sequences; ++i) {
        const std::uint64_t seq_seed = Rng(a.seed).fork(1000 + static_cast<std::uint64_t>(i)).next_u64();
        morph::SyntheticSequence seq =
            morph::make_synthetic_sequence(model, seq_seed, a.frames, a.resolution);
        ArrayFile sf;
        morph::save_sequence(seq, sf);
        char name[32];
        std::snprintf(name, sizeof(name), "seq_%04d.hga", i);
        sf.save((out / name).string());
    }

    KeyValueFile manifest;
    manifest.set("kind", "dataset");
    manifest.set_int("seed", static_cast<std::int64_t>(a.seed));
    manifest.set_int("num_sequences", a.num_sequences);
    manifest.set_int("frames", a.frames);
    manifest.set_int("resolution", a.resolution);
    manifest.set_int("n_vertices", a.vertices);
    manifest.set_int("n_id", a.n_id);
    manifest.set_int("n_exp", a.n_exp);
    manifest.save((out / "manifest.txt").string());

    std::cout << "dataset written to " << a.out << ": " << a.num_sequences << " sequence(s) x "
              << a.frames << " frames at " << a.resolution << "x" << a.resolution << " (seed "
              << a.seed << ")\n";
}

struct TrainArgs {
    std::string config, data, out, resume;
    bool print_config = false;
    int steps_override = -1;
    std::int64_t seed_override = -1;
};

void run_train(const TrainArgs& a, int threads) {
    (void)threads;  // the optimization step is sequential by design
    train::TrainConfig cfg =
        a.config.empty() ? train::TrainConfig{} : train::TrainConfig::from_file(a.config);
    if (a.steps_override >= 0) cfg.steps = a.steps_override;
    if (a.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed_override);
    if (a.print_config) {
        std::cout << cfg.to_text();
        return;
    }
    if (a.data.empty() || a.out.empty())
        throw ConfigError("train requires --data and --out (or --print-config)");
    cfg.validate();

    auto extractor = audio::make_extractor(cfg.audio_extractor);
    const nn::ArchPreset preset = nn::preset_by_name(cfg.preset);
    train::Dataset data =
        train::Dataset::load(a.data, cfg.audio_window, *extractor, preset.mouth_size);
    train::TrainResult res = train::train(cfg, data, a.out, a.resume);
    std::cout << "trained " << res.steps_done << " step(s); final checkpoint "
              << res.final_checkpoint << "\nloss log " << res.loss_log << "\n";
}

/// Rebuilds models from a checkpoint manifest and loads the weights.
struct LoadedCheckpoint {
    train::CheckpointInfo info;
    nn::ArchPreset preset;
    std::unique_ptr<train::Models> models;
    std::unique_ptr<audio::FeatureExtractor> extractor;
};

LoadedCheckpoint load_for_inference(const std::string& checkpoint) {
    if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
    LoadedCheckpoint lc;
    lc.info = train::read_checkpoint_info(checkpoint);
    lc.preset = nn::preset_by_name(lc.info.preset);
    lc.preset.k = lc.info.k;
    lc.preset.audio_dim = 84 + 2 * lc.info.audio_window * 27;
    lc.models = std::make_unique<train::Models>(lc.preset, lc.info.seed);
    train::load_checkpoint(checkpoint, *lc.models, nullptr, nullptr, nullptr);
    lc.extractor = audio::make_extractor(lc.info.audio_extractor);
    return lc;
}

struct ReenactArgs {
    std::string checkpoint, source, driver, out, model;
    int source_frame = -1;
};

void run_reenact(const ReenactArgs& a) {
    LoadedCheckpoint lc = load_for_inference(a.checkpoint);

    const std::string model_path =
        a.model.empty() ? (fs::path(a.source).parent_path() / "model.hga").string() : a.model;
    if (!fs::exists(model_path)) throw DataError("morphable model not found: " + model_path);
    morph::MorphableModel model = morph::load_model(ArrayFile::load(model_path));
    morph::SyntheticSequence source_seq = morph::load_sequence(ArrayFile::load(a.source));
    morph::SyntheticSequence driver_seq = morph::load_sequence(ArrayFile::load(a.driver));

    // Pre-flight: the checkpoint's preset must match the footage before any
    // frame is produced.
    if (driver_seq.resolution != lc.preset.resolution ||
        source_seq.resolution != lc.preset.resolution)
        throw DataError("checkpoint preset '" + lc.info.preset + "' expects resolution " +
                        std::to_string(lc.preset.resolution) + " but sequences are " +
                        std::to_string(driver_seq.resolution));

    const int src_frame = a.source_frame >= 0 ? a.source_frame : source_seq.reference_index;
    infer::SourceBundle source = infer::source_from_sequence(source_seq, src_frame);
    infer::PreprocessResult pre =
        infer::preprocess(model, source, driver_seq, lc.preset.resolution);
    std::vector<Tensor> frames = infer::reenact(lc.models->generator, model, source, driver_seq,
                                                *lc.extractor, lc.info.audio_window);

    fs::create_directories(a.out);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", static_cast<int>(t));
        write_png((fs::path(a.out) / name).string(),
                  tensor_to_image(frames[t], /*signed_range=*/true));
    }

    ArrayFile af;
    const int t_count = static_cast<int>(frames.size());
    const int res = lc.preset.resolution;
    Tensor packed({t_count, 3 * res * res});
    for (int t = 0; t < t_count; ++t)
        std::copy(frames[static_cast<std::size_t>(t)].data(),
                  frames[static_cast<std::size_t>(t)].data() + 3 * res * res,
                  packed.data() + static_cast<std::int64_t>(t) * 3 * res * res);
    af.put("frames", packed);
    Tensor maps({t_count, 3 * res * res});
    for (int t = 0; t < t_count; ++t)
        std::copy(pre.adapted_maps[static_cast<std::size_t>(t)].data(),
                  pre.adapted_maps[static_cast<std::size_t>(t)].data() + 3 * res * res,
                  maps.data() + static_cast<std::int64_t>(t) * 3 * res * res);
    af.put("adapted_maps", maps);
    const int n_exp = model.n_exp;
    Tensor exps({t_count, n_exp});
    for (int t = 0; t < t_count; ++t)
        for (int j = 0; j < n_exp; ++j)
            exps[static_cast<std::int64_t>(t) * n_exp + j] = static_cast<float>(
                pre.adapted_params[static_cast<std::size_t>(t)].expression[static_cast<std::size_t>(j)]);
    af.put("adapted_expressions", exps);
    af.put_scalar_i32("resolution", res);
    af.save((fs::path(a.out) / "outputs.hga").string());

    KeyValueFile manifest;
    manifest.set("kind", "reenactment");
    manifest.set("checkpoint", a.checkpoint);
    manifest.set("source", a.source);
    manifest.set("driver", a.driver);
    manifest.set_int("source_frame", src_frame);
    manifest.set_int("seed", static_cast<std::int64_t>(lc.info.seed));
    manifest.set_int("frames", t_count);
    manifest.save((fs::path(a.out) / "manifest.txt").string());

    std::cout << "reenacted " << t_count << " frame(s) into " << a.out << "\n";
}

struct EvalArgs {
    std::string checkpoint, data, metrics = "csim,fid,fvd,aed", report;
};

void run_eval(const EvalArgs& a, int threads) {
    std::vector<std::string> wanted;
    {
        std::stringstream ss(a.metrics);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            if (item != "csim" && item != "fid" && item != "fvd" && item != "aed")
                throw ConfigError("unknown metric '" + item + "'");
            wanted.push_back(item);
        }
        if (wanted.empty()) throw ConfigError("no metrics requested");
    }

    LoadedCheckpoint lc = load_for_inference(a.checkpoint);
    train::Dataset data = train::Dataset::load(a.data, lc.info.audio_window, *lc.extractor,
                                               lc.preset.mouth_size);

    std::vector<Tensor> real, fake;
    std::vector<std::vector<Tensor>> real_clips, fake_clips;
    std::vector<std::vector<double>> driver_exprs;
    std::vector<Tensor> maps_to_fit;
    std::vector<morph::CameraParams> fit_cameras;

    const bool need_aed =
        std::find(wanted.begin(), wanted.end(), "aed") != wanted.end();
    for (const train::SequenceData& s : data.sequences()) {
        infer::SourceBundle source = infer::source_from_sequence(s.seq, s.seq.reference_index);
        std::vector<Tensor> generated = infer::reenact(lc.models->generator, data.model(), source,
                                                       s.seq, *lc.extractor, lc.info.audio_window);
        const int t_count = s.seq.length();
        for (int t = 0; t < t_count; ++t) {
            real.push_back(s.seq.frames[static_cast<std::size_t>(t)]);
            fake.push_back(generated[static_cast<std::size_t>(t)]);
            if (need_aed) {
                driver_exprs.push_back(s.seq.params[static_cast<std::size_t>(t)].expression);
                maps_to_fit.push_back(s.maps[static_cast<std::size_t>(t)]);
                fit_cameras.push_back(s.seq.cameras[static_cast<std::size_t>(t)]);
            }
        }
        // Clips of 4 consecutive frames, stride 2, for the video metric.
        for (int start = 0; start + 4 <= t_count; start += 2) {
            std::vector<Tensor> rc, fc;
            for (int j = 0; j < 4; ++j) {
                rc.push_back(s.seq.frames[static_cast<std::size_t>(start + j)]);
                fc.push_back(generated[static_cast<std::size_t>(start + j)]);
            }
            real_clips.push_back(std::move(rc));
            fake_clips.push_back(std::move(fc));
        }
    }
    if (real.empty()) throw DataError("dataset has no frames to evaluate");

    metrics::ConvEmbedder embedder(13);
    KeyValueFile report;
    for (const std::string& m : wanted) {
        double value = 0.0;
        if (m == "csim") {
            value = metrics::csim(real, fake, embedder);
        } else if (m == "fid") {
            const int n = static_cast<int>(real.size());
            std::vector<std::vector<double>> fr(static_cast<std::size_t>(n)),
                ff(static_cast<std::size_t>(n));
            parallel_for(n, threads, [&](int i) {
                fr[static_cast<std::size_t>(i)] = embedder.embed(real[static_cast<std::size_t>(i)]);
                ff[static_cast<std::size_t>(i)] = embedder.embed(fake[static_cast<std::size_t>(i)]);
            });
            value = metrics::frechet_distance(fr, ff);
        } else if (m == "fvd") {
            if (real_clips.empty()) throw DataError("sequences too short for clips (need 4 frames)");
            const int n = static_cast<int>(real_clips.size());
            std::vector<std::vector<double>> fr(static_cast<std::size_t>(n)),
                ff(static_cast<std::size_t>(n));
            parallel_for(n, threads, [&](int i) {
                fr[static_cast<std::size_t>(i)] =
                    embedder.embed_clip(real_clips[static_cast<std::size_t>(i)]);
                ff[static_cast<std::size_t>(i)] =
                    embedder.embed_clip(fake_clips[static_cast<std::size_t>(i)]);
            });
            value = metrics::frechet_distance(fr, ff);
        } else {  // aed
            std::vector<std::vector<double>> recovered(maps_to_fit.size());
            for (std::size_t i = 0; i < maps_to_fit.size(); ++i) {
                morph::ShapeParams init;
                init.identity = data.sequences().front().seq.identity;
                init.expression.assign(static_cast<std::size_t>(data.model().n_exp), 0.0);
                metrics::FitOptions opts;
                opts.starts = 1;  // zero-expression init; camera taken from the driver bundle
                metrics::FitResult fit =
                    metrics::fit_facemap(maps_to_fit[i], data.model(),
                                         data.sequences().front().seq.identity, init,
                                         fit_cameras[i], opts);
                recovered[i] = fit.expression;
            }
            value = metrics::aed(driver_exprs, recovered);
        }
        report.set_double(m, value);
    }

    std::ostringstream out;
    out << "# reenactment evaluation report\n";
    out << "# desk-scale synthetic data: absolute values are NOT comparable to\n";
    out << "# published results on real datasets.\n";
    out << report.to_string();
    std::cout << out.str();
    if (!a.report.empty()) {
        std::ofstream f(a.report, std::ios::binary);
        if (!f) throw RunError("cannot write report: " + a.report);
        f << out.str();
    }
}

struct PreviewArgs {
    std::string in, out;
    int grid = 4;
};

void run_preview(const PreviewArgs& a) {
    Tensor image;
    if (fs::is_directory(a.in)) {
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(a.in))
            if (entry.path().extension() == ".png") paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) throw DataError("no .png images in " + a.in);
        std::vector<Tensor> images;
        for (const std::string& p : paths)
            images.push_back(image_to_tensor(read_png(p), /*signed_range=*/false));
        image = preview::make_grid(images, a.grid);
    } else {
        image = preview::plot_loss_curves(a.in);
    }
    write_png(a.out, tensor_to_image(image, /*signed_range=*/false));
    std::cout << "wrote " << a.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"One-shot talking-head reenactment lab (synthetic desk-scale)"};
    app.require_subcommand(1);
    int threads = env_threads();
    app.add_option("--threads", threads, "worker threads (1 = fully deterministic)")
        ->capture_default_str();

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--seed", sa.seed)->capture_default_str();
    synth->add_option("--num-sequences", sa.num_sequences)->capture_default_str();
    synth->add_option("--frames", sa.frames)->capture_default_str();
    synth->add_option("--resolution", sa.resolution)->capture_default_str();
    synth->add_option("--vertices", sa.vertices)->capture_default_str();
    synth->add_option("--n-id", sa.n_id)->capture_default_str();
    synth->add_option("--n-exp", sa.n_exp)->capture_default_str();
    synth->add_option("--out", sa.out)->required();
    synth->add_flag("--force", sa.force, "write into a non-empty directory");

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "train on a synthetic dataset");
    train_cmd->add_option("--config", ta.config, "key=value config file");
    train_cmd->add_option("--data", ta.data, "dataset directory");
    train_cmd->add_option("--out", ta.out, "output directory");
    train_cmd->add_option("--resume", ta.resume, "checkpoint to resume from");
    train_cmd->add_option("--steps", ta.steps_override, "override the step budget");
    train_cmd->add_option("--seed", ta.seed_override, "override the seed");
    train_cmd->add_flag("--print-config", ta.print_config, "print effective defaults and exit");

    ReenactArgs ra;
    CLI::App* reenact = app.add_subcommand("reenact", "drive a source identity with a driver");
    reenact->add_option("--checkpoint", ra.checkpoint)->required();
    reenact->add_option("--source", ra.source, "source sequence file")->required();
    reenact->add_option("--driver", ra.driver, "driver sequence file")->required();
    reenact->add_option("--out", ra.out)->required();
    reenact->add_option("--model", ra.model, "morphable model (default: sibling of --source)");
    reenact->add_option("--source-frame", ra.source_frame,
                        "source frame index (default: the sequence's reference)");

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
    eval_cmd->add_option("--data", ea.data)->required();
    eval_cmd->add_option("--metrics", ea.metrics, "comma list: csim,fid,fvd,aed")
        ->capture_default_str();
    eval_cmd->add_option("--report", ea.report, "report file path");

    PreviewArgs pa;
    CLI::App* preview_cmd =
        app.add_subcommand("preview", "tile images or plot a loss log as a PNG");
    preview_cmd->add_option("--in", pa.in, "image directory or loss log file")->required();
    preview_cmd->add_option("--out", pa.out, "output PNG")->required();
    preview_cmd->add_option("--grid", pa.grid, "grid columns")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) run_synth(sa);
        else if (train_cmd->parsed()) run_train(ta, threads);
        else if (reenact->parsed()) run_reenact(ra);
        else if (eval_cmd->parsed()) run_eval(ea, threads);
        else if (preview_cmd->parsed()) run_preview(pa);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
