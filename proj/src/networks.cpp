#include "headgan/networks.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "headgan/errors.hpp"

namespace headgan::nn {

ArchPreset desk_preset() {
    ArchPreset p;
    p.name = "desk64";
    p.resolution = 64;
    p.w1 = 8;
    p.w2 = 32;
    p.w3 = 128;
    p.head_hidden = 32;
    p.disc_base = 16;
    p.mouth_size = 16;
    return p;
}

ArchPreset paper_preset() {
    ArchPreset p;
    p.name = "paper256";
    p.resolution = 256;
    p.w1 = 32;
    p.w2 = 128;
    p.w3 = 512;
    p.head_hidden = 128;
    p.disc_base = 64;
    p.mouth_size = 64;
    return p;
}

ArchPreset preset_by_name(const std::string& name) {
    if (name == "desk64") return desk_preset();
    if (name == "paper256") return paper_preset();
    throw ConfigError("unknown architecture preset '" + name + "' (expected desk64 or paper256)");
}

std::string trace_to_string(const ShapeTrace& t) {
    std::ostringstream os;
    for (const auto& r : t) os << "(" << r.h << ", " << r.w << ", " << r.c << ")\n";
    return os.str();
}

namespace {

Tensor normal_tensor(std::vector<int> shape, Rng& rng, float stddev) {
    Tensor t(std::move(shape));
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) t[i] = rng.normalf(stddev);
    return t;
}

ShapeTraceRow row_of(const ad::Var& v) {
    return ShapeTraceRow{v.value().dim(1), v.value().dim(2), v.value().dim(0)};
}

void trace_push(ShapeTrace* trace, const ad::Var& v) {
    if (trace) trace->push_back(row_of(v));
}

}  // namespace

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, int stride,
               int pad, Rng& rng, float gain)
    : stride(stride), pad(pad) {
    const float stddev = gain / std::sqrt(static_cast<float>(cin) * k * k);
    w = ps.param(name + ".w", normal_tensor({cout, cin, k, k}, rng, stddev));
    b = ps.param(name + ".b", Tensor::zeros({cout}));
}

SpectralConv2d::SpectralConv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                               int stride, int pad, Rng& rng)
    : stride(stride), pad(pad) {
    const float stddev = 1.41421356f / std::sqrt(static_cast<float>(cin) * k * k);
    w = ps.param(name + ".w", normal_tensor({cout, cin, k, k}, rng, stddev));
    b = ps.param(name + ".b", Tensor::zeros({cout}));
    auto unit = [&rng](int n) {
        Tensor t({n});
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            t[i] = rng.normalf(1.0f);
            norm += static_cast<double>(t[i]) * t[i];
        }
        norm = std::sqrt(std::max(norm, 1e-30));
        for (int i = 0; i < n; ++i) t[i] = static_cast<float>(t[i] / norm);
        return t;
    };
    u = ps.buffer(name + ".u", unit(cout));
    v = ps.buffer(name + ".v", unit(cin * k * k));
}

void SpectralConv2d::power_iterate() {
    const Tensor& wt = w.value();
    const int rows = wt.dim(0);
    const int cols = static_cast<int>(wt.numel()) / rows;
    // v <- normalize(W^T u), u <- normalize(W v)
    std::vector<double> vt(static_cast<std::size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i) {
        const double ui = (*u)[i];
        const float* row = wt.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) vt[static_cast<std::size_t>(j)] += ui * row[j];
    }
    double norm = 0.0;
    for (double x : vt) norm += x * x;
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int j = 0; j < cols; ++j) (*v)[j] = static_cast<float>(vt[static_cast<std::size_t>(j)] / norm);

    std::vector<double> ut(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
        const float* row = wt.data() + static_cast<std::size_t>(i) * cols;
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += static_cast<double>(row[j]) * (*v)[j];
        ut[static_cast<std::size_t>(i)] = acc;
    }
    norm = 0.0;
    for (double x : ut) norm += x * x;
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int i = 0; i < rows; ++i) (*u)[i] = static_cast<float>(ut[static_cast<std::size_t>(i)] / norm);
}

ad::Var SpectralConv2d::forward(const ad::Var& x) const {
    if (ad::grad_enabled()) const_cast<SpectralConv2d*>(this)->power_iterate();
    ad::Var wsn = ad::spectral_scale(w, *u, *v);
    return ad::conv2d(x, wsn, b, stride, pad);
}

SpadeBlock::SpadeBlock(ParamStore& ps, const std::string& name, int channels, int mod_channels,
                       int hidden, Rng& rng) {
    head_shared = Conv2d(ps, name + ".head", mod_channels, hidden, 3, 1, 1, rng);
    // Near-neutral start: gamma ~ 1, beta ~ 0, with small live weights so
    // every parameter receives gradient from the first step.
    head_gamma = Conv2d(ps, name + ".gamma", hidden, channels, 3, 1, 1, rng, 0.1f);
    head_beta = Conv2d(ps, name + ".beta", hidden, channels, 3, 1, 1, rng, 0.1f);
    head_gamma.b.value_mut().fill(1.0f);
    conv = Conv2d(ps, name + ".conv", channels, channels, 3, 1, 1, rng);
}

ad::Var SpadeBlock::forward(const ad::Var& x, const ad::Var& modulation) const {
    if (x.value().dim(1) != modulation.value().dim(1) ||
        x.value().dim(2) != modulation.value().dim(2))
        throw std::invalid_argument("spade block: modulation spatial size " +
                                    modulation.value().shape_str() + " does not match features " +
                                    x.value().shape_str());
    ad::Var xn = ad::instance_norm(x, 1e-5f);
    ad::Var h = ad::relu(head_shared.forward(modulation));
    ad::Var gamma = head_gamma.forward(h);
    ad::Var beta = head_beta.forward(h);
    ad::Var y = ad::spatial_affine(xn, gamma, beta);
    return ad::leaky_relu(conv.forward(y), 0.2f);
}

AdainBlock::AdainBlock(ParamStore& ps, const std::string& name, int channels, int vector_dim,
                       Rng& rng) {
    const float stddev = 0.1f / std::sqrt(static_cast<float>(vector_dim));
    gamma_w = ps.param(name + ".gamma.w", normal_tensor({channels, vector_dim}, rng, stddev));
    gamma_b = ps.param(name + ".gamma.b", Tensor::full({channels}, 1.0f));
    beta_w = ps.param(name + ".beta.w", normal_tensor({channels, vector_dim}, rng, stddev));
    beta_b = ps.param(name + ".beta.b", Tensor::zeros({channels}));
    conv = Conv2d(ps, name + ".conv", channels, channels, 3, 1, 1, rng);
}

ad::Var AdainBlock::forward(const ad::Var& x, const ad::Var& vec) const {
    if (vec.value().ndim() != 1 || vec.value().dim(0) != gamma_w.value().dim(1))
        throw std::invalid_argument("adain block: conditioning vector has dimension " +
                                    vec.value().shape_str() + ", expected (" +
                                    std::to_string(gamma_w.value().dim(1)) + ")");
    ad::Var xn = ad::instance_norm(x, 1e-5f);
    ad::Var gamma = ad::linear(vec, gamma_w, gamma_b);
    ad::Var beta = ad::linear(vec, beta_w, beta_b);
    ad::Var y = ad::chan_affine(xn, gamma, beta);
    return ad::leaky_relu(conv.forward(y), 0.2f);
}

Encoder3::Encoder3(ParamStore& ps, const std::string& name, int cin, const ArchPreset& p,
                   Rng& rng) {
    c1 = Conv2d(ps, name + ".c1", cin, p.w1, 7, 1, 3, rng);
    c2 = Conv2d(ps, name + ".c2", p.w1, p.w2, 3, 2, 1, rng);
    c3 = Conv2d(ps, name + ".c3", p.w2, p.w3, 3, 2, 1, rng);
}

std::array<ad::Var, 3> Encoder3::forward(const ad::Var& x) const {
    ad::Var h1 = ad::relu(ad::instance_norm(c1.forward(x), 1e-5f));
    ad::Var h2 = ad::relu(ad::instance_norm(c2.forward(h1), 1e-5f));
    ad::Var h3 = ad::relu(ad::instance_norm(c3.forward(h2), 1e-5f));
    return {h1, h2, h3};
}

ad::Var downsample_flow(const ad::Var& flow) {
    return ad::scale(ad::avg_pool2(flow), 0.5f);
}

Generator::Generator(const ArchPreset& preset, std::uint64_t seed) : preset_(preset) {
    if (preset_.w3 != 4 * preset_.w2 || preset_.w2 != 4 * preset_.w1)
        throw ConfigError("architecture preset widths must follow the 1:4:16 pixel-shuffle ratio");
    Rng rng(seed);
    const int map_ch = 3 * (preset_.k + 1);
    flow_enc_ = Encoder3(params_, "f.enc", 6, preset_, rng);
    f_s1_ = SpadeBlock(params_, "f.s1", preset_.w3, map_ch, preset_.head_hidden, rng);
    f_s2_ = SpadeBlock(params_, "f.s2", preset_.w3, map_ch, preset_.head_hidden, rng);
    f_s3_ = SpadeBlock(params_, "f.s3", preset_.w3, map_ch, preset_.head_hidden, rng);
    f_s4_ = SpadeBlock(params_, "f.s4", preset_.w2, map_ch, preset_.head_hidden, rng);
    f_out_ = Conv2d(params_, "f.out", preset_.w1, 2, 7, 1, 3, rng);

    render_enc_ = Encoder3(params_, "r.enc", map_ch, preset_, rng);
    r_s3_ = SpadeBlock(params_, "r.s3", preset_.w3, preset_.w3, preset_.head_hidden, rng);
    r_a3_ = AdainBlock(params_, "r.a3", preset_.w3, preset_.audio_dim, rng);
    r_s2_ = SpadeBlock(params_, "r.s2", preset_.w2, preset_.w2, preset_.head_hidden, rng);
    r_a2_ = AdainBlock(params_, "r.a2", preset_.w2, preset_.audio_dim, rng);
    r_s1_ = SpadeBlock(params_, "r.s1", preset_.w1, preset_.w1, preset_.head_hidden, rng);
    r_a1_ = AdainBlock(params_, "r.a1", preset_.w1, preset_.audio_dim, rng);
    r_sref_ = SpadeBlock(params_, "r.sref", preset_.w1, 3, preset_.head_hidden, rng);
    r_out_ = Conv2d(params_, "r.out", preset_.w1, 3, 7, 1, 3, rng);
}

GeneratorOutput Generator::forward(const GeneratorInput& input, bool zero_flow,
                                   ShapeTrace* trace_flow, ShapeTrace* trace_render) {
    const int res = preset_.resolution;
    const int map_ch = 3 * (preset_.k + 1);
    const Tensor& dm = input.driving_maps.value();
    if (dm.ndim() != 3 || dm.dim(0) != map_ch || dm.dim(1) != res || dm.dim(2) != res)
        throw std::invalid_argument("generator: driving maps must be (" + std::to_string(map_ch) +
                                    "," + std::to_string(res) + "," + std::to_string(res) +
                                    "), got " + dm.shape_str());
    for (const ad::Var* v : {&input.reference_image, &input.reference_map}) {
        const Tensor& t = v->value();
        if (t.ndim() != 3 || t.dim(0) != 3 || t.dim(1) != res || t.dim(2) != res)
            throw std::invalid_argument("generator: reference image/map must be (3," +
                                        std::to_string(res) + "," + std::to_string(res) +
                                        "), got " + t.shape_str());
    }
    if (input.audio.value().ndim() != 1 || input.audio.value().dim(0) != preset_.audio_dim)
        throw std::invalid_argument("generator: audio feature must have dimension " +
                                    std::to_string(preset_.audio_dim) + ", got " +
                                    input.audio.value().shape_str());

    // Driving maps at the three spatial scales (SPADE modulation inputs).
    ad::Var mod1 = input.driving_maps;
    ad::Var mod2 = ad::avg_pool2(mod1);
    ad::Var mod3 = ad::avg_pool2(mod2);

    // Dense flow network F.
    ad::Var enc_in = ad::concat_ch({input.reference_image, input.reference_map});
    trace_push(trace_flow, enc_in);
    auto [h1, h2, h3] = flow_enc_.forward(enc_in);
    trace_push(trace_flow, h1);
    trace_push(trace_flow, h2);
    trace_push(trace_flow, h3);

    ad::Var flow;
    if (zero_flow && trace_flow == nullptr) {
        flow = ad::Var::constant(Tensor::zeros({2, res, res}));
    } else {
        ad::Var d = f_s1_.forward(h3, mod3);
        trace_push(trace_flow, d);
        d = f_s2_.forward(d, mod3);
        trace_push(trace_flow, d);
        d = f_s3_.forward(d, mod3);
        trace_push(trace_flow, d);
        d = ad::pixel_shuffle(d, 2);
        trace_push(trace_flow, d);
        d = f_s4_.forward(d, mod2);
        trace_push(trace_flow, d);
        d = ad::pixel_shuffle(d, 2);
        trace_push(trace_flow, d);
        flow = f_out_.forward(d);
        trace_push(trace_flow, flow);
        if (zero_flow) flow = ad::Var::constant(Tensor::zeros({2, res, res}));
    }

    GeneratorOutput out;
    out.flow = flow;
    ad::Var flow2 = downsample_flow(flow);
    ad::Var flow3 = downsample_flow(flow2);
    out.warped_h1 = ad::bilinear_warp(h1, flow);
    out.warped_h2 = ad::bilinear_warp(h2, flow2);
    out.warped_h3 = ad::bilinear_warp(h3, flow3);
    out.warped_reference = ad::bilinear_warp(input.reference_image, flow);

    // Rendering network R.
    trace_push(trace_render, input.driving_maps);
    auto [e1, e2, e3] = render_enc_.forward(input.driving_maps);
    trace_push(trace_render, e1);
    trace_push(trace_render, e2);
    trace_push(trace_render, e3);
    ad::Var d = r_s3_.forward(e3, out.warped_h3);
    trace_push(trace_render, d);
    d = r_a3_.forward(d, input.audio);
    trace_push(trace_render, d);
    d = ad::pixel_shuffle(d, 2);
    trace_push(trace_render, d);
    d = r_s2_.forward(d, out.warped_h2);
    trace_push(trace_render, d);
    d = r_a2_.forward(d, input.audio);
    trace_push(trace_render, d);
    d = ad::pixel_shuffle(d, 2);
    trace_push(trace_render, d);
    d = r_s1_.forward(d, out.warped_h1);
    trace_push(trace_render, d);
    d = r_a1_.forward(d, input.audio);
    trace_push(trace_render, d);
    d = r_sref_.forward(d, out.warped_reference);
    trace_push(trace_render, d);
    out.frame = ad::tanh_act(r_out_.forward(ad::leaky_relu(d, 0.2f)));
    trace_push(trace_render, out.frame);
    return out;
}

PatchDiscriminator::PatchDiscriminator(ParamStore& ps, const std::string& name, int cin, int base,
                                       int input_size, Rng& rng) {
    int depth = 0;
    for (int s = input_size; s >= 8 && depth < 4; s /= 2) ++depth;
    if (depth < 1) depth = 1;
    int c = cin;
    int width = base;
    for (int i = 0; i < depth; ++i) {
        convs_.emplace_back(ps, name + ".c" + std::to_string(i), c, width, 4, 2, 1, rng);
        c = width;
        if (width < 8 * base) width *= 2;
    }
    head_ = SpectralConv2d(ps, name + ".head", c, 1, 4, 1, 1, rng);
}

DiscOutput PatchDiscriminator::forward(const ad::Var& x) const {
    DiscOutput out;
    ad::Var h = x;
    for (const auto& conv : convs_) {
        h = ad::leaky_relu(conv.forward(h), 0.2f);
        out.features.push_back(h);
    }
    out.score = head_.forward(h);
    return out;
}

DiscriminatorPair::DiscriminatorPair(const ArchPreset& preset, std::uint64_t seed)
    : preset_(preset) {
    Rng rng(seed);
    d_ = PatchDiscriminator(params_, "d", 6, preset_.disc_base, preset_.resolution, rng);
    dm_ = PatchDiscriminator(params_, "dm", 3 + preset_.audio_dim, preset_.disc_base,
                             preset_.mouth_size, rng);
}

DiscOutput DiscriminatorPair::frame_disc(const ad::Var& face_map, const ad::Var& frame) const {
    if (!face_map.value().same_shape(frame.value()))
        throw std::invalid_argument("frame discriminator: map/frame shape mismatch");
    return d_.forward(ad::concat_ch({face_map, frame}));
}

DiscOutput DiscriminatorPair::mouth_disc(const ad::Var& audio, const ad::Var& mouth_crop) const {
    const Tensor& c = mouth_crop.value();
    if (c.ndim() != 3 || c.dim(0) != 3 || c.dim(1) != preset_.mouth_size ||
        c.dim(2) != preset_.mouth_size)
        throw std::invalid_argument("mouth discriminator: crop must be (3," +
                                    std::to_string(preset_.mouth_size) + "," +
                                    std::to_string(preset_.mouth_size) + "), got " + c.shape_str());
    ad::Var tiled = ad::tile_vector(audio, preset_.mouth_size, preset_.mouth_size);
    return dm_.forward(ad::concat_ch({mouth_crop, tiled}));
}

}  // namespace headgan::nn
