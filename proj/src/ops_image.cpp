#include <cmath>
#include <stdexcept>

#include "headgan/autodiff.hpp"

namespace headgan::ad {

namespace {
void require_chw(const Var& x, const char* op) {
    if (x.value().ndim() != 3)
        throw std::invalid_argument(std::string(op) + ": expected (C,H,W), got " +
                                    x.value().shape_str());
}
}  // namespace

Var instance_norm(const Var& x, float eps) {
    require_chw(x, "instance_norm");
    const Tensor& xv = x.value();
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int hw = h * w;
    std::vector<float> mean(c), inv(c);
    Tensor out(xv.shape());
    for (int ci = 0; ci < c; ++ci) {
        const float* src = xv.data() + static_cast<std::size_t>(ci) * hw;
        double m = 0.0;
        for (int i = 0; i < hw; ++i) m += src[i];
        m /= hw;
        double var = 0.0;
        for (int i = 0; i < hw; ++i) {
            const double d = src[i] - m;
            var += d * d;
        }
        var /= hw;  // biased
        mean[ci] = static_cast<float>(m);
        inv[ci] = static_cast<float>(1.0 / std::sqrt(var + eps));
        float* dst = out.data() + static_cast<std::size_t>(ci) * hw;
        for (int i = 0; i < hw; ++i) dst[i] = (src[i] - mean[ci]) * inv[ci];
    }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x}, [xn, mean, inv, c, hw](Node& self) {
        Tensor& gx = ensure_grad(*xn);
        for (int ci = 0; ci < c; ++ci) {
            const float* src = xn->value.data() + static_cast<std::size_t>(ci) * hw;
            const float* g = self.grad.data() + static_cast<std::size_t>(ci) * hw;
            float* dst = gx.data() + static_cast<std::size_t>(ci) * hw;
            const float m = mean[ci], iv = inv[ci];
            double gsum = 0.0, gxhat = 0.0;
            for (int i = 0; i < hw; ++i) {
                const float xh = (src[i] - m) * iv;
                gsum += g[i];
                gxhat += static_cast<double>(g[i]) * xh;
            }
            const float gm = static_cast<float>(gsum / hw);
            const float gxh = static_cast<float>(gxhat / hw);
            for (int i = 0; i < hw; ++i) {
                const float xh = (src[i] - m) * iv;
                dst[i] += iv * (g[i] - gm - xh * gxh);
            }
        }
    }));
}

Var chan_affine(const Var& x, const Var& gamma, const Var& beta) {
    require_chw(x, "chan_affine");
    const Tensor& xv = x.value();
    const int c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
    if (gamma.value().numel() != static_cast<std::int64_t>(c) ||
        beta.value().numel() != static_cast<std::int64_t>(c))
        throw std::invalid_argument("chan_affine: gamma/beta must have C entries");
    Tensor out(xv.shape());
    for (int ci = 0; ci < c; ++ci) {
        const float g = gamma.value()[static_cast<std::size_t>(ci)];
        const float b = beta.value()[static_cast<std::size_t>(ci)];
        const float* src = xv.data() + static_cast<std::size_t>(ci) * hw;
        float* dst = out.data() + static_cast<std::size_t>(ci) * hw;
        for (int i = 0; i < hw; ++i) dst[i] = src[i] * g + b;
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Var(make_node(std::move(out), {x, gamma, beta}, [xn, gn, bn, c, hw](Node& self) {
        for (int ci = 0; ci < c; ++ci) {
            const float* g = self.grad.data() + static_cast<std::size_t>(ci) * hw;
            const float* src = xn->value.data() + static_cast<std::size_t>(ci) * hw;
            if (xn->requires_grad) {
                float* dst = ensure_grad(*xn).data() + static_cast<std::size_t>(ci) * hw;
                const float ga = gn->value[static_cast<std::size_t>(ci)];
                for (int i = 0; i < hw; ++i) dst[i] += g[i] * ga;
            }
            if (gn->requires_grad) {
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) acc += static_cast<double>(g[i]) * src[i];
                ensure_grad(*gn)[static_cast<std::size_t>(ci)] += static_cast<float>(acc);
            }
            if (bn->requires_grad) {
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) acc += g[i];
                ensure_grad(*bn)[static_cast<std::size_t>(ci)] += static_cast<float>(acc);
            }
        }
    }));
}

Var spatial_affine(const Var& x, const Var& gamma, const Var& beta) {
    require_chw(x, "spatial_affine");
    if (!x.value().same_shape(gamma.value()) || !x.value().same_shape(beta.value()))
        throw std::invalid_argument("spatial_affine: gamma/beta must match x shape");
    const std::size_t n = x.value().numel();
    Tensor out(x.value().shape());
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x.value()[i] * gamma.value()[i] + beta.value()[i];
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return Var(make_node(std::move(out), {x, gamma, beta}, [xn, gn, bn, n](Node& self) {
        if (xn->requires_grad) {
            Tensor& gx = ensure_grad(*xn);
            for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[i] * gn->value[i];
        }
        if (gn->requires_grad) {
            Tensor& gg = ensure_grad(*gn);
            for (std::size_t i = 0; i < n; ++i) gg[i] += self.grad[i] * xn->value[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = ensure_grad(*bn);
            for (std::size_t i = 0; i < n; ++i) gb[i] += self.grad[i];
        }
    }));
}

Var pixel_shuffle(const Var& x, int r) {
    require_chw(x, "pixel_shuffle");
    const Tensor& xv = x.value();
    const int cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (cin % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int cout = cin / (r * r);
    Tensor out({cout, h * r, w * r});
    for (int c = 0; c < cout; ++c)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ci = c * r * r + dy * r + dx;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        out.at(c, y * r + dy, xx * r + dx) = xv.at(ci, y, xx);
            }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x}, [xn, r, cout, h, w](Node& self) {
        Tensor& gx = ensure_grad(*xn);
        for (int c = 0; c < cout; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int ci = c * r * r + dy * r + dx;
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx)
                            gx.at(ci, y, xx) += self.grad.at(c, y * r + dy, xx * r + dx);
                }
    }));
}

Var avg_pool2(const Var& x) {
    require_chw(x, "avg_pool2");
    const Tensor& xv = x.value();
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("avg_pool2: spatial dims must be even, got " + xv.shape_str());
    Tensor out({c, h / 2, w / 2});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h / 2; ++y)
            for (int xx = 0; xx < w / 2; ++xx)
                out.at(ci, y, xx) = 0.25f * (xv.at(ci, 2 * y, 2 * xx) + xv.at(ci, 2 * y, 2 * xx + 1) +
                                             xv.at(ci, 2 * y + 1, 2 * xx) +
                                             xv.at(ci, 2 * y + 1, 2 * xx + 1));
    auto xn = x.node();
    return Var(make_node(std::move(out), {x}, [xn, c, h, w](Node& self) {
        Tensor& gx = ensure_grad(*xn);
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h / 2; ++y)
                for (int xx = 0; xx < w / 2; ++xx) {
                    const float g = 0.25f * self.grad.at(ci, y, xx);
                    gx.at(ci, 2 * y, 2 * xx) += g;
                    gx.at(ci, 2 * y, 2 * xx + 1) += g;
                    gx.at(ci, 2 * y + 1, 2 * xx) += g;
                    gx.at(ci, 2 * y + 1, 2 * xx + 1) += g;
                }
    }));
}

Var bilinear_warp(const Var& x, const Var& flow) {
    require_chw(x, "bilinear_warp");
    const Tensor& xv = x.value();
    const Tensor& fv = flow.value();
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (fv.ndim() != 3 || fv.dim(0) != 2 || fv.dim(1) != h || fv.dim(2) != w)
        throw std::invalid_argument("bilinear_warp: flow must be (2," + std::to_string(h) + "," +
                                    std::to_string(w) + "), got " + fv.shape_str());
    Tensor out({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            float sx = xx + fv.at(0, y, xx);
            float sy = y + fv.at(1, y, xx);
            if (sx < 0.0f) sx = 0.0f;
            if (sx > w - 1.0f) sx = w - 1.0f;
            if (sy < 0.0f) sy = 0.0f;
            if (sy > h - 1.0f) sy = h - 1.0f;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const float fx = sx - x0, fy = sy - y0;
            for (int ci = 0; ci < c; ++ci) {
                const float v00 = xv.at(ci, y0, x0), v01 = xv.at(ci, y0, x1);
                const float v10 = xv.at(ci, y1, x0), v11 = xv.at(ci, y1, x1);
                out.at(ci, y, xx) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                    fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    auto xn = x.node(), fn = flow.node();
    return Var(make_node(std::move(out), {x, flow}, [xn, fn, c, h, w](Node& self) {
        Tensor* gx = xn->requires_grad ? &ensure_grad(*xn) : nullptr;
        Tensor* gf = fn->requires_grad ? &ensure_grad(*fn) : nullptr;
        const Tensor& xv2 = xn->value;
        const Tensor& fv2 = fn->value;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                float sx = xx + fv2.at(0, y, xx);
                float sy = y + fv2.at(1, y, xx);
                const bool sat_x = sx < 0.0f || sx > w - 1.0f;
                const bool sat_y = sy < 0.0f || sy > h - 1.0f;
                if (sx < 0.0f) sx = 0.0f;
                if (sx > w - 1.0f) sx = w - 1.0f;
                if (sy < 0.0f) sy = 0.0f;
                if (sy > h - 1.0f) sy = h - 1.0f;
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const int x1 = std::min(x0 + 1, w - 1);
                const int y1 = std::min(y0 + 1, h - 1);
                const float fx = sx - x0, fy = sy - y0;
                float dfx = 0.0f, dfy = 0.0f;
                for (int ci = 0; ci < c; ++ci) {
                    const float g = self.grad.at(ci, y, xx);
                    if (g == 0.0f && gf == nullptr) continue;
                    const float v00 = xv2.at(ci, y0, x0), v01 = xv2.at(ci, y0, x1);
                    const float v10 = xv2.at(ci, y1, x0), v11 = xv2.at(ci, y1, x1);
                    if (gx) {
                        gx->at(ci, y0, x0) += g * (1 - fy) * (1 - fx);
                        gx->at(ci, y0, x1) += g * (1 - fy) * fx;
                        gx->at(ci, y1, x0) += g * fy * (1 - fx);
                        gx->at(ci, y1, x1) += g * fy * fx;
                    }
                    dfx += g * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                    dfy += g * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                if (gf) {
                    if (!sat_x) gf->at(0, y, xx) += dfx;
                    if (!sat_y) gf->at(1, y, xx) += dfy;
                }
            }
    }));
}

Var concat_ch(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_ch: no inputs");
    const int h = parts[0].value().dim(1), w = parts[0].value().dim(2);
    int ctotal = 0;
    for (const auto& p : parts) {
        require_chw(p, "concat_ch");
        if (p.value().dim(1) != h || p.value().dim(2) != w)
            throw std::invalid_argument("concat_ch: spatial mismatch " + p.value().shape_str());
        ctotal += p.value().dim(0);
    }
    Tensor out({ctotal, h, w});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t n = p.value().numel();
        std::copy(p.value().data(), p.value().data() + n, out.data() + off);
        off += n;
    }
    std::vector<std::shared_ptr<Node>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.node());
    return Var(make_node(std::move(out), parts, [nodes](Node& self) {
        std::size_t off2 = 0;
        for (const auto& pn : nodes) {
            const std::size_t n = pn->value.numel();
            if (pn->requires_grad) {
                Tensor& gp = ensure_grad(*pn);
                for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[off2 + i];
            }
            off2 += n;
        }
    }));
}

Var crop(const Var& x, int y0, int x0, int h, int w) {
    require_chw(x, "crop");
    const Tensor& xv = x.value();
    const int c = xv.dim(0);
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > xv.dim(1) || x0 + w > xv.dim(2))
        throw std::invalid_argument("crop: window out of bounds for " + xv.shape_str());
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(ci, y, xx) = xv.at(ci, y0 + y, x0 + xx);
    auto xn = x.node();
    return Var(make_node(std::move(out), {x}, [xn, y0, x0, h, w, c](Node& self) {
        Tensor& gx = ensure_grad(*xn);
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    gx.at(ci, y0 + y, x0 + xx) += self.grad.at(ci, y, xx);
    }));
}

Var tile_vector(const Var& v, int h, int w) {
    if (v.value().ndim() != 1) throw std::invalid_argument("tile_vector: expected 1-D input");
    const int d = v.value().dim(0);
    Tensor out({d, h, w});
    for (int c = 0; c < d; ++c) {
        const float val = v.value()[static_cast<std::size_t>(c)];
        float* dst = out.data() + static_cast<std::size_t>(c) * h * w;
        for (int i = 0; i < h * w; ++i) dst[i] = val;
    }
    auto vn = v.node();
    return Var(make_node(std::move(out), {v}, [vn, d, h, w](Node& self) {
        Tensor& gv = ensure_grad(*vn);
        for (int c = 0; c < d; ++c) {
            const float* src = self.grad.data() + static_cast<std::size_t>(c) * h * w;
            double acc = 0.0;
            for (int i = 0; i < h * w; ++i) acc += src[i];
            gv[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
    }));
}

}  // namespace headgan::ad
