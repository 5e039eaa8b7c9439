#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "headgan/autodiff.hpp"

namespace headgan::ad {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fills `col` (Cin*K*K x block_cols) for output rows [oy0, oy1).
void im2col_block(const Tensor& x, int k, int stride, int pad, int wo, int oy0, int oy1,
                  MatRM& col) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int bc = (oy1 - oy0) * wo;
    col.resize(cin * k * k, bc);
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                float* dst = col.data() + static_cast<std::ptrdiff_t>(row) * bc;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    const bool y_ok = iy >= 0 && iy < h;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        *dst++ = (y_ok && ix >= 0 && ix < w) ? x.at(c, iy, ix) : 0.0f;
                    }
                }
            }
        }
    }
}

// Scatter-adds a col-shaped gradient block back into gx.
void col2im_block(const MatRM& gcol, int k, int stride, int pad, int wo, int oy0, int oy1,
                  Tensor& gx) {
    const int cin = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
    const int bc = (oy1 - oy0) * wo;
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                const float* src = gcol.data() + static_cast<std::ptrdiff_t>(row) * bc;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        src += wo;
                        continue;
                    }
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) gx.at(c, iy, ix) += src[ox];
                    }
                    src += wo;
                }
            }
        }
    }
}

int rows_per_block(int cin_kk, int wo, int ho) {
    const std::int64_t budget = 32LL * 1024 * 1024;  // floats per col block
    std::int64_t rows = budget / (static_cast<std::int64_t>(cin_kk) * wo);
    if (rows < 1) rows = 1;
    if (rows > ho) rows = ho;
    return static_cast<int>(rows);
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.ndim() != 3 || wv.ndim() != 4 || bv.ndim() != 1)
        throw std::invalid_argument("conv2d: expected x(C,H,W), w(O,C,K,K), b(O)");
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int cout = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != cin || wv.dim(3) != k || bv.dim(0) != cout)
        throw std::invalid_argument("conv2d: weight/bias shape mismatch for input " +
                                    xv.shape_str() + " vs " + wv.shape_str());
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

    Tensor out({cout, ho, wo});
    const int ckk = cin * k * k;
    Eigen::Map<const MatRM> wmat(wv.data(), cout, ckk);
    const int rb = rows_per_block(ckk, wo, ho);
    MatRM col;
    for (int oy0 = 0; oy0 < ho; oy0 += rb) {
        const int oy1 = std::min(oy0 + rb, ho);
        im2col_block(xv, k, stride, pad, wo, oy0, oy1, col);
        MatRM y = wmat * col;  // (cout x block_cols)
        const int bc = (oy1 - oy0) * wo;
        for (int o = 0; o < cout; ++o) {
            float* dst = out.data() + (static_cast<std::size_t>(o) * ho + oy0) * wo;
            const float* src = y.data() + static_cast<std::ptrdiff_t>(o) * bc;
            const float bias = bv[static_cast<std::size_t>(o)];
            for (int i = 0; i < bc; ++i) dst[i] = src[i] + bias;
        }
    }

    auto xn = x.node(), wn = w.node(), bn = b.node();
    return Var(make_node(std::move(out), {x, w, b},
                         [xn, wn, bn, stride, pad, k, ho, wo, ckk, cout](Node& self) {
        const Tensor& xv2 = xn->value;
        Eigen::Map<const MatRM> wmat2(wn->value.data(), cout, ckk);
        const int rb2 = rows_per_block(ckk, wo, ho);
        MatRM col2;
        const bool need_x = xn->requires_grad;
        const bool need_w = wn->requires_grad;
        const bool need_b = bn->requires_grad;
        Tensor* gx = need_x ? &ensure_grad(*xn) : nullptr;
        Tensor* gw = need_w ? &ensure_grad(*wn) : nullptr;
        Tensor* gb = need_b ? &ensure_grad(*bn) : nullptr;
        Eigen::Map<MatRM> gwmat(need_w ? gw->data() : nullptr, need_w ? cout : 0,
                                need_w ? ckk : 0);
        for (int oy0 = 0; oy0 < ho; oy0 += rb2) {
            const int oy1 = std::min(oy0 + rb2, ho);
            const int bc = (oy1 - oy0) * wo;
            MatRM gy(cout, bc);
            for (int o = 0; o < cout; ++o) {
                const float* src = self.grad.data() + (static_cast<std::size_t>(o) * ho + oy0) * wo;
                std::copy(src, src + bc, gy.data() + static_cast<std::ptrdiff_t>(o) * bc);
            }
            if (need_b)
                for (int o = 0; o < cout; ++o)
                    (*gb)[static_cast<std::size_t>(o)] += gy.row(o).sum();
            if (need_w || need_x) {
                im2col_block(xv2, k, stride, pad, wo, oy0, oy1, col2);
                if (need_w) gwmat.noalias() += gy * col2.transpose();
                if (need_x) {
                    MatRM gcol = wmat2.transpose() * gy;
                    col2im_block(gcol, k, stride, pad, wo, oy0, oy1, *gx);
                }
            }
        }
    }));
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.ndim() != 1 || wv.ndim() != 2 || bv.ndim() != 1)
        throw std::invalid_argument("linear: expected x(I), w(O,I), b(O)");
    const int in = xv.dim(0), outn = wv.dim(0);
    if (wv.dim(1) != in || bv.dim(0) != outn)
        throw std::invalid_argument("linear: weight/bias shape mismatch for input " +
                                    xv.shape_str());
    Tensor out({outn});
    for (int o = 0; o < outn; ++o) {
        double acc = bv[static_cast<std::size_t>(o)];
        const float* row = wv.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * xv[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(o)] = static_cast<float>(acc);
    }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return Var(make_node(std::move(out), {x, w, b}, [xn, wn, bn, in, outn](Node& self) {
        if (bn->requires_grad) {
            Tensor& gb = ensure_grad(*bn);
            for (int o = 0; o < outn; ++o) gb[static_cast<std::size_t>(o)] += self.grad[static_cast<std::size_t>(o)];
        }
        if (wn->requires_grad) {
            Tensor& gw = ensure_grad(*wn);
            for (int o = 0; o < outn; ++o) {
                const float g = self.grad[static_cast<std::size_t>(o)];
                float* row = gw.data() + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) row[i] += g * xn->value[static_cast<std::size_t>(i)];
            }
        }
        if (xn->requires_grad) {
            Tensor& gx = ensure_grad(*xn);
            for (int o = 0; o < outn; ++o) {
                const float g = self.grad[static_cast<std::size_t>(o)];
                const float* row = wn->value.data() + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) gx[static_cast<std::size_t>(i)] += g * row[i];
            }
        }
    }));
}

Var spectral_scale(const Var& w, const Tensor& u, const Tensor& v) {
    const Tensor& wv = w.value();
    const int rows = wv.dim(0);
    const int cols = static_cast<int>(wv.numel()) / rows;
    if (u.numel() != static_cast<std::int64_t>(rows) || v.numel() != static_cast<std::int64_t>(cols))
        throw std::invalid_argument("spectral_scale: u/v size mismatch");
    double sigma = 0.0;
    for (int i = 0; i < rows; ++i) {
        double dot = 0.0;
        const float* row = wv.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) dot += static_cast<double>(row[j]) * v[static_cast<std::size_t>(j)];
        sigma += static_cast<double>(u[static_cast<std::size_t>(i)]) * dot;
    }
    if (sigma < 1e-12) sigma = 1e-12;
    const float inv = static_cast<float>(1.0 / sigma);
    Tensor out(wv.shape());
    const std::size_t n = wv.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = wv[i] * inv;
    auto wn = w.node();
    Tensor uc = u, vc = v;
    return Var(make_node(std::move(out), {w}, [wn, uc, vc, inv, rows, cols](Node& self) {
        Tensor& gw = ensure_grad(*wn);
        const std::size_t n2 = gw.numel();
        double inner = 0.0;  // sum(g * W)
        for (std::size_t i = 0; i < n2; ++i)
            inner += static_cast<double>(self.grad[i]) * wn->value[i];
        const float c = static_cast<float>(inner) * inv * inv;
        for (int i = 0; i < rows; ++i) {
            float* grow = gw.data() + static_cast<std::size_t>(i) * cols;
            const float* srow = self.grad.data() + static_cast<std::size_t>(i) * cols;
            const float ui = uc[static_cast<std::size_t>(i)];
            for (int j = 0; j < cols; ++j)
                grow[j] += srow[j] * inv - c * ui * vc[static_cast<std::size_t>(j)];
        }
    }));
}

}  // namespace headgan::ad
