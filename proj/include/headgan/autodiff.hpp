#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "headgan/tensor.hpp"

namespace headgan::ad {

/// One tape entry of the define-by-run graph. Nodes are created by ops,
/// owned by shared_ptr from their consumers, and freed when the last Var
/// referencing the subgraph goes away.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::int64_t order = 0;  // creation index; backward runs in descending order
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

/// Handle to a graph node with value semantics (copies share the node).
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    static Var constant(Tensor value) { return Var(std::move(value), false); }
    static Var param(Tensor value) { return Var(std::move(value), true); }
    static Var scalar_const(float v) { return Var(Tensor::scalar(v), false); }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    Tensor& value_mut() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }

    bool has_grad() const { return n_ && n_->grad.defined(); }
    Tensor& grad();             // allocates zeros on demand
    void zero_grad();           // drops the accumulated gradient
    float scalar() const;       // value of a 1-element tensor

    Var detach() const;         // same value, no history

    std::shared_ptr<Node> node() const { return n_; }
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

private:
    std::shared_ptr<Node> n_;
};

/// Gradient recording is on by default and disabled per-thread by guard.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Reverse pass from a scalar root; accumulates into every reachable
/// node that requires a gradient. Deterministic: nodes run in descending
/// creation order.
void backward(const Var& root);

// ---- op helpers shared by the op implementations ----
std::shared_ptr<Node> make_node(Tensor value, std::vector<Var> parents,
                                std::function<void(Node&)> backward_fn);
Tensor& ensure_grad(Node& n);

// ---- elementwise & reductions ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& a, float scale, float shift);  // scale * a + shift
inline Var scale(const Var& a, float s) { return affine(a, s, 0.0f); }
inline Var neg(const Var& a) { return affine(a, -1.0f, 0.0f); }
Var relu(const Var& a);
Var leaky_relu(const Var& a, float slope);
Var tanh_act(const Var& a);
Var abs_act(const Var& a);
Var mean_all(const Var& a);
Var sum_all(const Var& a);

// ---- neural ops (CHW layout) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var linear(const Var& x, const Var& w, const Var& b);
Var instance_norm(const Var& x, float eps);
Var chan_affine(const Var& x, const Var& gamma, const Var& beta);     // per-channel
Var spatial_affine(const Var& x, const Var& gamma, const Var& beta);  // per-pixel
Var pixel_shuffle(const Var& x, int r);
Var avg_pool2(const Var& x);  // bilinear 2x downsample (even sizes)
Var bilinear_warp(const Var& x, const Var& flow);
Var concat_ch(const std::vector<Var>& parts);
Var crop(const Var& x, int y0, int x0, int h, int w);
Var tile_vector(const Var& v, int h, int w);

/// Weight divided by its top singular value estimate sigma = u^T W v.
/// u and v are power-iteration buffers handled by the caller.
Var spectral_scale(const Var& w, const Tensor& u, const Tensor& v);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace headgan::ad
