#include "headgan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace headgan::ad {

namespace {
thread_local std::int64_t g_order_counter = 0;
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var::Var(Tensor value, bool requires_grad) : n_(std::make_shared<Node>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
    n_->order = ++g_order_counter;
}

Tensor& Var::grad() {
    if (!n_) throw std::logic_error("grad() on undefined Var");
    return ensure_grad(*n_);
}

void Var::zero_grad() {
    if (n_) n_->grad = Tensor();
}

float Var::scalar() const {
    if (!n_ || n_->value.numel() != 1) throw std::logic_error("scalar() needs a 1-element Var");
    return n_->value[0];
}

Var Var::detach() const {
    if (!n_) return Var();
    return Var(n_->value, false);
}

Tensor& ensure_grad(Node& n) {
    if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

std::shared_ptr<Node> make_node(Tensor value, std::vector<Var> parents,
                                std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->order = ++g_order_counter;
    bool track = g_grad_enabled;
    if (track) {
        bool any = false;
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) any = true;
        track = any;
    }
    if (track) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents)
            if (p.defined()) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void backward(const Var& root) {
    if (!root.defined()) throw std::logic_error("backward() on undefined Var");
    if (root.value().numel() != 1) throw std::logic_error("backward() root must be scalar");
    Node* top = root.node().get();
    if (!top->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{top};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->order > b->order; });

    ensure_grad(*top).fill(1.0f);
    for (Node* n : order) {
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
}

// ---------------- elementwise ----------------

namespace {
void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}
}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var(make_node(std::move(out), {a, b}, [an, bn](Node& self) {
        const std::size_t m = self.grad.numel();
        if (an->requires_grad) {
            Tensor& ga = ensure_grad(*an);
            for (std::size_t i = 0; i < m; ++i) ga[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = ensure_grad(*bn);
            for (std::size_t i = 0; i < m; ++i) gb[i] += self.grad[i];
        }
    }));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var(make_node(std::move(out), {a, b}, [an, bn](Node& self) {
        const std::size_t m = self.grad.numel();
        if (an->requires_grad) {
            Tensor& ga = ensure_grad(*an);
            for (std::size_t i = 0; i < m; ++i) ga[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = ensure_grad(*bn);
            for (std::size_t i = 0; i < m; ++i) gb[i] -= self.grad[i];
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node(), bn = b.node();
    return Var(make_node(std::move(out), {a, b}, [an, bn](Node& self) {
        const std::size_t m = self.grad.numel();
        if (an->requires_grad) {
            Tensor& ga = ensure_grad(*an);
            for (std::size_t i = 0; i < m; ++i) ga[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = ensure_grad(*bn);
            for (std::size_t i = 0; i < m; ++i) gb[i] += self.grad[i] * an->value[i];
        }
    }));
}

Var affine(const Var& a, float s, float shift) {
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = s * a.value()[i] + shift;
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an, s](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const std::size_t m = self.grad.numel();
        for (std::size_t i = 0; i < m; ++i) ga[i] += s * self.grad[i];
    }));
}

Var relu(const Var& a) {
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] > 0.0f ? a.value()[i] : 0.0f;
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const std::size_t m = self.grad.numel();
        for (std::size_t i = 0; i < m; ++i)
            if (an->value[i] > 0.0f) ga[i] += self.grad[i];
    }));
}

Var leaky_relu(const Var& a, float slope) {
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const float v = a.value()[i];
        out[i] = v > 0.0f ? v : slope * v;
    }
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an, slope](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const std::size_t m = self.grad.numel();
        for (std::size_t i = 0; i < m; ++i)
            ga[i] += (an->value[i] > 0.0f ? 1.0f : slope) * self.grad[i];
    }));
}

Var tanh_act(const Var& a) {
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a.value()[i]);
    auto an = a.node();
    auto nn = make_node(std::move(out), {a}, nullptr);
    Node* raw = nn.get();
    if (nn->requires_grad)
        nn->backward_fn = [an, raw](Node& self) {
            Tensor& ga = ensure_grad(*an);
            const std::size_t m = self.grad.numel();
            for (std::size_t i = 0; i < m; ++i) {
                const float y = raw->value[i];
                ga[i] += (1.0f - y * y) * self.grad[i];
            }
        };
    return Var(nn);
}

Var abs_act(const Var& a) {
    Tensor out(a.value().shape());
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a.value()[i]);
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const std::size_t m = self.grad.numel();
        for (std::size_t i = 0; i < m; ++i) {
            const float v = an->value[i];
            ga[i] += (v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f)) * self.grad[i];
        }
    }));
}

Var mean_all(const Var& a) {
    const std::size_t n = a.value().numel();
    if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a.value()[i]);
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an, n](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const float g = self.grad[0] / static_cast<float>(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    }));
}

Var sum_all(const Var& a) {
    const std::size_t n = a.value().numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a.value()[i]);
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    auto an = a.node();
    return Var(make_node(std::move(out), {a}, [an, n](Node& self) {
        Tensor& ga = ensure_grad(*an);
        const float g = self.grad[0];
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    }));
}

}  // namespace headgan::ad
