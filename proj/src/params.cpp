#include "headgan/params.hpp"

#include <cmath>
#include <stdexcept>

#include "headgan/errors.hpp"

namespace headgan::nn {

ad::Var ParamStore::param(const std::string& name, Tensor init) {
    if (param_index_.count(name))
        throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
    ad::Var v = ad::Var::param(std::move(init));
    param_index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
}

std::shared_ptr<Tensor> ParamStore::buffer(const std::string& name, Tensor init) {
    if (buffer_index_.count(name))
        throw std::logic_error("ParamStore: duplicate buffer '" + name + "'");
    auto t = std::make_shared<Tensor>(std::move(init));
    buffer_index_[name] = buffers_.size();
    buffers_.emplace_back(name, t);
    return t;
}

ad::Var ParamStore::get(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end())
        throw std::logic_error("ParamStore: unknown parameter '" + name + "'");
    return params_[it->second].second;
}

std::size_t ParamStore::total_numel() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v.value().numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : params_) {
        ad::Var vv = v;
        vv.zero_grad();
    }
}

void ParamStore::save(ArrayFile& file, const std::string& prefix) const {
    for (const auto& [name, v] : params_) file.put(prefix + name, v.value());
    for (const auto& [name, t] : buffers_) file.put(prefix + "buf." + name, *t);
}

void ParamStore::load(const ArrayFile& file, const std::string& prefix) {
    for (auto& [name, v] : params_) {
        const Tensor t = file.tensor(prefix + name);
        if (!t.same_shape(v.value()))
            throw DataError("parameter '" + name + "' shape mismatch: stored " + t.shape_str() +
                            ", model " + v.value().shape_str());
        ad::Var vv = v;
        vv.value_mut() = t;
    }
    for (auto& [name, t] : buffers_) {
        const Tensor s = file.tensor(prefix + "buf." + name);
        if (!s.same_shape(*t))
            throw DataError("buffer '" + name + "' shape mismatch: stored " + s.shape_str() +
                            ", model " + t->shape_str());
        *t = s;
    }
}

Adam::Adam(ParamStore& store, float lr, float beta1, float beta2, float eps)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, v] : store_.params()) {
        m_.push_back(Tensor::zeros(v.value().shape()));
        v_.push_back(Tensor::zeros(v.value().shape()));
    }
}

void Adam::step() {
    ++step_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(step_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(step_));
    for (std::size_t pi = 0; pi < store_.params().size(); ++pi) {
        ad::Var v = store_.params()[pi].second;
        if (!v.has_grad()) continue;
        const Tensor& g = v.grad();
        Tensor& m = m_[pi];
        Tensor& vv = v_[pi];
        Tensor& w = v.value_mut();
        const std::size_t n = w.numel();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
            vv[i] = beta2_ * vv[i] + (1.0f - beta2_) * g[i] * g[i];
            const float mh = m[i] / bc1;
            const float vh = vv[i] / bc2;
            w[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::save(ArrayFile& file, const std::string& prefix) const {
    file.put_scalar_i32(prefix + "step", static_cast<std::int32_t>(step_));
    for (std::size_t pi = 0; pi < store_.params().size(); ++pi) {
        const std::string& name = store_.params()[pi].first;
        file.put(prefix + "m." + name, m_[pi]);
        file.put(prefix + "v." + name, v_[pi]);
    }
}

void Adam::load(const ArrayFile& file, const std::string& prefix) {
    step_ = file.scalar_i32(prefix + "step");
    for (std::size_t pi = 0; pi < store_.params().size(); ++pi) {
        const std::string& name = store_.params()[pi].first;
        Tensor m = file.tensor(prefix + "m." + name);
        Tensor v = file.tensor(prefix + "v." + name);
        if (!m.same_shape(m_[pi]) || !v.same_shape(v_[pi]))
            throw DataError("optimizer state shape mismatch for '" + name + "'");
        m_[pi] = std::move(m);
        v_[pi] = std::move(v);
    }
}

}  // namespace headgan::nn
