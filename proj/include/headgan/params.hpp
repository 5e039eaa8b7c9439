#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "headgan/autodiff.hpp"
#include "headgan/container.hpp"

namespace headgan::nn {

/// Registry of named trainable parameters and non-trainable buffers
/// (e.g. power-iteration vectors). Registration order is the canonical
/// iteration order for optimizers and serialization.
class ParamStore {
public:
    ad::Var param(const std::string& name, Tensor init);
    std::shared_ptr<Tensor> buffer(const std::string& name, Tensor init);

    bool has_param(const std::string& name) const { return param_index_.count(name) > 0; }
    ad::Var get(const std::string& name) const;

    const std::vector<std::pair<std::string, ad::Var>>& params() const { return params_; }
    const std::vector<std::pair<std::string, std::shared_ptr<Tensor>>>& buffers() const {
        return buffers_;
    }

    std::size_t total_numel() const;
    void zero_grad();

    /// Writes "<prefix><name>" entries; buffers get "<prefix>buf.<name>".
    void save(ArrayFile& file, const std::string& prefix) const;
    /// Loads values into already-registered params/buffers; shape mismatch
    /// or missing entries raise DataError.
    void load(const ArrayFile& file, const std::string& prefix);

private:
    std::vector<std::pair<std::string, ad::Var>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<Tensor>>> buffers_;
    std::unordered_map<std::string, std::size_t> param_index_;
    std::unordered_map<std::string, std::size_t> buffer_index_;
};

/// Adam with bias correction; state (m, v, step) is serializable so a
/// resumed run continues the unbroken trajectory exactly.
class Adam {
public:
    Adam(ParamStore& store, float lr, float beta1 = 0.5f, float beta2 = 0.999f,
         float eps = 1e-8f);

    void step();

    void save(ArrayFile& file, const std::string& prefix) const;
    void load(const ArrayFile& file, const std::string& prefix);

    std::int64_t steps_taken() const { return step_; }

private:
    ParamStore& store_;
    float lr_, beta1_, beta2_, eps_;
    std::int64_t step_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace headgan::nn
