#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace headgan {

/// Dense row-major float32 array with a small dynamic shape.
/// Images use CHW order, weights (Cout, Cin, kh, kw), vectors (D).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float value);
    static Tensor scalar(float value);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool defined() const { return !shape_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // CHW accessors; valid only for 3-D tensors.
    float& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(float value);
    bool all_finite() const;

    std::string shape_str() const;  // e.g. "[3, 64, 64]"

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);

}  // namespace headgan
