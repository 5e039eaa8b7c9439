#include "headgan/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace headgan {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor shape has negative dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw std::invalid_argument("tensor data size does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(float value) {
    Tensor t(std::vector<int>{1});
    t.data_[0] = value;
    return t;
}

int Tensor::dim(int i) const {
    if (i < 0 || i >= ndim()) throw std::invalid_argument("tensor dim index out of range");
    return shape_[static_cast<std::size_t>(i)];
}

void Tensor::fill(float value) {
    for (auto& v : data_) v = value;
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

}  // namespace headgan
