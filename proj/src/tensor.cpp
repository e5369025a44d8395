#include "capnet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "capnet/errors.hpp"

namespace capnet {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " does not match data length " +
                             std::to_string(data_.size()));
    }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    std::vector<std::size_t> shape{v.size()};
    return Tensor(std::move(shape), std::move(v));
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_numel(new_shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto fail = [&]() {
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    };
    if (a.rank() == 2 && b.rank() == 2) {
        if (a.dim(1) != b.dim(0)) fail();
        Tensor out({a.dim(0), b.dim(1)});
        out.mat().noalias() = a.mat() * b.mat();
        return out;
    }
    if (a.rank() == 2 && b.rank() == 1) {
        if (a.dim(1) != b.dim(0)) fail();
        Tensor out({a.dim(0)});
        out.vec().noalias() = a.mat() * b.vec();
        return out;
    }
    if (a.rank() == 1 && b.rank() == 2) {
        if (a.dim(0) != b.dim(0)) fail();
        Tensor out({b.dim(1)});
        out.vec().noalias() = b.mat().transpose() * a.vec();
        return out;
    }
    fail();
    return {};
}

double elt_forward(double x, Elt mode) {
    switch (mode) {
        case Elt::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Elt::tanh: return std::tanh(x);
        case Elt::relu: return x > 0.0 ? x : 0.0;
        case Elt::exp: return std::exp(x);
        case Elt::log: return std::log(x);
    }
    return 0.0;
}

double elt_backward(double x, double y, Elt mode) {
    switch (mode) {
        case Elt::sigmoid: return y * (1.0 - y);
        case Elt::tanh: return 1.0 - y * y;
        case Elt::relu: return x > 0.0 ? 1.0 : 0.0;
        case Elt::exp: return y;
        case Elt::log: return 1.0 / x;
    }
    return 0.0;
}

Tensor elementwise(const Tensor& x, Elt mode) {
    if (mode == Elt::log) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] > 0.0)) {
                throw DomainError("log requires strictly positive inputs, got " +
                                  std::to_string(x[i]) + " at index " + std::to_string(i));
            }
        }
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = elt_forward(x[i], mode);
    return out;
}

Tensor softmax_vec(const Tensor& z) {
    if (z.size() == 0) throw DimensionError("softmax of empty vector");
    Tensor out(z.shape());
    const double m = *std::max_element(z.raw().begin(), z.raw().end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (std::size_t i = 0; i < z.size(); ++i) out[i] /= sum;
    return out;
}

}  // namespace capnet
