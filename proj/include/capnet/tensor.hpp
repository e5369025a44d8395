#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

namespace capnet {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major n-dimensional array of doubles. The one carrier type for
// activations, parameters and gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor from_vector(std::vector<double> v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    // 2-D Eigen views; callers guarantee rank 2.
    MatMap mat() { return MatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])); }
    ConstMatMap mat() const { return ConstMatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])); }
    VecMap vec() { return VecMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }
    ConstVecMap vec() const { return ConstVecMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    void fill(double v);
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& s);
std::size_t shape_numel(const std::vector<std::size_t>& s);

enum class Elt { sigmoid, tanh, relu, exp, log };

// Forward kernels. Each has a matching analytic backward wired into the tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor elementwise(const Tensor& x, Elt mode);
Tensor softmax_vec(const Tensor& z);

double elt_forward(double x, Elt mode);
// Derivative expressed through input x and output y, whichever is cheaper.
double elt_backward(double x, double y, Elt mode);

}  // namespace capnet
