#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace radkg {

/// Dense row-major double tensor. Only the handful of ops the two scorers need.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::span<double> data() { return values_; }
    std::span<const double> data() const { return values_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

    double& at(std::size_t a, std::size_t b, std::size_t c) { return values_[(a * shape_[1] + b) * shape_[2] + c]; }
    double at(std::size_t a, std::size_t b, std::size_t c) const { return values_[(a * shape_[1] + b) * shape_[2] + c]; }

    /// Row `r` of a rank-2 tensor.
    std::span<double> row(std::size_t r) { return {values_.data() + r * shape_[1], shape_[1]}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * shape_[1], shape_[1]}; }

    /// Same values under a new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

/// y_k = sum_i x_i W_ik for W of shape [in, out].
std::vector<double> linear_fwd(std::span<const double> x, const Tensor& weights);

struct LinearGrad {
    std::vector<double> input;
    Tensor weights;
};

LinearGrad linear_bwd(std::span<const double> x, const Tensor& weights, std::span<const double> upstream);

inline constexpr std::size_t kConvKernelSide = 5;

/// Valid, stride-1 cross-correlation of a single-channel [H, W] input with C kernels [C, 5, 5].
/// Output is [C, H-4, W-4].
Tensor conv2d_fwd(const Tensor& input, const Tensor& kernels);

struct ConvGrad {
    Tensor input;
    Tensor kernels;
};

ConvGrad conv2d_bwd(const Tensor& input, const Tensor& kernels, const Tensor& upstream);

Tensor relu(const Tensor& x);
std::vector<double> relu(std::span<const double> x);
/// Subgradient at exactly 0 is 0.
Tensor relu_bwd(const Tensor& x, const Tensor& upstream);
std::vector<double> relu_bwd(std::span<const double> x, std::span<const double> upstream);

/// Logistic function; saturates to 0 or 1 without producing NaN.
double sigmoid(double x);

inline constexpr double kDefaultFiniteDiffStep = 1e-5;

/// Central differences of `fn` at `params`, one coordinate at a time. `params` is restored.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> params, double step = kDefaultFiniteDiffStep);

}  // namespace radkg
