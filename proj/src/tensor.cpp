#include "radkg/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "radkg/errors.hpp"

namespace radkg {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
        throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                         " values");
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), values_); }

std::vector<double> linear_fwd(std::span<const double> x, const Tensor& weights) {
    if (weights.rank() != 2 || weights.extent(0) != x.size()) {
        throw ShapeError("linear: input of length " + std::to_string(x.size()) + " against weights " +
                         shape_string(weights.shape()));
    }
    const std::size_t out = weights.extent(1);
    std::vector<double> y(out, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const auto w = weights.row(i);
        for (std::size_t k = 0; k < out; ++k) y[k] += xi * w[k];
    }
    return y;
}

LinearGrad linear_bwd(std::span<const double> x, const Tensor& weights, std::span<const double> upstream) {
    if (weights.rank() != 2 || weights.extent(0) != x.size() || weights.extent(1) != upstream.size()) {
        throw ShapeError("linear backward: shapes disagree with weights " + shape_string(weights.shape()));
    }
    LinearGrad g{std::vector<double>(x.size(), 0.0), Tensor(weights.shape())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto w = weights.row(i);
        auto gw = g.weights.row(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < upstream.size(); ++k) {
            acc += w[k] * upstream[k];
            gw[k] = x[i] * upstream[k];
        }
        g.input[i] = acc;
    }
    return g;
}

namespace {

void check_conv(const Tensor& input, const Tensor& kernels) {
    if (input.rank() != 2) throw ShapeError("conv2d expects a rank-2 input, got " + shape_string(input.shape()));
    if (kernels.rank() != 3 || kernels.extent(1) != kConvKernelSide || kernels.extent(2) != kConvKernelSide ||
        kernels.extent(0) == 0) {
        throw ShapeError("conv2d expects kernels [C,5,5], got " + shape_string(kernels.shape()));
    }
    if (input.extent(0) < kConvKernelSide || input.extent(1) < kConvKernelSide) {
        throw ShapeError("conv2d input " + shape_string(input.shape()) + " is smaller than the 5x5 kernel");
    }
}

}  // namespace

Tensor conv2d_fwd(const Tensor& input, const Tensor& kernels) {
    check_conv(input, kernels);
    const std::size_t channels = kernels.extent(0);
    const std::size_t oh = input.extent(0) - kConvKernelSide + 1;
    const std::size_t ow = input.extent(1) - kConvKernelSide + 1;
    Tensor out({channels, oh, ow});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t ky = 0; ky < kConvKernelSide; ++ky) {
                    for (std::size_t kx = 0; kx < kConvKernelSide; ++kx) {
                        acc += input.at(y + ky, x + kx) * kernels.at(c, ky, kx);
                    }
                }
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

ConvGrad conv2d_bwd(const Tensor& input, const Tensor& kernels, const Tensor& upstream) {
    check_conv(input, kernels);
    const std::size_t channels = kernels.extent(0);
    const std::size_t oh = input.extent(0) - kConvKernelSide + 1;
    const std::size_t ow = input.extent(1) - kConvKernelSide + 1;
    if (upstream.shape() != std::vector<std::size_t>{channels, oh, ow}) {
        throw ShapeError("conv2d backward: upstream " + shape_string(upstream.shape()) + " does not match output");
    }
    ConvGrad g{Tensor(input.shape()), Tensor(kernels.shape())};
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double u = upstream.at(c, y, x);
                if (u == 0.0) continue;
                for (std::size_t ky = 0; ky < kConvKernelSide; ++ky) {
                    for (std::size_t kx = 0; kx < kConvKernelSide; ++kx) {
                        g.kernels.at(c, ky, kx) += u * input.at(y + ky, x + kx);
                        g.input.at(y + ky, x + kx) += u * kernels.at(c, ky, kx);
                    }
                }
            }
        }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

std::vector<double> relu(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_bwd(const Tensor& x, const Tensor& upstream) {
    if (x.shape() != upstream.shape()) throw ShapeError("relu backward: shape mismatch");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

std::vector<double> relu_bwd(std::span<const double> x, std::span<const double> upstream) {
    if (x.size() != upstream.size()) throw ShapeError("relu backward: length mismatch");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> params, double step) {
    if (!(step > 0.0)) throw Error("finite difference step must be positive");
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + step;
        const double up = fn(theta);
        theta[i] = saved - step;
        const double down = fn(theta);
        theta[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace radkg
