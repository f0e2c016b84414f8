#pragma once

// Fully connected feed-forward network with a softmax output.
//
// Parameters live in one flat vector (layer by layer: weights column-major
// out x in, then biases) so optimizers can treat the network as a point in
// R^n. Hidden units use a logistic sigmoid unless configured otherwise.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "handadapt/core/random.hpp"
#include "handadapt/core/types.hpp"

namespace handadapt::classifier {

enum class Activation : std::uint32_t { Sigmoid = 1, Tanh = 2 };

inline std::string to_string(Activation a) { return a == Activation::Sigmoid ? "sigmoid" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    throw Error("unknown activation '" + s + "'");
}

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

template <class Scalar = double>
class Mlp {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;
    using VectorMap = Eigen::Map<Vector>;
    using ConstVectorMap = Eigen::Map<const Vector>;

    Mlp() = default;

    explicit Mlp(std::vector<std::size_t> sizes, Activation act = Activation::Sigmoid)
        : sizes_(std::move(sizes)), activation_(act) {
        if (sizes_.size() < 2) throw ShapeMismatch("a network needs at least an input and an output layer");
        for (auto s : sizes_)
            if (s == 0) throw ShapeMismatch("layer sizes must be positive");
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            weight_offset_.push_back(off);
            off += sizes_[l] * sizes_[l + 1];
            bias_offset_.push_back(off);
            off += sizes_[l + 1];
        }
        params_ = Vector::Zero(static_cast<Eigen::Index>(off));
    }

    const std::vector<std::size_t>& sizes() const { return sizes_; }
    Activation activation() const { return activation_; }
    std::size_t layers() const { return sizes_.size() - 1; } ///< number of weight layers
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Vector& params() { return params_; }
    const Vector& params() const { return params_; }

    std::size_t weight_offset(std::size_t l) const { return weight_offset_[l]; }
    std::size_t bias_offset(std::size_t l) const { return bias_offset_[l]; }

    MatrixMap weights(std::size_t l) { return weights_in(params_, l); }
    ConstMatrixMap weights(std::size_t l) const { return weights_in(params_, l); }
    VectorMap bias(std::size_t l) { return bias_in(params_, l); }
    ConstVectorMap bias(std::size_t l) const { return bias_in(params_, l); }

    /// View of layer `l`'s weight block inside any vector shaped like params().
    MatrixMap weights_in(Vector& v, std::size_t l) const {
        return MatrixMap(v.data() + weight_offset_[l], rows(l), cols(l));
    }
    ConstMatrixMap weights_in(const Vector& v, std::size_t l) const {
        return ConstMatrixMap(v.data() + weight_offset_[l], rows(l), cols(l));
    }
    VectorMap bias_in(Vector& v, std::size_t l) const { return VectorMap(v.data() + bias_offset_[l], rows(l)); }
    ConstVectorMap bias_in(const Vector& v, std::size_t l) const {
        return ConstVectorMap(v.data() + bias_offset_[l], rows(l));
    }

    /// Uniform in +-1/sqrt(fan_in) for weights and biases alike.
    void init_uniform(std::uint64_t seed) {
        auto rng = make_rng(seed);
        for (std::size_t l = 0; l < layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
            auto w = weights(l);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(uniform(rng, -bound, bound));
            auto b = bias(l);
            for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(uniform(rng, -bound, bound));
        }
    }

    Scalar activate(Scalar z) const {
        return activation_ == Activation::Sigmoid ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::tanh(z);
    }

    /// Derivative expressed through the activation value a = f(z).
    Scalar activate_grad_from_value(Scalar a) const {
        return activation_ == Activation::Sigmoid ? a * (Scalar(1) - a) : Scalar(1) - a * a;
    }

    template <class Derived>
    Matrix activate(const Eigen::MatrixBase<Derived>& z) const {
        return z.unaryExpr([this](Scalar v) { return activate(v); });
    }

    /// Per-layer pre-activations and activations for a batch (one column per example).
    struct Trace {
        std::vector<Matrix> z; ///< z[l] = W_l a_{l} + b_l
        std::vector<Matrix> a; ///< a[l] = f(z[l-1]); a[0] unused (input is external)
    };

    /// Forward pass from the first layer's pre-activation onward.
    void forward_from_first(Trace& t) const {
        const std::size_t L = layers();
        t.a.resize(L + 1);
        t.z.resize(L);
        for (std::size_t l = 1; l < L; ++l) {
            t.a[l] = activate(t.z[l - 1]);
            t.z[l] = weights(l) * t.a[l];
            t.z[l].colwise() += bias(l);
        }
    }

    template <class Derived>
    Trace forward(const Eigen::MatrixBase<Derived>& x) const {
        if (static_cast<std::size_t>(x.rows()) != input_size())
            throw ShapeMismatch("input has " + std::to_string(x.rows()) + " features, network expects " +
                                std::to_string(input_size()));
        Trace t;
        t.z.resize(layers());
        t.z[0] = weights(0) * x;
        t.z[0].colwise() += bias(0);
        forward_from_first(t);
        return t;
    }

    /// Softmax posteriors in double precision (columns sum to 1).
    template <class Derived>
    Eigen::MatrixXd posteriors(const Eigen::MatrixBase<Derived>& x) const {
        return softmax(forward(x).z.back());
    }

    std::vector<double> posterior(std::span<const Scalar> input) const {
        if (input.size() != input_size())
            throw ShapeMismatch("input has " + std::to_string(input.size()) + " features, network expects " +
                                std::to_string(input_size()));
        ConstVectorMap x(input.data(), static_cast<Eigen::Index>(input.size()));
        Eigen::MatrixXd p = posteriors(x);
        return {p.data(), p.data() + p.size()};
    }

    static Eigen::MatrixXd softmax(const Matrix& logits) {
        Eigen::MatrixXd out = logits.template cast<double>();
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            const double m = out.col(j).maxCoeff();
            out.col(j) = (out.col(j).array() - m).exp();
            out.col(j) /= out.col(j).sum();
        }
        return out;
    }

    /// Mean cross-entropy of the batch; fills `delta_out` with dLoss/dlogits.
    static double cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* delta_out) {
        const auto n = logits.cols();
        double loss = 0.0;
        if (delta_out) delta_out->resize(logits.rows(), n);
        for (Eigen::Index j = 0; j < n; ++j) {
            Eigen::VectorXd z = logits.col(j).template cast<double>();
            const double m = z.maxCoeff();
            const double lse = m + std::log((z.array() - m).exp().sum());
            const auto y = labels[static_cast<std::size_t>(j)];
            loss += lse - z(y);
            if (delta_out) {
                Eigen::VectorXd p = (z.array() - lse).exp();
                p(y) -= 1.0;
                delta_out->col(j) = (p / static_cast<double>(n)).template cast<Scalar>();
            }
        }
        return loss / static_cast<double>(n);
    }

    /// Backpropagates dLoss/dlogits through layers L-1 .. first_layer (>= 1),
    /// writing their gradients into `grad` (laid out like params()). Returns
    /// dLoss/dz[first_layer - 1].
    Matrix backward(const Trace& t, Matrix delta, Vector& grad, std::size_t first_layer = 1) const {
        for (std::size_t l = layers(); l-- > first_layer;) {
            weights_in(grad, l).noalias() = delta * t.a[l].transpose();
            bias_in(grad, l) = delta.rowwise().sum();
            Matrix back = weights(l).transpose() * delta;
            delta = back.array() *
                    t.a[l].unaryExpr([this](Scalar a) { return activate_grad_from_value(a); }).array();
        }
        return delta;
    }

    /// Mean cross-entropy and its gradient over a labelled batch.
    template <class Derived>
    double loss_and_grad(const Eigen::MatrixBase<Derived>& x, std::span<const int> labels, Vector* grad) const {
        if (static_cast<std::size_t>(x.cols()) != labels.size() || labels.empty())
            throw ShapeMismatch("batch must be non-empty with one label per column");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= output_size()) throw ShapeMismatch("label out of range");
        const Trace t = forward(x);
        Matrix delta;
        const double loss = cross_entropy(t.z.back(), labels, grad ? &delta : nullptr);
        if (grad) {
            grad->resize(params_.size());
            const Matrix delta0 = backward(t, std::move(delta), *grad, 1);
            weights_in(*grad, 0).noalias() = delta0 * x.transpose();
            bias_in(*grad, 0) = delta0.rowwise().sum();
        }
        return loss;
    }

    friend bool operator==(const Mlp& a, const Mlp& b) {
        return a.sizes_ == b.sizes_ && a.activation_ == b.activation_ && a.params_ == b.params_;
    }

private:
    Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l + 1]); }
    Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l]); }

    std::vector<std::size_t> sizes_;
    Activation activation_ = Activation::Sigmoid;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    Vector params_;
};

} // namespace handadapt::classifier
