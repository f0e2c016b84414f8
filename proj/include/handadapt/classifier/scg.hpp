#pragma once

// Scaled conjugate gradient (Moller 1993).
//
// The optimizer never touches weights directly; it drives an objective
// through a small protocol. Objectives choose their own coordinates and
// supply the inner product that matches the Euclidean one on the weights.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>

namespace handadapt::classifier {

/// An objective E(w) positioned at a current point w.
///   curvature(s)  = p'(E'(w + s p) - E'(w)) / s for the current direction p
///   value_along(a) = E(w + a p), without moving
///   advance(a)     : w += a p, refreshing value and gradient
///   dot(a, b)      : inner product of two coordinate vectors
template <class O>
concept ScgObjective = requires(O& o, const Eigen::VectorXd& p, double t) {
    { o.dimension() } -> std::convertible_to<std::size_t>;
    { o.dot(p, p) } -> std::convertible_to<double>;
    { o.value() } -> std::convertible_to<double>;
    { o.gradient() } -> std::convertible_to<const Eigen::VectorXd&>;
    o.set_direction(p);
    { o.curvature(t) } -> std::convertible_to<double>;
    { o.value_along(t) } -> std::convertible_to<double>;
    o.advance(t);
};

struct ScgConfig {
    double sigma = 5e-5;
    double lambda = 5e-7;
    double gradient_tolerance = 1e-12; ///< converged once |r| falls below this
};

/// Optimizer scalars plus search direction and residual.
struct ScgState {
    double sigma = 5e-5;
    double lambda = 5e-7;
    double lambda_bar = 0.0;
    double delta = 0.0; ///< p'Hp estimate, carried across rejected steps
    double comparison = 0.0; ///< Delta of the last step
    bool success = true;
    std::size_t iteration = 1;
    Eigen::VectorXd p;
    Eigen::VectorXd r;
};

enum class ScgStep { Accepted, Rejected, Converged };

template <ScgObjective Objective>
class Scg {
public:
    explicit Scg(Objective& objective, ScgConfig config = {}) : obj_(objective), config_(config) {
        s_.sigma = config.sigma;
        s_.lambda = config.lambda;
        s_.r = -obj_.gradient();
        s_.p = s_.r;
    }

    const ScgState& state() const { return s_; }
    double value() const { return obj_.value(); }

    ScgStep step() {
        const double r_norm2 = obj_.dot(s_.r, s_.r);
        if (std::sqrt(r_norm2) < config_.gradient_tolerance) return ScgStep::Converged;
        const double p_norm2 = obj_.dot(s_.p, s_.p);
        if (p_norm2 == 0.0) return ScgStep::Converged;

        if (s_.success) {
            const double sigma_k = s_.sigma / std::sqrt(p_norm2);
            obj_.set_direction(s_.p);
            s_.delta = obj_.curvature(sigma_k);
        }
        s_.delta += (s_.lambda - s_.lambda_bar) * p_norm2;

        // make the Hessian estimate positive definite
        if (s_.delta <= 0.0) {
            s_.lambda_bar = 2.0 * (s_.lambda - s_.delta / p_norm2);
            s_.delta = -s_.delta + s_.lambda * p_norm2;
            s_.lambda = s_.lambda_bar;
        }

        const double mu = obj_.dot(s_.p, s_.r);
        const double alpha = mu / s_.delta;
        const double e_old = obj_.value();
        const double e_new = obj_.value_along(alpha);
        // a non-finite trial value is treated as a clear failure
        s_.comparison = std::isfinite(e_new) ? 2.0 * s_.delta * (e_old - e_new) / (mu * mu) : -1.0;

        const bool accepted = s_.comparison >= 0.0;
        const double delta_k = s_.delta;
        if (accepted) {
            obj_.advance(alpha);
            Eigen::VectorXd r_new = -obj_.gradient();
            s_.lambda_bar = 0.0;
            s_.success = true;
            if (s_.iteration % obj_.dimension() == 0) {
                s_.p = r_new;
            } else {
                const double beta = (obj_.dot(r_new, r_new) - obj_.dot(r_new, s_.r)) / mu;
                s_.p = r_new + beta * s_.p;
            }
            s_.r = std::move(r_new);
            if (s_.comparison >= 0.75) s_.lambda *= 0.25;
        } else {
            s_.lambda_bar = s_.lambda;
            s_.success = false;
        }
        if (s_.comparison < 0.25) s_.lambda += delta_k * (1.0 - s_.comparison) / p_norm2;
        ++s_.iteration;
        return accepted ? ScgStep::Accepted : ScgStep::Rejected;
    }

private:
    Objective& obj_;
    ScgConfig config_;
    ScgState s_;
};

/// Adapter for any differentiable function given as (w, grad*) -> value.
class FunctionObjective {
public:
    using Fn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;
    using Inner = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

    FunctionObjective(Fn fn, Eigen::VectorXd w0, Inner inner = {})
        : fn_(std::move(fn)), inner_(std::move(inner)), w_(std::move(w0)) {
        refresh();
    }

    std::size_t dimension() const { return static_cast<std::size_t>(w_.size()); }
    double value() const { return value_; }
    const Eigen::VectorXd& gradient() const { return grad_; }
    const Eigen::VectorXd& point() const { return w_; }

    double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return inner_ ? inner_(a, b) : a.dot(b); }

    void set_direction(const Eigen::VectorXd& p) { p_ = p; }

    double curvature(double s) const {
        Eigen::VectorXd g2(w_.size());
        fn_(along(s), &g2);
        return dot(p_, g2 - grad_) / s;
    }

    double value_along(double a) const { return fn_(along(a), nullptr); }

    /// Shares along() with value_along so an accepted step lands on exactly
    /// the point that was evaluated.
    void advance(double a) {
        w_ = along(a);
        refresh();
    }

private:
    Eigen::VectorXd along(double a) const { return w_ + a * p_; }

    void refresh() {
        grad_.resize(w_.size());
        value_ = fn_(w_, &grad_);
    }

    Fn fn_;
    Inner inner_;
    Eigen::VectorXd w_;
    Eigen::VectorXd p_;
    Eigen::VectorXd grad_;
    double value_ = 0.0;
};

} // namespace handadapt::classifier
