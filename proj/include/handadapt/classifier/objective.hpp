#pragma once

// Full-batch cross-entropy of an Mlp<double>, in row-space coordinates.
//
// Every first-layer gradient has the form D X' for the training inputs X, so
// from W1_0 every SCG iterate keeps W1 - W1_0 inside the row space of X'.
// With G = X'X = V S V' and the orthonormal basis U = X V S^-1/2 of that
// space, W1 = W1_0 + D U'. Coordinates are [vec(D) | b1 | layers >= 1] and,
// since U is orthonormal, their Euclidean geometry is that of the full
// weight vector: SCG follows the same path as in weight space, but no
// iteration touches the input dimension.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "handadapt/classifier/mlp.hpp"

namespace handadapt::classifier {

struct BatchScore {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;

    friend bool operator==(const BatchScore&, const BatchScore&) = default;
};

class RowSpaceMlp {
public:
    enum class Set { Train, Val, Test };

    /// Eigenvalues below this fraction of the largest are treated as zero.
    static constexpr double kRankTolerance = 1e-11;

    /// `net` carries the initial weights. `z0` = W1_0 X and `gram` = X'X over
    /// a pool of examples; the index lists select the pool's three splits.
    RowSpaceMlp(Mlp<double> net, const Eigen::MatrixXd& z0, const Eigen::MatrixXd& gram, std::span<const int> labels,
                std::vector<std::size_t> train, std::vector<std::size_t> val, std::vector<std::size_t> test)
        : net_(std::move(net)) {
        if (net_.layers() < 2) throw ShapeMismatch("row-space training needs at least one hidden layer");
        if (train.empty()) throw ShapeMismatch("empty training set");
        h_ = static_cast<Eigen::Index>(net_.sizes()[1]);
        rest_ = static_cast<Eigen::Index>(net_.parameter_count() - net_.bias_offset(0));
        scratch_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.parameter_count()));

        const auto n = static_cast<Eigen::Index>(train.size());
        Eigen::MatrixXd g(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) g(i, j) = gram(pool(train, i), pool(train, j));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
        const Eigen::VectorXd& s = eig.eigenvalues(); // ascending
        const double cutoff = kRankTolerance * std::max(s(n - 1), 0.0);
        Eigen::Index first = 0;
        while (first < n && !(s(first) > cutoff)) ++first;
        r_ = n - first;
        // basis_ maps training columns to coordinates: U = X_train basis_
        basis_ = eig.eigenvectors().rightCols(r_) * s.tail(r_).cwiseSqrt().cwiseInverse().asDiagonal();

        std::vector<std::size_t>* lists[3] = {&train, &val, &test};
        for (int k = 0; k < 3; ++k) {
            auto& es = sets_[k];
            es.index = *lists[k];
            const auto m = static_cast<Eigen::Index>(es.index.size());
            es.z0.resize(h_, m);
            Eigen::MatrixXd cross(n, m);
            for (Eigen::Index j = 0; j < m; ++j) {
                es.z0.col(j) = z0.col(pool(es.index, j));
                for (Eigen::Index i = 0; i < n; ++i) cross(i, j) = gram(pool(train, i), pool(es.index, j));
                es.labels.push_back(labels[es.index[static_cast<std::size_t>(j)]]);
                if (es.labels.back() < 0 || static_cast<std::size_t>(es.labels.back()) >= net_.output_size())
                    throw ShapeMismatch("label out of range");
            }
            es.proj = basis_.transpose() * cross; // U' X_s
        }
    }

    std::size_t dimension() const { return static_cast<std::size_t>(h_ * r_ + rest_); }
    std::size_t rank() const { return static_cast<std::size_t>(r_); }
    const std::vector<std::size_t>& indices(Set s) const { return set(s).index; }

    /// D = 0 with the network's own biases and later layers.
    Eigen::VectorXd initial_point() const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension()));
        v.tail(rest_) = net_.params().tail(rest_);
        return v;
    }

    /// Training loss at `v`; fills the coordinate gradient when asked.
    double evaluate(const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
        const auto t = forward(v, Set::Train);
        const auto& labels = set(Set::Train).labels;
        if (!grad) return Mlp<double>::cross_entropy(t.z.back(), labels, nullptr);
        Eigen::MatrixXd delta;
        const double loss = Mlp<double>::cross_entropy(t.z.back(), labels, &delta);
        const Eigen::MatrixXd delta1 = net_.backward(t, std::move(delta), scratch_, 1);
        grad->resize(static_cast<Eigen::Index>(dimension()));
        Eigen::Map<Eigen::MatrixXd>(grad->data(), h_, r_).noalias() = delta1 * set(Set::Train).proj.transpose();
        grad->segment(h_ * r_, h_) = delta1.rowwise().sum();
        grad->tail(rest_ - h_) = scratch_.tail(rest_ - h_);
        return loss;
    }

    BatchScore score(const Eigen::VectorXd& v, Set s) {
        BatchScore out;
        const auto& labels = set(s).labels;
        out.count = labels.size();
        if (labels.empty()) return out;
        const auto t = forward(v, s);
        out.loss = Mlp<double>::cross_entropy(t.z.back(), labels, nullptr);
        std::size_t correct = 0;
        for (Eigen::Index j = 0; j < t.z.back().cols(); ++j) {
            Eigen::Index arg = 0;
            t.z.back().col(j).maxCoeff(&arg);
            correct += arg == labels[static_cast<std::size_t>(j)];
        }
        out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
        return out;
    }

    /// First-layer row-space coefficients C with W1 = W1_0 + C X_train'.
    Eigen::MatrixXd coefficients(const Eigen::VectorXd& v) const { return coeffs(v) * basis_.transpose(); }

    /// The weight-space network represented by `v`; `x` is the full pool.
    template <class Derived>
    Mlp<double> materialize(const Eigen::VectorXd& v, const Eigen::MatrixBase<Derived>& x) const {
        Mlp<double> out = net_;
        out.params().tail(rest_) = v.tail(rest_);
        out.weights(0).noalias() += coefficients(v) * train_columns(x).transpose();
        return out;
    }

    /// Maps a coordinate vector (e.g. a gradient) to a weight-space vector.
    template <class Derived>
    Eigen::VectorXd to_weight_space(const Eigen::VectorXd& v, const Eigen::MatrixBase<Derived>& x) const {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net_.parameter_count()));
        w.tail(rest_) = v.tail(rest_);
        net_.weights_in(w, 0).noalias() = coefficients(v) * train_columns(x).transpose();
        return w;
    }

private:
    struct EvalSet {
        std::vector<std::size_t> index;
        std::vector<int> labels;
        Eigen::MatrixXd z0;   ///< W1_0 X_s
        Eigen::MatrixXd proj; ///< U' X_s
    };

    static Eigen::Index pool(const std::vector<std::size_t>& idx, Eigen::Index k) {
        return static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
    }

    template <class Derived>
    Eigen::MatrixXd train_columns(const Eigen::MatrixBase<Derived>& x) const {
        const auto& idx = set(Set::Train).index;
        Eigen::MatrixXd xt(x.rows(), static_cast<Eigen::Index>(idx.size()));
        for (Eigen::Index k = 0; k < xt.cols(); ++k) xt.col(k) = x.col(pool(idx, k));
        return xt;
    }

    const EvalSet& set(Set s) const { return sets_[static_cast<int>(s)]; }

    Eigen::Map<const Eigen::MatrixXd> coeffs(const Eigen::VectorXd& v) const {
        return Eigen::Map<const Eigen::MatrixXd>(v.data(), h_, r_);
    }

    Mlp<double>::Trace forward(const Eigen::VectorXd& v, Set s) {
        const auto& es = set(s);
        net_.params().tail(rest_) = v.tail(rest_);
        Mlp<double>::Trace t;
        t.z.resize(net_.layers());
        t.z[0] = es.z0;
        t.z[0].noalias() += coeffs(v) * es.proj;
        t.z[0].colwise() += v.segment(h_ * r_, h_);
        net_.forward_from_first(t);
        return t;
    }

    Mlp<double> net_; ///< first layer stays at W1_0; later layers are scratch
    Eigen::Index h_ = 0, r_ = 0, rest_ = 0;
    Eigen::MatrixXd basis_; ///< V S^-1/2, n_train x rank
    EvalSet sets_[3];
    Eigen::VectorXd scratch_;
};

} // namespace handadapt::classifier
