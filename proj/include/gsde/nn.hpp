#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "gsde/error.hpp"
#include "gsde/rng.hpp"

namespace gsde {

/// Row-major dense carrier for features, parameters, gradients and
/// probabilities. Rows are batch entries throughout.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Floor applied to every probability before a logarithm.
inline constexpr double kProbFloor = 1e-12;

bool all_finite(const Matrix& m);

// ---------------------------------------------------------------------------
// LinearLayer: y = x * W^T + b, with explicit gradient storage.
// ---------------------------------------------------------------------------
struct LinearLayer {
    Matrix weight;       // out x in
    Matrix bias;         // out x 1
    Matrix grad_weight;  // same shape as weight
    Matrix grad_bias;    // same shape as bias

    LinearLayer() = default;

    /// Seeded uniform fan-in init: U(-1/sqrt(in), 1/sqrt(in)) for both
    /// weight and bias.
    LinearLayer(int out_dim, int in_dim, Rng& rng);

    int out_dim() const { return static_cast<int>(weight.rows()); }
    int in_dim() const { return static_cast<int>(weight.cols()); }

    void zero_grad();
};

/// x: batch x in  ->  batch x out.
Matrix linear_forward(const LinearLayer& layer, const Matrix& x);

/// Accumulates grad_weight += upstream^T * x and grad_bias += column sums
/// of upstream; returns the gradient w.r.t. x (upstream * W).
Matrix linear_backward(LinearLayer& layer, const Matrix& x,
                       const Matrix& upstream);

/// p <- p - lr * (grad + weight_decay * p). Gradients are left untouched.
void sgd_step(LinearLayer& layer, double learning_rate, double weight_decay);

// Activations and losses ----------------------------------------------------

Matrix relu_forward(const Matrix& x);

/// upstream masked by the sign of the pre-activation input.
Matrix relu_backward(const Matrix& pre_activation, const Matrix& upstream);

/// Row-wise softmax with max-shift; every output row sums to 1.
Matrix softmax(const Matrix& logits);

/// d(loss)/d(logits) given d(loss)/d(probs) through a row-wise softmax.
Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs);

/// Mean over rows of -sum_c targets(r,c) * log(probs(r,c)). Targets may be
/// one-hot or any row-stochastic soft labels. Probability rows must sum to
/// 1 within 1e-9.
double cross_entropy(const Matrix& probs, const Matrix& targets);

/// Cross-entropy against integer class ids.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

double sigmoid(double logit);
Matrix sigmoid(const Matrix& logits);

/// Binary cross-entropy of a single prediction; probabilities are clamped
/// at kProbFloor on both sides so the value is always finite.
double bce(double prob, double label);

Matrix onehot(const std::vector<int>& labels, int num_classes);

}  // namespace gsde
