#include "gsde/nn.hpp"

#include <algorithm>
#include <cmath>

namespace gsde {

bool all_finite(const Matrix& m) { return m.allFinite(); }

LinearLayer::LinearLayer(int out_dim, int in_dim, Rng& rng) {
    if (out_dim <= 0 || in_dim <= 0) {
        throw ParamError("LinearLayer: dimensions must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    weight.resize(out_dim, in_dim);
    for (int r = 0; r < out_dim; ++r) {
        for (int c = 0; c < in_dim; ++c) {
            weight(r, c) = rng.uniform(-bound, bound);
        }
    }
    bias.resize(out_dim, 1);
    for (int r = 0; r < out_dim; ++r) {
        bias(r, 0) = rng.uniform(-bound, bound);
    }
    grad_weight = Matrix::Zero(out_dim, in_dim);
    grad_bias = Matrix::Zero(out_dim, 1);
}

void LinearLayer::zero_grad() {
    grad_weight.setZero();
    grad_bias.setZero();
}

Matrix linear_forward(const LinearLayer& layer, const Matrix& x) {
    if (x.cols() != layer.in_dim()) {
        throw ShapeError("linear_forward: input has " +
                         std::to_string(x.cols()) + " columns, layer expects " +
                         std::to_string(layer.in_dim()));
    }
    Matrix y = x * layer.weight.transpose();
    y.rowwise() += layer.bias.col(0).transpose();
    return y;
}

Matrix linear_backward(LinearLayer& layer, const Matrix& x,
                       const Matrix& upstream) {
    if (upstream.rows() != x.rows() || upstream.cols() != layer.out_dim() ||
        x.cols() != layer.in_dim()) {
        throw ShapeError("linear_backward: upstream/input shape mismatch");
    }
    layer.grad_weight += upstream.transpose() * x;
    layer.grad_bias.col(0) += upstream.colwise().sum().transpose();
    return upstream * layer.weight;
}

void sgd_step(LinearLayer& layer, double learning_rate, double weight_decay) {
    if (learning_rate <= 0.0) {
        throw ParamError("sgd_step: learning rate must be positive");
    }
    layer.weight -= learning_rate *
                    (layer.grad_weight + weight_decay * layer.weight);
    layer.bias -= learning_rate * (layer.grad_bias + weight_decay * layer.bias);
}

Matrix relu_forward(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& pre_activation, const Matrix& upstream) {
    if (pre_activation.rows() != upstream.rows() ||
        pre_activation.cols() != upstream.cols()) {
        throw ShapeError("relu_backward: shape mismatch");
    }
    return (pre_activation.array() > 0.0)
        .select(upstream, Matrix::Zero(upstream.rows(), upstream.cols()));
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).transpose();
    }
    return out;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
    if (probs.rows() != dprobs.rows() || probs.cols() != dprobs.cols()) {
        throw ShapeError("softmax_backward: shape mismatch");
    }
    // dlogits = p .* (dp - <dp, p>) row-wise.
    Matrix dlogits(probs.rows(), probs.cols());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const double dot = probs.row(r).dot(dprobs.row(r));
        dlogits.row(r) =
            (probs.row(r).array() * (dprobs.row(r).array() - dot)).matrix();
    }
    return dlogits;
}

static void check_row_stochastic(const Matrix& probs) {
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        if (std::abs(probs.row(r).sum() - 1.0) > 1e-9) {
            throw ContractError(
                "cross_entropy: probability row " + std::to_string(r) +
                " does not sum to 1");
        }
    }
}

double cross_entropy(const Matrix& probs, const Matrix& targets) {
    if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
        throw ShapeError("cross_entropy: shape mismatch");
    }
    if (probs.rows() == 0) return 0.0;
    check_row_stochastic(probs);
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double t = targets(r, c);
            if (t != 0.0) {
                total -= t * std::log(std::max(probs(r, c), kProbFloor));
            }
        }
    }
    return total / static_cast<double>(probs.rows());
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
        throw ShapeError("cross_entropy: one label per probability row");
    }
    if (probs.rows() == 0) return 0.0;
    check_row_stochastic(probs);
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const int y = labels[static_cast<size_t>(r)];
        if (y < 0 || y >= probs.cols()) {
            throw ContractError("cross_entropy: label out of range");
        }
        total -= std::log(std::max(probs(r, y), kProbFloor));
    }
    return total / static_cast<double>(probs.rows());
}

double sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-logit)); }

Matrix sigmoid(const Matrix& logits) {
    return logits.unaryExpr([](double z) { return sigmoid(z); });
}

double bce(double prob, double label) {
    const double p = std::clamp(prob, kProbFloor, 1.0 - kProbFloor);
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

Matrix onehot(const std::vector<int>& labels, int num_classes) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                              num_classes);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw ContractError("onehot: label out of range");
        }
        out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return out;
}

}  // namespace gsde
