#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gsde/nn.hpp"

namespace gsde {

struct ModelDims {
    int input = 2;
    int hidden = 64;
    int bottleneck = 16;
    int classes = 2;
};

/// Ramp for the adversarial coefficient: lam(p) = 2/(1+exp(-gamma*p)) - 1,
/// monotone from 0 at p = 0 towards (but never reaching) 1.
struct GrlSchedule {
    double gamma = 10.0;
    int max_progress_iters = 1000;

    double lam(double progress) const;
    double lam_at(int iter) const;
};

// ---------------------------------------------------------------------------
// GsdeModel
//
// extractor (2 x Linear+ReLU) -> k parallel bottleneck projections whose
// outputs are averaged -> classifier head. The domain discriminator is a
// small MLP over the flattened outer product of bottleneck features and
// class probabilities; a gradient reversal layer sits between the two, so
// its backward pass returns -lam * upstream into the feature path.
// ---------------------------------------------------------------------------
struct GsdeModel {
    std::vector<LinearLayer> extractor;      // hidden x input, hidden x hidden
    std::vector<LinearLayer> bottlenecks;    // k of bottleneck x hidden
    LinearLayer classifier;                  // classes x bottleneck
    std::vector<LinearLayer> discriminator;  // hidden x (b*K), 1 x hidden
    ModelDims dims;
    int num_bottlenecks = 1;
    uint64_t init_seed = 0;
};

/// Fresh model with seeded fan-in initialization. Layers draw from
/// independently derived sub-streams, so the k bottlenecks start from
/// different weights while equal seeds still give identical models.
GsdeModel init_model(const ModelDims& dims, int num_bottlenecks,
                     uint64_t seed);

// Forward passes -------------------------------------------------------------

struct StackCache {
    std::vector<Matrix> inputs;    // per layer
    std::vector<Matrix> preacts;   // per ReLU layer
};

struct ModelForward {
    Matrix x;                       // batch x input
    StackCache extractor;
    Matrix backbone;                // batch x hidden
    std::vector<Matrix> bneck_out;  // k of batch x bottleneck
    Matrix f;                       // batch x bottleneck (mean over k)
    Matrix logits;                  // batch x classes
    Matrix p;                       // batch x classes
};

ModelForward model_forward(const GsdeModel& m, const Matrix& x);

/// Mean over the k bottleneck projections of the extracted backbone
/// features.
Matrix features(const GsdeModel& m, const Matrix& x);

/// softmax(classifier(f)); rows sum to 1.
Matrix class_probs(const GsdeModel& m, const Matrix& f);

/// Row i is the flattened outer product f_i (x) p_i, laid out as one
/// bottleneck-sized block per class: out(i, c*b + j) = p(i,c) * f(i,j).
Matrix multilinear(const Matrix& f, const Matrix& p);

Matrix domain_logits(const GsdeModel& m, const Matrix& fused);
Matrix domain_logits(const GsdeModel& m, const Matrix& fused,
                     StackCache& cache);

/// Gradient reversal: -lam * upstream. Identity in the forward direction.
Matrix grl_backward(const Matrix& upstream, double lam);

// Backward passes ------------------------------------------------------------

/// Accumulates classifier/bottleneck/extractor gradients from dlogits
/// (gradient at the classifier logits) and df_extra (gradient injected
/// directly at the averaged bottleneck features; pass an empty matrix for
/// none). Returns the gradient w.r.t. the input batch.
Matrix model_backward(GsdeModel& m, const ModelForward& fw,
                      const Matrix& dlogits, const Matrix& df_extra);

/// Accumulates discriminator gradients; returns the gradient w.r.t. the
/// fused input, before any reversal.
Matrix discriminator_backward(GsdeModel& m, const StackCache& cache,
                              const Matrix& dlogit);

// Parameter plumbing ---------------------------------------------------------

void zero_grad(GsdeModel& m);
void sgd_step_model(GsdeModel& m, double learning_rate, double weight_decay);

/// Visits every layer as (name, layer); names are stable and unique
/// ("extractor.0", "bottleneck.2", "classifier", "discriminator.1").
void for_each_layer(GsdeModel& m,
                    const std::function<void(const std::string&,
                                             LinearLayer&)>& fn);
void for_each_layer(const GsdeModel& m,
                    const std::function<void(const std::string&,
                                             const LinearLayer&)>& fn);

/// FNV-1a over the raw parameter bytes; bitwise fingerprint for
/// determinism and warm-start checks.
uint64_t parameter_fingerprint(const GsdeModel& m);

}  // namespace gsde
