#pragma once

#include <cstdint>
#include <vector>

#include "gsde/data.hpp"
#include "gsde/model.hpp"
#include "gsde/nn.hpp"

namespace gsde {

/// Index of the row-wise maximum; ties resolve to the lowest column.
std::vector<int> argmax_rows(const Matrix& p);

// ---------------------------------------------------------------------------
// CentroidBank: per-class moving centroids of bottleneck features, kept
// separately for the source and target streams. A class centroid stays
// uninitialized (and excluded from every similarity sum) until its class
// first appears in a batch.
// ---------------------------------------------------------------------------
struct CentroidBank {
    Matrix source;  // K x b
    Matrix target;  // K x b
    std::vector<char> source_init;
    std::vector<char> target_init;
    double theta = 0.7;

    CentroidBank() = default;
    CentroidBank(int num_classes, int feature_dim, double theta);

    int num_classes() const { return static_cast<int>(source.rows()); }
    int feature_dim() const { return static_cast<int>(source.cols()); }
};

/// Moving update per class present in the batch:
/// C <- theta * C + (1 - theta) * batch_mean; a first sighting sets
/// C = batch_mean. Rows with label -1 are ignored.
void update_centroids(CentroidBank& bank, const Matrix& f,
                      const std::vector<int>& labels, bool source_side);

/// Centroid alignment loss: per class a pull term
/// lam * (1 - cos(C_s^k, C_t^k)), plus cross-class push terms
/// cos(C_s^k, C_s^j) + lam*cos(C_s^k, C_t^j) + lam*cos(C_t^k, C_t^j)
/// over ordered pairs j != k. Minimizing aligns same-class centroids
/// across domains and spreads different classes apart; the source-source
/// push carries no lam since it needs no target data.
double semantic_loss(const CentroidBank& bank, double lam);

/// Same value, with gradients w.r.t. the centroids (either output may be
/// null).
double semantic_loss_grad(const CentroidBank& bank, double lam, Matrix* dsrc,
                          Matrix* dtgt);

/// Commits the moving update for both streams, then evaluates the loss on
/// the updated bank. Gradients flow back into the batch features through
/// the batch-mean contribution of this step only; the previous centroid
/// state is a constant.
struct SemanticStep {
    double value = 0.0;
    Matrix df_src;
    Matrix df_tgt;
};
SemanticStep semantic_loss_step(CentroidBank& bank, const Matrix& f_src,
                                const std::vector<int>& src_labels,
                                const Matrix& f_tgt,
                                const std::vector<int>& tgt_labels,
                                double lam);

/// Mean cross-entropy over a fully labeled batch; any row with label -1 is
/// a contract violation.
double classification_loss(const Matrix& probs, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Adversarial loss: lam * mean BCE of the domain discriminator on fused
// (feature x probability) rows, domain label 1 for the source stream
// (pseudo-source included) and 0 for the target stream. The gradient
// reaching the feature path goes through the reversal layer, i.e. is
// scaled by an extra factor of -lam on top of the loss's own lam.
// ---------------------------------------------------------------------------
double adversarial_loss(const GsdeModel& m, const Matrix& f_src,
                        const Matrix& p_src, const Matrix& f_tgt,
                        const Matrix& p_tgt, double lam);

struct AdversarialStep {
    double value = 0.0;
    Matrix df_src, dp_src;  // feature-path gradients, post reversal
    Matrix df_tgt, dp_tgt;
    double mean_disc_src = 0.0;
    double mean_disc_tgt = 0.0;
};
/// Accumulates discriminator parameter gradients and returns the reversed
/// feature-path gradients.
AdversarialStep adversarial_loss_step(GsdeModel& m, const Matrix& f_src,
                                      const Matrix& p_src, const Matrix& f_tgt,
                                      const Matrix& p_tgt, double lam);

// ---------------------------------------------------------------------------
// MixMatch-style semi-supervised loss on raw feature rows.
//
// Recipe: jitter each unlabeled row num_augment times with Gaussian noise;
// guess its label as the sharpened mean prediction over the jittered
// copies (treated as a constant, no gradient); MixUp the labeled and
// unlabeled pools with Beta(alpha, alpha) coefficients clamped to >= 1/2;
// cross-entropy on the mixed labeled part plus unlabeled_weight * mean
// squared error on the mixed unlabeled part.
// ---------------------------------------------------------------------------
struct MixMatchConfig {
    int num_augment = 2;
    double temperature = 0.5;
    double mixup_alpha = 0.75;
    double unlabeled_weight = 1.0;
    double augment_noise_sd = 0.1;
};

/// q_c <- q_c^(1/T) / sum_j q_j^(1/T), row-wise. T = 1 is the identity;
/// T < 1 never increases a row's entropy.
Matrix sharpen(const Matrix& q, double temperature);

/// Loss value only; the model is untouched. When frozen_guess is given it
/// replaces the internally guessed labels (finite-difference harnesses use
/// this to pin the stop-gradient point).
double mixmatch_loss(const GsdeModel& m, const MixMatchConfig& cfg,
                     const Matrix& x_labeled, const std::vector<int>& labels,
                     int num_classes, const Matrix& x_unlabeled, uint64_t seed,
                     const Matrix* frozen_guess = nullptr);

/// Backward variant: accumulates model gradients; optionally exports the
/// guessed labels actually used.
double mixmatch_loss_step(GsdeModel& m, const MixMatchConfig& cfg,
                          const Matrix& x_labeled,
                          const std::vector<int>& labels, int num_classes,
                          const Matrix& x_unlabeled, uint64_t seed,
                          Matrix* guess_out = nullptr);

// ---------------------------------------------------------------------------
// Total loss: unweighted sum of the four components, one backward
// accumulation per iteration. Ablation switches drop components entirely.
// ---------------------------------------------------------------------------
struct TotalLossConfig {
    double lam = 0.0;
    bool enable_adversarial = true;
    bool enable_semantic = true;
    bool enable_mixmatch = true;
    MixMatchConfig mixmatch;
    bool mixmatch_pseudo_as_unlabeled = false;
    uint64_t step_seed = 0;
};

struct LossBreakdown {
    double total = 0.0;
    double classification = 0.0;
    double adversarial = 0.0;
    double semantic = 0.0;
    double mixmatch = 0.0;
    double mean_disc_src = 0.5;
    double mean_disc_tgt = 0.5;
};

/// State captured at the unperturbed parameters so a finite-difference
/// probe evaluates the same function the backward pass differentiates:
/// the argmax labels grouping target rows for the centroid update and the
/// guessed labels inside the semi-supervised loss are both constants of
/// the step.
struct FrozenStep {
    std::vector<int> target_labels;
    Matrix mixmatch_guess;
    bool valid = false;
};

/// Pure evaluation against the pre-update bank state.
LossBreakdown total_loss_value(const GsdeModel& m, const CentroidBank& bank,
                               const Batch& src, const Batch& tgt,
                               const TotalLossConfig& cfg,
                               const FrozenStep* frozen = nullptr);

/// Accumulates all parameter gradients, commits the centroid update, and
/// returns the component values. Throws NumericError naming the component
/// if any value is non-finite. Pass capture to record the frozen state.
LossBreakdown total_loss_backward(GsdeModel& m, CentroidBank& bank,
                                  const Batch& src, const Batch& tgt,
                                  const TotalLossConfig& cfg,
                                  FrozenStep* capture = nullptr);

}  // namespace gsde
