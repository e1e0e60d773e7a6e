#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsde/nn.hpp"

namespace gsde {

// ---------------------------------------------------------------------------
// Post-run pseudo-label scoring: classifier probability, neighborhood
// aggregation and label propagation, averaged into one confidence score
// per target sample.
// ---------------------------------------------------------------------------
struct ScoreTable {
    Matrix p;      // n_t x K classifier probabilities
    Matrix p_na;   // neighborhood-aggregated
    Matrix p_lp;   // label-propagated
    Matrix p_all;  // elementwise mean of the three
    std::vector<int> pseudo_labels;   // argmax of p_all, ties -> lowest id
    std::vector<double> confidence;   // max of p_all

    int size() const { return static_cast<int>(p.rows()); }
};

/// p_na(i) = mean probability of the m nearest other target samples,
/// nearest by cosine distance in feature space. Requires 1 <= m <= n-1.
Matrix neighborhood_scores(const Matrix& target_features,
                           const Matrix& target_probs, int m);

struct LabelPropConfig {
    double lambda = 1.0;
    int num_neighbors = 10;
    /// Anchor for target rows: the classifier probabilities, or zero
    /// rows (mass then arrives purely through the graph).
    enum class TargetAnchor { Probs, Zero };
    TargetAnchor target_anchor = TargetAnchor::Probs;
    double cg_rel_tol = 1e-10;
    int cg_max_iters = 0;  // 0 -> 4n + 100
};

// ---------------------------------------------------------------------------
// Label propagation over source and target rows jointly.
//
// Affinity: mutual k-nearest-neighbor graph under cosine similarity, edge
// weights max(0, cos). With degrees d_i and S = D^(-1/2) A D^(-1/2), the
// scores solve the positive-definite system
//
//     (I + lambda * (I - S)) P = Anchor
//
// by conjugate gradients, one right-hand side per class. Source anchors
// are the one-hot labels; target anchors follow the config. Nodes with
// zero degree keep their anchor exactly. Output rows are clamped at 0 and
// renormalized onto the simplex; only the target rows are returned.
// ---------------------------------------------------------------------------
Matrix label_propagation(const Matrix& all_features,
                         const std::vector<int>& source_labels,
                         const Matrix& target_probs, int num_classes,
                         const LabelPropConfig& cfg);

/// p_all = (p + p_na + p_lp) / 3 plus the derived labels and confidences.
ScoreTable combined_scores(const Matrix& p, const Matrix& p_na,
                           const Matrix& p_lp);

/// The floor(fraction * n) highest-confidence samples as (target index,
/// pseudo-label), ties broken by lower index. fraction * n is snapped to
/// the nearest integer within 1e-9 first, so rational fractions like
/// (n-1)/N never lose a sample to binary rounding. Selections nest as the
/// fraction grows.
std::vector<std::pair<int, int>> select_top_fraction(const ScoreTable& table,
                                                     double fraction);

/// Number of samples select_top_fraction returns for a given table size.
int expansion_count(double fraction, int num_targets);

/// Audit dump: index,confidence,pseudo_label,p_0..p_{K-1} per target row.
void save_score_csv(const ScoreTable& table, const std::string& path);

}  // namespace gsde
