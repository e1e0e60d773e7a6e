#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsde/data.hpp"
#include "gsde/losses.hpp"
#include "gsde/model.hpp"
#include "gsde/scoring.hpp"

namespace gsde {

struct AblationFlags {
    bool no_reinit = false;
    bool no_expansion = false;
    bool disable_semantic = false;
    bool disable_mixmatch = false;
    bool disable_scoring_extras = false;
};

struct ExperimentConfig {
    std::string id = "gsde";
    int max_runs = 5;
    int iterations_per_run = 1000;
    int batch_size = 32;
    double learning_rate = 0.05;
    double lr_anneal_alpha = 10.0;   // lr(p) = lr0 * (1 + alpha*p)^(-beta)
    double lr_anneal_beta = 0.75;
    double weight_decay = 5e-4;
    int hidden_dim = 64;
    int bottleneck_dim = 16;
    int num_bottlenecks = 5;
    double grl_gamma = 10.0;
    double centroid_theta = 0.7;
    MixMatchConfig mixmatch;
    bool mixmatch_pseudo_as_unlabeled = false;
    int score_neighbors = 5;        // m for neighborhood aggregation
    double lp_lambda = 1.0;
    int lp_neighbors = 10;
    LabelPropConfig::TargetAnchor lp_target_anchor =
        LabelPropConfig::TargetAnchor::Probs;
    AblationFlags ablation;
    std::vector<uint64_t> seeds = {1, 2, 3};
    int eval_interval = 50;

    void validate() const;
};

struct IterStats {
    int iteration = 0;
    double accuracy = 0.0;
    double per_class_accuracy = 0.0;
    double mean_disc_src = 0.0;
    double mean_disc_tgt = 0.0;
};

struct RunRecord {
    int run = 0;
    int expansion_size = 0;
    double pseudo_accuracy = -1.0;   // accuracy of the expansion set; -1 if empty
    double final_accuracy = 0.0;
    double final_per_class_accuracy = 0.0;
    std::vector<IterStats> trace;
    uint64_t start_fingerprint = 0;  // parameters before the first step
    uint64_t end_fingerprint = 0;
    bool failed = false;
    std::string fail_reason;
};

struct RunResult {
    GsdeModel model;
    RunRecord record;
};

struct ExperimentResult {
    std::vector<RunRecord> records;
    std::vector<ScoreTable> tables;  // one per completed run
};

// ---------------------------------------------------------------------------
// Evaluation helpers (all ground-truth reads happen inside an EvalScope).
// ---------------------------------------------------------------------------
struct Evaluation {
    double accuracy = 0.0;
    double per_class_accuracy = 0.0;
};
Evaluation evaluate_accuracy(const GsdeModel& m, const Dataset& data);

/// Mean discriminator outputs over full datasets (source stream label 1).
std::pair<double, double> evaluate_discriminator(const GsdeModel& m,
                                                 const Dataset& source,
                                                 const Dataset& target);

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

/// Union of the original source set with the top (run-1)/max_runs scoring
/// targets, relabeled with their pseudo-labels and tagged PseudoSource.
/// The target set itself is never modified; selected samples stay in the
/// target stream. Run 1 returns the source set unchanged.
Dataset expand_source(const Dataset& source, const Dataset& target,
                      const ScoreTable* table, int run, int max_runs);

/// Dataset of just the selected targets with pseudo-labels (classification
/// stream for the no-expansion ablation).
Dataset pseudo_labeled_subset(const Dataset& target, const ScoreTable& table,
                              double fraction);

/// One training run from scratch (or from warm_start when reinitialization
/// is disabled). extra_cls, when present, adds a plain classification loss
/// over pseudo-labeled target samples without touching the other losses.
RunResult train_single_run(const ExperimentConfig& cfg,
                           const Dataset& expanded_source,
                           const Dataset& target, uint64_t run_seed,
                           const GsdeModel* warm_start = nullptr,
                           const Dataset* extra_cls = nullptr);

/// Scores the full target set with the trained model. With extras
/// disabled, neighborhood and propagation scores fall back to the plain
/// classifier probabilities.
ScoreTable score_targets(const GsdeModel& m, const Dataset& source,
                         const Dataset& target, const ExperimentConfig& cfg);

/// The full iterated expansion experiment for one seed. Record n is built
/// from record n-1's scores; a failed run keeps the partial results.
ExperimentResult run_gsde(const ExperimentConfig& cfg, const Dataset& source,
                          const Dataset& target, uint64_t seed);

/// One experiment per configured seed, fanned out over worker threads
/// (GSDE_THREADS caps the count); results come back in seed order.
std::vector<ExperimentResult> run_gsde_all_seeds(const ExperimentConfig& cfg,
                                                 const Dataset& source,
                                                 const Dataset& target);

/// Reference synthetic benchmark pair: two interleaved arcs, the target
/// rotated by the given angle.
std::pair<Dataset, Dataset> make_benchmark(int n, double noise_sd,
                                           double rotation_deg, uint64_t seed);

}  // namespace gsde
