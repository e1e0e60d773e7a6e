#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gsde/nn.hpp"
#include "gsde/rng.hpp"

namespace gsde {

enum class Domain { Source, Target, PseudoSource };

std::string domain_tag(Domain d);           // "source" | "target" | "pseudo"
Domain parse_domain_tag(const std::string& tag);

// ---------------------------------------------------------------------------
// LabelAudit: instrumentation around ground-truth label reads.
//
// Training and selection code must only ever see trainer-visible labels;
// ground truth is read through LabeledSample::eval_label(), which records
// the read here. Reads made inside an EvalScope are sanctioned
// (evaluation, export); reads outside any scope count as leaks. A clean
// experiment finishes with leaked_reads() == 0.
// ---------------------------------------------------------------------------
class LabelAudit {
public:
    class EvalScope {
    public:
        EvalScope();
        ~EvalScope();
        EvalScope(const EvalScope&) = delete;
        EvalScope& operator=(const EvalScope&) = delete;
    };

    static void record_read();
    static uint64_t sanctioned_reads();
    static uint64_t leaked_reads();
    static void reset();
};

// ---------------------------------------------------------------------------
// LabeledSample / Dataset
// ---------------------------------------------------------------------------
struct LabeledSample {
    RowVector features;
    Domain domain = Domain::Source;

    /// Label visible to the trainer: the class for Source rows, the
    /// pseudo-label for PseudoSource rows, never set for Target rows.
    std::optional<int> train_label() const {
        return domain == Domain::Target ? std::nullopt : label_;
    }

    /// Ground truth, for evaluation only. Every call is recorded by
    /// LabelAudit.
    std::optional<int> eval_label() const {
        LabelAudit::record_read();
        return truth_;
    }

    bool has_truth() const { return truth_.has_value(); }

    static LabeledSample source(RowVector x, int label);
    static LabeledSample target(RowVector x, std::optional<int> truth);
    static LabeledSample pseudo_source(RowVector x, int pseudo_label,
                                       std::optional<int> truth);

private:
    std::optional<int> label_;  // trainer-visible
    std::optional<int> truth_;  // evaluation-only
    friend bool samples_equal(const LabeledSample&, const LabeledSample&);
};

bool samples_equal(const LabeledSample& a, const LabeledSample& b);

struct Dataset {
    std::vector<LabeledSample> samples;
    int num_classes = 0;
    int feature_dim = 0;
    std::string name;

    int size() const { return static_cast<int>(samples.size()); }
    bool empty() const { return samples.empty(); }

    /// Stacks all feature rows into a size x feature_dim matrix.
    Matrix feature_matrix() const;
};

bool datasets_equal(const Dataset& a, const Dataset& b);

// Generators ----------------------------------------------------------------

/// Two interleaving half-circle arcs, K = 2, 2-D, balanced classes
/// (count difference at most 1). Class 0 lies on the unit arc around the
/// origin, class 1 on the unit arc around (1, 0.5), plus isotropic
/// Gaussian noise of the given standard deviation. Sample order is
/// shuffled.
Dataset gen_two_moons(int n, double noise_sd, uint64_t seed);

/// Gaussian clusters, one per class center, classes as balanced as n
/// allows (equal shares, remainder to the lowest class ids).
Dataset gen_blobs(int n, int num_classes,
                  const std::vector<RowVector>& centers, double spread,
                  uint64_t seed);

/// x <- scale * R(rotation_deg) * x + translation + N(0, noise_sd^2).
/// Rotation requires 2-D features; labels, domains and sample count are
/// preserved.
Dataset shift_domain(const Dataset& d, double rotation_deg,
                     const RowVector& translation, double scale,
                     double noise_sd, uint64_t seed);

/// Relabels every sample as an unlabeled Target row, keeping the ground
/// truth for evaluation.
Dataset as_target_domain(Dataset d);

// CSV persistence -----------------------------------------------------------
//
// Header: f0,f1,...,f{d-1},label,domain
// label is an integer or empty; domain is source|target|pseudo.
// Values are printed with 17 significant digits so a round trip is exact.

void save_csv(const Dataset& d, const std::string& path);
Dataset load_csv(const std::string& path);

// Minibatching --------------------------------------------------------------

struct Batch {
    Matrix x;                     // batch x feature_dim
    std::vector<int> labels;      // trainer-visible; -1 where withheld
    std::vector<Domain> domains;

    int size() const { return static_cast<int>(x.rows()); }
};

Batch make_batch(const Dataset& d, const std::vector<int>& indices);

/// Paired source/target stream with independent epoch reshuffling: each
/// stream is an endless concatenation of fresh permutations read in
/// batch-sized chunks, so over any n consecutive draws from a stream of n
/// samples every index appears exactly once.
class MinibatchIterator {
public:
    MinibatchIterator(const Dataset& source, const Dataset& target, int batch,
                      uint64_t seed);

    struct IndexPair {
        std::vector<int> source;
        std::vector<int> target;
    };
    IndexPair next_indices();

    std::pair<Batch, Batch> next();

private:
    struct Stream {
        const Dataset* data = nullptr;
        Rng rng{0};
        std::vector<int> order;
        size_t pos = 0;
        std::vector<int> take(int n);
        void reshuffle();
    };
    Stream source_;
    Stream target_;
    int batch_;
};

}  // namespace gsde
