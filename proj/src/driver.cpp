#include "gsde/driver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <thread>

namespace gsde {

namespace {

// Salts for deriving independent streams from one run seed.
constexpr uint64_t kModelSalt = 0x6d6f64;
constexpr uint64_t kBatchSalt = 0x626174;
constexpr uint64_t kStepSalt = 0x737465;

}  // namespace

void ExperimentConfig::validate() const {
    if (max_runs < 1) throw ParamError("config: max_runs must be >= 1");
    if (iterations_per_run < 1) {
        throw ParamError("config: iterations_per_run must be >= 1");
    }
    if (batch_size < 1) throw ParamError("config: batch_size must be >= 1");
    if (learning_rate <= 0.0) {
        throw ParamError("config: learning_rate must be positive");
    }
    if (num_bottlenecks < 1) {
        throw ParamError("config: num_bottlenecks must be >= 1");
    }
    if (eval_interval < 1) throw ParamError("config: eval_interval must be >= 1");
    if (seeds.empty()) throw ParamError("config: need at least one seed");
    if (centroid_theta < 0.0 || centroid_theta > 1.0) {
        throw ParamError("config: centroid_theta must lie in [0,1]");
    }
}

Evaluation evaluate_accuracy(const GsdeModel& m, const Dataset& data) {
    LabelAudit::EvalScope scope;
    const Matrix p = class_probs(m, features(m, data.feature_matrix()));
    const std::vector<int> pred = argmax_rows(p);

    Evaluation ev;
    std::vector<int> per_class_total(static_cast<size_t>(data.num_classes), 0);
    std::vector<int> per_class_hit(static_cast<size_t>(data.num_classes), 0);
    int total = 0;
    int hit = 0;
    for (int i = 0; i < data.size(); ++i) {
        const auto truth = data.samples[static_cast<size_t>(i)].eval_label();
        if (!truth) continue;
        ++total;
        ++per_class_total[static_cast<size_t>(*truth)];
        if (pred[static_cast<size_t>(i)] == *truth) {
            ++hit;
            ++per_class_hit[static_cast<size_t>(*truth)];
        }
    }
    if (total == 0) return ev;
    ev.accuracy = static_cast<double>(hit) / total;
    double acc_sum = 0.0;
    int classes_seen = 0;
    for (int c = 0; c < data.num_classes; ++c) {
        if (per_class_total[static_cast<size_t>(c)] == 0) continue;
        ++classes_seen;
        acc_sum += static_cast<double>(per_class_hit[static_cast<size_t>(c)]) /
                   per_class_total[static_cast<size_t>(c)];
    }
    ev.per_class_accuracy = classes_seen > 0 ? acc_sum / classes_seen : 0.0;
    return ev;
}

std::pair<double, double> evaluate_discriminator(const GsdeModel& m,
                                                 const Dataset& source,
                                                 const Dataset& target) {
    const auto mean_disc = [&](const Dataset& d) {
        const Matrix f = features(m, d.feature_matrix());
        const Matrix p = class_probs(m, f);
        const Matrix logits = domain_logits(m, multilinear(f, p));
        return sigmoid(logits).mean();
    };
    return {mean_disc(source), mean_disc(target)};
}

Dataset expand_source(const Dataset& source, const Dataset& target,
                      const ScoreTable* table, int run, int max_runs) {
    if (run < 1 || run > max_runs) {
        throw ParamError("expand_source: run index out of range");
    }
    Dataset out = source;
    if (run == 1) return out;
    if (!table) {
        throw ParamError("expand_source: runs beyond the first need scores");
    }
    if (table->size() != target.size()) {
        throw ShapeError("expand_source: score table does not match target");
    }
    const double fraction =
        static_cast<double>(run - 1) / static_cast<double>(max_runs);
    const auto selected = select_top_fraction(*table, fraction);
    out.samples.reserve(out.samples.size() + selected.size());
    LabelAudit::EvalScope scope;  // carry ground truth along for evaluation
    for (const auto& [idx, pseudo] : selected) {
        const auto& s = target.samples[static_cast<size_t>(idx)];
        out.samples.push_back(
            LabeledSample::pseudo_source(s.features, pseudo, s.eval_label()));
    }
    return out;
}

Dataset pseudo_labeled_subset(const Dataset& target, const ScoreTable& table,
                              double fraction) {
    Dataset out;
    out.num_classes = target.num_classes;
    out.feature_dim = target.feature_dim;
    out.name = target.name + "_pseudo";
    LabelAudit::EvalScope scope;
    for (const auto& [idx, pseudo] : select_top_fraction(table, fraction)) {
        const auto& s = target.samples[static_cast<size_t>(idx)];
        out.samples.push_back(
            LabeledSample::pseudo_source(s.features, pseudo, s.eval_label()));
    }
    return out;
}

RunResult train_single_run(const ExperimentConfig& cfg,
                           const Dataset& expanded_source,
                           const Dataset& target, uint64_t run_seed,
                           const GsdeModel* warm_start,
                           const Dataset* extra_cls) {
    if (expanded_source.empty() || target.empty()) {
        throw ParamError("train_single_run: empty dataset");
    }
    const int num_classes = std::max(expanded_source.num_classes,
                                     target.num_classes);
    ModelDims dims;
    dims.input = expanded_source.feature_dim;
    dims.hidden = cfg.hidden_dim;
    dims.bottleneck = cfg.bottleneck_dim;
    dims.classes = num_classes;

    RunResult rr;
    rr.model = warm_start ? *warm_start
                          : init_model(dims, cfg.num_bottlenecks,
                                       mix_seed(run_seed, kModelSalt));
    rr.record.start_fingerprint = parameter_fingerprint(rr.model);

    CentroidBank bank(num_classes, cfg.bottleneck_dim, cfg.centroid_theta);
    GrlSchedule schedule{cfg.grl_gamma, cfg.iterations_per_run};

    const int batch = std::min({cfg.batch_size, expanded_source.size(),
                                target.size()});
    MinibatchIterator batches(expanded_source, target, batch,
                              mix_seed(run_seed, kBatchSalt));

    // Optional plain classification stream over pseudo-labeled targets.
    std::unique_ptr<MinibatchIterator> extra_batches;
    if (extra_cls && !extra_cls->empty()) {
        const int extra_batch = std::min(batch, extra_cls->size());
        extra_batches = std::make_unique<MinibatchIterator>(
            *extra_cls, *extra_cls, extra_batch,
            mix_seed(run_seed, kBatchSalt + 1));
    }

    const auto record_stats = [&](int iteration) {
        const Evaluation ev = evaluate_accuracy(rr.model, target);
        const auto [dsrc, dtgt] =
            evaluate_discriminator(rr.model, expanded_source, target);
        rr.record.trace.push_back(
            {iteration, ev.accuracy, ev.per_class_accuracy, dsrc, dtgt});
    };

    try {
        for (int it = 0; it < cfg.iterations_per_run; ++it) {
            const double progress =
                static_cast<double>(it) / cfg.iterations_per_run;
            const double lr =
                cfg.learning_rate *
                std::pow(1.0 + cfg.lr_anneal_alpha * progress,
                         -cfg.lr_anneal_beta);

            TotalLossConfig step;
            step.lam = schedule.lam(progress);
            step.enable_adversarial = true;
            step.enable_semantic = !cfg.ablation.disable_semantic;
            step.enable_mixmatch = !cfg.ablation.disable_mixmatch;
            step.mixmatch = cfg.mixmatch;
            step.mixmatch_pseudo_as_unlabeled = cfg.mixmatch_pseudo_as_unlabeled;
            step.step_seed = mix_seed(run_seed, kStepSalt + it);

            auto [src_batch, tgt_batch] = batches.next();
            zero_grad(rr.model);
            total_loss_backward(rr.model, bank, src_batch, tgt_batch, step);

            if (extra_batches) {
                auto [pseudo_batch, unused] = extra_batches->next();
                const ModelForward fw = model_forward(rr.model, pseudo_batch.x);
                const double extra =
                    classification_loss(fw.p, pseudo_batch.labels);
                if (!std::isfinite(extra)) {
                    throw NumericError(
                        "total loss: pseudo-label classification component "
                        "is not finite");
                }
                const Matrix dlogits =
                    (fw.p - onehot(pseudo_batch.labels, num_classes)) /
                    static_cast<double>(fw.p.rows());
                model_backward(rr.model, fw, dlogits, Matrix());
            }

            sgd_step_model(rr.model, lr, cfg.weight_decay);

            if ((it + 1) % cfg.eval_interval == 0) record_stats(it + 1);
        }
    } catch (const NumericError& e) {
        rr.record.failed = true;
        rr.record.fail_reason = e.what();
    }

    if (rr.record.trace.empty() ||
        rr.record.trace.back().iteration != cfg.iterations_per_run) {
        if (!rr.record.failed) record_stats(cfg.iterations_per_run);
    }
    const Evaluation final_ev = evaluate_accuracy(rr.model, target);
    rr.record.final_accuracy = final_ev.accuracy;
    rr.record.final_per_class_accuracy = final_ev.per_class_accuracy;
    rr.record.end_fingerprint = parameter_fingerprint(rr.model);
    return rr;
}

ScoreTable score_targets(const GsdeModel& m, const Dataset& source,
                         const Dataset& target, const ExperimentConfig& cfg) {
    const Matrix f_tgt = features(m, target.feature_matrix());
    const Matrix p_tgt = class_probs(m, f_tgt);
    if (cfg.ablation.disable_scoring_extras) {
        return combined_scores(p_tgt, p_tgt, p_tgt);
    }

    const int m_neighbors =
        std::min(cfg.score_neighbors, target.size() - 1);
    const Matrix p_na = m_neighbors >= 1
                            ? neighborhood_scores(f_tgt, p_tgt, m_neighbors)
                            : p_tgt;

    // Propagation graph over the original source rows plus all targets.
    const Matrix f_src = features(m, source.feature_matrix());
    Matrix all_features(f_src.rows() + f_tgt.rows(), f_src.cols());
    all_features.topRows(f_src.rows()) = f_src;
    all_features.bottomRows(f_tgt.rows()) = f_tgt;
    std::vector<int> src_labels;
    src_labels.reserve(static_cast<size_t>(source.size()));
    for (const auto& s : source.samples) {
        src_labels.push_back(s.train_label().value_or(-1));
    }
    LabelPropConfig lp;
    lp.lambda = cfg.lp_lambda;
    lp.num_neighbors = cfg.lp_neighbors;
    lp.target_anchor = cfg.lp_target_anchor;
    const int num_classes = std::max(source.num_classes, target.num_classes);
    const Matrix p_lp =
        label_propagation(all_features, src_labels, p_tgt, num_classes, lp);

    return combined_scores(p_tgt, p_na, p_lp);
}

ExperimentResult run_gsde(const ExperimentConfig& cfg, const Dataset& source,
                          const Dataset& target, uint64_t seed) {
    cfg.validate();
    ExperimentResult result;
    ScoreTable prev_scores;
    bool have_scores = false;
    GsdeModel prev_model;
    bool have_model = false;

    for (int run = 1; run <= cfg.max_runs; ++run) {
        const double fraction = static_cast<double>(run - 1) / cfg.max_runs;

        Dataset expanded = source;
        Dataset pseudo_set;
        if (run > 1 && have_scores) {
            if (cfg.ablation.no_expansion) {
                pseudo_set = pseudo_labeled_subset(target, prev_scores,
                                                   fraction);
            } else {
                expanded = expand_source(source, target, &prev_scores, run,
                                         cfg.max_runs);
            }
        }

        const uint64_t run_seed = mix_seed(seed, static_cast<uint64_t>(run));
        RunResult rr = train_single_run(
            cfg, expanded, target, run_seed,
            cfg.ablation.no_reinit && have_model ? &prev_model : nullptr,
            cfg.ablation.no_expansion && !pseudo_set.empty() ? &pseudo_set
                                                             : nullptr);
        rr.record.run = run;

        // Expansion bookkeeping: size plus pseudo-label accuracy.
        const int expansion = cfg.ablation.no_expansion
                                  ? pseudo_set.size()
                                  : expanded.size() - source.size();
        rr.record.expansion_size = expansion;
        if (expansion > 0) {
            LabelAudit::EvalScope scope;
            const auto& pool = cfg.ablation.no_expansion
                                   ? pseudo_set.samples
                                   : expanded.samples;
            const size_t begin = cfg.ablation.no_expansion
                                     ? 0
                                     : static_cast<size_t>(source.size());
            int hit = 0;
            int known = 0;
            for (size_t i = begin; i < pool.size(); ++i) {
                const auto truth = pool[i].eval_label();
                if (!truth) continue;
                ++known;
                if (pool[i].train_label() == truth) ++hit;
            }
            rr.record.pseudo_accuracy =
                known > 0 ? static_cast<double>(hit) / known : -1.0;
        }

        const bool failed = rr.record.failed;
        result.records.push_back(rr.record);
        if (failed) break;

        result.tables.push_back(score_targets(rr.model, source, target, cfg));
        prev_scores = result.tables.back();
        have_scores = true;
        prev_model = std::move(rr.model);
        have_model = true;
    }
    return result;
}

std::vector<ExperimentResult> run_gsde_all_seeds(const ExperimentConfig& cfg,
                                                 const Dataset& source,
                                                 const Dataset& target) {
    cfg.validate();
    std::vector<ExperimentResult> results(cfg.seeds.size());

    size_t workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char* env = std::getenv("GSDE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) workers = static_cast<size_t>(v);
    }
    workers = std::min(workers, cfg.seeds.size());

    std::atomic<size_t> next{0};
    const auto work = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) return;
            results[i] = run_gsde(cfg, source, target, cfg.seeds[i]);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return results;
}

std::pair<Dataset, Dataset> make_benchmark(int n, double noise_sd,
                                           double rotation_deg,
                                           uint64_t seed) {
    Dataset source = gen_two_moons(n, noise_sd, mix_seed(seed, 0x5c));
    Dataset target_raw = gen_two_moons(n, noise_sd, mix_seed(seed, 0x7a));
    Dataset target = as_target_domain(
        shift_domain(target_raw, rotation_deg, RowVector(), 1.0, 0.0,
                     mix_seed(seed, 0x33)));
    return {std::move(source), std::move(target)};
}

}  // namespace gsde
