#include "gsde/losses.hpp"

#include <cmath>

namespace gsde {

namespace {

constexpr double kNormFloor = 1e-12;

double softplus(double x) {
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

/// Per-class means of the labeled rows; count 0 marks an absent class.
void class_means(const Matrix& f, const std::vector<int>& labels,
                 int num_classes, Matrix& means, std::vector<int>& counts) {
    means = Matrix::Zero(num_classes, f.cols());
    counts.assign(static_cast<size_t>(num_classes), 0);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0) continue;
        if (y >= num_classes) {
            throw ContractError("update_centroids: label out of range");
        }
        means.row(y) += f.row(i);
        ++counts[static_cast<size_t>(y)];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<size_t>(c)] > 0) {
            means.row(c) /= counts[static_cast<size_t>(c)];
        }
    }
}

double cosine(const RowVector& u, const RowVector& v) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu < kNormFloor || nv < kNormFloor) return 0.0;
    return u.dot(v) / (nu * nv);
}

/// Adds coeff * d cos(u, v) to du and dv.
void add_cosine_grad(const RowVector& u, const RowVector& v, double coeff,
                     RowVector& du, RowVector& dv) {
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu < kNormFloor || nv < kNormFloor) return;
    const double c = u.dot(v) / (nu * nv);
    du += coeff * (v / (nu * nv) - c * u / (nu * nu));
    dv += coeff * (u / (nu * nv) - c * v / (nv * nv));
}

}  // namespace

std::vector<int> argmax_rows(const Matrix& p) {
    std::vector<int> out(static_cast<size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < p.cols(); ++c) {
            if (p(i, c) > p(i, best)) best = static_cast<int>(c);
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

CentroidBank::CentroidBank(int num_classes, int feature_dim, double theta_in) {
    if (num_classes < 1 || feature_dim < 1) {
        throw ParamError("CentroidBank: dimensions must be positive");
    }
    if (theta_in < 0.0 || theta_in > 1.0) {
        throw ParamError("CentroidBank: theta must lie in [0,1]");
    }
    source = Matrix::Zero(num_classes, feature_dim);
    target = Matrix::Zero(num_classes, feature_dim);
    source_init.assign(static_cast<size_t>(num_classes), 0);
    target_init.assign(static_cast<size_t>(num_classes), 0);
    theta = theta_in;
}

void update_centroids(CentroidBank& bank, const Matrix& f,
                      const std::vector<int>& labels, bool source_side) {
    if (static_cast<Eigen::Index>(labels.size()) != f.rows()) {
        throw ShapeError("update_centroids: one label per feature row");
    }
    if (f.cols() != bank.feature_dim()) {
        throw ShapeError("update_centroids: feature dimension mismatch");
    }
    Matrix means;
    std::vector<int> counts;
    class_means(f, labels, bank.num_classes(), means, counts);

    Matrix& c = source_side ? bank.source : bank.target;
    auto& init = source_side ? bank.source_init : bank.target_init;
    for (int k = 0; k < bank.num_classes(); ++k) {
        if (counts[static_cast<size_t>(k)] == 0) continue;
        if (init[static_cast<size_t>(k)]) {
            c.row(k) = bank.theta * c.row(k) +
                       (1.0 - bank.theta) * means.row(k);
        } else {
            c.row(k) = means.row(k);
            init[static_cast<size_t>(k)] = 1;
        }
    }
}

double semantic_loss_grad(const CentroidBank& bank, double lam, Matrix* dsrc,
                          Matrix* dtgt) {
    const int k_classes = bank.num_classes();
    Matrix ds = Matrix::Zero(k_classes, bank.feature_dim());
    Matrix dt = Matrix::Zero(k_classes, bank.feature_dim());
    double value = 0.0;

    for (int k = 0; k < k_classes; ++k) {
        const RowVector cs_k = bank.source.row(k);
        const RowVector ct_k = bank.target.row(k);
        const bool s_k = bank.source_init[static_cast<size_t>(k)] != 0;
        const bool t_k = bank.target_init[static_cast<size_t>(k)] != 0;

        if (s_k && t_k) {
            value += lam * (1.0 - cosine(cs_k, ct_k));
            RowVector du = RowVector::Zero(bank.feature_dim());
            RowVector dv = RowVector::Zero(bank.feature_dim());
            add_cosine_grad(cs_k, ct_k, -lam, du, dv);
            ds.row(k) += du;
            dt.row(k) += dv;
        }
        for (int j = 0; j < k_classes; ++j) {
            if (j == k) continue;
            const bool s_j = bank.source_init[static_cast<size_t>(j)] != 0;
            const bool t_j = bank.target_init[static_cast<size_t>(j)] != 0;
            const RowVector cs_j = bank.source.row(j);
            const RowVector ct_j = bank.target.row(j);
            if (s_k && s_j) {
                value += cosine(cs_k, cs_j);
                RowVector du = RowVector::Zero(bank.feature_dim());
                RowVector dv = RowVector::Zero(bank.feature_dim());
                add_cosine_grad(cs_k, cs_j, 1.0, du, dv);
                ds.row(k) += du;
                ds.row(j) += dv;
            }
            if (s_k && t_j) {
                value += lam * cosine(cs_k, ct_j);
                RowVector du = RowVector::Zero(bank.feature_dim());
                RowVector dv = RowVector::Zero(bank.feature_dim());
                add_cosine_grad(cs_k, ct_j, lam, du, dv);
                ds.row(k) += du;
                dt.row(j) += dv;
            }
            if (t_k && t_j) {
                value += lam * cosine(ct_k, ct_j);
                RowVector du = RowVector::Zero(bank.feature_dim());
                RowVector dv = RowVector::Zero(bank.feature_dim());
                add_cosine_grad(ct_k, ct_j, lam, du, dv);
                dt.row(k) += du;
                dt.row(j) += dv;
            }
        }
    }
    if (dsrc) *dsrc = std::move(ds);
    if (dtgt) *dtgt = std::move(dt);
    return value;
}

double semantic_loss(const CentroidBank& bank, double lam) {
    return semantic_loss_grad(bank, lam, nullptr, nullptr);
}

SemanticStep semantic_loss_step(CentroidBank& bank, const Matrix& f_src,
                                const std::vector<int>& src_labels,
                                const Matrix& f_tgt,
                                const std::vector<int>& tgt_labels,
                                double lam) {
    const int k_classes = bank.num_classes();

    // Chain factor from new centroid to batch mean, captured before the
    // update: 1 on a first sighting, (1 - theta) afterwards.
    Matrix src_means, tgt_means;
    std::vector<int> src_counts, tgt_counts;
    class_means(f_src, src_labels, k_classes, src_means, src_counts);
    class_means(f_tgt, tgt_labels, k_classes, tgt_means, tgt_counts);
    std::vector<double> src_coeff(static_cast<size_t>(k_classes), 0.0);
    std::vector<double> tgt_coeff(static_cast<size_t>(k_classes), 0.0);
    for (int c = 0; c < k_classes; ++c) {
        if (src_counts[static_cast<size_t>(c)] > 0) {
            src_coeff[static_cast<size_t>(c)] =
                bank.source_init[static_cast<size_t>(c)] ? 1.0 - bank.theta
                                                         : 1.0;
        }
        if (tgt_counts[static_cast<size_t>(c)] > 0) {
            tgt_coeff[static_cast<size_t>(c)] =
                bank.target_init[static_cast<size_t>(c)] ? 1.0 - bank.theta
                                                         : 1.0;
        }
    }

    update_centroids(bank, f_src, src_labels, /*source_side=*/true);
    update_centroids(bank, f_tgt, tgt_labels, /*source_side=*/false);

    SemanticStep step;
    Matrix dcs, dct;
    step.value = semantic_loss_grad(bank, lam, &dcs, &dct);

    step.df_src = Matrix::Zero(f_src.rows(), f_src.cols());
    step.df_tgt = Matrix::Zero(f_tgt.rows(), f_tgt.cols());
    for (Eigen::Index i = 0; i < f_src.rows(); ++i) {
        const int y = src_labels[static_cast<size_t>(i)];
        if (y < 0) continue;
        step.df_src.row(i) = src_coeff[static_cast<size_t>(y)] /
                             src_counts[static_cast<size_t>(y)] * dcs.row(y);
    }
    for (Eigen::Index i = 0; i < f_tgt.rows(); ++i) {
        const int y = tgt_labels[static_cast<size_t>(i)];
        if (y < 0) continue;
        step.df_tgt.row(i) = tgt_coeff[static_cast<size_t>(y)] /
                             tgt_counts[static_cast<size_t>(y)] * dct.row(y);
    }
    return step;
}

double classification_loss(const Matrix& probs,
                           const std::vector<int>& labels) {
    for (int y : labels) {
        if (y < 0) {
            throw ContractError(
                "classification_loss: unlabeled row reached the supervised "
                "loss");
        }
    }
    return cross_entropy(probs, labels);
}

namespace {

struct DiscPass {
    Matrix logits;   // (B_s + B_t) x 1
    double value = 0.0;
    double mean_src = 0.0;
    double mean_tgt = 0.0;
};

DiscPass disc_pass(const GsdeModel& m, const Matrix& z, Eigen::Index b_src,
                   double lam, StackCache* cache) {
    DiscPass out;
    out.logits = cache ? domain_logits(m, z, *cache) : domain_logits(m, z);
    const Eigen::Index n = out.logits.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double zi = out.logits(i, 0);
        const double d = i < b_src ? 1.0 : 0.0;
        total += d * softplus(-zi) + (1.0 - d) * softplus(zi);
        const double s = sigmoid(zi);
        (i < b_src ? out.mean_src : out.mean_tgt) += s;
    }
    out.value = lam * total / static_cast<double>(n);
    out.mean_src /= std::max<double>(1.0, static_cast<double>(b_src));
    out.mean_tgt /= std::max<double>(1.0, static_cast<double>(n - b_src));
    return out;
}

void multilinear_backward(const Matrix& f, const Matrix& p, const Matrix& dz,
                          Matrix& df, Matrix& dp) {
    const Eigen::Index b = f.cols();
    const Eigen::Index k = p.cols();
    df = Matrix::Zero(f.rows(), b);
    dp = Matrix::Zero(p.rows(), k);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto block = dz.row(i).segment(c * b, b);
            df.row(i) += p(i, c) * block;
            dp(i, c) = block.dot(f.row(i));
        }
    }
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

}  // namespace

double adversarial_loss(const GsdeModel& m, const Matrix& f_src,
                        const Matrix& p_src, const Matrix& f_tgt,
                        const Matrix& p_tgt, double lam) {
    if (f_src.rows() == 0 || f_tgt.rows() == 0) {
        throw ParamError("adversarial_loss: empty batch");
    }
    const Matrix z = vstack(multilinear(f_src, p_src),
                            multilinear(f_tgt, p_tgt));
    return disc_pass(m, z, f_src.rows(), lam, nullptr).value;
}

AdversarialStep adversarial_loss_step(GsdeModel& m, const Matrix& f_src,
                                      const Matrix& p_src, const Matrix& f_tgt,
                                      const Matrix& p_tgt, double lam) {
    if (f_src.rows() == 0 || f_tgt.rows() == 0) {
        throw ParamError("adversarial_loss: empty batch");
    }
    const Eigen::Index b_src = f_src.rows();
    const Matrix z = vstack(multilinear(f_src, p_src),
                            multilinear(f_tgt, p_tgt));

    StackCache cache;
    const DiscPass pass = disc_pass(m, z, b_src, lam, &cache);

    const Eigen::Index n = pass.logits.rows();
    Matrix dlogit(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = i < b_src ? 1.0 : 0.0;
        dlogit(i, 0) =
            lam * (sigmoid(pass.logits(i, 0)) - d) / static_cast<double>(n);
    }

    const Matrix dz = discriminator_backward(m, cache, dlogit);
    const Matrix dz_feat = grl_backward(dz, lam);

    AdversarialStep step;
    step.value = pass.value;
    step.mean_disc_src = pass.mean_src;
    step.mean_disc_tgt = pass.mean_tgt;
    multilinear_backward(f_src, p_src, dz_feat.topRows(b_src), step.df_src,
                         step.dp_src);
    multilinear_backward(f_tgt, p_tgt, dz_feat.bottomRows(n - b_src),
                         step.df_tgt, step.dp_tgt);
    return step;
}

Matrix sharpen(const Matrix& q, double temperature) {
    if (temperature <= 0.0) {
        throw ParamError("sharpen: temperature must be positive");
    }
    Matrix out(q.rows(), q.cols());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        Eigen::ArrayXd powed =
            q.row(r).array().max(0.0).pow(1.0 / temperature);
        const double sum = powed.sum();
        if (sum <= 0.0) {
            out.row(r).setConstant(1.0 / static_cast<double>(q.cols()));
        } else {
            out.row(r) = (powed / sum).transpose();
        }
    }
    return out;
}

namespace {

struct MixMatchPlan {
    std::vector<Matrix> noise;    // num_augment of B_u x d
    std::vector<double> lambda;   // one per mixed row, clamped >= 1/2
    std::vector<int> perm;        // permutation over the joint pool
};

MixMatchPlan make_mixmatch_plan(const MixMatchConfig& cfg, Eigen::Index b_l,
                                Eigen::Index b_u, Eigen::Index dim,
                                uint64_t seed) {
    MixMatchPlan plan;
    Rng rng(seed);
    plan.noise.reserve(static_cast<size_t>(cfg.num_augment));
    for (int a = 0; a < cfg.num_augment; ++a) {
        Matrix n(b_u, dim);
        for (Eigen::Index i = 0; i < b_u; ++i) {
            for (Eigen::Index j = 0; j < dim; ++j) {
                n(i, j) = cfg.augment_noise_sd * rng.normal();
            }
        }
        plan.noise.push_back(std::move(n));
    }
    const Eigen::Index pool = b_l + b_u * cfg.num_augment;
    plan.lambda.reserve(static_cast<size_t>(pool));
    for (Eigen::Index i = 0; i < pool; ++i) {
        const double l = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha);
        plan.lambda.push_back(std::max(l, 1.0 - l));
    }
    plan.perm.resize(static_cast<size_t>(pool));
    for (Eigen::Index i = 0; i < pool; ++i) {
        plan.perm[static_cast<size_t>(i)] = static_cast<int>(i);
    }
    rng.shuffle(plan.perm);
    return plan;
}

struct MixMatchAssembly {
    Matrix x_labeled, y_labeled;      // B_l x d, B_l x K
    Matrix x_unlabeled, q_unlabeled;  // B_u*A x d, B_u*A x K
};

/// Pools, label guessing and MixUp are identical between the value and
/// backward paths; everything random comes from the plan.
MixMatchAssembly assemble_mixmatch(const GsdeModel& m,
                                   const MixMatchConfig& cfg,
                                   const Matrix& x_labeled,
                                   const std::vector<int>& labels,
                                   int num_classes, const Matrix& x_unlabeled,
                                   const MixMatchPlan& plan,
                                   const Matrix* frozen_guess,
                                   Matrix* guess_out) {
    const Eigen::Index b_l = x_labeled.rows();
    const Eigen::Index b_u = x_unlabeled.rows();
    const int a_count = cfg.num_augment;

    Matrix guess;
    if (frozen_guess) {
        guess = *frozen_guess;
    } else {
        Matrix mean_p = Matrix::Zero(b_u, num_classes);
        for (int a = 0; a < a_count; ++a) {
            const Matrix xa = x_unlabeled + plan.noise[static_cast<size_t>(a)];
            mean_p += class_probs(m, features(m, xa));
        }
        mean_p /= static_cast<double>(a_count);
        guess = sharpen(mean_p, cfg.temperature);
    }
    if (guess_out) *guess_out = guess;

    // Joint pool: labeled rows first, then every jittered unlabeled copy.
    const Eigen::Index pool = b_l + b_u * a_count;
    Matrix pool_x(pool, x_unlabeled.cols());
    Matrix pool_y(pool, num_classes);
    if (b_l > 0) {
        pool_x.topRows(b_l) = x_labeled;
        pool_y.topRows(b_l) = onehot(labels, num_classes);
    }
    for (int a = 0; a < a_count; ++a) {
        pool_x.middleRows(b_l + a * b_u, b_u) =
            x_unlabeled + plan.noise[static_cast<size_t>(a)];
        pool_y.middleRows(b_l + a * b_u, b_u) = guess;
    }

    MixMatchAssembly out;
    out.x_labeled.resize(b_l, x_unlabeled.cols());
    out.y_labeled.resize(b_l, num_classes);
    out.x_unlabeled.resize(pool - b_l, x_unlabeled.cols());
    out.q_unlabeled.resize(pool - b_l, num_classes);
    for (Eigen::Index i = 0; i < pool; ++i) {
        const double l = plan.lambda[static_cast<size_t>(i)];
        const int j = plan.perm[static_cast<size_t>(i)];
        if (i < b_l) {
            out.x_labeled.row(i) = l * pool_x.row(i) + (1 - l) * pool_x.row(j);
            out.y_labeled.row(i) = l * pool_y.row(i) + (1 - l) * pool_y.row(j);
        } else {
            out.x_unlabeled.row(i - b_l) =
                l * pool_x.row(i) + (1 - l) * pool_x.row(j);
            out.q_unlabeled.row(i - b_l) =
                l * pool_y.row(i) + (1 - l) * pool_y.row(j);
        }
    }
    return out;
}

void validate_mixmatch_args(const MixMatchConfig& cfg,
                            const Matrix& x_unlabeled) {
    if (cfg.num_augment < 1) {
        throw ParamError("mixmatch: need at least one augmentation");
    }
    if (cfg.temperature <= 0.0 || cfg.mixup_alpha <= 0.0) {
        throw ParamError("mixmatch: temperature and alpha must be positive");
    }
    if (x_unlabeled.rows() == 0) {
        throw ParamError("mixmatch: empty unlabeled batch");
    }
}

}  // namespace

double mixmatch_loss(const GsdeModel& m, const MixMatchConfig& cfg,
                     const Matrix& x_labeled, const std::vector<int>& labels,
                     int num_classes, const Matrix& x_unlabeled, uint64_t seed,
                     const Matrix* frozen_guess) {
    validate_mixmatch_args(cfg, x_unlabeled);
    const auto plan = make_mixmatch_plan(cfg, x_labeled.rows(),
                                         x_unlabeled.rows(),
                                         x_unlabeled.cols(), seed);
    const auto mix = assemble_mixmatch(m, cfg, x_labeled, labels, num_classes,
                                       x_unlabeled, plan, frozen_guess,
                                       nullptr);
    double value = 0.0;
    if (mix.x_labeled.rows() > 0) {
        const Matrix p = class_probs(m, features(m, mix.x_labeled));
        value += cross_entropy(p, mix.y_labeled);
    }
    const Matrix p_u = class_probs(m, features(m, mix.x_unlabeled));
    value += cfg.unlabeled_weight * (p_u - mix.q_unlabeled).squaredNorm() /
             static_cast<double>(p_u.rows() * p_u.cols());
    return value;
}

double mixmatch_loss_step(GsdeModel& m, const MixMatchConfig& cfg,
                          const Matrix& x_labeled,
                          const std::vector<int>& labels, int num_classes,
                          const Matrix& x_unlabeled, uint64_t seed,
                          Matrix* guess_out) {
    validate_mixmatch_args(cfg, x_unlabeled);
    const auto plan = make_mixmatch_plan(cfg, x_labeled.rows(),
                                         x_unlabeled.rows(),
                                         x_unlabeled.cols(), seed);
    const auto mix = assemble_mixmatch(m, cfg, x_labeled, labels, num_classes,
                                       x_unlabeled, plan, nullptr, guess_out);
    double value = 0.0;
    if (mix.x_labeled.rows() > 0) {
        const ModelForward fw = model_forward(m, mix.x_labeled);
        value += cross_entropy(fw.p, mix.y_labeled);
        const Matrix dlogits =
            (fw.p - mix.y_labeled) / static_cast<double>(fw.p.rows());
        model_backward(m, fw, dlogits, Matrix());
    }
    {
        const ModelForward fw = model_forward(m, mix.x_unlabeled);
        value += cfg.unlabeled_weight *
                 (fw.p - mix.q_unlabeled).squaredNorm() /
                 static_cast<double>(fw.p.rows() * fw.p.cols());
        const Matrix dp = 2.0 * cfg.unlabeled_weight *
                          (fw.p - mix.q_unlabeled) /
                          static_cast<double>(fw.p.rows() * fw.p.cols());
        const Matrix dlogits = softmax_backward(fw.p, dp);
        model_backward(m, fw, dlogits, Matrix());
    }
    return value;
}

namespace {

void check_component(double value, const char* name) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string("total loss: ") + name +
                           " component is not finite");
    }
}

/// Splits a source-stream batch for the semi-supervised loss when
/// pseudo-source rows are to be treated as unlabeled data.
struct MixmatchInputs {
    Matrix x_labeled;
    std::vector<int> labels;
    Matrix x_unlabeled;
};

MixmatchInputs mixmatch_inputs(const Batch& src, const Batch& tgt,
                               bool pseudo_as_unlabeled) {
    MixmatchInputs mi;
    if (!pseudo_as_unlabeled) {
        mi.x_labeled = src.x;
        mi.labels = src.labels;
        mi.x_unlabeled = tgt.x;
        return mi;
    }
    std::vector<int> keep, move;
    for (int i = 0; i < src.size(); ++i) {
        (src.domains[static_cast<size_t>(i)] == Domain::PseudoSource ? move
                                                                     : keep)
            .push_back(i);
    }
    mi.x_labeled.resize(static_cast<Eigen::Index>(keep.size()), src.x.cols());
    for (size_t i = 0; i < keep.size(); ++i) {
        mi.x_labeled.row(static_cast<Eigen::Index>(i)) =
            src.x.row(keep[i]);
        mi.labels.push_back(src.labels[static_cast<size_t>(keep[i])]);
    }
    mi.x_unlabeled.resize(tgt.x.rows() + static_cast<Eigen::Index>(move.size()),
                          tgt.x.cols());
    mi.x_unlabeled.topRows(tgt.x.rows()) = tgt.x;
    for (size_t i = 0; i < move.size(); ++i) {
        mi.x_unlabeled.row(tgt.x.rows() + static_cast<Eigen::Index>(i)) =
            src.x.row(move[i]);
    }
    return mi;
}

}  // namespace

LossBreakdown total_loss_value(const GsdeModel& m, const CentroidBank& bank,
                               const Batch& src, const Batch& tgt,
                               const TotalLossConfig& cfg,
                               const FrozenStep* frozen) {
    if (src.size() == 0 || tgt.size() == 0) {
        throw ParamError("total_loss: empty batch");
    }
    LossBreakdown bd;
    const Matrix f_src = features(m, src.x);
    const Matrix p_src = class_probs(m, f_src);
    const Matrix f_tgt = features(m, tgt.x);
    const Matrix p_tgt = class_probs(m, f_tgt);

    bd.classification = classification_loss(p_src, src.labels);
    check_component(bd.classification, "classification");

    if (cfg.enable_adversarial) {
        bd.adversarial = adversarial_loss(m, f_src, p_src, f_tgt, p_tgt,
                                          cfg.lam);
        check_component(bd.adversarial, "adversarial");
    }
    if (cfg.enable_semantic) {
        const std::vector<int> tgt_labels =
            frozen && frozen->valid ? frozen->target_labels
                                    : argmax_rows(p_tgt);
        CentroidBank advanced = bank;
        update_centroids(advanced, f_src, src.labels, /*source_side=*/true);
        update_centroids(advanced, f_tgt, tgt_labels, /*source_side=*/false);
        bd.semantic = semantic_loss(advanced, cfg.lam);
        check_component(bd.semantic, "semantic");
    }
    if (cfg.enable_mixmatch) {
        const auto mi = mixmatch_inputs(src, tgt,
                                        cfg.mixmatch_pseudo_as_unlabeled);
        bd.mixmatch = mixmatch_loss(
            m, cfg.mixmatch, mi.x_labeled, mi.labels, m.dims.classes,
            mi.x_unlabeled, cfg.step_seed,
            frozen && frozen->valid ? &frozen->mixmatch_guess : nullptr);
        check_component(bd.mixmatch, "mixmatch");
    }
    bd.total = bd.classification + bd.adversarial + bd.semantic + bd.mixmatch;
    return bd;
}

LossBreakdown total_loss_backward(GsdeModel& m, CentroidBank& bank,
                                  const Batch& src, const Batch& tgt,
                                  const TotalLossConfig& cfg,
                                  FrozenStep* capture) {
    if (src.size() == 0 || tgt.size() == 0) {
        throw ParamError("total_loss: empty batch");
    }
    LossBreakdown bd;
    const ModelForward fw_src = model_forward(m, src.x);
    const ModelForward fw_tgt = model_forward(m, tgt.x);

    bd.classification = classification_loss(fw_src.p, src.labels);
    check_component(bd.classification, "classification");
    Matrix dlogits_src = (fw_src.p - onehot(src.labels, m.dims.classes)) /
                         static_cast<double>(src.size());
    Matrix dlogits_tgt = Matrix::Zero(tgt.size(), m.dims.classes);
    Matrix df_src = Matrix::Zero(src.size(), m.dims.bottleneck);
    Matrix df_tgt = Matrix::Zero(tgt.size(), m.dims.bottleneck);

    if (cfg.enable_semantic) {
        const std::vector<int> tgt_labels = argmax_rows(fw_tgt.p);
        const SemanticStep step = semantic_loss_step(
            bank, fw_src.f, src.labels, fw_tgt.f, tgt_labels, cfg.lam);
        bd.semantic = step.value;
        check_component(bd.semantic, "semantic");
        df_src += step.df_src;
        df_tgt += step.df_tgt;
        if (capture) capture->target_labels = tgt_labels;
    }
    if (cfg.enable_adversarial) {
        const AdversarialStep adv = adversarial_loss_step(
            m, fw_src.f, fw_src.p, fw_tgt.f, fw_tgt.p, cfg.lam);
        bd.adversarial = adv.value;
        check_component(bd.adversarial, "adversarial");
        bd.mean_disc_src = adv.mean_disc_src;
        bd.mean_disc_tgt = adv.mean_disc_tgt;
        df_src += adv.df_src;
        df_tgt += adv.df_tgt;
        dlogits_src += softmax_backward(fw_src.p, adv.dp_src);
        dlogits_tgt += softmax_backward(fw_tgt.p, adv.dp_tgt);
    }

    model_backward(m, fw_src, dlogits_src, df_src);
    model_backward(m, fw_tgt, dlogits_tgt, df_tgt);

    if (cfg.enable_mixmatch) {
        const auto mi = mixmatch_inputs(src, tgt,
                                        cfg.mixmatch_pseudo_as_unlabeled);
        Matrix guess;
        bd.mixmatch = mixmatch_loss_step(m, cfg.mixmatch, mi.x_labeled,
                                         mi.labels, m.dims.classes,
                                         mi.x_unlabeled, cfg.step_seed,
                                         capture ? &guess : nullptr);
        check_component(bd.mixmatch, "mixmatch");
        if (capture) capture->mixmatch_guess = std::move(guess);
    }
    if (capture) capture->valid = true;

    bd.total = bd.classification + bd.adversarial + bd.semantic + bd.mixmatch;
    return bd;
}

}  // namespace gsde
