#include "gsde/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gsde/error.hpp"

namespace gsde {

namespace {

/// Rows scaled to unit norm; zero rows stay zero.
Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n > 1e-12) out.row(i) /= n;
    }
    return out;
}

/// Indices of the k largest entries of row i of sim, self excluded,
/// ordered by (similarity desc, index asc).
std::vector<int> top_k_neighbors(const Matrix& sim, Eigen::Index i, int k) {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(sim.cols()) - 1);
    for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (j != i) idx.push_back(static_cast<int>(j));
    }
    const auto better = [&](int a, int b) {
        if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
        return a < b;
    };
    if (static_cast<int>(idx.size()) > k) {
        std::nth_element(idx.begin(), idx.begin() + k, idx.end(), better);
        idx.resize(static_cast<size_t>(k));
    }
    std::sort(idx.begin(), idx.end(), better);
    return idx;
}

void check_simplex_rows(const Matrix& p, const char* what) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (std::abs(p.row(i).sum() - 1.0) > 1e-6 || p.row(i).minCoeff() < -1e-9) {
            throw ContractError(std::string(what) + ": row " +
                                std::to_string(i) + " is not on the simplex");
        }
    }
}

}  // namespace

Matrix neighborhood_scores(const Matrix& target_features,
                           const Matrix& target_probs, int m) {
    const Eigen::Index n = target_features.rows();
    if (target_probs.rows() != n) {
        throw ShapeError("neighborhood_scores: feature/probability row count "
                         "mismatch");
    }
    if (m < 1) throw ParamError("neighborhood_scores: m must be positive");
    if (m > n - 1) {
        throw ParamError("neighborhood_scores: m exceeds the number of other "
                         "samples");
    }

    const Matrix unit = normalize_rows(target_features);
    const Matrix sim = unit * unit.transpose();

    Matrix out(n, target_probs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto nn = top_k_neighbors(sim, i, m);
        RowVector acc = RowVector::Zero(target_probs.cols());
        for (int j : nn) acc += target_probs.row(j);
        out.row(i) = acc / static_cast<double>(m);
    }
    return out;
}

Matrix label_propagation(const Matrix& all_features,
                         const std::vector<int>& source_labels,
                         const Matrix& target_probs, int num_classes,
                         const LabelPropConfig& cfg) {
    if (cfg.lambda < 0.0) {
        throw ParamError("label_propagation: lambda must be non-negative");
    }
    if (cfg.num_neighbors < 1) {
        throw ParamError("label_propagation: need at least one neighbor");
    }
    const Eigen::Index n_src = static_cast<Eigen::Index>(source_labels.size());
    const Eigen::Index n_tgt = target_probs.rows();
    const Eigen::Index n = all_features.rows();
    if (n != n_src + n_tgt) {
        throw ShapeError("label_propagation: features must stack source rows "
                         "then target rows");
    }
    if (n == 0) return Matrix(0, num_classes);

    // Anchor: one-hot labels for source rows, configured prior for targets.
    Matrix anchor = Matrix::Zero(n, num_classes);
    for (Eigen::Index i = 0; i < n_src; ++i) {
        const int y = source_labels[static_cast<size_t>(i)];
        if (y < 0 || y >= num_classes) {
            throw ContractError("label_propagation: source label out of range");
        }
        anchor(i, y) = 1.0;
    }
    if (cfg.target_anchor == LabelPropConfig::TargetAnchor::Probs) {
        anchor.bottomRows(n_tgt) = target_probs;
    }

    // Mutual kNN affinities, clamped at 0.
    const Matrix unit = normalize_rows(all_features);
    const Matrix sim = unit * unit.transpose();
    const int k = std::min<int>(cfg.num_neighbors, static_cast<int>(n) - 1);
    std::vector<std::vector<int>> knn(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        knn[static_cast<size_t>(i)] = top_k_neighbors(sim, i, k);
    }
    const auto is_neighbor = [&](Eigen::Index i, int j) {
        const auto& v = knn[static_cast<size_t>(i)];
        return std::find(v.begin(), v.end(), j) != v.end();
    };
    Matrix affinity = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j : knn[static_cast<size_t>(i)]) {
            if (j > static_cast<int>(i)) continue;  // handle each pair once
            if (!is_neighbor(j, static_cast<int>(i))) continue;
            const double a = std::max(0.0, sim(i, j));
            affinity(i, j) = a;
            affinity(j, i) = a;
        }
    }

    // System matrix M = I + lambda (I - D^-1/2 A D^-1/2); zero-degree rows
    // collapse to the identity so isolated nodes keep their anchor.
    Eigen::VectorXd degree = affinity.rowwise().sum();
    Matrix system = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (degree(i) <= 0.0) {
            system(i, i) = 1.0;
            continue;
        }
        system(i, i) = 1.0 + cfg.lambda;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (affinity(i, j) > 0.0 && degree(j) > 0.0) {
                system(i, j) -= cfg.lambda * affinity(i, j) /
                                std::sqrt(degree(i) * degree(j));
            }
        }
    }

    // Conjugate gradients per class column.
    const int max_iters = cfg.cg_max_iters > 0
                              ? cfg.cg_max_iters
                              : static_cast<int>(4 * n + 100);
    Matrix solution(n, num_classes);
    for (int c = 0; c < num_classes; ++c) {
        Eigen::VectorXd b = anchor.col(c);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd r = b;
        Eigen::VectorXd p = r;
        double rs = r.squaredNorm();
        const double b_norm = b.norm();
        const double tol = cfg.cg_rel_tol * std::max(b_norm, 1e-300);
        for (int it = 0; it < max_iters && std::sqrt(rs) > tol; ++it) {
            const Eigen::VectorXd mp = system * p;
            const double alpha = rs / p.dot(mp);
            x += alpha * p;
            r -= alpha * mp;
            const double rs_new = r.squaredNorm();
            p = r + (rs_new / rs) * p;
            rs = rs_new;
        }
        solution.col(c) = x;
    }

    // Back onto the simplex: clamp at 0, renormalize; a fully clamped row
    // falls back to uniform.
    Matrix out = solution.bottomRows(n_tgt).cwiseMax(0.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).sum();
        if (s > 1e-300) {
            out.row(i) /= s;
        } else {
            out.row(i).setConstant(1.0 / num_classes);
        }
    }
    return out;
}

ScoreTable combined_scores(const Matrix& p, const Matrix& p_na,
                           const Matrix& p_lp) {
    if (p.rows() != p_na.rows() || p.rows() != p_lp.rows() ||
        p.cols() != p_na.cols() || p.cols() != p_lp.cols()) {
        throw ShapeError("combined_scores: shape mismatch");
    }
    check_simplex_rows(p, "combined_scores: p");
    check_simplex_rows(p_na, "combined_scores: p_na");
    check_simplex_rows(p_lp, "combined_scores: p_lp");

    ScoreTable t;
    t.p = p;
    t.p_na = p_na;
    t.p_lp = p_lp;
    t.p_all = (p + p_na + p_lp) / 3.0;
    t.pseudo_labels.resize(static_cast<size_t>(p.rows()));
    t.confidence.resize(static_cast<size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < p.cols(); ++c) {
            if (t.p_all(i, c) > t.p_all(i, best)) best = static_cast<int>(c);
        }
        t.pseudo_labels[static_cast<size_t>(i)] = best;
        t.confidence[static_cast<size_t>(i)] = t.p_all(i, best);
    }
    return t;
}

int expansion_count(double fraction, int num_targets) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw ParamError("expansion_count: fraction must lie in [0,1]");
    }
    const double raw = fraction * num_targets;
    const double snapped = std::round(raw);
    const double v = std::abs(raw - snapped) < 1e-9 ? snapped : raw;
    return static_cast<int>(std::floor(v));
}

std::vector<std::pair<int, int>> select_top_fraction(const ScoreTable& table,
                                                     double fraction) {
    const int count = expansion_count(fraction, table.size());
    std::vector<int> order(static_cast<size_t>(table.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ca = table.confidence[static_cast<size_t>(a)];
        const double cb = table.confidence[static_cast<size_t>(b)];
        if (ca != cb) return ca > cb;
        return a < b;
    });
    std::vector<std::pair<int, int>> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int idx = order[static_cast<size_t>(i)];
        out.emplace_back(idx, table.pseudo_labels[static_cast<size_t>(idx)]);
    }
    return out;
}

void save_score_csv(const ScoreTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("save_score_csv: cannot open '" + path + "'");
    out << "index,confidence,pseudo_label";
    for (Eigen::Index c = 0; c < table.p_all.cols(); ++c) out << ",p_" << c;
    out << '\n';
    char buf[64];
    for (int i = 0; i < table.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g",
                      table.confidence[static_cast<size_t>(i)]);
        out << i << ',' << buf << ','
            << table.pseudo_labels[static_cast<size_t>(i)];
        for (Eigen::Index c = 0; c < table.p_all.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.p_all(i, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace gsde
