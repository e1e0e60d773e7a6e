#include "gsde/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gsde {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParamError("config: bad boolean for '" + key + "': " + v);
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ParamError("config: bad number for '" + key + "': " + v);
    }
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const int i = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return i;
    } catch (const std::exception&) {
        throw ParamError("config: bad integer for '" + key + "': " + v);
    }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const unsigned long long i = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return i;
    } catch (const std::exception&) {
        throw ParamError("config: bad seed for '" + key + "': " + v);
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, sep)) out.push_back(trim(field));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

void assign(LabConfig& cfg, const std::string& key, const std::string& value) {
    ExperimentConfig& e = cfg.experiment;
    DataSpec& d = cfg.data;

    if (key == "id") e.id = value;
    else if (key == "seeds") {
        e.seeds.clear();
        for (const auto& s : split(value, ',')) {
            if (!s.empty()) e.seeds.push_back(parse_u64(s, key));
        }
        if (e.seeds.empty()) throw ParamError("config: seeds list is empty");
    }
    else if (key == "max_runs") e.max_runs = parse_int(value, key);
    else if (key == "iterations_per_run") e.iterations_per_run = parse_int(value, key);
    else if (key == "batch_size") e.batch_size = parse_int(value, key);
    else if (key == "learning_rate") e.learning_rate = parse_double(value, key);
    else if (key == "lr_anneal.alpha") e.lr_anneal_alpha = parse_double(value, key);
    else if (key == "lr_anneal.beta") e.lr_anneal_beta = parse_double(value, key);
    else if (key == "weight_decay") e.weight_decay = parse_double(value, key);
    else if (key == "eval_interval") e.eval_interval = parse_int(value, key);
    else if (key == "model.hidden") e.hidden_dim = parse_int(value, key);
    else if (key == "model.bottleneck") e.bottleneck_dim = parse_int(value, key);
    else if (key == "model.bottlenecks") e.num_bottlenecks = parse_int(value, key);
    else if (key == "model.grl_gamma") e.grl_gamma = parse_double(value, key);
    else if (key == "losses.centroid_theta") e.centroid_theta = parse_double(value, key);
    else if (key == "mixmatch.num_augment") e.mixmatch.num_augment = parse_int(value, key);
    else if (key == "mixmatch.temperature") e.mixmatch.temperature = parse_double(value, key);
    else if (key == "mixmatch.mixup_alpha") e.mixmatch.mixup_alpha = parse_double(value, key);
    else if (key == "mixmatch.unlabeled_weight") e.mixmatch.unlabeled_weight = parse_double(value, key);
    else if (key == "mixmatch.augment_noise_sd") e.mixmatch.augment_noise_sd = parse_double(value, key);
    else if (key == "mixmatch.pseudo_as_unlabeled") e.mixmatch_pseudo_as_unlabeled = parse_bool(value, key);
    else if (key == "scoring.m_neighbors") e.score_neighbors = parse_int(value, key);
    else if (key == "scoring.lambda") e.lp_lambda = parse_double(value, key);
    else if (key == "scoring.lp_neighbors") e.lp_neighbors = parse_int(value, key);
    else if (key == "scoring.lp_target_anchor") {
        if (value == "probs") e.lp_target_anchor = LabelPropConfig::TargetAnchor::Probs;
        else if (value == "zero") e.lp_target_anchor = LabelPropConfig::TargetAnchor::Zero;
        else throw ParamError("config: lp_target_anchor must be probs|zero");
    }
    else if (key == "ablation.no_reinit") e.ablation.no_reinit = parse_bool(value, key);
    else if (key == "ablation.no_expansion") e.ablation.no_expansion = parse_bool(value, key);
    else if (key == "ablation.disable_ms") e.ablation.disable_semantic = parse_bool(value, key);
    else if (key == "ablation.disable_ss") e.ablation.disable_mixmatch = parse_bool(value, key);
    else if (key == "ablation.disable_scoring_extras") e.ablation.disable_scoring_extras = parse_bool(value, key);
    else if (key == "data.source_csv") d.source_csv = value;
    else if (key == "data.target_csv") d.target_csv = value;
    else if (key == "data.kind") d.kind = value;
    else if (key == "data.n") d.n = parse_int(value, key);
    else if (key == "data.noise") d.noise = parse_double(value, key);
    else if (key == "data.seed") d.seed = parse_u64(value, key);
    else if (key == "data.shift_rotation") d.shift_rotation = parse_double(value, key);
    else if (key == "data.shift_translation") {
        d.shift_translation.clear();
        for (const auto& s : split(value, ',')) {
            if (!s.empty()) d.shift_translation.push_back(parse_double(s, key));
        }
    }
    else if (key == "data.shift_scale") d.shift_scale = parse_double(value, key);
    else if (key == "data.shift_noise") d.shift_noise = parse_double(value, key);
    else if (key == "data.classes") d.classes = parse_int(value, key);
    else if (key == "data.blob_spread") d.blob_spread = parse_double(value, key);
    else throw ParamError("config: unknown key '" + key + "'");
}

}  // namespace

LabConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParamError("config: cannot open '" + path + "'");
    LabConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParamError("config: " + path + ":" +
                             std::to_string(line_no) +
                             ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            assign(cfg, key, value);
        } catch (const ParamError& e) {
            throw ParamError(path + ":" + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    return cfg;
}

void apply_config_override(LabConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ParamError("override must look like key=value: " + assignment);
    }
    assign(cfg, trim(assignment.substr(0, eq)),
           trim(assignment.substr(eq + 1)));
}

std::pair<Dataset, Dataset> materialize_data(const DataSpec& spec) {
    if (!spec.source_csv.empty() || !spec.target_csv.empty()) {
        if (spec.source_csv.empty() || spec.target_csv.empty()) {
            throw ParamError(
                "config: data.source_csv and data.target_csv go together");
        }
        return {load_csv(spec.source_csv), load_csv(spec.target_csv)};
    }

    RowVector translation;
    if (!spec.shift_translation.empty()) {
        translation.resize(static_cast<Eigen::Index>(
            spec.shift_translation.size()));
        for (size_t i = 0; i < spec.shift_translation.size(); ++i) {
            translation(static_cast<Eigen::Index>(i)) =
                spec.shift_translation[i];
        }
    }

    Dataset source;
    Dataset target_raw;
    if (spec.kind == "two-moons") {
        source = gen_two_moons(spec.n, spec.noise, mix_seed(spec.seed, 0x5c));
        target_raw =
            gen_two_moons(spec.n, spec.noise, mix_seed(spec.seed, 0x7a));
    } else if (spec.kind == "blobs") {
        // Class centers evenly spaced on a circle of radius 2.
        std::vector<RowVector> centers;
        for (int c = 0; c < spec.classes; ++c) {
            const double angle = 2.0 * 3.141592653589793 * c / spec.classes;
            RowVector v(2);
            v << 2.0 * std::cos(angle), 2.0 * std::sin(angle);
            centers.push_back(std::move(v));
        }
        source = gen_blobs(spec.n, spec.classes, centers, spec.blob_spread,
                           mix_seed(spec.seed, 0x5c));
        target_raw = gen_blobs(spec.n, spec.classes, centers, spec.blob_spread,
                               mix_seed(spec.seed, 0x7a));
    } else {
        throw ParamError("config: unknown data.kind '" + spec.kind + "'");
    }

    Dataset target = as_target_domain(
        shift_domain(target_raw, spec.shift_rotation, translation,
                     spec.shift_scale, spec.shift_noise,
                     mix_seed(spec.seed, 0x33)));
    return {std::move(source), std::move(target)};
}

void write_resolved_config(const LabConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParamError("config: cannot write '" + path + "'");
    const ExperimentConfig& e = cfg.experiment;
    const DataSpec& d = cfg.data;
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    out << "id = " << e.id << '\n';
    out << "seeds = ";
    for (size_t i = 0; i < e.seeds.size(); ++i) {
        out << (i ? "," : "") << e.seeds[i];
    }
    out << '\n';
    out << "max_runs = " << e.max_runs << '\n';
    out << "iterations_per_run = " << e.iterations_per_run << '\n';
    out << "batch_size = " << e.batch_size << '\n';
    out << "learning_rate = " << num(e.learning_rate) << '\n';
    out << "lr_anneal.alpha = " << num(e.lr_anneal_alpha) << '\n';
    out << "lr_anneal.beta = " << num(e.lr_anneal_beta) << '\n';
    out << "weight_decay = " << num(e.weight_decay) << '\n';
    out << "eval_interval = " << e.eval_interval << '\n';
    out << "model.hidden = " << e.hidden_dim << '\n';
    out << "model.bottleneck = " << e.bottleneck_dim << '\n';
    out << "model.bottlenecks = " << e.num_bottlenecks << '\n';
    out << "model.grl_gamma = " << num(e.grl_gamma) << '\n';
    out << "losses.centroid_theta = " << num(e.centroid_theta) << '\n';
    out << "mixmatch.num_augment = " << e.mixmatch.num_augment << '\n';
    out << "mixmatch.temperature = " << num(e.mixmatch.temperature) << '\n';
    out << "mixmatch.mixup_alpha = " << num(e.mixmatch.mixup_alpha) << '\n';
    out << "mixmatch.unlabeled_weight = " << num(e.mixmatch.unlabeled_weight)
        << '\n';
    out << "mixmatch.augment_noise_sd = " << num(e.mixmatch.augment_noise_sd)
        << '\n';
    out << "mixmatch.pseudo_as_unlabeled = "
        << (e.mixmatch_pseudo_as_unlabeled ? "true" : "false") << '\n';
    out << "scoring.m_neighbors = " << e.score_neighbors << '\n';
    out << "scoring.lambda = " << num(e.lp_lambda) << '\n';
    out << "scoring.lp_neighbors = " << e.lp_neighbors << '\n';
    out << "scoring.lp_target_anchor = "
        << (e.lp_target_anchor == LabelPropConfig::TargetAnchor::Probs
                ? "probs"
                : "zero")
        << '\n';
    out << "ablation.no_reinit = " << (e.ablation.no_reinit ? "true" : "false")
        << '\n';
    out << "ablation.no_expansion = "
        << (e.ablation.no_expansion ? "true" : "false") << '\n';
    out << "ablation.disable_ms = "
        << (e.ablation.disable_semantic ? "true" : "false") << '\n';
    out << "ablation.disable_ss = "
        << (e.ablation.disable_mixmatch ? "true" : "false") << '\n';
    out << "ablation.disable_scoring_extras = "
        << (e.ablation.disable_scoring_extras ? "true" : "false") << '\n';
    if (!d.source_csv.empty()) {
        out << "data.source_csv = " << d.source_csv << '\n';
        out << "data.target_csv = " << d.target_csv << '\n';
    } else {
        out << "data.kind = " << d.kind << '\n';
        out << "data.n = " << d.n << '\n';
        out << "data.noise = " << num(d.noise) << '\n';
        out << "data.seed = " << d.seed << '\n';
        out << "data.shift_rotation = " << num(d.shift_rotation) << '\n';
        if (!d.shift_translation.empty()) {
            out << "data.shift_translation = ";
            for (size_t i = 0; i < d.shift_translation.size(); ++i) {
                out << (i ? "," : "") << num(d.shift_translation[i]);
            }
            out << '\n';
        }
        out << "data.shift_scale = " << num(d.shift_scale) << '\n';
        out << "data.shift_noise = " << num(d.shift_noise) << '\n';
        if (d.kind == "blobs") {
            out << "data.classes = " << d.classes << '\n';
            out << "data.blob_spread = " << num(d.blob_spread) << '\n';
        }
    }
}

}  // namespace gsde
