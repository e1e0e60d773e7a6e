#include "gsde/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gsde {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::atomic<uint64_t> g_sanctioned_reads{0};
std::atomic<uint64_t> g_leaked_reads{0};
thread_local int g_eval_depth = 0;

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

LabelAudit::EvalScope::EvalScope() { ++g_eval_depth; }
LabelAudit::EvalScope::~EvalScope() { --g_eval_depth; }

void LabelAudit::record_read() {
    if (g_eval_depth > 0) {
        g_sanctioned_reads.fetch_add(1, std::memory_order_relaxed);
    } else {
        g_leaked_reads.fetch_add(1, std::memory_order_relaxed);
    }
}

uint64_t LabelAudit::sanctioned_reads() {
    return g_sanctioned_reads.load(std::memory_order_relaxed);
}

uint64_t LabelAudit::leaked_reads() {
    return g_leaked_reads.load(std::memory_order_relaxed);
}

void LabelAudit::reset() {
    g_sanctioned_reads.store(0, std::memory_order_relaxed);
    g_leaked_reads.store(0, std::memory_order_relaxed);
}

std::string domain_tag(Domain d) {
    switch (d) {
        case Domain::Source: return "source";
        case Domain::Target: return "target";
        case Domain::PseudoSource: return "pseudo";
    }
    throw ParamError("domain_tag: unknown domain");
}

Domain parse_domain_tag(const std::string& tag) {
    if (tag == "source") return Domain::Source;
    if (tag == "target") return Domain::Target;
    if (tag == "pseudo") return Domain::PseudoSource;
    throw ParseError("unknown domain tag '" + tag + "'");
}

LabeledSample LabeledSample::source(RowVector x, int label) {
    LabeledSample s;
    s.features = std::move(x);
    s.domain = Domain::Source;
    s.label_ = label;
    s.truth_ = label;
    return s;
}

LabeledSample LabeledSample::target(RowVector x, std::optional<int> truth) {
    LabeledSample s;
    s.features = std::move(x);
    s.domain = Domain::Target;
    s.truth_ = truth;
    return s;
}

LabeledSample LabeledSample::pseudo_source(RowVector x, int pseudo_label,
                                           std::optional<int> truth) {
    LabeledSample s;
    s.features = std::move(x);
    s.domain = Domain::PseudoSource;
    s.label_ = pseudo_label;
    s.truth_ = truth;
    return s;
}

bool samples_equal(const LabeledSample& a, const LabeledSample& b) {
    return a.domain == b.domain && a.label_ == b.label_ &&
           a.truth_ == b.truth_ && a.features.size() == b.features.size() &&
           a.features == b.features;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size() || a.num_classes != b.num_classes ||
        a.feature_dim != b.feature_dim) {
        return false;
    }
    for (int i = 0; i < a.size(); ++i) {
        if (!samples_equal(a.samples[i], b.samples[i])) return false;
    }
    return true;
}

Matrix Dataset::feature_matrix() const {
    Matrix m(size(), feature_dim);
    for (int i = 0; i < size(); ++i) {
        m.row(i) = samples[static_cast<size_t>(i)].features;
    }
    return m;
}

Dataset gen_two_moons(int n, double noise_sd, uint64_t seed) {
    if (n == 0) throw ParamError("gen_two_moons: empty dataset requested");
    if (n < 2) throw ParamError("gen_two_moons: need at least 2 samples");
    if (noise_sd < 0.0) throw ParamError("gen_two_moons: negative noise");

    Rng rng(seed);
    Dataset d;
    d.num_classes = 2;
    d.feature_dim = 2;
    d.name = "two_moons";
    const int n0 = (n + 1) / 2;
    const int n1 = n - n0;
    d.samples.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n0; ++i) {
        const double t = n0 > 1 ? kPi * i / (n0 - 1) : 0.0;
        RowVector x(2);
        x << std::cos(t) + noise_sd * rng.normal(),
            std::sin(t) + noise_sd * rng.normal();
        d.samples.push_back(LabeledSample::source(std::move(x), 0));
    }
    for (int i = 0; i < n1; ++i) {
        const double t = n1 > 1 ? kPi * i / (n1 - 1) : 0.0;
        RowVector x(2);
        x << 1.0 - std::cos(t) + noise_sd * rng.normal(),
            0.5 - std::sin(t) + noise_sd * rng.normal();
        d.samples.push_back(LabeledSample::source(std::move(x), 1));
    }
    rng.shuffle(d.samples);
    return d;
}

Dataset gen_blobs(int n, int num_classes,
                  const std::vector<RowVector>& centers, double spread,
                  uint64_t seed) {
    if (n == 0) throw ParamError("gen_blobs: empty dataset requested");
    if (num_classes < 1) throw ParamError("gen_blobs: need at least 1 class");
    if (static_cast<int>(centers.size()) != num_classes) {
        throw ParamError("gen_blobs: one center per class required");
    }
    if (spread < 0.0) throw ParamError("gen_blobs: negative spread");
    const int dim = static_cast<int>(centers.front().size());
    for (const auto& c : centers) {
        if (static_cast<int>(c.size()) != dim) {
            throw ShapeError("gen_blobs: centers differ in dimension");
        }
    }

    Rng rng(seed);
    Dataset d;
    d.num_classes = num_classes;
    d.feature_dim = dim;
    d.name = "blobs";
    d.samples.reserve(static_cast<size_t>(n));
    for (int c = 0; c < num_classes; ++c) {
        int count = n / num_classes + (c < n % num_classes ? 1 : 0);
        for (int i = 0; i < count; ++i) {
            RowVector x(dim);
            for (int j = 0; j < dim; ++j) {
                x(j) = centers[static_cast<size_t>(c)](j) +
                       spread * rng.normal();
            }
            d.samples.push_back(LabeledSample::source(std::move(x), c));
        }
    }
    rng.shuffle(d.samples);
    return d;
}

Dataset shift_domain(const Dataset& d, double rotation_deg,
                     const RowVector& translation, double scale,
                     double noise_sd, uint64_t seed) {
    if (scale <= 0.0) throw ParamError("shift_domain: scale must be positive");
    if (noise_sd < 0.0) throw ParamError("shift_domain: negative noise");
    if (rotation_deg != 0.0 && d.feature_dim != 2) {
        throw ParamError("shift_domain: rotation only supported for 2-D data");
    }
    if (translation.size() != 0 &&
        static_cast<int>(translation.size()) != d.feature_dim) {
        throw ShapeError("shift_domain: translation dimension mismatch");
    }

    const double theta = rotation_deg * kPi / 180.0;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    Rng rng(seed);
    Dataset out = d;
    for (auto& s : out.samples) {
        RowVector x = s.features;
        if (rotation_deg != 0.0) {
            const double x0 = x(0);
            const double x1 = x(1);
            x(0) = ct * x0 - st * x1;
            x(1) = st * x0 + ct * x1;
        }
        x *= scale;
        if (translation.size() != 0) x += translation;
        if (noise_sd > 0.0) {
            for (int j = 0; j < d.feature_dim; ++j) {
                x(j) += noise_sd * rng.normal();
            }
        }
        s.features = std::move(x);
    }
    return out;
}

Dataset as_target_domain(Dataset d) {
    LabelAudit::EvalScope scope;  // sanctioned: restructuring, not training
    for (auto& s : d.samples) {
        s = LabeledSample::target(s.features, s.eval_label());
    }
    return d;
}

void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
    if (!out) throw ParseError("save_csv: cannot open '" + path + "'");
    for (int j = 0; j < d.feature_dim; ++j) {
        out << 'f' << j << ',';
    }
    out << "label,domain\n";
    LabelAudit::EvalScope scope;  // export path, sanctioned truth access
    for (const auto& s : d.samples) {
        for (int j = 0; j < d.feature_dim; ++j) {
            out << format_value(s.features(j)) << ',';
        }
        // Source/pseudo rows persist the trainer label; target rows persist
        // the ground truth so evaluation survives a round trip.
        const std::optional<int> label =
            s.domain == Domain::Target ? s.eval_label() : s.train_label();
        if (label) out << *label;
        out << ',' << domain_tag(s.domain) << '\n';
    }
    if (!out) throw ParseError("save_csv: write to '" + path + "' failed");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ":1: missing header row");
    }
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" ||
        header.back() != "domain") {
        parse_fail(path, 1, "header must be f0,...,f{d-1},label,domain");
    }
    const int dim = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < dim; ++j) {
        if (header[static_cast<size_t>(j)] != "f" + std::to_string(j)) {
            parse_fail(path, 1, "unexpected feature column name '" +
                                    header[static_cast<size_t>(j)] + "'");
        }
    }

    Dataset d;
    d.feature_dim = dim;
    const auto dot = path.find_last_of('/');
    d.name = dot == std::string::npos ? path : path.substr(dot + 1);
    int max_label = -1;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != dim + 2) {
            parse_fail(path, line_no,
                       "expected " + std::to_string(dim + 2) + " fields, got " +
                           std::to_string(fields.size()));
        }
        RowVector x(dim);
        for (int j = 0; j < dim; ++j) {
            const std::string& f = fields[static_cast<size_t>(j)];
            size_t used = 0;
            try {
                x(j) = std::stod(f, &used);
            } catch (const std::exception&) {
                parse_fail(path, line_no, "bad numeric value '" + f + "'");
            }
            if (used != f.size()) {
                parse_fail(path, line_no, "bad numeric value '" + f + "'");
            }
            if (!std::isfinite(x(j))) {
                parse_fail(path, line_no, "non-finite feature value");
            }
        }
        std::optional<int> label;
        const std::string& label_field = fields[static_cast<size_t>(dim)];
        if (!label_field.empty()) {
            try {
                size_t used = 0;
                label = std::stoi(label_field, &used);
                if (used != label_field.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                parse_fail(path, line_no,
                           "bad label '" + label_field + "'");
            }
            if (*label < 0) parse_fail(path, line_no, "negative label");
        }
        Domain domain;
        try {
            domain = parse_domain_tag(fields.back());
        } catch (const ParseError& e) {
            parse_fail(path, line_no, e.what());
        }
        switch (domain) {
            case Domain::Source:
                if (!label) {
                    parse_fail(path, line_no, "source row without a label");
                }
                d.samples.push_back(LabeledSample::source(std::move(x), *label));
                break;
            case Domain::PseudoSource:
                if (!label) {
                    parse_fail(path, line_no, "pseudo row without a label");
                }
                d.samples.push_back(LabeledSample::pseudo_source(
                    std::move(x), *label, std::nullopt));
                break;
            case Domain::Target:
                d.samples.push_back(LabeledSample::target(std::move(x), label));
                break;
        }
        if (label) max_label = std::max(max_label, *label);
    }
    d.num_classes = max_label + 1;
    return d;
}

Batch make_batch(const Dataset& d, const std::vector<int>& indices) {
    Batch b;
    b.x.resize(static_cast<Eigen::Index>(indices.size()), d.feature_dim);
    b.labels.reserve(indices.size());
    b.domains.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        const auto& s = d.samples[static_cast<size_t>(indices[i])];
        b.x.row(static_cast<Eigen::Index>(i)) = s.features;
        b.labels.push_back(s.train_label().value_or(-1));
        b.domains.push_back(s.domain);
    }
    return b;
}

void MinibatchIterator::Stream::reshuffle() {
    order.resize(static_cast<size_t>(data->size()));
    for (int i = 0; i < data->size(); ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    pos = 0;
}

std::vector<int> MinibatchIterator::Stream::take(int n) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    while (static_cast<int>(out.size()) < n) {
        if (pos >= order.size()) reshuffle();
        out.push_back(order[pos++]);
    }
    return out;
}

MinibatchIterator::MinibatchIterator(const Dataset& source,
                                     const Dataset& target, int batch,
                                     uint64_t seed)
    : batch_(batch) {
    if (batch <= 0) throw ParamError("minibatch: batch size must be positive");
    if (batch > source.size() || batch > target.size()) {
        throw ParamError("minibatch: batch exceeds a stream size");
    }
    source_.data = &source;
    source_.rng = Rng(mix_seed(seed, 0xA));
    source_.reshuffle();
    target_.data = &target;
    target_.rng = Rng(mix_seed(seed, 0xB));
    target_.reshuffle();
}

MinibatchIterator::IndexPair MinibatchIterator::next_indices() {
    return {source_.take(batch_), target_.take(batch_)};
}

std::pair<Batch, Batch> MinibatchIterator::next() {
    auto idx = next_indices();
    return {make_batch(*source_.data, idx.source),
            make_batch(*target_.data, idx.target)};
}

}  // namespace gsde
