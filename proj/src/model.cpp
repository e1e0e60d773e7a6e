#include "gsde/model.hpp"

#include <cmath>
#include <cstring>

namespace gsde {

double GrlSchedule::lam(double progress) const {
    if (progress < 0.0 || progress > 1.0) {
        throw ParamError("GrlSchedule::lam: progress must lie in [0,1]");
    }
    return 2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0;
}

double GrlSchedule::lam_at(int iter) const {
    if (max_progress_iters <= 0) return lam(1.0);
    const double p = static_cast<double>(iter) / max_progress_iters;
    return lam(std::min(1.0, std::max(0.0, p)));
}

GsdeModel init_model(const ModelDims& dims, int num_bottlenecks,
                     uint64_t seed) {
    if (dims.input <= 0 || dims.hidden <= 0 || dims.bottleneck <= 0 ||
        dims.classes <= 0) {
        throw ParamError("init_model: all dimensions must be positive");
    }
    if (num_bottlenecks < 1) {
        throw ParamError("init_model: need at least one bottleneck");
    }

    GsdeModel m;
    m.dims = dims;
    m.num_bottlenecks = num_bottlenecks;
    m.init_seed = seed;

    // Layer index -> sub-seed; keeps bottleneck j's initialization
    // independent of k and of every other layer.
    int layer_index = 0;
    const auto layer_rng = [&] { return Rng(mix_seed(seed, layer_index++)); };

    {
        Rng r0 = layer_rng();
        m.extractor.emplace_back(dims.hidden, dims.input, r0);
        Rng r1 = layer_rng();
        m.extractor.emplace_back(dims.hidden, dims.hidden, r1);
    }
    for (int j = 0; j < num_bottlenecks; ++j) {
        Rng r = layer_rng();
        m.bottlenecks.emplace_back(dims.bottleneck, dims.hidden, r);
    }
    layer_index = 1000;  // fixed offsets so head seeds do not depend on k
    {
        Rng r = layer_rng();
        m.classifier = LinearLayer(dims.classes, dims.bottleneck, r);
    }
    {
        Rng r0 = layer_rng();
        m.discriminator.emplace_back(dims.hidden,
                                     dims.bottleneck * dims.classes, r0);
        Rng r1 = layer_rng();
        m.discriminator.emplace_back(1, dims.hidden, r1);
    }
    return m;
}

namespace {

Matrix stack_forward(const std::vector<LinearLayer>& layers, const Matrix& x,
                     bool relu_after_last, StackCache* cache) {
    Matrix cur = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (cache) cache->inputs.push_back(cur);
        Matrix pre = linear_forward(layers[i], cur);
        const bool relu = relu_after_last || i + 1 < layers.size();
        if (relu) {
            if (cache) cache->preacts.push_back(pre);
            cur = relu_forward(pre);
        } else {
            if (cache) cache->preacts.emplace_back();  // placeholder
            cur = std::move(pre);
        }
    }
    return cur;
}

Matrix stack_backward(std::vector<LinearLayer>& layers,
                      const StackCache& cache, bool relu_after_last,
                      const Matrix& upstream) {
    Matrix grad = upstream;
    for (size_t i = layers.size(); i-- > 0;) {
        const bool relu = relu_after_last || i + 1 < layers.size();
        if (relu) grad = relu_backward(cache.preacts[i], grad);
        grad = linear_backward(layers[i], cache.inputs[i], grad);
    }
    return grad;
}

}  // namespace

ModelForward model_forward(const GsdeModel& m, const Matrix& x) {
    if (x.cols() != m.dims.input) {
        throw ShapeError("model_forward: input dimension mismatch");
    }
    ModelForward fw;
    fw.x = x;
    fw.backbone = stack_forward(m.extractor, x, /*relu_after_last=*/true,
                                &fw.extractor);
    fw.bneck_out.reserve(m.bottlenecks.size());
    fw.f = Matrix::Zero(x.rows(), m.dims.bottleneck);
    for (const auto& b : m.bottlenecks) {
        fw.bneck_out.push_back(linear_forward(b, fw.backbone));
        fw.f += fw.bneck_out.back();
    }
    fw.f /= static_cast<double>(m.num_bottlenecks);
    fw.logits = linear_forward(m.classifier, fw.f);
    fw.p = softmax(fw.logits);
    return fw;
}

Matrix features(const GsdeModel& m, const Matrix& x) {
    if (x.cols() != m.dims.input) {
        throw ShapeError("features: input dimension mismatch");
    }
    const Matrix backbone =
        stack_forward(m.extractor, x, /*relu_after_last=*/true, nullptr);
    Matrix f = Matrix::Zero(x.rows(), m.dims.bottleneck);
    for (const auto& b : m.bottlenecks) f += linear_forward(b, backbone);
    return f / static_cast<double>(m.num_bottlenecks);
}

Matrix class_probs(const GsdeModel& m, const Matrix& f) {
    if (f.cols() != m.dims.bottleneck) {
        throw ShapeError("class_probs: feature dimension mismatch");
    }
    return softmax(linear_forward(m.classifier, f));
}

Matrix multilinear(const Matrix& f, const Matrix& p) {
    if (f.rows() != p.rows()) {
        throw ShapeError("multilinear: batch size mismatch");
    }
    const Eigen::Index batch = f.rows();
    const Eigen::Index b = f.cols();
    const Eigen::Index k = p.cols();
    Matrix out(batch, b * k);
    for (Eigen::Index i = 0; i < batch; ++i) {
        for (Eigen::Index c = 0; c < k; ++c) {
            out.row(i).segment(c * b, b) = p(i, c) * f.row(i);
        }
    }
    return out;
}

Matrix domain_logits(const GsdeModel& m, const Matrix& fused) {
    if (fused.cols() != m.dims.bottleneck * m.dims.classes) {
        throw ShapeError("domain_logits: fused dimension mismatch");
    }
    return stack_forward(m.discriminator, fused, /*relu_after_last=*/false,
                         nullptr);
}

Matrix domain_logits(const GsdeModel& m, const Matrix& fused,
                     StackCache& cache) {
    if (fused.cols() != m.dims.bottleneck * m.dims.classes) {
        throw ShapeError("domain_logits: fused dimension mismatch");
    }
    return stack_forward(m.discriminator, fused, /*relu_after_last=*/false,
                         &cache);
}

Matrix grl_backward(const Matrix& upstream, double lam) {
    return (-lam) * upstream;
}

Matrix model_backward(GsdeModel& m, const ModelForward& fw,
                      const Matrix& dlogits, const Matrix& df_extra) {
    Matrix df;
    if (dlogits.size() != 0) {
        df = linear_backward(m.classifier, fw.f, dlogits);
    } else {
        df = Matrix::Zero(fw.x.rows(), m.dims.bottleneck);
    }
    if (df_extra.size() != 0) df += df_extra;

    const Matrix df_each = df / static_cast<double>(m.num_bottlenecks);
    Matrix dbackbone = Matrix::Zero(fw.x.rows(), m.dims.hidden);
    for (auto& b : m.bottlenecks) {
        dbackbone += linear_backward(b, fw.backbone, df_each);
    }
    return stack_backward(m.extractor, fw.extractor, /*relu_after_last=*/true,
                          dbackbone);
}

Matrix discriminator_backward(GsdeModel& m, const StackCache& cache,
                              const Matrix& dlogit) {
    return stack_backward(m.discriminator, cache, /*relu_after_last=*/false,
                          dlogit);
}

void zero_grad(GsdeModel& m) {
    for_each_layer(m, [](const std::string&, LinearLayer& l) { l.zero_grad(); });
}

void sgd_step_model(GsdeModel& m, double learning_rate, double weight_decay) {
    for_each_layer(m, [&](const std::string&, LinearLayer& l) {
        sgd_step(l, learning_rate, weight_decay);
    });
}

void for_each_layer(GsdeModel& m,
                    const std::function<void(const std::string&,
                                             LinearLayer&)>& fn) {
    for (size_t i = 0; i < m.extractor.size(); ++i) {
        fn("extractor." + std::to_string(i), m.extractor[i]);
    }
    for (size_t i = 0; i < m.bottlenecks.size(); ++i) {
        fn("bottleneck." + std::to_string(i), m.bottlenecks[i]);
    }
    fn("classifier", m.classifier);
    for (size_t i = 0; i < m.discriminator.size(); ++i) {
        fn("discriminator." + std::to_string(i), m.discriminator[i]);
    }
}

void for_each_layer(const GsdeModel& m,
                    const std::function<void(const std::string&,
                                             const LinearLayer&)>& fn) {
    for_each_layer(const_cast<GsdeModel&>(m),
                   [&](const std::string& name, LinearLayer& l) {
                       fn(name, l);
                   });
}

uint64_t parameter_fingerprint(const GsdeModel& m) {
    uint64_t h = 0xcbf29ce484222325ULL;
    const auto feed = [&h](const Matrix& mat) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(mat.data());
        const size_t n = sizeof(double) * static_cast<size_t>(mat.size());
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for_each_layer(m, [&](const std::string&, const LinearLayer& l) {
        feed(l.weight);
        feed(l.bias);
    });
    return h;
}

}  // namespace gsde
