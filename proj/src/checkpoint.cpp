#include "gsde/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gsde/error.hpp"

namespace gsde {

namespace {

constexpr const char* kMagic = "GSDE1";

void write_matrix(std::ofstream& out, const std::string& name,
                  const Matrix& m) {
    out << "block," << name << ',' << m.rows() << ',' << m.cols() << '\n';
    char buf[64];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
            out << (c == 0 ? "" : ",") << buf;
        }
        out << '\n';
    }
}

}  // namespace

void save_checkpoint(const GsdeModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("save_checkpoint: cannot open '" + path + "'");
    out << kMagic << '\n';
    out << "dims," << m.dims.input << ',' << m.dims.hidden << ','
        << m.dims.bottleneck << ',' << m.dims.classes << ','
        << m.num_bottlenecks << ',' << m.init_seed << '\n';
    for_each_layer(m, [&](const std::string& name, const LinearLayer& l) {
        write_matrix(out, name + ".weight", l.weight);
        write_matrix(out, name + ".bias", l.bias);
    });
    if (!out) throw ParseError("save_checkpoint: write failed");
}

GsdeModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_checkpoint: cannot open '" + path + "'");

    std::string line;
    int line_no = 0;
    const auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return true;
        }
        return false;
    };
    const auto fail = [&](const std::string& what) -> void {
        throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
    };

    if (!next_line() || line != kMagic) fail("missing GSDE1 magic header");
    if (!next_line() || line.rfind("dims,", 0) != 0) fail("missing dims line");

    ModelDims dims;
    int k = 0;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "dims,%d,%d,%d,%d,%d,%llu", &dims.input,
                    &dims.hidden, &dims.bottleneck, &dims.classes, &k,
                    &seed) != 6) {
        fail("malformed dims line");
    }

    GsdeModel m = init_model(dims, k, seed);

    std::map<std::string, Matrix*> blocks;
    for_each_layer(m, [&](const std::string& name, LinearLayer& l) {
        blocks[name + ".weight"] = &l.weight;
        blocks[name + ".bias"] = &l.bias;
    });

    size_t loaded = 0;
    while (next_line()) {
        if (line.empty()) continue;
        if (line.rfind("block,", 0) != 0) fail("expected a block header");
        std::string name;
        long rows = 0;
        long cols = 0;
        {
            std::stringstream ss(line.substr(6));
            std::string field;
            if (!std::getline(ss, name, ',') || !std::getline(ss, field, ','))
                fail("malformed block header");
            rows = std::stol(field);
            if (!std::getline(ss, field, ',')) fail("malformed block header");
            cols = std::stol(field);
        }
        const auto it = blocks.find(name);
        if (it == blocks.end()) fail("unknown block '" + name + "'");
        Matrix& mat = *it->second;
        if (mat.rows() != rows || mat.cols() != cols) {
            fail("block '" + name + "' has unexpected shape");
        }
        for (long r = 0; r < rows; ++r) {
            if (!next_line()) fail("unexpected end of file inside block");
            std::stringstream ss(line);
            std::string field;
            for (long c = 0; c < cols; ++c) {
                if (!std::getline(ss, field, ',')) fail("short value row");
                mat(r, c) = std::stod(field);
            }
        }
        ++loaded;
    }
    if (loaded != blocks.size()) {
        throw ParseError(path + ": checkpoint is missing parameter blocks");
    }
    return m;
}

}  // namespace gsde
