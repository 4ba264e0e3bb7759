// SPDX-License-Identifier: Apache-2.0
#include "core/uncertainty.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace ugcemt {

McPredictionSet mc_forward(const VNetTopo& topo, const ParamSet& params, const Grid3<float>& x,
                           int t, uint64_t seed) {
    if (t < 2) throw ConfigError("mc_forward requires T >= 2");
    McPredictionSet out;
    out.passes.reserve(size_t(t));
    for (int i = 0; i < t; ++i) {
        auto r = vnet_forward(topo, params, x, /*dropout_on=*/true,
                              derive_seed(seed, "mc-pass", uint64_t(i)));
        out.passes.push_back(std::move(r.softmax));
    }
    return out;
}

UncertaintyMap mean_and_entropy(const McPredictionSet& preds) {
    if (preds.passes.empty()) throw ConfigError("empty prediction set");
    const Chans3<float>& first = preds.passes.front();
    for (const auto& p : preds.passes)
        if (!p.same_shape(first)) throw ShapeError("MC passes differ in shape");
    const size_t n = first.spatial();
    const int C = first.nc;
    const double inv_t = 1.0 / double(preds.passes.size());
    UncertaintyMap u;
    u.t_used = int(preds.passes.size());
    u.entropy = Grid3<float>(first.nz, first.ny, first.nx);
    u.weight = Grid3<float>(first.nz, first.ny, first.nx);
    for (size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (int c = 0; c < C; ++c) {
            double mean = 0.0;
            for (const auto& p : preds.passes) mean += double(p.v[size_t(c) * n + i]);
            mean *= inv_t;
            h -= mean * std::log(mean + kEntropyLogEps);
        }
        if (h < 0.0) h = 0.0;  // epsilon can push a one-hot voxel a hair below zero
        u.entropy.v[i] = float(h);
        u.weight.v[i] = float(std::exp(-h));
    }
    return u;
}

std::vector<UncertaintyMap> build_ugm(const VNetTopo& topo, const ParamSet& params,
                                      const std::vector<const Case*>& dataset, int t,
                                      uint64_t seed) {
    std::vector<UncertaintyMap> out;
    out.reserve(dataset.size());
    for (const Case* c : dataset) {
        if (!c) throw DataError("missing volume in UGM dataset");
        auto preds = mc_forward(topo, params, c->volume.g, t,
                                derive_seed(seed, "mc-vol", hash_str(c->id)));
        UncertaintyMap u = mean_and_entropy(preds);
        u.source_id = c->id;
        out.push_back(std::move(u));
    }
    return out;
}

namespace {

void write_f32_grid(std::ostream& os, const Grid3<float>& g) {
    for (float f : g.v) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        const unsigned char b[4] = {(unsigned char)(u & 0xff), (unsigned char)((u >> 8) & 0xff),
                                    (unsigned char)((u >> 16) & 0xff),
                                    (unsigned char)((u >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
}

void read_f32_grid(std::istream& is, Grid3<float>& g, const std::string& path) {
    std::vector<unsigned char> buf(g.v.size() * 4);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (size_t(is.gcount()) != buf.size()) throw FormatError(path + ": truncated UGM payload");
    for (size_t i = 0; i < g.v.size(); ++i) {
        const uint32_t u = uint32_t(buf[4 * i]) | (uint32_t(buf[4 * i + 1]) << 8) |
                           (uint32_t(buf[4 * i + 2]) << 16) | (uint32_t(buf[4 * i + 3]) << 24);
        std::memcpy(&g.v[i], &u, 4);
    }
}

}  // namespace

void save_ugm(const UncertaintyMap& u, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "UGCEMT-UGM 1\n";
    os << "dims " << u.entropy.nz << " " << u.entropy.ny << " " << u.entropy.nx << "\n";
    os << "T " << u.t_used << "\n";
    os << "source " << u.source_id << "\n";
    os << "log natural\n";
    os << "fields entropy weight\n";
    os << "DATA\n";
    write_f32_grid(os, u.entropy);
    write_f32_grid(os, u.weight);
    if (!os) throw IoError("write failed: " + path);
}

UncertaintyMap load_ugm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    auto expect = [&](const char* what) {
        if (!std::getline(is, line)) throw FormatError(path + ": missing " + std::string(what));
        return line;
    };
    if (expect("magic") != "UGCEMT-UGM 1") throw FormatError(path + ": bad magic");
    UncertaintyMap u;
    int nz = 0, ny = 0, nx = 0;
    {
        std::istringstream ss(expect("dims"));
        std::string kw;
        if (!(ss >> kw >> nz >> ny >> nx) || kw != "dims" || nz <= 0 || ny <= 0 || nx <= 0)
            throw FormatError(path + ": bad dims line");
    }
    {
        std::istringstream ss(expect("T"));
        std::string kw;
        if (!(ss >> kw >> u.t_used) || kw != "T") throw FormatError(path + ": bad T line");
    }
    {
        std::string l = expect("source");
        if (l.rfind("source ", 0) != 0) throw FormatError(path + ": bad source line");
        u.source_id = l.substr(7);
    }
    if (expect("log") != "log natural") throw FormatError(path + ": unsupported log base");
    if (expect("fields") != "fields entropy weight") throw FormatError(path + ": bad fields line");
    if (expect("DATA") != "DATA") throw FormatError(path + ": missing DATA separator");
    u.entropy = Grid3<float>(nz, ny, nx);
    u.weight = Grid3<float>(nz, ny, nx);
    read_f32_grid(is, u.entropy, path);
    read_f32_grid(is, u.weight, path);
    return u;
}

}  // namespace ugcemt
