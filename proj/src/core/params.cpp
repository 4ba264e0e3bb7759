// SPDX-License-Identifier: Apache-2.0
#include "core/params.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ugcemt {

size_t ParamLayout::add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw StateError("duplicate parameter name: " + name);
    size_t count = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in parameter " + name);
        count *= size_t(d);
    }
    ParamInfo info{name, std::move(shape), total_, count};
    index_[name] = entries_.size();
    entries_.push_back(std::move(info));
    total_ += count;
    return entries_.back().offset;
}

const ParamInfo& ParamLayout::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw StateError("unknown parameter name: " + name);
    return entries_[it->second];
}

bool ParamLayout::congruent(const ParamLayout& o) const {
    if (entries_.size() != o.entries_.size() || total_ != o.total_) return false;
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != o.entries_[i].name) return false;
        if (entries_[i].shape != o.entries_[i].shape) return false;
    }
    return true;
}

namespace {

void write_f32_le(std::ostream& os, const float* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t u;
        std::memcpy(&u, p + i, 4);
        const unsigned char b[4] = {(unsigned char)(u & 0xff), (unsigned char)((u >> 8) & 0xff),
                                    (unsigned char)((u >> 16) & 0xff),
                                    (unsigned char)((u >> 24) & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
}

void read_f32_le(std::istream& is, float* p, size_t n, const std::string& path) {
    std::vector<unsigned char> buf(n * 4);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (size_t(is.gcount()) != buf.size())
        throw FormatError(path + ": truncated payload (expected " + std::to_string(buf.size()) +
                          " bytes)");
    for (size_t i = 0; i < n; ++i) {
        const uint32_t u = uint32_t(buf[4 * i]) | (uint32_t(buf[4 * i + 1]) << 8) |
                           (uint32_t(buf[4 * i + 2]) << 16) | (uint32_t(buf[4 * i + 3]) << 24);
        std::memcpy(p + i, &u, 4);
    }
}

void write_manifest(std::ostream& os, const std::string& group, const ParamLayout& layout) {
    for (const ParamInfo& e : layout.entries()) {
        os << (group.empty() ? e.name : group + "/" + e.name) << " " << e.shape.size();
        for (int d : e.shape) os << " " << d;
        os << "\n";
    }
}

}  // namespace

void save_params(const ParamSet& p, const std::string& path) {
    save_param_groups({{"", &p}}, path);
}

ParamSet load_params(const std::string& path) {
    auto groups = load_param_groups(path);
    if (groups.size() != 1 || groups[0].first != "")
        throw FormatError(path + ": expected a single unnamed parameter group");
    return std::move(groups[0].second);
}

void save_param_groups(const std::vector<std::pair<std::string, const ParamSet*>>& groups,
                       const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    size_t n = 0;
    for (const auto& [g, p] : groups) n += p->layout->entries().size();
    os << "UGCEMT-PARAMS 1\n";
    os << "nparams " << n << "\n";
    for (const auto& [g, p] : groups) write_manifest(os, g, *p->layout);
    os << "DATA\n";
    for (const auto& [g, p] : groups) write_f32_le(os, p->data.data(), p->data.size());
    if (!os) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, ParamSet>> load_param_groups(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "UGCEMT-PARAMS 1")
        throw FormatError(path + ": bad magic line (byte offset 0)");
    size_t n = 0;
    if (!std::getline(is, line)) throw FormatError(path + ": missing nparams line");
    {
        std::istringstream ss(line);
        std::string kw;
        if (!(ss >> kw >> n) || kw != "nparams")
            throw FormatError(path + ": malformed nparams line");
    }
    // Group name is the prefix before '/'; flat names map to "".
    struct Entry {
        std::string group, name;
        std::vector<int> shape;
    };
    std::vector<Entry> entries;
    entries.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line))
            throw FormatError(path + ": manifest truncated at entry " + std::to_string(i));
        std::istringstream ss(line);
        std::string name;
        size_t ndim = 0;
        if (!(ss >> name >> ndim)) throw FormatError(path + ": malformed manifest entry: " + line);
        std::vector<int> shape(ndim);
        for (size_t d = 0; d < ndim; ++d)
            if (!(ss >> shape[d]) || shape[d] <= 0)
                throw FormatError(path + ": bad shape in manifest entry: " + line);
        Entry e;
        const size_t dot = name.find('/');
        if (dot == std::string::npos) {
            e.group = "";
            e.name = name;
        } else {
            e.group = name.substr(0, dot);
            e.name = name.substr(dot + 1);
        }
        e.shape = std::move(shape);
        entries.push_back(std::move(e));
    }
    if (!std::getline(is, line) || line != "DATA")
        throw FormatError(path + ": missing DATA separator");

    std::vector<std::pair<std::string, ParamSet>> out;
    size_t i = 0;
    while (i < entries.size()) {
        const std::string group = entries[i].group;
        auto layout = std::make_shared<ParamLayout>();
        size_t j = i;
        while (j < entries.size() && entries[j].group == group) {
            layout->add(entries[j].name, entries[j].shape);
            ++j;
        }
        ParamSet p{layout};
        read_f32_le(is, p.data.data(), p.data.size(), path);
        out.emplace_back(group, std::move(p));
        i = j;
    }
    return out;
}

}  // namespace ugcemt
