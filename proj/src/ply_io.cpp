// Copyright Contributors to the xvsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "xvs/ply_io.hpp"

#include <cstring>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xvs/image.hpp"

namespace xvs {

namespace {

const std::vector<std::string>& property_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
        for (int i = 0; i < 9; ++i) {
            n.push_back("f_rest_" + std::to_string(i));
        }
        n.insert(n.end(), {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"});
        return n;
    }();
    return names;
}

std::vector<float> pack(const Gaussian3D& g) {
    std::vector<float> v;
    for (int i = 0; i < 3; ++i) {
        v.push_back(static_cast<float>(g.mean[i]));
    }
    for (int c = 0; c < 3; ++c) {
        v.push_back(static_cast<float>(g.sh(c, 0)));
    }
    for (int c = 0; c < 3; ++c) {
        for (int k = 1; k < 4; ++k) {
            v.push_back(static_cast<float>(g.sh(c, k)));
        }
    }
    v.push_back(static_cast<float>(g.opacity_logit));
    for (int i = 0; i < 3; ++i) {
        v.push_back(static_cast<float>(g.log_scale[i]));
    }
    const Eigen::Quaterniond q = g.rotation.normalized();
    for (double c : {q.w(), q.x(), q.y(), q.z()}) {
        v.push_back(static_cast<float>(c));
    }
    return v;
}

Gaussian3D unpack(const std::vector<double>& v) {
    Gaussian3D g;
    g.mean = Eigen::Vector3d(v[0], v[1], v[2]);
    for (int c = 0; c < 3; ++c) {
        g.sh(c, 0) = v[3 + c];
        for (int k = 1; k < 4; ++k) {
            g.sh(c, k) = v[6 + c * 3 + (k - 1)];
        }
    }
    g.opacity_logit = v[15];
    g.log_scale = Eigen::Vector3d(v[16], v[17], v[18]);
    g.rotation = Eigen::Quaterniond(v[19], v[20], v[21], v[22]);
    if (g.rotation.norm() == 0.0) {
        throw FormatError("ply: zero-length rotation quaternion");
    }
    g.rotation.normalize();
    return g;
}

int type_size(const std::string& t) {
    static const std::map<std::string, int> sizes = {
        {"char", 1},  {"uchar", 1},  {"int8", 1},  {"uint8", 1},   {"short", 2},  {"ushort", 2},
        {"int16", 2}, {"uint16", 2}, {"int", 4},   {"uint", 4},    {"int32", 4},  {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(t);
    if (it == sizes.end()) {
        throw FormatError("ply: unsupported property type " + t);
    }
    return it->second;
}

} // namespace

void write_ply(const GaussianSet& gaussians, const std::filesystem::path& path) {
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
    for (const auto& n : property_names()) {
        header << "property float " << n << "\n";
    }
    header << "end_header\n";
    const std::string h = header.str();
    std::vector<std::uint8_t> bytes(h.begin(), h.end());
    for (const Gaussian3D& g : gaussians) {
        const std::vector<float> v = pack(g);
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        bytes.insert(bytes.end(), p, p + v.size() * sizeof(float));
    }
    write_file_atomic(path, bytes);
}

GaussianSet read_ply(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    const std::string text(bytes.begin(), bytes.end());
    const auto end = text.find("end_header\n");
    if (text.rfind("ply\n", 0) != 0 || end == std::string::npos) {
        throw FormatError("ply: missing header in " + path.string());
    }
    std::istringstream header(text.substr(0, end));
    std::string line;
    std::size_t count = 0;
    bool in_vertex = false;
    bool binary_le = false;
    struct Prop {
        std::string name;
        std::string type;
        int offset;
    };
    std::vector<Prop> props;
    int stride = 0;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (kw == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) {
                ls >> count;
            } else if (!props.empty() || count > 0) {
                break;
            }
        } else if (kw == "property" && in_vertex) {
            std::string type;
            std::string name;
            ls >> type >> name;
            if (type == "list") {
                throw FormatError("ply: list properties are not supported on vertices");
            }
            props.push_back({name, type, stride});
            stride += type_size(type);
        }
    }
    if (!binary_le) {
        throw FormatError("ply: only binary_little_endian is supported");
    }
    std::map<std::string, const Prop*> by_name;
    for (const Prop& p : props) {
        by_name[p.name] = &p;
    }
    std::vector<const Prop*> order;
    for (const auto& n : property_names()) {
        const auto it = by_name.find(n);
        if (it == by_name.end()) {
            throw FormatError("ply: missing property " + n);
        }
        order.push_back(it->second);
    }
    const std::size_t data = end + std::strlen("end_header\n");
    if (bytes.size() < data + count * static_cast<std::size_t>(stride)) {
        throw FormatError("ply: truncated vertex data");
    }
    GaussianSet out;
    out.reserve(count);
    std::vector<double> values(order.size());
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* row = bytes.data() + data + i * static_cast<std::size_t>(stride);
        for (std::size_t k = 0; k < order.size(); ++k) {
            const Prop& p = *order[k];
            if (p.type == "float" || p.type == "float32") {
                float f;
                std::memcpy(&f, row + p.offset, 4);
                values[k] = f;
            } else if (p.type == "double" || p.type == "float64") {
                double d;
                std::memcpy(&d, row + p.offset, 8);
                values[k] = d;
            } else {
                throw FormatError("ply: property " + p.name + " must be floating point");
            }
        }
        out.push_back(unpack(values));
    }
    return out;
}

} // namespace xvs
