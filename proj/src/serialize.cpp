#include "sonarzoo/serialize.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'Z', 'M', 'O', 'D', 'E', 'L', '1'};

const std::array<std::uint32_t, 256>& crc_table() {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::string& buf, std::size_t pos) : buf_(buf), pos_(pos) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void floats(float* dst, std::size_t count) {
        need(count * 4);
        std::memcpy(dst, buf_.data() + pos_, count * 4);
        pos_ += count * 4;
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw IoError("model file truncated");
    }
    const std::string& buf_;
    std::size_t pos_;
};

json hyper_to_json(const LayerNode& n) {
    json h = json::object();
    switch (n.kind) {
    case LayerKind::Conv2D:
        h["kernel"] = {n.hp.kernel_h, n.hp.kernel_w};
        h["filters"] = n.hp.filters;
        h["stride"] = n.hp.stride;
        h["padding"] = padding_name(n.hp.padding);
        h["use_bias"] = n.hp.use_bias;
        break;
    case LayerKind::DepthwiseConv2D:
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
        h["kernel"] = {n.hp.kernel_h, n.hp.kernel_w};
        h["stride"] = n.hp.stride;
        h["padding"] = padding_name(n.hp.padding);
        if (n.kind == LayerKind::DepthwiseConv2D) h["use_bias"] = n.hp.use_bias;
        break;
    case LayerKind::Dense:
        h["filters"] = n.hp.filters;
        h["use_bias"] = n.hp.use_bias;
        break;
    case LayerKind::BatchNorm:
        h["momentum"] = n.hp.momentum;
        h["epsilon"] = n.hp.epsilon;
        break;
    case LayerKind::Reshape:
        h["target"] = n.hp.target;
        break;
    default:
        break;
    }
    return h;
}

Hyper hyper_from_json(LayerKind kind, const json& h) {
    Hyper hp;
    switch (kind) {
    case LayerKind::Conv2D:
        hp.kernel_h = h.at("kernel")[0].get<std::int64_t>();
        hp.kernel_w = h.at("kernel")[1].get<std::int64_t>();
        hp.filters = h.at("filters").get<std::int64_t>();
        hp.stride = h.at("stride").get<std::int64_t>();
        hp.padding = padding_from_name(h.at("padding").get<std::string>());
        hp.use_bias = h.at("use_bias").get<bool>();
        break;
    case LayerKind::DepthwiseConv2D:
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
        hp.kernel_h = h.at("kernel")[0].get<std::int64_t>();
        hp.kernel_w = h.at("kernel")[1].get<std::int64_t>();
        hp.stride = h.at("stride").get<std::int64_t>();
        hp.padding = padding_from_name(h.at("padding").get<std::string>());
        if (kind == LayerKind::DepthwiseConv2D) hp.use_bias = h.at("use_bias").get<bool>();
        break;
    case LayerKind::Dense:
        hp.filters = h.at("filters").get<std::int64_t>();
        hp.use_bias = h.at("use_bias").get<bool>();
        break;
    case LayerKind::BatchNorm:
        hp.momentum = h.at("momentum").get<double>();
        hp.epsilon = h.at("epsilon").get<double>();
        break;
    case LayerKind::Reshape:
        hp.target = h.at("target").get<std::vector<std::int64_t>>();
        break;
    default:
        break;
    }
    return hp;
}

} // namespace

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc) {
    const auto* p = static_cast<const unsigned char*>(data);
    const auto& table = crc_table();
    crc = ~crc;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

void save_model(const ModelGraph& g, const std::string& path) {
    if (g.input_id() < 0 || g.output_id() < 0)
        throw GraphError("refusing to save a graph without input/output");

    json header;
    header["format_version"] = 1;
    header["family"] = g.meta.family;
    header["width_param"] = g.meta.width_param;
    header["input_size"] = g.meta.input_size;
    header["num_classes"] = g.meta.num_classes;
    header["pixel_mean"] = g.meta.pixel_mean;
    header["output"] = g.node(g.output_id()).name;

    json nodes = json::array();
    for (int id = 0; id < g.size(); ++id) {
        const LayerNode& n = g.node(id);
        json jn;
        jn["name"] = n.name;
        jn["kind"] = kind_name(n.kind);
        jn["out_shape"] = n.out_shape;
        if (n.kind != LayerKind::Input) {
            json ins = json::array();
            for (int src : n.inputs) ins.push_back(g.node(src).name);
            jn["inputs"] = std::move(ins);
            jn["hyper"] = hyper_to_json(n);
        }
        if (!n.params.empty()) {
            json ps = json::array();
            for (const auto& p : n.params)
                ps.push_back({{"name", p.name}, {"dims", p.value.dims()}, {"trainable", p.trainable}});
            jn["params"] = std::move(ps);
        }
        nodes.push_back(std::move(jn));
    }
    header["nodes"] = std::move(nodes);
    header["aliases"] = g.aliases();

    const std::string header_text = header.dump();
    std::string buf(kMagic, sizeof kMagic);
    put_u64(buf, header_text.size());
    buf += header_text;

    for (int id = 0; id < g.size(); ++id) {
        for (const auto& p : g.node(id).params) {
            const std::string pname = g.node(id).name + "/" + p.name;
            put_u32(buf, static_cast<std::uint32_t>(pname.size()));
            buf += pname;
            put_u64(buf, static_cast<std::uint64_t>(p.value.size()));
            const std::size_t off = buf.size();
            buf.resize(off + static_cast<std::size_t>(p.value.size()) * 4);
            std::memcpy(buf.data() + off, p.value.data(),
                        static_cast<std::size_t>(p.value.size()) * 4);
        }
    }
    put_u32(buf, crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

ModelGraph load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) + 12) throw IoError("model file truncated: " + path);
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw IoError("not a model file: " + path);

    Reader tail(buf, buf.size() - 4);
    const std::uint32_t stored = tail.u32();
    if (crc32(buf.data(), buf.size() - 4) != stored)
        throw IoError("model file checksum mismatch: " + path);

    Reader r(buf, sizeof kMagic);
    const std::uint64_t header_len = r.u64();
    json header;
    try {
        header = json::parse(r.bytes(header_len));
    } catch (const json::exception& e) {
        throw IoError("bad model header in " + path + ": " + e.what());
    }
    if (header.at("format_version").get<int>() != 1)
        throw IoError("unsupported model format version");

    ModelGraph g;
    g.meta.family = header.at("family").get<std::string>();
    g.meta.width_param = header.at("width_param").get<std::int64_t>();
    g.meta.input_size = header.at("input_size").get<std::int64_t>();
    g.meta.num_classes = header.at("num_classes").get<std::int64_t>();
    g.meta.pixel_mean = header.at("pixel_mean").get<double>();

    for (const auto& jn : header.at("nodes")) {
        const std::string name = jn.at("name").get<std::string>();
        const LayerKind kind = kind_from_name(jn.at("kind").get<std::string>());
        int id;
        if (kind == LayerKind::Input) {
            const auto shape = jn.at("out_shape").get<std::vector<std::int64_t>>();
            if (shape.size() != 3) throw IoError("bad input shape in " + path);
            id = g.add_input(shape[0], shape[1], shape[2]);
        } else {
            std::vector<int> inputs;
            for (const auto& src : jn.at("inputs"))
                inputs.push_back(g.require(src.get<std::string>()));
            id = g.add(kind, hyper_from_json(kind, jn.at("hyper")), inputs);
        }
        // Names are derived deterministically from the structure; a mismatch
        // means the file was edited or built by something else.
        if (g.node(id).name != name)
            throw IoError("node name mismatch in " + path + ": expected " + g.node(id).name +
                          ", file says " + name);
        if (g.node(id).out_shape != jn.at("out_shape").get<std::vector<std::int64_t>>())
            throw IoError("shape mismatch at node " + name + " in " + path);
    }
    for (const auto& [alias, target] : header.at("aliases").items())
        g.set_alias(alias, g.require(target));
    g.set_output(g.require(header.at("output").get<std::string>()));

    for (int id = 0; id < g.size(); ++id) {
        for (auto& p : g.node(id).params) {
            const std::string want = g.node(id).name + "/" + p.name;
            const std::uint32_t name_len = r.u32();
            const std::string got = r.bytes(name_len);
            if (got != want)
                throw IoError("weight order mismatch in " + path + ": expected " + want +
                              ", found " + got);
            const std::uint64_t count = r.u64();
            if (count != static_cast<std::uint64_t>(p.value.size()))
                throw IoError("weight size mismatch for " + want + " in " + path);
            r.floats(p.value.data(), count);
        }
    }
    if (r.pos() != buf.size() - 4) throw IoError("trailing bytes in " + path);
    return g;
}

std::uint32_t structure_hash(const ModelGraph& g) {
    json j;
    j["family"] = g.meta.family;
    j["width_param"] = g.meta.width_param;
    j["input_size"] = g.meta.input_size;
    j["num_classes"] = g.meta.num_classes;
    json nodes = json::array();
    for (int id = 0; id < g.size(); ++id) {
        const LayerNode& n = g.node(id);
        json jn;
        jn["name"] = n.name;
        jn["kind"] = kind_name(n.kind);
        jn["inputs"] = n.inputs;
        jn["out_shape"] = n.out_shape;
        if (n.kind != LayerKind::Input) jn["hyper"] = hyper_to_json(n);
        json dims = json::array();
        for (const auto& p : n.params) dims.push_back(p.value.dims());
        jn["param_dims"] = std::move(dims);
        nodes.push_back(std::move(jn));
    }
    j["nodes"] = std::move(nodes);
    const std::string text = j.dump();
    return crc32(text.data(), text.size());
}

} // namespace sonarzoo
