#include "xcat/quant.hpp"

#include <cstring>

#include "binio.hpp"

namespace xcat {

namespace {
constexpr std::uint32_t kQModelVersion = 1;
constexpr char kQModelMagic[4] = {'H', 'X', 'Q', '8'};
}  // namespace

void save_qmodel(const QModel& qm, const std::string& path) {
    detail::Writer w(path);
    w.bytes(kQModelMagic, 4);
    w.u32(kQModelVersion);
    detail::write_config(w, qm.config);

    w.u32(static_cast<std::uint32_t>(qm.layers.size()));
    for (const auto& l : qm.layers) {
        w.u8(static_cast<std::uint8_t>(l.tag));
        w.u32(static_cast<std::uint32_t>(l.out));
        w.u32(static_cast<std::uint32_t>(l.in));
        w.u32(static_cast<std::uint32_t>(l.kh));
        w.u32(static_cast<std::uint32_t>(l.kw));
        w.f64(l.weight_q.scale);
        w.i32(l.weight_q.zero_point);
        w.array(l.weights);
        w.array(l.bias);
        w.u8(l.trainable ? 1 : 0);
    }

    w.u32(static_cast<std::uint32_t>(qm.edges.size()));
    for (const auto& e : qm.edges) {
        w.f64(e.scale);
        w.i32(e.zero_point);
    }
    w.close(path);
}

QModel load_qmodel(const std::string& path) {
    detail::Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kQModelMagic, 4) != 0)
        throw FormatError("bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != kQModelVersion)
        throw FormatError("unsupported quantized model version " + std::to_string(version));

    QModel qm;
    qm.config = detail::read_config(r);
    const auto plan = layer_plan(qm.config);
    const EdgePlan ep = edge_plan(qm.config);

    const std::uint32_t count = r.u32();
    if (count != plan.size())
        throw FormatError("config error: field m / layer plan declares " +
                          std::to_string(plan.size()) + " layers, file has " +
                          std::to_string(count));
    for (std::size_t i = 0; i < plan.size(); ++i) {
        QLayer l;
        l.tag = static_cast<LayerTag>(r.u8());
        if (l.tag != plan[i].tag)
            throw FormatError("layer " + std::to_string(i) + ": unexpected layer tag");
        l.out = static_cast<int>(r.u32());
        l.in = static_cast<int>(r.u32());
        l.kh = static_cast<int>(r.u32());
        l.kw = static_cast<int>(r.u32());
        if (l.out != plan[i].out || l.in != plan[i].in || l.kh != plan[i].kh ||
            l.kw != plan[i].kw)
            throw FormatError("layer " + std::to_string(i) + ": shape mismatch");
        l.weight_q.scale = r.f64();
        l.weight_q.zero_point = r.i32();
        l.weights.resize(static_cast<std::size_t>(l.out) * l.in * l.kh * l.kw);
        r.array(l.weights);
        l.bias.resize(static_cast<std::size_t>(l.out));
        r.array(l.bias);
        l.trainable = r.u8() != 0;
        qm.layers.push_back(std::move(l));
    }
    assign_layer_edges(qm.config, ep, qm.layers);

    const std::uint32_t edge_count = r.u32();
    if (edge_count != static_cast<std::uint32_t>(ep.count))
        throw FormatError("edge table size mismatch: file has " + std::to_string(edge_count) +
                          ", config needs " + std::to_string(ep.count));
    qm.edges.resize(static_cast<std::size_t>(ep.count));
    for (auto& e : qm.edges) {
        e.scale = r.f64();
        e.zero_point = r.i32();
    }
    return qm;
}

}  // namespace xcat
