#include "cobra/checkpoint.hpp"

#include <fstream>
#include <map>

#include "cobra/serialize.hpp"

namespace cobra {

namespace {
constexpr char kMagic[9] = "COBRACKP";
constexpr uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(CobraModel& model, const ExperimentConfig& cfg, const Rng& rng,
                     std::ostream& os) {
    os.write(kMagic, 8);
    io::write_u32(os, kVersion);
    io::write_string(os, cfg.resolved_text());
    io::write_u32(os, static_cast<uint32_t>(model.steps.size()));
    io::write_u32(os, static_cast<uint32_t>(model.registry.count()));
    for (int i = 0; i < model.registry.count(); ++i) {
        io::write_u32(os, static_cast<uint32_t>(model.registry.subject_ids[static_cast<size_t>(i)]));
        io::write_u32(os, model.registry.frozen[static_cast<size_t>(i)] ? 1u : 0u);
    }
    io::write_u32(os, static_cast<uint32_t>(model.routing.size()));
    for (const auto& [subject, step] : model.routing) {
        io::write_u32(os, static_cast<uint32_t>(subject));
        io::write_u32(os, static_cast<uint32_t>(step));
    }
    io::write_u64(os, rng.state());
    io::write_u32(os, rng.has_spare() ? 1u : 0u);
    io::write_f64(os, rng.spare());

    uint32_t count = 0;
    model.visit([&count](const std::string&, Tensor&) { ++count; });
    io::write_u32(os, count);
    model.visit([&os](const std::string& name, Tensor& t) {
        io::write_string(os, name);
        io::write_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) io::write_u32(os, static_cast<uint32_t>(d));
        io::write_f32_vec(os, t.data());
    });
    if (!os) throw DataError("checkpoint write failed");
}

void save_checkpoint(CobraModel& model, const ExperimentConfig& cfg, const Rng& rng,
                     const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    save_checkpoint(model, cfg, rng, os);
}

LoadedCheckpoint load_checkpoint(std::istream& is) {
    const std::string path = "<stream>";
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8))
        throw DataError("bad checkpoint magic in " + path);
    if (io::read_u32(is) != kVersion) throw DataError("unsupported checkpoint version");

    LoadedCheckpoint out;
    out.cfg = ExperimentConfig::parse_text(io::read_string(is));
    Rng scratch(0);
    out.model = CobraModel(out.cfg.model, scratch);
    const uint32_t n_steps = io::read_u32(is);
    for (uint32_t i = 0; i < n_steps; ++i) out.model.add_step(scratch);
    const uint32_t n_centers = io::read_u32(is);
    for (uint32_t i = 0; i < n_centers; ++i) {
        const int subject = static_cast<int>(io::read_u32(is));
        const bool frozen = io::read_u32(is) != 0;
        out.model.registry.add_subject(subject, out.cfg.model.d_model, scratch);
        if (frozen) {
            out.model.registry.frozen.back() = true;
            out.model.registry.centers.back().set_requires_grad(false);
        }
    }
    const uint32_t n_routes = io::read_u32(is);
    for (uint32_t i = 0; i < n_routes; ++i) {
        const int subject = static_cast<int>(io::read_u32(is));
        const int step = static_cast<int>(io::read_u32(is));
        out.model.routing[subject] = step;
    }
    const uint64_t state = io::read_u64(is);
    const bool has_spare = io::read_u32(is) != 0;
    const double spare = io::read_f64(is);
    out.rng.restore(state, has_spare, spare);

    std::map<std::string, Tensor> by_name;
    out.model.visit([&by_name](const std::string& name, Tensor& t) { by_name.emplace(name, t); });
    const uint32_t count = io::read_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = io::read_string(is);
        const uint32_t ndim = io::read_u32(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(io::read_u32(is));
        std::vector<float> data = io::read_f32_vec(is);
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("unknown tensor in checkpoint: " + name);
        if (it->second.shape() != shape)
            throw DataError("shape mismatch for checkpoint tensor " + name);
        it->second.data() = std::move(data);
    }
    if (count != by_name.size())
        throw DataError("checkpoint tensor count mismatch");
    return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    return load_checkpoint(is);
}

}  // namespace cobra
