#include "cobra/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cobra/errors.hpp"
#include "cobra/serialize.hpp"

namespace cobra {

namespace {

constexpr char kMagic[9] = "COBRADS1";
constexpr uint32_t kVersion = 1;
constexpr int kTestIdBase = 1'000'000;

std::vector<int> make_placement(int voxel_count, int grid_h, int grid_w, Rng& rng) {
    if (voxel_count > grid_h * grid_w)
        throw ConfigError("voxel count exceeds grid capacity");
    // Scattered raster blocks: the grid is cut into 8x8 pseudo-ROIs, the
    // block order is shuffled per subject, and voxels fill each block in
    // raster order. Consecutive 1D indices are near each other inside a
    // block but jump across the grid at block boundaries.
    const int bs = 8;
    const int bh = (grid_h + bs - 1) / bs, bw = (grid_w + bs - 1) / bs;
    std::vector<int> block_order(static_cast<size_t>(bh) * bw);
    for (size_t i = 0; i < block_order.size(); ++i) block_order[i] = static_cast<int>(i);
    rng.shuffle(block_order);
    std::vector<int> placement;
    placement.reserve(static_cast<size_t>(voxel_count));
    for (int b : block_order) {
        const int r0 = (b / bw) * bs, c0 = (b % bw) * bs;
        for (int di = 0; di < bs && r0 + di < grid_h; ++di)
            for (int dj = 0; dj < bs && c0 + dj < grid_w; ++dj) {
                if (static_cast<int>(placement.size()) == voxel_count) return placement;
                placement.push_back((r0 + di) * grid_w + (c0 + dj));
            }
    }
    return placement;
}

std::vector<float> draw_labels(const DataConfig& cfg, Rng& rng) {
    std::vector<float> y(static_cast<size_t>(cfg.classes), 0.0f);
    const int active = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.max_labels)));
    int placed = 0;
    while (placed < active) {
        const auto c = rng.uniform_int(static_cast<uint64_t>(cfg.classes));
        if (y[c] == 0.0f) {
            y[c] = 1.0f;
            ++placed;
        }
    }
    return y;
}

struct StimulusRecord {
    int id;
    std::vector<float> labels;
    std::vector<float> clip;
};

StimulusRecord make_stimulus(const DataConfig& cfg, int id,
                             const std::vector<float>& clip_readout, int clip_len,
                             Rng& rng) {
    StimulusRecord s;
    s.id = id;
    s.labels = draw_labels(cfg, rng);
    s.clip.assign(static_cast<size_t>(clip_len), 0.0f);
    for (int c = 0; c < cfg.classes; ++c) {
        if (s.labels[static_cast<size_t>(c)] == 0.0f) continue;
        for (int j = 0; j < clip_len; ++j)
            s.clip[static_cast<size_t>(j)] +=
                clip_readout[static_cast<size_t>(c) * clip_len + j];
    }
    for (int j = 0; j < clip_len; ++j)
        s.clip[static_cast<size_t>(j)] +=
            static_cast<float>(cfg.clip_noise * rng.gaussian());
    return s;
}

Sample make_sample(const DataConfig& cfg, const Dataset& d, const SubjectProfile& prof,
                   const StimulusRecord& stim, bool is_test, Rng& rng) {
    const int sd = cfg.signature_dim;
    std::vector<float> sig(static_cast<size_t>(sd), 0.0f);
    for (int c = 0; c < cfg.classes; ++c) {
        if (stim.labels[static_cast<size_t>(c)] == 0.0f) continue;
        for (int j = 0; j < sd; ++j)
            sig[static_cast<size_t>(j)] += d.signature_map[static_cast<size_t>(c) * sd + j];
    }
    std::vector<float> voxels(static_cast<size_t>(prof.voxel_count));
    for (int v = 0; v < prof.voxel_count; ++v) {
        double acc = 0.0;
        for (int j = 0; j < sd; ++j)
            acc += static_cast<double>(prof.mixing[static_cast<size_t>(v) * sd + j]) *
                   sig[static_cast<size_t>(j)];
        voxels[static_cast<size_t>(v)] =
            static_cast<float>(acc + prof.noise_scale * rng.gaussian());
    }
    Sample s;
    s.subject_id = prof.subject_id;
    s.stimulus_id = stim.id;
    s.is_test = is_test;
    s.grid = project_1d_to_2d(voxels, prof, cfg.grid_h, cfg.grid_w);
    s.labels = stim.labels;
    s.clip = stim.clip;
    return s;
}

}  // namespace

Dataset generate(const DataConfig& cfg, int l_clip, int d_model, uint64_t seed) {
    if (cfg.subjects < 1 || cfg.classes < 2)
        throw ConfigError("generate: need subjects >= 1 and classes >= 2");
    if (cfg.voxel_min <= 0 || cfg.voxel_max < cfg.voxel_min)
        throw ConfigError("generate: invalid voxel count range");
    if (cfg.channels != 1)
        throw ConfigError("generate: only single-channel grids are supported");
    Rng rng(seed);
    Dataset d;
    d.cfg = cfg;
    d.seed = seed;
    d.l_clip = l_clip;
    d.d_model = d_model;
    const int clip_len = l_clip * d_model;
    const int sd = cfg.signature_dim;

    d.signature_map.resize(static_cast<size_t>(cfg.classes) * sd);
    for (auto& x : d.signature_map) x = static_cast<float>(rng.gaussian());
    d.clip_readout.resize(static_cast<size_t>(cfg.classes) * clip_len);
    for (auto& x : d.clip_readout) x = static_cast<float>(0.7 * rng.gaussian());

    const float mix_scale = 1.0f / std::sqrt(static_cast<float>(sd));
    for (int s = 0; s < cfg.subjects; ++s) {
        SubjectProfile prof;
        prof.subject_id = s + 1;
        const int range = cfg.voxel_max - cfg.voxel_min + 1;
        prof.voxel_count =
            cfg.voxel_min + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(range)));
        prof.placement = make_placement(prof.voxel_count, cfg.grid_h, cfg.grid_w, rng);
        prof.mixing.resize(static_cast<size_t>(prof.voxel_count) * sd);
        for (auto& x : prof.mixing) x = static_cast<float>(rng.gaussian() * mix_scale);
        prof.noise_scale = cfg.noise_scale;
        d.profiles.push_back(std::move(prof));
    }

    // Shared test stimuli: one sample per subject per stimulus.
    std::vector<StimulusRecord> test_stimuli;
    test_stimuli.reserve(static_cast<size_t>(cfg.test_stimuli));
    for (int t = 0; t < cfg.test_stimuli; ++t)
        test_stimuli.push_back(make_stimulus(cfg, kTestIdBase + t, d.clip_readout, clip_len, rng));

    int next_train_id = 0;
    for (const auto& prof : d.profiles) {
        for (int i = 0; i < cfg.train_per_subject; ++i) {
            const StimulusRecord stim =
                make_stimulus(cfg, next_train_id++, d.clip_readout, clip_len, rng);
            d.samples.push_back(make_sample(cfg, d, prof, stim, false, rng));
        }
        for (const auto& stim : test_stimuli)
            d.samples.push_back(make_sample(cfg, d, prof, stim, true, rng));
    }
    return d;
}

std::vector<float> project_1d_to_2d(const std::vector<float>& voxels,
                                    const SubjectProfile& profile, int grid_h,
                                    int grid_w) {
    if (static_cast<int>(voxels.size()) != profile.voxel_count)
        throw DimensionError("project: voxel vector length mismatch");
    std::vector<float> grid(static_cast<size_t>(grid_h) * grid_w, 0.0f);
    for (int v = 0; v < profile.voxel_count; ++v)
        grid[static_cast<size_t>(profile.placement[static_cast<size_t>(v)])] =
            voxels[static_cast<size_t>(v)];
    return grid;
}

std::vector<float> unproject_2d_to_1d(const std::vector<float>& grid,
                                      const SubjectProfile& profile) {
    std::vector<float> voxels(static_cast<size_t>(profile.voxel_count));
    for (int v = 0; v < profile.voxel_count; ++v)
        voxels[static_cast<size_t>(v)] =
            grid[static_cast<size_t>(profile.placement[static_cast<size_t>(v)])];
    return voxels;
}

ContiguityReport contiguity_report(const SubjectProfile& profile, int grid_w) {
    ContiguityReport rep;
    double sum = 0.0;
    int far = 0;
    for (int v = 0; v + 1 < profile.voxel_count; ++v) {
        const int a = profile.placement[static_cast<size_t>(v)];
        const int b = profile.placement[static_cast<size_t>(v) + 1];
        const double dr = a / grid_w - b / grid_w;
        const double dc = a % grid_w - b % grid_w;
        const double dist = std::sqrt(dr * dr + dc * dc);
        rep.distances.push_back(static_cast<float>(dist));
        sum += dist;
        rep.max = std::max(rep.max, dist);
        if (dist > std::sqrt(2.0) + 1e-9) ++far;
    }
    if (!rep.distances.empty()) {
        rep.mean = sum / static_cast<double>(rep.distances.size());
        rep.far_fraction = static_cast<double>(far) / static_cast<double>(rep.distances.size());
    }
    return rep;
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 8);
    io::write_u32(os, kVersion);
    io::write_u64(os, d.seed);
    const auto& c = d.cfg;
    for (int v : {c.subjects, c.classes, c.grid_h, c.grid_w, c.channels,
                  c.train_per_subject, c.test_stimuli, c.voxel_min, c.voxel_max,
                  c.signature_dim, c.max_labels})
        io::write_u32(os, static_cast<uint32_t>(v));
    io::write_f32(os, c.noise_scale);
    io::write_f32(os, c.clip_noise);
    io::write_u32(os, static_cast<uint32_t>(d.l_clip));
    io::write_u32(os, static_cast<uint32_t>(d.d_model));
    io::write_f32_vec(os, d.signature_map);
    io::write_f32_vec(os, d.clip_readout);
    io::write_u32(os, static_cast<uint32_t>(d.profiles.size()));
    for (const auto& p : d.profiles) {
        io::write_u32(os, static_cast<uint32_t>(p.subject_id));
        io::write_u32(os, static_cast<uint32_t>(p.voxel_count));
        io::write_u64(os, p.placement.size());
        for (int cell : p.placement) io::write_u32(os, static_cast<uint32_t>(cell));
        io::write_f32_vec(os, p.mixing);
        io::write_f32(os, p.noise_scale);
    }
    io::write_u64(os, d.samples.size());
    for (const auto& s : d.samples) {
        io::write_u32(os, static_cast<uint32_t>(s.subject_id));
        io::write_u32(os, static_cast<uint32_t>(s.stimulus_id));
        io::write_u32(os, s.is_test ? 1u : 0u);
        io::write_f32_vec(os, s.grid);
        io::write_f32_vec(os, s.labels);
        io::write_f32_vec(os, s.clip);
    }
    if (!os) throw DataError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8))
        throw DataError("bad dataset magic in " + path);
    if (io::read_u32(is) != kVersion) throw DataError("unsupported dataset version");
    Dataset d;
    d.seed = io::read_u64(is);
    auto& c = d.cfg;
    for (int* v : {&c.subjects, &c.classes, &c.grid_h, &c.grid_w, &c.channels,
                   &c.train_per_subject, &c.test_stimuli, &c.voxel_min, &c.voxel_max,
                   &c.signature_dim, &c.max_labels})
        *v = static_cast<int>(io::read_u32(is));
    c.noise_scale = io::read_f32(is);
    c.clip_noise = io::read_f32(is);
    d.l_clip = static_cast<int>(io::read_u32(is));
    d.d_model = static_cast<int>(io::read_u32(is));
    d.signature_map = io::read_f32_vec(is);
    d.clip_readout = io::read_f32_vec(is);
    const uint32_t np = io::read_u32(is);
    for (uint32_t i = 0; i < np; ++i) {
        SubjectProfile p;
        p.subject_id = static_cast<int>(io::read_u32(is));
        p.voxel_count = static_cast<int>(io::read_u32(is));
        const uint64_t n = io::read_u64(is);
        p.placement.resize(n);
        for (auto& cell : p.placement) cell = static_cast<int>(io::read_u32(is));
        p.mixing = io::read_f32_vec(is);
        p.noise_scale = io::read_f32(is);
        d.profiles.push_back(std::move(p));
    }
    const uint64_t ns = io::read_u64(is);
    for (uint64_t i = 0; i < ns; ++i) {
        Sample s;
        s.subject_id = static_cast<int>(io::read_u32(is));
        s.stimulus_id = static_cast<int>(io::read_u32(is));
        s.is_test = io::read_u32(is) != 0;
        s.grid = io::read_f32_vec(is);
        s.labels = io::read_f32_vec(is);
        s.clip = io::read_f32_vec(is);
        d.samples.push_back(std::move(s));
    }
    return d;
}

const SubjectProfile& Dataset::profile_of(int subject_id) const {
    for (const auto& p : profiles)
        if (p.subject_id == subject_id) return p;
    throw DataError("no profile for subject " + std::to_string(subject_id));
}

std::vector<Sample> Dataset::train_samples(int subject_id) const {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if (s.subject_id == subject_id && !s.is_test) out.push_back(s);
    return out;
}

std::vector<Sample> Dataset::test_samples(int subject_id) const {
    std::vector<Sample> out;
    for (const auto& s : samples)
        if (s.subject_id == subject_id && s.is_test) out.push_back(s);
    return out;
}

std::vector<int> Dataset::subject_ids() const {
    std::vector<int> ids;
    for (const auto& p : profiles) ids.push_back(p.subject_id);
    return ids;
}

}  // namespace cobra
