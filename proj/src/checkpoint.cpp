#include "pgtr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pgtr/config_io.hpp"
#include "pgtr/error.hpp"

namespace pgtr {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'T', 'R', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("checkpoint truncated");
    return v;
}

std::string take_string(std::istream& in, std::uint64_t n) {
    if (n > (1u << 30)) throw Error("checkpoint string length is implausible");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw Error("checkpoint truncated");
    return s;
}

}  // namespace

Checkpoint Checkpoint::capture(PGTRModel& model) {
    Checkpoint c;
    c.config = model.config();
    for (const auto& rf : model.feature_maps) c.feature_seeds.push_back(rf.seed);
    for (Parameter* p : model.checkpoint_parameters()) c.blocks.emplace_back(p->name, p->value);
    return c;
}

const DenseMatrix* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : blocks)
        if (n == name) return &m;
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    const std::string meta = Json{{"config", ckpt.config}, {"feature_seeds", ckpt.feature_seeds}}.dump();
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, Checkpoint::kVersion);
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
    for (const auto& [name, m] : ckpt.blocks) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(out, m.rows());
        put<std::uint64_t>(out, m.cols());
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw Error(path.string() + " is not a checkpoint");
    const auto version = take<std::uint32_t>(in);
    if (version != Checkpoint::kVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    const Json meta = Json::parse(take_string(in, take<std::uint64_t>(in)));
    c.config = meta.at("config").get<PGTRConfig>();
    c.feature_seeds = meta.at("feature_seeds").get<std::vector<std::uint64_t>>();

    const auto count = take<std::uint32_t>(in);
    for (std::uint32_t b = 0; b < count; ++b) {
        std::string name = take_string(in, take<std::uint32_t>(in));
        const auto rows = take<std::uint64_t>(in);
        const auto cols = take<std::uint64_t>(in);
        if (cols != 0 && rows > (std::uint64_t(1) << 32) / cols) throw Error("checkpoint block too large");
        DenseMatrix m(rows, cols);
        if (m.size() && !in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
            throw Error("checkpoint truncated in block " + name);
        c.blocks.emplace_back(std::move(name), std::move(m));
    }
    return c;
}

void restore_checkpoint(PGTRModel& model, const Checkpoint& ckpt) {
    if (Json(ckpt.config) != Json(model.config())) throw Error("checkpoint config does not match the model");
    if (ckpt.feature_seeds.size() != model.feature_maps.size()) throw Error("checkpoint feature-map count mismatch");
    for (std::size_t l = 0; l < ckpt.feature_seeds.size(); ++l) {
        auto& rf = model.feature_maps[l];
        if (rf.seed != ckpt.feature_seeds[l]) rf = RandomFeatureMap::sample(rf.dim(), rf.features(), ckpt.feature_seeds[l]);
    }
    for (Parameter* p : model.checkpoint_parameters()) {
        const DenseMatrix* m = ckpt.find(p->name);
        if (!m) throw Error("checkpoint has no block '" + p->name + "'");
        if (!m->same_shape(p->value)) throw Error("checkpoint block '" + p->name + "' has the wrong shape");
        p->value = *m;
        p->zero_grad();
    }
    model.encodings.spectral.by_node = *ckpt.find("spectral");
}

}  // namespace pgtr
