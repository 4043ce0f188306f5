#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pgtr/model.hpp"

namespace pgtr {

/// On-disk layout, all integers little-endian:
///   "PGTRCKPT" | u32 version | u64 json length | config json |
///   u32 block count | per block: u32 name length, name, u64 rows, u64 cols, rows*cols f64
/// The json carries the model config and the per-layer feature-map seeds.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    PGTRConfig config;
    std::vector<std::uint64_t> feature_seeds;
    std::vector<std::pair<std::string, DenseMatrix>> blocks;

    static Checkpoint capture(PGTRModel& model);
    const DenseMatrix* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every block into the matching model parameter. Throws if the model
/// was built with a different config or a block is missing or misshapen.
void restore_checkpoint(PGTRModel& model, const Checkpoint& ckpt);

}  // namespace pgtr
