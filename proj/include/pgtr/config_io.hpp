#pragma once

// JSON forms of the configuration structs. Field names match the CLI flags
// where one exists.

#include <json.hpp>

#include "pgtr/data.hpp"
#include "pgtr/model.hpp"
#include "pgtr/training.hpp"

namespace pgtr {

using Json = nlohmann::json;

void to_json(Json& j, const EncodingDims& v);
void from_json(const Json& j, EncodingDims& v);
void to_json(Json& j, const EncodingSwitches& v);
void from_json(const Json& j, EncodingSwitches& v);
void to_json(Json& j, const PGTRConfig& v);
void from_json(const Json& j, PGTRConfig& v);
void to_json(Json& j, const TrainConfig& v);
void from_json(const Json& j, TrainConfig& v);
void to_json(Json& j, const SplitSpec& v);
void from_json(const Json& j, SplitSpec& v);
void to_json(Json& j, const NoiseSpec& v);
void from_json(const Json& j, NoiseSpec& v);
void to_json(Json& j, const SyntheticSpec& v);
void from_json(const Json& j, SyntheticSpec& v);

/// Rejects keys of `j` outside `known`, naming the first offender.
void require_known_keys(const Json& j, std::initializer_list<const char*> known, const char* what);

}  // namespace pgtr
