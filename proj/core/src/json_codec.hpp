#pragma once

// Internal JSON mapping shared by the packet codec and the client journal.

#include <json.hpp>

#include <string>
#include <string_view>

#include "sensorlink/rows.hpp"

namespace sensorlink::detail {

using Json = nlohmann::json;

Json row_to_json(Stream stream, const Row& row);
Row row_from_json(Stream stream, const Json& j);

/// {"<stream>": [rows...], ...}; empty streams are dropped.
Json batch_to_json(const RowBatch& batch);
RowBatch batch_from_json(const Json& j);

/// Compact dump; maps invalid UTF-8 to Error(non_representable).
std::string dump_canonical(const Json& j);
/// Maps parse failures (and nesting deeper than 16) to Error(malformed_payload).
Json parse_json(std::string_view text);

}  // namespace sensorlink::detail
