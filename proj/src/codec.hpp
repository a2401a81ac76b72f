#pragma once

// JSON encodings shared by the canonical dataset format and run records.
// Key order is fixed by insertion; dump() output is byte-stable.

#include <json.hpp>

#include "sq/backends.hpp"
#include "sq/core.hpp"
#include "sq/metrics.hpp"

namespace sq::detail {

using json = nlohmann::ordered_json;

json sample_to_json(const MainQuestion& sample);
// Throws json::exception or Error on malformed input. Sets the locator to
// the image id.
MainQuestion sample_from_json(const json& j);

json dialogue_to_json(const Dialogue& dialogue);
Dialogue dialogue_from_json(const json& j);

json eval_to_json(const EvalResult& result);
EvalResult eval_from_json(const json& j);

json params_to_json(const GenerationParams& params);

}  // namespace sq::detail
