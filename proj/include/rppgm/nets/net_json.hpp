#pragma once

#include <json.hpp>

#include "rppgm/nets/gaussian_net.hpp"

namespace rppgm::nets {

using Json = nlohmann::ordered_json;

// Full network state including power vectors. Field order is fixed, and
// doubles are written with round-trip precision, so save/load is bit-exact.
Json net_to_json(const GaussianNet& net);
GaussianNet net_from_json(const Json& j);

Json spec_to_json(const NetSpec& spec);
NetSpec spec_from_json(const Json& j);

} // namespace rppgm::nets
