#pragma once

#include <string>

#include "invercl/network.hpp"

namespace invercl {

inline constexpr const char* kCheckpointMagic = "INVERCL-NET-v1";

// Textual checkpoint: magic header, layer kinds/shapes/weights, stats, head.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace invercl
