#pragma once

#include <chrono>
#include <string>

#include "json.hpp"

namespace cafs {

// Sends one request line to a daemon's local API and waits for the reply.
// Throws Error(IoFailure) when the daemon cannot be reached.
nlohmann::json api_call(const std::string& api_addr, const nlohmann::json& request,
                        std::chrono::milliseconds timeout = std::chrono::minutes(10));

}  // namespace cafs
