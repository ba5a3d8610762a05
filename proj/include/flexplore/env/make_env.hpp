#pragma once

#include <memory>
#include <string>

#include "flexplore/env/catch_point.hpp"
#include "flexplore/env/hard_move.hpp"
#include "flexplore/env/platform.hpp"

namespace flexplore {

// Env ids: "platform", "catch_point", "hard_move:<n>" (n in 1..10; the
// benchmark sizes are 4, 6 and 8).
inline std::unique_ptr<Env> make_env(const std::string& id) {
    if (id == "platform") return std::make_unique<PlatformEnv>();
    if (id == "catch_point") return std::make_unique<CatchPointEnv>();
    if (id.rfind("hard_move:", 0) == 0) {
        int n = 0;
        try {
            n = std::stoi(id.substr(10));
        } catch (...) {
            throw std::invalid_argument("bad hard_move size in env id '" + id + "'");
        }
        return std::make_unique<HardMoveEnv>(n);
    }
    throw std::invalid_argument("unknown env id '" + id +
                                "' (expected platform, catch_point or hard_move:<n>)");
}

}  // namespace flexplore
