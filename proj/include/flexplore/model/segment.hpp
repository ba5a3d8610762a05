#pragma once

#include <stdexcept>
#include <vector>

#include "flexplore/env/env.hpp"

namespace flexplore {

// One (s, a, r, s') transition; padded records repeat a terminal state
// with zero reward past the end of a short episode.
struct SegRecord {
    Vec s;
    HybridAction a;
    double r = 0.0;
    Vec s_next;
    bool done = false;
    bool padded = false;
};

// An H-step window of consecutive transitions from one episode.
struct Segment {
    std::vector<SegRecord> records;
    double gamma = 0.99;

    int length() const { return static_cast<int>(records.size()); }

    void validate() const {
        if (records.empty()) throw std::invalid_argument("Segment: empty");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("Segment: gamma out of (0,1]");
        for (size_t i = 0; i + 1 < records.size(); ++i)
            if (records[i].s_next != records[i + 1].s)
                throw std::invalid_argument("Segment: records do not chain at index " + std::to_string(i));
    }
};

}  // namespace flexplore
