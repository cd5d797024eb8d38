#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace linklearn {

struct GradCheckCase {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // gradient entries compared
};

inline constexpr double kGradCheckTolerance = 1e-4;

// Finite-difference checks of every op, one transformer block with an adapter
// hook, adapter composition, attention-weight generation and the full training
// objective, all on a tiny model (2 layers, d_model 8).
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 7);

}  // namespace linklearn
