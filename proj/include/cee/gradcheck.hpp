#pragma once

#include <cstdint>

#include "cee/model.hpp"

namespace cee {

// Finite-difference check over every parameter of a freshly built model.
// The probe loss is the weighted-sum classifier objective plus
// sum_t log pi(a_t | s_t) over random actions, with s_t left attached so the
// backbone also receives policy gradients.
double model_gradient_check(const BackboneConfig& config, std::uint64_t seed, double h = 1e-5);

}  // namespace cee
