#ifndef NETLENS_RELEVANCE_HPP
#define NETLENS_RELEVANCE_HPP

#include <map>
#include <string>

#include "netlens/network.hpp"

namespace netlens {

enum class SeedMode { Logit, Unit };

// LRP relevances per layer, channel-resolved at the input. The output layer
// holds the one-hot seed; every other entry matches that layer's activation
// shape.
struct RelevanceMap {
    std::size_t target_class = 0;
    SeedMode seed_mode = SeedMode::Logit;
    double seed_value = 0.0;
    Tensor input_relevance; // (C,H,W)
    std::map<std::string, Tensor> layer_relevance;
    double conservation_gap = 0.0; // |sum(input R) - seed| / max(|seed|, 1e-12)
    bool conservation_break = false;
};

// Backpropagates relevance from the target logit to the input with the
// alpha1-beta0 rule: linear layers distribute through positive contributions
// z+ = max(0, x_j * w_jk), positive bias enters the denominator only, relu
// passes through, maxpool routes winner-take-all, global avgpool reuses the
// positive rule with uniform weights, add splits by positive branch
// activation (50/50 on double zeros).
RelevanceMap explain(const NetworkSpec& net, const Tensor& input_chw,
                     std::size_t target_class, SeedMode seed_mode = SeedMode::Logit);

inline constexpr double kLrpEpsilon = 1e-9;

} // namespace netlens

#endif
