#pragma once

#include <functional>

#include "flexplore/core/tape.hpp"

namespace flexplore::testutil {

// central finite differences over every parameter of a block
inline bool check_param_gradients(ParamBlock& pb, const std::function<double()>& loss_value,
                                  const std::function<void()>& compute_grads, double h = 1e-5,
                                  double rtol = 1e-4, double atol = 1e-7,
                                  double* worst_rel = nullptr) {
    pb.zero_grads();
    compute_grads();
    // snapshot analytic gradients
    std::vector<Layer> analytic = pb.grads;

    bool ok = true;
    double worst = 0.0;
    auto check_one = [&](double& param, double g_ad) {
        double saved = param;
        param = saved + h;
        double up = loss_value();
        param = saved - h;
        double down = loss_value();
        param = saved;
        double g_fd = (up - down) / (2.0 * h);
        double err = std::abs(g_ad - g_fd);
        double scale = std::max({std::abs(g_ad), std::abs(g_fd), 1.0});
        worst = std::max(worst, err / scale);
        if (err > atol + rtol * scale) ok = false;
    };
    for (size_t li = 0; li < pb.layers.size(); ++li) {
        for (size_t i = 0; i < pb.layers[li].w.size(); ++i)
            check_one(pb.layers[li].w.a[i], analytic[li].w.a[i]);
        for (size_t i = 0; i < pb.layers[li].b.size(); ++i)
            check_one(pb.layers[li].b[i], analytic[li].b[i]);
    }
    if (worst_rel) *worst_rel = worst;
    return ok;
}

inline ParamBlock random_block(const MlpSpec& spec, uint64_t seed, const std::string& name = "t") {
    Rng rng(seed);
    return init_params(spec, name, rng);
}

}  // namespace flexplore::testutil
