#pragma once

#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    bool pass = false;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference check of d loss / d leaf against the analytic gradient.
//
// `loss_fn` rebuilds the scalar loss from the current leaf values; the leaf is
// perturbed in place between evaluations. Error per component is
// |a - n| / max(1, |a|, |n|), so zero-gradient components compare absolutely.
// A bitwise mismatch between two evaluations of `loss_fn` means the function
// is not deterministic and aborts the check.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& loss_fn, Tensor<T> leaf, double h,
                           double tol, std::vector<int64_t> components = {}) {
    Tensor<T> loss = loss_fn();
    require<NumericError>(loss.numel() == 1, "grad_check: loss must be scalar, got ",
                          shape_str(loss.shape()));
    const T first = loss.item();
    const T second = loss_fn().item();
    require<NumericError>(std::memcmp(&first, &second, sizeof(T)) == 0,
                          "grad_check: loss function is not deterministic (", first, " vs ",
                          second, ")");

    leaf.zero_grad();
    loss = loss_fn();
    loss.backward();
    require<NumericError>(leaf.has_grad(),
                          "grad_check: leaf did not receive a gradient; is requires_grad set?");
    std::vector<T> analytic(leaf.grad().begin(), leaf.grad().end());

    if (components.empty())
        for (int64_t i = 0; i < leaf.numel(); ++i) components.push_back(i);

    GradCheckReport report;
    auto vals = leaf.values_mut();
    for (int64_t idx : components) {
        const T saved = vals[idx];
        vals[idx] = saved + static_cast<T>(h);
        const double up = static_cast<double>(loss_fn().item());
        vals[idx] = saved - static_cast<T>(h);
        const double down = static_cast<double>(loss_fn().item());
        vals[idx] = saved;

        const double numeric = (up - down) / (2.0 * h);
        const double a = static_cast<double>(analytic[idx]);
        const double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
        const double err = std::abs(a - numeric) / scale;
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_index = idx;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
        ++report.checked;
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

}  // namespace inpaint
