#ifndef DCNN_TESTS_GRADCHECK_HPP
#define DCNN_TESTS_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "dcnn/tensor.hpp"

// Central finite-difference oracle for gradient checks. Runs at double
// precision with step 1e-5; this file must stay independent of the
// analytic backward paths it is used to verify. The relative error uses
// denominator max(|analytic|, |numeric|, 1e-4), an absolute floor below
// which the difference quotient is dominated by rounding noise.

namespace dcnn_tests {

struct GradCheckResult {
    double max_rel_err = 0;
    std::size_t worst_index = 0;
    bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

// loss must be a pure function of the buffer contents.
GradCheckResult finite_difference_check(std::vector<double*> params,
                                        const std::vector<std::vector<double>>& analytic,
                                        const std::function<double()>& loss,
                                        double step = 1e-5);

// Convenience for a single tensor.
GradCheckResult finite_difference_check(dcnn::Tensor<double>& param,
                                        const dcnn::Tensor<double>& analytic,
                                        const std::function<double()>& loss,
                                        double step = 1e-5);

// Fills a tensor with uniform values in [-1, 1] from the given rng.
void fill_uniform(dcnn::Tensor<double>& t, dcnn::SeededRng& rng, double lo = -1, double hi = 1);
void fill_uniform(std::vector<double>& v, dcnn::SeededRng& rng, double lo = -1, double hi = 1);

} // namespace dcnn_tests

#endif
