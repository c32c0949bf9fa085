// SPDX-License-Identifier: Apache-2.0

// Linked against the double-precision build.

#include <type_traits>

#include "doctest.h"

#include "gradcheck.hpp"

static_assert(std::is_same_v<codeforge::numeric::real, double>, "gradient checks need the double build");

namespace {

void check_cases(const std::vector<gradcheck::Case>& cases, std::uint64_t seed) {
    for (const auto& r : gradcheck::run_all(cases, seed)) {
        INFO(r.name << ": worst relative error " << r.worst << " over " << r.instances << " instances");
        CHECK(r.worst < gradcheck::kTolerance);
    }
}

}  // namespace

TEST_CASE("every differentiable op matches central differences") { check_cases(gradcheck::op_cases(), 101); }

TEST_CASE("language models and encoders match central differences") { check_cases(gradcheck::model_cases(), 202); }

TEST_CASE("the checker notices a wrong gradient") {
    using namespace codeforge::numeric;
    // x -> x*x with its gradient scaled by a detached factor is still x*x
    // forward but twice the slope backward: mul(x, x) + mul(x, stop(x)) - x*x.
    Tensor x({3}, {0.5, -1.0, 2.0});
    Tensor frozen({3}, {0.5, -1.0, 2.0});
    const double err = gradcheck::relative_error(
        [&] {
            for (std::size_t i = 0; i < 3; ++i) frozen.data()[i] = x.data()[i];
            return sum(sub(mul(x, mul(x, Tensor({3}, {2, 2, 2}))), mul(frozen, frozen)));
        },
        {x});
    CHECK(err > 0.1);
}
