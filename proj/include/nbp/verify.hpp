#ifndef NBP_VERIFY_HPP
#define NBP_VERIFY_HPP

#include <string>
#include <vector>

namespace nbp::verify {

struct check_result {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Full identity suite: schedule recurrences, bridge-correction dual forms,
// marginal-vs-step Monte-Carlo, reparameterization identity, ablation
// equality against locally coded plain-DDPM formulas, equivariance and
// gradient checks, endpoint init mean. `inject_fault` is a test fixture:
// "c-bridge-sign-flip" flips the bridge correction inside the
// reparameterization check, which must then fail by name.
std::vector<check_result> run_verification(const std::string& inject_fault = "");

std::string format_table(const std::vector<check_result>& results);

}  // namespace nbp::verify

#endif
