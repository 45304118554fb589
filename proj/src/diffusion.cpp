#include "nbp/diffusion.hpp"

namespace nbp::model {

alignment_kind alignment_kind_from_string(const std::string& s) {
    if (s == "identity") return alignment_kind::identity;
    if (s == "mean_projection") return alignment_kind::mean_projection;
    if (s == "custom_affine") return alignment_kind::custom_affine;
    throw invalid_argument("unknown alignment kind '" + s + "'");
}

std::string to_string(alignment_kind k) {
    switch (k) {
        case alignment_kind::identity: return "identity";
        case alignment_kind::mean_projection: return "mean_projection";
        default: return "custom_affine";
    }
}

loss_kind loss_kind_from_string(const std::string& s) {
    if (s == "l2") return loss_kind::l2;
    if (s == "l1") return loss_kind::l1;
    throw invalid_argument("unknown loss kind '" + s + "' (expected l2 or l1)");
}

std::string to_string(loss_kind k) {
    return k == loss_kind::l2 ? "l2" : "l1";
}

}  // namespace nbp::model
