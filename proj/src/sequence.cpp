#include "ladle/sequence.hpp"

namespace ladle {

void TokenSequence::validate(size_t vocab, size_t max_len) const {
    if (ids.empty() || ids.size() > max_len)
        throw input_error("token sequence length " + std::to_string(ids.size()) +
                          " outside [1, " + std::to_string(max_len) + "]");
    if (mask.size() != ids.size()) throw input_error("token mask length mismatch");
    if (ids[0] != kClsToken) throw input_error("token sequence must start with CLS");
    if (!mask[0]) throw input_error("CLS position must be valid");
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab)
            throw input_error("token id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary of " +
                              std::to_string(vocab));
        if (!mask[i] && ids[i] != kPadToken)
            throw input_error("masked position " + std::to_string(i) + " must hold the pad id");
    }
}

void PatchGrid::validate() const {
    if (grid == 0 || patch_dim == 0) throw input_error("patch grid: empty geometry");
    if (patches.rows != grid * grid || patches.cols != patch_dim)
        throw input_error("patch grid: tensor shape does not match geometry");
    if (!patches.all_finite()) throw input_error("patch grid: non-finite values");
}

void LabelVector::validate() const {
    const bool any = manip[0] || manip[1] || manip[2] || manip[3];
    if (!tampered && any)
        throw input_error("pristine label carries manipulation bits");
    if (tampered && !any)
        throw input_error("tampered label without manipulation bits");
}

}  // namespace ladle
