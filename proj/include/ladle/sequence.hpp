#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ladle/tensor.hpp"

namespace ladle {

// Reserved token ids shared by the toy vocabulary.
constexpr size_t kClsToken = 0;
constexpr size_t kPadToken = 1;
constexpr size_t kFirstContentToken = 2;

struct TokenSequence {
    std::vector<size_t> ids;    // position 0 carries the CLS token
    std::vector<uint8_t> mask;  // 1 = valid, pads are 0

    void validate(size_t vocab, size_t max_len) const;
};

struct PatchGrid {
    size_t grid = 0;       // P, grid is P x P
    size_t patch_dim = 0;  // flattened feature size per patch
    Tensor patches;        // (P*P) x patch_dim

    void validate() const;
};

struct EmbeddingSequence {
    Tensor vectors;  // L x d
    size_t cls_index = 0;
    std::vector<uint8_t> valid;  // per-position validity, CLS always valid

    const double* cls() const { return vectors.ptr(cls_index); }
};

// Manipulation bits in the fixed (FS, FA, TS, TA) order.
enum ManipKind : uint8_t { kFaceSwap = 0, kFaceAttribute = 1, kTextSwap = 2, kTextAttribute = 3 };

struct LabelVector {
    bool tampered = false;
    std::array<uint8_t, 4> manip = {0, 0, 0, 0};  // FS, FA, TS, TA

    void validate() const;
    bool any_manip() const { return manip[0] || manip[1] || manip[2] || manip[3]; }
    uint8_t combo_index() const {  // 0..15, bit k = manip kind k
        return static_cast<uint8_t>(manip[0] | (manip[1] << 1) | (manip[2] << 2) |
                                    (manip[3] << 3));
    }
};

}  // namespace ladle
