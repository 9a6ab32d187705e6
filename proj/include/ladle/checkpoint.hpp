#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ladle/params.hpp"
#include "ladle/tensor.hpp"

namespace ladle {

// Checkpoint container. On-disk layout, all integers little-endian:
//
//   bytes 0-3   magic "LADL"
//   bytes 4-7   format version (u32) = 1
//   bytes 8-15  header length in bytes (u64)
//   header      UTF-8 JSON: {"tensors": {name: {dtype, shape, offset,
//               nbytes}}, "metadata": {...}}, offsets relative to the
//               payload start (header end)
//   payload     contiguous little-endian tensor data
//
// dtype is "f32" or "f64". Metadata round-trips untouched.

enum class DType : uint8_t { f32, f64 };

size_t dtype_size(DType t);
std::string dtype_name(DType t);
DType dtype_from_name(const std::string& s);

struct CkptTensor {
    DType dtype = DType::f64;
    std::vector<uint64_t> shape;
    std::vector<char> raw;  // little-endian payload bytes

    uint64_t numel() const;
    Tensor to_tensor() const;                       // widens f32 to double
    static CkptTensor from_tensor(const Tensor& t);  // stored as f64
};

struct Checkpoint {
    std::vector<std::pair<std::string, CkptTensor>> tensors;  // insertion order
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

    bool has(const std::string& name) const;
    const CkptTensor& at(const std::string& name) const;

    static Checkpoint from_params(const ParamStore& store, nlohmann::ordered_json metadata);
    void into_params(ParamStore& store) const;  // shapes must match

    std::string serialize() const;
    static Checkpoint deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;  // atomic
    static Checkpoint load(const std::filesystem::path& path);

    uint64_t content_hash() const;  // over serialized bytes
};

// Uniform (or weighted) elementwise average. All checkpoints must share the
// same name/shape/dtype schema; the first divergent tensor is named in the
// error. Accumulation is centered on the hash-least checkpoint and runs in
// a hash-canonical order, which makes the result exactly invariant to
// permutations of the input list.
Checkpoint soup_average(const std::vector<Checkpoint>& checkpoints,
                        const std::vector<double>& weights = {});

}  // namespace ladle
