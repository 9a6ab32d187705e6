#include "ladle/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <numeric>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload codec assumes a little-endian host");

namespace ladle {

using json = nlohmann::ordered_json;

size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

std::string dtype_name(DType t) { return t == DType::f32 ? "f32" : "f64"; }

DType dtype_from_name(const std::string& s) {
    if (s == "f32") return DType::f32;
    if (s == "f64") return DType::f64;
    throw data_error("corrupt header: unknown dtype '" + s + "'");
}

uint64_t CkptTensor::numel() const {
    uint64_t n = 1;
    for (uint64_t s : shape) n *= s;
    return n;
}

Tensor CkptTensor::to_tensor() const {
    size_t r = 1, c = 1;
    if (shape.size() == 1) {
        c = shape[0];
    } else if (shape.size() == 2) {
        r = shape[0];
        c = shape[1];
    } else {
        throw data_error("tensor rank > 2 cannot be materialized as a matrix");
    }
    Tensor t(r, c);
    if (dtype == DType::f64) {
        std::memcpy(t.d.data(), raw.data(), raw.size());
    } else {
        const float* f = reinterpret_cast<const float*>(raw.data());
        for (size_t i = 0; i < t.numel(); ++i) t.d[i] = static_cast<double>(f[i]);
    }
    return t;
}

CkptTensor CkptTensor::from_tensor(const Tensor& t) {
    CkptTensor c;
    c.dtype = DType::f64;
    c.shape = {t.rows, t.cols};
    c.raw.resize(t.numel() * sizeof(double));
    std::memcpy(c.raw.data(), t.d.data(), c.raw.size());
    return c;
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

const CkptTensor& Checkpoint::at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw input_error("checkpoint has no tensor '" + name + "'");
}

Checkpoint Checkpoint::from_params(const ParamStore& store, json metadata) {
    Checkpoint c;
    c.metadata = std::move(metadata);
    c.tensors.reserve(store.size());
    for (const auto& p : store) c.tensors.emplace_back(p.name, CkptTensor::from_tensor(p.value));
    return c;
}

void Checkpoint::into_params(ParamStore& store) const {
    if (tensors.size() != store.size())
        throw data_error("checkpoint/model tensor count mismatch: " +
                         std::to_string(tensors.size()) + " vs " + std::to_string(store.size()));
    for (const auto& [name, ct] : tensors) {
        Param& p = store.at(name);
        Tensor t = ct.to_tensor();
        if (!t.same_shape(p.value))
            throw data_error("shape mismatch for tensor '" + name + "'");
        p.value = std::move(t);
    }
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

uint64_t get_u64(const char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

constexpr char kMagic[4] = {'L', 'A', 'D', 'L'};
constexpr uint32_t kVersion = 1;

}  // namespace

std::string Checkpoint::serialize() const {
    json header;
    json tens = json::object();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        json desc;
        desc["dtype"] = dtype_name(t.dtype);
        desc["shape"] = t.shape;
        desc["offset"] = offset;
        desc["nbytes"] = t.raw.size();
        tens[name] = desc;
        offset += t.raw.size();
    }
    header["tensors"] = tens;
    header["metadata"] = metadata;
    const std::string hs = header.dump();

    std::string out;
    out.reserve(16 + hs.size() + offset);
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, hs.size());
    out += hs;
    for (const auto& [name, t] : tensors) out.append(t.raw.data(), t.raw.size());
    return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
    if (bytes.size() < 16) throw data_error("corrupt header: file too small");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw data_error("corrupt header: bad magic");
    const uint32_t version = get_u32(bytes.data() + 4);
    if (version != kVersion)
        throw data_error("corrupt header: unsupported version " + std::to_string(version));
    const uint64_t hlen = get_u64(bytes.data() + 8);
    if (16 + hlen > bytes.size()) throw data_error("corrupt header: truncated header");
    json header;
    try {
        header = json::parse(bytes.substr(16, hlen));
    } catch (const std::exception& e) {
        throw data_error(std::string("corrupt header: ") + e.what());
    }
    if (!header.contains("tensors") || !header["tensors"].is_object())
        throw data_error("corrupt header: missing tensor table");

    const size_t payload_start = 16 + hlen;
    const size_t payload_size = bytes.size() - payload_start;

    Checkpoint c;
    if (header.contains("metadata")) c.metadata = header["metadata"];
    for (auto& [name, desc] : header["tensors"].items()) {
        CkptTensor t;
        t.dtype = dtype_from_name(desc.at("dtype").get<std::string>());
        t.shape = desc.at("shape").get<std::vector<uint64_t>>();
        const uint64_t off = desc.at("offset").get<uint64_t>();
        const uint64_t nbytes = desc.at("nbytes").get<uint64_t>();
        if (nbytes != t.numel() * dtype_size(t.dtype))
            throw data_error("shape/length mismatch for tensor '" + name + "'");
        if (off + nbytes > payload_size)
            throw data_error("truncated data for tensor '" + name + "'");
        t.raw.assign(bytes.data() + payload_start + off,
                     bytes.data() + payload_start + off + nbytes);
        c.tensors.emplace_back(name, std::move(t));
    }
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    atomic_write_file(path, serialize());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

uint64_t Checkpoint::content_hash() const {
    const std::string b = serialize();
    return fnv1a64(b.data(), b.size());
}

Checkpoint soup_average(const std::vector<Checkpoint>& checkpoints,
                        const std::vector<double>& weights) {
    if (checkpoints.empty()) throw input_error("soup_average: empty checkpoint list");
    if (!weights.empty() && weights.size() != checkpoints.size())
        throw input_error("soup_average: weight count mismatch");

    const Checkpoint& first = checkpoints[0];
    for (size_t c = 1; c < checkpoints.size(); ++c) {
        const Checkpoint& other = checkpoints[c];
        if (other.tensors.size() != first.tensors.size())
            throw input_error("soup_average: schema mismatch, tensor counts differ");
        std::map<std::string, const CkptTensor*> lut;
        for (const auto& [n, t] : other.tensors) lut[n] = &t;
        for (const auto& [name, t] : first.tensors) {
            auto it = lut.find(name);
            if (it == lut.end())
                throw input_error("soup_average: schema mismatch at tensor '" + name + "'");
            if (it->second->dtype != t.dtype || it->second->shape != t.shape)
                throw input_error("soup_average: schema mismatch at tensor '" + name + "'");
        }
    }

    std::vector<double> w = weights;
    if (w.empty()) w.assign(checkpoints.size(), 1.0);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(wsum > 0.0)) throw input_error("soup_average: weights must sum to a positive value");

    // canonical accumulation order, independent of how the list was passed
    std::vector<size_t> order(checkpoints.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<uint64_t> hashes(checkpoints.size());
    for (size_t i = 0; i < checkpoints.size(); ++i) hashes[i] = checkpoints[i].content_hash();
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
        return w[a] < w[b];
    });

    const Checkpoint& base = checkpoints[order[0]];
    Checkpoint out;
    json run_ids = json::array();
    for (size_t i : order) {
        const auto& md = checkpoints[i].metadata;
        run_ids.push_back(md.contains("run_id") ? md["run_id"] : json(nullptr));
    }
    out.metadata["soup_of"] = run_ids;
    out.metadata["weights"] = w;

    // output schema order follows the canonical base so permuted input
    // lists produce byte-identical soups; tensors are independent
    out.tensors.resize(base.tensors.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t t = 0; t < base.tensors.size(); ++t) {
        const std::string& name = base.tensors[t].first;
        const CkptTensor& bt = base.tensors[t].second;
        Tensor x0 = bt.to_tensor();
        Tensor acc = Tensor::zeros(x0.rows, x0.cols);
        // centered sum keeps identical inputs exactly idempotent
        for (size_t i : order) {
            const Tensor xi = checkpoints[i].at(name).to_tensor();
            for (size_t e = 0; e < acc.numel(); ++e) acc.d[e] += w[i] * (xi.d[e] - x0.d[e]);
        }
        CkptTensor rt;
        rt.dtype = bt.dtype;
        rt.shape = bt.shape;
        Tensor result(x0.rows, x0.cols);
        for (size_t e = 0; e < result.numel(); ++e) result.d[e] = x0.d[e] + acc.d[e] / wsum;
        if (rt.dtype == DType::f64) {
            rt.raw.resize(result.numel() * sizeof(double));
            std::memcpy(rt.raw.data(), result.d.data(), rt.raw.size());
        } else {
            rt.raw.resize(result.numel() * sizeof(float));
            float* f = reinterpret_cast<float*>(rt.raw.data());
            for (size_t e = 0; e < result.numel(); ++e) f[e] = static_cast<float>(result.d[e]);
        }
        out.tensors[t] = {name, std::move(rt)};
    }
    return out;
}

}  // namespace ladle
