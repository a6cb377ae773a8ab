#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "fefm/deep.hpp"
#include "fefm/shallow.hpp"

namespace fefm {

using Model = std::variant<ShallowParams, DeepFefmParams>;

// Versioned binary format, little-endian throughout:
//   magic "FEFM", u32 version, u8 kind (0..4 shallow, 5 DeepFEFM),
//   u8 symmetric_mode, u64 m, u32 n, u32 k, then for DeepFEFM a DNN section
//   (u8 x4 ablation flags, f64 dropout, u32 layer count, u32 widths...),
//   then parameter blocks as f64 in declaration order.
namespace io_detail {

constexpr uint32_t kVersion = 1;
constexpr char kMagic[4] = {'F', 'E', 'F', 'M'};

template <typename T>
void put(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("truncated model file");
    return value;
}

inline void put_block(std::ostream& out, const std::vector<double>& block) {
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
}

inline void get_block(std::istream& in, std::vector<double>& block) {
    in.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(block.size() * sizeof(double)));
    if (!in) throw DataError("truncated model file");
}

inline void put_shallow_blocks(std::ostream& out, const ShallowParams& p) {
    put(out, p.w0);
    put_block(out, p.w);
    put_block(out, p.v);
    put_block(out, p.v_ffm);
    put_block(out, p.r);
    put_block(out, p.u);
}

inline void get_shallow_blocks(std::istream& in, ShallowParams& p) {
    p.w0 = get<double>(in);
    get_block(in, p.w);
    get_block(in, p.v);
    get_block(in, p.v_ffm);
    get_block(in, p.r);
    get_block(in, p.u);
}

inline ShallowParams shaped_shallow(ModelKind kind, int64_t m, int n, int k, bool symmetric) {
    ShallowParams p = ShallowParams::init(kind, m, n, std::max(k, 1), 0, 0.0, symmetric);
    return p;
}

}  // namespace io_detail

inline void save_model(std::ostream& out, const Model& model) {
    using namespace io_detail;
    out.write(kMagic, 4);
    put(out, kVersion);
    const ShallowParams* shallow;
    uint8_t kind_code;
    if (std::holds_alternative<ShallowParams>(model)) {
        shallow = &std::get<ShallowParams>(model);
        kind_code = static_cast<uint8_t>(shallow->kind);
    } else {
        shallow = &std::get<DeepFefmParams>(model).fefm;
        kind_code = 5;
    }
    put(out, kind_code);
    put(out, static_cast<uint8_t>(shallow->symmetric_mode ? 1 : 0));
    put(out, static_cast<uint64_t>(shallow->m));
    put(out, static_cast<uint32_t>(shallow->n));
    put(out, static_cast<uint32_t>(shallow->k));
    if (kind_code == 5) {
        const auto& deep = std::get<DeepFefmParams>(model);
        put(out, static_cast<uint8_t>(deep.use_fefm_logit));
        put(out, static_cast<uint8_t>(deep.use_linear_terms));
        put(out, static_cast<uint8_t>(deep.dnn_input_feature_embeddings));
        put(out, static_cast<uint8_t>(deep.dnn_input_fefm_embeddings));
        put(out, deep.dnn.dropout);
        put(out, static_cast<uint32_t>(deep.dnn.widths.size()));
        for (int w : deep.dnn.widths) put(out, static_cast<uint32_t>(w));
    }
    put_shallow_blocks(out, *shallow);
    if (kind_code == 5) {
        const auto& deep = std::get<DeepFefmParams>(model);
        for (const auto& layer : deep.dnn.W) put_block(out, layer);
        for (const auto& layer : deep.dnn.b) put_block(out, layer);
        put_block(out, deep.dnn.w_logit);
    }
}

inline Model load_model(std::istream& in) {
    using namespace io_detail;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a model file (bad magic)");
    const uint32_t version = get<uint32_t>(in);
    if (version != kVersion) throw DataError("unsupported model file version");
    const uint8_t kind_code = get<uint8_t>(in);
    const bool symmetric = get<uint8_t>(in) != 0;
    const int64_t m = static_cast<int64_t>(get<uint64_t>(in));
    const int n = static_cast<int>(get<uint32_t>(in));
    const int k = static_cast<int>(get<uint32_t>(in));
    if (kind_code > 5) throw DataError("unknown model kind in file");

    if (kind_code == 5) {
        DeepFefmParams deep;
        deep.use_fefm_logit = get<uint8_t>(in) != 0;
        deep.use_linear_terms = get<uint8_t>(in) != 0;
        deep.dnn_input_feature_embeddings = get<uint8_t>(in) != 0;
        deep.dnn_input_fefm_embeddings = get<uint8_t>(in) != 0;
        const double dropout = get<double>(in);
        const uint32_t layers = get<uint32_t>(in);
        std::vector<int> widths(layers);
        for (auto& w : widths) w = static_cast<int>(get<uint32_t>(in));
        deep.fefm = io_detail::shaped_shallow(ModelKind::FEFM, m, n, k, symmetric);
        get_shallow_blocks(in, deep.fefm);
        deep.dnn = DnnParams::init(deep.dnn_input_width(), widths, dropout, 0);
        for (auto& layer : deep.dnn.W) get_block(in, layer);
        for (auto& layer : deep.dnn.b) get_block(in, layer);
        get_block(in, deep.dnn.w_logit);
        return deep;
    }
    ShallowParams p = io_detail::shaped_shallow(static_cast<ModelKind>(kind_code), m, n, k, symmetric);
    get_shallow_blocks(in, p);
    return p;
}

inline void save_model_file(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    save_model(out, model);
}

inline Model load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return load_model(in);
}

}  // namespace fefm
