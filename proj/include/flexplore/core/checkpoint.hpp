#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "flexplore/core/nn.hpp"

namespace flexplore {

// FLEXCKPT1 container: magic string, then each named ParamBlock with its
// layer shapes and row-major little-endian float64 payloads. Adam moments
// and the step counter ride along so a reloaded block continues exactly
// where the saved run stopped.
//
// Layout after the 9-byte magic:
//   u32 block_count
//   per block: u32 name_len, name bytes, u32 layer_count, i64 adam_step,
//              per layer: u32 out, u32 in,
//                         f64[out*in] w, f64[out] b,
//                         f64[out*in] m_w, f64[out] m_b,
//                         f64[out*in] v_w, f64[out] v_b
// All integers little-endian.
inline constexpr char kCkptMagic[] = "FLEXCKPT1";

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_i64(std::ostream& os, int64_t v) {
    put_u32(os, static_cast<uint32_t>(static_cast<uint64_t>(v) & 0xffffffffu));
    put_u32(os, static_cast<uint32_t>(static_cast<uint64_t>(v) >> 32));
}

inline int64_t get_i64(std::istream& is) {
    uint64_t lo = get_u32(is);
    uint64_t hi = get_u32(is);
    return static_cast<int64_t>(lo | (hi << 32));
}

inline void put_f64s(std::ostream& os, const double* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint64_t bits;
        std::memcpy(&bits, &p[i], 8);
        unsigned char b[8];
        for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline void get_f64s(std::istream& is, double* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(b[k]) << (8 * k);
        std::memcpy(&p[i], &bits, 8);
    }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<const ParamBlock*>& blocks) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kCkptMagic, sizeof(kCkptMagic) - 1);
    detail::put_u32(os, static_cast<uint32_t>(blocks.size()));
    for (const ParamBlock* pb : blocks) {
        detail::put_u32(os, static_cast<uint32_t>(pb->name.size()));
        os.write(pb->name.data(), static_cast<std::streamsize>(pb->name.size()));
        detail::put_u32(os, static_cast<uint32_t>(pb->layers.size()));
        detail::put_i64(os, pb->opt.step);
        for (size_t li = 0; li < pb->layers.size(); ++li) {
            const Layer& l = pb->layers[li];
            detail::put_u32(os, static_cast<uint32_t>(l.w.rows));
            detail::put_u32(os, static_cast<uint32_t>(l.w.cols));
            detail::put_f64s(os, l.w.a.data(), l.w.size());
            detail::put_f64s(os, l.b.data(), l.b.size());
            detail::put_f64s(os, pb->opt.m[li].w.a.data(), l.w.size());
            detail::put_f64s(os, pb->opt.m[li].b.data(), l.b.size());
            detail::put_f64s(os, pb->opt.v[li].w.a.data(), l.w.size());
            detail::put_f64s(os, pb->opt.v[li].b.data(), l.b.size());
        }
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline std::map<std::string, ParamBlock> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[sizeof(kCkptMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a FLEXCKPT1 file: " + path);
    uint32_t nblocks = detail::get_u32(is);
    std::map<std::string, ParamBlock> out;
    for (uint32_t bi = 0; bi < nblocks; ++bi) {
        uint32_t nl = detail::get_u32(is);
        std::string name(nl, '\0');
        is.read(name.data(), nl);
        uint32_t layers = detail::get_u32(is);
        ParamBlock pb;
        pb.name = name;
        pb.opt.step = detail::get_i64(is);
        for (uint32_t li = 0; li < layers; ++li) {
            uint32_t rows = detail::get_u32(is);
            uint32_t cols = detail::get_u32(is);
            Layer l{Mat(static_cast<int>(rows), static_cast<int>(cols)), Vec(rows, 0.0)};
            Layer m = l, v = l;
            detail::get_f64s(is, l.w.a.data(), l.w.size());
            detail::get_f64s(is, l.b.data(), l.b.size());
            detail::get_f64s(is, m.w.a.data(), m.w.size());
            detail::get_f64s(is, m.b.data(), m.b.size());
            detail::get_f64s(is, v.w.a.data(), v.w.size());
            detail::get_f64s(is, v.b.data(), v.b.size());
            pb.layers.push_back(std::move(l));
            pb.opt.m.push_back(std::move(m));
            pb.opt.v.push_back(std::move(v));
        }
        pb.grads.resize(pb.layers.size());
        for (size_t li = 0; li < pb.layers.size(); ++li)
            pb.grads[li] = {Mat(pb.layers[li].w.rows, pb.layers[li].w.cols),
                            Vec(pb.layers[li].b.size(), 0.0)};
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        out.emplace(name, std::move(pb));
    }
    return out;
}

}  // namespace flexplore
