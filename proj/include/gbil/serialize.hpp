#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "gbil/core.hpp"

namespace gbil {

// Splat file format, version 1, little-endian:
//   magic "GBIL", u32 version, u32 K, u32 N, f32 sigma,
//   K records of (x, y, depth_key, theta, log_su, log_sv, opacity_logit,
//   N*N*3 grid values), all f32. Grid texels row-major over (i_u, i_v),
//   channels innermost.
inline constexpr char kSplatMagic[4] = {'G', 'B', 'I', 'L'};
inline constexpr std::uint32_t kSplatFormatVersion = 1;

struct SplatIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v & 0xff),
                                    static_cast<unsigned char>((v >> 8) & 0xff),
                                    static_cast<unsigned char>((v >> 16) & 0xff),
                                    static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(bytes), 4);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char bytes[4];
    if (!is.read(reinterpret_cast<char*>(bytes), 4)) return false;
    v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
        (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
    return true;
}

inline bool get_f32(std::istream& is, float& v) {
    std::uint32_t u;
    if (!get_u32(is, u)) return false;
    v = std::bit_cast<float>(u);
    return true;
}

}  // namespace detail

inline void save_splats(std::ostream& os, const SplatSet& set) {
    os.write(kSplatMagic, 4);
    detail::put_u32(os, kSplatFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(set.count));
    detail::put_u32(os, static_cast<std::uint32_t>(set.grid_config.n));
    detail::put_f32(os, static_cast<float>(set.grid_config.sigma));
    for (std::size_t k = 0; k < set.count; ++k) {
        detail::put_f32(os, static_cast<float>(set.position[2 * k + 0]));
        detail::put_f32(os, static_cast<float>(set.position[2 * k + 1]));
        detail::put_f32(os, static_cast<float>(set.depth_key[k]));
        detail::put_f32(os, static_cast<float>(set.theta[k]));
        detail::put_f32(os, static_cast<float>(set.log_scale[2 * k + 0]));
        detail::put_f32(os, static_cast<float>(set.log_scale[2 * k + 1]));
        detail::put_f32(os, static_cast<float>(set.opacity_logit[k]));
        for (double g : set.grid_of(k)) detail::put_f32(os, static_cast<float>(g));
    }
    if (!os) throw SplatIoError("splat write failed");
}

inline void save_splats(const std::string& path, const SplatSet& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SplatIoError("cannot open for writing: " + path);
    save_splats(os, set);
    os.flush();
    if (!os) throw SplatIoError("splat write failed: " + path);
}

inline SplatSet load_splats(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kSplatMagic, 4) != 0)
        throw SplatIoError("bad splat file: wrong magic");
    std::uint32_t version = 0, k = 0, n = 0;
    float sigma = 0.0f;
    if (!detail::get_u32(is, version) || !detail::get_u32(is, k) || !detail::get_u32(is, n) ||
        !detail::get_f32(is, sigma))
        throw SplatIoError("bad splat file: truncated header");
    if (version != kSplatFormatVersion)
        throw SplatIoError("unsupported splat file version " + std::to_string(version));
    if (n < 1 || !(sigma > 0.0f)) throw SplatIoError("bad splat file: invalid grid config");

    ColorGridConfig cfg{static_cast<int>(n), static_cast<double>(sigma)};
    SplatSet set(k, cfg);
    for (std::size_t rec = 0; rec < k; ++rec) {
        float fields[7];
        bool ok = true;
        for (float& f : fields) ok = ok && detail::get_f32(is, f);
        auto grid = set.grid_of(rec);
        for (std::size_t i = 0; ok && i < grid.size(); ++i) {
            float g;
            ok = detail::get_f32(is, g);
            if (ok) grid[i] = g;
        }
        if (!ok) throw SplatIoError("bad splat file: truncated at record " + std::to_string(rec));
        set.position[2 * rec + 0] = fields[0];
        set.position[2 * rec + 1] = fields[1];
        set.depth_key[rec] = fields[2];
        set.theta[rec] = fields[3];
        set.log_scale[2 * rec + 0] = fields[4];
        set.log_scale[2 * rec + 1] = fields[5];
        set.opacity_logit[rec] = fields[6];
    }
    return set;
}

inline SplatSet load_splats(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SplatIoError("cannot open splat file: " + path);
    return load_splats(is);
}

}  // namespace gbil
