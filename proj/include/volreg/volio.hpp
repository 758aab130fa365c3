#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "volreg/errors.hpp"
#include "volreg/rng.hpp"
#include "volreg/tensor.hpp"

namespace volreg {

/// 3D scalar field, tensor axes [D,H,W] (slowest to fastest). NIfTI maps
/// (x,y,z) with x fastest, so axis 0 is z. Spacing is mm per tensor axis.
struct Volume {
    Tensor<float> data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::string id;
};

/// Pure-tone thresholds at 500 Hz and 4000 Hz, dB HL, clamped to [-10,120].
struct TargetPair {
    double pt500 = 0.0;
    double pt4000 = 0.0;

    TargetPair clamped() const {
        auto c = [](double v) { return std::min(120.0, std::max(-10.0, v)); };
        return {c(pt500), c(pt4000)};
    }
};

enum class Provenance { Synthetic, External };

struct LabeledDataset {
    std::vector<std::pair<Volume, TargetPair>> items;
    Provenance provenance = Provenance::Synthetic;
};

// ---------------------------------------------------------------------------
// NIfTI-1 subset reader: single-file .nii, little-endian, float32 or int16,
// 3D, uncompressed. Everything else errors loudly.
// ---------------------------------------------------------------------------

inline Volume read_nifti(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<char> hdr(348);
    f.read(hdr.data(), 348);
    if (!f) throw IoError("truncated NIfTI header in " + path.string());

    const auto rd_i32 = [&](std::size_t off) { std::int32_t v; std::memcpy(&v, hdr.data() + off, 4); return v; };
    const auto rd_i16 = [&](std::size_t off) { std::int16_t v; std::memcpy(&v, hdr.data() + off, 2); return v; };
    const auto rd_f32 = [&](std::size_t off) { float v; std::memcpy(&v, hdr.data() + off, 4); return v; };

    if (rd_i32(0) != 348)
        throw FormatError("sizeof_hdr != 348 (big-endian or not NIfTI-1): " + path.string());

    const char* magic = hdr.data() + 344;
    if (std::memcmp(magic, "ni1\0", 4) == 0)
        throw UnsupportedError("header/data pair form (ni1) not supported: " + path.string());
    if (std::memcmp(magic, "n+1\0", 4) != 0)
        throw FormatError("bad NIfTI magic in " + path.string());

    const std::int16_t ndim = rd_i16(40);
    if (ndim != 3)
        throw UnsupportedError("only 3D volumes supported, dim[0]=" + std::to_string(ndim));
    const std::size_t nx = static_cast<std::size_t>(rd_i16(42));
    const std::size_t ny = static_cast<std::size_t>(rd_i16(44));
    const std::size_t nz = static_cast<std::size_t>(rd_i16(46));
    if (nx == 0 || ny == 0 || nz == 0) throw FormatError("zero extent in " + path.string());

    const std::int16_t datatype = rd_i16(70);
    if (datatype != 4 && datatype != 16)
        throw UnsupportedError("datatype " + std::to_string(datatype) + " (only int16=4, float32=16)");

    float slope = rd_f32(112), inter = rd_f32(116);
    if (slope == 0.0f) { slope = 1.0f; inter = 0.0f; }

    const float vox_offset = rd_f32(108);
    const std::streamoff off = static_cast<std::streamoff>(vox_offset < 348.0f ? 352.0f : vox_offset);
    f.seekg(off);

    const std::size_t n = nx * ny * nz;
    Tensor<float> data(Shape{nz, ny, nx});
    if (datatype == 16) {
        f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
        if (!f) throw IoError("truncated voxel data in " + path.string());
        for (std::size_t i = 0; i < n; ++i) data[i] = slope * data[i] + inter;
    } else {
        std::vector<std::int16_t> raw(n);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
        if (!f) throw IoError("truncated voxel data in " + path.string());
        for (std::size_t i = 0; i < n; ++i) data[i] = slope * static_cast<float>(raw[i]) + inter;
    }

    Volume v;
    v.data = std::move(data);
    v.spacing = {static_cast<double>(rd_f32(76 + 3 * 4)),   // pixdim[3] = z
                 static_cast<double>(rd_f32(76 + 2 * 4)),   // pixdim[2] = y
                 static_cast<double>(rd_f32(76 + 1 * 4))};  // pixdim[1] = x
    v.id = path.stem().string();
    return v;
}

// ---------------------------------------------------------------------------
// Internal volume format: <base>.json sidecar + <base>.f32 little-endian
// payload. Round-trip is bit-exact.
// ---------------------------------------------------------------------------

inline void write_volume(const Volume& v, const std::filesystem::path& base) {
    nlohmann::json j;
    j["shape"] = v.data.shape();
    j["spacing"] = v.spacing;
    j["id"] = v.id;
    {
        std::ofstream f(base.string() + ".json");
        if (!f) throw IoError("cannot write " + base.string() + ".json");
        f << j.dump(2) << "\n";
    }
    std::ofstream f(base.string() + ".f32", std::ios::binary);
    if (!f) throw IoError("cannot write " + base.string() + ".f32");
    f.write(reinterpret_cast<const char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(float)));
    if (!f) throw IoError("short write to " + base.string() + ".f32");
}

inline Volume read_volume(const std::filesystem::path& base) {
    std::ifstream jf(base.string() + ".json");
    if (!jf) throw IoError("cannot open " + base.string() + ".json");
    nlohmann::json j = nlohmann::json::parse(jf);
    const Shape shape = j.at("shape").get<Shape>();
    Volume v;
    v.spacing = j.at("spacing").get<std::array<double, 3>>();
    v.id = j.at("id").get<std::string>();

    std::ifstream f(base.string() + ".f32", std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open " + base.string() + ".f32");
    const std::size_t bytes = static_cast<std::size_t>(f.tellg());
    const std::size_t expect = shape_numel(shape) * sizeof(float);
    if (bytes != expect)
        throw CorruptionError(base.string() + ".f32 is " + std::to_string(bytes) + " bytes, expected " +
                              std::to_string(expect));
    f.seekg(0);
    std::vector<float> buf(shape_numel(shape));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expect));
    if (!f) throw IoError("short read from " + base.string() + ".f32");
    v.data = Tensor<float>::from(shape, std::move(buf));
    return v;
}

/// Affine rescale to [0,1]. Constant volumes are rejected.
inline Volume normalize_volume(const Volume& v) {
    float lo = v.data[0], hi = v.data[0];
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        lo = std::min(lo, v.data[i]);
        hi = std::max(hi, v.data[i]);
    }
    if (!(hi > lo)) throw DegenerateInputError("constant volume '" + v.id + "' cannot be normalized");
    Volume out = v;
    const float scale = 1.0f / (hi - lo);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (out.data[i] - lo) * scale;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic phantom generator. An ellipsoidal shell ("cortex") of random
// thickness plus interior blobs and background texture; the targets are a
// fixed function of the shell thickness:
//   pt500  = 15 + 35 * (1 - t/t_max) + N(0, noise_db)
//   pt4000 = 25 + 60 * (1 - t/t_max) + N(0, noise_db)
// ---------------------------------------------------------------------------

struct PhantomConfig {
    std::size_t size = 32;        // power of two
    double t_min = 2.0;           // shell thickness, voxels
    double t_max = 6.0;
    std::size_t blob_count = 2;
    double noise_db = 2.0;        // target noise sigma
    double texture_amp = 0.05;    // background texture amplitude
};

struct Phantom {
    Volume volume;
    TargetPair targets;
    double shell_thickness = 0.0;  // generator internals, for verification
};

inline Phantom make_phantom(Rng& rng, const PhantomConfig& cfg = {}) {
    if (cfg.size < 4 || (cfg.size & (cfg.size - 1)) != 0)
        throw ParameterError("phantom size must be a power of two >= 4");
    if (!(cfg.t_min > 0) || cfg.t_max < cfg.t_min)
        throw ParameterError("phantom thickness range invalid");

    const std::size_t S = cfg.size;
    const double c = (static_cast<double>(S) - 1.0) / 2.0;
    const double t = rng.uniform(cfg.t_min, cfg.t_max);
    // Outer semi-axes; mildly anisotropic so the shell is not a sphere.
    const double base = 0.40 * static_cast<double>(S);
    const double ra = base * rng.uniform(0.9, 1.05);
    const double rb = base * rng.uniform(0.9, 1.05);
    const double rc = base * rng.uniform(0.9, 1.05);
    const double rmean = (ra + rb + rc) / 3.0;
    const double inner = 1.0 - t / rmean;  // normalized inner shell radius

    struct Blob { double z, y, x, r, amp; };
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < cfg.blob_count; ++i) {
        Blob b;
        b.z = c + rng.uniform(-0.25, 0.25) * static_cast<double>(S);
        b.y = c + rng.uniform(-0.25, 0.25) * static_cast<double>(S);
        b.x = c + rng.uniform(-0.25, 0.25) * static_cast<double>(S);
        b.r = rng.uniform(0.05, 0.12) * static_cast<double>(S);
        b.amp = rng.uniform(0.3, 0.5);
        blobs.push_back(b);
    }

    Tensor<float> data(Shape{S, S, S});
    Rng tex = rng.split(0xBEEF);
    for (std::size_t z = 0; z < S; ++z)
        for (std::size_t y = 0; y < S; ++y)
            for (std::size_t x = 0; x < S; ++x) {
                const double dz = (static_cast<double>(z) - c) / rc;
                const double dy = (static_cast<double>(y) - c) / rb;
                const double dx = (static_cast<double>(x) - c) / ra;
                const double rho = std::sqrt(dz * dz + dy * dy + dx * dx);
                double val = cfg.texture_amp * tex.uniform();
                if (rho <= 1.0 && rho >= inner) val = 0.9;
                for (const auto& b : blobs) {
                    const double bz = static_cast<double>(z) - b.z;
                    const double by = static_cast<double>(y) - b.y;
                    const double bx = static_cast<double>(x) - b.x;
                    const double d2 = (bz * bz + by * by + bx * bx) / (b.r * b.r);
                    val += b.amp * std::exp(-0.5 * d2);
                }
                data(z, y, x) = static_cast<float>(std::min(1.0, std::max(0.0, val)));
            }

    const double severity = 1.0 - t / cfg.t_max;
    TargetPair targets{15.0 + 35.0 * severity + rng.normal(0.0, cfg.noise_db),
                       25.0 + 60.0 * severity + rng.normal(0.0, cfg.noise_db)};

    Phantom p;
    p.volume.data = std::move(data);
    p.volume.id = "phantom";
    p.targets = targets.clamped();
    p.shell_thickness = t;
    return p;
}

// ---------------------------------------------------------------------------
// Seeded split: shuffle, test takes the first floor(n*f) items (min 1).
// ---------------------------------------------------------------------------

inline std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                              double test_fraction,
                                                              std::uint64_t seed) {
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw ParameterError("test_fraction must be in (0,1)");
    const std::size_t n = ds.items.size();
    if (n < 2) throw ParameterError("need at least 2 items to split");

    Rng rng(seed);
    const auto order = shuffled_indices(n, rng);
    std::size_t n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
    n_test = std::max<std::size_t>(1, std::min(n_test, n - 1));

    LabeledDataset train, test;
    train.provenance = test.provenance = ds.provenance;
    for (std::size_t i = 0; i < n; ++i)
        (i < n_test ? test : train).items.push_back(ds.items[order[i]]);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Labels file: CSV with header "id,pt500,pt4000".
// ---------------------------------------------------------------------------

inline void write_labels(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, TargetPair>>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "id,pt500,pt4000\n";
    f.precision(10);
    for (const auto& [id, t] : rows) f << id << "," << t.pt500 << "," << t.pt4000 << "\n";
}

inline std::map<std::string, TargetPair> read_labels(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty labels file " + path.string());
    if (line != "id,pt500,pt4000")
        throw FormatError("labels header must be 'id,pt500,pt4000', got '" + line + "'");
    std::map<std::string, TargetPair> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, a, b;
        if (!std::getline(ss, id, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b))
            throw FormatError("bad labels row '" + line + "'");
        out[id] = TargetPair{std::stod(a), std::stod(b)}.clamped();
    }
    return out;
}

} // namespace volreg
