#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "volreg/nnops.hpp"

namespace volreg {

// Flat parameter container: 8-byte magic, u64 header length, JSON header
// describing layer kinds/shapes, then concatenated little-endian float32
// (weights then bias, per layer, in declaration order).

namespace detail {
inline constexpr char kModelMagic[8] = {'V', 'R', 'M', 'O', 'D', 'E', 'L', '1'};
}

template <typename T>
void save_layers(const std::filesystem::path& path, const std::vector<Layer<T>>& layers) {
    nlohmann::json header = nlohmann::json::array();
    std::vector<float> payload;
    for (const auto& l : layers) {
        nlohmann::json j;
        j["kind"] = layer_kind_name(l.kind);
        j["stride"] = l.stride;
        j["pad"] = l.pad;
        j["out_pad"] = l.out_pad;
        j["weights_shape"] = l.weights.shape();
        j["bias_shape"] = l.bias.shape();
        j["target_shape"] = l.target_shape;
        header.push_back(std::move(j));
        for (std::size_t i = 0; i < l.weights.size(); ++i) payload.push_back(static_cast<float>(l.weights[i]));
        for (std::size_t i = 0; i < l.bias.size(); ++i) payload.push_back(static_cast<float>(l.bias[i]));
    }
    const std::string htext = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(detail::kModelMagic, 8);
    const std::uint64_t hlen = htext.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw IoError("short write to " + path.string());
}

template <typename T = float>
std::vector<Layer<T>> load_layers(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || !std::equal(magic, magic + 8, detail::kModelMagic))
        throw FormatError("bad model magic in " + path.string());
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("truncated model header in " + path.string());
    nlohmann::json header = nlohmann::json::parse(htext);

    std::vector<Layer<T>> layers;
    for (const auto& j : header) {
        Layer<T> l;
        l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
        l.stride = j.at("stride").get<std::size_t>();
        l.pad = j.at("pad").get<std::size_t>();
        l.out_pad = j.at("out_pad").get<std::size_t>();
        l.target_shape = j.at("target_shape").get<Shape>();
        const Shape ws = j.at("weights_shape").get<Shape>();
        const Shape bs = j.at("bias_shape").get<Shape>();
        const auto read_tensor = [&](const Shape& s) {
            std::vector<float> buf(shape_numel(s));
            if (s.empty()) return Tensor<T>();
            f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
            if (!f) throw CorruptionError("model payload shorter than header claims in " + path.string());
            std::vector<T> vals(buf.begin(), buf.end());
            return Tensor<T>::from(s, std::move(vals));
        };
        l.weights = read_tensor(ws);
        l.bias = read_tensor(bs);
        layers.push_back(std::move(l));
    }
    return layers;
}

} // namespace volreg
