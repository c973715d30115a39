#pragma once
// Binary checkpoints: "SDGCKPT1", u64 header length, JSON header, then the
// float64 tensors (parameters and Adam moments) in header order.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sdgclf/error.hpp"
#include "sdgclf/llm.hpp"
#include "sdgclf/trainer.hpp"

namespace sdgclf {

inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'G', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
    ModelState state;
    TrainConfig config;
    std::string id; // sha256 of the file bytes
};

namespace detail {

inline void write_tensor(std::string& blob, nlohmann::ordered_json& dir, const std::string& name, const ad::Matrix& m) {
    dir.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", blob.size()}});
    // Row-major on disk regardless of Eigen's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            char buf[sizeof(double)];
            std::memcpy(buf, &v, sizeof v);
            blob.append(buf, sizeof buf);
        }
}

inline ad::Matrix read_tensor(const std::string& blob, const nlohmann::json& entry) {
    const auto rows = entry.at("rows").get<Eigen::Index>(), cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    require(rows >= 0 && cols >= 0 && offset + static_cast<std::size_t>(rows * cols) * sizeof(double) <= blob.size(),
            ErrorKind::Checkpoint, "tensor " + entry.at("name").get<std::string>() + " exceeds the data section");
    ad::Matrix m(rows, cols);
    std::size_t pos = offset;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double v;
            std::memcpy(&v, blob.data() + pos, sizeof v);
            m(r, c) = v;
            pos += sizeof v;
        }
    return m;
}

} // namespace detail

inline std::string serialize_checkpoint(const ModelState& state, const TrainConfig& config) {
    std::string blob;
    nlohmann::ordered_json params = nlohmann::ordered_json::array(), moments = nlohmann::ordered_json::array();
    for (const auto& p : state.parameters()) detail::write_tensor(blob, params, p.name, p.var.value());
    for (const auto& [name, mv] : state.optimizer.moments) {
        detail::write_tensor(blob, moments, name + "#m", mv.first);
        detail::write_tensor(blob, moments, name + "#v", mv.second);
    }
    nlohmann::ordered_json header{{"format", "sdgclf-checkpoint"},
                                  {"version", kCheckpointVersion},
                                  {"train_config", to_json(config)},
                                  {"encoder_config", to_json(state.encoder.config())},
                                  {"vocabulary", state.encoder.vocabulary().words()},
                                  {"epoch", state.epoch},
                                  {"adam_step", state.optimizer.step},
                                  {"parameters", params},
                                  {"moments", moments}};
    const std::string h = header.dump();
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint64_t len = h.size();
    char buf[sizeof len];
    std::memcpy(buf, &len, sizeof len);
    out.append(buf, sizeof buf);
    out += h;
    out += blob;
    return out;
}

inline void save_checkpoint(const std::string& path, const ModelState& state, const TrainConfig& config) {
    const std::string bytes = serialize_checkpoint(state, config);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        require(out.good(), ErrorKind::Io, "cannot write checkpoint " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), ErrorKind::Io, "short write on checkpoint " + path);
    }
    std::filesystem::rename(tmp, path);
}

// expected: when given, the stored encoder width must match it.
inline LoadedCheckpoint parse_checkpoint(const std::string& bytes, const TrainConfig* expected = nullptr) {
    require(bytes.size() >= sizeof kCheckpointMagic + sizeof(std::uint64_t) &&
                std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) == 0,
            ErrorKind::Checkpoint, "not a checkpoint (bad magic)");
    std::uint64_t len;
    std::memcpy(&len, bytes.data() + sizeof kCheckpointMagic, sizeof len);
    const std::size_t start = sizeof kCheckpointMagic + sizeof len;
    require(start + len <= bytes.size(), ErrorKind::Checkpoint, "truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(start, len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Checkpoint, std::string("corrupt checkpoint header: ") + e.what());
    }
    require(header.value("format", "") == "sdgclf-checkpoint" && header.value("version", 0) == kCheckpointVersion,
            ErrorKind::Checkpoint, "unsupported checkpoint format or version");
    const std::string blob = bytes.substr(start + len);

    LoadedCheckpoint out;
    apply_json(out.config, header.at("train_config"));
    if (expected)
        require(expected->encoder.d_h == out.config.encoder.d_h, ErrorKind::Checkpoint,
                "checkpoint d_h " + std::to_string(out.config.encoder.d_h) + " does not match configured d_h " +
                    std::to_string(expected->encoder.d_h));
    EncoderConfig enc_cfg;
    apply_json(enc_cfg, header.at("encoder_config"));
    Rng rng(0);
    out.state = ModelState::with_encoder(
        out.config, Encoder(enc_cfg, Vocabulary(header.at("vocabulary").get<std::vector<std::string>>()), rng), rng);

    std::map<std::string, nlohmann::json> stored;
    for (const auto& e : header.at("parameters")) stored.emplace(e.at("name").get<std::string>(), e);
    for (auto& p : out.state.parameters()) {
        auto it = stored.find(p.name);
        require(it != stored.end(), ErrorKind::Checkpoint, "checkpoint lacks parameter " + p.name);
        ad::Matrix m = detail::read_tensor(blob, it->second);
        require(m.rows() == p.var.rows() && m.cols() == p.var.cols(), ErrorKind::Checkpoint,
                "shape mismatch for " + p.name);
        p.var.mutable_value() = std::move(m);
        stored.erase(it);
    }
    require(stored.empty(), ErrorKind::Checkpoint, "checkpoint has unknown parameter " +
                                                       (stored.empty() ? std::string() : stored.begin()->first));
    const auto& moments = header.at("moments");
    for (std::size_t i = 0; i + 1 < moments.size(); i += 2) {
        std::string name = moments[i].at("name").get<std::string>();
        require(name.size() > 2 && name.substr(name.size() - 2) == "#m", ErrorKind::Checkpoint, "bad moment table");
        name.resize(name.size() - 2);
        out.state.optimizer.moments[name] = {detail::read_tensor(blob, moments[i]), detail::read_tensor(blob, moments[i + 1])};
    }
    out.state.optimizer.step = header.at("adam_step").get<long>();
    out.state.epoch = header.at("epoch").get<int>();
    out.id = sha256_hex(bytes);
    return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path, const TrainConfig* expected = nullptr) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "checkpoint not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str(), expected);
}

namespace detail {
inline const bool checkpoint_writer_registered = [] {
    checkpoint_writer() = [](const std::string& path, const ModelState& s, const TrainConfig& c) {
        save_checkpoint(path, s, c);
    };
    return true;
}();
} // namespace detail

} // namespace sdgclf
