#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>

#include "tmc/entropy.hpp"
#include "tmc/frames_codec.hpp"

namespace tmc {

enum class BackendKind : std::uint8_t { Builtin = 0, External = 1 };

struct BackendConfig {
    BackendKind kind = BackendKind::Builtin;
    // Placeholders: {in}, {out}, {qp}. Run through /bin/sh -c.
    std::string encode_template;
    // Optional; without it the external payload must itself be the raw YUV sequence.
    std::string decode_template;
    std::chrono::milliseconds timeout{600000};
    // Scratch files go to a fresh subdirectory here; empty means the system temp dir.
    std::filesystem::path scratch_dir;

    void validate() const;
};

// "builtin" or "cmd:<template>".
BackendConfig parse_backend(std::string_view spec);
std::string to_string(const BackendConfig& cfg);

std::string substitute_template(std::string_view tmpl, const std::string& in, const std::string& out, int qp);

// Planar 8-bit 4:4:4 sequence: for each view, for each exposure, the three
// channel planes in order, each row-major.
Bytes pack_yuv444(const std::array<FramePlanes, 3>& channels);
std::array<FramePlanes, 3> unpack_yuv444(std::span<const std::uint8_t> data, const FramePlanes& shape);

struct CommandResult {
    std::string command;
    std::string log;  // combined stdout/stderr
};

// Runs `command` with /bin/sh in `workdir`. Throws BackendError on spawn failure,
// non-zero exit or timeout; the error carries the command and captured output.
CommandResult run_command(const std::string& command, const std::filesystem::path& workdir,
                          std::chrono::milliseconds timeout);

struct ExternalEncoded {
    std::string command;
    Bytes payload;
};

ExternalEncoded external_encode(const std::array<FramePlanes, 3>& channels, const BackendConfig& cfg, int qp);
std::array<FramePlanes, 3> external_decode(std::span<const std::uint8_t> payload, const FramePlanes& shape,
                                           const BackendConfig& cfg, int qp);

}  // namespace tmc
