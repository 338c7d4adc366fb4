#include "tmc/external_backend.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "tmc/errors.hpp"

namespace tmc {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCmdPrefix = "cmd:";

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

Bytes read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, std::span<const std::uint8_t> data) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("cannot write " + p.string());
}

std::string read_log(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t kMax = 4096;
    if (s.size() > kMax) s = "..." + s.substr(s.size() - kMax);
    return s;
}

// Unique scratch directory removed on scope exit.
class ScratchDir {
public:
    explicit ScratchDir(const fs::path& parent) {
        static std::atomic<std::uint64_t> counter{0};
        const fs::path base = parent.empty() ? fs::temp_directory_path() : parent;
        path_ = base / ("tmc_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const fs::path& path() const noexcept { return path_; }

private:
    fs::path path_;
};

}  // namespace

void BackendConfig::validate() const {
    if (kind == BackendKind::External && encode_template.empty()) {
        throw ArgumentError("external backend needs a command template");
    }
    if (kind == BackendKind::Builtin && (!encode_template.empty() || !decode_template.empty())) {
        throw ArgumentError("builtin backend takes no command template");
    }
    if (timeout.count() <= 0) throw ArgumentError("backend timeout must be positive");
}

BackendConfig parse_backend(std::string_view spec) {
    BackendConfig cfg;
    if (spec == "builtin") return cfg;
    if (spec.starts_with(kCmdPrefix) && spec.size() > kCmdPrefix.size()) {
        cfg.kind = BackendKind::External;
        cfg.encode_template = std::string(spec.substr(kCmdPrefix.size()));
        return cfg;
    }
    throw ArgumentError("backend must be 'builtin' or 'cmd:<template>', got '" + std::string(spec) + "'");
}

std::string to_string(const BackendConfig& cfg) {
    return cfg.kind == BackendKind::Builtin ? "builtin" : std::string(kCmdPrefix) + cfg.encode_template;
}

std::string substitute_template(std::string_view tmpl, const std::string& in, const std::string& out, int qp) {
    std::string result;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                const std::string_view key = tmpl.substr(i + 1, close - i - 1);
                if (key == "in") {
                    result += shell_quote(in);
                    i = close + 1;
                    continue;
                }
                if (key == "out") {
                    result += shell_quote(out);
                    i = close + 1;
                    continue;
                }
                if (key == "qp") {
                    result += std::to_string(qp);
                    i = close + 1;
                    continue;
                }
            }
        }
        result += tmpl[i++];
    }
    return result;
}

Bytes pack_yuv444(const std::array<FramePlanes, 3>& channels) {
    const FramePlanes& s = channels[0];
    for (const auto& c : channels) {
        if (c.width != s.width || c.height != s.height || c.exposures != s.exposures || c.views != s.views ||
            c.samples.size() != s.samples.size()) {
            throw ArgumentError("channel planes differ in shape");
        }
    }
    const std::size_t n = s.plane_size();
    Bytes out;
    out.reserve(3 * s.samples.size());
    for (std::size_t v = 0; v < s.views; ++v) {
        for (std::size_t e = 0; e < s.exposures; ++e) {
            for (const auto& c : channels) {
                const auto* p = c.samples.data() + c.plane_offset(v, e);
                out.insert(out.end(), p, p + n);
            }
        }
    }
    return out;
}

std::array<FramePlanes, 3> unpack_yuv444(std::span<const std::uint8_t> data, const FramePlanes& shape) {
    std::array<FramePlanes, 3> channels;
    for (auto& c : channels) c = FramePlanes(shape.width, shape.height, shape.exposures, shape.views);
    const std::size_t n = shape.plane_size();
    if (data.size() != 3 * n * shape.exposures * shape.views) {
        throw FormatError("YUV sequence has " + std::to_string(data.size()) + " bytes, expected " +
                          std::to_string(3 * n * shape.exposures * shape.views));
    }
    std::size_t pos = 0;
    for (std::size_t v = 0; v < shape.views; ++v) {
        for (std::size_t e = 0; e < shape.exposures; ++e) {
            for (auto& c : channels) {
                std::memcpy(c.samples.data() + c.plane_offset(v, e), data.data() + pos, n);
                pos += n;
            }
        }
    }
    return channels;
}

CommandResult run_command(const std::string& command, const fs::path& workdir, std::chrono::milliseconds timeout) {
    const std::string log_path = (workdir / "backend.log").string();
    const std::string dir = workdir.string();

    const pid_t pid = ::fork();
    if (pid < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno), command);
    if (pid == 0) {
        ::setpgid(0, 0);
        const int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        if (::chdir(dir.c_str()) != 0) ::_exit(126);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    for (auto delay = std::chrono::milliseconds(1);; delay = std::min(delay * 2, std::chrono::milliseconds(50))) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0 && errno != EINTR) throw BackendError(std::string("waitpid failed: ") + std::strerror(errno), command);
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
            }
            throw BackendError("backend timed out after " + std::to_string(timeout.count()) + " ms: " + command,
                               command, read_log(log_path));
        }
        std::this_thread::sleep_for(delay);
    }

    CommandResult result{command, read_log(log_path)};
    if (WIFSIGNALED(status)) {
        throw BackendError("backend killed by signal " + std::to_string(WTERMSIG(status)) + ": " + command, command,
                           result.log);
    }
    const int code = WEXITSTATUS(status);
    if (code == 127 || code == 126) {
        throw BackendError("failed to spawn backend command (exit " + std::to_string(code) + "): " + command, command,
                           result.log);
    }
    if (code != 0) {
        throw BackendError("backend exited with status " + std::to_string(code) + ": " + command, command, result.log);
    }
    return result;
}

ExternalEncoded external_encode(const std::array<FramePlanes, 3>& channels, const BackendConfig& cfg, int qp) {
    if (cfg.kind != BackendKind::External) throw ArgumentError("external_encode needs an external backend");
    cfg.validate();
    ScratchDir scratch(cfg.scratch_dir);
    const fs::path in = scratch.path() / "input.yuv";
    const fs::path out = scratch.path() / "output.bin";
    write_file(in, pack_yuv444(channels));
    const std::string command = substitute_template(cfg.encode_template, in.string(), out.string(), qp);
    const CommandResult r = run_command(command, scratch.path(), cfg.timeout);
    if (!fs::exists(out)) throw BackendError("backend produced no output file: " + command, command, r.log);
    return {command, read_file(out)};
}

std::array<FramePlanes, 3> external_decode(std::span<const std::uint8_t> payload, const FramePlanes& shape,
                                           const BackendConfig& cfg, int qp) {
    if (cfg.decode_template.empty()) return unpack_yuv444(payload, shape);
    if (cfg.timeout.count() <= 0) throw ArgumentError("backend timeout must be positive");
    ScratchDir scratch(cfg.scratch_dir);
    const fs::path in = scratch.path() / "input.bin";
    const fs::path out = scratch.path() / "output.yuv";
    write_file(in, payload);
    const std::string command = substitute_template(cfg.decode_template, in.string(), out.string(), qp);
    const CommandResult r = run_command(command, scratch.path(), cfg.timeout);
    if (!fs::exists(out)) throw BackendError("backend decoder produced no output file: " + command, command, r.log);
    return unpack_yuv444(read_file(out), shape);
}

}  // namespace tmc
