#include "tmc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "tmc/errors.hpp"

namespace tmc {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kColumnCount = 15;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string format_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += format_double(v[i]);
    }
    return out;
}

std::string quote_field(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_fields(const std::string& line, const std::string& where) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw CsvError(where + ": unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

double parse_double(const std::string& s, const std::string& where, const char* column) {
    if (s == "inf") return kPsnrInfinity;
    if (s == "-inf") return -kPsnrInfinity;
    if (s == "nan") return std::nan("");
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw CsvError(where + ": bad value '" + s + "' in column " + column);
}

std::int64_t parse_int(const std::string& s, const std::string& where, const char* column) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw CsvError(where + ": bad integer '" + s + "' in column " + column);
}

std::vector<double> parse_list(const std::string& s, const std::string& where, const char* column) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto end = s.find(';', start);
        out.push_back(parse_double(s.substr(start, end - start), where, column));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

std::string space_name(ColorSpace s) { return std::string(to_string(s)); }

ColorSpace parse_space_field(const std::string& s, const std::string& where) {
    try {
        return parse_color_space(s);
    } catch (const ArgumentError&) {
        throw CsvError(where + ": unknown color space '" + s + "'");
    }
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void write_dat(const fs::path& path, const std::vector<RDPoint>& points, ColorSpace space) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# space=" << to_string(space) << "\n";
    bool first = true;
    for (const auto& s : build_series(points)) {
        if (s.space != space) continue;
        if (!first) out << "\n\n";
        first = false;
        out << "# scene=" << s.scene << " preset=" << s.preset << " path=" << to_string(s.path) << "\n";
        out << "# bits_total psnr_left psnr_right qp\n";
        for (const auto& p : s.points) {
            out << p.bits_total << ' ' << format_double(p.psnr_left) << ' ' << format_double(p.psnr_right) << ' '
                << p.qp << "\n";
        }
    }
    if (!out) throw IoError("cannot write " + path.string());
}

struct Cell {
    ColorSpace space;
    int preset;
    int qp;
    std::string id;
};

}  // namespace

std::string cell_id(const std::string& scene, ColorSpace space, int preset, int qp, CodingPath path,
                    BackendKind backend) {
    // Unit separators keep field boundaries unambiguous.
    std::string key = scene;
    for (const std::string& part :
         {space_name(space), std::to_string(preset), std::to_string(qp), to_string(path),
          std::string(backend == BackendKind::Builtin ? "builtin" : "external")}) {
        key += '\x1f';
        key += part;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
    return buf;
}

std::string format_csv_row(const RDPoint& p) {
    std::string row;
    const std::string fields[kColumnCount] = {
        quote_field(p.scene),
        space_name(p.space),
        std::to_string(p.preset),
        std::to_string(p.qp),
        to_string(p.path),
        std::to_string(p.bits_latent),
        std::to_string(p.bits_backend),
        std::to_string(p.bits_total),
        format_double(p.psnr_left),
        format_double(p.psnr_right),
        quote_field(p.error),
        p.backend == BackendKind::Builtin ? "builtin" : "external",
        p.cell_id,
        format_list(p.psnr_exp_left),
        format_list(p.psnr_exp_right),
    };
    for (std::size_t i = 0; i < kColumnCount; ++i) {
        if (i) row += ',';
        row += fields[i];
    }
    return row;
}

RDPoint parse_csv_row(const std::string& line, const std::string& where) {
    const auto f = split_fields(line, where);
    // Rows with only the eleven base columns are accepted too.
    if (f.size() != kColumnCount && f.size() != 11) {
        throw CsvError(where + ": expected " + std::to_string(kColumnCount) + " columns, found " +
                       std::to_string(f.size()));
    }
    RDPoint p;
    p.scene = f[0];
    p.space = parse_space_field(f[1], where);
    p.preset = static_cast<int>(parse_int(f[2], where, "preset"));
    p.qp = static_cast<int>(parse_int(f[3], where, "qp"));
    try {
        p.path = parse_coding_path(f[4]);
    } catch (const ArgumentError&) {
        throw CsvError(where + ": unknown path '" + f[4] + "'");
    }
    auto bits = [&](const std::string& s, const char* col) {
        const auto v = parse_int(s, where, col);
        if (v < 0) throw CsvError(where + ": negative " + col);
        return static_cast<std::uint64_t>(v);
    };
    p.bits_latent = bits(f[5], "bits_latent");
    p.bits_backend = bits(f[6], "bits_backend");
    p.bits_total = bits(f[7], "bits_total");
    p.psnr_left = parse_double(f[8], where, "psnr_left");
    p.psnr_right = parse_double(f[9], where, "psnr_right");
    p.error = f[10];
    if (f.size() == kColumnCount) {
        if (f[11] == "builtin") p.backend = BackendKind::Builtin;
        else if (f[11] == "external") p.backend = BackendKind::External;
        else throw CsvError(where + ": unknown backend '" + f[11] + "'");
        p.cell_id = f[12];
        p.psnr_exp_left = parse_list(f[13], where, "psnr_exp_left");
        p.psnr_exp_right = parse_list(f[14], where, "psnr_exp_right");
    }
    if (p.cell_id.empty()) p.cell_id = cell_id(p.scene, p.space, p.preset, p.qp, p.path, p.backend);
    return p;
}

std::vector<RDPoint> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<RDPoint> points;
    std::string line;
    std::size_t lineno = 0;
    bool seen_version = false;
    bool seen_columns = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line == kCsvVersionLine) seen_version = true;
            else if (line.starts_with("# rdcsv")) throw CsvError(where + ": unsupported CSV version '" + line + "'");
            continue;
        }
        if (!seen_version) throw CsvError(where + ": missing '# rdcsv v1' header");
        if (!seen_columns) {
            if (!line.starts_with("scene,space,preset,qp,path,")) throw CsvError(where + ": missing column header");
            seen_columns = true;
            continue;
        }
        points.push_back(parse_csv_row(line, where));
    }
    if (!seen_version) throw CsvError(path.string() + ":1: missing '# rdcsv v1' header");
    return points;
}

void write_csv(std::ostream& out, const std::vector<RDPoint>& points) {
    out << kCsvVersionLine << "\n" << kCsvColumns << "\n";
    for (const auto& p : points) out << format_csv_row(p) << "\n";
}

void write_csv(const fs::path& path, const std::vector<RDPoint>& points) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        write_csv(out, points);
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

RDPoint measure(const SceneStack& scene, const EncodeConfig& cfg, EncodeResult* encoded) {
    RDPoint p;
    p.scene = scene.meta.name;
    p.space = cfg.space;
    p.preset = cfg.ranks ? 0 : cfg.preset;
    p.qp = cfg.qp;
    p.path = cfg.path;
    p.backend = cfg.backend.kind;
    p.cell_id = cell_id(p.scene, p.space, p.preset, p.qp, p.path, p.backend);

    EncodeResult r = encode_stream(scene, cfg);
    DecodeOptions opts;
    opts.backend = cfg.backend;
    const SceneStack decoded = decode_stream(r.bytes, opts);
    const ScenePsnr psnr = scene_psnr(scene, decoded);

    p.bits_latent = r.stats.bits_latent;
    p.bits_backend = r.stats.bits_backend;
    p.bits_total = r.stats.bits_total;
    p.psnr_left = psnr.views[0].psnr;
    p.psnr_exp_left = psnr.views[0].per_exposure;
    if (psnr.views.size() > 1) {
        p.psnr_right = psnr.views[1].psnr;
        p.psnr_exp_right = psnr.views[1].per_exposure;
    } else {
        p.psnr_right = std::nan("");
    }
    if (encoded) *encoded = std::move(r);
    return p;
}

void SweepSpec::validate() const {
    if (spaces.empty() || presets.empty() || qps.empty()) throw ArgumentError("sweep selections must be non-empty");
    for (int k : presets) {
        if (k < RankPresetTable::kMinPreset || k > RankPresetTable::kMaxPreset) {
            throw ArgumentError("rank preset " + std::to_string(k) + " outside 1..5");
        }
    }
    for (int q : qps) {
        if (q < 0 || q > 51) throw ArgumentError("qp " + std::to_string(q) + " outside 0..51");
    }
    if (jobs < 1) throw ArgumentError("jobs must be at least 1");
    if (out_dir.empty()) throw ArgumentError("sweep needs an output directory");
    backend.validate();
    if (path == CodingPath::Latent && backend.kind == BackendKind::External) {
        throw ArgumentError("the external backend only applies to the frames path");
    }
}

SweepSummary run_sweep(const SweepSpec& spec, const ProgressFn& progress) {
    spec.validate();
    return run_sweep(spec, load_scene(spec.scene_dir, spec.pattern), progress);
}

SweepSummary run_sweep(const SweepSpec& spec, const SceneStack& scene, const ProgressFn& progress) {
    spec.validate();
    fs::create_directories(spec.out_dir);
    SweepSummary summary;
    summary.csv = spec.out_dir / "rd.csv";

    std::vector<Cell> cells;
    std::set<std::string> grid_ids;
    for (ColorSpace space : spec.spaces) {
        for (int preset : spec.presets) {
            for (int qp : spec.qps) {
                Cell c{space, preset, qp, cell_id(scene.meta.name, space, preset, qp, spec.path, spec.backend.kind)};
                if (grid_ids.insert(c.id).second) cells.push_back(c);
            }
        }
    }
    summary.cells = cells.size();

    std::map<std::string, RDPoint> done;
    std::vector<RDPoint> previous;
    if (fs::exists(summary.csv)) {
        previous = dedupe_keep_last(read_csv(summary.csv));
        for (const auto& p : previous) {
            if (p.ok()) done[p.cell_id] = p;
        }
    } else {
        std::ofstream out(summary.csv);
        out << kCsvVersionLine << "\n" << kCsvColumns << "\n";
        if (!out) throw IoError("cannot write " + summary.csv.string());
    }

    std::vector<const Cell*> todo;
    for (const auto& c : cells) {
        if (done.count(c.id)) ++summary.reused;
        else todo.push_back(&c);
    }

    std::mutex writer;
    std::ofstream append(summary.csv, std::ios::app);
    if (!append) throw IoError("cannot append to " + summary.csv.string());
    std::atomic<std::size_t> next{0};
    std::size_t finished = summary.reused;

    auto run_one = [&](const Cell& c) {
        EncodeConfig cfg;
        cfg.space = c.space;
        cfg.preset = c.preset;
        cfg.qp = c.qp;
        cfg.path = spec.path;
        cfg.backend = spec.backend;
        cfg.solver = spec.solver;
        cfg.solver.seed = spec.seed;
        cfg.parallel_channels = spec.jobs == 1;
        RDPoint p;
        try {
            p = measure(scene, cfg);
        } catch (const std::exception& e) {
            p = RDPoint{};
            p.scene = scene.meta.name;
            p.space = c.space;
            p.preset = c.preset;
            p.qp = c.qp;
            p.path = spec.path;
            p.backend = spec.backend.kind;
            p.cell_id = c.id;
            p.psnr_left = p.psnr_right = std::nan("");
            p.error = e.what();
            if (const auto* be = dynamic_cast<const BackendError*>(&e); be && !be->diagnostics().empty()) {
                p.error += " | " + be->diagnostics();
            }
        }
        std::lock_guard lock(writer);
        append << format_csv_row(p) << "\n" << std::flush;
        done[c.id] = p;
        ++finished;
        if (p.ok()) ++summary.computed;
        else ++summary.failed;
        if (progress) progress(p, finished, cells.size());
    };

    const std::size_t workers = std::min(spec.jobs, std::max<std::size_t>(todo.size(), 1));
    if (workers <= 1) {
        for (const Cell* c : todo) run_one(*c);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < todo.size(); i = next++) run_one(*todo[i]);
            });
        }
    }
    append.close();

    // Canonical order: the grid, then any unrelated rows that were already in the file.
    std::vector<RDPoint> rows;
    for (const auto& c : cells) rows.push_back(done.at(c.id));
    for (const auto& p : previous) {
        if (!grid_ids.count(p.cell_id)) rows.push_back(p);
    }
    write_csv(summary.csv, rows);

    for (ColorSpace space : spec.spaces) {
        const fs::path dat = spec.out_dir / ("rd_" + space_name(space) + ".dat");
        if (std::find(summary.dat_files.begin(), summary.dat_files.end(), dat) != summary.dat_files.end()) continue;
        write_dat(dat, rows, space);
        summary.dat_files.push_back(dat);
    }
    return summary;
}

std::vector<RDPoint> dedupe_keep_last(const std::vector<RDPoint>& points) {
    std::map<std::string, std::size_t> last;
    for (std::size_t i = 0; i < points.size(); ++i) last[points[i].cell_id] = i;
    std::vector<RDPoint> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (last[points[i].cell_id] == i) out.push_back(points[i]);
    }
    return out;
}

std::vector<RDSeries> build_series(const std::vector<RDPoint>& points) {
    std::vector<RDSeries> series;
    for (const auto& p : points) {
        if (!p.ok()) continue;
        auto it = std::find_if(series.begin(), series.end(), [&](const RDSeries& s) {
            return s.scene == p.scene && s.space == p.space && s.preset == p.preset && s.path == p.path;
        });
        if (it == series.end()) {
            series.push_back({p.scene, p.space, p.preset, p.path, {}});
            it = series.end() - 1;
        }
        it->points.push_back(p);
    }
    std::sort(series.begin(), series.end(), [](const RDSeries& a, const RDSeries& b) {
        return std::tie(a.scene, a.space, a.path, a.preset) < std::tie(b.scene, b.space, b.path, b.preset);
    });
    for (auto& s : series) {
        std::stable_sort(s.points.begin(), s.points.end(), [](const RDPoint& a, const RDPoint& b) {
            return a.bits_total < b.bits_total;
        });
    }
    return series;
}

void write_series(std::ostream& out, const std::vector<RDSeries>& series) {
    bool first = true;
    for (const auto& s : series) {
        if (!first) out << "\n\n";
        first = false;
        out << "# scene=" << s.scene << " space=" << to_string(s.space) << " preset=" << s.preset
            << " path=" << to_string(s.path) << "\n";
        out << "# bits_total psnr_left psnr_right qp\n";
        for (const auto& p : s.points) {
            out << p.bits_total << ' ' << format_double(p.psnr_left) << ' ' << format_double(p.psnr_right) << ' '
                << p.qp << "\n";
        }
    }
}

}  // namespace tmc
