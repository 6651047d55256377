#pragma once

// File formats:
//   event stream   CSV "time_ns,channel" + sidecar <stem>.meta.json
//   histogram      CSV "tau_ns,counts,g2,g2_err" + sidecar <stem>.meta.json
//   TAC delays     CSV "delay_ns"
//   fit result     JSON {params, sigmas, reduced_chi2, converged, n_points, n_bootstrap, ...}
// Every writer goes through a temporary file and a rename.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsps/error.hpp"
#include "fsps/event_stream.hpp"
#include "fsps/fit.hpp"
#include "fsps/format.hpp"
#include "fsps/histogram.hpp"

namespace fsps::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Writes `content` to `path` atomically (temp file in the same directory).
inline void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// <dir>/<stem>.meta.json for a data file.
inline fs::path sidecar_path(const fs::path& data) {
    fs::path p = data;
    p.replace_extension(".meta.json");
    return p;
}

namespace detail {

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string_view> fields;

    std::size_t size() const { return fields.size(); }
    std::string_view operator[](std::size_t i) const { return fields[i]; }
};

/// Splits CSV text into rows of fields, checking the header.
inline std::vector<CsvRow> csv_rows(std::string_view text, std::string_view header, const std::string& name) {
    std::vector<CsvRow> rows;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!seen_header) {
            if (line != header) {
                throw ParseError(name + ":" + std::to_string(line_no),
                                 "expected header '" + std::string(header) + "'");
            }
            seen_header = true;
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t f = 0;
        while (true) {
            const std::size_t comma = line.find(',', f);
            fields.push_back(line.substr(f, comma == std::string_view::npos ? std::string_view::npos : comma - f));
            if (comma == std::string_view::npos) break;
            f = comma + 1;
        }
        rows.push_back({line_no, std::move(fields)});
    }
    if (!seen_header) throw ParseError(name + ":1", "missing header '" + std::string(header) + "'");
    return rows;
}

template <class T>
T parse_number(std::string_view s, const std::string& where) {
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
        if (s == "inf") return std::numeric_limits<T>::infinity();
        if (s == "-inf") return -std::numeric_limits<T>::infinity();
        if (s == "nan") return std::numeric_limits<T>::quiet_NaN();
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(where, "cannot parse '" + std::string(s) + "' as a number");
    }
    return v;
}

inline std::string row_where(const std::string& name, const CsvRow& row) {
    return name + ":" + std::to_string(row.line);
}

/// Parses JSON, reporting syntax and schema problems as ParseError.
template <class F>
auto with_json(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(name, e.what());
    }
}

inline json parse_json(const std::string& text, const std::string& name) {
    return with_json(name, [&] { return json::parse(text); });
}

inline json number_or_text(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

inline double number_from(const json& j) {
    if (j.is_string()) return parse_number<double>(j.get<std::string>(), "json");
    return j.get<double>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Event streams

inline std::string stream_csv(const PhotonEventStream& s) {
    std::string out = "time_ns,channel\n";
    out.reserve(out.size() + s.events.size() * 16);
    char buf[32];
    for (const auto& e : s.events) {
        auto r = std::to_chars(buf, buf + sizeof buf, e.time_ns);
        out.append(buf, r.ptr);
        out.push_back(',');
        r = std::to_chars(buf, buf + sizeof buf, e.channel);
        out.append(buf, r.ptr);
        out.push_back('\n');
    }
    return out;
}

inline json stream_sidecar(const PhotonEventStream& s) {
    json j;
    j["seed"] = s.seed;
    j["duration_ns"] = s.duration_ns;
    j["channels"] = s.channels;
    auto gen = s.metadata.find("generator");
    j["generator"] = gen != s.metadata.end() ? gen->second : std::string("unknown");
    j["metadata"] = s.metadata;
    return j;
}

inline void write_stream(const fs::path& csv_path, const PhotonEventStream& s) {
    write_file_atomic(csv_path, stream_csv(s));
    write_file_atomic(sidecar_path(csv_path), stream_sidecar(s).dump(2) + "\n");
}

inline PhotonEventStream read_stream(const fs::path& csv_path) {
    const std::string name = csv_path.string();
    const std::string text = read_file(csv_path);
    const auto rows = detail::csv_rows(text, "time_ns,channel", name);
    PhotonEventStream s;
    s.events.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto where = detail::row_where(name, rows[i]);
        if (rows[i].size() != 2) throw ParseError(where, "expected 2 fields");
        s.events.push_back({detail::parse_number<TimeNs>(rows[i][0], where),
                            detail::parse_number<std::uint16_t>(rows[i][1], where)});
    }
    const fs::path side = sidecar_path(csv_path);
    if (fs::exists(side)) {
        const json j = detail::parse_json(read_file(side), side.string());
        detail::with_json(side.string(), [&] {
            s.seed = j.at("seed").get<std::uint64_t>();
            s.duration_ns = j.at("duration_ns").get<TimeNs>();
            s.channels = j.at("channels").get<std::vector<std::uint16_t>>();
            s.metadata = j.at("metadata").get<Metadata>();
            return 0;
        });
    } else {
        for (const auto& e : s.events) {
            s.duration_ns = std::max(s.duration_ns, e.time_ns);
            s.channels.push_back(e.channel);
        }
        s.channels = merge_channels(std::move(s.channels), {});
    }
    try {
        s.validate();
    } catch (const DomainError& e) {
        throw ParseError(name, e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Histograms

inline std::string histogram_csv(const CoincidenceHistogram& h) {
    std::string out = "tau_ns,counts,g2,g2_err\n";
    for (std::size_t i = 0; i < h.size(); ++i) {
        out += format_double(h.center(i));
        out += ',';
        out += std::to_string(h.counts[i]);
        out += ',';
        out += format_double(h.normalized[i]);
        out += ',';
        out += format_double(h.errors[i]);
        out += '\n';
    }
    return out;
}

inline void write_histogram(const fs::path& csv_path, const CoincidenceHistogram& h, std::string_view kind) {
    write_file_atomic(csv_path, histogram_csv(h));
    json j;
    j["kind"] = kind;
    j["bin_width_ns"] = h.bin_width();
    j["normalization"] = h.normalization;
    j["total_pairs"] = h.total_pairs;
    j["bin_edges_ns"] = h.bin_edges;
    write_file_atomic(sidecar_path(csv_path), j.dump(2) + "\n");
}

/// Reads a histogram CSV. Without a sidecar the edges are rebuilt from the
/// bin centres and the normalization from the first nonempty bin.
inline CoincidenceHistogram read_histogram(const fs::path& csv_path) {
    const std::string name = csv_path.string();
    const std::string text = read_file(csv_path);
    const auto rows = detail::csv_rows(text, "tau_ns,counts,g2,g2_err", name);
    if (rows.empty()) throw ParseError(name, "histogram has no bins");
    std::vector<double> centers;
    std::vector<std::uint64_t> counts;
    std::vector<double> g2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto where = detail::row_where(name, rows[i]);
        if (rows[i].size() != 4) throw ParseError(where, "expected 4 fields");
        centers.push_back(detail::parse_number<double>(rows[i][0], where));
        counts.push_back(detail::parse_number<std::uint64_t>(rows[i][1], where));
        g2.push_back(detail::parse_number<double>(rows[i][2], where));
        detail::parse_number<double>(rows[i][3], where);
        if (i > 0 && !(centers[i] > centers[i - 1])) throw ParseError(where, "bin centres must increase");
    }

    const fs::path side = sidecar_path(csv_path);
    try {
        if (fs::exists(side)) {
            const json j = detail::parse_json(read_file(side), side.string());
            auto [edges, norm] = detail::with_json(side.string(), [&] {
                return std::pair{j.at("bin_edges_ns").get<std::vector<double>>(), j.at("normalization").get<double>()};
            });
            if (edges.size() != counts.size() + 1) throw ParseError(side.string(), "bin_edges_ns does not match CSV");
            return CoincidenceHistogram::make(std::move(edges), std::move(counts), norm);
        }
        if (centers.size() < 2) throw ParseError(name, "need a sidecar or at least two bins to infer the bin width");
        const double w = centers[1] - centers[0];
        std::vector<double> edges;
        for (double c : centers) edges.push_back(c - 0.5 * w);
        edges.push_back(centers.back() + 0.5 * w);
        double norm = 1.0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (counts[i] > 0 && g2[i] > 0) {
                norm = static_cast<double>(counts[i]) / g2[i];
                break;
            }
        }
        return CoincidenceHistogram::make(std::move(edges), std::move(counts), norm);
    } catch (const DomainError& e) {
        throw ParseError(name, e.what());
    }
}

// ---------------------------------------------------------------------------
// TAC delays

inline void write_delays(const fs::path& path, const std::vector<TimeNs>& delays) {
    std::string out = "delay_ns\n";
    for (TimeNs d : delays) {
        out += std::to_string(d);
        out += '\n';
    }
    write_file_atomic(path, out);
}

inline std::vector<TimeNs> read_delays(const fs::path& path) {
    const std::string name = path.string();
    const std::string text = read_file(path);
    const auto rows = detail::csv_rows(text, "delay_ns", name);
    std::vector<TimeNs> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto where = detail::row_where(name, rows[i]);
        if (rows[i].size() != 1) throw ParseError(where, "expected 1 field");
        out.push_back(detail::parse_number<TimeNs>(rows[i][0], where));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fit results

inline json to_json(const FitResult& f) {
    json j;
    j["params"] = json::object();
    j["sigmas"] = json::object();
    j["diagnostics"] = json::object();
    for (const auto& [k, v] : f.params) j["params"][k] = detail::number_or_text(v);
    for (const auto& [k, v] : f.sigmas) j["sigmas"][k] = detail::number_or_text(v);
    for (const auto& [k, v] : f.diagnostics) j["diagnostics"][k] = detail::number_or_text(v);
    j["reduced_chi2"] = detail::number_or_text(f.reduced_chi2);
    j["converged"] = f.converged;
    j["n_points"] = f.n_points;
    j["n_bootstrap"] = f.n_bootstrap;
    j["message"] = f.message;
    return j;
}

inline FitResult fit_from_json(const json& j) {
    FitResult f;
    for (const auto& [k, v] : j.at("params").items()) f.params[k] = detail::number_from(v);
    for (const auto& [k, v] : j.at("sigmas").items()) f.sigmas[k] = detail::number_from(v);
    if (j.contains("diagnostics")) {
        for (const auto& [k, v] : j.at("diagnostics").items()) f.diagnostics[k] = detail::number_from(v);
    }
    f.reduced_chi2 = detail::number_from(j.at("reduced_chi2"));
    f.converged = j.at("converged").get<bool>();
    f.n_points = j.at("n_points").get<std::size_t>();
    f.n_bootstrap = j.at("n_bootstrap").get<std::size_t>();
    f.message = j.value("message", std::string{});
    return f;
}

inline void write_fit(const fs::path& path, const FitResult& f) {
    write_file_atomic(path, to_json(f).dump(2) + "\n");
}

inline FitResult read_fit(const fs::path& path) {
    const std::string name = path.string();
    const json j = detail::parse_json(read_file(path), name);
    return detail::with_json(name, [&] { return fit_from_json(j); });
}

}  // namespace fsps::io
