#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chaosrc/errors.hpp"
#include "chaosrc/lyapunov.hpp"
#include "chaosrc/time_series.hpp"
#include "chaosrc/version.hpp"

namespace chaosrc {

/// FNV-1a 64-bit hash; used to stamp outputs with the config they came from.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Double -> shortest string with 17 significant digits (full precision).
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ConfigError(context + ": cannot parse '" + std::string(text) + "' as a real number");
    return v;
}

inline long long parse_int(std::string_view text, const std::string& context) {
    long long v = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ConfigError(context + ": cannot parse '" + std::string(text) + "' as an integer");
    return v;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace detail

/// Flat `section.key = value` configuration text. Parsing is strict: every
/// key must be consumed by the schema that reads it, and leftover keys are
/// reported as errors with their line numbers, so a typo in a hyperparameter
/// name can never pass silently.
class KeyValueFile {
public:
    static KeyValueFile from_text(std::string text, std::string origin = "<string>") {
        KeyValueFile kv;
        kv.origin_ = std::move(origin);
        kv.raw_text_ = std::move(text);
        std::istringstream in(kv.raw_text_);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string_view stripped = detail::trim(line);
            if (stripped.empty() || stripped.front() == '#') continue;
            const std::size_t eq = stripped.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(kv.origin_ + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
            const std::string key{detail::trim(stripped.substr(0, eq))};
            const std::string value{detail::trim(stripped.substr(eq + 1))};
            if (key.empty())
                throw ConfigError(kv.origin_ + ":" + std::to_string(line_no) + ": empty key");
            if (kv.entries_.count(key))
                throw ConfigError(kv.origin_ + ":" + std::to_string(line_no) + ": duplicate key '" +
                                  key + "'");
            kv.entries_[key] = Entry{value, line_no, false};
        }
        return kv;
    }

    static KeyValueFile from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_text(ss.str(), path.string());
    }

    const std::string& raw_text() const { return raw_text_; }
    const std::string& origin() const { return origin_; }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string require_string(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw ConfigError(origin_ + ": missing required field '" + key + "'");
        it->second.consumed = true;
        return it->second.value;
    }

    std::optional<std::string> optional_string(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        it->second.consumed = true;
        return it->second.value;
    }

    double require_real(const std::string& key) { return parse_double(require_string(key), at(key)); }
    long long require_int(const std::string& key) { return parse_int(require_string(key), at(key)); }

    double get_real(const std::string& key, double fallback) {
        auto v = optional_string(key);
        return v ? parse_double(*v, at(key)) : fallback;
    }

    long long get_int(const std::string& key, long long fallback) {
        auto v = optional_string(key);
        return v ? parse_int(*v, at(key)) : fallback;
    }

    std::string get_string(const std::string& key, std::string fallback) {
        auto v = optional_string(key);
        return v ? *v : fallback;
    }

    /// Error context "origin:line: key 'k'".
    std::string at(const std::string& key) const {
        auto it = entries_.find(key);
        const int line = it == entries_.end() ? 0 : it->second.line;
        return origin_ + ":" + std::to_string(line) + ": key '" + key + "'";
    }

    /// Call after all schema reads: any unread key is an unknown key.
    void finish() const {
        for (const auto& [key, entry] : entries_) {
            if (!entry.consumed)
                throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" +
                                  key + "'");
        }
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
        bool consumed = false;
    };
    std::string origin_;
    std::string raw_text_;
    std::map<std::string, Entry> entries_;
};

/// Standard metadata comment block written at the top of every output file.
inline std::string metadata_header(std::uint64_t config_hash) {
    std::ostringstream out;
    out << "# version=" << kVersion << "\n";
    out << "# config_hash=" << config_hash << "\n";
    return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// TimeSeries CSV: metadata comments, header `t,u1,...,uD`, time column
/// step*dt, all values at 17 significant digits.
inline std::string time_series_csv(const TimeSeries& series, std::uint64_t config_hash = 0) {
    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "# dt=" << format_double(series.dt) << "\n";
    out << "t";
    for (long j = 0; j < series.dim(); ++j) out << ",u" << (j + 1);
    out << "\n";
    for (long t = 0; t < series.steps(); ++t) {
        out << format_double(static_cast<double>(t) * series.dt);
        for (long j = 0; j < series.dim(); ++j) out << ',' << format_double(series.data(t, j));
        out << "\n";
    }
    return out.str();
}

inline void write_time_series_csv(const std::filesystem::path& path, const TimeSeries& series,
                                  std::uint64_t config_hash = 0) {
    write_file(path, time_series_csv(series, config_hash));
}

/// Reads the format written above; comment lines are skipped and dt is
/// recovered from the time column (or the `# dt=` comment for single-row
/// files).
inline TimeSeries read_time_series_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open time series file '" + path.string() + "'");

    std::string line;
    double dt_comment = 0.0;
    bool header_seen = false;
    std::vector<std::vector<double>> rows;
    std::vector<double> times;
    long dim = -1;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view stripped = detail::trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            const std::size_t eq = stripped.find("dt=");
            if (eq != std::string_view::npos)
                dt_comment = parse_double(detail::trim(stripped.substr(eq + 3)), path.string());
            continue;
        }
        if (!header_seen) {
            header_seen = true;  // `t,u1,...`
            continue;
        }
        const auto fields = detail::split(stripped, ',');
        if (dim < 0) dim = static_cast<long>(fields.size()) - 1;
        if (static_cast<long>(fields.size()) != dim + 1)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": inconsistent column count");
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        times.push_back(parse_double(detail::trim(fields[0]), ctx));
        std::vector<double> row(dim);
        for (long j = 0; j < dim; ++j) row[j] = parse_double(detail::trim(fields[j + 1]), ctx);
        rows.push_back(std::move(row));
    }
    if (!header_seen) throw std::runtime_error(path.string() + ": missing header row");

    TimeSeries out;
    out.dt = times.size() >= 2 ? times[1] - times[0] : dt_comment;
    out.data.resize(static_cast<long>(rows.size()), std::max<long>(dim, 0));
    for (long t = 0; t < out.steps(); ++t)
        for (long j = 0; j < out.dim(); ++j) out.data(t, j) = rows[t][j];
    return out;
}

/// Spectrum CSV: `index,lambda` with `# n_steps` / `# dt` metadata comments.
inline std::string spectrum_csv(const LyapunovSpectrum& spectrum, std::uint64_t config_hash = 0) {
    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "# n_steps=" << spectrum.n_steps_used << "\n";
    out << "# dt=" << format_double(spectrum.dt) << "\n";
    out << "index,lambda\n";
    for (long i = 0; i < spectrum.exponents.size(); ++i)
        out << (i + 1) << ',' << format_double(spectrum.exponents[i]) << "\n";
    return out.str();
}

inline void write_spectrum_csv(const std::filesystem::path& path, const LyapunovSpectrum& spectrum,
                               std::uint64_t config_hash = 0) {
    write_file(path, spectrum_csv(spectrum, config_hash));
}

inline LyapunovSpectrum read_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spectrum file '" + path.string() + "'");
    LyapunovSpectrum sp;
    std::vector<double> lambdas;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        const std::string_view stripped = detail::trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            if (stripped.find("n_steps=") != std::string_view::npos)
                sp.n_steps_used = parse_int(detail::trim(stripped.substr(stripped.find('=') + 1)),
                                            path.string());
            else if (stripped.find("dt=") != std::string_view::npos)
                sp.dt = parse_double(detail::trim(stripped.substr(stripped.find('=') + 1)),
                                     path.string());
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto fields = detail::split(stripped, ',');
        if (fields.size() != 2) throw std::runtime_error(path.string() + ": expected 'index,lambda'");
        lambdas.push_back(parse_double(detail::trim(fields[1]), path.string()));
    }
    sp.exponents = Eigen::Map<Eigen::VectorXd>(lambdas.data(), static_cast<long>(lambdas.size()));
    return sp;
}

/// Dense matrix as plain CSV rows (used for the trained readout).
inline std::string matrix_csv(const Eigen::MatrixXd& m, std::uint64_t config_hash = 0) {
    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "# rows=" << m.rows() << " cols=" << m.cols() << "\n";
    for (long i = 0; i < m.rows(); ++i) {
        for (long j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << "\n";
    }
    return out.str();
}

inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                             std::uint64_t config_hash = 0) {
    write_file(path, matrix_csv(m, config_hash));
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix file '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view stripped = detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto fields = detail::split(stripped, ',');
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto f : fields) row.push_back(parse_double(detail::trim(f), path.string()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m(static_cast<long>(rows.size()), static_cast<long>(rows[0].size()));
    for (long i = 0; i < m.rows(); ++i) {
        if (static_cast<long>(rows[i].size()) != m.cols())
            throw std::runtime_error(path.string() + ": ragged rows");
        for (long j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

}  // namespace chaosrc
