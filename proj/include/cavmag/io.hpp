#pragma once

// Data ingest (Touchstone v1 two-port, CSV spectra, calibration tables) and deterministic result
// serialization. Parsers are pure text-to-value functions and reject rather than coerce: numbers
// go through std::from_chars (locale-independent) and non-finite values are errors.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "calibration.hpp"
#include "errors.hpp"
#include "types.hpp"

namespace cavmag {

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::string upper(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

inline std::optional<double> to_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::vector<std::string_view> split_lines(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find('\n', start);
        std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    return lines;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        }
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) {
            ++j;
        }
        if (j > i) {
            out.push_back(s.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

inline std::vector<std::string_view> split_commas(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

inline std::string format_double(double v)
{
    if (!std::isfinite(v)) {
        return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    }
    std::array<char, 32> buf{};
    const int len = std::snprintf(buf.data(), buf.size(), "%.17g", v);
    return std::string(buf.data(), static_cast<std::size_t>(len));
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Touchstone v1, two-port

enum class TouchstoneFormat
{
    ri,
    ma,
    db
};

inline const char* format_name(TouchstoneFormat f)
{
    switch (f) {
    case TouchstoneFormat::ri: return "RI";
    case TouchstoneFormat::ma: return "MA";
    case TouchstoneFormat::db: return "DB";
    }
    return "?";
}

// Values are kept as the file gives them, i.e. in the instrument's e^{+j omega t} convention.
struct TouchstoneRecord
{
    std::vector<double> freq;                // GHz
    std::vector<std::array<cplx, 4>> s;      // S11, S21, S12, S22 (file order)
    TouchstoneFormat format = TouchstoneFormat::ma;
    double reference_impedance = 50.0;
    std::string option_line;
    std::vector<std::string> comments;

    [[nodiscard]] Spectrum s21_spectrum() const
    {
        Spectrum out;
        out.freq = freq;
        out.s21.reserve(s.size());
        for (const auto& row : s) {
            out.s21.push_back(std::conj(row[1]));  // to the model convention
        }
        out.provenance = Provenance::measured;
        return out;
    }
};

inline TouchstoneRecord parse_touchstone(std::string_view text)
{
    TouchstoneRecord rec;
    double freq_scale = 1.0;  // to GHz
    bool have_option = false;
    const auto lines = detail::split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::size_t line_no = ln + 1;
        std::string_view line = lines[ln];
        if (const auto bang = line.find('!'); bang != std::string_view::npos) {
            rec.comments.emplace_back(detail::trim(line.substr(bang + 1)));
            line = line.substr(0, bang);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            throw ParseError(line_no, "Touchstone v2 keyword '" + std::string(line) +
                                          "' found; only Touchstone v1 files are supported");
        }
        if (line.front() == '#') {
            if (have_option) {
                continue;  // v1: only the first option line counts
            }
            have_option = true;
            rec.option_line = std::string(line);
            const auto tokens = detail::split_whitespace(line.substr(1));
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                const std::string tok = detail::upper(tokens[t]);
                if (tok == "HZ") {
                    freq_scale = 1e-9;
                } else if (tok == "KHZ") {
                    freq_scale = 1e-6;
                } else if (tok == "MHZ") {
                    freq_scale = 1e-3;
                } else if (tok == "GHZ") {
                    freq_scale = 1.0;
                } else if (tok == "S") {
                } else if (tok == "Y" || tok == "Z" || tok == "H" || tok == "G") {
                    throw ParseError(line_no, "only S-parameter files are supported (got " + tok + ")");
                } else if (tok == "RI") {
                    rec.format = TouchstoneFormat::ri;
                } else if (tok == "MA") {
                    rec.format = TouchstoneFormat::ma;
                } else if (tok == "DB") {
                    rec.format = TouchstoneFormat::db;
                } else if (tok == "R") {
                    if (t + 1 >= tokens.size()) {
                        throw ParseError(line_no, "option line: 'R' without a reference impedance");
                    }
                    const auto z = detail::to_double(tokens[++t]);
                    if (!z || *z <= 0.0) {
                        throw ParseError(line_no, "option line: invalid reference impedance '" + std::string(tokens[t]) + "'");
                    }
                    rec.reference_impedance = *z;
                } else {
                    throw ParseError(line_no, "option line: unrecognised token '" + std::string(tokens[t]) + "'");
                }
            }
            continue;
        }
        const auto tokens = detail::split_whitespace(line);
        if (tokens.size() != 9) {
            throw ParseError(line_no, "two-port data row needs 9 values, found " + std::to_string(tokens.size()));
        }
        std::array<double, 9> v{};
        for (std::size_t k = 0; k < 9; ++k) {
            const auto d = detail::to_double(tokens[k]);
            if (!d) {
                throw ParseError(line_no, "value " + std::to_string(k + 1) + " ('" + std::string(tokens[k]) +
                                              "') is not a finite number");
            }
            v[k] = *d;
        }
        const double f = v[0] * freq_scale;
        if (!rec.freq.empty() && !(f > rec.freq.back())) {
            throw ParseError(line_no, "frequencies must be strictly increasing");
        }
        std::array<cplx, 4> row;
        for (std::size_t p = 0; p < 4; ++p) {
            const double a = v[1 + 2 * p];
            const double b = v[2 + 2 * p];
            switch (rec.format) {
            case TouchstoneFormat::ri: row[p] = {a, b}; break;
            case TouchstoneFormat::ma: row[p] = std::polar(a, b * kPi / 180.0); break;
            case TouchstoneFormat::db: row[p] = std::polar(std::pow(10.0, a / 20.0), b * kPi / 180.0); break;
            }
        }
        rec.freq.push_back(f);
        rec.s.push_back(row);
    }
    if (rec.freq.empty()) {
        throw ParseError(lines.size(), "no data rows");
    }
    return rec;
}

// Writes a two-port record in the given encoding with 17 significant digits, frequencies in GHz.
inline std::string format_touchstone(const TouchstoneRecord& rec, TouchstoneFormat format)
{
    std::string out = "! cavmag\n# GHz S ";
    out += format_name(format);
    out += " R " + detail::format_double(rec.reference_impedance) + "\n";
    for (std::size_t i = 0; i < rec.freq.size(); ++i) {
        out += detail::format_double(rec.freq[i]);
        for (const cplx& s : rec.s[i]) {
            double a = 0.0;
            double b = 0.0;
            switch (format) {
            case TouchstoneFormat::ri: a = s.real(); b = s.imag(); break;
            case TouchstoneFormat::ma: a = std::abs(s); b = std::arg(s) * 180.0 / kPi; break;
            case TouchstoneFormat::db: a = 20.0 * std::log10(std::abs(s)); b = std::arg(s) * 180.0 / kPi; break;
            }
            out += ' ' + detail::format_double(a) + ' ' + detail::format_double(b);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// CSV spectra: comma separator, '.' decimal point, '#' comment lines, header row required.

struct ColumnMap
{
    std::string freq = "freq_GHz";
    double freq_to_ghz = 1.0;
    std::optional<std::string> re;
    std::optional<std::string> im;
    std::optional<std::string> magnitude;
    std::optional<std::string> phase_deg;
    bool instrument_convention = true;  // values use e^{+j omega t}, as a VNA exports them

    static ColumnMap re_im(std::string freq = "freq_GHz", std::string re = "re", std::string im = "im")
    {
        ColumnMap m;
        m.freq = std::move(freq);
        m.re = std::move(re);
        m.im = std::move(im);
        return m;
    }

    static ColumnMap mag_phase(std::string freq = "freq_GHz", std::string mag = "mag",
                               std::optional<std::string> phase = "phase_deg")
    {
        ColumnMap m;
        m.freq = std::move(freq);
        m.magnitude = std::move(mag);
        m.phase_deg = std::move(phase);
        return m;
    }
};

namespace detail {

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string_view>> rows;
    std::vector<std::size_t> line_numbers;
    std::size_t header_line = 0;

    [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    }
};

inline CsvTable read_csv(std::string_view text)
{
    CsvTable t;
    const auto lines = split_lines(text);
    bool have_header = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = trim(lines[ln]);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        auto cells = split_commas(line);
        if (!have_header) {
            for (auto c : cells) {
                t.header.emplace_back(c);
            }
            t.header_line = ln + 1;
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ParseError(ln + 1, "expected " + std::to_string(t.header.size()) + " columns, found " +
                                         std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(ln + 1);
    }
    if (!have_header) {
        throw ParseError(lines.size(), "missing header row");
    }
    return t;
}

inline double cell_number(const CsvTable& t, std::size_t row, std::size_t col)
{
    const auto v = to_double(t.rows[row][col]);
    if (!v) {
        throw ParseError(t.line_numbers[row], "column '" + t.header[col] + "' (column " + std::to_string(col + 1) +
                                                  "): '" + std::string(t.rows[row][col]) + "' is not a finite number");
    }
    return *v;
}

inline std::size_t require_column(const CsvTable& t, const std::string& name)
{
    const auto c = t.column(name);
    if (!c) {
        throw ParseError(t.header_line, "missing column '" + name + "'");
    }
    return *c;
}

} // namespace detail

inline Spectrum parse_spectrum_csv(std::string_view text, const ColumnMap& map = ColumnMap::re_im())
{
    const auto t = detail::read_csv(text);
    const std::size_t fcol = detail::require_column(t, map.freq);
    const bool complex_cols = map.re.has_value() || map.im.has_value();
    if (complex_cols && !(map.re && map.im)) {
        throw ParseError(t.header_line, "column map needs both real and imaginary columns");
    }
    if (!complex_cols && !map.magnitude) {
        throw ParseError(t.header_line, "column map needs (re, im) or (magnitude[, phase]) columns");
    }
    Spectrum s;
    s.provenance = Provenance::measured;
    if (complex_cols) {
        const std::size_t rc = detail::require_column(t, *map.re);
        const std::size_t ic = detail::require_column(t, *map.im);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            s.freq.push_back(detail::cell_number(t, r, fcol) * map.freq_to_ghz);
            s.s21.emplace_back(detail::cell_number(t, r, rc), detail::cell_number(t, r, ic));
        }
    } else {
        const std::size_t mc = detail::require_column(t, *map.magnitude);
        s.has_phase = map.phase_deg.has_value();
        const std::size_t pc = s.has_phase ? detail::require_column(t, *map.phase_deg) : 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            s.freq.push_back(detail::cell_number(t, r, fcol) * map.freq_to_ghz);
            const double mag = detail::cell_number(t, r, mc);
            const double ph = s.has_phase ? detail::cell_number(t, r, pc) * kPi / 180.0 : 0.0;
            s.s21.push_back(std::polar(mag, ph));
        }
    }
    if (s.freq.size() < 2) {
        throw ParseError(t.header_line, "spectrum needs at least 2 rows");
    }
    if (map.instrument_convention) {
        for (auto& v : s.s21) {
            v = std::conj(v);
        }
    }
    for (std::size_t r = 1; r < s.freq.size(); ++r) {
        if (!(s.freq[r] > s.freq[r - 1])) {
            throw ParseError(t.line_numbers[r], "frequencies must be strictly increasing");
        }
    }
    return s;
}

// Column map guessed from the header: a freq_<unit> column plus re/im, mag/phase_deg or mag alone.
inline ColumnMap detect_column_map(std::string_view text)
{
    const auto t = detail::read_csv(text);
    ColumnMap m;
    bool have_freq = false;
    for (const auto& [name, scale] :
         {std::pair{"freq_GHz", 1.0}, std::pair{"freq_MHz", 1e-3}, std::pair{"freq_kHz", 1e-6}, std::pair{"freq_Hz", 1e-9},
          std::pair{"freq[GHz]", 1.0}, std::pair{"freq[MHz]", 1e-3}, std::pair{"freq[kHz]", 1e-6}, std::pair{"freq[Hz]", 1e-9}}) {
        if (t.column(name)) {
            m.freq = name;
            m.freq_to_ghz = scale;
            have_freq = true;
            break;
        }
    }
    if (!have_freq) {
        throw ParseError(t.header_line, "no frequency column (expected freq_GHz, freq_MHz, freq_kHz, freq_Hz or freq[<unit>])");
    }
    if (t.column("re") && t.column("im")) {
        m.re = "re";
        m.im = "im";
    } else if (t.column("mag")) {
        m.magnitude = "mag";
        if (t.column("phase_deg")) {
            m.phase_deg = "phase_deg";
        }
    } else {
        throw ParseError(t.header_line, "no value columns (expected re,im or mag[,phase_deg])");
    }
    return m;
}

// ---------------------------------------------------------------------------------------------
// Calibration tables: columns d, f_c, kappa_cL, kappa_cR, beta0, each optionally suffixed with a
// bracketed unit that must be mm / GHz / MHz respectively.

inline CalibrationTable load_calibration(std::string_view text)
{
    const auto t = detail::read_csv(text);
    struct Spec
    {
        const char* name;
        const char* unit;
    };
    constexpr std::array<Spec, 5> specs{{{"d", "mm"}, {"f_c", "GHz"}, {"kappa_cL", "MHz"}, {"kappa_cR", "MHz"},
                                         {"beta0", "MHz"}}};
    std::array<std::size_t, 5> cols{};
    std::vector<std::string> problems;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        bool found = false;
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            std::string_view h = t.header[c];
            std::string_view unit;
            if (const auto br = h.find('['); br != std::string_view::npos && h.back() == ']') {
                unit = h.substr(br + 1, h.size() - br - 2);
                h = detail::trim(h.substr(0, br));
            }
            if (h == specs[k].name) {
                if (!unit.empty() && unit != specs[k].unit) {
                    problems.push_back("column '" + t.header[c] + "' must be in " + specs[k].unit);
                }
                cols[k] = c;
                found = true;
                break;
            }
        }
        if (!found) {
            problems.push_back(std::string("missing column '") + specs[k].name + "'");
        }
    }
    if (!problems.empty()) {
        throw ValidationError(std::move(problems));
    }
    CalibrationTable table;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        table.rows.push_back({detail::cell_number(t, r, cols[0]), detail::cell_number(t, r, cols[1]),
                              detail::cell_number(t, r, cols[2]), detail::cell_number(t, r, cols[3]),
                              detail::cell_number(t, r, cols[4])});
    }
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) { return a.d < b.d; });
    return table.normalized();
}

inline std::string format_calibration(const CalibrationTable& table)
{
    std::string out = "d[mm],f_c[GHz],kappa_cL[MHz],kappa_cR[MHz],beta0[MHz]\n";
    for (const auto& r : table.rows) {
        out += detail::format_double(r.d) + ',' + detail::format_double(r.f_c) + ',' +
               detail::format_double(r.kappa_l) + ',' + detail::format_double(r.kappa_r) + ',' +
               detail::format_double(r.beta0) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Result envelope

struct Column
{
    std::string name;
    std::string unit;
    std::vector<double> values;
};

struct Table
{
    std::vector<Column> columns;

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().values.size(); }

    Table& add(std::string name, std::string unit, std::vector<double> values)
    {
        columns.push_back({std::move(name), std::move(unit), std::move(values)});
        return *this;
    }

    [[nodiscard]] const Column& column(std::string_view name) const
    {
        for (const auto& c : columns) {
            if (c.name == name) {
                return c;
            }
        }
        throw ValidationError({"table has no column '" + std::string(name) + "'"});
    }
};

struct ResultEnvelope
{
    static constexpr int kSchemaVersion = 1;

    int schema_version = kSchemaVersion;
    std::string input_digest;
    nlohmann::json parameters = nlohmann::json::object();
    std::map<std::string, Table> tables;
    nlohmann::json metadata = nlohmann::json::object();
};

inline std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

// JSON with sorted object keys and shortest round-trip doubles; non-finite values become null.
inline std::string save_results(const ResultEnvelope& env)
{
    nlohmann::json doc;
    doc["schema_version"] = env.schema_version;
    doc["input_digest"] = env.input_digest;
    doc["parameters"] = env.parameters;
    doc["metadata"] = env.metadata;
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& [name, table] : env.tables) {
        nlohmann::json cols = nlohmann::json::array();
        for (const auto& c : table.columns) {
            nlohmann::json values = nlohmann::json::array();
            for (double v : c.values) {
                values.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
            }
            cols.push_back({{"name", c.name}, {"unit", c.unit}, {"values", std::move(values)}});
        }
        tables[name] = {{"columns", std::move(cols)}};
    }
    doc["tables"] = std::move(tables);
    return doc.dump(2) + "\n";
}

inline ResultEnvelope load_results(std::string_view text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, std::string("result envelope is not valid JSON: ") + e.what());
    }
    ResultEnvelope env;
    try {
        env.schema_version = doc.at("schema_version").get<int>();
        if (env.schema_version != ResultEnvelope::kSchemaVersion) {
            throw ValidationError({"unsupported result schema version " + std::to_string(env.schema_version)});
        }
        env.input_digest = doc.at("input_digest").get<std::string>();
        env.parameters = doc.at("parameters");
        env.metadata = doc.at("metadata");
        for (const auto& [name, t] : doc.at("tables").items()) {
            Table table;
            for (const auto& c : t.at("columns")) {
                Column col{c.at("name").get<std::string>(), c.at("unit").get<std::string>(), {}};
                for (const auto& v : c.at("values")) {
                    col.values.push_back(v.is_null() ? std::nan("") : v.get<double>());
                }
                table.columns.push_back(std::move(col));
            }
            env.tables.emplace(name, std::move(table));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed result envelope: ") + e.what());
    }
    return env;
}

// Flat CSV of one table for plotting tools; the first line carries the config digest.
inline std::string table_to_csv(const Table& table, std::string_view config_digest)
{
    std::string out = "# config_digest: " + std::string(config_digest) + "\n";
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        out += (c ? "," : "") + table.columns[c].name + (table.columns[c].unit.empty() ? "" : "[" + table.columns[c].unit + "]");
    }
    out += '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            out += (c ? "," : "") + detail::format_double(table.columns[c].values[r]);
        }
        out += '\n';
    }
    return out;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::ios_base::failure("cannot open '" + path + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view data)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::ios_base::failure("cannot open '" + path + "' for writing");
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw std::ios_base::failure("write to '" + path + "' failed");
    }
}

} // namespace cavmag
