#include "io.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

namespace sur::cli {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<Index> index_list(const json& j, const std::string& where)
{
    if (!j.is_array()) {
        throw InputError(where + ": each index set must be an array of integers");
    }
    std::vector<Index> out;
    for (const auto& v : j) {
        if (!v.is_number_integer()) {
            throw InputError(where + ": covariate indices must be integers, got " + v.dump());
        }
        out.push_back(v.get<Index>());
    }
    return out;
}

} // namespace

std::string format_real(double x)
{
    // {} is the shortest round-trip form; fall back to 17 digits for safety.
    std::string s = fmt::format("{}", x);
    if (std::isfinite(x) && std::strtod(s.c_str(), nullptr) != x) {
        s = fmt::format("{:.17g}", x);
    }
    return s;
}

Matrix read_csv_matrix(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(path.string() + ": cannot open file");
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            const std::string t = trim(cell);
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(t.c_str(), &end);
            if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
                throw InputError(fmt::format("{}: row {}, column {}: '{}' is not a finite number", path.string(),
                                             line_no, col, t));
            }
            row.push_back(v);
        }
        if (trim(line).back() == ',') {
            throw InputError(fmt::format("{}: row {}: trailing comma", path.string(), line_no));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InputError(fmt::format("{}: row {}: expected {} columns, found {}", path.string(), line_no,
                                         rows.front().size(), row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw InputError(path.string() + ": no data rows");
    }
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        }
    }
    return m;
}

void write_csv_matrix(const fs::path& path, const Matrix& m)
{
    std::ofstream out(path);
    if (!out) {
        throw InputError(path.string() + ": cannot write file");
    }
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            out << (c ? "," : "") << format_real(m(r, c));
        }
        out << '\n';
    }
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError(path.string() + ": cannot open file");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) {
        throw InputError(path.string() + ": cannot write file");
    }
    out << j.dump(2) << '\n';
}

ModelSpec spec_from_json(const json& j, const std::string& where)
{
    const json& sets = j.is_object() && j.contains("sets") ? j.at("sets") : j;
    if (!sets.is_array()) {
        throw InputError(where + ": a model spec is an array of index sets");
    }
    std::vector<std::vector<Index>> out;
    for (const auto& s : sets) {
        out.push_back(index_list(s, where));
    }
    try {
        return ModelSpec::from_one_based(out);
    } catch (const Error& e) {
        throw InputError(where + ": " + e.what());
    }
}

json spec_to_json(const ModelSpec& spec) { return spec.one_based(); }

std::vector<Candidate> grid_from_json(const json& j, const std::string& where)
{
    const json& list = j.is_object() && j.contains("candidates") ? j.at("candidates") : j;
    if (!list.is_array() || list.empty()) {
        throw InputError(where + ": the candidate grid must be a nonempty array");
    }
    std::vector<Candidate> grid;
    int position = 0;
    for (const auto& entry : list) {
        ++position;
        const std::string at = where + ": candidate " + std::to_string(position);
        Candidate c{spec_from_json(entry, at), position, 0};
        if (entry.is_object()) {
            if (!entry.contains("sets")) {
                throw InputError(at + ": missing \"sets\"");
            }
            if (entry.contains("i") != entry.contains("j")) {
                throw InputError(at + ": give both \"i\" and \"j\" or neither");
            }
            if (entry.contains("i")) {
                c.i = entry.at("i").get<int>();
                c.j = entry.at("j").get<int>();
            }
        }
        grid.push_back(std::move(c));
    }
    return grid;
}

json grid_to_json(const std::vector<Candidate>& grid)
{
    json out = json::array();
    for (const auto& c : grid) {
        out.push_back({{"i", c.i}, {"j", c.j}, {"sets", spec_to_json(c.spec)}});
    }
    return out;
}

json matrix_to_json(const Matrix& m)
{
    json out = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(path.string() + ": cannot open file");
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

Manifest::Manifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_(std::chrono::system_clock::now()),
      clock_start_(std::chrono::steady_clock::now())
{
}

void Manifest::add_input(const fs::path& path)
{
    inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void Manifest::add_output(const fs::path& path) { outputs_.push_back(path.filename().string()); }

void Manifest::write(const fs::path& dir) const
{
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start_).count();
    const auto started = std::chrono::system_clock::to_time_t(started_);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started));

    json m = {
        {"command", command_},
        {"artifact_version", SUR_VERSION},
        {"argv", argv_},
        {"seed", seed_},
        {"config", config_},
        {"inputs", inputs_},
        {"outputs", outputs_},
        {"started_utc", stamp},
        {"wall_clock_seconds", elapsed},
    };
    for (const auto& [key, value] : extra_.items()) {
        m[key] = value;
    }
    write_json(dir / "manifest.json", m);
}

} // namespace sur::cli
