#pragma once

// File formats for the command-line tool: headerless CSV matrices, JSON
// model specs and candidate grids with 1-based covariate indices, and the
// per-directory run manifest.

#include "sur/errors.hpp"
#include "sur/simlab.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sur::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitInternal = 4;
inline constexpr int kExitInterrupted = 130;

/// Bad input detected by the tool itself (exit 2).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest decimal string that reads back to the same double.
std::string format_real(double x);

Matrix read_csv_matrix(const fs::path& path);
void write_csv_matrix(const fs::path& path, const Matrix& m);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

/// Accepts [[1, 2], [6, 7]] or {"sets": [[1, 2], [6, 7]]}.
ModelSpec spec_from_json(const json& j, const std::string& where);
json spec_to_json(const ModelSpec& spec);

/// Accepts a list of specs or {"candidates": [...]}; each entry is a spec or
/// {"i": .., "j": .., "sets": ..}. Unlabelled entries get i = position, j = 0.
std::vector<Candidate> grid_from_json(const json& j, const std::string& where);
json grid_to_json(const std::vector<Candidate>& grid);

json matrix_to_json(const Matrix& m);

std::string sha256_file(const fs::path& path);

/// Collects what a command read and wrote, then writes manifest.json.
class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> argv);

    void add_input(const fs::path& path);
    void add_output(const fs::path& path);
    void set_config(json config) { config_ = std::move(config); }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void set_extra(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write(const fs::path& dir) const;

private:
    std::string command_;
    std::vector<std::string> argv_;
    json config_ = json::object();
    std::uint64_t seed_ = 0;
    json inputs_ = json::array();
    json outputs_ = json::array();
    json extra_ = json::object();
    std::chrono::system_clock::time_point started_;
    std::chrono::steady_clock::time_point clock_start_;
};

} // namespace sur::cli
