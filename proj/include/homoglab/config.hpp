#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/environment.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/operators.hpp"

namespace homoglab {

enum class ExperimentKind { EnvelopeCheck, Mu, MuDecay, Effective, ErrorRate };

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

/// Tile expression: linear(a11, a12, a22, c), bellman-min(linear(...), ...),
/// bellman-max(...), pucci+(c), pucci-(c). Pucci tiles use `lambda`.
LocalOperator parse_tile(const std::string& text, double lambda);
/// Tile expressions separated by ';'.
std::vector<LocalOperator> parse_tiles(const std::string& text, double lambda);

/// Parsed experiment configuration. Every field has a documented key; see README.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::MuDecay;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out;

    // [ensemble]
    std::string preset;
    std::string tiles_text;
    std::vector<double> probs;
    double lambda = 4.0;
    double k0 = 4.0;
    int dim = 2;

    // [operator]
    SymMatrix a = SymMatrix::zero(2);

    // [sampling]
    int n = 20;
    std::vector<int> ms{0, 1};
    std::vector<double> ss{0.0};

    // [mu]
    int mu_per_unit = 9;
    bool mu_optimize = false;
    int mu_budget = 0;
    double mu_cert_tol = 1e-8;
    bool mu_all_cubes = false;

    // [balance]
    int balance_m = 1;
    int balance_n = 0;
    double balance_tol = 1e-3;
    std::optional<double> s_hat;

    // [cell]
    std::vector<double> deltas{0.004, 0.002, 0.001};
    int cell_tiles = 9;
    int cell_per_unit = 3;
    int cell_n = 0;

    // [error]
    std::vector<double> eps{1.0 / 3, 1.0 / 9};
    std::vector<std::string> eps_text{"1/3", "1/9"};
    Box box{0.0, 0.0, 1.0};
    double f = 1.0;
    double g = 0.0;
    std::string effective = "cell";
    int points_per_cell = 9;

    // [envelope]
    int envelope_grid = 17;
    int envelope_slopes = 200000;

    /// Text the configuration was parsed from.
    std::string source;

    TileEnsemble ensemble() const;
    /// Normalized listing of every field except `out` and `workers` (which do not change results).
    std::string canonical() const;
    /// 16 hex digits derived from canonical().
    std::string run_id() const;
};

/// Parses `key = value` lines grouped under [section] headers. Unknown sections or keys,
/// malformed values, and violated preconditions raise ValidationError naming the field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Checks every precondition of the selected experiment.
void validate(const ExperimentConfig& config);

}  // namespace homoglab
