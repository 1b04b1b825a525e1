#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/config.hpp"
#include "homoglab/envelope.hpp"

namespace homoglab {

struct RunOptions {
    std::filesystem::path out;
    bool force = false;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
};

/// Failed realization of one stage of an experiment.
struct RealizationFailure {
    std::string stage;
    std::uint64_t index = 0;
};

/// One line of runs.log.
struct RunRecord {
    std::string id;
    std::string kind;
    std::uint64_t seed = 0;
    std::string started, finished;
    /// "ok", "partial" (some realizations failed, within tolerance) or "failed".
    std::string status;
    std::string message;
    std::size_t realizations = 0;
    std::vector<RealizationFailure> failures;
    std::vector<std::string> outputs;

    std::string to_json() const;
};

/// Runs the configured experiment into `options.out` (falling back to the config's `out`):
/// manifest.txt and CSVs are written atomically and a RunRecord is appended to runs.log.
/// A completed run with the same id in that directory is refused unless `force` is set.
/// Holds `<out>/.lock` for the duration.
RunRecord run(ExperimentConfig config, const RunOptions& options);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest decimal that reads back to the same double.
std::string format_number(double v);

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Standalone SVG line plot with axis ticks; `log_y` plots log10 of positive y values.
std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, bool log_y);

/// Checks a stored grid function: envelope invariants and the Monte Carlo oracle.
struct EnvelopeCheckLine {
    std::string name;
    bool pass = false;
    std::string detail;
};
struct EnvelopeCheckReport {
    double measure = 0.0;
    McEstimate mc;
    std::vector<EnvelopeCheckLine> checks;
    bool pass() const;
};
EnvelopeCheckReport envelope_check(const GridFunction& u, const std::optional<Rect>& region, int slopes,
                                   std::uint64_t seed);

/// Fast invariant suite across modules.
struct SelftestOptions {
    /// Name of a deliberately broken tolerance ("envelope-tolerance") to exercise failure reporting.
    std::string inject;
};
struct SelftestCheck {
    std::string module;
    std::string name;
    bool pass = false;
    std::string detail;
};
struct SelftestReport {
    std::vector<SelftestCheck> checks;
    double seconds = 0.0;
    bool pass() const;
    /// One line per check followed by pass/total counts per module.
    std::string to_text() const;
};
SelftestReport selftest(const SelftestOptions& options = {});

}  // namespace homoglab
