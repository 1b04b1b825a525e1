#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "homoglab/operators.hpp"

namespace homoglab {

/// Finite list of tile operators with sampling probabilities. Validated at
/// construction: probabilities form a distribution, every tile is uniformly
/// elliptic with the common constant, |F(0)| <= k0, and (in d = 2) every linear
/// piece decomposes over the monotone stencil.
class TileEnsemble {
public:
    TileEnsemble(std::vector<LocalOperator> tiles, std::vector<double> probs, double lambda, double k0);

    const std::vector<LocalOperator>& tiles() const { return tiles_; }
    const std::vector<double>& probs() const { return probs_; }
    double lambda() const { return lambda_; }
    double k0() const { return k0_; }
    int dim() const { return tiles_.front().dim(); }
    std::size_t size() const { return tiles_.size(); }
    bool deterministic() const;

    /// Tile index for a uniform variate in [0, 1).
    int draw(double uniform) const;

    /// {Linear(I,0), Linear(4I,0)}, fair coin.
    static TileEnsemble checkerboard(double c = 0.0);
    /// Bellman(min) over the two checkerboard tiles, as a single deterministic tile.
    static TileEnsemble checkerboard_bellman();
    static TileEnsemble single(LocalOperator tile, double lambda, double k0);

private:
    std::vector<LocalOperator> tiles_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
    double lambda_;
    double k0_;
};

/// Integer box of unit cells [x0, x0 + nx) x [y0, y0 + ny).
struct Window {
    std::int64_t x0 = 0, y0 = 0;
    std::int64_t nx = 1, ny = 1;

    bool contains(std::int64_t i, std::int64_t j) const {
        return i >= x0 && i < x0 + nx && j >= y0 && j < y0 + ny;
    }
    std::size_t cell_count() const { return static_cast<std::size_t>(nx * ny); }
    bool operator==(const Window&) const = default;
};

/// A seeded assignment of tile indices to the unit cells of a window.
class Realization {
public:
    Realization(std::shared_ptr<const TileEnsemble> ensemble, Window window, std::uint64_t seed, std::uint64_t index,
                std::vector<int> cells);

    const TileEnsemble& ensemble() const { return *ensemble_; }
    std::shared_ptr<const TileEnsemble> ensemble_ptr() const { return ensemble_; }
    const Window& window() const { return window_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t index() const { return index_; }
    const std::vector<int>& cells() const { return cells_; }

    /// Tile index of cell (i, j); throws OutOfWindow.
    int cell(std::int64_t i, std::int64_t j) const;

    /// Same cells, window moved by z (cells(c + z) of the result = cells(c) here).
    Realization shifted(std::int64_t zx, std::int64_t zy) const;

private:
    std::shared_ptr<const TileEnsemble> ensemble_;
    Window window_;
    std::uint64_t seed_;
    std::uint64_t index_;
    std::vector<int> cells_;
};

/// Each cell is drawn independently by a counter-based generator keyed by
/// (seed, index, cell coordinates), so any sub-window is reproducible alone.
Realization sample_realization(std::shared_ptr<const TileEnsemble> ensemble, const Window& window, std::uint64_t seed,
                               std::uint64_t index);

/// Piecewise-constant field: the operator at x is the tile of cell floor(x).
OperatorField field_of(std::shared_ptr<const Realization> realization);

/// Same, with coordinates wrapped periodically into the window (torus).
OperatorField periodic_field_of(std::shared_ptr<const Realization> realization);

void save_realization(const Realization& r, const std::filesystem::path& path);
Realization load_realization(const std::filesystem::path& path, std::shared_ptr<const TileEnsemble> ensemble);

/// CRC-32 (IEEE) of a byte string.
std::uint32_t crc32(std::string_view bytes);

}  // namespace homoglab
