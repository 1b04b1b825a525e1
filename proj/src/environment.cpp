#include "homoglab/environment.hpp"

#include <boost/crc.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "homoglab/error.hpp"
#include "homoglab/rng.hpp"
#include "homoglab/stencil.hpp"

namespace homoglab {

namespace {

constexpr const char* kRealMagic = "HOMOGLAB-REAL v1";
constexpr std::size_t kEllipticitySamples = 64;

std::int64_t floor_cell(double v) { return static_cast<std::int64_t>(std::floor(v)); }

std::int64_t wrap(std::int64_t v, std::int64_t lo, std::int64_t n) {
    std::int64_t r = (v - lo) % n;
    if (r < 0) r += n;
    return lo + r;
}

class RealizationTiles final : public TileSource {
public:
    RealizationTiles(std::shared_ptr<const Realization> r, bool periodic) : r_(std::move(r)), periodic_(periodic) {}

    const LocalOperator& at(std::span<const double> x) const override {
        if (x.size() != 2) throw InvalidInput("realization fields are two-dimensional");
        std::int64_t i = floor_cell(x[0]);
        std::int64_t j = floor_cell(x[1]);
        const Window& w = r_->window();
        if (periodic_) {
            i = wrap(i, w.x0, w.nx);
            j = wrap(j, w.y0, w.ny);
        }
        return r_->ensemble().tiles()[static_cast<std::size_t>(r_->cell(i, j))];
    }
    bool x_independent() const override { return r_->ensemble().deterministic(); }
    int dim() const override { return 2; }
    double lambda() const override { return r_->ensemble().lambda(); }
    void bounds(std::vector<double>& lo, std::vector<double>& hi) const override {
        const Window& w = r_->window();
        lo = {static_cast<double>(w.x0), static_cast<double>(w.y0)};
        hi = {static_cast<double>(w.x0 + w.nx), static_cast<double>(w.y0 + w.ny)};
        // Keep samples strictly inside the half-open window.
        for (auto& v : hi) v = std::nextafter(v, -INFINITY);
    }

private:
    std::shared_ptr<const Realization> r_;
    bool periodic_;
};

}  // namespace

TileEnsemble::TileEnsemble(std::vector<LocalOperator> tiles, std::vector<double> probs, double lambda, double k0)
    : tiles_(std::move(tiles)), probs_(std::move(probs)), lambda_(lambda), k0_(k0) {
    if (tiles_.empty()) throw ValidationError("tiles: ensemble needs at least one tile");
    if (probs_.size() != tiles_.size())
        throw ValidationError("probs: expected " + std::to_string(tiles_.size()) + " probabilities");
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("probs: probabilities must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("probs: probabilities sum to " + std::to_string(total));
    if (!(lambda_ > 1.0)) throw ValidationError("lambda: ellipticity must exceed 1");
    if (!(k0_ >= 0.0)) throw ValidationError("k0: bound must be nonnegative");
    cumulative_.resize(probs_.size());
    std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
    cumulative_.back() = 1.0;

    const int d = tiles_.front().dim();
    for (std::size_t t = 0; t < tiles_.size(); ++t) {
        const auto& tile = tiles_[t];
        const std::string name = "tiles[" + std::to_string(t) + "]";
        if (tile.dim() != d) throw ValidationError(name + ": dimension mismatch");
        if (tile.lambda() > lambda_ + 1e-12) throw ValidationError(name + ": ellipticity exceeds ensemble lambda");
        if (ellipticity_report(tile, kEllipticitySamples, 17 + t).max_violation > 0.0)
            throw ValidationError(name + ": violates uniform ellipticity");
        if (std::abs(tile.at_zero()) > k0_ + 1e-12) throw ValidationError(name + ": |F(0)| exceeds k0");
        if (d == 2) {
            for (const auto& piece : tile.linear_pieces()) {
                if (!stencil_weights(piece.a))
                    throw ValidationError(name + ": coefficient " + piece.a.to_string() +
                                          " is not decomposable over the monotone stencil");
            }
        }
    }
}

bool TileEnsemble::deterministic() const {
    int support = 0;
    for (double p : probs_) support += p > 0.0;
    return support <= 1;
}

int TileEnsemble::draw(double uniform) const {
    for (std::size_t t = 0; t < cumulative_.size(); ++t) {
        if (uniform < cumulative_[t] && probs_[t] > 0.0) return static_cast<int>(t);
    }
    // uniform sits above every cumulative value only through rounding; take the last supported tile.
    for (std::size_t t = probs_.size(); t-- > 0;)
        if (probs_[t] > 0.0) return static_cast<int>(t);
    return 0;
}

TileEnsemble TileEnsemble::checkerboard(double c) {
    return TileEnsemble({LocalOperator::linear(SymMatrix::identity(2), c, 4.0),
                         LocalOperator::linear(SymMatrix::identity(2, 4.0), c, 4.0)},
                        {0.5, 0.5}, 4.0, std::abs(c));
}

TileEnsemble TileEnsemble::checkerboard_bellman() {
    const LinearOp soft{SymMatrix::identity(2), 0.0};
    const LinearOp stiff{SymMatrix::identity(2, 4.0), 0.0};
    return TileEnsemble({LocalOperator::linear(soft.a, 0.0, 4.0),
                         LocalOperator::bellman({soft, stiff}, BellmanMode::Min, 4.0)},
                        {0.5, 0.5}, 4.0, 0.0);
}

TileEnsemble TileEnsemble::single(LocalOperator tile, double lambda, double k0) {
    return TileEnsemble({std::move(tile)}, {1.0}, lambda, k0);
}

Realization::Realization(std::shared_ptr<const TileEnsemble> ensemble, Window window, std::uint64_t seed,
                         std::uint64_t index, std::vector<int> cells)
    : ensemble_(std::move(ensemble)), window_(window), seed_(seed), index_(index), cells_(std::move(cells)) {
    if (!ensemble_) throw InvalidInput("Realization: null ensemble");
    if (window_.nx <= 0 || window_.ny <= 0) throw InvalidInput("Realization: empty window");
    if (cells_.size() != window_.cell_count()) throw InvalidInput("Realization: cell count does not match window");
    for (int c : cells_) {
        if (c < 0 || static_cast<std::size_t>(c) >= ensemble_->size())
            throw InvalidInput("Realization: tile index out of range");
    }
}

int Realization::cell(std::int64_t i, std::int64_t j) const {
    if (!window_.contains(i, j))
        throw OutOfWindow("cell (" + std::to_string(i) + ", " + std::to_string(j) + ") outside realization window");
    return cells_[static_cast<std::size_t>((j - window_.y0) * window_.nx + (i - window_.x0))];
}

Realization Realization::shifted(std::int64_t zx, std::int64_t zy) const {
    Window w = window_;
    w.x0 += zx;
    w.y0 += zy;
    return Realization(ensemble_, w, seed_, index_, cells_);
}

Realization sample_realization(std::shared_ptr<const TileEnsemble> ensemble, const Window& window, std::uint64_t seed,
                               std::uint64_t index) {
    if (window.nx <= 0 || window.ny <= 0) throw InvalidInput("sample_realization: empty window");
    std::vector<int> cells(window.cell_count());
    for (std::int64_t j = 0; j < window.ny; ++j) {
        for (std::int64_t i = 0; i < window.nx; ++i) {
            const auto gx = static_cast<std::uint64_t>(window.x0 + i);
            const auto gy = static_cast<std::uint64_t>(window.y0 + j);
            cells[static_cast<std::size_t>(j * window.nx + i)] = ensemble->draw(to_unit(hash_key({seed, index, gx, gy})));
        }
    }
    return Realization(std::move(ensemble), window, seed, index, std::move(cells));
}

OperatorField field_of(std::shared_ptr<const Realization> realization) {
    return OperatorField(std::make_shared<RealizationTiles>(std::move(realization), false));
}

OperatorField periodic_field_of(std::shared_ptr<const Realization> realization) {
    return OperatorField(std::make_shared<RealizationTiles>(std::move(realization), true));
}

std::uint32_t crc32(std::string_view bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

void save_realization(const Realization& r, const std::filesystem::path& path) {
    std::ostringstream body;
    const Window& w = r.window();
    body << kRealMagic << '\n';
    body << 2 << ' ' << r.seed() << ' ' << r.index() << ' ' << w.x0 << ' ' << w.y0 << ' ' << w.nx << ' ' << w.ny
         << '\n';
    for (std::int64_t j = 0; j < w.ny; ++j) {
        for (std::int64_t i = 0; i < w.nx; ++i) body << (i ? " " : "") << r.cells()[j * w.nx + i];
        body << '\n';
    }
    const std::string text = body.str();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", crc32(text));
    out << text << "CRC32 " << crc << '\n';
    if (!out) throw FormatError("write failed for " + path.string());
}

Realization load_realization(const std::filesystem::path& path, std::shared_ptr<const TileEnsemble> ensemble) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto first_nl = content.find('\n');
    if (first_nl == std::string::npos || content.substr(0, first_nl) != kRealMagic)
        throw FormatError(path.string() + ": missing '" + std::string(kRealMagic) + "' header");

    const auto crc_pos = content.rfind("CRC32 ");
    if (crc_pos == std::string::npos || (crc_pos > 0 && content[crc_pos - 1] != '\n'))
        throw FormatError(path.string() + ": truncated file (no CRC32 trailer)");
    const std::string body = content.substr(0, crc_pos);

    std::istringstream hs(body.substr(first_nl + 1));
    int d = 0;
    std::uint64_t seed = 0, index = 0;
    Window w;
    if (!(hs >> d >> seed >> index >> w.x0 >> w.y0 >> w.nx >> w.ny)) throw FormatError(path.string() + ": bad header line");
    if (d != 2) throw FormatError(path.string() + ": only d = 2 realizations are supported");
    if (w.nx <= 0 || w.ny <= 0) throw FormatError(path.string() + ": empty window");

    std::vector<int> cells;
    cells.reserve(w.cell_count());
    int v = 0;
    while (hs >> v) cells.push_back(v);
    if (!hs.eof()) throw FormatError(path.string() + ": non-integer tile index");
    if (cells.size() != w.cell_count())
        throw FormatError(path.string() + ": expected " + std::to_string(w.cell_count()) + " cells, found " +
                          std::to_string(cells.size()));

    std::istringstream cs(content.substr(crc_pos + 6));
    std::string hex;
    cs >> hex;
    std::uint32_t stored = 0;
    try {
        stored = static_cast<std::uint32_t>(std::stoul(hex, nullptr, 16));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed CRC32 trailer");
    }
    if (stored != crc32(body)) throw FormatError(path.string() + ": checksum mismatch");
    for (int c : cells) {
        if (c < 0 || static_cast<std::size_t>(c) >= ensemble->size())
            throw FormatError(path.string() + ": tile index out of range for ensemble");
    }
    return Realization(std::move(ensemble), w, seed, index, std::move(cells));
}

}  // namespace homoglab
