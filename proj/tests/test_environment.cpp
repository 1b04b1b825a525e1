#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "homoglab/environment.hpp"
#include "homoglab/error.hpp"
#include "homoglab/rng.hpp"

using namespace homoglab;

namespace {

std::shared_ptr<const TileEnsemble> checkerboard() {
    return std::make_shared<const TileEnsemble>(TileEnsemble::checkerboard());
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("homoglab_env_" + name);
}

}  // namespace

TEST(Ensemble, ValidatesProbabilities) {
    const auto a = LocalOperator::linear(SymMatrix::identity(2), 0.0, 4.0);
    const auto b = LocalOperator::linear(SymMatrix::identity(2, 4.0), 0.0, 4.0);
    try {
        TileEnsemble({a, b}, {0.6, 0.5}, 4.0, 0.0);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("probs"), std::string::npos);
    }
    EXPECT_THROW(TileEnsemble({a, b}, {1.2, -0.2}, 4.0, 0.0), ValidationError);
    EXPECT_THROW(TileEnsemble({a}, {1.0}, 4.0, -1.0), ValidationError);
}

TEST(Ensemble, RejectsNonEllipticOrUnboundedTiles) {
    const auto wide = LocalOperator::linear(SymMatrix::diag({1.0, 6.0}), 0.0, 4.0);
    EXPECT_THROW(TileEnsemble::single(wide, 4.0, 0.0), ValidationError);
    const auto forced = LocalOperator::linear(SymMatrix::identity(2), 2.0, 4.0);
    EXPECT_THROW(TileEnsemble::single(forced, 4.0, 1.0), ValidationError);
    EXPECT_NO_THROW(TileEnsemble::single(forced, 4.0, 2.0));
}

TEST(Ensemble, RejectsStencilIncompatibleCoefficient) {
    // Spectrum in [1, 10] but |a12| > min(a11, a22).
    const SymMatrix a = SymMatrix::from_upper(2, {2.0, 2.1, 7.0});
    const auto tile = LocalOperator::linear(a, 0.0, 10.0);
    ASSERT_EQ(ellipticity_report(tile, 64, 1).max_violation, 0.0);
    try {
        TileEnsemble::single(tile, 10.0, 0.0);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("tiles[0]"), std::string::npos);
    }
}

TEST(Sampling, Deterministic) {
    const auto ens = checkerboard();
    const Window w{-5, 3, 20, 15};
    const auto r1 = sample_realization(ens, w, 42, 7);
    const auto r2 = sample_realization(ens, w, 42, 7);
    EXPECT_EQ(r1.cells(), r2.cells());
    const auto r3 = sample_realization(ens, w, 42, 8);
    EXPECT_NE(r1.cells(), r3.cells());
}

TEST(Sampling, SubWindowsAreConsistent) {
    const auto ens = checkerboard();
    const auto big = sample_realization(ens, Window{0, 0, 30, 30}, 9, 1);
    const auto small = sample_realization(ens, Window{10, 12, 5, 4}, 9, 1);
    for (std::int64_t j = 12; j < 16; ++j)
        for (std::int64_t i = 10; i < 15; ++i) EXPECT_EQ(big.cell(i, j), small.cell(i, j));
}

TEST(Sampling, FrequenciesWithinBinomialBand) {
    const auto a = LocalOperator::linear(SymMatrix::identity(2), 0.0, 4.0);
    const auto b = LocalOperator::linear(SymMatrix::identity(2, 2.0), 0.0, 4.0);
    const auto c = LocalOperator::linear(SymMatrix::identity(2, 4.0), 0.0, 4.0);
    const std::vector<double> probs{0.2, 0.3, 0.5};
    const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble({a, b, c}, probs, 4.0, 0.0));
    const auto r = sample_realization(ens, Window{0, 0, 100, 100}, 123, 0);
    std::vector<double> counts(3, 0.0);
    for (int t : r.cells()) counts[t] += 1.0;
    const double n = 1e4;
    for (int t = 0; t < 3; ++t) {
        const double sigma = std::sqrt(n * probs[t] * (1.0 - probs[t]));
        EXPECT_LE(std::abs(counts[t] - n * probs[t]), 3.0 * sigma) << "tile " << t;
    }
}

TEST(Sampling, DistantCellsUncorrelated) {
    const auto ens = checkerboard();
    const int n = 1000;
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (int k = 0; k < n; ++k) {
        const auto r = sample_realization(ens, Window{0, 0, 6, 6}, 77, static_cast<std::uint64_t>(k));
        const double x = r.cell(0, 0) == 0, y = r.cell(5, 5) == 0;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double rho = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
    EXPECT_LT(std::abs(rho), 0.1);
}

TEST(Sampling, StationaryHistogramsChiSquare) {
    // Tile histograms of two disjoint windows of equal size: chi-square
    // homogeneity statistic below the 1% critical value (1 dof: 6.635).
    const auto ens = checkerboard();
    const auto r = sample_realization(ens, Window{0, 0, 200, 50}, 5, 0);
    double c1[2] = {0, 0}, c2[2] = {0, 0};
    for (std::int64_t j = 0; j < 50; ++j) {
        for (std::int64_t i = 0; i < 100; ++i) {
            c1[r.cell(i, j)] += 1;
            c2[r.cell(i + 100, j)] += 1;
        }
    }
    double chi = 0.0;
    const double total = c1[0] + c1[1] + c2[0] + c2[1];
    for (int t = 0; t < 2; ++t) {
        const double col = c1[t] + c2[t];
        const double e1 = col * (c1[0] + c1[1]) / total, e2 = col * (c2[0] + c2[1]) / total;
        chi += (c1[t] - e1) * (c1[t] - e1) / e1 + (c2[t] - e2) * (c2[t] - e2) / e2;
    }
    EXPECT_LT(chi, 6.635);
}

TEST(Fields, CheckerboardValues) {
    const auto ens = checkerboard();
    const auto r = std::make_shared<const Realization>(sample_realization(ens, Window{-3, -3, 6, 6}, 1, 0));
    const auto f = field_of(r);
    for (double x = -2.9; x < 2.9; x += 0.37) {
        const std::array<double, 2> p{x, 0.5 * x};
        const double v = f.eval(SymMatrix::identity(2), p);
        EXPECT_TRUE(v == -2.0 || v == -8.0) << v;
    }
    const std::array<double, 2> outside{3.5, 0.0};
    EXPECT_THROW(f.eval(SymMatrix::identity(2), outside), OutOfWindow);
}

TEST(Fields, SingleTileIsConstant) {
    const auto tile = LocalOperator::linear(SymMatrix::diag({1.0, 2.0}), 0.5, 4.0);
    const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble::single(tile, 4.0, 1.0));
    const auto r = std::make_shared<const Realization>(sample_realization(ens, Window{0, 0, 3, 3}, 1, 0));
    const auto f = field_of(r);
    const SymMatrix a = SymMatrix::from_upper(2, {0.3, -0.2, 1.1});
    const std::array<double, 2> p{1.7, 2.2};
    EXPECT_EQ(f.eval(a, p), tile(a));
}

TEST(Fields, ShiftedRealizationTranslatesField) {
    const auto ens = checkerboard();
    const auto r = std::make_shared<const Realization>(sample_realization(ens, Window{0, 0, 8, 8}, 3, 0));
    const auto s = std::make_shared<const Realization>(r->shifted(2, -3));
    const auto f = field_of(r), g = field_of(s);
    for (double x = 0.1; x < 7.9; x += 0.53) {
        const std::array<double, 2> p{x, 7.9 - x};
        const std::array<double, 2> q{x + 2, 7.9 - x - 3};
        EXPECT_EQ(f.eval(SymMatrix::identity(2), p), g.eval(SymMatrix::identity(2), q));
    }
}

TEST(Fields, PeriodicWraps) {
    const auto ens = checkerboard();
    const auto r = std::make_shared<const Realization>(sample_realization(ens, Window{0, 0, 4, 4}, 3, 0));
    const auto f = periodic_field_of(r);
    const std::array<double, 2> p{0.5, 1.5}, q{4.5, -2.5};
    EXPECT_EQ(f.eval(SymMatrix::identity(2), p), f.eval(SymMatrix::identity(2), q));
}

TEST(Persistence, RoundTrip) {
    const auto ens = checkerboard();
    const auto r = sample_realization(ens, Window{-2, 1, 7, 5}, 99, 4);
    const auto path = temp_file("roundtrip.txt");
    save_realization(r, path);
    const auto back = load_realization(path, ens);
    EXPECT_EQ(back.cells(), r.cells());
    EXPECT_EQ(back.window(), r.window());
    EXPECT_EQ(back.seed(), 99u);
    EXPECT_EQ(back.index(), 4u);
    std::filesystem::remove(path);
}

TEST(Persistence, WrongMagic) {
    const auto ens = checkerboard();
    const auto path = temp_file("magic.txt");
    {
        std::ofstream out(path);
        out << "HOMOGLAB-REAL v2\n2 1 0 0 0 1 1\n0\nCRC32 00000000\n";
    }
    EXPECT_THROW(load_realization(path, ens), FormatError);
    std::filesystem::remove(path);
}

TEST(Persistence, TruncatedAndCorrupted) {
    const auto ens = checkerboard();
    const auto r = sample_realization(ens, Window{0, 0, 6, 6}, 1, 0);
    const auto path = temp_file("trunc.txt");
    save_realization(r, path);
    std::string text;
    {
        std::ifstream in(path);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream out(path);
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_THROW(load_realization(path, ens), FormatError);

    std::string flipped = text;
    const auto pos = flipped.find('\n', flipped.find('\n') + 1) + 1;
    flipped[pos] = flipped[pos] == '0' ? '1' : '0';
    {
        std::ofstream out(path);
        out << flipped;
    }
    try {
        load_realization(path, ens);
        FAIL() << "expected checksum failure";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST(Rng, CounterStreamsAreReproducible) {
    EXPECT_EQ(hash_key({1, 2, 3}), hash_key({1, 2, 3}));
    EXPECT_NE(hash_key({1, 2, 3}), hash_key({1, 3, 2}));
    const double u = to_unit(hash_key({5}));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
}
