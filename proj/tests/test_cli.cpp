#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "homoglab/config.hpp"
#include "homoglab/error.hpp"
#include "homoglab/run.hpp"
#include "json.hpp"

using namespace homoglab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("homoglab_test_" + name);
    fs::remove_all(d);
    return d;
}

const char* kDeterministicDecay = R"(
[experiment]
kind = mu-decay
seed = 3

[ensemble]
tiles = linear(1, 0, 2, 0.5)
probs = 1
lambda = 4
k0 = 4

[sampling]
n = 3
ms = 0, 1

[mu]
per_unit = 3

[balance]
m = 0
n = 2
)";

int cli(const std::string& args) {
    const std::string cmd = std::string(HOMOGLAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndFractions) {
    const auto c = parse_config(R"(
[experiment]
kind = error-rate
seed = 9
[ensemble]
preset = checkerboard
[sampling]
n = 4
[error]
eps = 1/3, 1/9
effective = linear(1.6, 0, 1.6, 0)
)");
    EXPECT_EQ(c.kind, ExperimentKind::ErrorRate);
    EXPECT_EQ(c.seed, 9u);
    ASSERT_EQ(c.eps.size(), 2u);
    EXPECT_DOUBLE_EQ(c.eps[1], 1.0 / 9);
    EXPECT_EQ(c.ensemble().size(), 2u);
}

TEST(Config, ErrorsNameTheField) {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string base = "[experiment]\nkind = mu\n[ensemble]\ntiles = linear(1,0,1,0); linear(4,0,4,0)\n";
    EXPECT_EQ(message(base + "probs = 0.5, 0.6\n").rfind("probs", 0), 0u);
    EXPECT_EQ(message(base + "probs = 0.5, 0.5\nlambada = 4\n").rfind("lambada", 0), 0u);
    EXPECT_EQ(message(base + "probs = 0.5, 0.5\n[mu]\nbudget = lots\n").rfind("budget", 0), 0u);
    EXPECT_EQ(message(base + "probs = 0.5, 0.5\n[nonsense]\nx = 1\n").rfind("nonsense", 0), 0u);
    EXPECT_EQ(message("[experiment]\nkind = mu\n[ensemble]\ntiles = quadratic(1)\nprobs = 1\n").rfind("tiles", 0), 0u);
    EXPECT_EQ(message("[experiment]\nkind = nope\n").rfind("kind", 0), 0u);
}

TEST(Config, CanonicalIgnoresWorkersAndOut) {
    auto a = parse_config(kDeterministicDecay);
    auto b = a;
    b.workers = 4;
    b.out = "elsewhere";
    EXPECT_EQ(a.run_id(), b.run_id());
    b.seed = 4;
    EXPECT_NE(a.run_id(), b.run_id());
}

TEST(Run, DeterministicDecayHasZeroVariances) {
    const fs::path out = fresh_dir("decay");
    RunOptions opt;
    opt.out = out;
    const auto rec = run(parse_config(kDeterministicDecay), opt);
    EXPECT_EQ(rec.status, "ok");
    const std::string curve = slurp(out / "curve.csv");
    std::istringstream in(curve);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("m,s,N,mean_mu,mean_mustar,m2_mu,m2_mustar,se_", 0), 0u);
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        EXPECT_EQ(cells[11], "0") << line;  // var_mu
        EXPECT_EQ(cells[12], "0") << line;  // var_mustar
        ++rows;
    }
    EXPECT_EQ(rows, 2);
    EXPECT_TRUE(fs::exists(out / "manifest.txt"));
    EXPECT_TRUE(fs::exists(out / "fit.csv"));
    EXPECT_FALSE(fs::exists(out / ".lock"));
    for (const auto& e : fs::directory_iterator(out)) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(Run, RerunIsRefusedUnlessForcedAndIsByteIdentical) {
    const fs::path out = fresh_dir("rerun");
    RunOptions opt;
    opt.out = out;
    const auto cfg = parse_config(kDeterministicDecay);
    run(cfg, opt);
    const std::string first = slurp(out / "curve.csv");
    EXPECT_THROW(run(cfg, opt), ValidationError);
    opt.force = true;
    opt.workers = 2;
    run(cfg, opt);
    EXPECT_EQ(slurp(out / "curve.csv"), first);
    std::ifstream log(out / "runs.log");
    int records = 0;
    for (std::string line; std::getline(log, line);) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["id"], cfg.run_id());
        ++records;
    }
    EXPECT_EQ(records, 2);
}

TEST(Run, LockFileBlocksConcurrentRun) {
    const fs::path out = fresh_dir("lock");
    fs::create_directories(out);
    std::ofstream(out / ".lock") << "";
    RunOptions opt;
    opt.out = out;
    EXPECT_THROW(run(parse_config(kDeterministicDecay), opt), ValidationError);
}

TEST(Run, ManifestEchoesConfig) {
    const fs::path out = fresh_dir("manifest");
    RunOptions opt;
    opt.out = out;
    const auto cfg = parse_config(kDeterministicDecay);
    run(cfg, opt);
    const std::string m = slurp(out / "manifest.txt");
    EXPECT_NE(m.find(cfg.canonical()), std::string::npos);
    EXPECT_NE(m.find(kDeterministicDecay), std::string::npos);
    EXPECT_NE(m.find("run_id = " + cfg.run_id()), std::string::npos);
}

TEST(Svg, PlotIsWellFormed) {
    const auto svg = svg_plot("t<1>", "m", "y", {{"a", {0, 1, 2}, {1.0, 0.1, 0.01}}}, true);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("polyline"), std::string::npos);
    EXPECT_NE(svg.find("t&lt;1&gt;"), std::string::npos);
    EXPECT_THROW(svg_plot("t", "x", "y", {{"a", {0}, {0.0}}}, true), InvalidInput);
}

TEST(Selftest, PassesAndReportsInjectedFailure) {
    const auto ok = selftest();
    EXPECT_TRUE(ok.pass()) << ok.to_text();
    EXPECT_NE(ok.to_text().find("envelope: "), std::string::npos);
    const auto bad = selftest({"envelope-tolerance"});
    EXPECT_FALSE(bad.pass());
    EXPECT_NE(bad.to_text().find("FAIL envelope: kinked example envelope within h^2"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    std::ofstream(dir / "good.ini") << kDeterministicDecay;
    std::ofstream(dir / "bad.ini") << "[experiment]\nkind = mu-decay\n[ensemble]\ntiles = linear(1,0,1,0)\nprobs = 1.1\n";
    EXPECT_EQ(cli("selftest"), 0);
    EXPECT_EQ(cli("selftest --inject envelope-tolerance"), 3);
    EXPECT_EQ(cli("mu-decay --config " + (dir / "good.ini").string() + " --out " + (dir / "run").string()), 0);
    EXPECT_EQ(cli("mu-decay --config " + (dir / "good.ini").string() + " --out " + (dir / "run").string()), 2);
    EXPECT_EQ(cli("mu-decay --config " + (dir / "good.ini").string() + " --out " + (dir / "run").string() + " --force"),
              0);
    EXPECT_EQ(cli("mu-decay --config " + (dir / "bad.ini").string() + " --out " + (dir / "bad").string()), 2);
    EXPECT_EQ(cli("effective --config " + (dir / "good.ini").string() + " --out " + (dir / "x").string()), 2);
    EXPECT_EQ(cli("no-such-command"), 2);
}
