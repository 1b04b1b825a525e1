#include "homoglab/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "homoglab/error.hpp"

namespace homoglab {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double to_double(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    const auto slash = t.find('/');
    if (slash != std::string::npos)
        return to_double(field, t.substr(0, slash)) / to_double(field, t.substr(slash + 1));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
        throw ValidationError(field + ": '" + text + "' is not a finite number");
    return v;
}

long long to_int(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw ValidationError(field + ": '" + text + "' is not an integer");
    return v;
}

bool to_bool(const std::string& field, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    throw ValidationError(field + ": '" + text + "' is not a boolean (true/false)");
}

std::vector<double> to_doubles(const std::string& field, const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(to_double(field, part));
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <class T>
std::string join(const std::vector<T>& xs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << ", ";
        if constexpr (std::is_floating_point_v<T>)
            os << fmt(xs[i]);
        else
            os << xs[i];
    }
    return os.str();
}

class TileParser {
public:
    TileParser(const std::string& text, double lambda) : s_(text), lambda_(lambda) {}

    LocalOperator parse() {
        auto op = tile();
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing text");
        return op;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ValidationError("tiles: " + what + " at position " + std::to_string(pos_) + " in '" + s_ + "'");
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    void expect(char c) {
        skip();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    std::string word() {
        skip();
        const std::size_t b = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-' ||
                                    s_[pos_] == '+' || s_[pos_] == '_'))
            ++pos_;
        return s_.substr(b, pos_ - b);
    }
    double number() {
        skip();
        const std::size_t b = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ')') ++pos_;
        return to_double("tiles", s_.substr(b, pos_ - b));
    }
    LinearOp linear_args() {
        expect('(');
        double v[4];
        for (int k = 0; k < 4; ++k) {
            if (k) expect(',');
            v[k] = number();
        }
        expect(')');
        return LinearOp{SymMatrix::from_upper(2, {v[0], v[1], v[2]}), v[3]};
    }
    LocalOperator tile() {
        const std::string name = word();
        if (name == "linear") {
            const auto l = linear_args();
            return LocalOperator::linear(l.a, l.c, lambda_);
        }
        if (name == "bellman-min" || name == "bellman-max") {
            expect('(');
            std::vector<LinearOp> children;
            do {
                if (word() != "linear") fail("bellman children must be linear(...)");
                children.push_back(linear_args());
            } while (accept(','));
            expect(')');
            return LocalOperator::bellman(std::move(children), name == "bellman-min" ? BellmanMode::Min : BellmanMode::Max,
                                          lambda_);
        }
        if (name == "pucci+" || name == "pucci-") {
            expect('(');
            const double c = number();
            expect(')');
            return LocalOperator::pucci_shift(name == "pucci+" ? PucciSign::Plus : PucciSign::Minus, lambda_, c);
        }
        fail("unknown tile kind '" + name + "'");
    }

    std::string s_;
    double lambda_;
    std::size_t pos_ = 0;
};

// Known keys per section.
const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"experiment", {"kind", "seed", "workers", "out"}},
        {"ensemble", {"preset", "tiles", "probs", "lambda", "k0", "dim"}},
        {"operator", {"a"}},
        {"sampling", {"n", "ms", "s"}},
        {"mu", {"per_unit", "optimize", "budget", "cert_tol", "cubes"}},
        {"balance", {"m", "n", "tol", "s_hat"}},
        {"cell", {"deltas", "tiles", "per_unit", "n"}},
        {"error", {"eps", "box", "f", "g", "effective", "points_per_cell"}},
        {"envelope", {"grid", "slopes"}},
    };
    return keys;
}

}  // namespace

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::EnvelopeCheck: return "envelope-check";
        case ExperimentKind::Mu: return "mu";
        case ExperimentKind::MuDecay: return "mu-decay";
        case ExperimentKind::Effective: return "effective";
        case ExperimentKind::ErrorRate: return "error-rate";
    }
    return "?";
}

ExperimentKind parse_kind(const std::string& name) {
    for (auto k : {ExperimentKind::EnvelopeCheck, ExperimentKind::Mu, ExperimentKind::MuDecay, ExperimentKind::Effective,
                   ExperimentKind::ErrorRate})
        if (kind_name(k) == name) return k;
    throw ValidationError("kind: unknown experiment kind '" + name + "'");
}

LocalOperator parse_tile(const std::string& text, double lambda) {
    try {
        return TileParser(text, lambda).parse();
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(std::string("tiles: ") + e.what());
    }
}

std::vector<LocalOperator> parse_tiles(const std::string& text, double lambda) {
    std::vector<LocalOperator> out;
    for (const auto& part : split(text, ';'))
        if (!part.empty()) out.push_back(parse_tile(part, lambda));
    if (out.empty()) throw ValidationError("tiles: no tiles given");
    return out;
}

TileEnsemble ExperimentConfig::ensemble() const {
    if (!preset.empty()) {
        if (preset == "checkerboard") return TileEnsemble::checkerboard();
        if (preset == "checkerboard-bellman") return TileEnsemble::checkerboard_bellman();
        throw ValidationError("preset: unknown preset '" + preset + "'");
    }
    return TileEnsemble(parse_tiles(tiles_text, lambda), probs, lambda, k0);
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    os << "kind = " << kind_name(kind) << '\n';
    os << "seed = " << seed << '\n';
    os << "preset = " << preset << '\n';
    os << "tiles = " << tiles_text << '\n';
    os << "probs = " << join(probs) << '\n';
    os << "lambda = " << fmt(lambda) << '\n';
    os << "k0 = " << fmt(k0) << '\n';
    os << "dim = " << dim << '\n';
    os << "a = " << fmt(a(0, 0)) << ", " << fmt(a(0, 1)) << ", " << fmt(a(1, 1)) << '\n';
    os << "n = " << n << '\n';
    os << "ms = " << join(ms) << '\n';
    os << "s = " << join(ss) << '\n';
    os << "mu.per_unit = " << mu_per_unit << '\n';
    os << "mu.optimize = " << (mu_optimize ? "true" : "false") << '\n';
    os << "mu.budget = " << mu_budget << '\n';
    os << "mu.cert_tol = " << fmt(mu_cert_tol) << '\n';
    os << "mu.cubes = " << (mu_all_cubes ? "all" : "center") << '\n';
    os << "balance.m = " << balance_m << '\n';
    os << "balance.n = " << balance_n << '\n';
    os << "balance.tol = " << fmt(balance_tol) << '\n';
    os << "balance.s_hat = " << (s_hat ? fmt(*s_hat) : std::string("auto")) << '\n';
    os << "cell.deltas = " << join(deltas) << '\n';
    os << "cell.tiles = " << cell_tiles << '\n';
    os << "cell.per_unit = " << cell_per_unit << '\n';
    os << "cell.n = " << cell_n << '\n';
    os << "error.eps = " << join(eps) << '\n';
    os << "error.box = " << fmt(box.x0) << ", " << fmt(box.y0) << ", " << fmt(box.side) << '\n';
    os << "error.f = " << fmt(f) << '\n';
    os << "error.g = " << fmt(g) << '\n';
    os << "error.effective = " << effective << '\n';
    os << "error.points_per_cell = " << points_per_cell << '\n';
    os << "envelope.grid = " << envelope_grid << '\n';
    os << "envelope.slopes = " << envelope_slopes << '\n';
    return os.str();
}

std::string ExperimentConfig::run_id() const {
    const std::string c = canonical();
    const std::uint64_t hi = crc32(c), lo = crc32(c + "#" + std::to_string(c.size()));
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << hi << std::setw(8) << std::setfill('0') << lo;
    return os.str();
}

ExperimentConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig c;
    c.source = text;
    std::map<std::string, std::string> v;
    for (const auto& [section, body] : tree) {
        const auto it = schema().find(section);
        if (!body.data().empty()) throw ValidationError(section + ": keys must appear under a [section] header");
        if (it == schema().end()) throw ValidationError(section + ": unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) throw ValidationError(key + ": unknown key in [" + section + "]");
            v[section + "." + key] = value.get_value<std::string>();
        }
    }
    auto has = [&](const std::string& k) { return v.count(k) > 0; };
    auto get = [&](const std::string& k) { return trim(v.at(k)); };
    auto name = [](const std::string& k) { return k.substr(k.find('.') + 1); };
    auto int_in = [&](const std::string& k, int& dst, long long lo, long long hi) {
        if (!has(k)) return;
        const long long x = to_int(name(k), get(k));
        if (x < lo || x > hi)
            throw ValidationError(name(k) + ": " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
        dst = static_cast<int>(x);
    };
    auto positive = [&](const std::string& k, double& dst) {
        if (!has(k)) return;
        dst = to_double(name(k), get(k));
        if (!(dst > 0.0)) throw ValidationError(name(k) + ": must be positive");
    };

    if (!has("experiment.kind")) throw ValidationError("kind: missing [experiment] kind");
    c.kind = parse_kind(get("experiment.kind"));
    if (has("experiment.seed")) {
        const long long s = to_int("seed", get("experiment.seed"));
        if (s < 0) throw ValidationError("seed: must be nonnegative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    int_in("experiment.workers", c.workers, 1, 1024);
    if (has("experiment.out")) c.out = get("experiment.out");

    if (has("ensemble.preset")) c.preset = get("ensemble.preset");
    if (has("ensemble.tiles")) c.tiles_text = get("ensemble.tiles");
    if (has("ensemble.probs")) c.probs = to_doubles("probs", get("ensemble.probs"));
    positive("ensemble.lambda", c.lambda);
    if (has("ensemble.k0")) c.k0 = to_double("k0", get("ensemble.k0"));
    int_in("ensemble.dim", c.dim, 1, 16);

    if (has("operator.a")) {
        const auto e = to_doubles("a", get("operator.a"));
        if (e.size() != 3) throw ValidationError("a: expected three entries a11, a12, a22");
        c.a = SymMatrix::from_upper(2, {e[0], e[1], e[2]});
    }

    int_in("sampling.n", c.n, 1, 100000000);
    if (has("sampling.ms")) {
        c.ms.clear();
        for (const auto& p : split(get("sampling.ms"), ',')) {
            const long long m = to_int("ms", p);
            if (m < 0 || m > 8) throw ValidationError("ms: level " + std::to_string(m) + " outside [0, 8]");
            c.ms.push_back(static_cast<int>(m));
        }
    }
    if (has("sampling.s")) c.ss = to_doubles("s", get("sampling.s"));

    int_in("mu.per_unit", c.mu_per_unit, 1, 1000);
    if (has("mu.optimize")) c.mu_optimize = to_bool("optimize", get("mu.optimize"));
    int_in("mu.budget", c.mu_budget, 0, 1000000);
    positive("mu.cert_tol", c.mu_cert_tol);
    if (has("mu.cubes")) {
        const auto t = get("mu.cubes");
        if (t != "center" && t != "all") throw ValidationError("cubes: expected 'center' or 'all'");
        c.mu_all_cubes = t == "all";
    }

    int_in("balance.m", c.balance_m, 0, 8);
    int_in("balance.n", c.balance_n, 0, 100000000);
    positive("balance.tol", c.balance_tol);
    if (has("balance.s_hat")) {
        const auto t = get("balance.s_hat");
        if (t != "auto") c.s_hat = to_double("s_hat", t);
    }

    if (has("cell.deltas")) c.deltas = to_doubles("deltas", get("cell.deltas"));
    int_in("cell.tiles", c.cell_tiles, 1, 100000);
    int_in("cell.per_unit", c.cell_per_unit, 1, 1000);
    int_in("cell.n", c.cell_n, 0, 100000000);

    if (has("error.eps")) {
        c.eps_text = split(get("error.eps"), ',');
        c.eps = to_doubles("eps", get("error.eps"));
    }
    if (has("error.box")) {
        const auto b = to_doubles("box", get("error.box"));
        if (b.size() != 3) throw ValidationError("box: expected x0, y0, side");
        c.box = Box{b[0], b[1], b[2]};
    }
    if (has("error.f")) c.f = to_double("f", get("error.f"));
    if (has("error.g")) c.g = to_double("g", get("error.g"));
    if (has("error.effective")) c.effective = get("error.effective");
    int_in("error.points_per_cell", c.points_per_cell, 1, 10000);
    int_in("envelope.grid", c.envelope_grid, 3, 4097);
    int_in("envelope.slopes", c.envelope_slopes, 1, 1000000000);

    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

void validate(const ExperimentConfig& c) {
    if (c.dim != 2) throw ValidationError("dim: only d = 2 is supported by the spatial modules");
    if (c.kind == ExperimentKind::EnvelopeCheck) return;
    if (!c.preset.empty() && !c.tiles_text.empty())
        throw ValidationError("preset: give either preset or tiles, not both");
    if (c.preset.empty() && c.tiles_text.empty()) throw ValidationError("tiles: no ensemble given (preset or tiles)");
    if (!c.preset.empty() && !c.probs.empty()) throw ValidationError("probs: presets fix their own probabilities");
    const TileEnsemble ens = c.ensemble();
    if (c.ms.empty()) throw ValidationError("ms: at least one level is required");
    if (!(c.balance_tol > 0.0)) throw ValidationError("tol: must be positive");
    switch (c.kind) {
        case ExperimentKind::Mu:
            if (c.ss.empty()) throw ValidationError("s: at least one shift is required");
            if (c.n < 1) throw ValidationError("n: at least one realization is required");
            break;
        case ExperimentKind::MuDecay:
            if (c.n < 2) throw ValidationError("n: at least two realizations are required");
            if (c.ms.size() < 2) throw ValidationError("ms: the decay fit needs at least two levels");
            break;
        case ExperimentKind::Effective:
            if (c.n < 2 && c.balance_n < 2) throw ValidationError("n: at least two realizations are required");
            break;
        case ExperimentKind::ErrorRate:
            if (c.n < 1) throw ValidationError("n: at least one realization is required");
            if (c.points_per_cell < 9) throw ValidationError("points_per_cell: at least 9 grid points per eps-cell");
            if (c.eps.empty()) throw ValidationError("eps: at least one value is required");
            for (double e : c.eps) {
                if (!(e > 0.0)) throw ValidationError("eps: values must be positive");
                const double cells = c.box.side / e * c.points_per_cell;
                if (std::abs(cells - std::round(cells)) > 1e-6)
                    throw ValidationError("eps: box side " + fmt(c.box.side) + " is not a whole number of grid steps at eps = " +
                                          fmt(e));
            }
            if (!(c.box.side > 0.0)) throw ValidationError("box: side must be positive");
            if (c.effective != "cell") parse_tile(c.effective, c.lambda);
            else {
                for (std::size_t t = 0; t < ens.size(); ++t)
                    if (!std::holds_alternative<LinearOp>(ens.tiles()[t].kind()))
                        throw ValidationError("effective: 'cell' assembles the effective operator by linearity and "
                                              "needs linear tiles; give effective = linear(...) instead");
            }
            break;
        case ExperimentKind::EnvelopeCheck: break;
    }
    if (c.kind == ExperimentKind::Effective || c.kind == ExperimentKind::ErrorRate) {
        if (c.deltas.size() < 1) throw ValidationError("deltas: at least one value is required");
        for (std::size_t i = 0; i < c.deltas.size(); ++i) {
            if (!(c.deltas[i] > 0.0)) throw ValidationError("deltas: values must be positive");
            if (i && !(c.deltas[i] < c.deltas[i - 1])) throw ValidationError("deltas: schedule must decrease");
        }
    }
}

}  // namespace homoglab
