#include "spindyn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "spindyn/dtwa.hpp"
#include "spindyn/ed.hpp"
#include "spindyn/hamiltonian.hpp"
#include "spindyn/ising_oracle.hpp"
#include "spindyn/mlmctdh/analysis.hpp"
#include "spindyn/mlmctdh/propagator.hpp"
#include "spindyn/mlmctdh/tree_operator.hpp"

namespace spindyn::harness {

namespace {

namespace pt = boost::property_tree;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    boost::split(parts, text, boost::is_any_of(", \t"), boost::token_compress_on);
    parts.erase(std::remove(parts.begin(), parts.end(), std::string{}), parts.end());
    return parts;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T value{};
    is >> value;
    if (!is || !(is >> std::ws).eof()) throw ConfigError("bad value for '" + key + "': '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const auto t = boost::to_lower_copy(text);
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    throw ConfigError("bad boolean for '" + key + "': '" + text + "'");
}

// shortest form that reads back to the same double
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"run", {"name", "output", "backends", "t_max", "t_step", "ed_max_sites"}},
        {"lattice", {"geometry", "extents"}},
        {"model", {"kind", "alpha", "J", "mode"}},
        {"mlmctdh", {"tree", "rtol", "atol", "regularization", "seed_unoccupied", "plaquette"}},
        {"dtwa", {"n_t", "dt", "seed"}},
        {"disorder", {"realizations", "base_seed"}},
    };
    return keys;
}

void write_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const auto tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + tmp);
        os << content;
        if (!os.flush()) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, target);
}

std::array<int, 2> leaf_plaquette(const RunConfig& c, int leaf_size) {
    if (c.plaquette) return *c.plaquette;
    if (leaf_size == 4) return {2, 2};
    if (c.extents[0] % leaf_size == 0) return {leaf_size, 1};
    throw ConfigError("cannot map leaves of " + std::to_string(leaf_size) + " sites onto the lattice; set plaquette");
}

mlmctdh::TreeTopology topology_for(const RunConfig& c) {
    auto top = mlmctdh::parse_tree(c.tree);
    if (top.site_count() != c.site_count())
        throw ConfigError("tree '" + c.tree + "' covers " + std::to_string(top.site_count()) + " sites, lattice has " +
                          std::to_string(c.site_count()));
    if (c.geometry == Geometry::square2d) {
        const int leaf_size = top.node(top.node_count() - 1).leg_count();
        const auto p = leaf_plaquette(c, leaf_size);
        if (p[0] * p[1] != leaf_size)
            throw ConfigError("plaquette " + std::to_string(p[0]) + "x" + std::to_string(p[1]) +
                              " does not match the leaf size " + std::to_string(leaf_size));
        top.set_site_order(mlmctdh::plaquette_order(build_lattice(c.geometry, c.extents), p[0], p[1]));
    }
    return top;
}

bool ising_couplings(const RunConfig& c) {
    return c.model == Model::disordered_ising || (c.J[0] == 0.0 && c.J[1] == 0.0);
}

ObservableSeries make_series(const std::vector<double>& t) {
    ObservableSeries s;
    s.t = t;
    s.sx.reserve(t.size());
    s.dsx.reserve(t.size());
    return s;
}

void tag(ObservableSeries& s, const RunConfig& c, Backend b, const CouplingMatrix& cpl) {
    s.metadata["backend"] = to_string(b);
    s.metadata["name"] = c.name;
    s.metadata["model"] = to_string(c.model);
    s.metadata["L"] = std::to_string(c.site_count());
    s.metadata["alpha"] = format_double(c.alpha);
    s.metadata["couplings"] = fingerprint(cpl);
    if (cpl.seed) s.metadata["seed"] = std::to_string(*cpl.seed);
    s.metadata["realizations"] = "1";
}

ObservableSeries run_oracle(const CouplingMatrix& cpl, const std::vector<double>& t) {
    return oracle::collective_series(oracle::IsingCase(cpl), t);
}

ObservableSeries run_ed(const RunConfig& c, const CouplingMatrix& cpl, const std::vector<double>& t,
                        BackendDiagnostics& diag) {
    const auto terms = heisenberg_terms(cpl);
    const CompiledTerms h(terms);
    const auto block = quarter_block(c);
    auto s = make_series(t);
    s.svn.emplace();
    double e0 = 0.0, drift = 0.0, norm_err = 0.0;
    bool first = true;
    ed::propagate_each(ed::prepare_x_polarized(c.site_count()), terms, t, [&](double, const ed::StateVector& psi) {
        const auto cx = ed::collective_x(psi);
        s.sx.push_back(cx.sx);
        s.dsx.push_back(cx.dsx());
        s.svn->push_back(ed::von_neumann_entropy(ed::reduced_density(psi, block)));
        const double e = ed::expectation(psi, h);
        if (first) e0 = e;
        first = false;
        drift = std::max(drift, std::abs(e - e0));
        norm_err = std::max(norm_err, std::abs(psi.norm() - 1.0));
    });
    diag.values["max_energy_drift"] = drift;
    diag.values["max_norm_error"] = norm_err;
    return s;
}

ObservableSeries run_mlmctdh(const RunConfig& c, const CouplingMatrix& cpl, const std::vector<double>& t,
                             BackendDiagnostics& diag) {
    const auto terms = heisenberg_terms(cpl);
    const auto top = topology_for(c);
    auto state = mlmctdh::build_initial_state(top);
    if (c.seed_unoccupied) mlmctdh::TreeOperator(top, terms).seed_unoccupied(state);
    const auto block = quarter_block(c);
    const auto cut = top.node_for_sites(block);
    auto s = make_series(t);
    if (cut) s.svn.emplace();
    const bool truncated = !mlmctdh::truncated_tail(state).empty();
    if (truncated) s.natpop_tail.emplace();

    mlmctdh::PropagationOptions opt;
    opt.rtol = c.rtol;
    opt.atol = c.atol;
    opt.regularization = c.regularization;
    const auto report = mlmctdh::propagate_each(state, terms, t, [&](const mlmctdh::TreeState& st) {
        const auto cx = mlmctdh::collective_x(st);
        s.sx.push_back(cx.sx);
        s.dsx.push_back(cx.dsx());
        if (cut) s.svn->push_back(mlmctdh::entanglement_entropy(st, *cut));
        if (truncated) {
            const auto tail = mlmctdh::truncated_tail(st);
            s.natpop_tail->push_back(*std::max_element(tail.begin(), tail.end()));
        }
    }, opt);
    s.metadata["tree"] = c.tree;
    s.metadata["rtol"] = format_double(c.rtol);
    s.metadata["regularization"] = format_double(c.regularization);
    if (!cut) s.metadata["SvN"] = "quarter block is not a tree cut";
    diag.values["accepted_steps"] = static_cast<double>(report.accepted_steps);
    diag.values["rejected_steps"] = static_cast<double>(report.rejected_steps);
    diag.values["rhs_evaluations"] = static_cast<double>(report.rhs_evaluations);
    diag.values["max_orthonormality_residual"] = report.max_orthonormality_residual;
    diag.values["max_norm_error"] = report.max_norm_error;
    diag.values["max_norm_repair"] = report.max_norm_repair;
    diag.values["max_energy_drift"] = report.max_energy_drift;
    diag.values["min_population"] = report.min_population;
    diag.values["regularized_time"] = report.regularized_time;
    return s;
}

ObservableSeries run_dtwa(const RunConfig& c, const CouplingMatrix& cpl, const std::vector<double>& t,
                          BackendDiagnostics& diag, int realization, int workers) {
    dtwa::ClassicalHamiltonian h(cpl);
    dtwa::EnsembleSpec spec;
    spec.n_t = c.n_t;
    spec.seed = c.dtwa_seed + static_cast<std::uint64_t>(realization);
    spec.dt = c.dtwa_dt;
    spec.workers = std::max(1, workers);
    auto r = dtwa::run_ensemble(h, spec, t);
    diag.values["max_norm_drift"] = r.max_norm_drift;
    diag.values["max_energy_drift"] = r.max_energy_drift;
    diag.values["unstable_trajectories"] = static_cast<double>(r.unstable_trajectories.size());
    return std::move(r.series);
}

ObservableSeries run_one(const RunConfig& c, Backend b, int realization, BackendDiagnostics* diag, int workers) {
    const auto start = Clock::now();
    const auto cpl = couplings_for(c, realization);
    const auto t = time_grid(c);
    BackendDiagnostics local;
    ObservableSeries s;
    switch (b) {
        case Backend::oracle: s = run_oracle(cpl, t); break;
        case Backend::ed: s = run_ed(c, cpl, t, local); break;
        case Backend::mlmctdh: s = run_mlmctdh(c, cpl, t, local); break;
        case Backend::dtwa: s = run_dtwa(c, cpl, t, local, realization, workers); break;
    }
    tag(s, c, b, cpl);
    local.seconds = seconds_since(start);
    if (diag) *diag = std::move(local);
    return s;
}

// Runs jobs on a fixed pool; results land in per-job slots, so the outcome
// does not depend on scheduling. The lowest-index failure is rethrown.
template <class Job>
void parallel_for(int count, int workers, const Job& job) {
    std::vector<std::exception_ptr> errors(count);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int k = next++; k < count; k = next++) {
            try {
                job(k);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int n = std::clamp(workers, 1, std::max(count, 1));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string summary_json(const RunConfig& c, const RunResult& r) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["sites"] = c.site_count();
    j["grid_points"] = time_grid(c).size();
    j["realizations"] = c.realizations;
    auto& backends = j["backends"];
    for (const auto& [b, d] : r.diagnostics) {
        nlohmann::ordered_json e;
        e["seconds"] = d.seconds;
        for (const auto& [k, v] : d.values) e[k] = v;
        backends[to_string(b)] = e;
    }
    auto& dev = j["max_deviation"];
    dev = nlohmann::ordered_json::object();
    for (const auto& [pair, cols] : r.deviations) dev[pair] = cols;
    std::ostringstream cfg;
    write_config(cfg, c);
    j["config"] = cfg.str();
    return j.dump(2) + "\n";
}

}  // namespace

std::string to_string(Model m) {
    switch (m) {
        case Model::ising: return "ising";
        case Model::xyz: return "xyz";
        case Model::disordered_ising: return "disordered_ising";
    }
    return "?";
}

Model parse_model(const std::string& text) {
    if (text == "ising") return Model::ising;
    if (text == "xyz") return Model::xyz;
    if (text == "disordered_ising" || text == "disordered") return Model::disordered_ising;
    throw ConfigError("unknown model '" + text + "'");
}

std::string to_string(Backend b) {
    switch (b) {
        case Backend::mlmctdh: return "mlmctdh";
        case Backend::dtwa: return "dtwa";
        case Backend::ed: return "ed";
        case Backend::oracle: return "oracle";
    }
    return "?";
}

Backend parse_backend(const std::string& text) {
    if (text == "mlmctdh") return Backend::mlmctdh;
    if (text == "dtwa") return Backend::dtwa;
    if (text == "ed") return Backend::ed;
    if (text == "oracle") return Backend::oracle;
    throw ConfigError("unknown backend '" + text + "'");
}

int RunConfig::site_count() const {
    int n = 1;
    for (int e : extents) n *= e;
    return n;
}

RunConfig read_config(std::istream& is) {
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        const auto it = known_keys().find(section);
        if (it == known_keys().end()) throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return boost::trim_copy(*v);
        return std::nullopt;
    };

    RunConfig c;
    if (auto v = get("run.name")) c.name = *v;
    if (auto v = get("run.output")) c.output = *v;
    if (auto v = get("run.backends")) {
        c.backends.clear();
        for (const auto& b : split_list(*v)) c.backends.push_back(parse_backend(b));
    }
    if (auto v = get("run.t_max")) c.t_max = parse_number<double>("t_max", *v);
    if (auto v = get("run.t_step")) c.t_step = parse_number<double>("t_step", *v);
    if (auto v = get("run.ed_max_sites")) c.ed_max_sites = parse_number<int>("ed_max_sites", *v);

    if (auto v = get("lattice.geometry")) c.geometry = parse_geometry(*v);
    if (auto v = get("lattice.extents")) {
        c.extents.clear();
        for (const auto& e : split_list(*v)) c.extents.push_back(parse_number<int>("extents", e));
    }

    if (auto v = get("model.kind")) c.model = parse_model(*v);
    if (c.model == Model::xyz) c.J = {0.5, 1.0, 0.25};
    if (auto v = get("model.alpha")) c.alpha = parse_number<double>("alpha", *v);
    if (auto v = get("model.J")) {
        const auto parts = split_list(*v);
        if (parts.size() != 3) throw ConfigError("J takes three values (Jx Jy Jz)");
        for (int k = 0; k < 3; ++k) c.J[k] = parse_number<double>("J", parts[k]);
    }
    if (auto v = get("model.mode")) c.mode = parse_coupling_mode(*v);
    if (c.model == Model::disordered_ising) c.mode = CouplingMode::disordered_powerlaw;

    if (auto v = get("mlmctdh.tree")) c.tree = *v;
    if (auto v = get("mlmctdh.rtol")) c.rtol = parse_number<double>("rtol", *v);
    if (auto v = get("mlmctdh.atol")) c.atol = parse_number<double>("atol", *v);
    if (auto v = get("mlmctdh.regularization")) c.regularization = parse_number<double>("regularization", *v);
    if (auto v = get("mlmctdh.seed_unoccupied")) c.seed_unoccupied = parse_bool("seed_unoccupied", *v);
    if (auto v = get("mlmctdh.plaquette")) {
        std::vector<std::string> parts;
        boost::split(parts, *v, boost::is_any_of("x"));
        if (parts.size() != 2) throw ConfigError("plaquette is written as BXxBY, e.g. 2x2");
        c.plaquette = std::array<int, 2>{parse_number<int>("plaquette", parts[0]), parse_number<int>("plaquette", parts[1])};
    }

    if (auto v = get("dtwa.n_t")) c.n_t = parse_number<int>("n_t", *v);
    if (auto v = get("dtwa.dt")) c.dtwa_dt = parse_number<double>("dt", *v);
    if (auto v = get("dtwa.seed")) c.dtwa_seed = parse_number<std::uint64_t>("seed", *v);

    if (auto v = get("disorder.realizations")) c.realizations = parse_number<int>("realizations", *v);
    if (auto v = get("disorder.base_seed")) c.base_seed = parse_number<std::uint64_t>("base_seed", *v);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    return read_config(is);
}

void write_config(std::ostream& os, const RunConfig& c) {
    auto join = [](const auto& items, auto fn) {
        std::string out;
        for (const auto& x : items) out += (out.empty() ? "" : ", ") + fn(x);
        return out;
    };
    os << "[run]\nname = " << c.name << "\noutput = " << c.output
       << "\nbackends = " << join(c.backends, [](Backend b) { return to_string(b); })
       << "\nt_max = " << format_double(c.t_max) << "\nt_step = " << format_double(c.t_step)
       << "\ned_max_sites = " << c.ed_max_sites << "\n\n";
    os << "[lattice]\ngeometry = " << spindyn::to_string(c.geometry)
       << "\nextents = " << join(c.extents, [](int e) { return std::to_string(e); }) << "\n\n";
    os << "[model]\nkind = " << to_string(c.model) << "\nalpha = " << format_double(c.alpha) << "\nJ = "
       << format_double(c.J[0]) << " " << format_double(c.J[1]) << " " << format_double(c.J[2])
       << "\nmode = " << spindyn::to_string(c.mode) << "\n\n";
    if (!c.tree.empty()) {
        os << "[mlmctdh]\ntree = " << c.tree << "\nrtol = " << format_double(c.rtol)
           << "\natol = " << format_double(c.atol) << "\nregularization = " << format_double(c.regularization)
           << "\nseed_unoccupied = " << (c.seed_unoccupied ? "true" : "false") << "\n";
        if (c.plaquette) os << "plaquette = " << (*c.plaquette)[0] << "x" << (*c.plaquette)[1] << "\n";
        os << "\n";
    }
    os << "[dtwa]\nn_t = " << c.n_t << "\nseed = " << c.dtwa_seed << "\n";
    if (c.dtwa_dt) os << "dt = " << format_double(*c.dtwa_dt) << "\n";
    os << "\n[disorder]\nrealizations = " << c.realizations << "\nbase_seed = " << c.base_seed << "\n";
}

void validate(const RunConfig& c) {
    const auto lattice = build_lattice(c.geometry, c.extents);
    const int L = lattice.site_count();
    if (!(c.t_max > 0.0) || !(c.t_step > 0.0)) throw ConfigError("t_max and t_step must be positive");
    const double steps = c.t_max / c.t_step;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
        throw ConfigError("t_max must be a whole number of t_step");
    if (c.backends.empty()) throw ConfigError("no backends selected");
    std::set<Backend> seen;
    for (Backend b : c.backends)
        if (!seen.insert(b).second) throw ConfigError("backend '" + to_string(b) + "' listed twice");
    if (c.realizations < 1) throw ConfigError("realizations must be at least 1");
    if (c.realizations > 1 && c.model != Model::disordered_ising)
        throw ConfigError("several realizations only make sense for the disordered model");
    if (c.model == Model::ising && (c.J[0] != 0.0 || c.J[1] != 0.0))
        throw ConfigError("the ising model has Jx = Jy = 0; use kind = xyz");
    for (Backend b : c.backends) {
        switch (b) {
            case Backend::oracle:
                if (!ising_couplings(c)) throw ConfigError("the oracle backend needs Ising couplings (Jx = Jy = 0)");
                break;
            case Backend::ed:
                if (L > c.ed_max_sites)
                    throw ConfigError("ed backend limited to " + std::to_string(c.ed_max_sites) + " sites (L = " +
                                      std::to_string(L) + "); raise ed_max_sites to override");
                break;
            case Backend::mlmctdh:
                if (c.tree.empty()) throw ConfigError("the mlmctdh backend needs a tree");
                topology_for(c);
                if (!(c.rtol > 0.0) || !(c.atol > 0.0) || !(c.regularization > 0.0))
                    throw ConfigError("rtol, atol and regularization must be positive");
                break;
            case Backend::dtwa:
                if (c.n_t < 2) throw ConfigError("dtwa needs n_t >= 2");
                if (c.dtwa_dt && !(*c.dtwa_dt > 0.0)) throw ConfigError("dtwa dt must be positive");
                break;
        }
    }
}

std::vector<double> time_grid(const RunConfig& c) {
    const int n = static_cast<int>(std::lround(c.t_max / c.t_step));
    std::vector<double> t(n + 1);
    for (int k = 0; k <= n; ++k) t[k] = k * c.t_step;
    t.back() = c.t_max;
    return t;
}

CouplingMatrix couplings_for(const RunConfig& c, int realization) {
    const auto lattice = build_lattice(c.geometry, c.extents);
    if (c.model == Model::disordered_ising)
        return sample_disorder(lattice, c.alpha, c.base_seed + static_cast<std::uint64_t>(realization));
    return build_couplings(lattice, c.alpha, c.J, c.mode);
}

std::vector<int> quarter_block(const RunConfig& c) {
    std::vector<int> sites;
    if (c.geometry == Geometry::chain1d) {
        for (int i = 0; i < std::max(1, c.extents[0] / 4); ++i) sites.push_back(i);
    } else {
        const int lx = c.extents[0], ly = c.extents[1];
        for (int y = 0; y < std::max(1, ly / 2); ++y)
            for (int x = 0; x < std::max(1, lx / 2); ++x) sites.push_back(y * lx + x);
    }
    return sites;
}

ObservableSeries run_backend(const RunConfig& config, Backend backend, int realization,
                             BackendDiagnostics* diagnostics) {
    validate(config);
    return run_one(config, backend, realization, diagnostics, 1);
}

std::map<std::string, double> max_deviation(const ObservableSeries& a, const ObservableSeries& b) {
    if (a.t.size() != b.t.size()) throw ConfigError("series have different time grids");
    for (std::size_t k = 0; k < a.t.size(); ++k)
        if (std::abs(a.t[k] - b.t[k]) > 1e-12) throw ConfigError("series have different time grids");
    std::map<std::string, double> out;
    auto cmp = [&](const std::string& name, const std::vector<double>* x, const std::vector<double>* y) {
        if (!x || !y) return;
        double m = 0.0;
        for (std::size_t k = 0; k < x->size(); ++k) m = std::max(m, std::abs((*x)[k] - (*y)[k]));
        out[name] = m;
    };
    cmp("Sx", &a.sx, &b.sx);
    cmp("dSx", &a.dsx, &b.dsx);
    cmp("SvN", a.svn ? &*a.svn : nullptr, b.svn ? &*b.svn : nullptr);
    cmp("natpop_tail", a.natpop_tail ? &*a.natpop_tail : nullptr, b.natpop_tail ? &*b.natpop_tail : nullptr);
    return out;
}

RunResult run(const RunConfig& config, int workers) {
    validate(config);
    if (workers <= 0) workers = default_workers();
    const int nb = static_cast<int>(config.backends.size());
    const int jobs = nb * config.realizations;
    std::vector<ObservableSeries> out(jobs);
    std::vector<BackendDiagnostics> diag(jobs);
    // a lone DTWA job gets the whole pool for its trajectories
    const int inner = jobs == 1 ? workers : 1;
    parallel_for(jobs, workers, [&](int k) {
        const Backend b = config.backends[k % nb];
        out[k] = run_one(config, b, k / nb, &diag[k], inner);
    });

    RunResult result;
    for (int bi = 0; bi < nb; ++bi) {
        const Backend b = config.backends[bi];
        BackendDiagnostics merged;
        std::vector<ObservableSeries> members;
        for (int r = 0; r < config.realizations; ++r) {
            const auto& d = diag[r * nb + bi];
            merged.seconds += d.seconds;
            for (const auto& [k, v] : d.values) {
                // every diagnostic is a worst case or a count
                auto [it, fresh] = merged.values.emplace(k, v);
                if (!fresh) it->second = k == "min_population" ? std::min(it->second, v) : std::max(it->second, v);
            }
            members.push_back(std::move(out[r * nb + bi]));
        }
        ObservableSeries s;
        if (config.realizations == 1) {
            s = std::move(members.front());
        } else {
            s = ensemble_average(members);
            s.metadata = members.front().metadata;
            s.metadata.erase("couplings");
            s.metadata.erase("seed");
            s.metadata["realizations"] = std::to_string(config.realizations);
            s.metadata["seeds"] = std::to_string(config.base_seed) + ".." +
                                  std::to_string(config.base_seed + config.realizations - 1);
        }
        result.series[b] = std::move(s);
        result.diagnostics[b] = std::move(merged);
    }
    for (int i = 0; i < nb; ++i)
        for (int j = i + 1; j < nb; ++j) {
            const Backend a = config.backends[i], b = config.backends[j];
            result.deviations[to_string(a) + "_vs_" + to_string(b)] =
                max_deviation(result.series.at(a), result.series.at(b));
        }

    if (!config.output.empty()) {
        for (const auto& [b, s] : result.series)
            write_csv_atomic((std::filesystem::path(config.output) / (to_string(b) + ".csv")).string(), s);
        write_atomic((std::filesystem::path(config.output) / "summary.json").string(), summary_json(config, result));
    }
    return result;
}

std::string with_bottleneck(const std::string& tree, int m) {
    const auto open = tree.rfind('[');
    const auto close = tree.find(']', open == std::string::npos ? 0 : open);
    if (open == std::string::npos || close == std::string::npos) throw ConfigError("tree '" + tree + "' has no labels");
    return tree.substr(0, open + 1) + std::to_string(m) + tree.substr(close);
}

bool ConvergenceReport::monotone() const {
    return std::none_of(rows.begin(), rows.end(), [](const ConvergenceRow& r) { return r.non_monotone; });
}

ConvergenceReport converge(const RunConfig& config, const std::vector<int>& m_values) {
    validate(config);
    if (std::find(config.backends.begin(), config.backends.end(), Backend::mlmctdh) == config.backends.end())
        throw ConfigError("converge needs the mlmctdh backend");
    if (m_values.empty()) throw ConfigError("converge needs at least one m value");
    ConvergenceReport report;
    if (config.site_count() <= config.ed_max_sites)
        report.reference = Backend::ed;
    else if (ising_couplings(config))
        report.reference = Backend::oracle;
    else
        throw ConfigError("no reference backend: L exceeds the ED ceiling and the model is not Ising");
    const auto ref = run_one(config, report.reference, 0, nullptr, 1);
    for (int m : m_values) {
        RunConfig c = config;
        c.tree = with_bottleneck(config.tree, m);
        topology_for(c);
        ConvergenceRow row;
        row.m = m;
        row.tree = c.tree;
        const auto start = Clock::now();
        const auto s = run_one(c, Backend::mlmctdh, 0, nullptr, 1);
        row.seconds = seconds_since(start);
        const auto dev = max_deviation(s, ref);
        row.max_dev_sx = dev.at("Sx");
        row.max_dev_dsx = dev.at("dSx");
        if (!report.rows.empty()) row.non_monotone = row.max_dev_sx > report.rows.back().max_dev_sx;
        report.rows.push_back(row);
    }
    return report;
}

void write_convergence(std::ostream& os, const ConvergenceReport& report) {
    os << "# reference: " << to_string(report.reference) << "\n";
    os << "m,tree,max_dev_Sx,max_dev_dSx,seconds,non_monotone\n";
    for (const auto& r : report.rows)
        os << r.m << ",\"" << r.tree << "\"," << std::setprecision(6) << r.max_dev_sx << "," << r.max_dev_dsx << ","
           << std::setprecision(3) << r.seconds << "," << (r.non_monotone ? "yes" : "no") << "\n";
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (char p : std::string("abcdefghi")) names.push_back(std::string("fig2") + p);
    for (int f = 3; f <= 6; ++f)
        for (char p : std::string("abcdef")) names.push_back("fig" + std::to_string(f) + p);
    return names;
}

RunConfig preset(const std::string& name) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) throw ConfigError("unknown preset '" + name + "'");
    const int fig = name[3] - '0';
    const int panel = name[4] - 'a';
    const int column = panel % 3;  // panels run over the three columns per row
    const double alphas[] = {0.0, 3.0, 6.0};

    RunConfig c;
    c.name = name;
    c.output = "out/" + name;
    c.t_max = 3.0;
    c.t_step = 0.02;
    c.n_t = 10000;
    // tight enough that the tree energy drift stays below 1e-6 L at L = 32, alpha = 0
    c.rtol = 1e-10;
    c.atol = 1e-12;
    switch (fig) {
        case 2:  // Ising L = 32: Sx (a-c), dSx (d-f), quarter-chain entropy (g-i)
            c.extents = {32};
            c.model = Model::ising;
            c.alpha = alphas[column];
            c.tree = "32->[2]16->[4]4->[12]1";
            c.backends = panel < 6 ? std::vector{Backend::mlmctdh, Backend::oracle, Backend::dtwa}
                                   : std::vector{Backend::mlmctdh};
            break;
        case 3:  // disordered Ising L = 32, 100 realizations: Sx (a-c), dSx (d-f)
        case 4:  // same runs: natural populations (a-c), entropy (d-f)
            c.extents = {32};
            c.model = Model::disordered_ising;
            c.mode = CouplingMode::disordered_powerlaw;
            c.alpha = alphas[column];
            c.tree = column == 0 ? "32->[2]16->[4]4->[22]1" : "32->[2]16->[4]4->[16]1";
            c.realizations = 100;
            c.backends = fig == 3 ? std::vector{Backend::mlmctdh, Backend::oracle, Backend::dtwa}
                                  : std::vector{Backend::mlmctdh};
            break;
        case 5:  // XYZ L = 16: Sx (a-c), dSx (d-f)
            c.extents = {16};
            c.model = Model::xyz;
            c.J = {0.5, 1.0, 0.25};
            c.alpha = alphas[column];
            c.tree = column == 0 ? "16->[2]4->[10]1" : "16->[2]4->[12]1";
            c.backends = {Backend::mlmctdh, Backend::ed, Backend::dtwa};
            break;
        case 6:  // nearest neighbour: 1D Ising L = 128, 2D Ising 4x4, 2D XYZ 4x4
            c.mode = CouplingMode::nearest_neighbor;
            c.alpha = 0.0;
            if (column == 0) {
                c.extents = {128};
                c.model = Model::ising;
                c.tree = "128->[2]64->[4]16->[10]4->[18]1";
                c.backends = {Backend::mlmctdh, Backend::oracle, Backend::dtwa};
            } else {
                c.geometry = Geometry::square2d;
                c.extents = {4, 4};
                c.plaquette = std::array<int, 2>{2, 2};
                if (column == 1) {
                    c.model = Model::ising;
                    c.tree = "16->[2]4->[8]1";
                    c.backends = {Backend::mlmctdh, Backend::oracle, Backend::dtwa};
                } else {
                    c.model = Model::xyz;
                    c.J = {0.5, 1.0, 0.25};
                    c.tree = "16->[2]4->[14]1";
                    c.backends = {Backend::mlmctdh, Backend::ed, Backend::dtwa};
                }
            }
            break;
    }
    return c;
}

int default_workers() {
    if (const char* env = std::getenv("SPINDYN_WORKERS"); env && *env) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("SPINDYN_WORKERS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace spindyn::harness
