#include "spindyn/observables.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "spindyn/common.hpp"

namespace spindyn {

Collective assemble(std::span<const double> one_point, const Eigen::MatrixXd& two_point) {
    const auto L = static_cast<Eigen::Index>(one_point.size());
    if (two_point.rows() != L || two_point.cols() != L)
        throw ConfigError("two-point matrix shape does not match the one-point vector");
    Collective out;
    for (Eigen::Index i = 0; i < L; ++i) {
        out.sx += one_point[i];
        out.dsx += 1.0 - one_point[i] * one_point[i];
        for (Eigen::Index j = 0; j < L; ++j)
            if (j != i) out.dsx += two_point(i, j) - one_point[i] * one_point[j];
    }
    return out;
}

namespace {

using Column = std::optional<std::vector<double>> ObservableSeries::*;

struct ColumnSpec {
    const char* name;
    std::vector<double> ObservableSeries::*required;
    Column optional;
};

constexpr ColumnSpec kColumns[] = {
    {"Sx", &ObservableSeries::sx, nullptr},
    {"dSx", &ObservableSeries::dsx, nullptr},
    {"SvN", nullptr, &ObservableSeries::svn},
    {"natpop_tail", nullptr, &ObservableSeries::natpop_tail},
    {"stderr_Sx", nullptr, &ObservableSeries::sx_stderr},
    {"stderr_dSx", nullptr, &ObservableSeries::dsx_stderr},
    {"stderr_SvN", nullptr, &ObservableSeries::svn_stderr},
    {"stderr_natpop_tail", nullptr, &ObservableSeries::natpop_tail_stderr},
};

}  // namespace

std::vector<std::pair<std::string, const std::vector<double>*>> columns(const ObservableSeries& s) {
    std::vector<std::pair<std::string, const std::vector<double>*>> out{{"t", &s.t}};
    for (const auto& c : kColumns) {
        if (c.required)
            out.emplace_back(c.name, &(s.*c.required));
        else if (const auto& opt = s.*c.optional)
            out.emplace_back(c.name, &*opt);
    }
    return out;
}

ObservableSeries ensemble_average(std::span<const ObservableSeries> series) {
    if (series.empty()) throw ConfigError("ensemble_average needs at least one series");
    const auto& first = series.front();
    for (const auto& s : series)
        if (s.t != first.t) throw ConfigError("ensemble members have different time grids");

    const double R = static_cast<double>(series.size());
    const std::size_t n = first.t.size();
    auto mean_and_error = [&](auto get, std::vector<double>& mean, std::vector<double>& err) {
        mean.assign(n, 0.0);
        err.assign(n, 0.0);
        for (const auto& s : series) {
            const std::vector<double>& v = get(s);
            if (v.size() != n) throw ConfigError("ensemble member column length mismatch");
            for (std::size_t k = 0; k < n; ++k) mean[k] += v[k] / R;
        }
        if (series.size() < 2) return;
        for (const auto& s : series) {
            const std::vector<double>& v = get(s);
            for (std::size_t k = 0; k < n; ++k) err[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
        }
        for (auto& e : err) e = std::sqrt(e / (R - 1.0)) / std::sqrt(R);
    };

    ObservableSeries out;
    out.t = first.t;
    out.metadata = first.metadata;
    out.metadata["realizations"] = std::to_string(series.size());
    if (series.size() > 1) {
        std::string seeds;
        for (const auto& s : series) {
            auto it = s.metadata.find("seed");
            if (it == s.metadata.end()) continue;
            seeds += (seeds.empty() ? "" : ",") + it->second;
        }
        out.metadata.erase("seed");
        out.metadata.erase("couplings");
        if (!seeds.empty()) out.metadata["seeds"] = seeds;
    }

    std::vector<double> err;
    mean_and_error([](const ObservableSeries& s) -> const std::vector<double>& { return s.sx; }, out.sx, err);
    out.sx_stderr = err;
    mean_and_error([](const ObservableSeries& s) -> const std::vector<double>& { return s.dsx; }, out.dsx, err);
    out.dsx_stderr = err;

    auto all_have = [&](Column c) {
        for (const auto& s : series)
            if (!(s.*c)) return false;
        return true;
    };
    if (all_have(&ObservableSeries::svn)) {
        out.svn.emplace();
        mean_and_error([](const ObservableSeries& s) -> const std::vector<double>& { return *s.svn; }, *out.svn, err);
        out.svn_stderr = err;
    }
    if (all_have(&ObservableSeries::natpop_tail)) {
        out.natpop_tail.emplace();
        mean_and_error([](const ObservableSeries& s) -> const std::vector<double>& { return *s.natpop_tail; },
                       *out.natpop_tail, err);
        out.natpop_tail_stderr = err;
    }
    return out;
}

void write_csv(std::ostream& os, const ObservableSeries& s) {
    for (const auto& [key, value] : s.metadata) os << "# " << key << ": " << value << '\n';
    const auto cols = columns(s);
    for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c].first;
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c].second->size() != s.t.size()) throw ConfigError("column '" + cols[c].first + "' has wrong length");
            os << (c ? "," : "") << (*cols[c].second)[k];
        }
        os << '\n';
    }
}

ObservableSeries read_csv(std::istream& is) {
    ObservableSeries s;
    std::string line;
    std::vector<std::string> header;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            auto trim = [](std::string v) {
                const auto b = v.find_first_not_of(' ');
                const auto e = v.find_last_not_of(' ');
                return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
            };
            s.metadata[trim(line.substr(1, colon - 1))] = trim(line.substr(colon + 1));
            continue;
        }
        std::istringstream fields(line);
        std::string cell;
        if (header.empty()) {
            while (std::getline(fields, cell, ',')) header.push_back(cell);
            if (header.empty() || header[0] != "t") throw ConfigError("CSV header must start with 't'");
            for (const auto& name : header) {
                if (name == "t" || name == "Sx" || name == "dSx") continue;
                bool known = false;
                for (const auto& c : kColumns)
                    if (!c.required && name == c.name) {
                        (s.*c.optional).emplace();
                        known = true;
                    }
                if (!known) throw ConfigError("unknown CSV column '" + name + "'");
            }
            continue;
        }
        std::size_t c = 0;
        while (std::getline(fields, cell, ',')) {
            if (c >= header.size()) throw ConfigError("CSV row has too many fields");
            const double v = std::stod(cell);
            const std::string& name = header[c++];
            if (name == "t") s.t.push_back(v);
            else if (name == "Sx") s.sx.push_back(v);
            else if (name == "dSx") s.dsx.push_back(v);
            else
                for (const auto& spec : kColumns)
                    if (!spec.required && name == spec.name) (s.*spec.optional)->push_back(v);
        }
        if (c != header.size()) throw ConfigError("CSV row has too few fields");
    }
    return s;
}

void write_csv_atomic(const std::string& path, const ObservableSeries& series) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
        write_csv(out, series);
        if (!out) throw ConfigError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace spindyn
