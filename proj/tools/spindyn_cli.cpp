// Command-line front end: run, converge, preset, compare.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spindyn/common.hpp"
#include "spindyn/harness.hpp"

namespace sh = spindyn::harness;

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

void print_result(const sh::RunConfig& config, const sh::RunResult& r) {
    for (const auto& [b, d] : r.diagnostics)
        std::cout << std::left << std::setw(8) << sh::to_string(b) << std::fixed << std::setprecision(1) << d.seconds
                  << " s\n";
    std::cout << std::defaultfloat;
    for (const auto& [pair, cols] : r.deviations) {
        std::cout << pair << " max deviation:";
        for (const auto& [col, v] : cols) std::cout << "  " << col << " " << std::setprecision(3) << v;
        std::cout << "\n";
    }
    if (!config.output.empty()) std::cout << "wrote " << config.output << "/\n";
}

int compare(const std::vector<std::string>& files) {
    std::vector<spindyn::ObservableSeries> series;
    for (const auto& f : files) {
        std::ifstream is(f);
        if (!is) throw spindyn::ConfigError("cannot open '" + f + "'");
        series.push_back(spindyn::read_csv(is));
    }
    std::cout << std::left << std::setw(40) << "file" << std::setw(14) << "Sx" << std::setw(14) << "dSx"
              << std::setw(14) << "SvN" << "natpop_tail\n";
    for (std::size_t k = 1; k < series.size(); ++k) {
        const auto dev = sh::max_deviation(series[k], series[0]);
        std::cout << std::setw(40) << files[k];
        for (const char* col : {"Sx", "dSx", "SvN", "natpop_tail"}) {
            std::ostringstream cell;
            if (auto it = dev.find(col); it != dev.end())
                cell << std::setprecision(4) << it->second;
            else
                cell << "-";
            std::cout << std::setw(14) << cell.str();
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quench dynamics of long-range spin chains: ML-MCTDH, DTWA, ED and the Ising closed form"};
    app.require_subcommand(1);

    std::string config_path, output;
    int workers = 0;

    auto* run = app.add_subcommand("run", "Run every backend of a config");
    run->add_option("config", config_path, "INI run config")->required();
    run->add_option("-o,--output", output, "Output directory (overrides the config)");
    run->add_option("-w,--workers", workers, "Worker threads (default: SPINDYN_WORKERS or all cores)");

    std::vector<int> m_values;
    std::string report_path;
    auto* conv = app.add_subcommand("converge", "Scan the last tree label and compare against ED or the oracle");
    conv->add_option("config", config_path, "INI run config")->required();
    conv->add_option("--m", m_values, "SPF counts to try")->required()->expected(1, -1);
    conv->add_option("-o,--output", report_path, "Write the report to this CSV file as well");

    std::string preset_name;
    bool print_only = false, list = false;
    auto* pre = app.add_subcommand("preset", "Run (or print) a figure-panel preset, e.g. fig2a");
    pre->add_option("figure", preset_name, "Preset name");
    pre->add_flag("--print", print_only, "Print the preset config instead of running it");
    pre->add_flag("--list", list, "List preset names");
    pre->add_option("-o,--output", output, "Output directory");
    pre->add_option("-w,--workers", workers, "Worker threads");

    std::vector<std::string> csv_files;
    auto* cmp = app.add_subcommand("compare", "Deviation table of CSV series against the first one");
    cmp->add_option("csv", csv_files, "Series CSV files")->required()->expected(2, -1)->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto config = sh::load_config(config_path);
            if (!output.empty()) config.output = output;
            print_result(config, sh::run(config, workers));
        } else if (conv->parsed()) {
            const auto report = sh::converge(sh::load_config(config_path), m_values);
            sh::write_convergence(std::cout, report);
            if (!report_path.empty()) {
                std::ofstream os(report_path);
                sh::write_convergence(os, report);
            }
            if (!report.monotone()) std::cerr << "note: deviations are not monotone in m\n";
        } else if (pre->parsed()) {
            if (list) {
                for (const auto& n : sh::preset_names()) std::cout << n << "\n";
                return 0;
            }
            if (preset_name.empty()) throw spindyn::ConfigError("preset needs a figure id (see --list)");
            auto config = sh::preset(preset_name);
            if (!output.empty()) config.output = output;
            if (print_only) {
                sh::write_config(std::cout, config);
                return 0;
            }
            print_result(config, sh::run(config, workers));
        } else if (cmp->parsed()) {
            return compare(csv_files);
        }
    } catch (const spindyn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const spindyn::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
