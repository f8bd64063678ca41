// Command-line front end: power-flow solves, mode comparisons, Volt/Var
// optimization, memory/timing benchmarks, eigen reports, bundled fixtures.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebus/fixtures.hpp"
#include "ebus/lineconst.hpp"
#include "ebus/pflow.hpp"
#include "ebus/vvc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ebus;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

struct Ctx {
    int threads = 0;
    std::uint64_t seed = 17;
    std::string out_dir = ".";
    std::string command_line;
};

std::string out_path(const Ctx& ctx, const std::string& name) {
    fs::create_directories(ctx.out_dir);
    return (fs::path(ctx.out_dir) / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
}

void write_manifest(const Ctx& ctx, const std::string& output_path, const json& config,
                    const std::string& input_path) {
    json man;
    man["command"] = ctx.command_line;
    man["config"] = config;
    man["tool_version"] = kVersion;
    if (!input_path.empty()) {
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a_file(input_path)));
        man["input"] = input_path;
        man["input_hash"] = buf;
    }
    auto now = std::chrono::system_clock::now();
    man["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                                now.time_since_epoch())
                                .count();
    man["output"] = output_path;
    write_file(output_path + ".manifest.json", man.dump(2) + "\n");
}

const char* conductor_name(const NetworkModel& m, int bus, int axis, AssemblyMode mode) {
    static const char* names[] = {"a", "b", "c", "n"};
    (void)m;
    (void)mode;
    return names[axis];
}

std::string solution_csv(const NetworkModel& m, const PowerFlowSolution& sol) {
    std::ostringstream os;
    os << "# mode=" << to_string(sol.mode) << (sol.decomposed ? " decomposed" : "")
       << " iterations=" << sol.iterations << " converged=" << (sol.converged ? 1 : 0) << "\n";
    os << "bus,conductor,V_mag_pu,V_angle_deg\n";
    char buf[64];
    for (std::size_t b = 0; b < m.buses.size(); ++b)
        for (int a = 0; a < sol.bus_axes[b]; ++a) {
            Complex v = sol.voltage(static_cast<int>(b), a);
            std::snprintf(buf, sizeof buf, "%.6g,%.3f", std::abs(v), angle_deg(v));
            os << m.buses[b].id << "," << conductor_name(m, static_cast<int>(b), a, sol.mode)
               << "," << buf << "\n";
        }
    return os.str();
}

SolverConfig make_config(const std::string& mode, bool decomposed, double eps, int max_iters,
                         int threads) {
    SolverConfig cfg;
    cfg.mode = assembly_mode_from_string(mode);
    cfg.decomposed = decomposed;
    cfg.epsilon = eps;
    cfg.max_iterations = max_iters;
    cfg.threads = threads;
    if (decomposed) cfg.mode = AssemblyMode::Mixed012Eig;
    return cfg;
}

int cmd_solve(const Ctx& ctx, const std::string& net_path, const std::string& mode,
              bool decomposed, double eps, int max_iters, const std::string& out_name,
              const std::string& dump_ybus) {
    NetworkModel m = load_network(net_path);
    SolverConfig cfg = make_config(mode, decomposed, eps, max_iters, ctx.threads);
    if (!dump_ybus.empty()) {
        AssembledSystem sys = assemble(m, cfg.mode);
        std::string path = out_path(ctx, dump_ybus);
        write_file(path, sys.y.to_matrix_market());
        write_manifest(ctx, path, {{"mode", to_string(cfg.mode)}}, net_path);
    }
    PowerFlowSolution sol = power_flow(m, cfg);
    std::string path = out_path(ctx, out_name);
    write_file(path, solution_csv(m, sol));
    json config{{"mode", mode},
                {"decomposed", decomposed},
                {"eps", eps},
                {"max_iterations", max_iters}};
    write_manifest(ctx, path, config, net_path);
    std::printf("%s: %s, %d iterations, max error %.3e -> %s\n", to_string(sol.mode).c_str(),
                sol.converged ? "converged" : "NOT CONVERGED", sol.iterations,
                sol.error_trace.empty() ? 0.0 : sol.error_trace.back(), path.c_str());
    if (!sol.converged) {
        std::fprintf(stderr, "non-convergence: %s\n", sol.diagnostic.c_str());
        return 2;
    }
    return 0;
}

int cmd_compare(const Ctx& ctx, const std::string& net_path, const std::string& modes_csv,
                double eps, const std::string& out_name) {
    NetworkModel m = load_network(net_path);
    std::vector<std::string> modes;
    std::stringstream ss(modes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) modes.push_back(tok);
    if (modes.size() < 2) throw Error("compare: need at least two modes");

    std::vector<PowerFlowSolution> sols;
    for (const auto& mode : modes) {
        SolverConfig cfg = make_config(mode == "decomposed" ? "mixed" : mode,
                                       mode == "decomposed", eps, 400, ctx.threads);
        PowerFlowSolution sol = power_flow(m, cfg);
        if (!sol.converged) {
            std::fprintf(stderr, "mode %s did not converge: %s\n", mode.c_str(),
                         sol.diagnostic.c_str());
            return 2;
        }
        sols.push_back(std::move(sol));
    }

    std::ostringstream os;
    os << "bus,conductor";
    for (const auto& mode : modes) os << "," << mode << "_mag," << mode << "_ang";
    for (std::size_t k = 1; k < modes.size(); ++k)
        os << "," << modes[k] << "_dmag," << modes[k] << "_dang";
    os << "\n";
    char buf[64];
    double worst = 0.0;
    const PowerFlowSolution& ref = sols.front();
    for (std::size_t b = 0; b < m.buses.size(); ++b)
        for (int a = 0; a < ref.bus_axes[b]; ++a) {
            os << m.buses[b].id << "," << conductor_name(m, static_cast<int>(b), a, ref.mode);
            for (const auto& sol : sols) {
                bool has = a < sol.bus_axes[b];
                Complex v = has ? sol.voltage(static_cast<int>(b), a) : Complex(0, 0);
                std::snprintf(buf, sizeof buf, ",%.6g,%.3f", std::abs(v), angle_deg(v));
                os << (has ? buf : ",,");
            }
            for (std::size_t k = 1; k < sols.size(); ++k) {
                bool has = a < sols[k].bus_axes[b];
                if (!has) {
                    os << ",,";
                    continue;
                }
                Complex v = sols[k].voltage(static_cast<int>(b), a);
                Complex r = ref.voltage(static_cast<int>(b), a);
                double dm = std::abs(std::abs(v) - std::abs(r));
                worst = std::max(worst, std::abs(v - r));
                std::snprintf(buf, sizeof buf, ",%.3e,%.3f", dm,
                              angle_diff_deg(angle_deg(v), angle_deg(r)));
                os << buf;
            }
            os << "\n";
        }
    std::string path = out_path(ctx, out_name);
    write_file(path, os.str());
    write_manifest(ctx, path, {{"modes", modes_csv}, {"eps", eps}}, net_path);
    std::printf("compared %zu modes, max |dV| vs %s = %.3e -> %s\n", sols.size(),
                modes.front().c_str(), worst, path.c_str());
    return 0;
}

int cmd_vvc(const Ctx& ctx, const std::string& net_path, const std::string& mode, bool decomposed,
            const std::string& limits_path, const std::string& out_name) {
    NetworkModel m = load_network(net_path);
    VvcLimits limits = limits_path.empty() ? parse_limits(default_limits_json())
                                           : load_limits(limits_path);
    SolverConfig cfg = make_config(mode, decomposed, 1e-6, 200, ctx.threads);
    VvcResult r = dcd_optimize(m, cfg, limits);

    double suf = 1.0;
    if (!(cfg.mode == AssemblyMode::PhaseABCN && !decomposed)) {
        SolverConfig pcfg = make_config("phase", false, 1e-6, 200, ctx.threads);
        VvcResult rp = dcd_optimize(m, pcfg, limits);
        suf = r.pf_time_s > 0.0 ? rp.pf_time_s / r.pf_time_s : 0.0;
    }

    json rep;
    rep["iterations"] = r.iterations;
    rep["pf_runs"] = r.pf_runs;
    rep["pf_time_s"] = r.pf_time_s;
    rep["suf_vs_phase"] = suf;
    rep["bof"] = r.bof;
    rep["violations_before"] = r.violations_before;
    rep["violations_after"] = r.violations_after;
    json controls = json::object();
    for (std::size_t k = 0; k < m.controls.size(); ++k)
        controls[m.controls[k].id] = r.final_settings[k];
    rep["final_controls"] = controls;

    std::string path = out_path(ctx, out_name);
    write_file(path, rep.dump(2) + "\n");
    write_manifest(ctx, path, {{"mode", mode}, {"decomposed", decomposed}}, net_path);
    std::printf("vvc: %d iterations, %d pf runs, violations %d -> %d, SUF vs phase %.2f -> %s\n",
                r.iterations, r.pf_runs, r.violations_before, r.violations_after, suf,
                path.c_str());
    return 0;
}

int cmd_bench(const Ctx& ctx, const std::string& net_path, const std::string& report,
              const std::string& modes_csv, const std::string& limits_path,
              const std::string& out_name) {
    NetworkModel m = load_network(net_path);
    if (report == "memory") {
        FullSolveEngine phase(m, AssemblyMode::PhaseABCN);
        std::int64_t baseline =
            phase.factors().nnz_l + phase.factors().nnz_u;
        SolverConfig cfg;
        cfg.threads = ctx.threads;
        DecomposedSolver dec(m, cfg);
        std::vector<SubsystemMemory> subs;
        for (const auto& [name, nnz] : dec.factor_nnz())
            subs.push_back({name, nnz.first, nnz.second});
        MemoryReport rep = memory_report(subs, dec.transform_nnz(), baseline);
        std::string csv = memory_report_csv(rep);
        std::ostringstream os;
        os << "# baseline phase nnz(L)+nnz(U) = " << baseline << "\n" << csv;
        std::string path = out_path(ctx, out_name.empty() ? "memory_report.csv" : out_name);
        write_file(path, os.str());
        write_manifest(ctx, path, {{"report", "memory"}}, net_path);
        std::printf("memory: baseline %lld vs %lld stored entries -> %.2f%% reduction -> %s\n",
                    static_cast<long long>(baseline), static_cast<long long>(rep.total_nnz),
                    rep.reduction_percent, path.c_str());
        return 0;
    }
    if (report == "vvc") {
        std::vector<std::string> methods;
        std::stringstream ss(modes_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) methods.push_back(tok);
        VvcLimits limits = limits_path.empty() ? parse_limits(default_limits_json())
                                               : load_limits(limits_path);
        SolverConfig cfg = make_config("mixed", false, 1e-6, 200, ctx.threads);
        auto rows = benchmark_vvc(m, methods, limits, cfg);
        std::string csv = vvc_bench_csv(rows);
        std::string path = out_path(ctx, out_name.empty() ? "vvc_bench.csv" : out_name);
        write_file(path, csv);
        write_manifest(ctx, path, {{"report", "vvc"}, {"modes", modes_csv}}, net_path);
        std::fputs(csv.c_str(), stdout);
        return 0;
    }
    throw Error("bench: unknown report '" + report + "' (memory|vvc)");
}

int cmd_eig_report(const Ctx& ctx, const std::string& net_path, const std::string& line_id,
                   const std::string& out_name) {
    NetworkModel m = load_network(net_path);
    json rep;
    rep["lines"] = json::array();
    for (const auto& l : m.lines) {
        if (!line_id.empty() && l.id != line_id) continue;
        if (m.bus(l.from).segment != Segment::LV4wire) continue;
        EigenBasisTransform t = eigendecompose_line(l.y_series_pu);
        CMat recon = t.to_phase * CMat::diag(t.eigenvalues) * t.to_eigen;
        double resid = (recon - l.y_series_pu).norm_fro() / l.y_series_pu.norm_fro();
        json lj;
        lj["id"] = l.id;
        lj["eigenvalues"] = json::array();
        for (const auto& ev : t.eigenvalues)
            lj["eigenvalues"].push_back({{"re", ev.real()}, {"im", ev.imag()}});
        json tm = json::array();
        for (int i = 0; i < 4; ++i) {
            json row = json::array();
            for (int j = 0; j < 4; ++j)
                row.push_back({{"re", t.to_phase(i, j).real()}, {"im", t.to_phase(i, j).imag()}});
            tm.push_back(row);
        }
        lj["transform_matrix"] = tm;
        CMat tinv = t.to_phase.inverse();
        lj["condition_number"] = t.to_phase.norm_fro() * tinv.norm_fro();
        lj["reconstruction_residual"] = resid;
        rep["lines"].push_back(lj);
    }
    if (rep["lines"].empty()) throw Error("eig-report: no matching LV line");
    std::string path = out_path(ctx, out_name);
    write_file(path, rep.dump(2) + "\n");
    write_manifest(ctx, path, {{"line", line_id}}, net_path);
    std::printf("eig-report: %zu line(s) -> %s\n", rep["lines"].size(), path.c_str());
    return 0;
}

int cmd_fixtures(const Ctx& ctx) {
    auto written = write_all_fixtures(ctx.out_dir, ctx.seed);
    for (const auto& name : written) {
        std::string path = out_path(ctx, name);
        write_manifest(ctx, path, {{"seed", ctx.seed}}, "");
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"power-flow and Volt/Var toolkit for integrated MV/LV networks"};
    app.require_subcommand(1);

    Ctx ctx;
    for (int i = 0; i < argc; ++i) ctx.command_line += std::string(i ? " " : "") + argv[i];
    app.add_option("--threads", ctx.threads, "cap worker threads (0 = hardware)");
    app.add_option("--seed", ctx.seed, "seed for synthetic fixtures");
    app.add_option("--out", ctx.out_dir, "output directory");

    std::string net, mode = "mixed", out_name, dump_ybus, modes = "phase,mixed", limits, line_id;
    bool decomposed = false;
    double eps = 1e-6;
    int max_iters = 100;

    auto* solve = app.add_subcommand("solve", "run one power flow");
    solve->add_option("network", net)->required();
    solve->add_option("--mode", mode, "phase|mixed|kron");
    solve->add_flag("--decomposed", decomposed);
    solve->add_option("--eps", eps);
    solve->add_option("--max-iters", max_iters);
    solve->add_option("--dump-ybus", dump_ybus, "write the assembled matrix (MatrixMarket)");
    solve->add_option("--out-file", out_name);

    auto* compare = app.add_subcommand("compare", "solve in several modes and diff");
    compare->add_option("network", net)->required();
    compare->add_option("--modes", modes, "comma list: phase,mixed,kron,decomposed");
    compare->add_option("--eps", eps);
    compare->add_option("--out-file", out_name);

    auto* vvc = app.add_subcommand("vvc", "discrete coordinate-descent Volt/Var optimization");
    vvc->add_option("network", net)->required();
    vvc->add_option("--mode", mode, "phase|mixed");
    vvc->add_flag("--decomposed", decomposed);
    vvc->add_option("--limits", limits);
    vvc->add_option("--out-file", out_name);

    auto* bench = app.add_subcommand("bench", "memory / timing reports");
    bench->add_option("network", net)->required();
    std::string report = "memory";
    bench->add_option("--report", report, "memory|vvc");
    bench->add_option("--modes", modes, "for --report vvc");
    bench->add_option("--limits", limits);
    bench->add_option("--out-file", out_name);

    auto* eig = app.add_subcommand("eig-report", "LV line eigen decomposition report");
    eig->add_option("network", net)->required();
    eig->add_option("--line", line_id);
    eig->add_option("--out-file", out_name);

    auto* fx = app.add_subcommand("fixtures", "write the bundled study networks");

    // let global flags (--out, --seed, --threads) appear after the subcommand
    for (auto* sub : {solve, compare, vvc, bench, eig, fx}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(solve))
            return cmd_solve(ctx, net, mode, decomposed, eps, max_iters,
                             out_name.empty() ? "solution.csv" : out_name, dump_ybus);
        if (app.got_subcommand(compare))
            return cmd_compare(ctx, net, modes, eps, out_name.empty() ? "compare.csv" : out_name);
        if (app.got_subcommand(vvc))
            return cmd_vvc(ctx, net, mode, decomposed, limits,
                           out_name.empty() ? "vvc_report.json" : out_name);
        if (app.got_subcommand(bench))
            return cmd_bench(ctx, net, report, modes, limits, out_name);
        if (app.got_subcommand(eig))
            return cmd_eig_report(ctx, net, line_id, out_name.empty() ? "eig_report.json" : out_name);
        if (app.got_subcommand(fx)) return cmd_fixtures(ctx);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
