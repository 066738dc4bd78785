// ordcdf: joint order-statistic cdfs and step-up multiple-testing quantities.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ordcdf/distributions.hpp"
#include "ordcdf/mtp.hpp"
#include "ordcdf/pair.hpp"
#include "ordcdf/recursions.hpp"
#include "ordcdf/scalar.hpp"

using json = nlohmann::ordered_json;
using namespace ordcdf;

namespace {

struct CliError {
    int code;
    std::string msg;
};

struct Common {
    std::string backend = "double";
    std::string kernel = "noe";
    std::string format = "json";
    std::string out;
    std::string cdf = "uniform";
    unsigned threads = 0;  // 0 = unset: ORDCDF_THREADS, then hardware
    bool count_ops = false;
    bool require_faithful = false;
    bool enclosure = false;
    std::string eps = "1/1125899906842624";  // 2^-50
};

void add_common(CLI::App* cmd, Common& c, bool with_kernel_backend = true) {
    if (with_kernel_backend) {
        cmd->add_option("--backend", c.backend, "scalar backend")
            ->check(CLI::IsMember({"double", "pair", "rational"}));
        cmd->add_option("--kernel", c.kernel, "recursion kernel")
            ->check(CLI::IsMember({"bolshev", "steck", "noe"}));
    }
    cmd->add_option("--threads", c.threads,
                    "worker threads for the noe kernel (default: ORDCDF_THREADS, then all cores)");
    cmd->add_option("--format", c.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--out", c.out, "write the report to FILE instead of stdout");
    cmd->add_flag("--count-ops,!--no-count-ops", c.count_ops,
                  "include scalar operation counts");
    cmd->add_flag("--require-faithful", c.require_faithful,
                  "pair backend: exit 3 unless the faithful-rounding certificate holds");
    cmd->add_flag("--enclosure", c.enclosure,
                  "rational backend: accept double-evaluated cdf values and report "
                  "certified enclosure bounds");
    cmd->add_option("--eps", c.eps, "enclosure perturbation per threshold difference");
}

unsigned resolve_threads(unsigned flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("ORDCDF_THREADS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

KernelId parse_kernel(const std::string& s) {
    if (s == "bolshev") return KernelId::bolshev;
    if (s == "steck") return KernelId::steck;
    return KernelId::noe;
}

std::string dec(double x) { return double_to_string(x); }
std::string dec(const Pair& x) { return double_to_string(faithful_round(x)); }
std::string dec(const Rational& x) { return double_to_string(rational_to_double(x)); }

std::vector<Rational> read_threshold_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError{2, "cannot open threshold file '" + path + "'"};
    std::vector<Rational> out;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r");
        try {
            out.push_back(parse_rational(line.substr(b, e - b + 1)));
        } catch (const std::exception& ex) {
            throw CliError{2, "bad threshold '" + line + "' in " + path + ": " + ex.what()};
        }
    }
    return out;
}

std::vector<Rational> bh_boundaries(const std::vector<std::string>& bh) {
    Rational alpha;
    unsigned long m = 0;
    try {
        m = std::stoul(bh.at(0));
        alpha = parse_rational(bh.at(1));
    } catch (const std::exception&) {
        throw CliError{2, "--bh expects: M ALPHA"};
    }
    if (m == 0 || alpha <= 0 || alpha >= 1)
        throw CliError{2, "--bh needs M >= 1 and ALPHA in (0,1)"};
    std::vector<Rational> b;
    for (unsigned long i = 1; i <= m; ++i) b.push_back(Rational(i) * alpha / Rational(m));
    return b;
}

void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream f(c.out);
    if (!f) throw CliError{2, "cannot open output file '" + c.out + "'"};
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
}

json base_report(const char* command, const Common& c, unsigned threads) {
    json j;
    j["schema_version"] = 1;
    j["command"] = command;
    j["backend"] = c.backend;
    j["kernel"] = c.kernel;
    j["threads"] = threads;
    return j;
}

json op_counts_json(const OpCounter& c) {
    json j;
    j["adds"] = c.adds;
    j["subs"] = c.subs;
    j["muls"] = c.muls;
    j["divs"] = c.divs;
    j["total"] = c.total();
    return j;
}

std::string csv_comment_block(const json& j, const std::vector<std::string>& skip) {
    std::ostringstream os;
    for (const auto& [key, value] : j.items()) {
        if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
        if (value.is_structured()) continue;
        os << "# " << key << "," << (value.is_string() ? value.get<std::string>() : value.dump())
           << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------- psi ----

struct PsiArgs {
    std::size_t n1 = 0, n2 = 0;
    std::string thresholds_file;
    std::vector<std::string> bh;
    Common c;
};

std::vector<Rational> gather_boundaries(const PsiArgs& a) {
    const bool has_file = !a.thresholds_file.empty();
    const bool has_bh = !a.bh.empty();
    if (has_file && has_bh) throw CliError{2, "give either --thresholds or --bh, not both"};
    std::vector<Rational> b;
    if (has_file) b = read_threshold_file(a.thresholds_file);
    if (has_bh) b = bh_boundaries(a.bh);
    if (b.size() != a.n1 + a.n2)
        throw CliError{2, "need n1 + n2 = " + std::to_string(a.n1 + a.n2) +
                              " thresholds, got " + std::to_string(b.size())};
    for (const Rational& x : b)
        if (x < 0 || x > 1) throw CliError{2, "thresholds must lie in [0,1]"};
    return b;
}

template <class S>
json psi_table_json(const PsiTable<S>& t) {
    json rows = json::array();
    for (std::size_t i1 = 0; i1 <= t.n1; ++i1) {
        json row = json::array();
        for (std::size_t i2 = 0; i2 <= t.n2; ++i2) row.push_back(dec(t(i1, i2)));
        rows.push_back(std::move(row));
    }
    return rows;
}

json psi_table_exact_json(const PsiTable<Rational>& t) {
    json rows = json::array();
    for (std::size_t i1 = 0; i1 <= t.n1; ++i1) {
        json row = json::array();
        for (std::size_t i2 = 0; i2 <= t.n2; ++i2) row.push_back(rational_to_string(t(i1, i2)));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <class S>
std::string psi_csv(const json& meta, const PsiTable<S>& t, const PsiTable<Rational>* exact) {
    std::ostringstream os;
    os << csv_comment_block(meta, {});
    if (meta.contains("warnings"))
        for (const auto& w : meta["warnings"]) os << "# warning," << w.get<std::string>() << "\n";
    os << (exact ? "i1,i2,value,exact\n" : "i1,i2,value\n");
    for (std::size_t i1 = 0; i1 <= t.n1; ++i1)
        for (std::size_t i2 = 0; i2 <= t.n2; ++i2) {
            os << i1 << "," << i2 << "," << dec(t(i1, i2));
            if (exact) os << "," << rational_to_string((*exact)(i1, i2));
            os << "\n";
        }
    return os.str();
}

int run_psi(const PsiArgs& a) {
    const std::vector<Rational> b = gather_boundaries(a);
    const auto F = parse_cdf(a.c.cdf);
    const KernelId kid = parse_kernel(a.c.kernel);
    const unsigned threads = resolve_threads(a.c.threads);

    json rep = base_report("psi", a.c, threads);
    rep["n1"] = a.n1;
    rep["n2"] = a.n2;
    rep["cdf"] = F->name();
    {
        json th = json::array(), thx = json::array();
        for (const Rational& x : b) {
            th.push_back(dec(x));
            thx.push_back(rational_to_string(x));
        }
        rep["thresholds"] = th;
        rep["thresholds_exact"] = thx;
    }

    if (a.c.backend == "rational") {
        if (!F->exact_rational() && !a.c.enclosure && a.n2 > 0)
            throw CliError{2, "cdf '" + F->name() +
                                  "' has no exact rational form; pass --enclosure to accept "
                                  "double-evaluated values with certified bounds"};
        const auto tb = reduce_to_uniform_rational(UniformCdf(), *F, b, a.n1, a.n2);
        const PsiTable<Rational> t = compute_psi(tb, kid, threads);
        rep["psi"] = psi_table_json(t);
        rep["psi_exact"] = psi_table_exact_json(t);
        rep["value"] = dec(t(a.n1, a.n2));
        rep["value_exact"] = rational_to_string(t(a.n1, a.n2));
        if (a.c.enclosure) {
            const Rational eps = parse_rational(a.c.eps);
            if (eps < 0 || 2 * eps >= 1) throw CliError{2, "--eps must lie in [0, 1/2)"};
            const EnclosureTables enc = enclosure_bounds(t, eps);
            json e;
            e["epsilon"] = dec(eps);
            e["epsilon_exact"] = rational_to_string(eps);
            e["lower"] = psi_table_exact_json(enc.lower);
            e["upper"] = psi_table_exact_json(enc.upper);
            rep["enclosure"] = std::move(e);
        }
        if (a.c.count_ops)
            rep["op_counts"] = op_counts_json(count_operations(
                kid == KernelId::bolshev ? CountedKernel::bolshev2
                : kid == KernelId::steck ? CountedKernel::steck2
                                         : CountedKernel::noe2,
                tb));
        emit(a.c, a.c.format == "json" ? rep.dump(2) : psi_csv(rep, t, &t));
        return 0;
    }

    if (a.c.backend == "double") {
        std::vector<double> bd;
        for (const Rational& x : b) bd.push_back(rational_to_double(x));
        const auto tb = reduce_to_uniform(UniformCdf(), *F, bd, a.n1, a.n2);
        const PsiTable<double> t = compute_psi(tb, kid, threads);
        json warnings = json::array();
        for (std::size_t i1 = 0; i1 <= a.n1; ++i1)
            for (std::size_t i2 = 0; i2 <= a.n2; ++i2)
                if (t(i1, i2) < 0.0)
                    warnings.push_back("negative value at (" + std::to_string(i1) + "," +
                                       std::to_string(i2) +
                                       "): double recursion lost all significant digits; "
                                       "use the pair or rational backend");
        rep["psi"] = psi_table_json(t);
        rep["value"] = dec(t(a.n1, a.n2));
        if (!warnings.empty()) rep["warnings"] = warnings;
        if (a.c.count_ops)
            rep["op_counts"] = op_counts_json(count_operations(
                kid == KernelId::bolshev ? CountedKernel::bolshev2
                : kid == KernelId::steck ? CountedKernel::steck2
                                         : CountedKernel::noe2,
                tb));
        for (const auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";
        emit(a.c, a.c.format == "json" ? rep.dump(2) : psi_csv<double>(rep, t, nullptr));
        return 0;
    }

    // pair backend
    if (kid != KernelId::noe)
        throw CliError{2, "pair backend supports only the noe kernel (bolshev and steck "
                          "subtract intermediates, which voids the faithfulness guarantee)"};
    TransformedBoundaries<Pair> tb;
    tb.n1 = a.n1;
    tb.n2 = a.n2;
    for (const Rational& x : b) {
        tb.u.push_back(scalar_traits<Pair>::from_rational(x));
        tb.f.push_back(Pair(F->eval(rational_to_double(x))));
    }
    const PsiTable<Pair> t = compute_psi(tb, KernelId::noe, threads);
    bool flagged = false;
    for (const Pair& x : t.cells) flagged = flagged || x.underflow() || x.overflow();
    const FaithfulResult fr = make_faithful(t(a.n1, a.n2), a.n1, a.n2);
    rep["psi"] = psi_table_json(t);
    rep["value"] = dec(t(a.n1, a.n2));
    json meta;
    meta["k_used"] = fr.k_used;
    meta["k_limit"] = fr.k_limit;
    meta["underflow"] = flagged;
    meta["certified"] = !flagged && fr.k_used <= fr.k_limit;
    meta["certified_square_boundary"] = 8184;
    rep["pair"] = std::move(meta);
    if (a.c.count_ops) rep["op_counts"] = op_counts_json(count_operations(CountedKernel::noe2, tb));
    if (a.c.require_faithful && !(rep["pair"]["certified"].get<bool>()))
        throw CliError{3, "faithful-rounding certificate failed (underflow or k > limit)"};
    emit(a.c, a.c.format == "json" ? rep.dump(2) : psi_csv<Pair>(rep, t, nullptr));
    return 0;
}

// ----------------------------------------------------- joint-vr family ----

struct VrArgs {
    std::string model = "fm";
    std::size_t m = 0;
    std::size_t m0 = 0;
    bool m0_set = false;
    std::string pi0;
    std::string alpha;
    std::string thresholds_file;
    std::string lambda;
    Common c;
};

StepUpProcedure vr_procedure(const VrArgs& a) {
    const bool has_alpha = !a.alpha.empty();
    const bool has_file = !a.thresholds_file.empty();
    if (has_alpha == has_file)
        throw CliError{2, "give exactly one of --alpha (BH critical values) or --thresholds"};
    StepUpProcedure proc;
    if (has_alpha) {
        Rational alpha;
        try {
            alpha = parse_rational(a.alpha);
        } catch (const std::exception& ex) {
            throw CliError{2, std::string("bad --alpha: ") + ex.what()};
        }
        if (alpha <= 0 || alpha >= 1) throw CliError{2, "--alpha must lie in (0,1)"};
        proc = bh_thresholds(a.m, alpha);
    } else {
        proc.t = read_threshold_file(a.thresholds_file);
        if (proc.t.size() != a.m)
            throw CliError{2, "threshold file must contain exactly m = " + std::to_string(a.m) +
                                  " critical values"};
    }
    validate_procedure(proc);
    return proc;
}

// which: "joint-vr" (full table + summaries), "power", "fdp-dist"
template <class S>
json vr_report(const VrArgs& a, const StepUpProcedure& proc, const ContinuousCdf& F,
               KernelId kid, unsigned threads, const std::string& which) {
    const MtpInputs<S> in = make_mtp_inputs<S>(proc, F);
    const bool fm = a.model == "fm";
    Rational pi0;
    JointVR<S> vr;
    if (fm) {
        vr = joint_vr_fm(in, a.m0, kid, threads);
    } else {
        pi0 = parse_rational(a.pi0.empty() ? "1" : a.pi0);
        if (pi0 < 0 || pi0 > 1) throw CliError{2, "--pi0 must lie in [0,1]"};
        vr = joint_vr_rm(in, pi0, kid, threads);
    }

    json rep = base_report(which.c_str(), a.c, threads);
    json model;
    model["kind"] = a.model;
    model["m"] = a.m;
    if (fm)
        model["m0"] = a.m0;
    else {
        model["pi0"] = dec(scalar_traits<Rational>::from_rational(pi0));
        model["pi0_exact"] = rational_to_string(pi0);
    }
    rep["model"] = std::move(model);
    rep["cdf"] = F.name();
    {
        json th = json::array(), thx = json::array();
        for (const Rational& x : proc.t) {
            th.push_back(dec(x));
            thx.push_back(rational_to_string(x));
        }
        rep["critical_values"] = th;
        rep["critical_values_exact"] = thx;
    }

    constexpr bool exact = std::is_same_v<S, Rational>;
    if (which == "joint-vr") {
        json rows = json::array();
        for (std::size_t j = 0; j <= a.m; ++j) {
            json row = json::array();
            for (std::size_t k = 0; k <= a.m; ++k) row.push_back(dec(vr(j, k)));
            rows.push_back(std::move(row));
        }
        rep["p"] = std::move(rows);
        if constexpr (exact) {
            json rowsx = json::array();
            for (std::size_t j = 0; j <= a.m; ++j) {
                json row = json::array();
                for (std::size_t k = 0; k <= a.m; ++k)
                    row.push_back(rational_to_string(vr(j, k)));
                rowsx.push_back(std::move(row));
            }
            rep["p_exact"] = std::move(rowsx);
        }
    }

    rep["sum"] = dec(vr.total());
    if constexpr (exact) rep["sum_exact"] = rational_to_string(vr.total());
    if (which == "joint-vr" || which == "fdp-dist") {
        rep["fdr"] = dec(fdr(vr));
        if constexpr (exact) rep["fdr_exact"] = rational_to_string(fdr(vr));
        json atoms = json::array();
        for (const auto& [value, mass] : fdp_distribution(vr)) {
            json atom;
            atom["value"] = rational_to_string(value);
            atom["value_decimal"] = dec(rational_to_double(value));
            atom["mass"] = dec(mass);
            if constexpr (exact) atom["mass_exact"] = rational_to_string(mass);
            atoms.push_back(std::move(atom));
        }
        rep["fdp"] = std::move(atoms);
    }
    if (which == "joint-vr" || which == "power") {
        S ap = fm ? avg_power_fm(vr, a.m0) : avg_power_rm(in, pi0, kid, threads);
        rep["avg_power"] = dec(ap);
        if constexpr (exact) rep["avg_power_exact"] = rational_to_string(ap);
        if (!a.lambda.empty()) {
            Rational lam;
            try {
                lam = parse_rational(a.lambda);
            } catch (const std::exception& ex) {
                throw CliError{2, std::string("bad --lambda: ") + ex.what()};
            }
            if (lam <= 0 || lam > 1) throw CliError{2, "--lambda must lie in (0,1]"};
            S lp = fm ? lambda_power_fm(vr, a.m0, lam) : lambda_power_rm(in, pi0, lam, kid, threads);
            rep["lambda"] = rational_to_string(lam);
            rep["lambda_power"] = dec(lp);
            if constexpr (exact) rep["lambda_power_exact"] = rational_to_string(lp);
        }
    }

    if constexpr (std::is_same_v<S, Pair>) {
        bool flagged = false;
        for (const S& x : vr.p) flagged = flagged || x.underflow() || x.overflow();
        const std::size_t m0_for_k = fm ? a.m0 : 0;
        json meta;
        std::size_t n1 = fm ? std::min(m0_for_k, a.m) : a.m, n2 = a.m - n1;
        meta["k_used"] = (n1 + n2 >= 2) ? k_parameter(n1, n2) : 0;
        meta["k_limit"] = k_limit;
        meta["underflow"] = flagged;
        meta["certified_square_boundary"] = 8184;
        rep["pair"] = std::move(meta);
        if (a.c.require_faithful && flagged)
            throw CliError{3, "faithful-rounding certificate failed (underflow flagged)"};
    }

    if (which == "joint-vr") {
        std::vector<std::string> diag;
        for (std::size_t j = 0; j <= a.m; ++j)
            for (std::size_t k = 0; k <= a.m; ++k)
                if (scalar_traits<S>::to_double(vr(j, k)) < 0.0)
                    diag.push_back("negative probability at (" + std::to_string(j) + "," +
                                   std::to_string(k) + ")");
        if (!diag.empty()) rep["warnings"] = diag;
    }
    return rep;
}

std::string vr_csv(const json& rep, const std::string& which) {
    std::ostringstream os;
    os << csv_comment_block(rep, {});
    if (rep.contains("model")) os << csv_comment_block(rep["model"], {});
    if (which == "joint-vr") {
        const bool exact = rep.contains("p_exact");
        os << (exact ? "j,k,value,exact\n" : "j,k,value\n");
        const auto& p = rep["p"];
        for (std::size_t j = 0; j < p.size(); ++j)
            for (std::size_t k = 0; k < p[j].size(); ++k) {
                os << j << "," << k << "," << p[j][k].get<std::string>();
                if (exact) os << "," << rep["p_exact"][j][k].get<std::string>();
                os << "\n";
            }
    } else if (which == "fdp-dist") {
        os << "value,value_decimal,mass\n";
        for (const auto& atom : rep["fdp"])
            os << atom["value"].get<std::string>() << "," << atom["value_decimal"].get<std::string>()
               << "," << atom["mass"].get<std::string>() << "\n";
    } else {
        os << "quantity,value\n";
        os << "avg_power," << rep["avg_power"].get<std::string>() << "\n";
        if (rep.contains("lambda_power"))
            os << "lambda_power," << rep["lambda_power"].get<std::string>() << "\n";
    }
    return os.str();
}

int run_vr(const VrArgs& a, const std::string& which) {
    if (a.m == 0) throw CliError{2, "--m must be >= 1"};
    if (a.model == "fm") {
        if (!a.m0_set) throw CliError{2, "FM model needs --m0"};
        if (a.m0 > a.m) throw CliError{2, "m0 must be <= m"};
    } else if (a.pi0.empty()) {
        throw CliError{2, "RM model needs --pi0"};
    }
    const auto F = parse_cdf(a.c.cdf);
    const KernelId kid = parse_kernel(a.c.kernel);
    const unsigned threads = resolve_threads(a.c.threads);
    const StepUpProcedure proc = vr_procedure(a);

    json rep;
    if (a.c.backend == "rational") {
        if (!F->exact_rational() && !a.c.enclosure)
            throw CliError{2, "cdf '" + F->name() +
                                  "' has no exact rational form; pass --enclosure to accept "
                                  "double-evaluated values (the table is then exact for the "
                                  "piecewise interpolant of those values)"};
        rep = vr_report<Rational>(a, proc, *F, kid, threads, which);
    } else if (a.c.backend == "double") {
        rep = vr_report<double>(a, proc, *F, kid, threads, which);
    } else {
        if (kid != KernelId::noe)
            throw CliError{2, "pair backend supports only the noe kernel"};
        rep = vr_report<Pair>(a, proc, *F, kid, threads, which);
    }
    emit(a.c, a.c.format == "json" ? rep.dump(2) : vr_csv(rep, which));
    return 0;
}

// --------------------------------------------------------------- bench ----

struct BenchArgs {
    std::vector<std::size_t> sizes;
    std::string mode = "square";  // square: n1=n2=l; onegroup: n1=l, n2=0
    unsigned repeats = 3;
    Common c;
};

template <class S>
std::pair<double, S> bench_once(const TransformedBoundaries<S>& tb, KernelId kid,
                                unsigned threads, const std::string& mode) {
    const auto t0 = std::chrono::steady_clock::now();
    S value;
    if (mode == "onegroup" && kid == KernelId::bolshev) {
        value = bolshev_one_group(tb.u);
    } else {
        value = compute_psi(tb, kid, threads)(tb.n1, tb.n2);
    }
    const auto t1 = std::chrono::steady_clock::now();
    return {std::chrono::duration<double, std::milli>(t1 - t0).count(), value};
}

template <>
std::pair<double, Pair> bench_once<Pair>(const TransformedBoundaries<Pair>& tb, KernelId kid,
                                         unsigned threads, const std::string&) {
    const auto t0 = std::chrono::steady_clock::now();
    Pair value = compute_psi(tb, kid, threads)(tb.n1, tb.n2);
    const auto t1 = std::chrono::steady_clock::now();
    return {std::chrono::duration<double, std::milli>(t1 - t0).count(), value};
}

template <class S>
json bench_row(const BenchArgs& a, std::size_t l, const ContinuousCdf& F, KernelId kid,
               unsigned threads) {
    const std::size_t n1 = l, n2 = a.mode == "square" ? l : 0;
    const std::size_t n = n1 + n2;
    std::vector<Rational> b;
    for (std::size_t i = 1; i <= n; ++i)
        b.push_back(Rational(static_cast<unsigned long>(i)) /
                    Rational(static_cast<unsigned long>(n + 1)));

    TransformedBoundaries<S> tb;
    tb.n1 = n1;
    tb.n2 = n2;
    for (const Rational& x : b) {
        tb.u.push_back(scalar_traits<S>::from_rational(x));
        if constexpr (std::is_same_v<S, Rational>) {
            tb.f.push_back(F.exact_rational() ? F.eval_rational(x)
                                              : Rational(F.eval(rational_to_double(x))));
        } else {
            tb.f.push_back(S(F.eval(rational_to_double(x))));
        }
    }

    std::vector<double> times;
    S value = scalar_traits<S>::zero();
    const unsigned reps = std::max(3u, a.repeats);
    for (unsigned r = 0; r < reps; ++r) {
        auto [ms, v] = bench_once(tb, kid, threads, a.mode);
        times.push_back(ms);
        value = v;
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];

    json row;
    row["n1"] = n1;
    row["n2"] = n2;
    row["kernel"] = a.c.kernel;
    row["backend"] = a.c.backend;
    row["threads"] = threads;
    row["repeats"] = reps;
    row["wall_ms_median"] = median;
    row["value"] = dec(value);
    if (a.c.count_ops) {
        const CountedKernel ck = kid == KernelId::bolshev
                                     ? (a.mode == "onegroup" ? CountedKernel::bolshev1
                                                             : CountedKernel::bolshev2)
                                 : kid == KernelId::steck ? CountedKernel::steck2
                                                          : CountedKernel::noe2;
        const OpCounter oc = count_operations(ck, tb);
        row["adds"] = oc.adds;
        row["subs"] = oc.subs;
        row["muls"] = oc.muls;
        row["divs"] = oc.divs;
        row["total_ops"] = oc.total();
    }
    return row;
}

int run_bench(const BenchArgs& a) {
    if (a.sizes.empty()) throw CliError{2, "--sizes must list at least one size"};
    const auto F = parse_cdf(a.c.cdf);
    const KernelId kid = parse_kernel(a.c.kernel);
    const unsigned threads = resolve_threads(a.c.threads);
    if (a.c.backend == "pair" && kid != KernelId::noe)
        throw CliError{2, "pair backend supports only the noe kernel"};

    json rows = json::array();
    for (std::size_t l : a.sizes) {
        if (l == 0) throw CliError{2, "sizes must be >= 1"};
        if (a.c.backend == "rational")
            rows.push_back(bench_row<Rational>(a, l, *F, kid, threads));
        else if (a.c.backend == "double")
            rows.push_back(bench_row<double>(a, l, *F, kid, threads));
        else
            rows.push_back(bench_row<Pair>(a, l, *F, kid, threads));
    }

    if (a.c.format == "json") {
        json rep;
        rep["schema_version"] = 1;
        rep["command"] = "bench";
        rep["mode"] = a.mode;
        rep["cdf"] = F->name();
        rep["rows"] = rows;
        emit(a.c, rep.dump(2));
        return 0;
    }
    std::ostringstream os;
    os << "n1,n2,kernel,backend,threads,repeats,wall_ms_median,value";
    if (a.c.count_ops) os << ",adds,subs,muls,divs,total_ops";
    os << "\n";
    for (const auto& r : rows) {
        os << r["n1"] << "," << r["n2"] << "," << r["kernel"].get<std::string>() << ","
           << r["backend"].get<std::string>() << "," << r["threads"] << "," << r["repeats"]
           << "," << r["wall_ms_median"] << "," << r["value"].get<std::string>();
        if (a.c.count_ops)
            os << "," << r["adds"] << "," << r["subs"] << "," << r["muls"] << "," << r["divs"]
               << "," << r["total_ops"];
        os << "\n";
    }
    emit(a.c, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint cdfs of order statistics and exact step-up multiple-testing "
                 "quantities (double, pair, and rational backends)"};
    app.require_subcommand(1);

    PsiArgs psi;
    CLI::App* cmd_psi = app.add_subcommand(
        "psi", "P(X_(1) <= b_1, ..., X_(n) <= b_n) for n1 uniforms and n2 F-variables");
    cmd_psi->add_option("--n1", psi.n1, "number of Uniform[0,1] variables");
    cmd_psi->add_option("--n2", psi.n2, "number of F-distributed variables");
    cmd_psi->add_option("--thresholds", psi.thresholds_file,
                        "file with one threshold per line (decimal or p/q; # comments)");
    cmd_psi->add_option("--bh", psi.bh, "generate thresholds b_i = i*ALPHA/M")
        ->expected(2);
    cmd_psi->add_option("--cdf", psi.c.cdf,
                        "second-group cdf: uniform | power(k=2) | ztest(N=5) | chisq(nu=2,mu=1)");
    add_common(cmd_psi, psi.c);

    VrArgs vr;
    auto add_vr_options = [&vr](CLI::App* cmd) {
        cmd->add_option("--model", vr.model, "p-value model")
            ->check(CLI::IsMember({"fm", "rm"}));
        cmd->add_option("--m", vr.m, "number of hypotheses")->required();
        cmd->add_option("--m0", vr.m0, "number of true nulls (FM)")
            ->each([&vr](const std::string&) { vr.m0_set = true; });
        cmd->add_option("--pi0", vr.pi0, "probability a null is true (RM)");
        cmd->add_option("--alpha", vr.alpha, "BH level: critical values i*alpha/m");
        cmd->add_option("--thresholds", vr.thresholds_file, "file with m critical values");
        cmd->add_option("--lambda", vr.lambda, "also report the lambda-power");
        cmd->add_option("--cdf", vr.c.cdf, "p-value cdf under the alternative");
        add_common(cmd, vr.c);
    };
    CLI::App* cmd_vr =
        app.add_subcommand("joint-vr", "joint distribution of (V, R) for a step-up procedure");
    add_vr_options(cmd_vr);
    CLI::App* cmd_power =
        app.add_subcommand("power", "average power (and optional lambda-power)");
    add_vr_options(cmd_power);
    CLI::App* cmd_fdp =
        app.add_subcommand("fdp-dist", "exact distribution of the false discovery proportion");
    add_vr_options(cmd_fdp);

    BenchArgs bench;
    CLI::App* cmd_bench = app.add_subcommand("bench", "timing and operation-count table");
    cmd_bench->add_option("--sizes", bench.sizes, "comma-separated size list")
        ->required()
        ->delimiter(',');
    cmd_bench->add_option("--mode", bench.mode, "square: n1=n2=size; onegroup: n2=0")
        ->check(CLI::IsMember({"square", "onegroup"}));
    cmd_bench->add_option("--repeats", bench.repeats, "runs per size (median reported, >= 3)");
    cmd_bench->add_option("--cdf", bench.c.cdf, "second-group cdf for square mode");
    bench.c.count_ops = true;  // bench includes op counts unless --no-count-ops
    add_common(cmd_bench, bench.c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (cmd_psi->parsed()) return run_psi(psi);
        if (cmd_vr->parsed()) return run_vr(vr, "joint-vr");
        if (cmd_power->parsed()) return run_vr(vr, "power");
        if (cmd_fdp->parsed()) return run_vr(vr, "fdp-dist");
        if (cmd_bench->parsed()) return run_bench(bench);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.msg << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
