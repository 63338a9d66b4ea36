// Command-line front end: plan inspection, stream replay, stream generation
// and the benchmark harness.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "djoin/djoin.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCyclic = 2;
constexpr int kExitData = 3;

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw djoin::DataError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<djoin::RelationGenSpec> parse_relations_spec(const std::string& spec) {
    std::vector<djoin::RelationGenSpec> out;
    std::string cur;
    std::istringstream is(spec);
    while (std::getline(is, cur, ',')) {
        auto colon = cur.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= cur.size())
            throw djoin::DataError("relation spec must look like name:ktis, got " + cur);
        out.push_back({cur.substr(0, colon), cur.substr(colon + 1)});
    }
    if (out.empty()) throw djoin::DataError("empty relation spec");
    return out;
}

int cmd_plan(const std::string& query_path, bool dot, bool json) {
    djoin::Gcq q = djoin::parse_query(slurp(query_path));
    djoin::Classification c = djoin::classify(q);
    std::cout << c.str() << "\n";
    if (!c.acyclic()) return kExitCyclic;
    djoin::GjtPair pair = djoin::build_plan(q);
    if (dot) std::cout << djoin::to_dot(pair);
    if (json) std::cout << djoin::to_json(pair) << "\n";
    if (!dot && !json) std::cout << pair.tree.str();
    return kExitOk;
}

int cmd_run(const std::string& query_path, const std::string& stream_path,
            const std::string& mode, int64_t every, const std::string& out_path) {
    djoin::RunConfig cfg;
    cfg.query_text = slurp(query_path);
    cfg.events = djoin::read_stream_file(stream_path);
    cfg.mode = mode == "pull" ? djoin::RunMode::Pull : djoin::RunMode::Push;
    cfg.enumerate_every = every;

    std::ofstream out_file;
    if (!out_path.empty()) {
        out_file.open(out_path);
        if (!out_file) throw djoin::DataError("cannot open output file " + out_path);
        cfg.sink = &out_file;
    } else {
        cfg.sink = &std::cout;
    }

    djoin::RunReport report = djoin::run(cfg);
    std::cerr << "class: " << report.classification.str() << "\n"
              << "fallback: " << (report.used_fallback ? "yes" : "no") << "\n"
              << "events: " << report.events_processed << "\n"
              << "outputs: " << report.outputs_emitted << "\n"
              << "update-seconds: " << report.update_seconds << "\n"
              << "peak-live-tuples: " << report.peak_live_tuples << "\n";
    std::cerr << "latency-histogram-us:";
    for (size_t i = 0; i < report.latency_us_log2.size(); ++i)
        std::cerr << " [" << (1 << i) << "us]=" << report.latency_us_log2[i];
    std::cerr << "\n";
    return kExitOk;
}

int cmd_gen(const std::string& kind, const std::string& relations, size_t size, uint64_t seed,
            int64_t domain, int64_t ineq_domain, double selectivity,
            const std::string& out_path) {
    djoin::GenSpec spec;
    spec.kind = kind == "temporal" ? djoin::StreamKind::Temporal : djoin::StreamKind::Random;
    spec.relations = parse_relations_spec(relations);
    spec.size = size;
    spec.seed = seed;
    spec.key_domain = domain;
    spec.ineq_domain = ineq_domain;
    spec.selectivity = selectivity;

    std::vector<djoin::StreamEvent> events = djoin::gen_stream(spec);
    if (out_path.empty()) {
        djoin::write_stream(std::cout, events);
    } else {
        std::ofstream f(out_path);
        if (!f) throw djoin::DataError("cannot open output file " + out_path);
        djoin::write_stream(f, events);
    }
    return kExitOk;
}

int cmd_bench(const std::string& config_path, const std::string& out_path) {
    nlohmann::json cfg = nlohmann::json::parse(slurp(config_path));
    std::vector<djoin::BenchCase> cases;
    for (const auto& jc : cfg.at("cases")) {
        djoin::BenchCase c;
        c.name = jc.at("name").get<std::string>();
        c.query_text = jc.at("query").get<std::string>();
        c.gen.kind = jc.value("kind", std::string("random")) == "temporal"
                         ? djoin::StreamKind::Temporal
                         : djoin::StreamKind::Random;
        for (const auto& jr : jc.at("relations"))
            c.gen.relations.push_back(
                {jr.at("name").get<std::string>(), jr.at("columns").get<std::string>()});
        c.gen.seed = jc.value("seed", 1);
        c.gen.key_domain = jc.value("key_domain", 200);
        c.gen.ineq_domain = jc.value("ineq_domain", 0);
        c.gen.selectivity = jc.value("selectivity", -1.0);
        cases.push_back(std::move(c));
    }
    std::vector<size_t> sizes = cfg.at("sizes").get<std::vector<size_t>>();

    std::string csv = djoin::bench_csv(djoin::bench(cases, sizes));
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(out_path);
        if (!f) throw djoin::DataError("cannot open output file " + out_path);
        f << csv;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic theta-join query engine"};
    app.require_subcommand(1);

    std::string query_path, stream_path, out_path, mode = "push";
    std::string kind = "random", relations, config_path;
    bool dot = false, json = false;
    int64_t every = 0, domain = 200, ineq_domain = 0;
    size_t size = 0;
    uint64_t seed = 1;
    double selectivity = -1.0;

    CLI::App* plan = app.add_subcommand("plan", "classify a query and print its plan");
    plan->add_option("query", query_path, "query file")->required();
    plan->add_flag("--dot", dot, "emit the plan as DOT");
    plan->add_flag("--json", json, "emit the plan as JSON");

    CLI::App* runc = app.add_subcommand("run", "replay an update stream");
    runc->add_option("--query", query_path, "query file")->required();
    runc->add_option("--stream", stream_path, "stream file")->required();
    runc->add_option("--mode", mode, "push|pull")->check(CLI::IsMember({"push", "pull"}));
    runc->add_option("--enumerate-every", every, "pull mode: snapshot cadence");
    runc->add_option("--out", out_path, "output file (default stdout)");

    CLI::App* gen = app.add_subcommand("gen-stream", "generate a synthetic stream");
    gen->add_option("--kind", kind, "random|temporal")
        ->check(CLI::IsMember({"random", "temporal"}));
    gen->add_option("--relations", relations, "spec like R:kti,S:kt (k=key, t=inequality, s=string, i=int)")
        ->required();
    gen->add_option("--size", size, "total number of events")->required();
    gen->add_option("--seed", seed, "RNG seed");
    gen->add_option("--domain", domain, "equality key domain [1..D]");
    gen->add_option("--ineq-domain", ineq_domain, "inequality value window (default: size)");
    gen->add_option("--selectivity", selectivity, "target output percentage of the cross product");
    gen->add_option("--out", out_path, "output file (default stdout)");

    CLI::App* benchc = app.add_subcommand("bench", "run the benchmark harness");
    benchc->add_option("--config", config_path, "JSON config")->required();
    benchc->add_option("--out", out_path, "CSV output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (plan->parsed()) return cmd_plan(query_path, dot, json);
        if (runc->parsed()) return cmd_run(query_path, stream_path, mode, every, out_path);
        if (gen->parsed())
            return cmd_gen(kind, relations, size, seed, domain, ineq_domain, selectivity,
                           out_path);
        if (benchc->parsed()) return cmd_bench(config_path, out_path);
    } catch (const djoin::CyclicQueryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCyclic;
    } catch (const djoin::SyntaxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const djoin::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
