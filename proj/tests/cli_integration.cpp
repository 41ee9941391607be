// SPDX-License-Identifier: Apache-2.0
// End-to-end exercise of the aragsim binary against the committed fixtures.
// The test runner passes the binary locations through ARAGSIM_BIN and
// ARAGSIM_MKFIXTURES and the fixture root through ARAGSIM_FIXTURES. Each
// scenario prints one line; the process exits nonzero on the first broken
// expectation so ctest reports it.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int g_failed = 0;

void check(bool ok, const std::string& label, const std::string& why = "") {
    std::cout << (ok ? "ok " : "FAIL ") << label;
    if (!ok && !why.empty()) std::cout << " [" << why << "]";
    std::cout << "\n";
    if (!ok) ++g_failed;
}

struct Completed {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Completed run(const std::string& cmd, const fs::path& scratch) {
    const auto out_path = scratch / "cmd.out";
    const auto err_path = scratch / "cmd.err";
    const std::string full = cmd + " > " + out_path.string() + " 2> " + err_path.string();
    const int status = std::system(full.c_str());
    Completed c;
    c.exit_code = (status == -1) ? -1 : WEXITSTATUS(status);
    c.out = slurp(out_path);
    c.err = slurp(err_path);
    return c;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& en : fs::directory_iterator(dir)) {
        if (en.is_regular_file()) out[en.path().filename().string()] = slurp(en.path());
    }
    return out;
}

std::string need_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) {
        std::cerr << "cli_integration: " << name << " is not set\n";
        std::exit(2);
    }
    return v;
}

}  // namespace

int main() {
    const std::string bin = need_env("ARAGSIM_BIN");
    const std::string mk = need_env("ARAGSIM_MKFIXTURES");
    const fs::path fixtures = need_env("ARAGSIM_FIXTURES");

    const fs::path work = fs::temp_directory_path() / "arag_cli_integration";
    fs::remove_all(work);
    fs::create_directories(work);

    const std::string bundle_cfg = (fixtures / "bundle" / "experiment.json").string();

    // the bundled workload: 20 sessions x {baseline, full} = 40 traces
    auto r1 = run(bin + " run --config " + bundle_cfg + " --out " + (work / "b1").string() +
                      " --workers 4",
                  work);
    check(r1.exit_code == 0, "bundle run exits 0", r1.err);
    check(contains(r1.out, "ran 40, resumed 0 of 40"), "bundle run covers the whole grid",
          r1.out);
    auto traces1 = dir_bytes(work / "b1" / "traces");
    check(traces1.size() == 40, "bundle run leaves 40 trace files",
          "found " + std::to_string(traces1.size()));
    check(fs::exists(work / "b1" / "manifest.json"), "bundle run leaves a manifest");

    // rerunning resumes through the manifest instead of recomputing
    auto r2 = run(bin + " run --config " + bundle_cfg + " --out " + (work / "b1").string(),
                  work);
    check(r2.exit_code == 0 && contains(r2.out, "ran 0, resumed 40"),
          "second run resumes every item", r2.out);

    // a separate run of the same config produces byte-identical traces
    auto r3 = run(bin + " run --config " + bundle_cfg + " --out " + (work / "b2").string() +
                      " --workers 2",
                  work);
    check(r3.exit_code == 0, "repeat run exits 0", r3.err);
    auto traces2 = dir_bytes(work / "b2" / "traces");
    check(traces1 == traces2, "repeat run is byte-identical across 40 traces");

    // the report lands next to the traces and names both arms
    auto r4 = run(bin + " report --run " + (work / "b1").string(), work);
    check(r4.exit_code == 0, "report exits 0", r4.err);
    check(contains(r4.out, "bundle/full"), "report prints the workload/arm row", r4.out);
    for (const char* f :
         {"report.json", "speedup.csv", "runtime_breakdown.csv", "overlap.csv", "coverage.csv"}) {
        check(fs::exists(work / "b1" / "report" / f), std::string("report writes ") + f);
    }
    check(contains(slurp(work / "b1" / "report" / "speedup.csv"), "bundle,full,"),
          "speedup table carries the bundle row");

    // the scripted walkthrough fixture runs all three of its arms
    auto r5 = run(bin + " run --config " +
                      (fixtures / "walkthrough" / "experiment.json").string() + " --out " +
                      (work / "walk").string(),
                  work);
    auto r6 = run(bin + " report --run " + (work / "walk").string(), work);
    check(r5.exit_code == 0 && dir_bytes(work / "walk" / "traces").size() == 3,
          "walkthrough run leaves one trace per arm", r5.err);
    check(r6.exit_code == 0 && contains(r6.out, "walkthrough/cics"),
          "walkthrough report covers the cache-only arm", r6.out);

    // ingest and index round-trip the fixture corpus
    auto r7 = run(bin + " ingest --corpus " + (fixtures / "bundle" / "corpus.jsonl").string() +
                      " --out " + (work / "store").string() + " --passage-size 8192",
                  work);
    auto r8 = run(bin + " index --store " + (work / "store").string() + " --out " +
                      (work / "bundle.idx").string(),
                  work);
    check(r7.exit_code == 0 && contains(r7.out, "135 passages"), "ingest reports its passages",
          r7.out);
    check(r8.exit_code == 0 && fs::exists(work / "bundle.idx"), "index writes its file", r8.err);

    // config errors carry file:line and the aragsim prefix on stderr
    {
        std::ofstream bad(work / "bad.json");
        bad << "{\n"
               "  \"schema_version\": 1,\n"
               "  \"corpus\": \"c\",\n"
               "  \"queries\": \"q\",\n"
               "  \"output_dir\": \"o\",\n"
               "  \"arms\": [\"warp\"]\n"
               "}\n";
    }
    auto r9 = run(bin + " run --config " + (work / "bad.json").string(), work);
    check(r9.exit_code == 1, "bad config exits 1");
    check(contains(r9.err, "aragsim: ") && contains(r9.err, "bad.json:6") &&
              contains(r9.err, "unknown arm"),
          "bad config error names file, line, and arm", r9.err);

    auto r10 = run(bin, work);
    check(r10.exit_code != 0, "missing subcommand is an error");

    // the committed fixtures are exactly what the generator produces
    auto r11 = run(mk + " " + (work / "fx").string(), work);
    check(r11.exit_code == 0, "fixture generator exits 0", r11.err);
    bool fx_same = true;
    std::string fx_why;
    for (const char* set : {"bundle", "walkthrough"}) {
        for (const char* f : {"corpus.jsonl", "queries.jsonl", "experiment.json"}) {
            auto committed = fixtures / set / f;
            auto generated = work / "fx" / set / f;
            if (slurp(committed) != slurp(generated)) {
                fx_same = false;
                fx_why = std::string(set) + "/" + f;
            }
        }
    }
    check(fx_same, "committed fixtures match the generator", fx_why + " drifted");

    std::cout << (g_failed == 0 ? "all scenarios passed\n"
                                : std::to_string(g_failed) + " scenario(s) failed\n");
    return g_failed == 0 ? 0 : 1;
}
