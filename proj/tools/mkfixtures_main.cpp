// SPDX-License-Identifier: Apache-2.0
// Writes the bundled fixtures: a synthetic corpus, a 20-session query set,
// and a ready experiment config, plus a single scripted session whose cache
// states walk from all-fresh to all-cached. Output is deterministic; the
// committed copies under fixtures/ were produced by this tool and the cli
// integration test replays them.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <arag/experiment.hpp>
#include <arag/synth.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void put(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw arag::Error("cannot write " + path.string());
    out << text;
}

std::string corpus_jsonl(const std::vector<std::pair<std::string, std::string>>& docs) {
    std::string out;
    for (const auto& [id, text] : docs) {
        json j;
        j["id"] = id;
        j["text"] = text;
        out += j.dump() + "\n";
    }
    return out;
}

// One row per session, carrying its complete settings so the experiment
// defaults never shift a fixture session. Toggles stay out; arms set them.
std::string queries_jsonl(const std::vector<arag::synth::SessionPlan>& plans) {
    std::string out;
    json header;
    header["schema_version"] = arag::kQuerySetSchemaVersion;
    header["kind"] = "query_set_header";
    out += header.dump() + "\n";
    for (const auto& plan : plans) {
        json row;
        row["kind"] = "query";
        json cfg = arag::trace_json::config_to_json(plan.config);
        cfg.erase("toggles");
        for (auto it = cfg.begin(); it != cfg.end(); ++it) row[it.key()] = *it;
        out += row.dump() + "\n";
    }
    return out;
}

std::string experiment_json(const std::string& workload, const std::string& out_dir,
                            const std::vector<std::string>& arms) {
    json cfg;
    cfg["schema_version"] = arag::kConfigSchemaVersion;
    cfg["kind"] = "experiment";
    cfg["workload"] = workload;
    cfg["corpus"] = "corpus.jsonl";
    cfg["queries"] = "queries.jsonl";
    cfg["output_dir"] = out_dir;
    cfg["arms"] = arms;
    cfg["passage_size"] = 8192;  // fixture passages are whole documents
    cfg["coverage_max_len"] = 8;
    return cfg.dump(2) + "\n";
}

void write_set(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& docs,
               const std::vector<arag::synth::SessionPlan>& plans, const std::string& workload,
               const std::vector<std::string>& arms) {
    fs::create_directories(dir);
    put(dir / "corpus.jsonl", corpus_jsonl(docs));
    put(dir / "queries.jsonl", queries_jsonl(plans));
    put(dir / "experiment.json", experiment_json(workload, "out/" + workload, arms));
}

}  // namespace

int main(int argc, char** argv) {
    const std::string root = argc > 1 ? argv[1] : "fixtures";
    try {
        auto bundle = arag::synth::bundle_workload();
        write_set(fs::path(root) / "bundle", bundle.docs, bundle.sessions, "bundle",
                  {"baseline", "full"});

        auto fig = arag::synth::fig_walkthrough_plan();
        write_set(fs::path(root) / "walkthrough", fig.docs, {fig}, "walkthrough",
                  {"baseline", "cics", "full"});

        std::cout << "wrote fixtures under " << root << "\n";
    } catch (const std::exception& e) {
        std::cerr << "mkfixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
