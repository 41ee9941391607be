// SPDX-License-Identifier: Apache-2.0
// aragsim: command line front end for the cached-retrieval session simulator.
//
//   ingest   jsonl corpus -> passage store directory
//   index    passage store -> bm25 index file
//   run      experiment config -> one trace file per (session, arm) + manifest
//   report   finished run directory -> report.json and csv tables
//
// Failures print one "aragsim: <message>" line to stderr and exit 1; the
// exit code is 0 only when every requested step completed and validated.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <arag/experiment.hpp>

namespace {

// shared empty-string sentinel for "flag not given"
arag::ExperimentOverrides run_overrides(const std::string& corpus, const std::string& queries,
                                        const std::string& out, const std::string& workload,
                                        const std::vector<std::string>& arms) {
    arag::ExperimentOverrides ov;
    if (!corpus.empty()) ov.corpus = corpus;
    if (!queries.empty()) ov.queries = queries;
    if (!out.empty()) ov.output_dir = out;
    if (!workload.empty()) ov.workload = workload;
    if (!arms.empty()) ov.arms = arms;
    return ov;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale simulator for cached retrieval-augmented generation"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "tokenize a jsonl corpus into a passage store");
    std::string in_corpus, store_out, tokenizer = "whitespace";
    std::size_t passage_size = 100;
    ingest->add_option("--corpus", in_corpus, "jsonl file of {id, text} records")->required();
    ingest->add_option("--out", store_out, "directory to write the passage store")->required();
    ingest->add_option("--passage-size", passage_size, "max tokens per passage");
    ingest->add_option("--tokenizer", tokenizer, "whitespace or byte");

    auto* index_cmd = app.add_subcommand("index", "build a bm25 index from a passage store");
    std::string store_dir, index_out;
    index_cmd->add_option("--store", store_dir, "passage store directory")->required();
    index_cmd->add_option("--out", index_out, "file to write the index to")->required();

    auto* run_cmd = app.add_subcommand("run", "run the session x arm grid from a config");
    std::string config_path, ov_corpus, ov_queries, ov_out, ov_workload;
    std::vector<std::string> ov_arms;
    int workers = 1;
    bool fresh = false;
    run_cmd->add_option("--config", config_path, "experiment config (json)")->required();
    run_cmd->add_option("--corpus", ov_corpus, "override the config's corpus path");
    run_cmd->add_option("--queries", ov_queries, "override the config's query set path");
    run_cmd->add_option("--out", ov_out, "override the config's output directory");
    run_cmd->add_option("--workload", ov_workload, "override the workload label");
    run_cmd->add_option("--arms", ov_arms, "override the arm list")->delimiter(',');
    run_cmd->add_option("--workers", workers, "sessions run in parallel");
    run_cmd->add_flag("--fresh", fresh, "ignore an existing manifest and redo everything");

    auto* report_cmd = app.add_subcommand("report", "score a finished run directory");
    std::string run_dir, rep_corpus;
    std::optional<double> prefill_cost, pass_cost, retrieval_cost;
    std::optional<int> max_len;
    report_cmd->add_option("--run", run_dir, "run directory holding manifest.json")->required();
    report_cmd->add_option("--prefill-cost", prefill_cost, "cost units per prefilled token");
    report_cmd->add_option("--pass-cost", pass_cost, "cost units per decode forward pass");
    report_cmd->add_option("--retrieval-cost", retrieval_cost, "cost units per retrieval call");
    report_cmd->add_option("--max-len", max_len, "longest copy window in the coverage curve");
    report_cmd->add_option("--corpus", rep_corpus, "corpus path, when the original moved");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "aragsim: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*ingest) {
            auto store = arag::ingest_jsonl_file(in_corpus, passage_size,
                                                 arag::tokenizer_mode_from_name(tokenizer));
            store.save(store_out);
            std::cout << "ingested " << store.passages().size() << " passages into "
                      << store_out << "\n";
        } else if (*index_cmd) {
            auto store = arag::CorpusStore::load(store_dir);
            auto index = arag::Bm25Index::build(store);
            index.save(index_out);
            std::cout << "indexed " << index.doc_count() << " passages into " << index_out
                      << "\n";
        } else if (*run_cmd) {
            auto e = arag::load_experiment(
                config_path, run_overrides(ov_corpus, ov_queries, ov_out, ov_workload, ov_arms));
            auto summary = arag::run_experiment(e, workers, fresh);
            std::cout << "workload " << e.workload << ": ran " << summary.ran << ", resumed "
                      << summary.skipped << " of " << summary.total
                      << " (session, arm) items; traces under " << summary.out_dir << "\n";
        } else if (*report_cmd) {
            arag::ReportOverrides ov;
            ov.prefill_token = prefill_cost;
            ov.forward_pass = pass_cost;
            ov.retrieval = retrieval_cost;
            ov.max_len = max_len;
            if (!rep_corpus.empty()) ov.corpus = rep_corpus;
            auto report = arag::write_report(run_dir, ov);
            for (const auto& row : report.rows) {
                std::cout << row.workload << "/" << row.arm << ": prefill " << row.prefill_x
                          << "x, decode " << row.decode_x << "x, end to end " << row.e2e_x
                          << "x\n";
            }
            std::cout << "report written under " << run_dir << "/report\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "aragsim: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
