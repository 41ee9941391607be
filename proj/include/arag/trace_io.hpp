// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arag/session.hpp"

// Trace files: one JSON object per line. First line is a header carrying the
// arm label and the full session config, then one line per round, then a
// summary line. Every field needed to recompute the report is embedded, so a
// reader never needs the live session objects. Serialization is reserved for
// byte-comparison in determinism checks: same config + seed must produce the
// same bytes, which is why ordered_json (insertion-ordered keys) is used
// throughout.

namespace arag {

struct RunTrace {
    std::string arm;       // toggle-set label, e.g. "baseline" or "full"
    std::string workload;  // corpus / query-set label
    SessionConfig config;
    GenerationTrace trace;
};

namespace trace_json {

using json = nlohmann::ordered_json;

inline json cost_to_json(const CostCounters& c) {
    json j;
    j["prompt_computed"] = c.prompt_tokens_computed;
    j["prompt_reused"] = c.prompt_tokens_reused;
    j["decode_passes"] = c.decode_passes;
    j["answer_tokens"] = c.answer_tokens;
    j["retrieval_calls"] = c.retrieval_calls;
    return j;
}

inline CostCounters cost_from_json(const json& j) {
    CostCounters c;
    c.prompt_tokens_computed = j.at("prompt_computed").get<std::uint64_t>();
    c.prompt_tokens_reused = j.at("prompt_reused").get<std::uint64_t>();
    c.decode_passes = j.at("decode_passes").get<std::uint64_t>();
    c.answer_tokens = j.at("answer_tokens").get<std::uint64_t>();
    c.retrieval_calls = j.at("retrieval_calls").get<std::uint64_t>();
    return c;
}

inline json config_to_json(const SessionConfig& cfg) {
    json j;
    j["session_id"] = cfg.session_id;
    j["initial_query"] = cfg.initial_query;
    j["policy"] = {{"kind", policy_kind_name(cfg.policy.kind)},
                   {"interval", cfg.policy.interval},
                   {"threshold", cfg.policy.threshold},
                   {"top_w", cfg.policy.top_w}};
    j["n_docs"] = cfg.n_docs;
    j["t_max"] = cfg.t_max;
    j["max_round_tokens"] = cfg.max_round_tokens;
    j["toggles"] = {{"cics", cfg.toggles.cics},
                    {"idgr", cfg.toggles.idgr},
                    {"igpg", cfg.toggles.igpg}};
    j["ngram_order"] = cfg.ngram_order;
    j["max_draft"] = cfg.max_draft;
    j["bleed"] = cfg.bleed;
    j["index_prior_answers"] = cfg.index_prior_answers;
    j["cache_capacity"] = cfg.cache_capacity;
    j["lm_min_match"] = cfg.lm_min_match;
    j["lm_hash_window"] = cfg.lm_hash_window;
    j["seed"] = cfg.seed;
    return j;
}

inline SessionConfig config_from_json(const json& j) {
    SessionConfig cfg;
    cfg.session_id = j.at("session_id").get<std::string>();
    cfg.initial_query = j.at("initial_query").get<std::string>();
    const auto& p = j.at("policy");
    cfg.policy.kind = policy_kind_from(p.at("kind").get<std::string>());
    cfg.policy.interval = p.at("interval").get<int>();
    cfg.policy.threshold = p.at("threshold").get<double>();
    cfg.policy.top_w = p.at("top_w").get<int>();
    cfg.n_docs = j.at("n_docs").get<int>();
    cfg.t_max = j.at("t_max").get<int>();
    cfg.max_round_tokens = j.at("max_round_tokens").get<int>();
    const auto& t = j.at("toggles");
    cfg.toggles.cics = t.at("cics").get<bool>();
    cfg.toggles.idgr = t.at("idgr").get<bool>();
    cfg.toggles.igpg = t.at("igpg").get<bool>();
    cfg.ngram_order = j.at("ngram_order").get<int>();
    cfg.max_draft = j.at("max_draft").get<int>();
    cfg.bleed = j.at("bleed").get<bool>();
    cfg.index_prior_answers = j.at("index_prior_answers").get<bool>();
    cfg.cache_capacity = j.at("cache_capacity").get<std::size_t>();
    cfg.lm_min_match = j.at("lm_min_match").get<int>();
    cfg.lm_hash_window = j.at("lm_hash_window").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

inline json surfaces_of(const TokenSeq& toks) {
    json arr = json::array();
    for (const auto& t : toks) arr.push_back(t.surface);
    return arr;
}

inline TokenSeq tokens_from_surfaces(const json& arr) {
    TokenSeq out;
    out.reserve(arr.size());
    for (const auto& s : arr) out.push_back(make_token(s.get<std::string>()));
    return out;
}

inline json round_to_json(const RoundRecord& rec) {
    json j;
    j["kind"] = "round";
    j["round"] = rec.round;
    j["query"] = rec.query_text;
    json hits = json::array();
    for (const auto& h : rec.hits) hits.push_back({{"id", h.passage_id}, {"score", h.score}});
    j["hits"] = hits;
    if (rec.overlap_with_prev) {
        j["overlap"] = *rec.overlap_with_prev;
    } else {
        j["overlap"] = nullptr;
    }
    j["cached"] = rec.cached_ids;
    j["fresh"] = rec.fresh_ids;
    j["evicted"] = rec.evicted;
    json audits = json::array();
    for (const auto& a : rec.audits) {
        audits.push_back({{"doc", a.doc_id},
                          {"slot", a.position_slot},
                          {"rank", a.rank},
                          {"reused", a.reused},
                          {"stale", a.stale},
                          {"ghosts", a.ghost_ids},
                          {"suppressed", a.suppressed_ids}});
    }
    j["audits"] = audits;
    j["instruction"] = rec.instruction;
    j["unrelated"] = rec.unrelated_ids;
    j["answer"] = surfaces_of(rec.answer);
    j["confidences"] = rec.confidences;
    json drafts = json::array();
    for (const auto& d : rec.draft_steps) {
        drafts.push_back({{"draft", d.draft},
                          {"verdicts", d.verdicts},
                          {"emitted", d.emitted},
                          {"speculative", d.speculative}});
    }
    j["drafts"] = drafts;
    j["cost"] = cost_to_json(rec.cost);
    j["stop"] = rec.stop;
    return j;
}

inline RoundRecord round_from_json(const json& j) {
    RoundRecord rec;
    rec.round = j.at("round").get<int>();
    rec.query_text = j.at("query").get<std::string>();
    for (const auto& h : j.at("hits")) {
        rec.hits.push_back({h.at("id").get<std::string>(), h.at("score").get<double>()});
    }
    if (!j.at("overlap").is_null()) rec.overlap_with_prev = j.at("overlap").get<double>();
    rec.cached_ids = j.at("cached").get<std::vector<std::string>>();
    rec.fresh_ids = j.at("fresh").get<std::vector<std::string>>();
    rec.evicted = j.at("evicted").get<std::vector<std::string>>();
    for (const auto& a : j.at("audits")) {
        SpanAudit audit;
        audit.doc_id = a.at("doc").get<std::string>();
        audit.position_slot = a.at("slot").get<int>();
        audit.rank = a.at("rank").get<int>();
        audit.reused = a.at("reused").get<bool>();
        audit.stale = a.at("stale").get<bool>();
        audit.ghost_ids = a.at("ghosts").get<std::vector<std::string>>();
        audit.suppressed_ids = a.at("suppressed").get<std::vector<std::string>>();
        rec.audits.push_back(std::move(audit));
    }
    rec.instruction = j.at("instruction").get<std::string>();
    rec.unrelated_ids = j.at("unrelated").get<std::vector<std::string>>();
    rec.answer = tokens_from_surfaces(j.at("answer"));
    rec.confidences = j.at("confidences").get<std::vector<double>>();
    for (const auto& d : j.at("drafts")) {
        DraftRecord dr;
        dr.draft = d.at("draft").get<std::vector<std::string>>();
        dr.verdicts = d.at("verdicts").get<std::vector<bool>>();
        dr.emitted = d.at("emitted").get<std::size_t>();
        dr.speculative = d.at("speculative").get<bool>();
        rec.draft_steps.push_back(std::move(dr));
    }
    rec.cost = cost_from_json(j.at("cost"));
    rec.stop = j.at("stop").get<std::string>();
    return rec;
}

}  // namespace trace_json

inline void write_trace(std::ostream& out, const RunTrace& rt) {
    using trace_json::json;
    json header;
    header["schema_version"] = kTraceSchemaVersion;
    header["kind"] = "header";
    header["arm"] = rt.arm;
    header["workload"] = rt.workload;
    header["session_id"] = rt.trace.session_id;
    header["config"] = trace_json::config_to_json(rt.config);
    out << header.dump() << '\n';
    for (const auto& rec : rt.trace.rounds) {
        out << trace_json::round_to_json(rec).dump() << '\n';
    }
    json summary;
    summary["kind"] = "summary";
    summary["stop_reason"] = rt.trace.stop_reason;
    summary["total"] = trace_json::cost_to_json(rt.trace.total);
    summary["answer_text"] = rt.trace.answer_text;
    out << summary.dump() << '\n';
}

inline RunTrace read_trace(std::istream& in) {
    using trace_json::json;
    RunTrace rt;
    std::string line;
    bool have_header = false;
    bool have_summary = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (!have_header) {
            if (j.value("kind", "") != "header") throw Error("trace file must start with a header line");
            int version = j.at("schema_version").get<int>();
            if (version != kTraceSchemaVersion) {
                throw Error("unsupported trace schema_version " + std::to_string(version));
            }
            rt.arm = j.at("arm").get<std::string>();
            rt.workload = j.at("workload").get<std::string>();
            rt.config = trace_json::config_from_json(j.at("config"));
            rt.trace.session_id = j.at("session_id").get<std::string>();
            have_header = true;
            continue;
        }
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "round") {
            rt.trace.rounds.push_back(trace_json::round_from_json(j));
        } else if (kind == "summary") {
            rt.trace.stop_reason = j.at("stop_reason").get<std::string>();
            rt.trace.total = trace_json::cost_from_json(j.at("total"));
            rt.trace.answer_text = j.at("answer_text").get<std::string>();
            have_summary = true;
        } else {
            throw Error("unknown trace line kind: " + kind);
        }
    }
    if (!have_header) throw Error("trace file has no header line");
    if (!have_summary) throw Error("trace file truncated: no summary line");
    return rt;
}

inline void write_trace_file(const std::string& path, const RunTrace& rt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open trace file for writing: " + path);
    write_trace(out, rt);
    if (!out) throw Error("failed while writing trace file: " + path);
}

inline RunTrace read_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open trace file: " + path);
    try {
        return read_trace(in);
    } catch (const std::exception& e) {
        throw Error(std::string(e.what()) + " (" + path + ")");
    }
}

inline std::string trace_to_string(const RunTrace& rt) {
    std::ostringstream out;
    write_trace(out, rt);
    return out.str();
}

}  // namespace arag
