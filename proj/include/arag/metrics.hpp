// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "arag/corpus.hpp"
#include "arag/trace_io.hpp"

// Cost accounting over finished traces. Wall-clock is meaningless at desk
// scale, so costs are abstract units: one unit per prefilled token, a fixed
// price per decode forward pass, a fixed price per retrieval call. Speedups
// are ratios of pooled unit costs between a baseline arm and an accelerated
// arm that ran the identical workload. Every ratio is recomputable from the
// raw counters embedded next to it; the emitters never round away precision
// (doubles are printed in shortest round-trip form).

namespace arag {

struct CostModel {
    double prefill_token = 1.0;
    double forward_pass = 100.0;
    double retrieval = 500.0;
};

inline void validate(const CostModel& m) {
    if (m.prefill_token <= 0.0 || m.forward_pass <= 0.0 || m.retrieval <= 0.0) {
        throw Error("cost model units must be positive");
    }
}

struct PhaseCost {
    double prefill = 0.0;
    double decode = 0.0;
    double retrieval = 0.0;
    double total() const { return prefill + decode + retrieval; }
};

inline PhaseCost phase_cost(const CostCounters& c, const CostModel& m) {
    PhaseCost p;
    p.prefill = static_cast<double>(c.prompt_tokens_computed) * m.prefill_token;
    p.decode = static_cast<double>(c.decode_passes) * m.forward_pass;
    p.retrieval = static_cast<double>(c.retrieval_calls) * m.retrieval;
    return p;
}

// total/(total - reused): the prefill speedup implied by reuse alone.
inline double closed_form_prefill_speedup(std::uint64_t total_prompt_tokens,
                                          std::uint64_t reused_tokens) {
    if (reused_tokens >= total_prompt_tokens) {
        throw Error("reused tokens must be a strict subset of the prompt");
    }
    return static_cast<double>(total_prompt_tokens) /
           static_cast<double>(total_prompt_tokens - reused_tokens);
}

struct ArmStats {
    std::size_t sessions = 0;
    CostCounters counters;        // pooled over sessions
    std::uint64_t docs_cached = 0;  // document spans served from cache
    std::uint64_t docs_fresh = 0;   // document spans prefilled
};

struct SpeedupRow {
    std::string workload;
    std::string arm;  // the accelerated arm's label
    ArmStats baseline;
    ArmStats accel;
    double prefill_x = 1.0;
    double decode_x = 1.0;
    double e2e_x = 1.0;
};

struct CoveragePoint {
    int window = 1;
    double fraction = 0.0;
};

struct SpeedupReport {
    CostModel model;
    std::vector<SpeedupRow> rows;  // ordered by (workload, arm)
    std::vector<std::pair<double, std::uint64_t>> overlap_histogram;  // value -> round count
    std::vector<CoveragePoint> coverage;  // filled by coverage_curve when a corpus is at hand
};

namespace detail {

inline ArmStats pool(const std::vector<const RunTrace*>& traces) {
    ArmStats s;
    for (const RunTrace* rt : traces) {
        ++s.sessions;
        s.counters += rt->trace.total;
        for (const auto& rec : rt->trace.rounds) {
            s.docs_cached += rec.cached_ids.size();
            s.docs_fresh += rec.fresh_ids.size();
        }
    }
    return s;
}

inline double cost_ratio(double base, double accel, const char* phase) {
    if (base == 0.0 && accel == 0.0) return 1.0;
    if (accel == 0.0) {
        throw Error(std::string("accelerated arm reports zero ") + phase +
                    " cost while the baseline does not; arms ran different workloads");
    }
    return base / accel;
}

// A session is identified by what was asked, not how it was answered.
struct SessionKey {
    std::string workload;
    std::string session_id;
    std::uint64_t seed;
    std::string initial_query;
    auto tie() const { return std::tie(workload, session_id, seed, initial_query); }
    bool operator<(const SessionKey& o) const { return tie() < o.tie(); }
    bool operator==(const SessionKey& o) const { return tie() == o.tie(); }
};

inline SessionKey key_of(const RunTrace& rt) {
    return SessionKey{rt.workload, rt.trace.session_id, rt.config.seed, rt.config.initial_query};
}

}  // namespace detail

// Pools both arms and forms the three ratios. Baseline traces are matched to
// accelerated traces per (workload, session, seed, query); any difference in
// those sets is an arm mismatch and scoring refuses to continue. Accelerated
// traces may span several arm labels; one row per (workload, arm) comes back.
inline SpeedupReport score(const std::vector<RunTrace>& traces_baseline,
                           const std::vector<RunTrace>& traces_accel, const CostModel& model) {
    validate(model);
    if (traces_baseline.empty() || traces_accel.empty()) {
        throw Error("score needs at least one trace per arm");
    }

    std::map<detail::SessionKey, const RunTrace*> base_by_key;
    for (const auto& rt : traces_baseline) {
        if (!base_by_key.emplace(detail::key_of(rt), &rt).second) {
            throw Error("baseline arm ran session '" + rt.trace.session_id + "' twice");
        }
    }

    // (workload, arm) -> aligned trace pairs
    std::map<std::pair<std::string, std::string>,
             std::pair<std::vector<const RunTrace*>, std::vector<const RunTrace*>>>
        groups;
    for (const auto& rt : traces_accel) {
        auto it = base_by_key.find(detail::key_of(rt));
        if (it == base_by_key.end()) {
            throw Error("arm mismatch: baseline never ran session '" + rt.trace.session_id +
                        "' of workload '" + rt.workload + "' (seed/query must match too)");
        }
        auto& g = groups[{rt.workload, rt.arm}];
        g.first.push_back(it->second);
        g.second.push_back(&rt);
    }

    SpeedupReport report;
    report.model = model;
    for (auto& [key, g] : groups) {
        SpeedupRow row;
        row.workload = key.first;
        row.arm = key.second;
        row.baseline = detail::pool(g.first);
        row.accel = detail::pool(g.second);
        PhaseCost base = phase_cost(row.baseline.counters, model);
        PhaseCost accel = phase_cost(row.accel.counters, model);
        row.prefill_x = detail::cost_ratio(base.prefill, accel.prefill, "prefill");
        row.decode_x = detail::cost_ratio(base.decode, accel.decode, "decode");
        row.e2e_x = detail::cost_ratio(base.total(), accel.total(), "end-to-end");
        report.rows.push_back(std::move(row));
    }

    std::map<double, std::uint64_t> hist;
    for (const auto& rt : traces_accel) {
        for (const auto& rec : rt.trace.rounds) {
            if (rec.overlap_with_prev) ++hist[*rec.overlap_with_prev];
        }
    }
    report.overlap_histogram.assign(hist.begin(), hist.end());
    return report;
}

namespace detail {

inline bool window_in_docs(const std::vector<std::int64_t>& gen, std::size_t at, std::size_t len,
                           const std::vector<std::vector<std::int64_t>>& docs) {
    for (const auto& doc : docs) {
        if (doc.size() < len) continue;
        for (std::size_t p = 0; p + len <= doc.size(); ++p) {
            bool eq = true;
            for (std::size_t k = 0; k < len; ++k) {
                if (doc[p + k] != gen[at + k]) {
                    eq = false;
                    break;
                }
            }
            if (eq) return true;
        }
    }
    return false;
}

}  // namespace detail

// For each window length L in [1, max_len]: the mean over rounds of the
// fraction of length-L windows of that round's answer found verbatim inside
// one of the round's retrieved documents. A round shorter than L counts as
// 0 rather than dropping out, which keeps the curve non-increasing; rounds
// that generated nothing are skipped at every length.
inline std::vector<CoveragePoint> coverage_curve(const std::vector<RunTrace>& traces,
                                                 const CorpusStore& store, int max_len) {
    if (max_len < 1) throw Error("coverage needs max_len >= 1");
    struct RoundView {
        std::vector<std::int64_t> gen;
        std::vector<std::vector<std::int64_t>> docs;
    };
    std::vector<RoundView> rounds;
    for (const auto& rt : traces) {
        for (const auto& rec : rt.trace.rounds) {
            if (rec.answer.empty()) continue;
            RoundView rv;
            for (const auto& t : rec.answer) rv.gen.push_back(t.id);
            for (const auto& h : rec.hits) {
                const auto& toks = store.get(h.passage_id).tokens;
                std::vector<std::int64_t> ids;
                ids.reserve(toks.size());
                for (const auto& t : toks) ids.push_back(t.id);
                rv.docs.push_back(std::move(ids));
            }
            rounds.push_back(std::move(rv));
        }
    }
    if (rounds.empty()) throw Error("coverage needs at least one generated token");

    std::vector<CoveragePoint> curve;
    for (int L = 1; L <= max_len; ++L) {
        double sum = 0.0;
        for (const auto& rv : rounds) {
            const std::size_t len = static_cast<std::size_t>(L);
            if (rv.gen.size() < len) continue;  // contributes 0
            std::size_t total = rv.gen.size() - len + 1;
            std::size_t hit = 0;
            for (std::size_t i = 0; i < total; ++i) {
                if (detail::window_in_docs(rv.gen, i, len, rv.docs)) ++hit;
            }
            sum += static_cast<double>(hit) / static_cast<double>(total);
        }
        curve.push_back({L, sum / static_cast<double>(rounds.size())});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Emitters. CSV doubles go through json's shortest round-trip printer so the
// files are deterministic and the ratios survive a parse bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string dtos(double v) { return nlohmann::json(v).dump(); }

inline void counters_csv(std::string& out, const ArmStats& s) {
    out += std::to_string(s.sessions);
    out += ',' + std::to_string(s.counters.prompt_tokens_computed);
    out += ',' + std::to_string(s.counters.prompt_tokens_reused);
    out += ',' + std::to_string(s.counters.decode_passes);
    out += ',' + std::to_string(s.counters.answer_tokens);
    out += ',' + std::to_string(s.counters.retrieval_calls);
    out += ',' + std::to_string(s.docs_cached);
    out += ',' + std::to_string(s.docs_fresh);
}

}  // namespace detail

inline std::string speedup_csv(const SpeedupReport& report) {
    std::string out =
        "workload,arm,prefill_x,decode_x,e2e_x"
        ",base_sessions,base_prompt_computed,base_prompt_reused,base_decode_passes"
        ",base_answer_tokens,base_retrievals,base_docs_cached,base_docs_fresh"
        ",accel_sessions,accel_prompt_computed,accel_prompt_reused,accel_decode_passes"
        ",accel_answer_tokens,accel_retrievals,accel_docs_cached,accel_docs_fresh\n";
    for (const auto& r : report.rows) {
        out += r.workload + ',' + r.arm;
        out += ',' + detail::dtos(r.prefill_x);
        out += ',' + detail::dtos(r.decode_x);
        out += ',' + detail::dtos(r.e2e_x);
        out += ',';
        detail::counters_csv(out, r.baseline);
        out += ',';
        detail::counters_csv(out, r.accel);
        out += '\n';
    }
    return out;
}

inline std::string runtime_breakdown_csv(const SpeedupReport& report) {
    std::string out =
        "workload,arm,accel_prefill_units,accel_decode_units,accel_retrieval_units,"
        "accel_total_units,base_prefill_units,base_decode_units,base_retrieval_units,"
        "base_total_units\n";
    for (const auto& r : report.rows) {
        PhaseCost a = phase_cost(r.accel.counters, report.model);
        PhaseCost b = phase_cost(r.baseline.counters, report.model);
        out += r.workload + ',' + r.arm;
        for (double v : {a.prefill, a.decode, a.retrieval, a.total(), b.prefill, b.decode,
                         b.retrieval, b.total()}) {
            out += ',' + detail::dtos(v);
        }
        out += '\n';
    }
    return out;
}

inline std::string overlap_csv(const SpeedupReport& report) {
    std::string out = "overlap,rounds\n";
    for (const auto& [value, count] : report.overlap_histogram) {
        out += detail::dtos(value) + ',' + std::to_string(count) + '\n';
    }
    return out;
}

inline std::string coverage_csv(const std::vector<CoveragePoint>& curve) {
    std::string out = "window,fraction\n";
    for (const auto& p : curve) {
        out += std::to_string(p.window) + ',' + detail::dtos(p.fraction) + '\n';
    }
    return out;
}

inline nlohmann::ordered_json report_json(const SpeedupReport& report) {
    using json = nlohmann::ordered_json;
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = "speedup_report";
    j["aggregation"] = "counters pooled over sessions per (workload, arm); ratios of pooled costs";
    j["cost_model"] = {{"prefill_token", report.model.prefill_token},
                       {"forward_pass", report.model.forward_pass},
                       {"retrieval", report.model.retrieval}};
    json rows = json::array();
    auto arm_json = [](const ArmStats& s) {
        json a = trace_json::cost_to_json(s.counters);
        a["sessions"] = s.sessions;
        a["docs_cached"] = s.docs_cached;
        a["docs_fresh"] = s.docs_fresh;
        return a;
    };
    for (const auto& r : report.rows) {
        rows.push_back({{"workload", r.workload},
                        {"arm", r.arm},
                        {"prefill_x", r.prefill_x},
                        {"decode_x", r.decode_x},
                        {"e2e_x", r.e2e_x},
                        {"baseline", arm_json(r.baseline)},
                        {"accel", arm_json(r.accel)}});
    }
    j["rows"] = rows;
    json hist = json::array();
    for (const auto& [value, count] : report.overlap_histogram) {
        hist.push_back({{"overlap", value}, {"rounds", count}});
    }
    j["overlap_histogram"] = hist;
    json cov = json::array();
    for (const auto& p : report.coverage) {
        cov.push_back({{"window", p.window}, {"fraction", p.fraction}});
    }
    j["coverage"] = cov;
    return j;
}

}  // namespace arag
