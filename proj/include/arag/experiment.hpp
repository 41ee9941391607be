#pragma once
// Experiment driver: loads a run config and a query set, expands the
// session x arm grid, executes it on a small worker pool, and keeps a
// manifest next to the traces so an interrupted run can resume. The
// report step re-reads the traces through the manifest, never the
// directory listing, so stray files cannot leak into the scores.
//
// Error messages from config loading carry file:line positions. The
// line for a key is found by scanning the raw text for its first
// quoted occurrence, which is exact for the flat configs this format
// allows (no key appears twice at different depths with different
// meanings).

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <arag/bm25.hpp>
#include <arag/common.hpp>
#include <arag/corpus.hpp>
#include <arag/metrics.hpp>
#include <arag/session.hpp>
#include <arag/token.hpp>
#include <arag/trace_io.hpp>

namespace arag {

using json = nlohmann::ordered_json;

// Arm labels are the public names for toggle combinations; traces and
// report rows carry them verbatim.
inline const std::map<std::string, SessionToggles>& arm_table() {
    static const std::map<std::string, SessionToggles> table = {
        {"baseline", SessionToggles{false, false, false}},
        {"cics", SessionToggles{true, false, false}},
        {"cics_idgr", SessionToggles{true, true, false}},
        {"igpg", SessionToggles{false, false, true}},
        {"full", SessionToggles{true, true, true}},
    };
    return table;
}

inline std::string arm_names() {
    std::string out;
    for (const auto& [name, t] : arm_table()) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

namespace detail {

inline int line_at_byte(const std::string& raw, std::size_t byte) {
    // nlohmann reports 1-based byte offsets
    int line = 1;
    for (std::size_t i = 0; i + 1 < byte && i < raw.size(); ++i) {
        if (raw[i] == '\n') ++line;
    }
    return line;
}

inline void deep_merge(json& dst, const json& src) {
    for (auto it = src.begin(); it != src.end(); ++it) {
        if (it->is_object() && dst.contains(it.key()) && dst[it.key()].is_object()) {
            deep_merge(dst[it.key()], *it);
        } else {
            dst[it.key()] = *it;
        }
    }
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Coarse type tags for override keys. config_from_json would reject bad
// types too, but through exceptions whose wording names no file or line.
enum class FieldKind { Int, Uint, Bool, Num, Obj, Str };

inline const std::map<std::string, FieldKind>& session_field_kinds() {
    static const std::map<std::string, FieldKind> kinds = {
        {"policy", FieldKind::Obj},
        {"n_docs", FieldKind::Int},
        {"t_max", FieldKind::Int},
        {"max_round_tokens", FieldKind::Int},
        {"ngram_order", FieldKind::Int},
        {"max_draft", FieldKind::Int},
        {"bleed", FieldKind::Bool},
        {"index_prior_answers", FieldKind::Bool},
        {"cache_capacity", FieldKind::Uint},
        {"lm_min_match", FieldKind::Int},
        {"lm_hash_window", FieldKind::Int},
        {"seed", FieldKind::Uint},
    };
    return kinds;
}

inline const std::map<std::string, FieldKind>& policy_field_kinds() {
    static const std::map<std::string, FieldKind> kinds = {
        {"kind", FieldKind::Str},
        {"interval", FieldKind::Int},
        {"threshold", FieldKind::Num},
        {"top_w", FieldKind::Int},
    };
    return kinds;
}

inline bool kind_matches(const json& v, FieldKind k) {
    switch (k) {
        case FieldKind::Int: return v.is_number_integer();
        case FieldKind::Uint:
            return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
        case FieldKind::Bool: return v.is_boolean();
        case FieldKind::Num: return v.is_number();
        case FieldKind::Obj: return v.is_object();
        case FieldKind::Str: return v.is_string();
    }
    return false;
}

inline const char* kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::Int: return "an integer";
        case FieldKind::Uint: return "a non-negative integer";
        case FieldKind::Bool: return "a boolean";
        case FieldKind::Num: return "a number";
        case FieldKind::Obj: return "an object";
        case FieldKind::Str: return "a string";
    }
    return "a value";
}

// Checks one override object (a query row or the config's session keys)
// against the field tables. `where` prefixes every complaint.
inline void check_session_fields(const json& obj, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        auto found = session_field_kinds().find(it.key());
        if (found == session_field_kinds().end()) {
            throw Error(where + ": unknown session field \"" + it.key() + "\"");
        }
        if (!kind_matches(*it, found->second)) {
            throw Error(where + ": \"" + it.key() + "\" must be " + kind_name(found->second));
        }
        if (it.key() == "policy") {
            for (auto p = it->begin(); p != it->end(); ++p) {
                auto pk = policy_field_kinds().find(p.key());
                if (pk == policy_field_kinds().end()) {
                    throw Error(where + ": unknown policy field \"" + p.key() + "\"");
                }
                if (!kind_matches(*p, pk->second)) {
                    throw Error(where + ": policy \"" + p.key() + "\" must be " +
                                kind_name(pk->second));
                }
            }
        }
    }
}

}  // namespace detail

// Raw config file plus enough bookkeeping to blame a line in messages.
struct ConfigFile {
    std::string path;
    std::string raw;
    json doc;

    int line_of(std::string_view key) const {
        auto pos = raw.find("\"" + std::string(key) + "\"");
        if (pos == std::string::npos) return 0;
        return detail::line_at_byte(raw, pos + 1);
    }

    [[noreturn]] void fail(std::string_view key, const std::string& msg) const {
        int line = line_of(key);
        if (line > 0) throw Error(path + ":" + std::to_string(line) + ": " + msg);
        throw Error(path + ": " + msg);
    }
};

inline ConfigFile read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    ConfigFile cf{path, buf.str(), json()};
    try {
        cf.doc = json::parse(cf.raw);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(path + ":" + std::to_string(detail::line_at_byte(cf.raw, e.byte)) +
                    ": " + e.what());
    }
    if (!cf.doc.is_object()) {
        throw Error(path + ":1: config root must be a JSON object");
    }
    return cf;
}

struct ExperimentConfig {
    std::string path;      // config file this was loaded from
    std::string workload;  // label stamped into every trace
    std::string corpus;    // passage source, jsonl
    std::string queries;   // session rows, jsonl
    std::string output_dir;
    std::vector<std::string> arms;
    std::size_t passage_size = 100;
    TokenizerMode tokenizer = TokenizerMode::Whitespace;
    json session_defaults;       // complete session document minus identity
    std::vector<json> policies;  // optional rotation over rows; empty = defaults only
    std::vector<std::uint64_t> seeds;
    CostModel model;
    int coverage_max_len = 8;
};

struct ExperimentOverrides {
    std::optional<std::string> corpus;
    std::optional<std::string> queries;
    std::optional<std::string> output_dir;
    std::optional<std::string> workload;
    std::optional<std::vector<std::string>> arms;
};

namespace detail {

inline std::string resolve_against(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path q(p);
    if (q.is_absolute()) return q.lexically_normal().string();
    return (base / q).lexically_normal().string();
}

inline void check_arms(const std::vector<std::string>& arms, const ConfigFile& cf) {
    if (arms.empty()) cf.fail("arms", "\"arms\" must list at least one arm");
    std::set<std::string> seen;
    for (const auto& a : arms) {
        if (!arm_table().count(a)) {
            cf.fail("arms", "unknown arm \"" + a + "\" (valid: " + arm_names() + ")");
        }
        if (!seen.insert(a).second) cf.fail("arms", "duplicate arm \"" + a + "\"");
    }
}

}  // namespace detail

// Loads and validates an experiment config. Overrides (from command line
// flags) replace whole fields after the file passes validation, so a bad
// file is reported even when every flag is given. Relative corpus/query
// paths resolve against the config file's directory; override paths are
// taken as written. A relative output_dir resolves under $ARAGSIM_OUT_ROOT
// when that is set.
inline ExperimentConfig load_experiment(const std::string& path,
                                        const ExperimentOverrides& ov = {}) {
    namespace fs = std::filesystem;
    ConfigFile cf = read_config_file(path);
    const fs::path cfg_dir = fs::path(path).parent_path();

    auto need = [&](const char* key) -> const json& {
        if (!cf.doc.contains(key)) {
            throw Error(cf.path + ": missing required key \"" + std::string(key) + "\"");
        }
        return cf.doc.at(key);
    };
    auto need_string = [&](const char* key) -> std::string {
        const json& v = need(key);
        if (!v.is_string() || v.get<std::string>().empty()) {
            cf.fail(key, "\"" + std::string(key) + "\" must be a non-empty string");
        }
        return v.get<std::string>();
    };

    const json& sv = need("schema_version");
    if (!sv.is_number_integer() || sv.get<int>() != kConfigSchemaVersion) {
        cf.fail("schema_version", "unsupported schema_version (expected " +
                                      std::to_string(kConfigSchemaVersion) + ")");
    }

    static const std::set<std::string> known = {
        "schema_version", "kind", "workload", "corpus", "queries", "output_dir",
        "arms", "passage_size", "tokenizer", "session", "policies", "seeds",
        "cost_model", "coverage_max_len"};
    for (auto it = cf.doc.begin(); it != cf.doc.end(); ++it) {
        if (!known.count(it.key())) {
            cf.fail(it.key(), "unknown key \"" + it.key() + "\"");
        }
    }
    if (cf.doc.contains("kind")) {
        const json& k = cf.doc.at("kind");
        if (!k.is_string() || k.get<std::string>() != "experiment") {
            cf.fail("kind", "\"kind\" must be \"experiment\"");
        }
    }

    ExperimentConfig e;
    e.path = path;
    e.corpus = detail::resolve_against(cfg_dir, need_string("corpus"));
    e.queries = detail::resolve_against(cfg_dir, need_string("queries"));
    e.output_dir = need_string("output_dir");
    e.workload = cf.doc.contains("workload") ? need_string("workload")
                                             : fs::path(path).stem().string();

    const json& arms = need("arms");
    if (!arms.is_array()) cf.fail("arms", "\"arms\" must be an array of arm names");
    for (const auto& a : arms) {
        if (!a.is_string()) cf.fail("arms", "\"arms\" entries must be strings");
        e.arms.push_back(a.get<std::string>());
    }
    detail::check_arms(e.arms, cf);

    if (cf.doc.contains("passage_size")) {
        const json& v = cf.doc.at("passage_size");
        if (!detail::kind_matches(v, detail::FieldKind::Uint) || v.get<std::int64_t>() < 1) {
            cf.fail("passage_size", "\"passage_size\" must be a positive integer");
        }
        e.passage_size = v.get<std::size_t>();
    }
    if (cf.doc.contains("tokenizer")) {
        const json& v = cf.doc.at("tokenizer");
        if (!v.is_string()) cf.fail("tokenizer", "\"tokenizer\" must be a string");
        try {
            e.tokenizer = tokenizer_mode_from_name(v.get<std::string>());
        } catch (const Error& err) {
            cf.fail("tokenizer", err.what());
        }
    }

    // Session defaults start from the library's own and absorb the config's
    // "session" object. The result is a complete document, so query rows can
    // override any subset without ever producing a partial config.
    e.session_defaults = trace_json::config_to_json(SessionConfig{});
    e.session_defaults.erase("session_id");
    e.session_defaults.erase("initial_query");
    if (cf.doc.contains("session")) {
        const json& s = cf.doc.at("session");
        if (!s.is_object()) cf.fail("session", "\"session\" must be an object");
        try {
            detail::check_session_fields(s, "\"session\"");
        } catch (const Error& err) {
            cf.fail("session", err.what());
        }
        detail::deep_merge(e.session_defaults, s);
    }

    if (cf.doc.contains("policies")) {
        const json& ps = cf.doc.at("policies");
        if (!ps.is_array() || ps.empty()) {
            cf.fail("policies", "\"policies\" must be a non-empty array of policy objects");
        }
        for (const auto& p : ps) {
            json probe = json::object();
            probe["policy"] = p;
            try {
                detail::check_session_fields(probe, "\"policies\"");
            } catch (const Error& err) {
                cf.fail("policies", err.what());
            }
            e.policies.push_back(p);
        }
    }

    if (cf.doc.contains("seeds")) {
        const json& ss = cf.doc.at("seeds");
        if (!ss.is_array() || ss.empty()) {
            cf.fail("seeds", "\"seeds\" must be a non-empty array of integers");
        }
        std::set<std::uint64_t> seen;
        for (const auto& s : ss) {
            if (!detail::kind_matches(s, detail::FieldKind::Uint)) {
                cf.fail("seeds", "\"seeds\" entries must be non-negative integers");
            }
            auto v = s.get<std::uint64_t>();
            if (!seen.insert(v).second) {
                cf.fail("seeds", "seeds must be distinct (" + std::to_string(v) + " repeats)");
            }
            e.seeds.push_back(v);
        }
    } else {
        e.seeds = {1};
    }

    if (cf.doc.contains("cost_model")) {
        const json& m = cf.doc.at("cost_model");
        if (!m.is_object()) cf.fail("cost_model", "\"cost_model\" must be an object");
        for (auto it = m.begin(); it != m.end(); ++it) {
            if (!it->is_number() || it->get<double>() <= 0.0) {
                cf.fail("cost_model", "cost_model entries must be positive numbers");
            }
            if (it.key() == "prefill_token") {
                e.model.prefill_token = it->get<double>();
            } else if (it.key() == "forward_pass") {
                e.model.forward_pass = it->get<double>();
            } else if (it.key() == "retrieval") {
                e.model.retrieval = it->get<double>();
            } else {
                cf.fail("cost_model", "unknown cost_model field \"" + it.key() + "\"");
            }
        }
    }
    if (cf.doc.contains("coverage_max_len")) {
        const json& v = cf.doc.at("coverage_max_len");
        if (!v.is_number_integer() || v.get<int>() < 1) {
            cf.fail("coverage_max_len", "\"coverage_max_len\" must be a positive integer");
        }
        e.coverage_max_len = v.get<int>();
    }

    if (ov.corpus) e.corpus = *ov.corpus;
    if (ov.queries) e.queries = *ov.queries;
    if (ov.output_dir) e.output_dir = *ov.output_dir;
    if (ov.workload) e.workload = *ov.workload;
    if (ov.arms) {
        e.arms = *ov.arms;
        detail::check_arms(e.arms, cf);
    }

    if (const char* root = std::getenv("ARAGSIM_OUT_ROOT")) {
        if (*root != '\0' && fs::path(e.output_dir).is_relative()) {
            e.output_dir = (fs::path(root) / e.output_dir).lexically_normal().string();
        }
    }

    auto must_exist = [&](const std::string& p, const char* key, bool overridden) {
        if (fs::exists(p)) return;
        std::string msg = std::string(key) + " file not found: " + p;
        if (overridden) throw Error(msg);
        cf.fail(key, msg);
    };
    must_exist(e.corpus, "corpus", ov.corpus.has_value());
    must_exist(e.queries, "queries", ov.queries.has_value());
    return e;
}

struct QueryRow {
    json fields;  // overrides including session_id/initial_query
    int line = 0;
};

// Query sets are jsonl: a header line, then one session row per line.
inline std::vector<QueryRow> read_query_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open query set: " + path);
    auto at = [&](int line) { return path + " line " + std::to_string(line) + ": "; };

    std::vector<QueryRow> rows;
    std::set<std::string> ids;
    bool saw_header = false;
    std::string text;
    for (int line = 1; std::getline(in, text); ++line) {
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(at(line) + e.what());
        }
        if (!j.is_object()) throw Error(at(line) + "expected a JSON object");

        if (!saw_header) {
            if (j.value("kind", "") != "query_set_header") {
                throw Error(at(line) + "first line must be the query_set_header");
            }
            if (!j.contains("schema_version") ||
                j.at("schema_version") != kQuerySetSchemaVersion) {
                throw Error(at(line) + "unsupported query set schema_version");
            }
            saw_header = true;
            continue;
        }

        if (j.value("kind", "") != "query") {
            throw Error(at(line) + "expected a row with kind \"query\"");
        }
        j.erase("kind");
        for (const char* key : {"session_id", "initial_query"}) {
            if (!j.contains(key) || !j.at(key).is_string() ||
                j.at(key).get<std::string>().empty()) {
                throw Error(at(line) + "\"" + key + "\" must be a non-empty string");
            }
        }
        auto sid = j.at("session_id").get<std::string>();
        if (!ids.insert(sid).second) {
            throw Error(at(line) + "duplicate session_id \"" + sid + "\"");
        }
        json overrides = j;
        overrides.erase("session_id");
        overrides.erase("initial_query");
        try {
            detail::check_session_fields(overrides, "row");
        } catch (const Error& e) {
            throw Error(at(line) + e.what());
        }
        rows.push_back(QueryRow{std::move(j), line});
    }
    if (!saw_header) throw Error(path + ": empty query set (missing header line)");
    if (rows.empty()) throw Error(path + ": query set has a header but no rows");
    return rows;
}

struct WorkItem {
    SessionConfig cfg;  // toggles already set for the arm
    std::string arm;
    std::string file;  // relative to the run directory
};

namespace detail {

inline std::string safe_name(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

}  // namespace detail

// Expands rows x arms into runnable items. Row fields override the config
// defaults; the per-row policy from the rotation sits between the two. A
// row without a seed takes seeds[i mod seeds], with i its position in the
// query set, so reruns keep their pairing no matter which arms are on.
inline std::vector<WorkItem> expand_work(const ExperimentConfig& e,
                                         const std::vector<QueryRow>& rows) {
    std::vector<WorkItem> items;
    std::map<std::string, std::string> claimed;  // file -> session id
    for (std::size_t i = 0; i < rows.size(); ++i) {
        json merged = e.session_defaults;
        if (!e.policies.empty()) {
            detail::deep_merge(merged["policy"], e.policies[i % e.policies.size()]);
        }
        detail::deep_merge(merged, rows[i].fields);
        if (!rows[i].fields.contains("seed")) {
            merged["seed"] = e.seeds[i % e.seeds.size()];
        }

        SessionConfig base;
        try {
            base = trace_json::config_from_json(merged);
            validate(base);
        } catch (const std::exception& ex) {
            throw Error(e.queries + " line " + std::to_string(rows[i].line) + ": " + ex.what());
        }

        for (const auto& arm : e.arms) {
            WorkItem item;
            item.cfg = base;
            item.cfg.toggles = arm_table().at(arm);
            item.arm = arm;
            item.file = "traces/" + detail::safe_name(base.session_id) + "__" + arm + ".jsonl";
            auto [it, fresh] = claimed.emplace(item.file, base.session_id);
            if (!fresh && it->second != base.session_id) {
                throw Error("session ids \"" + it->second + "\" and \"" + base.session_id +
                            "\" collide after filename sanitization");
            }
            items.push_back(std::move(item));
        }
    }
    return items;
}

struct ManifestEntry {
    std::string session;
    std::string arm;
    std::string file;
};

struct RunManifest {
    std::string workload;
    std::string config_digest;  // 16 hex digits
    std::string corpus;
    std::string queries;
    std::size_t passage_size = 100;
    std::string tokenizer = "whitespace";
    CostModel model;
    int coverage_max_len = 8;
    std::vector<ManifestEntry> entries;  // completed items, sorted (session, arm)
};

// The digest covers everything that shapes a trace: the expanded settings
// and the bytes of both input files. Paths stay out of it, so moving the
// inputs around does not orphan a finished run.
inline std::string experiment_digest(const ExperimentConfig& e, const std::string& corpus_bytes,
                                     const std::string& query_bytes) {
    json c;
    c["workload"] = e.workload;
    c["arms"] = e.arms;
    c["passage_size"] = e.passage_size;
    c["tokenizer"] = tokenizer_mode_name(e.tokenizer);
    c["session"] = e.session_defaults;
    c["policies"] = e.policies;
    c["seeds"] = e.seeds;
    std::uint64_t h = fnv1a64(c.dump());
    h = fnv1a64(corpus_bytes, h);
    h = fnv1a64(query_bytes, h);
    return detail::hex64(h);
}

inline json manifest_json(const RunManifest& m) {
    json j;
    j["schema_version"] = kManifestSchemaVersion;
    j["kind"] = "run_manifest";
    j["workload"] = m.workload;
    j["config_digest"] = m.config_digest;
    j["corpus"] = m.corpus;
    j["queries"] = m.queries;
    j["passage_size"] = m.passage_size;
    j["tokenizer"] = m.tokenizer;
    j["cost_model"] = {{"prefill_token", m.model.prefill_token},
                       {"forward_pass", m.model.forward_pass},
                       {"retrieval", m.model.retrieval}};
    j["coverage_max_len"] = m.coverage_max_len;
    json entries = json::array();
    for (const auto& en : m.entries) {
        entries.push_back({{"session", en.session},
                           {"arm", en.arm},
                           {"file", en.file},
                           {"status", "done"}});
    }
    j["entries"] = entries;
    return j;
}

inline RunManifest manifest_from_json(const json& j, const std::string& path) {
    try {
        if (j.at("schema_version") != kManifestSchemaVersion ||
            j.at("kind") != "run_manifest") {
            throw Error("not a run manifest");
        }
        RunManifest m;
        m.workload = j.at("workload").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.corpus = j.at("corpus").get<std::string>();
        m.queries = j.at("queries").get<std::string>();
        m.passage_size = j.at("passage_size").get<std::size_t>();
        m.tokenizer = j.at("tokenizer").get<std::string>();
        const json& cm = j.at("cost_model");
        m.model.prefill_token = cm.at("prefill_token").get<double>();
        m.model.forward_pass = cm.at("forward_pass").get<double>();
        m.model.retrieval = cm.at("retrieval").get<double>();
        m.coverage_max_len = j.at("coverage_max_len").get<int>();
        for (const auto& en : j.at("entries")) {
            m.entries.push_back(ManifestEntry{en.at("session").get<std::string>(),
                                              en.at("arm").get<std::string>(),
                                              en.at("file").get<std::string>()});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(path + ": malformed manifest: " + e.what());
    }
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("short write to " + path.string());
}

// Manifest saves go through a temp file and rename, so a crash mid-save
// leaves the previous manifest intact and the run still resumable.
inline void save_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    auto tmp = dir / "manifest.json.tmp";
    write_file(tmp, manifest_json(m).dump(2) + "\n");
    std::filesystem::rename(tmp, dir / "manifest.json");
}

inline RunManifest load_manifest(const std::filesystem::path& dir) {
    auto path = dir / "manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("no manifest.json under " + dir.string() + "; run the experiment first");
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
    return manifest_from_json(j, path.string());
}

inline std::string slurp(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(std::string("cannot open ") + what + ": " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace detail

struct RunSummary {
    std::size_t ran = 0;
    std::size_t skipped = 0;  // found done in a resumable manifest
    std::size_t total = 0;
    std::string out_dir;
};

// Runs every (session, arm) item, writing one trace file each and keeping
// the manifest current after every completion. Items already recorded in a
// manifest with a matching digest are skipped; pass fresh=true to redo
// everything. Workers share the read-only store and index; the manifest
// and counters sit behind one mutex.
inline RunSummary run_experiment(const ExperimentConfig& e, int workers = 1,
                                 bool fresh = false) {
    namespace fs = std::filesystem;
    if (workers < 1) throw Error("worker count must be at least 1");

    const std::string corpus_bytes = detail::slurp(e.corpus, "corpus");
    const std::string query_bytes = detail::slurp(e.queries, "query set");

    std::istringstream corpus_in(corpus_bytes);
    CorpusStore store = ingest_jsonl(corpus_in, e.passage_size, e.tokenizer, e.corpus);
    Bm25Index index = Bm25Index::build(store);

    auto rows = read_query_set(e.queries);
    auto items = expand_work(e, rows);

    const fs::path out(e.output_dir);
    fs::create_directories(out / "traces");

    RunManifest man;
    man.workload = e.workload;
    man.config_digest = experiment_digest(e, corpus_bytes, query_bytes);
    man.corpus = e.corpus;
    man.queries = e.queries;
    man.passage_size = e.passage_size;
    man.tokenizer = tokenizer_mode_name(e.tokenizer);
    man.model = e.model;
    man.coverage_max_len = e.coverage_max_len;

    std::set<std::pair<std::string, std::string>> done;
    if (!fresh && fs::exists(out / "manifest.json")) {
        RunManifest old = detail::load_manifest(out);
        if (old.config_digest == man.config_digest) {
            for (const auto& en : old.entries) {
                if (fs::exists(out / en.file)) {
                    done.insert({en.session, en.arm});
                    man.entries.push_back(en);
                }
            }
        }
    }

    std::vector<const WorkItem*> todo;
    for (const auto& item : items) {
        if (!done.count({item.cfg.session_id, item.arm})) todo.push_back(&item);
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first_error;
    std::size_t ran = 0;

    detail::save_manifest(out, man);  // records the digest even when todo is empty

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= todo.size() || stop.load()) return;
            const WorkItem& item = *todo[i];
            try {
                RunTrace rt;
                rt.arm = item.arm;
                rt.workload = e.workload;
                rt.config = item.cfg;
                rt.trace = run_session(item.cfg, store, index);
                write_trace_file((out / item.file).string(), rt);
                std::lock_guard<std::mutex> lock(mu);
                man.entries.push_back(
                    ManifestEntry{item.cfg.session_id, item.arm, item.file});
                std::sort(man.entries.begin(), man.entries.end(),
                          [](const ManifestEntry& a, const ManifestEntry& b) {
                              return std::tie(a.session, a.arm) < std::tie(b.session, b.arm);
                          });
                detail::save_manifest(out, man);
                ++ran;
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
                stop.store(true);
                return;
            }
        }
    };

    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                  std::max<std::size_t>(todo.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    return RunSummary{ran, done.size(), items.size(), out.string()};
}

struct ReportOverrides {
    std::optional<double> prefill_token;
    std::optional<double> forward_pass;
    std::optional<double> retrieval;
    std::optional<int> max_len;
    std::optional<std::string> corpus;  // when the original moved
};

// Scores a finished run and writes report/{report.json, speedup.csv,
// runtime_breakdown.csv, overlap.csv, coverage.csv} under it. Traces are
// read strictly through the manifest. Coverage comes from the baseline
// arm's answers against its retrieved documents, so it describes the
// workload, not any accelerator.
inline SpeedupReport write_report(const std::string& run_dir, const ReportOverrides& ov = {}) {
    namespace fs = std::filesystem;
    const fs::path dir(run_dir);
    RunManifest man = detail::load_manifest(dir);
    if (man.entries.empty()) {
        throw Error(run_dir + ": manifest lists no completed sessions");
    }

    std::vector<RunTrace> base, accel;
    for (const auto& en : man.entries) {
        RunTrace rt = read_trace_file((dir / en.file).string());
        (en.arm == "baseline" ? base : accel).push_back(std::move(rt));
    }
    if (base.empty()) throw Error(run_dir + ": report needs a baseline arm");
    if (accel.empty()) throw Error(run_dir + ": report needs at least one accelerated arm");

    CostModel model = man.model;
    if (ov.prefill_token) model.prefill_token = *ov.prefill_token;
    if (ov.forward_pass) model.forward_pass = *ov.forward_pass;
    if (ov.retrieval) model.retrieval = *ov.retrieval;

    SpeedupReport report = score(base, accel, model);

    const std::string corpus_path = ov.corpus ? *ov.corpus : man.corpus;
    CorpusStore store = ingest_jsonl_file(corpus_path, man.passage_size,
                                          tokenizer_mode_from_name(man.tokenizer));
    report.coverage = coverage_curve(base, store, ov.max_len ? *ov.max_len : man.coverage_max_len);

    fs::create_directories(dir / "report");
    detail::write_file(dir / "report" / "report.json", report_json(report).dump(2) + "\n");
    detail::write_file(dir / "report" / "speedup.csv", speedup_csv(report));
    detail::write_file(dir / "report" / "runtime_breakdown.csv", runtime_breakdown_csv(report));
    detail::write_file(dir / "report" / "overlap.csv", overlap_csv(report));
    detail::write_file(dir / "report" / "coverage.csv", coverage_csv(report.coverage));
    return report;
}

}  // namespace arag
