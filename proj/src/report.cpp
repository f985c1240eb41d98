#include "tandem/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tandem::report {

using cascade::GradedEpisode;
using harness::MetricsReport;
using nlohmann::json;

namespace {

json cost_to_json(const cascade::CostReport& c) {
    json j = {{"tflops", c.tflops},
              {"mentor_tokens", c.mentor_tokens},
              {"intern_generated_tokens", c.intern_generated_tokens}};
    if (c.dollars) j["dollars"] = *c.dollars;
    return j;
}

cascade::CostReport cost_from_json(const json& j) {
    cascade::CostReport c;
    c.tflops = j.at("tflops").get<double>();
    c.mentor_tokens = j.at("mentor_tokens").get<long>();
    c.intern_generated_tokens = j.at("intern_generated_tokens").get<long>();
    if (j.contains("dollars")) c.dollars = j["dollars"].get<double>();
    return c;
}

std::string fmt(double v, int precision = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

void pad_row(std::ostringstream& out, const std::vector<std::string>& cells,
             const std::vector<size_t>& widths) {
    for (size_t i = 0; i < cells.size(); ++i) {
        out << cells[i];
        if (i + 1 < cells.size())
            out << std::string(widths[i] > cells[i].size() ? widths[i] - cells[i].size() + 2 : 2, ' ');
    }
    out << "\n";
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    std::ostringstream out;
    for (const auto& row : rows) pad_row(out, row, widths);
    return out.str();
}

} // namespace

std::string episode_to_jsonl(const GradedEpisode& episode) {
    const auto& r = episode.result;
    json stages = json::array();
    for (const auto& s : r.stages) {
        json js = {{"index", s.stage.index},
                   {"mentor_tokens_cumulative", s.mentor_tokens_cumulative},
                   {"intern_answer_tokens", s.intern_answer_tokens}};
        if (s.score) js["score"] = *s.score;
        if (s.decision) js["decision"] = *s.decision;
        if (s.answer) js["answered"] = true;
        stages.push_back(std::move(js));
    }
    json usage = json::object();
    for (const auto& [name, u] : r.usage) usage[name] = json::array({u.prompt_tokens, u.completion_tokens});
    json grades = json::object();
    for (const auto& [stage, g] : episode.stage_grades) grades[std::to_string(stage)] = g;

    json j = {{"question_id", r.question_id},
              {"subject", episode.subject},
              {"policy", r.policy.to_string()},
              {"selected_stage", r.selected_stage},
              {"fallback_used", r.fallback_used},
              {"final_answer", r.final_answer},
              {"cost", cost_to_json(r.cost)},
              {"usage", std::move(usage)},
              {"approx_token_counts", r.approx_token_counts},
              {"stages", std::move(stages)},
              {"stage_grades", std::move(grades)}};
    if (episode.final_grade) j["final_grade"] = *episode.final_grade;
    return j.dump();
}

GradedEpisode episode_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("bad results line: ") + e.what());
    }
    GradedEpisode ep;
    auto& r = ep.result;
    r.question_id = j.at("question_id").get<std::string>();
    ep.subject = j.value("subject", "");
    r.policy = cascade::Policy::parse(j.at("policy").get<std::string>());
    r.selected_stage = j.at("selected_stage").get<int>();
    r.fallback_used = j.value("fallback_used", false);
    r.final_answer = j.value("final_answer", "");
    r.cost = cost_from_json(j.at("cost"));
    r.approx_token_counts = j.value("approx_token_counts", false);
    if (j.contains("usage"))
        for (const auto& [name, u] : j["usage"].items())
            r.usage[name] = {u.at(0).get<long>(), u.at(1).get<long>()};
    if (j.contains("stages")) {
        for (const auto& js : j["stages"]) {
            cascade::StageRecord rec;
            rec.stage.index = js.at("index").get<int>();
            rec.mentor_tokens_cumulative = js.value("mentor_tokens_cumulative", 0L);
            rec.intern_answer_tokens = js.value("intern_answer_tokens", 0L);
            if (js.contains("score")) rec.score = js["score"].get<double>();
            if (js.contains("decision")) rec.decision = js["decision"].get<int>();
            if (js.value("answered", false)) rec.answer = std::string();
            r.stages.push_back(std::move(rec));
        }
    }
    if (j.contains("stage_grades"))
        for (const auto& [k, v] : j["stage_grades"].items()) ep.stage_grades[std::stoi(k)] = v.get<int>();
    if (j.contains("final_grade")) ep.final_grade = j["final_grade"].get<int>();
    return ep;
}

void write_results(const std::string& path, const std::vector<GradedEpisode>& episodes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot write results file '" + path + "'");
    for (const auto& ep : episodes) out << episode_to_jsonl(ep) << "\n";
    if (!out) fail(Errc::io_error, "short write to results file '" + path + "'");
}

std::vector<GradedEpisode> read_results(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read results file '" + path + "'");
    std::vector<GradedEpisode> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(episode_from_json_line(line));
        } catch (const Error& e) {
            fail(Errc::parse_error, path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::string render_metrics_text(const MetricsReport& m) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"group", "episodes", "accuracy_pct", "avg_len_tokens", "avg_cost_tflops"});
    for (const auto& g : m.per_group)
        rows.push_back({g.group, std::to_string(g.episodes), fmt(g.accuracy), fmt(g.avg_inference_length, 1),
                        fmt(g.avg_cost_tflops)});
    rows.push_back({"overall", std::to_string(m.episodes), fmt(m.accuracy), fmt(m.avg_inference_length, 1),
                    fmt(m.avg_cost_tflops)});
    std::string out = render_table(rows);
    if (m.avg_dollars) out += "avg_dollars_per_sample  " + fmt(*m.avg_dollars, 6) + "\n";
    if (m.approx_token_counts)
        out += "note: token counts include whitespace-fallback estimates\n";
    return out;
}

namespace {

json metrics_to_json(const MetricsReport& m) {
    json groups = json::array();
    for (const auto& g : m.per_group)
        groups.push_back({{"group", g.group},
                          {"episodes", g.episodes},
                          {"accuracy", g.accuracy},
                          {"avg_inference_length", g.avg_inference_length},
                          {"avg_cost_tflops", g.avg_cost_tflops}});
    json j = {{"episodes", m.episodes},
              {"accuracy", m.accuracy},
              {"avg_inference_length", m.avg_inference_length},
              {"avg_cost_tflops", m.avg_cost_tflops},
              {"per_group", std::move(groups)},
              {"approx_token_counts", m.approx_token_counts}};
    if (m.avg_dollars) j["avg_dollars"] = *m.avg_dollars;
    return j;
}

} // namespace

std::string render_metrics_json(const MetricsReport& m) { return metrics_to_json(m).dump(2); }

harness::MetricsReport write_run_outputs(const std::string& report_dir,
                                         const std::vector<GradedEpisode>& episodes) {
    std::filesystem::create_directories(report_dir);
    write_results(report_dir + "/results.jsonl", episodes);
    const auto metrics = harness::evaluate(episodes);
    std::ofstream txt(report_dir + "/metrics.txt", std::ios::trunc);
    txt << render_metrics_text(metrics);
    std::ofstream js(report_dir + "/metrics.json", std::ios::trunc);
    js << render_metrics_json(metrics) << "\n";
    if (!txt || !js) fail(Errc::io_error, "cannot write metrics under '" + report_dir + "'");
    return metrics;
}

void write_report(const std::string& report_dir, const std::vector<GradedEpisode>& episodes) {
    if (episodes.empty()) fail(Errc::empty_input, "no episodes to report on");
    std::filesystem::create_directories(report_dir);

    json out = json::object();
    std::ostringstream text;

    // accuracy / length / cost
    const auto metrics = harness::evaluate(episodes);
    out["metrics"] = metrics_to_json(metrics);
    text << "== accuracy / inference length / cost ==\n" << render_metrics_text(metrics) << "\n";

    // dollar cost per 1k samples
    if (metrics.avg_dollars) {
        const double per_1k = *metrics.avg_dollars * 1000.0;
        out["dollar_cost"] = {{"avg_per_sample", *metrics.avg_dollars}, {"per_1k_samples", per_1k}};
        text << "== dollar cost ==\n";
        text << render_table({{"avg_per_sample", "per_1k_samples"}, {fmt(*metrics.avg_dollars, 6), fmt(per_1k, 2)}});
        text << "\n";
    }

    // per-stage classifier precision/recall/F1, from recorded decisions vs
    // per-stage grades
    std::map<int, std::vector<std::pair<int, int>>> preds;
    for (const auto& ep : episodes) {
        for (const auto& s : ep.result.stages) {
            if (!s.decision) continue;
            auto it = ep.stage_grades.find(s.stage.index);
            if (it == ep.stage_grades.end()) continue;
            preds[s.stage.index].emplace_back(*s.decision, it->second);
        }
    }
    if (!preds.empty()) {
        const auto cm = harness::classifier_metrics(preds);
        json per_stage = json::object();
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"stage", "precision", "recall", "f1", "tp", "fp", "tn", "fn"});
        auto cell = [&](const std::optional<double>& v) { return v ? fmt(*v, 3) : std::string("-"); };
        for (const auto& [stage, m] : cm.per_stage) {
            json jm = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
            if (m.precision) jm["precision"] = *m.precision;
            if (m.recall) jm["recall"] = *m.recall;
            if (m.f1) jm["f1"] = *m.f1;
            per_stage[std::to_string(stage)] = std::move(jm);
            rows.push_back({std::to_string(stage), cell(m.precision), cell(m.recall), cell(m.f1),
                            std::to_string(m.tp), std::to_string(m.fp), std::to_string(m.tn),
                            std::to_string(m.fn)});
        }
        rows.push_back({"average", cell(cm.macro_precision), cell(cm.macro_recall), cell(cm.macro_f1), "", "",
                        "", ""});
        json macro = json::object();
        if (cm.macro_precision) macro["precision"] = *cm.macro_precision;
        if (cm.macro_recall) macro["recall"] = *cm.macro_recall;
        if (cm.macro_f1) macro["f1"] = *cm.macro_f1;
        out["classifier_metrics"] = {{"per_stage", std::move(per_stage)}, {"macro", std::move(macro)}};
        text << "== per-stage classifier performance ==\n" << render_table(rows) << "\n";
    }

    // stage distribution
    const auto dist = harness::stage_distribution(episodes);
    {
        json rows_json = json::array();
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"group", "episodes", "stage0_pct", "stage1_pct", "stage2_pct", "stage3_pct"});
        auto add = [&](const harness::DistributionRow& r) {
            rows_json.push_back({{"group", r.group},
                                 {"episodes", r.episodes},
                                 {"pct", {r.pct[0], r.pct[1], r.pct[2], r.pct[3]}}});
            rows.push_back({r.group, std::to_string(r.episodes), fmt(r.pct[0]), fmt(r.pct[1]), fmt(r.pct[2]),
                            fmt(r.pct[3])});
        };
        for (const auto& r : dist.rows) add(r);
        add(dist.overall);
        out["stage_distribution"] = {{"rows", std::move(rows_json)}};
        text << "== stage distribution ==\n" << render_table(rows) << "\n";
    }

    // routing taxonomy, when every episode has all-stage grades
    bool all_graded = true;
    for (const auto& ep : episodes)
        for (int t = 0; t <= 3 && all_graded; ++t) all_graded = ep.stage_grades.count(t) > 0;
    if (all_graded) {
        const auto tx = harness::routing_analysis(episodes);
        out["routing"] = {{"correct", tx.correct},
                          {"premature_stop", tx.premature_stop},
                          {"late_stop", tx.late_stop},
                          {"unsolvable", tx.unsolvable}};
        const double total = static_cast<double>(tx.total());
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"outcome", "count", "pct"});
        auto add = [&](const char* name, long count) {
            rows.push_back({name, std::to_string(count), fmt(100.0 * static_cast<double>(count) / total)});
        };
        add("correct", tx.correct);
        add("premature_stop", tx.premature_stop);
        add("late_stop", tx.late_stop);
        add("unsolvable", tx.unsolvable);
        text << "== routing analysis ==\n" << render_table(rows) << "\n";
    }

    std::ofstream txt(report_dir + "/table.txt", std::ios::trunc);
    txt << text.str();
    std::ofstream js(report_dir + "/table.json", std::ios::trunc);
    js << out.dump(2) << "\n";
    if (!txt || !js) fail(Errc::io_error, "cannot write report under '" + report_dir + "'");
}

} // namespace tandem::report
