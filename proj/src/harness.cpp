#include "tandem/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

namespace tandem::harness {

using nlohmann::json;

// ===== dataset loading =====

namespace {

json parse_line(const std::string& path, const std::string& line, size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(Errc::parse_error, path + " line " + std::to_string(lineno) + ": " + e.what());
    }
}

std::string field(const json& j, const char* name, const std::string& path, size_t lineno) {
    if (!j.contains(name))
        fail(Errc::parse_error, path + " line " + std::to_string(lineno) + ": missing field '" + name + "'");
    return j[name].get<std::string>();
}

std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

std::string gsm8k_gold(const std::string& answer) {
    auto pos = answer.rfind("####");
    if (pos == std::string::npos) return trim(answer);
    return trim(answer.substr(pos + 4));
}

} // namespace

std::vector<core::Question> load_dataset(const std::string& path, core::Dataset format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open dataset '" + path + "'");

    std::vector<core::Question> out;
    std::set<std::string> seen_ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const json j = parse_line(path, line, lineno);

        core::Question q;
        q.dataset = format;
        switch (format) {
            case core::Dataset::math: {
                q.text = field(j, "problem", path, lineno);
                const std::string solution = field(j, "solution", path, lineno);
                auto boxed = extract_boxed(solution);
                q.gold_answer = boxed ? boxed->value : trim(solution);
                q.subject = j.value("subject", "");
                break;
            }
            case core::Dataset::gsm8k: {
                q.text = field(j, "question", path, lineno);
                q.gold_answer = gsm8k_gold(field(j, "answer", path, lineno));
                q.subject = j.value("subject", "");
                break;
            }
            case core::Dataset::humaneval: {
                q.id = field(j, "task_id", path, lineno);
                q.text = field(j, "prompt", path, lineno);
                // Gold travels opaquely to an external grader.
                q.gold_answer = json{{"entry_point", field(j, "entry_point", path, lineno)},
                                     {"test", field(j, "test", path, lineno)}}
                                    .dump();
                q.subject = j.value("subject", "");
                break;
            }
            case core::Dataset::custom: {
                q.id = field(j, "id", path, lineno);
                q.text = field(j, "text", path, lineno);
                q.gold_answer = field(j, "gold", path, lineno);
                q.subject = j.value("subject", "");
                break;
            }
        }
        if (q.id.empty()) {
            if (j.contains("id"))
                q.id = j["id"].get<std::string>();
            else if (j.contains("unique_id"))
                q.id = j["unique_id"].get<std::string>();
            else
                q.id = "line-" + std::to_string(lineno);
        }
        if (q.text.empty())
            fail(Errc::parse_error, path + " line " + std::to_string(lineno) + ": empty question text");
        if (!seen_ids.insert(q.id).second)
            fail(Errc::parse_error, path + " line " + std::to_string(lineno) + ": duplicate id '" + q.id + "'");
        out.push_back(std::move(q));
    }
    return out;
}

// ===== grading =====

Grader grader_from_name(std::string_view name) {
    if (name == "boxed_math") return Grader::boxed_math;
    if (name == "numeric") return Grader::numeric;
    if (name == "exact") return Grader::exact;
    if (name == "external") return Grader::external;
    fail(Errc::config_error, "unknown grader '" + std::string(name) + "'");
}

const char* grader_name(Grader g) {
    switch (g) {
        case Grader::boxed_math: return "boxed_math";
        case Grader::numeric: return "numeric";
        case Grader::exact: return "exact";
        case Grader::external: return "external";
    }
    return "exact";
}

Grader default_grader(core::Dataset dataset) {
    switch (dataset) {
        case core::Dataset::math: return Grader::boxed_math;
        case core::Dataset::gsm8k: return Grader::numeric;
        case core::Dataset::humaneval: return Grader::external;
        case core::Dataset::custom: return Grader::exact;
    }
    return Grader::exact;
}

std::optional<BoxedExtraction> extract_boxed(const std::string& text) {
    static const std::string kBox = "\\boxed{";
    auto start = text.rfind(kBox);
    if (start != std::string::npos) {
        size_t i = start + kBox.size();
        int depth = 1;
        std::string value;
        for (; i < text.size(); ++i) {
            char c = text[i];
            if (c == '{') ++depth;
            if (c == '}') {
                if (--depth == 0) return BoxedExtraction{value, true};
            }
            value += c;
        }
        // unbalanced box: fall through to the number fallback
    }
    // last number in the text
    std::string best;
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t begin = i;
            if (begin > 0 && (text[begin - 1] == '-' || text[begin - 1] == '.')) --begin;
            if (begin > 0 && text[begin - 1] == '-' && text[begin] == '.') --begin;
            size_t end = i;
            bool seen_dot = text[end] == '.';
            while (end + 1 < text.size()) {
                char n = text[end + 1];
                if (std::isdigit(static_cast<unsigned char>(n))) {
                    ++end;
                } else if (n == '.' && !seen_dot) {
                    seen_dot = true;
                    ++end;
                } else {
                    break;
                }
            }
            best = text.substr(begin, end - begin + 1);
            i = end;
        }
    }
    if (!best.empty()) return BoxedExtraction{best, false};
    return std::nullopt;
}

namespace {

// LaTeX spacing / wrapper noise that must not affect equivalence.
std::string normalize_math(const std::string& raw) {
    static const std::vector<std::string> kDrop = {"\\left", "\\right", "\\,", "\\;",
                                                   "\\!",    "\\quad", "\\qquad", "\\ "};
    std::string s;
    s.reserve(raw.size());
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    for (const auto& tok : kDrop) {
        size_t pos = 0;
        std::string compact;
        for (char c : tok)
            if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
        while ((pos = s.find(compact, pos)) != std::string::npos) s.erase(pos, compact.size());
    }
    std::erase(s, '$');
    while (!s.empty() && s.back() == '.') s.pop_back();
    if (s.rfind("\\dfrac", 0) == 0) s = "\\frac" + s.substr(6);
    return s;
}

std::optional<double> parse_plain_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::string cleaned;
    for (char c : s)
        if (c != ',') cleaned += c; // "1,000" style separators
    char* end = nullptr;
    double v = std::strtod(cleaned.c_str(), &end);
    if (end == cleaned.c_str() || *end != '\0') return std::nullopt;
    return v;
}

// Accepts decimals, integers, a/b, and \frac{a}{b}.
std::optional<double> parse_rational(const std::string& s) {
    if (auto v = parse_plain_number(s)) return v;
    if (s.rfind("\\frac{", 0) == 0) {
        size_t i = 6;
        int depth = 1;
        std::string num;
        for (; i < s.size() && depth > 0; ++i) {
            if (s[i] == '{') ++depth;
            if (s[i] == '}' && --depth == 0) break;
            num += s[i];
        }
        if (i + 1 < s.size() && s[i + 1] == '{') {
            std::string den = s.substr(i + 2);
            if (!den.empty() && den.back() == '}') den.pop_back();
            auto a = parse_rational(num);
            auto b = parse_rational(den);
            if (a && b && *b != 0.0) return *a / *b;
        }
        return std::nullopt;
    }
    auto slash = s.find('/');
    if (slash != std::string::npos) {
        auto a = parse_plain_number(s.substr(0, slash));
        auto b = parse_plain_number(s.substr(slash + 1));
        if (a && b && *b != 0.0) return *a / *b;
    }
    return std::nullopt;
}

int compare_math(const std::string& answer_value, const std::string& gold_value) {
    const std::string a = normalize_math(answer_value);
    const std::string g = normalize_math(gold_value);
    if (a == g) return 1;
    auto av = parse_rational(a);
    auto gv = parse_rational(g);
    if (av && gv) return std::abs(*av - *gv) <= 1e-6 ? 1 : 0;
    return 0;
}

int run_external_grader(const std::string& cmd, const std::string& answer, const std::string& gold) {
    if (cmd.empty()) fail(Errc::grader_unavailable, "no external grader command configured");

    auto write_temp = [](const std::string& content, const char* tag) {
        std::string pattern = "/tmp/tandem-" + std::string(tag) + "-XXXXXX";
        std::vector<char> buf(pattern.begin(), pattern.end());
        buf.push_back('\0');
        int fd = mkstemp(buf.data());
        if (fd < 0) fail(Errc::io_error, "cannot create grader temp file");
        ssize_t n = ::write(fd, content.data(), content.size());
        ::close(fd);
        if (n != static_cast<ssize_t>(content.size())) fail(Errc::io_error, "short grader temp write");
        return std::string(buf.data());
    };

    const std::string answer_file = write_temp(answer, "answer");
    const std::string gold_file = write_temp(gold, "gold");
    const std::string full = cmd + " '" + answer_file + "' '" + gold_file + "'";
    int status = std::system(full.c_str());
    std::remove(answer_file.c_str());
    std::remove(gold_file.c_str());

    if (status == -1 || !WIFEXITED(status))
        fail(Errc::grader_unavailable, "external grader did not run: " + cmd);
    const int code = WEXITSTATUS(status);
    if (code == 0) return 1;
    if (code == 1) return 0;
    fail(Errc::grader_unavailable, "external grader exited with status " + std::to_string(code));
}

} // namespace

int grade_answer(const std::string& answer, const std::string& gold, Grader grader,
                 const std::string& external_cmd) {
    if (gold.empty()) fail(Errc::empty_input, "empty gold answer");
    switch (grader) {
        case Grader::boxed_math: {
            auto extracted = extract_boxed(answer);
            if (!extracted) return 0;
            return compare_math(extracted->value, gold);
        }
        case Grader::numeric: {
            auto extracted = extract_boxed(answer); // boxed or last number
            if (!extracted) return 0;
            auto av = parse_rational(normalize_math(extracted->value));
            auto gv = parse_rational(normalize_math(gold));
            if (!av || !gv) return 0;
            return std::abs(*av - *gv) <= 1e-6 ? 1 : 0;
        }
        case Grader::exact:
            return trim(answer) == trim(gold) ? 1 : 0;
        case Grader::external:
            return run_external_grader(external_cmd, answer, gold);
    }
    return 0;
}

// ===== training set =====

std::vector<classifier::LabeledExample> build_training_set(const std::vector<traces::TraceRecord>& records) {
    std::vector<classifier::LabeledExample> out;
    for (const auto& record : records) {
        for (int t = 0; t <= 3; ++t) {
            const traces::StageData* sd = nullptr;
            for (const auto& s : record.stages)
                if (s.stage.index == t) sd = &s;
            if (!sd || !sd->answer_text || !sd->grade)
                fail(Errc::missing_grades, "trace for '" + record.question.id + "' lacks an answer/grade at stage " +
                                               std::to_string(t) + "; record in all-stage mode");
            classifier::LabeledExample ex;
            if (sd->features) {
                ex.features = *sd->features;
            } else if (!sd->token_scores.empty()) {
                ex.features = uncertainty::extract_features(sd->token_scores, sd->n);
            } else {
                fail(Errc::missing_stage_data,
                     "trace for '" + record.question.id + "' has no features at stage " + std::to_string(t));
            }
            ex.label = *sd->grade;
            ex.stage = sd->stage;
            ex.question_id = record.question.id;
            ex.subject = record.question.subject;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

// ===== evaluation =====

MetricsReport evaluate(const std::vector<cascade::GradedEpisode>& episodes) {
    if (episodes.empty()) fail(Errc::empty_input, "no episodes to evaluate");

    struct Acc {
        long n = 0, correct = 0;
        double length = 0, cost = 0;
    };
    Acc total;
    std::map<std::string, Acc> groups;
    double dollars = 0;
    bool all_priced = true;
    bool approx = false;

    for (const auto& ep : episodes) {
        if (!ep.final_grade)
            fail(Errc::missing_grades, "episode '" + ep.result.question_id + "' has no final grade");
        const double length =
            static_cast<double>(ep.result.cost.mentor_tokens + ep.result.cost.intern_generated_tokens);
        auto bump = [&](Acc& a) {
            a.n += 1;
            a.correct += *ep.final_grade;
            a.length += length;
            a.cost += ep.result.cost.tflops;
        };
        bump(total);
        if (!ep.subject.empty()) bump(groups[ep.subject]);
        if (ep.result.cost.dollars)
            dollars += *ep.result.cost.dollars;
        else
            all_priced = false;
        approx = approx || ep.result.approx_token_counts;
    }

    MetricsReport report;
    report.episodes = total.n;
    report.accuracy = 100.0 * static_cast<double>(total.correct) / static_cast<double>(total.n);
    report.avg_inference_length = total.length / static_cast<double>(total.n);
    report.avg_cost_tflops = total.cost / static_cast<double>(total.n);
    if (all_priced) report.avg_dollars = dollars / static_cast<double>(total.n);
    report.approx_token_counts = approx;
    for (const auto& [name, acc] : groups) {
        GroupRow row;
        row.group = name;
        row.episodes = acc.n;
        row.accuracy = 100.0 * static_cast<double>(acc.correct) / static_cast<double>(acc.n);
        row.avg_inference_length = acc.length / static_cast<double>(acc.n);
        row.avg_cost_tflops = acc.cost / static_cast<double>(acc.n);
        report.per_group.push_back(std::move(row));
    }
    return report;
}

StageDistribution stage_distribution(const std::vector<cascade::GradedEpisode>& episodes) {
    if (episodes.empty()) fail(Errc::empty_input, "no episodes for a stage distribution");

    std::map<std::string, std::array<long, 4>> counts;
    std::array<long, 4> overall{};
    for (const auto& ep : episodes) {
        const int stage = ep.result.selected_stage;
        if (stage < 0 || stage > 3) fail(Errc::parse_error, "episode selected stage out of range");
        const std::string group = ep.subject.empty() ? "all" : ep.subject;
        counts[group][static_cast<size_t>(stage)] += 1;
        overall[static_cast<size_t>(stage)] += 1;
    }

    auto to_row = [](const std::string& group, const std::array<long, 4>& c) {
        DistributionRow row;
        row.group = group;
        row.episodes = c[0] + c[1] + c[2] + c[3];
        for (size_t t = 0; t < 4; ++t)
            row.pct[t] = 100.0 * static_cast<double>(c[t]) / static_cast<double>(row.episodes);
        return row;
    };

    StageDistribution dist;
    for (const auto& [group, c] : counts) dist.rows.push_back(to_row(group, c));
    dist.overall = to_row("overall", overall);
    return dist;
}

RoutingTaxonomy routing_analysis(const std::vector<cascade::GradedEpisode>& episodes) {
    RoutingTaxonomy tx;
    for (const auto& ep : episodes) {
        std::array<int, 4> grades{};
        for (int t = 0; t <= 3; ++t) {
            auto it = ep.stage_grades.find(t);
            if (it == ep.stage_grades.end())
                fail(Errc::missing_grades, "episode '" + ep.result.question_id +
                                               "' lacks the all-stage grades routing analysis needs");
            grades[static_cast<size_t>(t)] = it->second;
        }
        const int selected = ep.result.selected_stage;
        if (grades[static_cast<size_t>(selected)] == 1) {
            ++tx.correct;
            continue;
        }
        const bool any = grades[0] || grades[1] || grades[2] || grades[3];
        if (!any) {
            ++tx.unsolvable;
            continue;
        }
        bool earlier = false;
        for (int t = 0; t < selected; ++t) earlier = earlier || grades[static_cast<size_t>(t)] == 1;
        if (earlier)
            ++tx.late_stop;
        else
            ++tx.premature_stop;
    }
    return tx;
}

ClassifierMetrics classifier_metrics(const std::map<int, std::vector<std::pair<int, int>>>& predictions_vs_labels) {
    ClassifierMetrics out;
    double sum_p = 0, sum_r = 0, sum_f = 0;
    long n_p = 0, n_r = 0, n_f = 0;
    for (const auto& [stage, pairs] : predictions_vs_labels) {
        StageMetrics m;
        for (const auto& [pred, label] : pairs) {
            if (pred == 1)
                (label == 1 ? m.tp : m.fp)++;
            else
                (label == 1 ? m.fn : m.tn)++;
        }
        m.both_classes = (m.tp + m.fn) > 0 && (m.fp + m.tn) > 0;
        if (m.both_classes) {
            if (m.tp + m.fp > 0)
                m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
            if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
            if (m.precision && m.recall)
                m.f1 = (*m.precision + *m.recall) == 0.0
                           ? 0.0
                           : 2.0 * (*m.precision) * (*m.recall) / (*m.precision + *m.recall);
        }
        if (m.precision) {
            sum_p += *m.precision;
            ++n_p;
        }
        if (m.recall) {
            sum_r += *m.recall;
            ++n_r;
        }
        if (m.f1) {
            sum_f += *m.f1;
            ++n_f;
        }
        out.per_stage[stage] = m;
    }
    if (n_p) out.macro_precision = sum_p / static_cast<double>(n_p);
    if (n_r) out.macro_recall = sum_r / static_cast<double>(n_r);
    if (n_f) out.macro_f1 = sum_f / static_cast<double>(n_f);
    return out;
}

} // namespace tandem::harness
