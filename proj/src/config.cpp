#include "tandem/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tandem::config {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// dotted-key lines -> nested JSON tree
json lines_to_tree(const std::string& text, const std::string& origin) {
    json tree = json::object();
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside string literals
        bool in_string = false;
        for (size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
            if (c == '#' && !in_string) {
                line.erase(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;

        auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::config_error, origin + " line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            fail(Errc::config_error, origin + " line " + std::to_string(lineno) + ": empty key");

        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception& e) {
            fail(Errc::config_error,
                 origin + " line " + std::to_string(lineno) + ": bad JSON value for '" + key + "': " + e.what());
        }

        json* node = &tree;
        size_t start = 0;
        while (true) {
            auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty())
                fail(Errc::config_error, origin + " line " + std::to_string(lineno) + ": malformed key '" + key + "'");
            if (dot == std::string::npos) {
                (*node)[part] = std::move(parsed);
                break;
            }
            node = &(*node)[part];
            if (!node->is_object())
                fail(Errc::config_error,
                     origin + " line " + std::to_string(lineno) + ": key '" + key + "' conflicts with a scalar");
            start = dot + 1;
        }
    }
    return tree;
}

// Tracks which leaves were consumed so unknown keys surface as errors.
class TreeReader {
public:
    TreeReader(json tree, std::string origin) : tree_(std::move(tree)), origin_(std::move(origin)) {}

    const json* find(const std::string& dotted) {
        const json* node = &tree_;
        size_t start = 0;
        while (true) {
            auto dot = dotted.find('.', start);
            const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(part)) return nullptr;
            node = &(*node)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        consumed_.insert(dotted);
        return node;
    }

    template <typename T>
    void take(const std::string& key, T& into) {
        if (const json* node = find(key)) {
            try {
                into = node->get<T>();
            } catch (const json::exception& e) {
                fail(Errc::config_error, origin_ + ": bad value for '" + key + "': " + e.what());
            }
        }
    }

    template <typename T>
    void take_optional(const std::string& key, std::optional<T>& into) {
        if (const json* node = find(key)) {
            if (node->is_null()) {
                into.reset();
                return;
            }
            try {
                into = node->get<T>();
            } catch (const json::exception& e) {
                fail(Errc::config_error, origin_ + ": bad value for '" + key + "': " + e.what());
            }
        }
    }

    void finish() const {
        std::vector<std::string> unknown;
        collect_leaves(tree_, "", unknown);
        for (const auto& key : unknown)
            if (!consumed_.count(key)) fail(Errc::config_error, origin_ + ": unknown config key '" + key + "'");
    }

private:
    static void collect_leaves(const json& node, const std::string& prefix, std::vector<std::string>& out) {
        if (!node.is_object()) {
            out.push_back(prefix);
            return;
        }
        for (const auto& [k, v] : node.items())
            collect_leaves(v, prefix.empty() ? k : prefix + "." + k, out);
    }

    json tree_;
    std::string origin_;
    std::set<std::string> consumed_;
};

void read_model(TreeReader& reader, const std::string& table, backend::ModelSpec& spec, backend::Role role) {
    spec.role = role;
    reader.take(table + ".name", spec.name);
    long long params = spec.param_count;
    reader.take(table + ".param_count", params);
    spec.param_count = params;
    reader.take(table + ".endpoint", spec.endpoint);
    reader.take_optional(table + ".price_per_1k_input", spec.price_per_1k_input);
    reader.take_optional(table + ".price_per_1k_output", spec.price_per_1k_output);
    reader.take(table + ".temperature", spec.decoding.temperature);
    reader.take(table + ".top_p", spec.decoding.top_p);
    reader.take(table + ".frequency_penalty", spec.decoding.frequency_penalty);
    reader.take(table + ".max_answer_tokens", spec.decoding.max_answer_tokens);
    reader.take_optional(table + ".thinking_mode", spec.thinking_mode);
    reader.take(table + ".max_retries", spec.max_retries);
}

RunConfig extract(json tree, const std::string& origin) {
    TreeReader reader(std::move(tree), origin);
    RunConfig cfg;

    read_model(reader, "models.mentor", cfg.mentor, backend::Role::mentor);
    read_model(reader, "models.intern", cfg.intern, backend::Role::intern);

    reader.take("budgets", cfg.budgets);

    if (const json* node = reader.find("thresholds")) {
        classifier::ThresholdSet set;
        for (const auto& [k, v] : node->items()) {
            try {
                set.tau[std::stoi(k)] = v.get<double>();
            } catch (const std::exception&) {
                fail(Errc::config_error, origin + ": bad thresholds entry '" + k + "'");
            }
        }
        cfg.thresholds = std::move(set);
    }

    reader.take("classifier.lr", cfg.hyper.lr);
    reader.take("classifier.max_epochs", cfg.hyper.max_epochs);
    reader.take("classifier.dropout", cfg.hyper.dropout);
    reader.take("classifier.split_seed", cfg.hyper.split_seed);
    reader.take("classifier.val_fraction", cfg.hyper.val_fraction);
    reader.take("classifier.batch_size", cfg.hyper.batch_size);
    reader.take("classifier.patience", cfg.hyper.patience);
    reader.take("classifier.grouping", cfg.grouping);
    reader.take("classifier.tune_on_validation", cfg.tune_on_validation);

    reader.take("flags.allow_stage0_exit", cfg.allow_stage0_exit);
    reader.take("flags.all_stage_recording", cfg.all_stage_recording);
    reader.take("flags.top_k", cfg.top_k);

    reader.take("paths.dataset", cfg.dataset_path);
    reader.take("paths.traces", cfg.traces_path);
    reader.take("paths.model_file", cfg.model_file);
    reader.take("paths.report_dir", cfg.report_dir);

    reader.take("dataset.format", cfg.dataset_format);
    reader.take("grader", cfg.grader);
    reader.take("grader_cmd", cfg.grader_cmd);
    reader.take("router_threshold", cfg.router_threshold);
    reader.take("templates.insight", cfg.insight_template_path);
    reader.take("templates.answer", cfg.answer_template_path);
    reader.take("parallel", cfg.parallel);
    reader.take("limit", cfg.limit);

    reader.finish();

    core::StageLadder::from_budgets(cfg.budgets); // validates monotonicity
    core::dataset_from_name(cfg.dataset_format);
    if (cfg.grouping != "unified" && cfg.grouping != "per_subject")
        fail(Errc::config_error, origin + ": classifier.grouping must be 'unified' or 'per_subject'");
    if (cfg.router_threshold < 0.0 || cfg.router_threshold > 1.0)
        fail(Errc::config_error, origin + ": router_threshold must be in [0,1]");
    if (cfg.parallel < 1) fail(Errc::config_error, origin + ": parallel must be >= 1");
    if (cfg.top_k < 1) fail(Errc::config_error, origin + ": flags.top_k must be >= 1");
    return cfg;
}

json config_to_tree(const RunConfig& cfg) {
    json tree = json::object();
    auto model_table = [](const backend::ModelSpec& m) {
        json t = {{"name", m.name},
                  {"param_count", m.param_count},
                  {"endpoint", m.endpoint},
                  {"temperature", m.decoding.temperature},
                  {"top_p", m.decoding.top_p},
                  {"frequency_penalty", m.decoding.frequency_penalty},
                  {"max_answer_tokens", m.decoding.max_answer_tokens},
                  {"max_retries", m.max_retries}};
        if (m.price_per_1k_input) t["price_per_1k_input"] = *m.price_per_1k_input;
        if (m.price_per_1k_output) t["price_per_1k_output"] = *m.price_per_1k_output;
        if (m.thinking_mode) t["thinking_mode"] = *m.thinking_mode;
        return t;
    };
    tree["models"]["mentor"] = model_table(cfg.mentor);
    tree["models"]["intern"] = model_table(cfg.intern);
    tree["budgets"] = cfg.budgets;
    if (cfg.thresholds) {
        json t = json::object();
        for (const auto& [stage, tau] : cfg.thresholds->tau) t[std::to_string(stage)] = tau;
        tree["thresholds"] = t;
    }
    tree["classifier"] = {{"lr", cfg.hyper.lr},
                          {"max_epochs", cfg.hyper.max_epochs},
                          {"dropout", cfg.hyper.dropout},
                          {"split_seed", cfg.hyper.split_seed},
                          {"val_fraction", cfg.hyper.val_fraction},
                          {"batch_size", cfg.hyper.batch_size},
                          {"patience", cfg.hyper.patience},
                          {"grouping", cfg.grouping},
                          {"tune_on_validation", cfg.tune_on_validation}};
    tree["flags"] = {{"allow_stage0_exit", cfg.allow_stage0_exit},
                     {"all_stage_recording", cfg.all_stage_recording},
                     {"top_k", cfg.top_k}};
    tree["paths"] = {{"dataset", cfg.dataset_path},
                     {"traces", cfg.traces_path},
                     {"model_file", cfg.model_file},
                     {"report_dir", cfg.report_dir}};
    tree["dataset"] = {{"format", cfg.dataset_format}};
    tree["grader"] = cfg.grader;
    tree["grader_cmd"] = cfg.grader_cmd;
    tree["router_threshold"] = cfg.router_threshold;
    tree["templates"] = {{"insight", cfg.insight_template_path}, {"answer", cfg.answer_template_path}};
    tree["parallel"] = cfg.parallel;
    tree["limit"] = cfg.limit;
    return tree;
}

void emit_tree(const json& node, const std::string& prefix, std::ostringstream& out) {
    if (!node.is_object()) {
        out << prefix << " = " << node.dump() << "\n";
        return;
    }
    for (const auto& [k, v] : node.items()) emit_tree(v, prefix.empty() ? k : prefix + "." + k, out);
}

} // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    return extract(lines_to_tree(text, origin), origin);
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::config_error, "cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream out;
    emit_tree(config_to_tree(cfg), "", out);
    return out.str();
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& json_value) {
    const std::string text = dump_config(cfg) + dotted_key + " = " + json_value + "\n";
    cfg = parse_config_text(text, "<override " + dotted_key + ">");
}

bool config_equal(const RunConfig& a, const RunConfig& b) {
    return config_to_tree(a) == config_to_tree(b);
}

} // namespace tandem::config
