#include "radkg/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "radkg/checkpoint.hpp"
#include "radkg/encoders.hpp"
#include "radkg/errors.hpp"
#include "radkg/eval.hpp"
#include "radkg/gradcheck.hpp"
#include "radkg/kg_store.hpp"
#include "radkg/scoring.hpp"
#include "radkg/training.hpp"
#include "text_util.hpp"

namespace radkg::cli {

namespace {

/// Thrown for bad flag values discovered after parsing.
struct UsageError : Error {
    using Error::Error;
};

/// Evaluation finished but produced no defined metric.
struct UndefinedResult : Error {
    using Error::Error;
};

std::string comment_block(const std::string& echo) {
    std::string out;
    std::istringstream in(echo);
    std::string line;
    while (std::getline(in, line)) out += "# " + line + "\n";
    return out;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(path, 0, "cannot open for writing");
    return out;
}

SplitRatios parse_ratios(const std::string& text) {
    const auto cells = detail::split_csv(text);
    if (cells.size() != 3) throw UsageError("--split-ratios needs three comma-separated values");
    std::array<double, 3> r{};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto v = detail::parse_double(cells[i]);
        if (!v) throw UsageError("--split-ratios: '" + std::string(cells[i]) + "' is not a number");
        r[i] = *v;
    }
    return {r[0], r[1], r[2]};
}

std::vector<std::size_t> parse_finding_subset(const std::string& text, const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    if (detail::trim(text).empty()) return out;
    for (auto cell : detail::split_csv(text)) {
        std::size_t index = names.size();
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (names[j] == cell) index = j;
        }
        if (index == names.size()) {
            std::size_t value = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec == std::errc{} && ptr == cell.data() + cell.size() && value < names.size()) index = value;
        }
        if (index == names.size()) throw UsageError("--findings: unknown finding '" + std::string(cell) + "'");
        out.push_back(index);
    }
    return out;
}

std::vector<std::string> split_names(const std::string& joined) {
    std::vector<std::string> out;
    if (joined.empty()) return out;
    for (auto cell : detail::split_csv(joined, '|')) out.emplace_back(cell);
    return out;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "|" : "") + names[i];
    return out;
}

std::string format_optional(const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string("undefined");
}

// ---------------------------------------------------------------------------
// Shared option groups

const CLI::IsMember kPolicies({"positive", "negative", "separate"});
const CLI::IsMember kScorers({"distmult", "conve"});

struct DataOptions {
    std::string features;
    std::string annotations;
    std::string policy = "positive";
    std::string split_ratios = "0.7,0.1,0.2";
    std::uint64_t split_seed = 0;
};

struct ModelOptions {
    std::string scorer = "distmult";
    std::size_t dim = 100;
    std::size_t channels = 8;
};

struct TrainOptions {
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::string optimizer = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::size_t patience = 5;
    bool cooccur = false;
    double cooccur_threshold = kDefaultCooccurrenceThreshold;
};

void add_data_options(CLI::App* app, DataOptions& o, bool need_features) {
    auto* f = app->add_option("--features", o.features, "Feature code CSV (id,f0,...)");
    if (need_features) f->required();
    app->add_option("--annotations", o.annotations, "Annotation CSV (id,<finding...>[,group])")->required();
    app->add_option("--policy", o.policy, "Uncertain label policy: positive|negative|separate")
        ->check(kPolicies)
        ->capture_default_str();
    app->add_option("--split-ratios", o.split_ratios, "train,val,test proportions")->capture_default_str();
    app->add_option("--split-seed", o.split_seed, "Seed of the fold assignment")->capture_default_str();
}

ModelDims model_dims(const ModelOptions& o, ScorerKind kind, std::size_t feature_dim, std::size_t findings,
                     std::size_t relations) {
    ModelDims dims;
    dims.feature_dim = feature_dim;
    dims.embed_dim = o.dim;
    dims.findings = findings;
    dims.channels = o.channels;
    dims.relations = relations;
    const auto side = square_side(o.dim);
    if (kind == ScorerKind::ConvE && side == 0) {
        throw UsageError("ConvE needs a square embedding size (k x k = d); got d=" + std::to_string(o.dim));
    }
    dims.reshape_rows = side == 0 ? o.dim : side;
    dims.reshape_cols = side == 0 ? 1 : side;
    try {
        dims.validate(kind);
    } catch (const ShapeError& e) {
        throw UsageError(e.what());
    }
    return dims;
}

struct Folds {
    Split split;
    SplitRatios ratios;
};

Folds make_folds(const AnnotationTable& table, const std::string& ratios, std::uint64_t seed, std::ostream& err) {
    Folds f{{}, parse_ratios(ratios)};
    try {
        f.split = split(table, f.ratios, seed);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    for (const auto& w : f.split.warnings) err << "warning: " << w << '\n';
    return f;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const SyntheticSpec& spec, const std::string& features_out, const std::string& annotations_out,
              std::size_t groups, const std::string& echo, std::ostream& out) {
    try {
        spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    auto [features, annotations] = synth_dataset(spec);
    if (groups > 0) {
        for (std::size_t i = 0; i < annotations.rows(); ++i) {
            annotations.groups.push_back("patient" + std::to_string(i % groups));
        }
    }
    {
        auto f = open_output(features_out);
        f << comment_block(echo);
        write_features(f, features);
    }
    {
        auto f = open_output(annotations_out);
        f << comment_block(echo);
        write_annotations(f, annotations);
    }
    out << "images = " << annotations.rows() << "\nfindings = " << annotations.findings()
        << "\nfeature_dim = " << features.dim() << '\n';
    return kOk;
}

int cmd_build_kg(const DataOptions& data, bool cooccur, double threshold, const std::string& output,
                 const std::string& echo, std::ostream& out) {
    const auto policy = parse_policy(data.policy);
    const auto table = load_annotations(data.annotations);
    auto kg = build_radkg(table, policy);
    if (cooccur) {
        if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("--cooccur-threshold must lie in [0, 1]");
        kg = add_cooccurrence(kg, cooccurrence_matrix(table, policy), threshold);
    }
    if (!output.empty()) {
        auto f = open_output(output);
        f << comment_block(echo);
        f << "# images=" << kg.images() << " findings=" << kg.findings() << '\n';
        write_kg(f, kg);
    }
    out << "images = " << kg.images() << "\nfindings = " << kg.findings() << '\n';
    for (auto r : kAllRelations) out << to_string(r) << " = " << kg.count(r) << '\n';
    out << "total = " << kg.size() << '\n';
    return kOk;
}

std::vector<RelationKind> trained_relations(UncertainPolicy policy, bool cooccur) {
    std::vector<RelationKind> relations = {RelationKind::HasFinding};
    if (policy == UncertainPolicy::AsSeparateRelation) relations.push_back(RelationKind::ProbablyHasFinding);
    if (cooccur) relations.push_back(RelationKind::CoOccurs);
    return relations;
}

int cmd_train(const DataOptions& data, const ModelOptions& model_opts, const TrainOptions& opts,
              const std::string& checkpoint_path, std::string history_path, const std::string& echo,
              std::ostream& out, std::ostream& err) {
    TrainConfig config;
    config.learning_rate = opts.lr;
    config.epochs = opts.epochs;
    config.batch_size = opts.batch_size;
    config.optimizer = parse_optimizer(opts.optimizer);
    config.beta1 = opts.beta1;
    config.beta2 = opts.beta2;
    config.epsilon = opts.adam_eps;
    config.seed = opts.seed;
    config.policy = parse_policy(data.policy);
    config.patience = opts.patience;
    config.relations = trained_relations(config.policy, opts.cooccur);
    try {
        config.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const auto scorer = parse_scorer(model_opts.scorer);

    const auto table = load_annotations(data.annotations);
    const auto features = load_features(data.features);
    const auto folds = make_folds(table, data.split_ratios, data.split_seed, err);
    const auto& train_fold = folds.split.train();
    const auto& val_fold = folds.split.val();
    const auto train_features = features.aligned_to(train_fold.image_ids);
    const auto val_features = features.aligned_to(val_fold.image_ids);

    auto kg = build_radkg(train_fold, config.policy);
    if (opts.cooccur) {
        if (!(opts.cooccur_threshold >= 0.0 && opts.cooccur_threshold <= 1.0)) {
            throw UsageError("--cooccur-threshold must lie in [0, 1]");
        }
        kg = add_cooccurrence(kg, cooccurrence_matrix(train_fold, config.policy), opts.cooccur_threshold);
    }

    std::size_t relation_rows = 0;
    for (auto r : config.relations) relation_rows = std::max(relation_rows, static_cast<std::size_t>(r) + 1);
    const auto dims = model_dims(model_opts, scorer, features.dim(), table.findings(), relation_rows);
    auto model = init_model(dims, scorer, config.seed);

    const auto result = train(std::move(model), kg, train_features, {&val_features, &val_fold}, config);

    Metadata meta;
    meta.emplace_back("scorer", std::string(to_string(scorer)));
    meta.emplace_back("policy", std::string(to_string(config.policy)));
    std::string relations;
    for (auto r : config.relations) relations += (relations.empty() ? "" : "|") + std::string(to_string(r));
    meta.emplace_back("relations", relations);
    meta.emplace_back("findings", join_names(table.finding_names));
    meta.emplace_back("seed", std::to_string(config.seed));
    meta.emplace_back("split_ratios", data.split_ratios);
    meta.emplace_back("split_seed", std::to_string(data.split_seed));
    meta.emplace_back("epochs_run", std::to_string(result.history.size()));
    meta.emplace_back("best_epoch", std::to_string(result.best_epoch));
    meta.emplace_back("best_val_macro_auc", format_optional(result.best_val_macro_auc));
    meta.emplace_back("train_images", std::to_string(train_fold.rows()));
    meta.emplace_back("val_images", std::to_string(val_fold.rows()));
    std::istringstream echo_lines(echo);
    for (std::string line; std::getline(echo_lines, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        meta.emplace_back("config." + std::string(detail::trim(line.substr(0, eq))),
                          std::string(detail::trim(line.substr(eq + 1))));
    }
    save_checkpoint(checkpoint_path, result.best, meta);

    if (history_path.empty()) history_path = checkpoint_path + ".history";
    {
        auto f = open_output(history_path);
        f << comment_block(echo);
        f << "epoch,train_loss,val_macro_auc,improved\n";
        for (const auto& h : result.history) {
            f << h.epoch << ',' << detail::format_double(h.train_loss) << ',' << format_optional(h.val_macro_auc)
              << ',' << (h.improved ? 1 : 0) << '\n';
        }
    }
    out << "epochs_run = " << result.history.size() << "\nbest_epoch = " << result.best_epoch
        << "\nbest_val_macro_auc = " << format_optional(result.best_val_macro_auc)
        << "\nparameters = " << param_count(result.best) << '\n';
    return kOk;
}

struct LoadedModel {
    Checkpoint checkpoint;
    std::vector<std::string> finding_names;
};

LoadedModel load_model(const std::string& path) {
    LoadedModel m{load_checkpoint(path), {}};
    m.finding_names = split_names(m.checkpoint.get("findings"));
    if (m.finding_names.size() != m.checkpoint.model.dims.findings) {
        m.finding_names.clear();
        for (std::size_t j = 0; j < m.checkpoint.model.dims.findings; ++j) m.finding_names.push_back("F" + std::to_string(j));
    }
    return m;
}

void check_feature_dim(const EmbeddingModel& model, const FeatureTable& features) {
    if (features.dim() != model.dims.feature_dim) {
        throw ShapeError("feature dimension " + std::to_string(features.dim()) + " does not match checkpoint (D=" +
                         std::to_string(model.dims.feature_dim) + ")");
    }
}

int cmd_eval(DataOptions data, const CLI::App& app, const std::string& checkpoint_path, const std::string& fold,
             const std::string& findings, std::optional<double> threshold, const std::string& output,
             const std::string& echo, std::ostream& out, std::ostream& err) {
    const auto loaded = load_model(checkpoint_path);
    const auto& model = loaded.checkpoint.model;
    // Unset flags fall back to what the checkpoint was trained with.
    if (app.count("--policy") == 0 && !loaded.checkpoint.get("policy").empty()) data.policy = loaded.checkpoint.get("policy");
    if (app.count("--split-ratios") == 0 && !loaded.checkpoint.get("split_ratios").empty()) {
        data.split_ratios = loaded.checkpoint.get("split_ratios");
    }
    if (app.count("--split-seed") == 0 && !loaded.checkpoint.get("split_seed").empty()) {
        data.split_seed = std::stoull(loaded.checkpoint.get("split_seed"));
    }
    const auto policy = parse_policy(data.policy);
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");

    const auto table = load_annotations(data.annotations);
    if (table.findings() != model.dims.findings) {
        throw ShapeError("annotation file has " + std::to_string(table.findings()) + " findings, checkpoint has " +
                         std::to_string(model.dims.findings));
    }
    const auto features = load_features(data.features);
    check_feature_dim(model, features);

    AnnotationTable truth;
    if (fold == "all") {
        truth = table;
    } else {
        const auto folds = make_folds(table, data.split_ratios, data.split_seed, err);
        const std::map<std::string, std::size_t> index = {{"train", 0}, {"val", 1}, {"test", 2}};
        truth = folds.split.folds[index.at(fold)];
    }
    const auto aligned = features.aligned_to(truth.image_ids);
    std::vector<PredictionRow> rows;
    rows.reserve(truth.rows());
    for (std::size_t i = 0; i < truth.rows(); ++i) rows.push_back(predict(model, aligned.code(i), truth.image_ids[i]));

    const auto subset = parse_finding_subset(findings, table.finding_names);
    const auto report = macro_auc(rows, truth, policy, subset, threshold);

    std::string full_echo = echo + "fold_images=" + std::to_string(truth.rows()) + "\n";
    if (output.empty()) {
        write_report(out, report, full_echo);
    } else {
        auto f = open_output(output);
        write_report(f, report, full_echo);
        out << "macro_auc = " << format_optional(report.macro_auc) << '\n';
    }
    if (!report.defined()) throw UndefinedResult("no finding has a defined AUC on the " + fold + " fold");
    return kOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& features_path, const std::string& ids_path,
                std::optional<double> threshold, const std::string& output, const std::string& echo,
                std::ostream& out) {
    const auto loaded = load_model(checkpoint_path);
    const auto& model = loaded.checkpoint.model;
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
    auto features = load_features(features_path);
    check_feature_dim(model, features);
    if (!ids_path.empty()) features = features.aligned_to(load_annotations(ids_path).image_ids);

    std::vector<PredictionRow> rows;
    rows.reserve(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i) rows.push_back(predict(model, features.code(i), features.ids()[i]));

    if (output.empty()) {
        write_predictions(out, rows, loaded.finding_names, threshold);
    } else {
        auto f = open_output(output);
        f << comment_block(echo);
        write_predictions(f, rows, loaded.finding_names, threshold);
        out << "rows = " << rows.size() << '\n';
    }
    return kOk;
}

int cmd_gradcheck(GradCheckConfig config, const ModelOptions& model_opts, std::size_t feature_dim,
                  std::size_t findings, std::size_t relations, std::ostream& out) {
    config.kind = parse_scorer(model_opts.scorer);
    if (relations == 0 || relations > kRelationKindCount) throw UsageError("--relations must lie in [1, 3]");
    if (!(config.step > 0.0)) throw UsageError("--step must be positive");
    config.geometries = {model_dims(model_opts, config.kind, feature_dim, findings, relations)};
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = run_gradcheck(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "scorer = " << to_string(config.kind) << "\nmodels = " << result.models_checked
        << "\nredrawn_near_kink = " << result.models_redrawn << "\ncoordinates = " << result.coordinates_checked
        << "\nmax_relative_error = " << result.max_relative_error << "\nworst = " << result.worst_location
        << "\ntolerance = " << config.tolerance << "\nseconds = " << seconds
        << "\nresult = " << (result.passed ? "pass" : "fail") << '\n';
    return result.passed ? kOk : kNumerical;
}

// ---------------------------------------------------------------------------
// Config file handling

std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open config file");
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    while (detail::next_record(in, line, line_no)) {
        const auto t = detail::trim(line);
        if (t.front() == '[' || t.front() == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw ParseError(path, line_no, "expected key = value");
        std::string key(detail::trim(t.substr(0, eq)));
        std::string value(detail::trim(t.substr(eq + 1)));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        for (auto& c : key) {
            if (c == '_') c = '-';
        }
        values[key] = value;
    }
    return values;
}

std::optional<std::string> config_path_from(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') return std::string(env);
    return std::nullopt;
}

/// Effective configuration of a subcommand as `key=value` lines.
std::string effective_config(const CLI::App* sub) {
    std::string text = sub->config_to_str(true, false);
    std::string out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("config=", 0) == 0 || line.rfind("help", 0) == 0) continue;
        out += line + "\n";
    }
    return "command=" + sub->get_name() + "\n" + out;
}

}  // namespace

int run(const std::vector<std::string>& input_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-graph link prediction for multi-label image classification"};
    app.name("radkg");
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config_file;
    const auto add_config = [&config_file](CLI::App* sub) {
        sub->add_option("--config", config_file,
                        std::string("Flat key = value config file (default from $") + kConfigEnv + ")");
    };

    // synth
    SyntheticSpec spec;
    std::string synth_features, synth_annotations;
    std::size_t synth_groups = 0;
    auto* synth = app.add_subcommand("synth", "Write a planted-structure feature + annotation dataset");
    add_config(synth);
    synth->add_option("--images", spec.images, "Number of images")->capture_default_str();
    synth->add_option("--findings", spec.findings, "Number of findings")->capture_default_str();
    synth->add_option("--feature-dim", spec.feature_dim, "Feature code length D")->capture_default_str();
    synth->add_option("--prototype-scale", spec.prototype_scale, "Std of finding prototypes")->capture_default_str();
    synth->add_option("--noise-scale", spec.noise_scale, "Std of additive feature noise")->capture_default_str();
    synth->add_option("--sparsity", spec.sparsity, "Per-cell positive probability")->capture_default_str();
    synth->add_option("--uncertain-fraction", spec.uncertain_fraction, "Share of positives marked uncertain")
        ->capture_default_str();
    synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
    synth->add_option("--groups", synth_groups, "Emit a group column with this many patients (0 = none)")
        ->capture_default_str();
    synth->add_option("--features-out", synth_features, "Feature CSV to write")->required();
    synth->add_option("--annotations-out", synth_annotations, "Annotation CSV to write")->required();

    // build-kg
    DataOptions kg_data;
    bool kg_cooccur = false;
    double kg_threshold = kDefaultCooccurrenceThreshold;
    std::string kg_output;
    auto* build = app.add_subcommand("build-kg", "Build the knowledge graph from an annotation file");
    add_config(build);
    build->add_option("--annotations", kg_data.annotations, "Annotation CSV")->required();
    build->add_option("--policy", kg_data.policy, "Uncertain label policy: positive|negative|separate")
        ->check(kPolicies)
        ->capture_default_str();
    build->add_flag("--cooccur", kg_cooccur, "Add coOccurs finding-finding triples");
    build->add_option("--cooccur-threshold", kg_threshold, "Conditional probability threshold (strict)")
        ->capture_default_str();
    build->add_option("--output", kg_output, "Serialized triple file");

    // train
    DataOptions train_data;
    ModelOptions train_model;
    TrainOptions train_opts;
    std::string train_checkpoint, train_history;
    auto* tr = app.add_subcommand("train", "Train a scorer on the train fold, select on the val fold");
    add_config(tr);
    add_data_options(tr, train_data, true);
    tr->add_option("--scorer", train_model.scorer, "distmult|conve")->check(kScorers)->capture_default_str();
    tr->add_option("--dim", train_model.dim, "Embedding size d")->capture_default_str();
    tr->add_option("--channels", train_model.channels, "ConvE kernel count")->capture_default_str();
    tr->add_option("--lr", train_opts.lr, "Learning rate")->capture_default_str();
    tr->add_option("--epochs", train_opts.epochs, "Maximum epochs")->capture_default_str();
    tr->add_option("--batch-size", train_opts.batch_size, "Queries per optimizer step")->capture_default_str();
    tr->add_option("--optimizer", train_opts.optimizer, "sgd|adam")
        ->check(CLI::IsMember({"sgd", "adam"}))
        ->capture_default_str();
    tr->add_option("--beta1", train_opts.beta1, "Adam beta1")->capture_default_str();
    tr->add_option("--beta2", train_opts.beta2, "Adam beta2")->capture_default_str();
    tr->add_option("--adam-eps", train_opts.adam_eps, "Adam epsilon")->capture_default_str();
    tr->add_option("--seed", train_opts.seed, "Initialisation and shuffling seed")->capture_default_str();
    tr->add_option("--patience", train_opts.patience, "Epochs without val gain before stopping")
        ->capture_default_str();
    tr->add_flag("--cooccur", train_opts.cooccur, "Also train coOccurs triples from the train fold");
    tr->add_option("--cooccur-threshold", train_opts.cooccur_threshold, "Conditional probability threshold")
        ->capture_default_str();
    tr->add_option("--checkpoint", train_checkpoint, "Checkpoint to write")->required();
    tr->add_option("--history", train_history, "Per-epoch history CSV (default <checkpoint>.history)");

    // eval
    DataOptions eval_data;
    std::string eval_checkpoint, eval_fold = "test", eval_findings, eval_output;
    std::optional<double> eval_threshold;
    auto* ev = app.add_subcommand("eval", "Per-finding and macro AUC of a checkpoint on a fold");
    add_config(ev);
    add_data_options(ev, eval_data, true);
    ev->add_option("--checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
    ev->add_option("--fold", eval_fold, "train|val|test|all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}))
        ->capture_default_str();
    ev->add_option("--findings", eval_findings, "Comma-separated finding names or indices (default all)");
    ev->add_option("--threshold", eval_threshold, "Decision threshold for sensitivity/specificity");
    ev->add_option("--output", eval_output, "Report path (default stdout)");

    // predict
    std::string pred_checkpoint, pred_features, pred_ids, pred_output;
    std::optional<double> pred_threshold;
    auto* pr = app.add_subcommand("predict", "Score (image, hasFinding, ?) for every image");
    add_config(pr);
    pr->add_option("--checkpoint", pred_checkpoint, "Checkpoint")->required();
    pr->add_option("--features", pred_features, "Feature CSV")->required();
    pr->add_option("--annotations", pred_ids, "Restrict to (and require) the ids of this annotation file");
    pr->add_option("--threshold", pred_threshold, "Append binary label columns at this threshold");
    pr->add_option("--output", pred_output, "Prediction CSV (default stdout)");

    // gradcheck
    GradCheckConfig gc;
    ModelOptions gc_model;
    std::size_t gc_feature_dim = 1024, gc_findings = 14, gc_relations = 1;
    auto* gr = app.add_subcommand("gradcheck", "Finite-difference audit of the analytic gradients");
    add_config(gr);
    gr->add_option("--scorer", gc_model.scorer, "distmult|conve")->check(kScorers)->capture_default_str();
    gr->add_option("--dim", gc_model.dim, "Embedding size d")->capture_default_str();
    gr->add_option("--channels", gc_model.channels, "ConvE kernel count")->capture_default_str();
    gr->add_option("--feature-dim", gc_feature_dim, "Feature code length D")->capture_default_str();
    gr->add_option("--finding-count", gc_findings, "Number of findings n")->capture_default_str();
    gr->add_option("--relations", gc_relations, "Relation embedding rows")->capture_default_str();
    gr->add_option("--models", gc.models, "Random models to audit")->capture_default_str();
    gr->add_option("--seed", gc.seed, "Seed")->capture_default_str();
    gr->add_option("--step", gc.step, "Central difference step")->capture_default_str();
    gr->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
    gr->add_option("--coordinates", gc.coordinates_per_block, "Coordinates sampled per block")
        ->capture_default_str();
    gr->add_flag("--corrupt-gradient", gc.corrupt, "Test hook: perturb one analytic gradient entry")
        ->group("");

    // Config file entries become leading flags of the chosen subcommand so explicit flags win.
    std::vector<std::string> args = input_args;
    try {
        const auto path = config_path_from(args);
        std::size_t sub_pos = args.size();
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (!args[i].empty() && args[i][0] != '-') {
                sub_pos = i;
                break;
            }
        }
        if (path && sub_pos < args.size()) {
            CLI::App* sub = nullptr;
            for (auto* s : app.get_subcommands({})) {
                if (s->get_name() == args[sub_pos]) sub = s;
            }
            if (sub != nullptr) {
                std::vector<std::string> injected;
                for (const auto& [key, value] : read_config(*path)) {
                    if (key == "config") continue;
                    bool known_anywhere = false;
                    for (auto* s : app.get_subcommands({})) {
                        known_anywhere = known_anywhere || s->get_option_no_throw("--" + key) != nullptr;
                    }
                    if (!known_anywhere) throw UsageError("config file: unknown key '" + key + "'");
                    if (sub->get_option_no_throw("--" + key) == nullptr) continue;
                    injected.push_back("--" + key + "=" + value);
                }
                args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(), injected.end());
            }
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }

    std::vector<const char*> argv = {"radkg"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // --help on a subcommand
            for (auto* s : app.get_subcommands()) out << s->help();
            if (app.get_subcommands().empty()) out << app.help();
            return kOk;
        }
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string echo = effective_config(sub);
    try {
        if (sub == synth) return cmd_synth(spec, synth_features, synth_annotations, synth_groups, echo, out);
        if (sub == build) return cmd_build_kg(kg_data, kg_cooccur, kg_threshold, kg_output, echo, out);
        if (sub == tr) {
            return cmd_train(train_data, train_model, train_opts, train_checkpoint, train_history, echo, out, err);
        }
        if (sub == ev) {
            return cmd_eval(eval_data, *ev, eval_checkpoint, eval_fold, eval_findings, eval_threshold, eval_output,
                            echo, out, err);
        }
        if (sub == pr) return cmd_predict(pred_checkpoint, pred_features, pred_ids, pred_threshold, pred_output, echo, out);
        if (sub == gr) return cmd_gradcheck(gc, gc_model, gc_feature_dim, gc_findings, gc_relations, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UndefinedResult& e) {
        err << "undefined: " << e.what() << '\n';
        return kUndefinedResult;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

}  // namespace radkg::cli
