// Command-line front end: corpus synthesis, the training phases, teacher
// annotation, inference, and evaluation.
//
// Exit codes: 0 success, 1 bad input or configuration, 2 usage errors
// (unknown command or flag).

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "gega/pipeline.hpp"
#include "gega/synth.hpp"
#include "json.hpp"

namespace {

using namespace gega;

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config-file support. Every bound flag can also be set from a JSON object
// passed via --config; explicit flags win over the file, the file wins over
// built-in defaults.
// ---------------------------------------------------------------------------

class FileConfig {
 public:
  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path_,
                    "JSON object with defaults for this command's flags");
  }

  template <typename T>
  CLI::Option* bind(CLI::App* cmd, const std::string& flag, T& target,
                    const std::string& help) {
    CLI::Option* o = cmd->add_option(flag, target, help)->capture_default_str();
    setters_.push_back({flag.substr(2), o, [&target](const nlohmann::json& v) {
                          target = v.get<T>();
                        }});
    return o;
  }

  void apply() const {
    if (path_.empty()) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path_));
    } catch (const nlohmann::json::exception& e) {
      throw CliError("config file " + path_ + ": " + e.what());
    }
    if (!j.is_object())
      throw CliError("config file " + path_ + ": root must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      auto it = std::find_if(
          setters_.begin(), setters_.end(),
          [&](const Setter& s) { return s.key == key; });
      if (it == setters_.end())
        throw CliError("config file " + path_ + ": unknown field '" + key +
                       "'");
      if (it->opt->count() > 0) continue;
      try {
        it->assign(value);
      } catch (const nlohmann::json::exception&) {
        throw CliError("config file " + path_ + ": field '" + key +
                       "' has the wrong type");
      }
    }
  }

 private:
  struct Setter {
    std::string key;
    CLI::Option* opt;
    std::function<void(const nlohmann::json&)> assign;
  };
  std::string path_;
  std::vector<Setter> setters_;
};

// ---------------------------------------------------------------------------
// Shared flag bundles.
// ---------------------------------------------------------------------------

struct ShapeFlags {
  std::size_t d_model = 64;
  std::size_t num_heads = 2;
  std::size_t enc_layers = 2;
  std::size_t max_window = 512;
  std::size_t gnn_layers = 2;
  std::size_t refiner_layers = 3;
  std::size_t num_class = 97;
  std::size_t num_labels = 4;
  std::size_t bilinear_groups = 0;
  double evi_thresh = 0.2;

  void attach(CLI::App* cmd, FileConfig& fc) {
    fc.bind(cmd, "--d-model", d_model, "embedding width");
    fc.bind(cmd, "--num-heads", num_heads, "attention heads in every stage");
    fc.bind(cmd, "--enc-layers", enc_layers, "context encoder depth");
    fc.bind(cmd, "--max-window", max_window,
            "longest span the encoder sees at once");
    fc.bind(cmd, "--gnn-layers", gnn_layers, "graph convolution sublayers");
    fc.bind(cmd, "--refiner-layers", refiner_layers,
            "refiner depth, at least 3");
    fc.bind(cmd, "--num-class", num_class,
            "relation label count including the null class");
    fc.bind(cmd, "--num-labels", num_labels,
            "most relations kept per entity pair");
    fc.bind(cmd, "--evi-thresh", evi_thresh,
            "sentence probability needed to count as evidence");
    fc.bind(cmd, "--bilinear-groups", bilinear_groups,
            "bilinear classifier groups, 0 picks one per 64 channels");
  }

  EncoderConfig encoder() const {
    EncoderConfig e;
    e.d_model = d_model;
    e.num_heads = num_heads;
    e.num_layers = enc_layers;
    e.max_window = max_window;
    return e;
  }

  GegaConfig gega() const {
    GegaConfig g;
    g.num_heads = num_heads;
    g.gnn_layers = gnn_layers;
    g.enc_layers = refiner_layers;
    g.num_class = num_class;
    g.num_labels_cap = num_labels;
    g.evi_thresh = evi_thresh;
    g.bilinear_groups = bilinear_groups;
    return g;
  }

  nlohmann::json json() const {
    return {{"d-model", d_model},
            {"num-heads", num_heads},
            {"enc-layers", enc_layers},
            {"max-window", max_window},
            {"gnn-layers", gnn_layers},
            {"refiner-layers", refiner_layers},
            {"num-class", num_class},
            {"num-labels", num_labels},
            {"evi-thresh", evi_thresh},
            {"bilinear-groups", bilinear_groups}};
  }
};

struct TrainFlags {
  std::size_t num_train_epochs;
  std::size_t train_batch_size;
  std::size_t accum_steps;
  double learning_rate;
  double learning_rate_added;
  double max_grad_norm;
  double warmup_ratio;
  double lambda;
  std::uint64_t seed = 42;
  TrainPhase phase;

  explicit TrainFlags(const TrainConfig& preset)
      : num_train_epochs(preset.num_epochs),
        train_batch_size(preset.batch_size),
        accum_steps(preset.accum_steps),
        learning_rate(preset.lr),
        learning_rate_added(preset.lr_added),
        max_grad_norm(preset.max_grad_norm),
        warmup_ratio(preset.warmup_ratio),
        lambda(preset.lambda),
        seed(preset.seed),
        phase(preset.phase) {}

  void attach(CLI::App* cmd, FileConfig& fc) {
    fc.bind(cmd, "--num-train-epochs", num_train_epochs, "training epochs");
    fc.bind(cmd, "--train-batch-size", train_batch_size,
            "documents per backward pass");
    fc.bind(cmd, "--gradient-accumulation-steps", accum_steps,
            "backward passes per optimizer step");
    fc.bind(cmd, "--learning-rate", learning_rate, "encoder learning rate");
    fc.bind(cmd, "--learning-rate-added", learning_rate_added,
            "rate for the remaining parameters, 0 reuses --learning-rate");
    fc.bind(cmd, "--max-grad-norm", max_grad_norm,
            "gradient clipping threshold");
    fc.bind(cmd, "--warmup-ratio", warmup_ratio,
            "fraction of steps spent warming up");
    fc.bind(cmd, "--lambda", lambda, "weight of the evidence loss");
    fc.bind(cmd, "--seed", seed, "random seed");
  }

  TrainConfig config() const {
    TrainConfig t;
    t.phase = phase;
    t.num_epochs = num_train_epochs;
    t.batch_size = train_batch_size;
    t.accum_steps = accum_steps;
    t.lr = learning_rate;
    t.lr_added = learning_rate_added;
    t.max_grad_norm = max_grad_norm;
    t.warmup_ratio = warmup_ratio;
    t.lambda = lambda;
    t.seed = seed;
    return t;
  }

  nlohmann::json json() const {
    return {{"num-train-epochs", num_train_epochs},
            {"train-batch-size", train_batch_size},
            {"gradient-accumulation-steps", accum_steps},
            {"learning-rate", learning_rate},
            {"learning-rate-added", learning_rate_added},
            {"max-grad-norm", max_grad_norm},
            {"warmup-ratio", warmup_ratio},
            {"lambda", lambda},
            {"seed", seed}};
  }
};

// ---------------------------------------------------------------------------
// Manifest written beside every produced file.
// ---------------------------------------------------------------------------

void write_manifest(
    const std::string& command, const std::string& out_path,
    const nlohmann::json& resolved,
    const std::vector<std::pair<std::string, std::string>>& inputs,
    const std::vector<std::string>& extra_outputs = {}) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = resolved;
  m["inputs"] = nlohmann::json::object();
  for (const auto& [name, path] : inputs)
    m["inputs"][name] = {{"path", path},
                         {"fnv1a64", fnv1a64_hex(read_file(path))}};
  nlohmann::json outs = nlohmann::json::array();
  outs.push_back(out_path);
  for (const std::string& o : extra_outputs) outs.push_back(o);
  m["outputs"] = outs;
  write_file(out_path + ".manifest.json", m.dump(1) + "\n");
}

int finish_dry_run(const nlohmann::json& resolved) {
  std::cout << resolved.dump(1) << "\n"
            << "dry run: configuration and inputs are valid\n";
  return 0;
}

Dataset load_corpus_pair(const std::string& train_file,
                         const std::string& dev_file, Dataset& train_out) {
  train_out = load_docred(train_file);
  Dataset merged = train_out;
  if (!dev_file.empty()) {
    Dataset dev = load_docred(dev_file);
    merged.docs.insert(merged.docs.end(), dev.docs.begin(), dev.docs.end());
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

struct SynthCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  SynthSpec spec;
  std::string output;
  bool strip = false;
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    fc.attach(cmd);
    fc.bind(cmd, "--output", output, "where the corpus JSON goes")
        ->required();
    fc.bind(cmd, "--seed", spec.seed, "random seed");
    fc.bind(cmd, "--num-docs", spec.num_docs, "documents to generate");
    fc.bind(cmd, "--vocab-size", spec.vocab_size, "distinct surface tokens");
    fc.bind(cmd, "--num-relation-types", spec.num_relation_types,
            "relation ids planted in the text");
    fc.bind(cmd, "--sentences-per-doc", spec.sentences_per_doc,
            "sentences per document");
    fc.bind(cmd, "--entities-per-doc", spec.entities_per_doc,
            "entities per document");
    fc.bind(cmd, "--facts-per-doc", spec.facts_per_doc,
            "relation facts per document");
    fc.bind(cmd, "--entity-pool", spec.entity_pool,
            "entity names shared across documents");
    fc.bind(cmd, "--tokens-per-sentence", spec.tokens_per_sentence,
            "filler tokens per sentence");
    fc.bind(cmd, "--num-class", spec.num_class,
            "label space the corpus targets");
    cmd->add_flag("--strip-evidence", strip,
                  "drop evidence lists, keeping only distant labels");
    cmd->add_flag("--dry-run", dry, "validate and exit without writing");
  }

  nlohmann::json resolved() const {
    return {{"output", output},
            {"seed", spec.seed},
            {"num-docs", spec.num_docs},
            {"vocab-size", spec.vocab_size},
            {"num-relation-types", spec.num_relation_types},
            {"sentences-per-doc", spec.sentences_per_doc},
            {"entities-per-doc", spec.entities_per_doc},
            {"facts-per-doc", spec.facts_per_doc},
            {"entity-pool", spec.entity_pool},
            {"tokens-per-sentence", spec.tokens_per_sentence},
            {"num-class", spec.num_class},
            {"strip-evidence", strip}};
  }

  int run() {
    spec.validate();
    if (dry) return finish_dry_run(resolved());
    Dataset ds = generate_synthetic(spec);
    if (strip) strip_evidence(ds);
    save_docred(ds, output);
    write_manifest("synth", output, resolved(), {});
    std::cout << "wrote " << ds.docs.size() << " documents to " << output
              << "\n";
    return 0;
  }
};

struct TrainTeacherCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string train_file, dev_file, output, log_file;
  ShapeFlags shape;
  TrainFlags train{TrainConfig::teacher()};
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("train-teacher",
                             "train the teacher on annotated data");
    fc.attach(cmd);
    fc.bind(cmd, "--train-file", train_file, "annotated training corpus")
        ->required();
    fc.bind(cmd, "--dev-file", dev_file,
            "extra corpus whose tokens join the vocabulary");
    fc.bind(cmd, "--output", output, "checkpoint path")->required();
    fc.bind(cmd, "--log-file", log_file,
            "training log path, defaults to <output>.log.jsonl");
    shape.attach(cmd, fc);
    train.attach(cmd, fc);
    cmd->add_flag("--dry-run", dry, "validate and exit without training");
  }

  nlohmann::json resolved() const {
    nlohmann::json j = shape.json();
    j.update(train.json());
    j["train-file"] = train_file;
    j["dev-file"] = dev_file;
    j["output"] = output;
    return j;
  }

  int run() {
    Dataset data;
    Vocab vocab = Vocab::build(load_corpus_pair(train_file, dev_file, data));
    EncoderConfig ecfg = shape.encoder();
    ecfg.vocab_size = vocab.size();
    ecfg.validate();
    GegaConfig gcfg = shape.gega();
    gcfg.validate(ecfg.d_model);
    TrainConfig tcfg = train.config();
    tcfg.validate();
    if (dry) return finish_dry_run(resolved());

    TrainLog log;
    Checkpoint ck = train_teacher(data, vocab, ecfg, gcfg, tcfg, &log);
    save_checkpoint(ck, output);
    const std::string log_path =
        log_file.empty() ? output + ".log.jsonl" : log_file;
    save_train_log(log, log_path);

    std::vector<std::pair<std::string, std::string>> inputs = {
        {"train-file", train_file}};
    if (!dev_file.empty()) inputs.push_back({"dev-file", dev_file});
    write_manifest("train-teacher", output, resolved(), inputs, {log_path});
    std::cout << "trained teacher for " << log.size() << " steps, final loss "
              << (log.empty() ? 0.0 : log.back().total) << "\n"
              << "checkpoint written to " << output << "\n";
    return 0;
  }
};

struct InferSilverCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string checkpoint, train_file, output;
  std::size_t workers = 1;
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand(
        "infer-silver", "annotate a distant corpus with teacher targets");
    fc.attach(cmd);
    fc.bind(cmd, "--checkpoint", checkpoint, "teacher checkpoint")
        ->required();
    fc.bind(cmd, "--train-file", train_file, "distantly labeled corpus")
        ->required();
    fc.bind(cmd, "--output", output, "silver annotation path")->required();
    fc.bind(cmd, "--workers", workers, "threads used for annotation");
    cmd->add_flag("--dry-run", dry, "validate and exit without annotating");
  }

  nlohmann::json resolved() const {
    return {{"checkpoint", checkpoint},
            {"train-file", train_file},
            {"output", output},
            {"workers", workers}};
  }

  int run() {
    Checkpoint ck = load_checkpoint(checkpoint);
    Dataset data = load_docred(train_file);
    if (dry) return finish_dry_run(resolved());
    SilverSet silver = infer_silver(ck, data, workers);
    save_silver(silver, output);
    std::size_t pairs = 0;
    for (const SilverDoc& d : silver.docs) pairs += d.pairs.size();
    write_manifest("infer-silver", output, resolved(),
                   {{"checkpoint", checkpoint}, {"train-file", train_file}});
    std::cout << "annotated " << silver.docs.size() << " documents ("
              << pairs << " pairs) into " << output << "\n";
    return 0;
  }
};

struct TrainStudentCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string train_file, dev_file, silver_file, output, log_file;
  ShapeFlags shape;
  TrainFlags train{TrainConfig::student_distill()};
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand(
        "train-student", "distill a fresh student from silver targets");
    fc.attach(cmd);
    fc.bind(cmd, "--train-file", train_file, "distantly labeled corpus")
        ->required();
    fc.bind(cmd, "--dev-file", dev_file,
            "extra corpus whose tokens join the vocabulary");
    fc.bind(cmd, "--silver-file", silver_file, "teacher annotations")
        ->required();
    fc.bind(cmd, "--output", output, "checkpoint path")->required();
    fc.bind(cmd, "--log-file", log_file,
            "training log path, defaults to <output>.log.jsonl");
    shape.attach(cmd, fc);
    train.attach(cmd, fc);
    cmd->add_flag("--dry-run", dry, "validate and exit without training");
  }

  nlohmann::json resolved() const {
    nlohmann::json j = shape.json();
    j.update(train.json());
    j["train-file"] = train_file;
    j["dev-file"] = dev_file;
    j["silver-file"] = silver_file;
    j["output"] = output;
    return j;
  }

  int run() {
    Dataset data;
    Vocab vocab = Vocab::build(load_corpus_pair(train_file, dev_file, data));
    SilverSet silver = load_silver(silver_file);
    EncoderConfig ecfg = shape.encoder();
    ecfg.vocab_size = vocab.size();
    ecfg.validate();
    GegaConfig gcfg = shape.gega();
    gcfg.validate(ecfg.d_model);
    TrainConfig tcfg = train.config();
    tcfg.validate();
    if (dry) return finish_dry_run(resolved());

    TrainLog log;
    Checkpoint ck =
        train_student(data, silver, vocab, ecfg, gcfg, tcfg, &log);
    save_checkpoint(ck, output);
    const std::string log_path =
        log_file.empty() ? output + ".log.jsonl" : log_file;
    save_train_log(log, log_path);

    std::vector<std::pair<std::string, std::string>> inputs = {
        {"train-file", train_file}, {"silver-file", silver_file}};
    if (!dev_file.empty()) inputs.push_back({"dev-file", dev_file});
    write_manifest("train-student", output, resolved(), inputs, {log_path});
    std::cout << "distilled student for " << log.size()
              << " steps, final loss "
              << (log.empty() ? 0.0 : log.back().total) << "\n"
              << "checkpoint written to " << output << "\n";
    return 0;
  }
};

struct FinetuneCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string checkpoint, train_file, output, log_file;
  TrainFlags train{TrainConfig::student_finetune()};
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("finetune",
                             "refine a student on annotated data");
    fc.attach(cmd);
    fc.bind(cmd, "--checkpoint", checkpoint, "student checkpoint")
        ->required();
    fc.bind(cmd, "--train-file", train_file, "annotated training corpus")
        ->required();
    fc.bind(cmd, "--output", output, "checkpoint path")->required();
    fc.bind(cmd, "--log-file", log_file,
            "training log path, defaults to <output>.log.jsonl");
    train.attach(cmd, fc);
    cmd->add_flag("--dry-run", dry, "validate and exit without training");
  }

  nlohmann::json resolved() const {
    nlohmann::json j = train.json();
    j["checkpoint"] = checkpoint;
    j["train-file"] = train_file;
    j["output"] = output;
    return j;
  }

  int run() {
    Checkpoint start = load_checkpoint(checkpoint);
    Dataset data = load_docred(train_file);
    TrainConfig tcfg = train.config();
    tcfg.validate();
    if (dry) return finish_dry_run(resolved());

    TrainLog log;
    Checkpoint tuned = finetune_student(start, data, tcfg, &log);
    save_checkpoint(tuned, output);
    const std::string log_path =
        log_file.empty() ? output + ".log.jsonl" : log_file;
    save_train_log(log, log_path);
    write_manifest(
        "finetune", output, resolved(),
        {{"checkpoint", checkpoint}, {"train-file", train_file}},
        {log_path});
    std::cout << "finetuned for " << log.size() << " steps, final loss "
              << (log.empty() ? 0.0 : log.back().total) << "\n"
              << "checkpoint written to " << output << "\n";
    return 0;
  }
};

struct InferCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string checkpoint, test_file, output;
  std::string eval_mode = "single";
  std::size_t workers = 1;
  std::size_t test_batch_size = 8;
  std::size_t num_labels = 0;    // 0 keeps the checkpoint's cap
  double evi_thresh = -1.0;      // negative keeps the checkpoint's threshold
  bool dry = false;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("infer", "predict relations for a corpus");
    fc.attach(cmd);
    fc.bind(cmd, "--checkpoint", checkpoint, "model checkpoint")->required();
    fc.bind(cmd, "--test-file", test_file, "corpus to annotate")->required();
    fc.bind(cmd, "--output", output, "prediction path")->required();
    fc.bind(cmd, "--eval-mode", eval_mode,
            "single scores documents once, fusion re-scores on evidence")
        ->check(CLI::IsMember({"single", "fusion"}));
    fc.bind(cmd, "--workers", workers, "threads used for inference");
    fc.bind(cmd, "--test-batch-size", test_batch_size,
            "accepted for compatibility, has no effect on results");
    fc.bind(cmd, "--num-labels", num_labels,
            "override the checkpoint's per-pair cap, 0 keeps it");
    fc.bind(cmd, "--evi-thresh", evi_thresh,
            "override the checkpoint's evidence threshold, negative keeps it");
    cmd->add_flag("--dry-run", dry, "validate and exit without predicting");
  }

  nlohmann::json resolved() const {
    return {{"checkpoint", checkpoint}, {"test-file", test_file},
            {"output", output},         {"eval-mode", eval_mode},
            {"workers", workers},       {"test-batch-size", test_batch_size},
            {"num-labels", num_labels}, {"evi-thresh", evi_thresh}};
  }

  int run() {
    Checkpoint ck = load_checkpoint(checkpoint);
    if (num_labels > 0) ck.gega.num_labels_cap = num_labels;
    if (evi_thresh >= 0.0) ck.gega.evi_thresh = evi_thresh;
    Dataset data = load_docred(test_file);
    if (dry) return finish_dry_run(resolved());

    const std::vector<PredictionRecord> preds =
        eval_mode == "fusion" ? infer_fusion(ck, data, workers)
                              : infer_single(ck, data, workers);
    write_file(output, emit_official(preds));
    write_manifest("infer", output, resolved(),
                   {{"checkpoint", checkpoint}, {"test-file", test_file}});
    std::cout << "wrote " << preds.size() << " predictions for "
              << data.docs.size() << " documents to " << output << "\n";
    return 0;
  }
};

struct EvalCmd {
  CLI::App* cmd = nullptr;
  FileConfig fc;
  std::string pred_file, test_file, train_file;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("eval", "score predictions against gold data");
    fc.attach(cmd);
    fc.bind(cmd, "--pred-file", pred_file, "prediction file")->required();
    fc.bind(cmd, "--test-file", test_file, "gold corpus")->required();
    fc.bind(cmd, "--train-file", train_file,
            "training corpus for the overlap-ignoring score");
  }

  int run() {
    const std::vector<PredictionRecord> preds =
        load_official(read_file(pred_file));
    const Dataset gold = load_docred(test_file);
    Dataset train;
    const bool has_train = !train_file.empty();
    if (has_train) train = load_docred(train_file);
    EvalReport rep = evaluate(preds, gold, has_train ? &train : nullptr);

    auto line = [](const char* name, const MetricResult& m) {
      std::printf("%-8s %.4f  (precision %.4f, recall %.4f)\n", name, m.f1,
                  m.precision, m.recall);
    };
    line("F1:", rep.re);
    if (rep.has_ign)
      line("Ign-F1:", rep.ign);
    else
      std::printf("%-8s n/a     (pass --train-file to compute)\n", "Ign-F1:");
    line("Evi-F1:", rep.evi);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "document-level relation extraction with evidence-guided attention"};
  app.name("gega");

  SynthCmd synth;
  TrainTeacherCmd teacher;
  InferSilverCmd silver;
  TrainStudentCmd student;
  FinetuneCmd finetune;
  InferCmd infer;
  EvalCmd eval;

  synth.attach(app);
  teacher.attach(app);
  silver.attach(app);
  student.attach(app);
  finetune.attach(app);
  infer.attach(app);
  eval.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ConversionError& e) {
    std::cerr << "gega: " << e.what() << "\n";
    return 1;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "gega: " << e.what() << "\n";
    return 1;
  } catch (const CLI::RequiredError& e) {
    std::cerr << "gega: " << e.what() << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    std::cerr << "gega: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth.cmd->parsed()) {
      synth.fc.apply();
      return synth.run();
    }
    if (teacher.cmd->parsed()) {
      teacher.fc.apply();
      return teacher.run();
    }
    if (silver.cmd->parsed()) {
      silver.fc.apply();
      return silver.run();
    }
    if (student.cmd->parsed()) {
      student.fc.apply();
      return student.run();
    }
    if (finetune.cmd->parsed()) {
      finetune.fc.apply();
      return finetune.run();
    }
    if (infer.cmd->parsed()) {
      infer.fc.apply();
      return infer.run();
    }
    if (eval.cmd->parsed()) {
      eval.fc.apply();
      return eval.run();
    }
  } catch (const std::exception& e) {
    std::cerr << "gega: " << e.what() << "\n";
    return 1;
  }

  std::cerr << app.help();
  return 2;
}
