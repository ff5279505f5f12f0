#include <CLI11.hpp>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "t2t/checkpoint.hpp"
#include "t2t/cleaning.hpp"
#include "t2t/corruption.hpp"
#include "t2t/decode.hpp"
#include "t2t/errors.hpp"
#include "t2t/metrics.hpp"
#include "t2t/mixture.hpp"
#include "t2t/scalingkit.hpp"
#include "t2t/synthetic.hpp"
#include "t2t/tasks.hpp"
#include "t2t/training.hpp"
#include "t2t/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace t2t::cli {
namespace {

/// Bad flag combinations found after parsing; reported like parse errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kSyntheticPrefix = "synthetic:";
constexpr std::uint64_t kDefaultEvalSeed = 1000003;

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::pair<std::string, std::string> split_pair(const std::string& text, const char* flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError(std::string(flag) + " expects NAME=VALUE, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::uint64_t parse_count(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError(what + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void prepare_out_dir(const fs::path& dir, const CLI::App& sub) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "config.ini", "[" + sub.get_name() + "]\n" + sub.config_to_str(true, false));
}

std::string checkpoint_name(std::int64_t step) {
  std::ostringstream s;
  s << "checkpoint-" << std::setw(8) << std::setfill('0') << step << ".t2t";
  return s.str();
}

std::unique_ptr<Transformer<float>> load_model(const fs::path& path) {
  const auto ckpt = load_checkpoint(path);
  const auto it = ckpt.metadata.find("config");
  if (it == ckpt.metadata.end()) throw DataError(path.string() + ": checkpoint has no model config");
  auto model = std::make_unique<Transformer<float>>(ModelConfig::from_canonical(it->second), 0);
  restore(*model, ckpt);
  return model;
}

// ---------------------------------------------------------------------------
// Model flags shared by pretrain and finetune.

struct ModelFlags {
  std::string preset = "small";
  std::optional<int> d_model, d_ff, d_kv, heads, layers;
  std::string architecture = "encoder_decoder";
  std::optional<double> dropout;
  bool scale_attention = false;
  bool allow_large = false;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Size preset")
        ->check(CLI::IsMember(preset_names()))
        ->capture_default_str();
    app->add_option("--d-model", d_model, "Override d_model")->check(CLI::PositiveNumber);
    app->add_option("--d-ff", d_ff, "Override d_ff")->check(CLI::PositiveNumber);
    app->add_option("--d-kv", d_kv, "Override d_kv")->check(CLI::PositiveNumber);
    app->add_option("--heads", heads, "Override the number of heads")->check(CLI::PositiveNumber);
    app->add_option("--layers", layers, "Override layers per stack")->check(CLI::NonNegativeNumber);
    app->add_option("--architecture", architecture, "encoder_decoder, encoder_decoder_shared, decoder_lm, prefix_lm")
        ->check(CLI::IsMember({"encoder_decoder", "encoder_decoder_shared", "decoder_lm", "prefix_lm"}))
        ->capture_default_str();
    app->add_option("--dropout", dropout, "Override the dropout rate")->check(CLI::Range(0.0, 0.999));
    app->add_flag("--scale-attention", scale_attention, "Divide attention logits by sqrt(d_kv)");
    app->add_flag("--allow-large", allow_large, "Permit models above one billion parameters");
  }

  ModelConfig config(int vocab_size) const {
    auto cfg = t2t::preset(preset);
    if (d_model) cfg.d_model = *d_model;
    if (d_ff) cfg.d_ff = *d_ff;
    if (d_kv) cfg.d_kv = *d_kv;
    if (heads) cfg.num_heads = *heads;
    if (layers) cfg.num_layers = *layers;
    if (dropout) cfg.dropout_rate = *dropout;
    cfg.architecture = parse_architecture(architecture);
    cfg.scale_attention = scale_attention;
    cfg.vocab_size = vocab_size;
    cfg.validate();
    return cfg;
  }
};

void log_step(const char* tag, const StepRecord& r) {
  std::cerr << "[" << tag << "] step " << r.step << " loss " << r.loss << " lr " << r.lr << " tokens "
            << r.tokens_seen << (r.skipped ? " (skipped)" : "") << "\n";
}

/// Runs the trainer to total_steps, saving every checkpoint_every steps and a final.t2t.
void run_training(Trainer<float>& trainer, const TrainConfig& cfg, const fs::path& out, int log_every,
                  const char* tag) {
  std::ofstream log(out / "train_log.jsonl", std::ios::binary | std::ios::app);
  if (!log) throw ConfigError("cannot write " + (out / "train_log.jsonl").string());
  trainer.set_log(&log);
  while (trainer.current_step() < cfg.total_steps) {
    const auto r = trainer.step();
    if (log_every > 0 && (r.step % log_every == 0 || r.step == cfg.total_steps)) log_step(tag, r);
    if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0 && r.step != cfg.total_steps) {
      save_checkpoint(trainer.checkpoint(), out / checkpoint_name(r.step));
    }
  }
  const auto final_ckpt = trainer.checkpoint();
  save_checkpoint(final_ckpt, out / checkpoint_name(final_ckpt.step));
  save_checkpoint(final_ckpt, out / "final.t2t");
  std::cerr << "[" << tag << "] wrote " << (out / "final.t2t").string() << " at step " << final_ckpt.step << "\n";
}

// ---------------------------------------------------------------------------
// train-vocab

struct TrainVocabCmd {
  std::vector<std::string> inputs;
  int size = 0;
  int sentinels = 100;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--input", inputs, "Text files, one document per line")->required();
    app->add_option("--size", size, "Total vocabulary size")->required()->check(CLI::PositiveNumber);
    app->add_option("--sentinels", sentinels, "Number of sentinel ids")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--out", out, "Vocabulary file to write")->required();
  }

  int run() {
    std::vector<std::string> corpus;
    for (const auto& f : inputs) {
      auto lines = read_lines(f);
      corpus.insert(corpus.end(), lines.begin(), lines.end());
    }
    const auto vocab = train_vocab(corpus, size, sentinels);
    vocab.save_file(out);
    std::cerr << "[train-vocab] " << corpus.size() << " documents, " << vocab.num_learned() << " learned pieces\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// clean-corpus

struct CleanCmd {
  std::string input, format = "auto", out, bad_words, domains, domain_mode = "none", dedup = "span";
  bool no_language = false;
  double language_threshold = 0.99;

  void add(CLI::App* app) {
    app->add_option("--input", input, "Pages: url<TAB>base64(text) lines, or a JSON list of {url, text}")->required();
    app->add_option("--format", format, "tsv, json or auto (by extension)")
        ->check(CLI::IsMember({"auto", "tsv", "json"}))
        ->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--bad-words", bad_words, "Bad-word list, one entry per line");
    app->add_option("--domains", domains, "Allow-list for the domain filter, one entry per line");
    app->add_option("--domain-mode", domain_mode, "none, domain or url")
        ->check(CLI::IsMember({"none", "domain", "url"}))
        ->capture_default_str();
    app->add_option("--dedup", dedup, "none, span or page")->check(CLI::IsMember({"none", "span", "page"}))->capture_default_str();
    app->add_flag("--no-language-filter", no_language, "Keep pages in any language");
    app->add_option("--language-threshold", language_threshold, "Minimum English probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  bool json_format() const {
    if (format != "auto") return format == "json";
    return fs::path(input).extension() == ".json";
  }

  int run(const CLI::App& sub) {
    if (domain_mode != "none" && domains.empty()) throw UsageError("--domain-mode " + domain_mode + " needs --domains");
    std::vector<Page> pages;
    std::ifstream in(input, std::ios::binary);
    if (!in) throw DataError("cannot read " + input);
    if (json_format()) {
      json doc;
      try {
        doc = json::parse(in);
        for (const auto& p : doc) pages.push_back({p.at("url").get<std::string>(), p.at("text").get<std::string>()});
      } catch (const json::exception& e) {
        throw DataError(input + ": " + e.what());
      }
    } else {
      pages = read_pages(in);
    }
    CleanConfig cfg;
    cfg.classifier = no_language ? nullptr : &default_language_classifier();
    cfg.language_threshold = language_threshold;
    if (!bad_words.empty()) cfg.bad_words = BadWordList::load(bad_words);
    if (domain_mode != "none") {
      cfg.domains = DomainFilter::load(domain_mode == "domain" ? DomainMode::kDomainAllowlist : DomainMode::kUrlAllowlist,
                                       domains);
    }
    cfg.dedup = dedup == "none" ? DedupMode::kNone : dedup == "page" ? DedupMode::kPage : DedupMode::kSpan;

    const auto [kept, report] = clean(pages, cfg);
    const fs::path dir(out);
    prepare_out_dir(dir, sub);
    if (json_format()) {
      json doc = json::array();
      for (const auto& p : kept) doc.push_back({{"url", p.url}, {"text", p.text}});
      write_text(dir / "pages.json", doc.dump(1) + "\n");
    } else {
      std::ofstream pout(dir / "pages.tsv", std::ios::binary);
      write_pages(pout, kept);
    }
    write_text(dir / "report.txt", report.to_text());
    std::cerr << "[clean-corpus] kept " << report.pages_kept << " of " << report.pages_in << " pages\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// corrupt-preview

struct CorruptPreviewCmd {
  std::string text, objective = "random_spans", vocab_path;
  double rate = 0.15, mean_span = 3.0;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--text", text, "Text to corrupt")->required();
    app->add_option("--objective", objective, "Objective name (random_spans, bert_style, ...)")->capture_default_str();
    app->add_option("--rate", rate, "Corruption rate")->capture_default_str();
    app->add_option("--mean-span", mean_span, "Mean span length")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--vocab", vocab_path, "Vocabulary file; by default every whitespace word is one token");
  }

  int run() {
    ObjectiveSpec spec{parse_objective_kind(objective), rate, mean_span};
    spec.validate();
    std::optional<Vocabulary> vocab;
    TokenSequence ids;
    if (!vocab_path.empty()) {
      vocab = Vocabulary::load_file(vocab_path);
      ids = vocab->encode(text);
    } else {
      std::istringstream words(text);
      std::vector<std::string> tokens, learned;
      std::set<std::string> seen;
      for (std::string w; words >> w;) {
        tokens.push_back(w);
        if (w.size() > 1 && seen.insert(w).second) learned.push_back(w);
      }
      vocab.emplace(learned, 100);
      for (const auto& w : tokens) ids.push_back(*vocab->find(w));
    }
    if (ids.empty()) throw DataError("corrupt-preview: text has no tokens");
    Rng rng(seed);
    const auto pair = apply_objective(spec, ids, rng, *vocab);
    std::cout << "input:  " << vocab->render(pair.input_ids) << "\n";
    std::cout << "target: " << vocab->render(pair.target_ids) << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// mix-preview

struct MixPreviewCmd {
  std::vector<std::string> tasks;
  std::string strategy = "examples_proportional";
  double limit = MixtureSpec::kDefaultLimit, temperature = 1.0;
  std::uint64_t samples = 0, seed = 0;

  void add(CLI::App* app) {
    app->add_option("--task", tasks, "NAME=EXAMPLES, repeatable")->required();
    app->add_option("--strategy", strategy, "examples_proportional, temperature or equal")
        ->check(CLI::IsMember({"examples_proportional", "temperature", "equal"}))
        ->capture_default_str();
    app->add_option("--limit", limit, "Artificial dataset size limit K")->capture_default_str();
    app->add_option("--temperature", temperature, "Temperature T")->capture_default_str();
    app->add_option("--samples", samples, "Draw this many tasks and report empirical frequencies")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
  }

  int run() {
    std::vector<MixtureTask> list;
    for (const auto& t : tasks) {
      auto [name, count] = split_pair(t, "--task");
      list.push_back({name, parse_count(count, "--task " + name)});
    }
    MixtureSpec spec = strategy == "equal"         ? MixtureSpec::equal(list)
                       : strategy == "temperature" ? MixtureSpec::temperature_scaled(list, temperature, limit)
                                                   : MixtureSpec::examples_proportional(list, limit);
    const auto rates = mixing_rates(spec);
    std::vector<std::uint64_t> counts(rates.size(), 0);
    Rng rng(seed);
    for (std::uint64_t i = 0; i < samples; ++i) ++counts[sample_index(rates, rng)];
    std::cout << "task\texamples\tcapped\trate" << (samples ? "\tempirical" : "") << "\n";
    std::cout << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < rates.size(); ++i) {
      const double capped = std::min(static_cast<double>(list[i].examples), limit);
      std::cout << list[i].name << "\t" << list[i].examples << "\t" << std::setprecision(0) << capped
                << std::setprecision(6) << "\t" << rates[i];
      if (samples) std::cout << "\t" << static_cast<double>(counts[i]) / static_cast<double>(samples);
      std::cout << "\n";
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// pretrain

struct TrainFlags {
  std::int64_t steps = 0, batch_tokens = 65536, max_len = 512, checkpoint_every = 5000;
  std::uint64_t seed = 0;
  int log_every = 100;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--steps", steps, "Total optimizer steps")->required()->check(CLI::NonNegativeNumber);
    app->add_option("--batch-tokens", batch_tokens, "Tokens per batch")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--max-len", max_len, "Maximum sequence length")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--checkpoint-every", checkpoint_every, "Checkpoint cadence in steps (0: final only)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--seed", seed, "Seed for initialization, data order and dropout")->capture_default_str();
    app->add_option("--log-every", log_every, "Progress line cadence on standard error")->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
  }

  TrainConfig config() const {
    TrainConfig cfg;
    cfg.total_steps = steps;
    cfg.batch_token_budget = batch_tokens;
    cfg.max_seq_len = max_len;
    cfg.checkpoint_every = checkpoint_every;
    cfg.seed = seed;
    return cfg;
  }
};

struct PretrainCmd {
  ModelFlags model;
  TrainFlags train;
  std::string corpus, vocab_path, resume, objective = "random_spans";
  int synthetic_vocab = 5000;
  std::uint64_t synthetic_docs = 10000, doc_len = 100, max_documents = 0;
  double rate = 0.15, mean_span = 3.0, lr_scale = 1.0, constant_lr = 0.0;
  std::int64_t warmup = 10000;

  void add(CLI::App* app) {
    model.add(app);
    train.add(app);
    app->add_option("--corpus", corpus, "Text file, one document per line (default: synthetic corpus)");
    app->add_option("--vocab", vocab_path, "Vocabulary file (required with --corpus)");
    app->add_option("--synthetic-vocab", synthetic_vocab, "Vocabulary size of the synthetic corpus")->capture_default_str();
    app->add_option("--synthetic-docs", synthetic_docs, "Number of synthetic documents")->capture_default_str();
    app->add_option("--doc-len", doc_len, "Minimum synthetic document length in tokens")->capture_default_str();
    app->add_option("--max-documents", max_documents, "Keep only the first N documents and repeat them (0: all)")
        ->capture_default_str();
    app->add_option("--objective", objective, "Pre-training objective")->capture_default_str();
    app->add_option("--rate", rate, "Corruption rate")->capture_default_str();
    app->add_option("--mean-span", mean_span, "Mean span length")->capture_default_str();
    app->add_option("--warmup", warmup, "Inverse square root warm-up steps")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr-scale", lr_scale, "Numerator of the inverse square root schedule")->capture_default_str();
    app->add_option("--constant-lr", constant_lr, "Use a constant learning rate instead (0: off)")->capture_default_str();
    app->add_option("--resume", resume, "Continue from a checkpoint written by pretrain");
  }

  int run(const CLI::App& sub) {
    if (!corpus.empty() && vocab_path.empty()) throw UsageError("--corpus needs --vocab");
    auto cfg = train.config();
    cfg.objective = {parse_objective_kind(objective), rate, mean_span};
    cfg.objective.validate();
    cfg.schedule = constant_lr > 0 ? Schedule::constant(constant_lr) : Schedule::inverse_sqrt(warmup, lr_scale);
    cfg.validate();

    std::optional<Vocabulary> vocab;
    std::vector<TokenSequence> docs;
    if (!corpus.empty()) {
      vocab = Vocabulary::load_file(vocab_path);
      for (const auto& line : read_lines(corpus)) docs.push_back(vocab->encode(line));
    } else {
      SyntheticLanguage lang(synthetic_vocab, 100, train.seed);
      vocab = lang.vocab();
      docs = lang.corpus(synthetic_docs, doc_len, train.seed);
    }
    if (max_documents > 0 && max_documents < docs.size()) docs.resize(max_documents);
    if (docs.empty()) throw DataError("pretrain: corpus is empty");

    const auto mcfg = model.config(vocab->size());
    auto net = instantiate<float>(mcfg, train.seed, model.allow_large);
    Trainer<float> trainer(*net, pretraining_source(std::move(docs), cfg.objective, *vocab, train.seed, true), cfg);
    if (!resume.empty()) trainer.restore(load_checkpoint(resume));

    const fs::path dir(train.out);
    prepare_out_dir(dir, sub);
    vocab->save_file((dir / "vocab.txt").string());
    std::cerr << "[pretrain] " << count_params(mcfg) << " parameters, fingerprint " << mcfg.fingerprint() << "\n";
    run_training(trainer, cfg, dir, train.log_every, "pretrain");
    return 0;
  }
};

// ---------------------------------------------------------------------------
// Task data shared by finetune and evaluate.

struct TaskData {
  std::string name;
  std::optional<SyntheticTask> synthetic;
  std::vector<TaskExample> examples;          // text tasks
  std::vector<CorruptionPair> encoded;        // encoded examples (both kinds)
  std::vector<FormattedExample> formatted;    // text tasks
  ExampleSource source;                       // synthetic streams without a limit
};

CorruptionPair encode_formatted(const Vocabulary& vocab, const FormattedExample& f) {
  CorruptionPair p{vocab.encode(f.input), vocab.encode(f.target)};
  p.target_ids.push_back(Vocabulary::kEosId);
  return p;
}

std::unique_ptr<SyntheticLanguage> synthetic_for(const Vocabulary& vocab) {
  auto lang = std::make_unique<SyntheticLanguage>(vocab.size(), vocab.num_sentinels());
  if (lang->vocab().pieces() != vocab.pieces()) {
    throw ConfigError("synthetic tasks need the vocabulary written by a synthetic pretrain run");
  }
  return lang;
}

/// NAME=PATH for text tasks; synthetic:TASK or synthetic:TASK=N for generated ones.
TaskData load_task(const std::string& spec, const Vocabulary& vocab, const SyntheticLanguage* lang,
                   std::uint64_t seed, std::uint64_t default_count, bool stream_when_unlimited) {
  TaskData data;
  const auto eq = spec.find('=');
  const std::string name = spec.substr(0, eq);
  const std::string value = eq == std::string::npos ? "" : spec.substr(eq + 1);
  if (name.rfind(kSyntheticPrefix, 0) == 0) {
    data.name = name;
    data.synthetic = parse_synthetic_task(name.substr(std::string(kSyntheticPrefix).size()));
    const auto n = value.empty() ? default_count : parse_count(value, "--task " + name);
    if (n == 0 && stream_when_unlimited) {
      const auto task = *data.synthetic;
      data.source = [lang, task, seed](std::uint64_t i) -> std::optional<CorruptionPair> {
        return lang->example(task, seed, i);
      };
    } else {
      if (n == 0) throw UsageError("--task " + name + " needs a positive example count");
      for (std::uint64_t i = 0; i < n; ++i) data.encoded.push_back(lang->example(*data.synthetic, seed, i));
    }
    return data;
  }
  if (value.empty()) throw UsageError("--task expects NAME=PATH, got '" + spec + "'");
  data.name = name;
  const auto& schema = task_schema(name);
  data.examples = load_task_tsv(schema, value);
  for (const auto& ex : data.examples) {
    data.formatted.push_back(format_example(schema, ex));
    data.encoded.push_back(encode_formatted(vocab, data.formatted.back()));
  }
  if (data.encoded.empty()) throw DataError(value + ": no examples");
  return data;
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneCmd {
  ModelFlags model;
  TrainFlags train;
  std::string init, vocab_path, mixing = "examples_proportional";
  std::vector<std::string> tasks;
  double limit = MixtureSpec::kDefaultLimit, temperature = 1.0, lr = 1e-3;
  int adapter_dim = 0;
  bool unfreeze = false;

  void add(CLI::App* app) {
    model.add(app);
    train.add(app);
    app->add_option("--init", init, "Pre-trained checkpoint (default: train from scratch)");
    app->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    app->add_option("--task", tasks, "NAME=TRAIN.tsv, synthetic:TASK or synthetic:TASK=N; repeatable")->required();
    app->add_option("--mixing", mixing, "examples_proportional, temperature or equal")
        ->check(CLI::IsMember({"examples_proportional", "temperature", "equal"}))
        ->capture_default_str();
    app->add_option("--limit", limit, "Artificial dataset size limit K")->capture_default_str();
    app->add_option("--temperature", temperature, "Mixing temperature T")->capture_default_str();
    app->add_option("--lr", lr, "Constant learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--adapter-dim", adapter_dim, "Train only adapters of this size (0: off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_flag("--unfreeze", unfreeze, "Gradual unfreezing over the layers");
  }

  int run(const CLI::App& sub) {
    if (adapter_dim > 0 && unfreeze) throw UsageError("--adapter-dim and --unfreeze are exclusive");
    auto cfg = train.config();
    cfg.schedule = Schedule::constant(lr);
    cfg.validate();
    const auto vocab = Vocabulary::load_file(vocab_path);

    std::unique_ptr<SyntheticLanguage> lang;
    for (const auto& t : tasks) {
      if (t.rfind(kSyntheticPrefix, 0) == 0 && !lang) lang = synthetic_for(vocab);
    }
    std::vector<TaskData> data;
    std::vector<MixtureTask> mix;
    std::vector<ExampleSource> sources;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      data.push_back(load_task(tasks[i], vocab, lang.get(), train.seed, 0, true));
      auto& d = data.back();
      const auto size = d.source ? static_cast<std::uint64_t>(limit) : d.encoded.size();
      mix.push_back({d.name, std::max<std::uint64_t>(size, 1)});
      sources.push_back(d.source ? d.source : shuffled_cycle(d.encoded, train.seed, i));
    }
    const MixtureSpec spec = mixing == "equal"         ? MixtureSpec::equal(mix)
                             : mixing == "temperature" ? MixtureSpec::temperature_scaled(mix, temperature, limit)
                                                       : MixtureSpec::examples_proportional(mix, limit);
    spec.validate();

    std::unique_ptr<Transformer<float>> net;
    if (!init.empty()) {
      net = load_model(init);
      if (net->config().vocab_size != vocab.size()) {
        throw ConfigError("checkpoint vocabulary size " + std::to_string(net->config().vocab_size) +
                          " does not match " + vocab_path);
      }
    } else {
      net = instantiate<float>(model.config(vocab.size()), train.seed, model.allow_large);
    }
    if (adapter_dim > 0) net->insert_adapters(adapter_dim, train.seed);

    Trainer<float> trainer(*net, mixture_source(spec, std::move(sources), train.seed), cfg);
    if (adapter_dim > 0) {
      trainer.set_trainable([](const std::string& name, std::int64_t) { return adapter_trainable(name); });
    } else if (unfreeze) {
      const auto schedule = gradual_unfreeze_schedule(net->config().num_layers, cfg.total_steps);
      trainer.set_trainable([schedule](const std::string& name, std::int64_t step) {
        return schedule.trainable(name, step);
      });
    }
    const fs::path dir(train.out);
    prepare_out_dir(dir, sub);
    vocab.save_file((dir / "vocab.txt").string());
    run_training(trainer, cfg, dir, train.log_every, "finetune");
    return 0;
  }
};

// ---------------------------------------------------------------------------
// evaluate

struct TaskScores {
  std::string task;
  std::vector<MetricResult> metrics;
};

std::vector<MetricResult> score_text_task(const TaskSchema& schema, const std::vector<FormattedExample>& gold,
                                          const std::vector<std::string>& preds) {
  std::vector<std::string> golds;
  for (const auto& g : gold) golds.push_back(g.target);
  std::vector<MetricResult> out;
  std::size_t invalid = 0;
  if (schema.name == "wsc") {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += wsc_eval(preds[i], golds[i]);
    out.push_back({"accuracy", preds.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(preds.size()),
                   preds.size(), false});
  } else if (schema.kind == TaskKind::kRegression) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto p = parse_prediction(schema, preds[i]);
      if (p.kind != Prediction::Kind::kNumber) ++invalid;
      x.push_back(p.kind == Prediction::Kind::kNumber ? p.number : 0.0);
      y.push_back(std::stod(golds[i]));
    }
    out.push_back(pearson(x, y));
    out.push_back(spearman(x, y));
  } else if (schema.kind == TaskKind::kClassification) {
    out.push_back(accuracy(preds, golds));
    if (schema.name == "cola") {
      std::vector<int> p, g;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto gl = parse_prediction(schema, golds[i]).label;
        const auto pr = parse_prediction(schema, preds[i]);
        if (pr.kind != Prediction::Kind::kLabel) ++invalid;
        g.push_back(gl);
        p.push_back(pr.kind == Prediction::Kind::kLabel ? pr.label : 1 - gl);
      }
      out.push_back(matthews_corr(p, g));
    }
    for (const auto& pr : preds) invalid += schema.name != "cola" && parse_prediction(schema, pr).kind != Prediction::Kind::kLabel;
  } else if (schema.name == "squad") {
    out.push_back(exact_match(preds, golds));
    out.push_back(token_f1(preds, golds));
  } else if (schema.name == "cnn_dailymail") {
    out.push_back(rouge(preds, golds, RougeVariant::kRouge1));
    out.push_back(rouge(preds, golds, RougeVariant::kRouge2));
    out.push_back(rouge(preds, golds, RougeVariant::kRougeL));
    out[0].name = "rouge1";
    out[1].name = "rouge2";
    out[2].name = "rougeL";
  } else {
    out.push_back(bleu(preds, golds));
  }
  if (schema.kind != TaskKind::kGeneration) {
    out.push_back({"invalid_rate", preds.empty() ? 0.0 : static_cast<double>(invalid) / static_cast<double>(preds.size()),
                   preds.size(), false});
  }
  return out;
}

// Accuracy, F1, exact match and ROUGE are reported as percentages.
double reported_value(const MetricResult& m) {
  static const std::set<std::string> percent = {"accuracy", "sequence_accuracy", "exact_match", "f1",
                                                "rouge1",   "rouge2",            "rougeL"};
  return percent.count(m.name) ? 100.0 * m.value : m.value;
}

struct EvaluateCmd {
  std::vector<std::string> checkpoints, tasks;
  std::string vocab_path, format = "table", out;
  std::size_t beam = 1, max_decode_len = 64, examples = 100;
  double alpha = 0.6;
  std::uint64_t seed = kDefaultEvalSeed;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoints, "Checkpoint; repeat for a logit-averaging ensemble")->required();
    app->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    app->add_option("--task", tasks, "NAME=EVAL.tsv, synthetic:TASK or synthetic:TASK=N; repeatable")->required();
    app->add_option("--beam", beam, "Beam width (1: greedy)")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--alpha", alpha, "Length penalty exponent")->capture_default_str();
    app->add_option("--max-decode-len", max_decode_len, "Maximum output tokens")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--examples", examples, "Default number of synthetic evaluation examples")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--seed", seed, "Seed of the synthetic evaluation stream")->capture_default_str();
    app->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}))->capture_default_str();
    app->add_option("--out", out, "Also write the JSON results to this file");
  }

  int run() {
    const auto vocab = Vocabulary::load_file(vocab_path);
    std::unique_ptr<SyntheticLanguage> lang;
    for (const auto& t : tasks) {
      if (t.rfind(kSyntheticPrefix, 0) == 0 && !lang) lang = synthetic_for(vocab);
    }
    std::vector<TaskData> data;
    for (const auto& t : tasks) data.push_back(load_task(t, vocab, lang.get(), seed, examples, false));
    std::vector<std::unique_ptr<Transformer<float>>> models;
    std::vector<const Transformer<float>*> members;
    for (const auto& c : checkpoints) {
      models.push_back(load_model(c));
      members.push_back(models.back().get());
    }

    std::vector<TaskScores> scores;
    for (const auto& d : data) {
      std::vector<DecodeResult> outputs;
      for (const auto& ex : d.encoded) {
        const auto scorer = ensemble_scorer(members, ex.input_ids);
        outputs.push_back(beam == 1 ? greedy_decode(scorer, max_decode_len)
                                    : beam_decode(scorer, beam, alpha, max_decode_len));
      }
      TaskScores s{d.name, {}};
      if (d.synthetic) {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < outputs.size(); ++i) {
          const auto& t = d.encoded[i].target_ids;
          ok += outputs[i].finished && outputs[i].ids == TokenSequence(t.begin(), t.end() - 1);
        }
        s.metrics.push_back({"sequence_accuracy", static_cast<double>(ok) / static_cast<double>(outputs.size()),
                             outputs.size(), false});
      } else {
        std::vector<std::string> preds;
        for (const auto& o : outputs) preds.push_back(vocab.decode(o.ids));
        s.metrics = score_text_task(task_schema(d.name), d.formatted, preds);
      }
      scores.push_back(std::move(s));
    }

    json doc = json::array();
    for (const auto& s : scores) {
      for (const auto& m : s.metrics) {
        doc.push_back({{"task", s.task}, {"metric", m.name}, {"value", reported_value(m)}, {"count", m.count},
                       {"degenerate", m.degenerate}});
      }
    }
    if (!out.empty()) write_text(out, doc.dump(1) + "\n");
    if (format == "json") {
      std::cout << doc.dump(1) << "\n";
    } else {
      std::cout << "task\tmetric\tvalue\tcount\n" << std::fixed << std::setprecision(6);
      for (const auto& s : scores) {
        for (const auto& m : s.metrics) std::cout << s.task << "\t" << m.name << "\t" << reported_value(m) << "\t" << m.count << "\n";
      }
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// decode

struct DecodeCmd {
  std::vector<std::string> checkpoints, inputs;
  std::string vocab_path, input_file;
  std::size_t beam = 1, max_len = 64;
  double alpha = 0.6;
  bool render = false;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoints, "Checkpoint; repeat for a logit-averaging ensemble")->required();
    app->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    app->add_option("--input", inputs, "Input text; repeatable");
    app->add_option("--input-file", input_file, "File with one input per line");
    app->add_option("--beam", beam, "Beam width (1: greedy)")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--alpha", alpha, "Length penalty exponent")->capture_default_str();
    app->add_option("--max-len", max_len, "Maximum output tokens")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_flag("--render", render, "Print space-separated pieces instead of text");
  }

  int run() {
    if (inputs.empty() && input_file.empty()) throw UsageError("decode needs --input or --input-file");
    if (!input_file.empty()) {
      auto lines = read_lines(input_file);
      inputs.insert(inputs.end(), lines.begin(), lines.end());
    }
    const auto vocab = Vocabulary::load_file(vocab_path);
    std::vector<std::unique_ptr<Transformer<float>>> models;
    std::vector<const Transformer<float>*> members;
    for (const auto& c : checkpoints) {
      models.push_back(load_model(c));
      members.push_back(models.back().get());
    }
    for (const auto& text : inputs) {
      const auto scorer = ensemble_scorer(members, vocab.encode(text));
      const auto r = beam == 1 ? greedy_decode(scorer, max_len) : beam_decode(scorer, beam, alpha, max_len);
      std::cout << (render ? vocab.render(r.ids) : vocab.decode(r.ids)) << "\n";
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// inspect-checkpoint

struct InspectCmd {
  std::string path;
  bool entries = false, as_json = false;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", path, "Checkpoint file")->required();
    app->add_flag("--entries", entries, "List every parameter");
    app->add_flag("--json", as_json, "Machine-readable output");
  }

  int run() {
    const auto ckpt = load_checkpoint(path);
    std::int64_t params = 0;
    std::size_t optimizer_entries = 0;
    for (const auto& [name, e] : ckpt.entries) {
      if (name.rfind("adam/", 0) == 0) ++optimizer_entries;
      else params += static_cast<std::int64_t>(e.values.size());
    }
    const auto cfg = ckpt.metadata.count("config") ? ckpt.metadata.at("config") : std::string();
    if (as_json) {
      json doc{{"step", ckpt.step}, {"fingerprint", ckpt.fingerprint}, {"config", cfg}, {"parameters", params},
               {"entries", ckpt.entries.size()}, {"optimizer_entries", optimizer_entries}};
      if (entries) {
        json list = json::array();
        for (const auto& [name, e] : ckpt.entries) {
          list.push_back({{"name", name}, {"shape", e.shape}, {"dtype", e.dtype == DType::kF32 ? "f32" : "f64"}});
        }
        doc["parameters_list"] = list;
      }
      std::cout << doc.dump(1) << "\n";
      return 0;
    }
    std::cout << "step " << ckpt.step << "\nfingerprint " << ckpt.fingerprint << "\nconfig " << cfg << "\nparameters "
              << params << "\nentries " << ckpt.entries.size() << "\noptimizer_entries " << optimizer_entries << "\n";
    for (const auto& [key, value] : ckpt.metadata) {
      if (key != "config" && key.rfind("adam/", 0) != 0) std::cout << key << " " << value << "\n";
    }
    if (entries) {
      for (const auto& [name, e] : ckpt.entries) {
        std::cout << name << " " << shape_string(e.shape) << " " << (e.dtype == DType::kF32 ? "f32" : "f64") << "\n";
      }
    }
    return 0;
  }
};

int report(const std::string& kind, const std::string& message, int code) {
  std::cerr << "error: kind=" << kind << " message=" << one_line(message) << "\n";
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Text-to-text transfer toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file with one [command] section; flags override it");
  int threads = 1;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  TrainVocabCmd train_vocab_cmd;
  CleanCmd clean_cmd;
  CorruptPreviewCmd corrupt_cmd;
  MixPreviewCmd mix_cmd;
  PretrainCmd pretrain_cmd;
  FinetuneCmd finetune_cmd;
  EvaluateCmd evaluate_cmd;
  DecodeCmd decode_cmd;
  InspectCmd inspect_cmd;

  auto* s_vocab = app.add_subcommand("train-vocab", "Learn a subword vocabulary");
  train_vocab_cmd.add(s_vocab);
  auto* s_clean = app.add_subcommand("clean-corpus", "Filter and deduplicate web pages");
  clean_cmd.add(s_clean);
  auto* s_corrupt = app.add_subcommand("corrupt-preview", "Show one corrupted input/target pair");
  corrupt_cmd.add(s_corrupt);
  auto* s_mix = app.add_subcommand("mix-preview", "Print task mixing rates");
  mix_cmd.add(s_mix);
  auto* s_pre = app.add_subcommand("pretrain", "Pre-train on unlabeled text");
  pretrain_cmd.add(s_pre);
  auto* s_fine = app.add_subcommand("finetune", "Fine-tune on one or more tasks");
  finetune_cmd.add(s_fine);
  auto* s_eval = app.add_subcommand("evaluate", "Score a model on tasks");
  evaluate_cmd.add(s_eval);
  auto* s_decode = app.add_subcommand("decode", "Generate outputs for inputs");
  decode_cmd.add(s_decode);
  auto* s_inspect = app.add_subcommand("inspect-checkpoint", "Describe a checkpoint");
  inspect_cmd.add(s_inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 2);
  }

  try {
    Eigen::setNbThreads(threads);
    if (s_vocab->parsed()) return train_vocab_cmd.run();
    if (s_clean->parsed()) return clean_cmd.run(*s_clean);
    if (s_corrupt->parsed()) return corrupt_cmd.run();
    if (s_mix->parsed()) return mix_cmd.run();
    if (s_pre->parsed()) return pretrain_cmd.run(*s_pre);
    if (s_fine->parsed()) return finetune_cmd.run(*s_fine);
    if (s_eval->parsed()) return evaluate_cmd.run();
    if (s_decode->parsed()) return decode_cmd.run();
    if (s_inspect->parsed()) return inspect_cmd.run();
  } catch (const UsageError& e) {
    return report("usage", e.what(), 2);
  } catch (const Error& e) {
    return report(std::string(to_string(e.kind())), e.what(), 1);
  } catch (const std::exception& e) {
    return report("internal", e.what(), 1);
  }
  return 0;
}

}  // namespace t2t::cli

int main(int argc, char** argv) { return t2t::cli::run(argc, argv); }
