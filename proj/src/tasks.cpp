#include "t2t/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <cctype>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <sstream>

#include "t2t/errors.hpp"

namespace t2t {
namespace {

TaskSchema classification(std::string name, std::vector<FieldSpec> fields, std::vector<std::string> labels) {
  std::string prefix = name;
  return {std::move(name), std::move(prefix), std::move(fields), TaskKind::kClassification, std::move(labels)};
}

TaskSchema generation(std::string name, std::string prefix, std::vector<FieldSpec> fields) {
  return {std::move(name), std::move(prefix), std::move(fields), TaskKind::kGeneration, {}};
}

FieldSpec tagged(const std::string& key) { return {key, key}; }

const std::map<std::string, TaskSchema>& registry() {
  static const std::map<std::string, TaskSchema> schemas = [] {
    std::vector<TaskSchema> all{
        classification("cola", {tagged("sentence")}, {"unacceptable", "acceptable"}),
        classification("sst2", {tagged("sentence")}, {"negative", "positive"}),
        classification("mrpc", {tagged("sentence1"), tagged("sentence2")}, {"not_equivalent", "equivalent"}),
        classification("qqp", {tagged("question1"), tagged("question2")}, {"not_duplicate", "duplicate"}),
        classification("mnli", {tagged("hypothesis"), tagged("premise")}, {"entailment", "neutral", "contradiction"}),
        classification("qnli", {tagged("question"), tagged("sentence")}, {"entailment", "not_entailment"}),
        classification("rte", {tagged("sentence1"), tagged("sentence2")}, {"entailment", "not_entailment"}),
        classification("wnli", {tagged("sentence1"), tagged("sentence2")}, {"not_entailment", "entailment"}),
        classification("cb", {tagged("hypothesis"), tagged("premise")}, {"entailment", "contradiction", "neutral"}),
        classification("copa", {tagged("choice1"), tagged("choice2"), tagged("premise"), tagged("question")},
                       {"False", "True"}),
        classification("multirc", {tagged("question"), tagged("answer"), tagged("paragraph")}, {"False", "True"}),
        classification("wic", {tagged("pos"), tagged("sentence1"), tagged("sentence2"), tagged("word")},
                       {"False", "True"}),
        generation("wsc", "wsc:", {{"text", ""}}),
        generation("cnn_dailymail", "summarize:", {{"article", ""}}),
        generation("squad", "", {tagged("question"), tagged("context")}),
        generation("wmt_en_de", "translate English to German:", {{"source", ""}}),
        generation("wmt_en_fr", "translate English to French:", {{"source", ""}}),
        generation("wmt_en_ro", "translate English to Romanian:", {{"source", ""}}),
    };
    TaskSchema stsb{"stsb", "stsb", {tagged("sentence1"), tagged("sentence2")}, TaskKind::kRegression, {}};
    all.push_back(std::move(stsb));
    std::map<std::string, TaskSchema> out;
    for (auto& s : all) out.emplace(s.name, std::move(s));
    return out;
  }();
  return schemas;
}

bool is_punct(char c) { return static_cast<unsigned char>(c) < 128 && std::ispunct(static_cast<unsigned char>(c)); }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

struct Token {
  std::size_t begin, end;
};

std::vector<Token> whitespace_tokens(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i == s.size()) break;
    const std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    out.push_back({b, i});
  }
  return out;
}

// Lowercase, drop punctuation except apostrophes inside the word.
std::string normalize_word(std::string_view w) {
  std::size_t b = 0, e = w.size();
  while (b < e && is_punct(w[b])) ++b;
  while (e > b && is_punct(w[e - 1])) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    if (is_punct(w[i]) && w[i] != '\'') continue;
    out.push_back(lower(w[i]));
  }
  return out;
}

std::vector<std::string> normalized_words(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& t : whitespace_tokens(s)) {
    auto w = normalize_word(std::string_view(s).substr(t.begin, t.end - t.begin));
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

// First start index of `window` inside `words`, or npos.
std::size_t find_window(const std::vector<std::string>& words, std::span<const std::string> window) {
  if (window.empty() || window.size() > words.size()) return std::string::npos;
  for (std::size_t s = 0; s + window.size() <= words.size(); ++s) {
    if (std::equal(window.begin(), window.end(), words.begin() + static_cast<std::ptrdiff_t>(s))) return s;
  }
  return std::string::npos;
}

std::string depossessivize(std::string w) {
  static const std::map<std::string, std::string> pronouns{
      {"his", "he"}, {"her", "she"}, {"its", "it"}, {"their", "they"}};
  if (auto it = pronouns.find(w); it != pronouns.end()) return it->second;
  if (w.size() > 2 && w.ends_with("'s")) w.resize(w.size() - 2);
  else if (w.size() > 1 && w.back() == '\'') w.pop_back();
  return w;
}

std::multiset<std::string> eval_words(const std::string& s) {
  std::multiset<std::string> out;
  for (const auto& t : whitespace_tokens(s)) {
    std::string w;
    for (std::size_t i = t.begin; i < t.end; ++i) {
      if (!is_punct(s[i])) w.push_back(lower(s[i]));
    }
    if (w.empty() || w == "a" || w == "an" || w == "the") continue;
    out.insert(std::move(w));
  }
  return out;
}

bool sub_multiset(const std::multiset<std::string>& a, const std::multiset<std::string>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

const std::string& TaskExample::field(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw DataError("task " + task_name + ": missing field '" + key + "'");
}

const TaskSchema& task_schema(const std::string& name) {
  const auto& r = registry();
  const auto it = r.find(name);
  if (it == r.end()) throw ParameterError("unknown task '" + name + "'");
  return it->second;
}

std::vector<std::string> task_names() {
  std::vector<std::string> out;
  for (const auto& [name, schema] : registry()) out.push_back(name);
  return out;
}

std::string stsb_round(double score) {
  if (!(score >= 1.0 && score <= 5.0)) throw DataError("stsb_round: score outside [1, 5]");
  // Tolerance absorbs binary representation error at exact midpoints.
  const auto fifths = static_cast<int>(std::floor(score * 5.0 + 0.5 + 1e-9));
  const int tenths = 2 * fifths;
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

FormattedExample format_example(const TaskSchema& schema, const TaskExample& example) {
  FormattedExample out;
  if (schema.name == "wsc") {
    const std::string& idx_text = example.field("span2_index");
    const auto idx = parse_int(idx_text);
    if (!idx || *idx < 0) throw DataError("wsc: bad span2_index '" + idx_text + "'");
    const std::string& text = example.field("text");
    const auto toks = whitespace_tokens(text);
    for (const auto& [k, v] : example.fields) {
      if (k != "span2_text" || static_cast<std::size_t>(*idx) >= toks.size()) continue;
      const auto& t = toks[static_cast<std::size_t>(*idx)];
      if (normalize_word(std::string_view(text).substr(t.begin, t.end - t.begin)) != normalize_word(v)) {
        throw DataError("wsc: word at span2_index does not match span2_text '" + v + "'");
      }
    }
    out.input = "wsc: " + wsc_format(text, static_cast<std::size_t>(*idx));
    out.target = example.field("span1_text");
    return out;
  }

  out.input = schema.prefix;
  for (const auto& f : schema.fields) {
    const std::string& v = example.field(f.key);
    if (!out.input.empty()) out.input += ' ';
    if (!f.label.empty()) out.input += f.label + ": ";
    out.input += v;
  }

  switch (schema.kind) {
    case TaskKind::kClassification: {
      if (const auto i = parse_int(example.target)) {
        if (*i < 0 || *i >= static_cast<long long>(schema.labels.size())) {
          throw DataError(schema.name + ": label index " + example.target + " out of range");
        }
        out.target = schema.labels[static_cast<std::size_t>(*i)];
      } else if (std::find(schema.labels.begin(), schema.labels.end(), example.target) != schema.labels.end()) {
        out.target = example.target;
      } else {
        throw DataError(schema.name + ": unknown label '" + example.target + "'");
      }
      break;
    }
    case TaskKind::kRegression: {
      const auto v = parse_real(example.target);
      if (!v) throw DataError(schema.name + ": target '" + example.target + "' is not a number");
      out.target = stsb_round(*v);
      break;
    }
    case TaskKind::kGeneration: out.target = example.target; break;
  }
  return out;
}

Prediction parse_prediction(const TaskSchema& schema, const std::string& output) {
  Prediction p;
  switch (schema.kind) {
    case TaskKind::kClassification:
      for (std::size_t i = 0; i < schema.labels.size(); ++i) {
        if (schema.labels[i] == output) {
          p.kind = Prediction::Kind::kLabel;
          p.label = static_cast<int>(i);
          p.text = output;
        }
      }
      return p;
    case TaskKind::kRegression:
      if (const auto v = parse_real(output); v && *v >= 1.0 && *v <= 5.0) {
        p.kind = Prediction::Kind::kNumber;
        p.number = *v;
        p.text = output;
      }
      return p;
    case TaskKind::kGeneration:
      p.kind = Prediction::Kind::kText;
      p.text = output;
      return p;
  }
  return p;
}

std::string wsc_format(const std::string& passage, std::size_t pronoun_index) {
  const auto toks = whitespace_tokens(passage);
  if (pronoun_index >= toks.size()) {
    throw IndexError("wsc_format: word " + std::to_string(pronoun_index) + " of " + std::to_string(toks.size()));
  }
  auto [b, e] = toks[pronoun_index];
  std::size_t cb = b, ce = e;
  while (cb < ce && is_punct(passage[cb])) ++cb;
  while (ce > cb && is_punct(passage[ce - 1])) --ce;
  if (cb == ce) cb = b, ce = e;
  return passage.substr(0, cb) + "*" + passage.substr(cb, ce - cb) + "*" + passage.substr(ce);
}

bool wsc_eval(const std::string& prediction, const std::string& candidate) {
  const auto p = eval_words(prediction), c = eval_words(candidate);
  if (p.empty() || c.empty()) return false;
  return sub_multiset(p, c) || sub_multiset(c, p);
}

const std::vector<std::string>& wnli_pronouns() {
  static const std::vector<std::string> list{"he", "him", "his", "she", "her", "it", "its", "they", "them", "their"};
  return list;
}

std::optional<WscExample> wnli_convert(const std::string& passage, const std::string& short_sentence, bool label) {
  const auto toks = whitespace_tokens(passage);
  // Normalized passage words and the whitespace token each came from.
  std::vector<std::string> words;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    auto w = normalize_word(std::string_view(passage).substr(toks[i].begin, toks[i].end - toks[i].begin));
    if (w.empty()) continue;
    words.push_back(std::move(w));
    origin.push_back(i);
  }
  const auto target = normalized_words(short_sentence);
  const auto& pronouns = wnli_pronouns();

  bool found = false;
  std::size_t best_word = 0, best_len = 0, best_start = std::string::npos;
  for (std::size_t p = 0; p < words.size(); ++p) {
    if (std::find(pronouns.begin(), pronouns.end(), words[p]) == pronouns.end()) continue;
    std::size_t len = 0, start = std::string::npos;
    for (std::size_t k = 1; p + k < words.size(); ++k) {
      const auto s = find_window(target, std::span(words).subspan(p + 1, k));
      if (s == std::string::npos) break;
      len = k, start = s;
    }
    for (std::size_t k = 1; k <= p; ++k) {
      const auto s = find_window(target, std::span(words).subspan(p - k, k));
      if (s == std::string::npos) break;
      if (k > len) len = k, start = s;
    }
    if (!found || len > best_len) {
      found = true;
      best_word = p, best_len = len, best_start = start;
    }
  }
  if (!found) return std::nullopt;

  std::string candidate;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (best_start != std::string::npos && i >= best_start && i < best_start + best_len) continue;
    if (!candidate.empty()) candidate += ' ';
    candidate += depossessivize(target[i]);
  }
  WscExample out;
  out.pronoun_index = origin[best_word];
  out.text = wsc_format(passage, out.pronoun_index);
  out.candidate = std::move(candidate);
  out.label = label;
  return out;
}

WnliConversion wnli_convert_all(const std::vector<TaskExample>& examples) {
  WnliConversion out;
  for (const auto& ex : examples) {
    const auto l = parse_int(ex.target);
    if (!l || (*l != 0 && *l != 1)) throw DataError("wnli: target must be 0 or 1, got '" + ex.target + "'");
    if (auto c = wnli_convert(ex.field("sentence1"), ex.field("sentence2"), *l == 1)) {
      out.converted.push_back(std::move(*c));
    } else {
      ++out.failures;
    }
  }
  return out;
}

std::vector<WscExample> wsc_training_filter(const std::vector<WscExample>& examples) {
  std::vector<WscExample> out;
  std::copy_if(examples.begin(), examples.end(), std::back_inserter(out), [](const WscExample& e) { return e.label; });
  return out;
}

std::vector<TaskExample> parse_task_tsv(const TaskSchema& schema, const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  if (!std::getline(in, line)) throw DataError(schema.name + ": empty task file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_tabs(line);
  for (const auto& f : schema.fields) {
    if (std::find(header.begin(), header.end(), f.key) == header.end()) {
      throw DataError(schema.name + ": header lacks column '" + f.key + "'");
    }
  }
  std::vector<TaskExample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != header.size()) {
      throw DataError(schema.name + ": line " + std::to_string(line_no) + " has " + std::to_string(cols.size()) +
                      " columns, expected " + std::to_string(header.size()));
    }
    TaskExample ex{schema.name, {}, {}};
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (header[i] == "target") ex.target = cols[i];
      else ex.fields.emplace_back(header[i], cols[i]);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TaskExample> load_task_tsv(const TaskSchema& schema, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_task_tsv(schema, ss.str());
}

}  // namespace t2t
