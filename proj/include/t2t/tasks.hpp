#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace t2t {

enum class TaskKind { kClassification, kRegression, kGeneration };

struct FieldSpec {
  std::string key;
  std::string label;  // empty: value is emitted without a "label: " tag
};

struct TaskSchema {
  std::string name;
  std::string prefix;  // leading text, may be empty
  std::vector<FieldSpec> fields;
  TaskKind kind = TaskKind::kGeneration;
  /// Classification label strings indexed by the integer label.
  std::vector<std::string> labels;
};

struct TaskExample {
  std::string task_name;
  std::vector<std::pair<std::string, std::string>> fields;
  std::string target;

  /// DataError when absent.
  const std::string& field(const std::string& key) const;
};

struct FormattedExample {
  std::string input;
  std::string target;
  bool operator==(const FormattedExample&) const = default;
};

/// ParameterError for an unknown name.
const TaskSchema& task_schema(const std::string& name);
std::vector<std::string> task_names();

/// Renders `prefix field1: v1 field2: v2 ...`. Classification targets given
/// as an integer index (or already as a label string) map to the label;
/// STS-B targets are rounded with stsb_round. The "wsc" schema highlights the
/// pronoun at span2_index and targets span1_text.
FormattedExample format_example(const TaskSchema& schema, const TaskExample& example);

/// Nearest multiple of 0.2 in [1, 5], midpoints rounding up, one decimal.
std::string stsb_round(double score);

struct Prediction {
  enum class Kind { kLabel, kNumber, kText, kInvalid };
  Kind kind = Kind::kInvalid;
  int label = -1;
  double number = 0;
  std::string text;
};

Prediction parse_prediction(const TaskSchema& schema, const std::string& output);

/// Wraps whitespace-delimited word `pronoun_index` in asterisks, leaving
/// punctuation attached to the word outside them. IndexError when out of range.
std::string wsc_format(const std::string& passage, std::size_t pronoun_index);

/// True when the normalized words of one side form a sub-multiset of the other.
/// Normalization lowercases, drops punctuation and the articles a/an/the. An
/// empty side never matches.
bool wsc_eval(const std::string& prediction, const std::string& candidate);

struct WscExample {
  std::string text;  // highlighted, without the "wsc: " prefix
  std::size_t pronoun_index = 0;
  std::string candidate;
  bool label = false;
  bool operator==(const WscExample&) const = default;
};

const std::vector<std::string>& wnli_pronouns();

/// `passage` holds the pronoun, `short_sentence` the substituted referent.
/// nullopt when the passage has no pronoun from wnli_pronouns().
std::optional<WscExample> wnli_convert(const std::string& passage, const std::string& short_sentence, bool label);

struct WnliConversion {
  std::vector<WscExample> converted;
  std::size_t failures = 0;
};

/// Examples must carry sentence1 (passage), sentence2 and a 0/1 target.
WnliConversion wnli_convert_all(const std::vector<TaskExample>& examples);

std::vector<WscExample> wsc_training_filter(const std::vector<WscExample>& examples);

/// Tab-separated file: a header naming the columns (field keys plus an
/// optional "target"), then one example per line. DataError on a column count
/// mismatch or a header that does not cover the schema fields.
std::vector<TaskExample> load_task_tsv(const TaskSchema& schema, const std::filesystem::path& path);
std::vector<TaskExample> parse_task_tsv(const TaskSchema& schema, const std::string& contents);

}  // namespace t2t
