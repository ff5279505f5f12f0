#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace t2t {

struct MetricResult {
  std::string name;
  double value = 0;
  std::size_t count = 0;
  /// Set when the metric is undefined (constant input) and reported as 0.
  bool degenerate = false;
};

/// Raw string equality.
MetricResult accuracy(std::span<const std::string> preds, std::span<const std::string> golds);

/// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);
MetricResult exact_match(std::span<const std::string> preds, std::span<const std::string> golds);
/// Token-overlap F1 on normalized answers, averaged over examples.
MetricResult token_f1(std::span<const std::string> preds, std::span<const std::string> golds);

/// Binary labels only (0/1); DataError otherwise. Zero denominator gives 0.
MetricResult matthews_corr(std::span<const int> preds, std::span<const int> golds);

MetricResult pearson(std::span<const double> x, std::span<const double> y);
/// Pearson on average ranks.
MetricResult spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

/// ASCII rendering of the international BLEU tokenizer: punctuation is split
/// off unless it sits next to a digit on the relevant side; symbols always are.
std::string tokenize_intl(std::string_view text);

/// Corpus 4-gram BLEU in [0, 100] with exp smoothing: the k-th order with no
/// matches gets precision 1 / (2^k * total).
MetricResult bleu(std::span<const std::string> hypotheses, std::span<const std::string> references);

enum class RougeVariant { kRouge1, kRouge2, kRougeL };

/// Lowercase, non-alphanumerics become spaces.
std::vector<std::string> rouge_tokens(std::string_view text);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
/// Mean per-example F-measure in [0, 1].
MetricResult rouge(std::span<const std::string> hypotheses, std::span<const std::string> references,
                   RougeVariant variant);

struct BenchmarkSchema {
  std::string name;
  std::vector<std::string> tasks;
  std::vector<std::string> excluded;  // skipped in the average, e.g. wnli on validation
};

/// Mean over tasks of the mean of each task's metrics. DataError when a task
/// is missing or has no metrics.
double benchmark_average(const std::map<std::string, std::vector<double>>& per_task, const BenchmarkSchema& schema);

BenchmarkSchema glue_validation_schema();

}  // namespace t2t
