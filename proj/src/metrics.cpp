#include "t2t/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

#include "t2t/errors.hpp"

namespace t2t {
namespace {

template <typename A, typename B>
void check_sizes(const char* what, const A& a, const B& b) {
  if (a.size() != b.size()) {
    throw DataError(std::string(what) + ": " + std::to_string(a.size()) + " predictions for " +
                    std::to_string(b.size()) + " references");
  }
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + static_cast<std::ptrdiff_t>(i),
                                                             toks.begin() + static_cast<std::ptrdiff_t>(i + n)}];
  return out;
}

std::size_t clipped_overlap(const Ngrams& hyp, const Ngrams& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    if (const auto it = ref.find(g); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

double f_measure(double overlap, double hyp_total, double ref_total) {
  if (overlap == 0 || hyp_total == 0 || ref_total == 0) return 0;
  const double p = overlap / hyp_total, r = overlap / ref_total;
  return 2 * p * r / (p + r);
}

}  // namespace

MetricResult accuracy(std::span<const std::string> preds, std::span<const std::string> golds) {
  check_sizes("accuracy", preds, golds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == golds[i];
  return {"accuracy", preds.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(preds.size()), preds.size()};
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::ispunct(u)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(u)));
  }
  std::string out;
  for (const auto& w : split_ws(cleaned)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

MetricResult exact_match(std::span<const std::string> preds, std::span<const std::string> golds) {
  check_sizes("exact_match", preds, golds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += normalize_answer(preds[i]) == normalize_answer(golds[i]);
  return {"exact_match", preds.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(preds.size()),
          preds.size()};
}

MetricResult token_f1(std::span<const std::string> preds, std::span<const std::string> golds) {
  check_sizes("f1", preds, golds);
  double total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = split_ws(normalize_answer(preds[i])), g = split_ws(normalize_answer(golds[i]));
    if (p.empty() || g.empty()) {
      total += p.empty() && g.empty() ? 1.0 : 0.0;
      continue;
    }
    total += f_measure(static_cast<double>(clipped_overlap(ngrams(p, 1), ngrams(g, 1))), static_cast<double>(p.size()),
                       static_cast<double>(g.size()));
  }
  return {"f1", preds.empty() ? 0.0 : total / static_cast<double>(preds.size()), preds.size()};
}

MetricResult matthews_corr(std::span<const int> preds, std::span<const int> golds) {
  check_sizes("matthews_corr", preds, golds);
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], g = golds[i];
    if ((p != 0 && p != 1) || (g != 0 && g != 1)) throw DataError("matthews_corr: labels must be 0 or 1");
    if (p && g) ++tp;
    else if (!p && !g) ++tn;
    else if (p) ++fp;
    else ++fn;
  }
  const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  MetricResult r{"matthews_corr", 0, preds.size()};
  if (den == 0) r.degenerate = true;
  else r.value = (tp * tn - fp * fn) / den;
  return r;
}

MetricResult pearson(std::span<const double> x, std::span<const double> y) {
  check_sizes("pearson", x, y);
  MetricResult r{"pearson", 0, x.size()};
  if (x.empty()) {
    r.degenerate = true;
    return r;
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) {
    r.degenerate = true;
    return r;
  }
  r.value = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return r;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

MetricResult spearman(std::span<const double> x, std::span<const double> y) {
  check_sizes("spearman", x, y);
  const auto rx = average_ranks(x), ry = average_ranks(y);
  auto r = pearson(rx, ry);
  r.name = "spearman";
  return r;
}

std::string tokenize_intl(std::string_view text) {
  // ASCII punctuation and symbol classes of the Unicode P and S categories.
  static const std::regex punct_after_non_digit(R"re(([^0-9])([!"#%&'()*,\-./:;?@\[\\\]_{}]))re");
  static const std::regex punct_before_non_digit(R"re(([!"#%&'()*,\-./:;?@\[\\\]_{}])([^0-9]))re");
  static const std::regex symbol(R"re(([$+<=>^`|~]))re");
  std::string s(text);
  s = std::regex_replace(s, punct_after_non_digit, "$1 $2 ");
  s = std::regex_replace(s, punct_before_non_digit, " $1 $2");
  s = std::regex_replace(s, symbol, " $1 ");
  std::string out;
  for (const auto& w : split_ws(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

MetricResult bleu(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  check_sizes("bleu", hypotheses, references);
  if (hypotheses.empty()) throw DataError("bleu: empty corpus");
  constexpr std::size_t kOrder = 4;
  std::array<double, kOrder> correct{}, total{};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = split_ws(tokenize_intl(hypotheses[i])), r = split_ws(tokenize_intl(references[i]));
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= kOrder; ++n) {
      const auto hg = ngrams(h, n);
      correct[n - 1] += static_cast<double>(clipped_overlap(hg, ngrams(r, n)));
      total[n - 1] += h.size() >= n ? static_cast<double>(h.size() - n + 1) : 0.0;
    }
  }
  MetricResult res{"bleu", 0, hypotheses.size()};
  if (hyp_len == 0) return res;
  double log_sum = 0, smooth = 1;
  for (std::size_t n = 0; n < kOrder; ++n) {
    if (total[n] == 0) return res;
    double p;
    if (correct[n] == 0) {
      smooth *= 2;
      p = 1.0 / (smooth * total[n]);
    } else {
      p = correct[n] / total[n];
    }
    log_sum += std::log(p);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  res.value = 100.0 * bp * std::exp(log_sum / kOrder);
  return res;
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::string s;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    s.push_back(u < 128 && std::isalnum(u) ? static_cast<char>(std::tolower(u)) : ' ');
  }
  return split_ws(s);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

MetricResult rouge(std::span<const std::string> hypotheses, std::span<const std::string> references,
                   RougeVariant variant) {
  check_sizes("rouge", hypotheses, references);
  if (hypotheses.empty()) throw DataError("rouge: empty corpus");
  static const char* names[] = {"rouge1", "rouge2", "rougeL"};
  double total = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = rouge_tokens(hypotheses[i]), r = rouge_tokens(references[i]);
    if (variant == RougeVariant::kRougeL) {
      total += f_measure(static_cast<double>(lcs_length(h, r)), static_cast<double>(h.size()),
                         static_cast<double>(r.size()));
      continue;
    }
    const std::size_t n = variant == RougeVariant::kRouge1 ? 1 : 2;
    const auto hg = ngrams(h, n), rg = ngrams(r, n);
    const double ht = h.size() >= n ? static_cast<double>(h.size() - n + 1) : 0.0;
    const double rt = r.size() >= n ? static_cast<double>(r.size() - n + 1) : 0.0;
    total += f_measure(static_cast<double>(clipped_overlap(hg, rg)), ht, rt);
  }
  return {names[static_cast<int>(variant)], total / static_cast<double>(hypotheses.size()), hypotheses.size()};
}

double benchmark_average(const std::map<std::string, std::vector<double>>& per_task, const BenchmarkSchema& schema) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& task : schema.tasks) {
    if (std::find(schema.excluded.begin(), schema.excluded.end(), task) != schema.excluded.end()) continue;
    const auto it = per_task.find(task);
    if (it == per_task.end() || it->second.empty()) {
      throw DataError(schema.name + ": no score for task '" + task + "'");
    }
    sum += std::accumulate(it->second.begin(), it->second.end(), 0.0) / static_cast<double>(it->second.size());
    ++n;
  }
  if (n == 0) throw DataError(schema.name + ": no tasks to average");
  return sum / static_cast<double>(n);
}

BenchmarkSchema glue_validation_schema() {
  return {"glue", {"cola", "sst2", "mrpc", "stsb", "qqp", "mnli", "qnli", "rte", "wnli"}, {"wnli"}};
}

}  // namespace t2t
