#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace t2t {

struct Page {
  std::string url;
  std::string text;  // lines separated by '\n'
  bool operator==(const Page&) const = default;
};

enum class LineDrop { kKeep, kNoTerminalPunctuation, kTooFewWords, kJavascript };
enum class PageDrop { kKeep, kLanguage, kTooFewSentences, kBadWord, kLoremIpsum, kCurlyBracket, kDomain, kDuplicate };

std::string_view to_string(LineDrop reason);
std::string_view to_string(PageDrop reason);

/// Ends in . ! ? (optionally followed by closing quotes), has at least three
/// whitespace-separated words and no "javascript" word.
LineDrop line_filter(std::string_view line);

/// Units ending in terminal punctuation (plus closing quotes) followed by
/// whitespace or the end of text. No abbreviation handling.
std::vector<std::string> split_sentences(std::string_view text);

/// Lowercase words and phrases, matched on word boundaries.
class BadWordList {
 public:
  BadWordList() = default;
  explicit BadWordList(const std::vector<std::string>& entries);
  /// One entry per line. ConfigError when the file cannot be read.
  static BadWordList load(const std::filesystem::path& path);

  bool matches(std::string_view text) const;
  std::size_t size() const { return phrases_.size(); }

 private:
  std::vector<std::vector<std::string>> phrases_;
  std::unordered_set<std::string> first_words_;
};

/// Assumes line_filter already ran. Checks, in order: fewer than 5 sentences,
/// a bad word, "lorem ipsum" (any case), a '{'.
PageDrop page_filter(const Page& page, const BadWordList& bad_words);

class LanguageClassifier {
 public:
  virtual ~LanguageClassifier() = default;
  virtual double english_probability(std::string_view text) const = 0;
};

/// Interpolated byte-trigram models for English, French, German, Spanish and
/// a uniform background, trained on bundled seed text; equal priors.
class TrigramLanguageClassifier : public LanguageClassifier {
 public:
  TrigramLanguageClassifier();
  double english_probability(std::string_view text) const override;
  /// Per-class log-likelihoods, English first, background last.
  std::vector<double> log_likelihoods(std::string_view text) const;

 private:
  struct Model;
  std::vector<std::shared_ptr<const Model>> models_;
};

const LanguageClassifier& default_language_classifier();

bool language_filter(const Page& page, const LanguageClassifier& classifier, double threshold = 0.99);

enum class DomainMode { kNone, kDomainAllowlist, kUrlAllowlist };

/// Lowercased host without port, userinfo or a leading "www.".
std::string url_host(std::string_view url);
/// Last two host labels, or three under a two-letter country code with a
/// generic second level (co.uk, com.au, ...).
std::string registered_domain(std::string_view url);
/// Host plus path, query kept, fragment and trailing '/' dropped.
std::string normalize_url(std::string_view url);

struct DomainFilter {
  DomainMode mode = DomainMode::kNone;
  std::unordered_set<std::string> allow;

  /// ConfigError when the file cannot be read.
  static DomainFilter load(DomainMode mode, const std::filesystem::path& path);
  static DomainFilter from_entries(DomainMode mode, const std::vector<std::string>& entries);
  bool keep(const Page& page) const;
};

std::vector<Page> domain_filter(const std::vector<Page>& pages, const DomainFilter& filter);

enum class DedupMode { kNone, kSpan, kPage };

/// 128-bit FNV-1a over lowercased, whitespace-collapsed text.
using SpanHash = std::array<std::uint64_t, 2>;
SpanHash span_hash(std::string_view text);

/// Streaming three-sentence-span deduplication. The first occurrence of a span
/// is kept; later occurrences lose their sentences (kSpan) or the whole page
/// (kPage). Pages left with fewer than 5 sentences are dropped.
class SpanDeduplicator {
 public:
  explicit SpanDeduplicator(DedupMode mode = DedupMode::kSpan) : mode_(mode) {}
  std::optional<Page> process(Page page);
  std::size_t duplicate_spans() const { return duplicate_spans_; }
  std::size_t removed_sentences() const { return removed_sentences_; }
  std::size_t distinct_spans() const { return seen_.size(); }

 private:
  struct Hasher {
    std::size_t operator()(const SpanHash& h) const { return static_cast<std::size_t>(h[0] ^ (h[1] * 31)); }
  };
  DedupMode mode_;
  std::unordered_set<SpanHash, Hasher> seen_;
  std::size_t duplicate_spans_ = 0;
  std::size_t removed_sentences_ = 0;
};

std::vector<Page> dedup_spans(const std::vector<Page>& pages, DedupMode mode = DedupMode::kSpan);

struct CleanConfig {
  /// nullptr disables language filtering.
  const LanguageClassifier* classifier = &default_language_classifier();
  double language_threshold = 0.99;
  BadWordList bad_words;
  DomainFilter domains;
  DedupMode dedup = DedupMode::kSpan;
};

struct CleanReport {
  std::size_t pages_in = 0;
  std::size_t pages_kept = 0;
  std::size_t lines_in = 0;
  std::size_t lines_kept = 0;
  std::map<std::string, std::size_t> lines_dropped;  // by LineDrop name
  std::map<std::string, std::size_t> pages_dropped;  // by PageDrop name
  std::size_t duplicate_spans = 0;
  std::size_t sentences_removed = 0;

  bool operator==(const CleanReport&) const = default;
  /// Fixed field names, one "name value" pair per line.
  std::string to_text() const;
};

/// language -> lines -> page rules -> domain -> dedup, one page at a time.
class Cleaner {
 public:
  explicit Cleaner(CleanConfig config);
  std::optional<Page> process(Page page);
  const CleanReport& report() const { return report_; }

 private:
  CleanConfig config_;
  SpanDeduplicator dedup_;
  CleanReport report_;
};

std::pair<std::vector<Page>, CleanReport> clean(const std::vector<Page>& pages, const CleanConfig& config);

std::string base64_encode(std::string_view bytes);
/// DataError on malformed input.
std::string base64_decode(std::string_view text);

/// Records are "url<TAB>base64(text)" lines.
std::vector<Page> read_pages(std::istream& in);
void write_pages(std::ostream& out, const std::vector<Page>& pages);

}  // namespace t2t
