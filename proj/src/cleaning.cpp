#include "t2t/cleaning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "language_seed.hpp"
#include "t2t/errors.hpp"

namespace t2t {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Length of a closing quote ending at s[..end), or 0.
std::size_t closing_quote_before(std::string_view s, std::size_t end) {
  if (end >= 1 && (s[end - 1] == '"' || s[end - 1] == '\'')) return 1;
  if (end >= 3 && s.substr(end - 3, 3) == "\xE2\x80\x9D") return 3;  // right double quotation mark
  if (end >= 3 && s.substr(end - 3, 3) == "\xE2\x80\x99") return 3;  // right single quotation mark
  return 0;
}

// Length of a closing quote starting at s[pos], or 0.
std::size_t closing_quote_at(std::string_view s, std::size_t pos) {
  if (pos < s.size() && (s[pos] == '"' || s[pos] == '\'')) return 1;
  if (pos + 3 <= s.size() && (s.substr(pos, 3) == "\xE2\x80\x9D" || s.substr(pos, 3) == "\xE2\x80\x99")) return 3;
  return 0;
}

bool word_char(char c) { return static_cast<unsigned char>(c) >= 128 || std::isalnum(static_cast<unsigned char>(c)); }

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (word_char(c)) {
      cur.push_back(lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto nl = text.find('\n', start);
    out.push_back(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string collapse_lower(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

std::string strip_www(std::string host) {
  if (host.starts_with("www.")) host.erase(0, 4);
  return host;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot read ") + what + " " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace

std::string_view to_string(LineDrop reason) {
  switch (reason) {
    case LineDrop::kKeep: return "keep";
    case LineDrop::kNoTerminalPunctuation: return "no_terminal_punctuation";
    case LineDrop::kTooFewWords: return "too_few_words";
    case LineDrop::kJavascript: return "javascript";
  }
  return "unknown";
}

std::string_view to_string(PageDrop reason) {
  switch (reason) {
    case PageDrop::kKeep: return "keep";
    case PageDrop::kLanguage: return "language";
    case PageDrop::kTooFewSentences: return "too_few_sentences";
    case PageDrop::kBadWord: return "bad_word";
    case PageDrop::kLoremIpsum: return "lorem_ipsum";
    case PageDrop::kCurlyBracket: return "curly_bracket";
    case PageDrop::kDomain: return "domain";
    case PageDrop::kDuplicate: return "duplicate";
  }
  return "unknown";
}

LineDrop line_filter(std::string_view line) {
  const auto s = trim(line);
  std::size_t end = s.size();
  while (const auto q = closing_quote_before(s, end)) end -= q;
  if (end == 0 || !is_terminal(s[end - 1])) return LineDrop::kNoTerminalPunctuation;
  if (count_words(s) < 3) return LineDrop::kTooFewWords;
  for (const auto& w : lower_words(s)) {
    if (w == "javascript") return LineDrop::kJavascript;
  }
  return LineDrop::kKeep;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    const auto t = trim(text.substr(start, end - start));
    if (!t.empty()) out.emplace_back(t);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminal(text[i])) continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_terminal(text[j])) ++j;
    while (const auto q = closing_quote_at(text, j)) j += q;
    if (j == text.size() || is_space(text[j])) {
      emit(j);
      i = j;
    }
  }
  emit(text.size());
  return out;
}

BadWordList::BadWordList(const std::vector<std::string>& entries) {
  for (const auto& e : entries) {
    auto words = lower_words(e);
    if (words.empty()) continue;
    first_words_.insert(words.front());
    phrases_.push_back(std::move(words));
  }
}

BadWordList BadWordList::load(const std::filesystem::path& path) { return BadWordList(read_lines(path, "word list")); }

bool BadWordList::matches(std::string_view text) const {
  if (phrases_.empty()) return false;
  const auto words = lower_words(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!first_words_.contains(words[i])) continue;
    for (const auto& p : phrases_) {
      if (i + p.size() <= words.size() && std::equal(p.begin(), p.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        return true;
      }
    }
  }
  return false;
}

PageDrop page_filter(const Page& page, const BadWordList& bad_words) {
  if (split_sentences(page.text).size() < 5) return PageDrop::kTooFewSentences;
  if (bad_words.matches(page.text)) return PageDrop::kBadWord;
  if (collapse_lower(page.text).find("lorem ipsum") != std::string::npos) return PageDrop::kLoremIpsum;
  if (page.text.find('{') != std::string::npos) return PageDrop::kCurlyBracket;
  return PageDrop::kKeep;
}

struct TrigramLanguageClassifier::Model {
  static constexpr double kLambda = 0.7;
  std::unordered_map<std::uint32_t, double> tri, bi;
  std::unordered_map<std::uint32_t, double> ctx2, ctx1;
  std::array<double, 256> uni{};
  double total = 0;

  static std::string prepare(std::string_view text) { return "  " + collapse_lower(text); }

  explicit Model(std::string_view seed) {
    const auto s = prepare(seed);
    for (std::size_t i = 2; i < s.size(); ++i) {
      const auto a = static_cast<unsigned char>(s[i - 2]), b = static_cast<unsigned char>(s[i - 1]),
                 c = static_cast<unsigned char>(s[i]);
      tri[(a << 16) | (b << 8) | c] += 1;
      ctx2[(a << 8) | b] += 1;
      bi[(b << 8) | c] += 1;
      ctx1[b] += 1;
      uni[c] += 1;
      total += 1;
    }
  }

  static double lookup(const std::unordered_map<std::uint32_t, double>& m, std::uint32_t k) {
    const auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  }

  double log_likelihood(std::string_view text) const {
    const auto s = prepare(text);
    double ll = 0;
    for (std::size_t i = 2; i < s.size(); ++i) {
      const auto a = static_cast<unsigned char>(s[i - 2]), b = static_cast<unsigned char>(s[i - 1]),
                 c = static_cast<unsigned char>(s[i]);
      double p = kLambda * uni[c] / total + (1 - kLambda) / 256.0;
      if (const double n1 = lookup(ctx1, b); n1 > 0) p = kLambda * lookup(bi, (b << 8) | c) / n1 + (1 - kLambda) * p;
      if (const double n2 = lookup(ctx2, (a << 8) | b); n2 > 0) {
        p = kLambda * lookup(tri, (a << 16) | (b << 8) | c) / n2 + (1 - kLambda) * p;
      }
      ll += std::log(p);
    }
    return ll;
  }
};

TrigramLanguageClassifier::TrigramLanguageClassifier() {
  for (auto seed : {seed::kEnglish, seed::kFrench, seed::kGerman, seed::kSpanish}) {
    models_.push_back(std::make_shared<const Model>(seed));
  }
}

std::vector<double> TrigramLanguageClassifier::log_likelihoods(std::string_view text) const {
  std::vector<double> out;
  for (const auto& m : models_) out.push_back(m->log_likelihood(text));
  const auto n = Model::prepare(text).size() - 2;
  out.push_back(-static_cast<double>(n) * std::log(256.0));
  return out;
}

double TrigramLanguageClassifier::english_probability(std::string_view text) const {
  const auto ll = log_likelihoods(text);
  const double mx = *std::max_element(ll.begin(), ll.end());
  double z = 0;
  for (double x : ll) z += std::exp(x - mx);
  return std::exp(ll[0] - mx) / z;
}

const LanguageClassifier& default_language_classifier() {
  static const TrigramLanguageClassifier classifier;
  return classifier;
}

bool language_filter(const Page& page, const LanguageClassifier& classifier, double threshold) {
  if (threshold <= 0) return true;
  return classifier.english_probability(page.text) >= threshold;
}

std::string url_host(std::string_view url) {
  if (const auto p = url.find("://"); p != std::string_view::npos) url.remove_prefix(p + 3);
  url = url.substr(0, url.find_first_of("/?#"));
  if (const auto at = url.rfind('@'); at != std::string_view::npos) url.remove_prefix(at + 1);
  url = url.substr(0, url.find(':'));
  std::string host;
  for (char c : url) host.push_back(lower(c));
  while (!host.empty() && host.back() == '.') host.pop_back();
  return strip_www(std::move(host));
}

std::string registered_domain(std::string_view url) {
  const auto host = url_host(url);
  std::vector<std::string> labels;
  std::stringstream ss(host);
  for (std::string l; std::getline(ss, l, '.');) labels.push_back(l);
  if (labels.size() <= 2) return host;
  static const std::unordered_set<std::string> generic{"co", "com", "net", "org", "gov", "ac", "edu"};
  std::size_t keep = 2;
  if (labels.back().size() == 2 && generic.contains(labels[labels.size() - 2])) keep = 3;
  std::vector<std::string> tail(labels.end() - static_cast<std::ptrdiff_t>(keep), labels.end());
  return join(tail, ".");
}

std::string normalize_url(std::string_view url) {
  std::string_view rest = url;
  if (const auto p = rest.find("://"); p != std::string_view::npos) rest.remove_prefix(p + 3);
  const auto slash = rest.find_first_of("/?#");
  std::string out = url_host(url);
  if (slash != std::string_view::npos) {
    auto tail = rest.substr(slash);
    tail = tail.substr(0, tail.find('#'));
    out += tail;
  }
  while (!out.empty() && out.back() == '/') out.pop_back();
  return out;
}

DomainFilter DomainFilter::from_entries(DomainMode mode, const std::vector<std::string>& entries) {
  DomainFilter f{mode, {}};
  for (const auto& e : entries) {
    if (mode == DomainMode::kUrlAllowlist) f.allow.insert(normalize_url(e));
    else f.allow.insert(url_host(e));
  }
  return f;
}

DomainFilter DomainFilter::load(DomainMode mode, const std::filesystem::path& path) {
  return from_entries(mode, read_lines(path, "allowlist"));
}

bool DomainFilter::keep(const Page& page) const {
  switch (mode) {
    case DomainMode::kNone: return true;
    case DomainMode::kDomainAllowlist:
      return allow.contains(registered_domain(page.url)) || allow.contains(url_host(page.url));
    case DomainMode::kUrlAllowlist: return allow.contains(normalize_url(page.url));
  }
  return true;
}

std::vector<Page> domain_filter(const std::vector<Page>& pages, const DomainFilter& filter) {
  std::vector<Page> out;
  std::copy_if(pages.begin(), pages.end(), std::back_inserter(out), [&](const Page& p) { return filter.keep(p); });
  return out;
}

SpanHash span_hash(std::string_view text) {
  using u128 = unsigned __int128;
  const u128 prime = (static_cast<u128>(0x0000000001000000ULL) << 64) | 0x000000000000013BULL;
  u128 h = (static_cast<u128>(0x6C62272E07BB0142ULL) << 64) | 0x62B821756295C58DULL;
  for (char c : collapse_lower(text)) {
    h ^= static_cast<unsigned char>(c);
    h *= prime;
  }
  return {static_cast<std::uint64_t>(h >> 64), static_cast<std::uint64_t>(h)};
}

std::optional<Page> SpanDeduplicator::process(Page page) {
  if (mode_ == DedupMode::kNone) return page;
  struct Sentence {
    std::size_t line;
    std::string text;
  };
  const auto lines = split_lines(page.text);
  std::vector<Sentence> sents;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    for (auto& s : split_sentences(lines[l])) sents.push_back({l, std::move(s)});
  }
  std::vector<bool> removed(sents.size(), false);
  std::vector<SpanHash> fresh;
  std::unordered_set<SpanHash, Hasher> local;
  std::size_t dups = 0;
  for (std::size_t i = 0; i + 3 <= sents.size(); ++i) {
    const auto h = span_hash(sents[i].text + " " + sents[i + 1].text + " " + sents[i + 2].text);
    if (seen_.contains(h) || local.contains(h)) {
      ++dups;
      removed[i] = removed[i + 1] = removed[i + 2] = true;
    } else {
      local.insert(h);
      fresh.push_back(h);
    }
  }
  duplicate_spans_ += dups;
  const auto n_removed = static_cast<std::size_t>(std::count(removed.begin(), removed.end(), true));
  removed_sentences_ += n_removed;
  if (mode_ == DedupMode::kPage && dups > 0) return std::nullopt;
  if (sents.size() - n_removed < 5) return std::nullopt;
  seen_.insert(fresh.begin(), fresh.end());
  if (n_removed == 0) return page;

  std::vector<std::string> out_lines;
  std::size_t k = 0;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    std::vector<std::string> kept;
    bool touched = false;
    for (; k < sents.size() && sents[k].line == l; ++k) {
      if (removed[k]) touched = true;
      else kept.push_back(sents[k].text);
    }
    if (!touched) {
      if (!trim(lines[l]).empty()) out_lines.emplace_back(lines[l]);
    } else if (!kept.empty()) {
      out_lines.push_back(join(kept, " "));
    }
  }
  page.text = join(out_lines, "\n");
  return page;
}

std::vector<Page> dedup_spans(const std::vector<Page>& pages, DedupMode mode) {
  SpanDeduplicator d(mode);
  std::vector<Page> out;
  for (const auto& p : pages) {
    if (auto kept = d.process(p)) out.push_back(std::move(*kept));
  }
  return out;
}

std::string CleanReport::to_text() const {
  std::ostringstream out;
  out << "pages_in " << pages_in << "\n"
      << "pages_kept " << pages_kept << "\n"
      << "lines_in " << lines_in << "\n"
      << "lines_kept " << lines_kept << "\n";
  for (const auto& [k, v] : lines_dropped) out << "lines_dropped." << k << " " << v << "\n";
  for (const auto& [k, v] : pages_dropped) out << "pages_dropped." << k << " " << v << "\n";
  out << "duplicate_spans " << duplicate_spans << "\n"
      << "sentences_removed " << sentences_removed << "\n";
  return out.str();
}

Cleaner::Cleaner(CleanConfig config) : config_(std::move(config)), dedup_(config_.dedup) {
  for (auto r : {LineDrop::kNoTerminalPunctuation, LineDrop::kTooFewWords, LineDrop::kJavascript}) {
    report_.lines_dropped[std::string(to_string(r))] = 0;
  }
  for (auto r : {PageDrop::kLanguage, PageDrop::kTooFewSentences, PageDrop::kBadWord, PageDrop::kLoremIpsum,
                 PageDrop::kCurlyBracket, PageDrop::kDomain, PageDrop::kDuplicate}) {
    report_.pages_dropped[std::string(to_string(r))] = 0;
  }
}

std::optional<Page> Cleaner::process(Page page) {
  if (page.url.empty()) throw DataError("page with empty url");
  ++report_.pages_in;
  auto drop = [&](PageDrop r) -> std::optional<Page> {
    ++report_.pages_dropped[std::string(to_string(r))];
    return std::nullopt;
  };
  if (config_.classifier && !language_filter(page, *config_.classifier, config_.language_threshold)) {
    return drop(PageDrop::kLanguage);
  }
  std::vector<std::string> kept;
  for (const auto line : split_lines(page.text)) {
    ++report_.lines_in;
    const auto r = line_filter(line);
    if (r == LineDrop::kKeep) {
      kept.emplace_back(trim(line));
      ++report_.lines_kept;
    } else {
      ++report_.lines_dropped[std::string(to_string(r))];
    }
  }
  page.text = join(kept, "\n");
  if (const auto r = page_filter(page, config_.bad_words); r != PageDrop::kKeep) return drop(r);
  if (!config_.domains.keep(page)) return drop(PageDrop::kDomain);
  const auto before_spans = dedup_.duplicate_spans();
  const auto before_sents = dedup_.removed_sentences();
  auto out = dedup_.process(std::move(page));
  report_.duplicate_spans += dedup_.duplicate_spans() - before_spans;
  report_.sentences_removed += dedup_.removed_sentences() - before_sents;
  if (!out) return drop(PageDrop::kDuplicate);
  ++report_.pages_kept;
  return out;
}

std::pair<std::vector<Page>, CleanReport> clean(const std::vector<Page>& pages, const CleanConfig& config) {
  Cleaner c(config);
  std::vector<Page> out;
  for (const auto& p : pages) {
    if (auto kept = c.process(p)) out.push_back(std::move(*kept));
  }
  return {std::move(out), c.report()};
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64[v & 63] : '=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
  std::string out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const auto pos = kB64.find(c);
      if (pos == std::string_view::npos || pad > 0) throw DataError("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(pos);
    }
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

std::vector<Page> read_pages(std::istream& in) {
  std::vector<Page> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError("pages: line " + std::to_string(line_no) + " is not url<TAB>base64(text)");
    }
    out.push_back({line.substr(0, tab), base64_decode(std::string_view(line).substr(tab + 1))});
  }
  return out;
}

void write_pages(std::ostream& out, const std::vector<Page>& pages) {
  for (const auto& p : pages) out << p.url << '\t' << base64_encode(p.text) << '\n';
}

}  // namespace t2t
