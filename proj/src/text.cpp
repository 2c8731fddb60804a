// SPDX-License-Identifier: Apache-2.0

#include "averify/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/stringpiece.h>
#include <unicode/bytestream.h>
#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "averify/error.hpp"
#include "averify/rng.hpp"

namespace averify::text {

namespace {

std::string nfc_normalize(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC instance unavailable");
  std::string out;
  icu::StringByteSink<std::string> sink(&out);
  nfc->normalizeUTF8(0, icu::StringPiece(utf8.data(), static_cast<int>(utf8.size())),
                     sink, nullptr, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalization failed");
  return out;
}

bool is_ascii_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v';
}

bool is_space(char32_t cp) {
  return is_ascii_space(cp) || cp == 0x00A0 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
         cp == 0x3000;
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80)
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
           (cp >= 'A' && cp <= 'Z') || cp == '_';
  // General Punctuation block (curly quotes, dashes, ellipsis) splits like
  // ASCII punctuation; other non-space codepoints count as word characters.
  if (cp >= 0x2010 && cp <= 0x205E) return false;
  return !is_space(cp);
}

/// Minimal UTF-8 cursor; invalid bytes pass through as single codepoints.
struct Utf8Cursor {
  std::string_view s;
  std::size_t pos = 0;

  bool done() const { return pos >= s.size(); }

  std::pair<char32_t, std::size_t> peek() const {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    std::size_t len = 1;
    char32_t cp = b0;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    if (pos + len > s.size()) return {b0, 1};
    for (std::size_t i = 1; i < len; ++i) {
      const auto b = static_cast<unsigned char>(s[pos + i]);
      if ((b & 0xC0) != 0x80) return {b0, 1};
      cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
  }
};

std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

bool has_prefix_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != prefix[i]) return false;
  }
  return true;
}

bool looks_like_url(std::string_view chunk) {
  return has_prefix_ci(chunk, "http://") || has_prefix_ci(chunk, "https://") ||
         has_prefix_ci(chunk, "www.");
}

/// Length in bytes of the word-character run starting at `pos`.
std::size_t word_run(std::string_view s, std::size_t pos) {
  Utf8Cursor cur{s, pos};
  while (!cur.done()) {
    const auto [cp, len] = cur.peek();
    if (!is_word_char(cp)) break;
    cur.pos += len;
  }
  return cur.pos - pos;
}

void emit(std::vector<std::string>& out, const TokenizerConfig& config,
          std::string token) {
  if (config.lowercase) token = ascii_lower(std::move(token));
  out.push_back(std::move(token));
}

void tokenize_chunk(const TokenizerConfig& config, std::string_view chunk,
                    std::vector<std::string>& out) {
  if (looks_like_url(chunk)) {
    if (config.url_policy == SentinelPolicy::kReplace) out.emplace_back(kUrlToken);
    else emit(out, config, std::string(chunk));
    return;
  }

  std::size_t pos = 0;
  while (pos < chunk.size()) {
    const char c = chunk[pos];
    if (c == '@') {
      const std::size_t run = word_run(chunk, pos + 1);
      if (run > 0) {
        if (config.mention_policy == SentinelPolicy::kReplace)
          out.emplace_back(kMentionToken);
        else
          emit(out, config, std::string(chunk.substr(pos, 1 + run)));
        pos += 1 + run;
        continue;
      }
    }
    if (c == '#') {
      const std::size_t run = word_run(chunk, pos + 1);
      if (run > 0) {
        emit(out, config, std::string(chunk.substr(pos, 1 + run)));
        pos += 1 + run;
        continue;
      }
    }
    const std::size_t run = word_run(chunk, pos);
    if (run > 0) {
      emit(out, config, std::string(chunk.substr(pos, run)));
      pos += run;
      continue;
    }
    // Punctuation run: consecutive non-word, non-space, non-@/# codepoints.
    Utf8Cursor cur{chunk, pos};
    while (!cur.done()) {
      const auto [cp, len] = cur.peek();
      if (is_word_char(cp) || is_space(cp) || cp == '@' || cp == '#') break;
      cur.pos += len;
    }
    if (cur.pos == pos) {
      // Lone '@' or '#' with no word run behind it.
      const auto [cp, len] = cur.peek();
      (void)cp;
      cur.pos += len;
    }
    emit(out, config, std::string(chunk.substr(pos, cur.pos - pos)));
    pos = cur.pos;
  }
}

}  // namespace

std::vector<std::string> normalize_and_tokenize(const TokenizerConfig& config,
                                                std::string_view text) {
  const std::string normalized = nfc_normalize(text);

  std::vector<std::string> tokens;
  Utf8Cursor cur{normalized, 0};
  std::size_t chunk_start = 0;
  const auto flush = [&](std::size_t end) {
    if (end > chunk_start)
      tokenize_chunk(config,
                     std::string_view(normalized).substr(chunk_start, end - chunk_start),
                     tokens);
  };
  while (!cur.done()) {
    const auto [cp, len] = cur.peek();
    if (is_space(cp)) {
      flush(cur.pos);
      chunk_start = cur.pos + len;
    }
    cur.pos += len;
  }
  flush(normalized.size());

  if (tokens.size() > config.max_tokens) tokens.resize(config.max_tokens);
  return tokens;
}

std::size_t Vocabulary::lookup(const std::string& token) const {
  const auto it = token_to_index.find(token);
  return it == token_to_index.end() ? kUnk : it->second;
}

std::uint32_t Vocabulary::checksum() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const std::string& token : index_to_token) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(token.data()),
                static_cast<uInt>(token.size()));
    static const Bytef nl = '\n';
    crc = crc32(crc, &nl, 1);
  }
  return static_cast<std::uint32_t>(crc);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write vocabulary file: " + path.string());
  for (const std::string& token : index_to_token) out << token << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open vocabulary file: " + path.string());
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.token_to_index.emplace(line, vocab.index_to_token.size());
    vocab.index_to_token.push_back(line);
  }
  if (vocab.size() < 2 || vocab.index_to_token[kPad] != kPadToken ||
      vocab.index_to_token[kUnk] != kUnkToken)
    throw ValidationError(path.string() + ": not a vocabulary file (missing reserved entries)");
  return vocab;
}

Vocabulary build_vocab(const corpus::Corpus& corpus,
                       const TokenizerConfig& config, std::size_t min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");

  std::map<std::string, std::size_t> counts;
  for (const auto& account : corpus.accounts)
    for (const auto& post : account.posts)
      for (std::string& token : normalize_and_tokenize(config, post.text))
        ++counts[std::move(token)];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts)
    if (count >= min_count) kept.emplace_back(token, count);
  if (kept.empty())
    throw ValidationError("vocabulary is empty: no token reaches min_count=" +
                          std::to_string(min_count));

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary vocab;
  vocab.index_to_token = {kPadToken, kUnkToken};
  for (auto& [token, count] : kept) vocab.index_to_token.push_back(token);
  for (std::size_t i = 0; i < vocab.index_to_token.size(); ++i)
    vocab.token_to_index.emplace(vocab.index_to_token[i], i);
  return vocab;
}

std::string_view embedding_source_name(EmbeddingSource source) {
  switch (source) {
    case EmbeddingSource::kGloveText: return "glove_text";
    case EmbeddingSource::kWord2vecText: return "word2vec_text";
    case EmbeddingSource::kRandomInit: return "random_init";
  }
  return "random_init";
}

EmbeddingSource embedding_source_from_name(std::string_view name) {
  if (name == "glove_text") return EmbeddingSource::kGloveText;
  if (name == "word2vec_text") return EmbeddingSource::kWord2vecText;
  if (name == "random_init") return EmbeddingSource::kRandomInit;
  throw ValidationError("unknown embedding source '" + std::string(name) + "'");
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    if (end > pos) fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

bool parse_double(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

void fill_random_row(double* row, std::size_t dim, Rng& rng) {
  for (std::size_t j = 0; j < dim; ++j) row[j] = rng.uniform(-0.05, 0.05);
}

}  // namespace

EmbeddingTable load_embedding_file(const std::filesystem::path& path,
                                   const Vocabulary& vocab, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file: " + path.string());

  EmbeddingTable table;
  table.source = EmbeddingSource::kGloveText;

  std::vector<std::pair<std::size_t, std::vector<double>>> rows;  // (vocab idx, vec)
  std::vector<bool> hit(vocab.size(), false);

  std::string line;
  std::size_t lineno = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;

    if (first_content_line && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      if (parse_size(fields[0], count) && parse_size(fields[1], dim)) {
        table.source = EmbeddingSource::kWord2vecText;
        first_content_line = false;
        continue;
      }
    }
    first_content_line = false;

    if (fields.size() < 2)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'token v1 ... vd'");
    const std::size_t d = fields.size() - 1;
    if (table.dim == 0) {
      table.dim = d;
    } else if (d != table.dim) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": dimension " + std::to_string(d) +
                            " differs from established dimension " +
                            std::to_string(table.dim));
    }

    const std::string token(fields[0]);
    const auto it = vocab.token_to_index.find(token);
    // PAD stays zero and UNK stays seeded even when present in the file.
    if (it == vocab.token_to_index.end() || it->second == Vocabulary::kPad ||
        it->second == Vocabulary::kUnk) {
      for (std::size_t j = 1; j < fields.size(); ++j) {
        double v;
        if (!parse_double(fields[j], v))
          throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                ": non-numeric vector component '" +
                                std::string(fields[j]) + "'");
      }
      continue;
    }
    std::vector<double> vec(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!parse_double(fields[1 + j], vec[j]) || !std::isfinite(vec[j]))
        throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                              ": non-numeric vector component '" +
                              std::string(fields[1 + j]) + "'");
    }
    if (!hit[it->second]) {
      hit[it->second] = true;
      rows.emplace_back(it->second, std::move(vec));
    }
  }

  if (table.dim == 0)
    throw ValidationError(path.string() + ": no vector lines found");

  table.vectors = Tensor2(vocab.size(), table.dim);
  for (auto& [idx, vec] : rows) {
    std::copy(vec.begin(), vec.end(), table.vectors.row(idx));
    ++table.file_hits;
  }
  Rng rng(seed);
  for (std::size_t i = Vocabulary::kUnk; i < vocab.size(); ++i)
    if (i == Vocabulary::kUnk || !hit[i])
      fill_random_row(table.vectors.row(i), table.dim, rng);
  return table;
}

EmbeddingTable random_embedding_table(const Vocabulary& vocab, std::size_t dim,
                                      std::uint64_t seed) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
  EmbeddingTable table;
  table.dim = dim;
  table.source = EmbeddingSource::kRandomInit;
  table.vectors = Tensor2(vocab.size(), dim);
  Rng rng(seed);
  for (std::size_t i = Vocabulary::kUnk; i < vocab.size(); ++i)
    fill_random_row(table.vectors.row(i), dim, rng);
  return table;
}

EncodedPost encode_post(const Vocabulary& vocab,
                        const std::vector<std::string>& tokens) {
  EncodedPost post;
  post.true_length = tokens.size();
  if (tokens.empty()) {
    post.ids.push_back(Vocabulary::kPad);
    return post;
  }
  post.ids.reserve(tokens.size());
  for (const std::string& token : tokens) post.ids.push_back(vocab.lookup(token));
  return post;
}

Tensor2 embed_sequence(const EmbeddingTable& table, const EncodedPost& post) {
  Tensor2 out(post.ids.size(), table.dim);
  for (std::size_t t = 0; t < post.ids.size(); ++t) {
    const double* row = table.vectors.row(post.ids[t]);
    std::copy(row, row + table.dim, out.row(t));
  }
  return out;
}

}  // namespace averify::text
