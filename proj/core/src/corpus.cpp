#include "cfd/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace cfd {

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

namespace {

// Permissive decoder: malformed sequences fall back to one byte per code
// point instead of failing, so offset bookkeeping stays total.
std::vector<std::pair<uint32_t, int>> decode_utf8(const std::string& text) {
  std::vector<std::pair<uint32_t, int>> cps;  // (code point, byte offset)
  const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
  const size_t n = text.size();
  size_t i = 0;
  while (i < n) {
    const unsigned char b = bytes[i];
    uint32_t cp = b;
    int len = 1;
    if (b >= 0xF0) {
      len = 4;
      cp = b & 0x07u;
    } else if (b >= 0xE0) {
      len = 3;
      cp = b & 0x0Fu;
    } else if (b >= 0xC0) {
      len = 2;
      cp = b & 0x1Fu;
    }
    if (len > 1) {
      if (i + static_cast<size_t>(len) > n) {
        len = 1;
        cp = b;
      } else {
        for (int k = 1; k < len; ++k) {
          const unsigned char c = bytes[i + static_cast<size_t>(k)];
          if ((c & 0xC0u) != 0x80u) {
            len = 1;
            cp = b;
            break;
          }
          if (len > 1) cp = (cp << 6) | (c & 0x3Fu);
        }
      }
    }
    cps.emplace_back(cp, static_cast<int>(i));
    i += static_cast<size_t>(len);
  }
  return cps;
}

}  // namespace

int count_code_points(const std::string& text) {
  return static_cast<int>(decode_utf8(text).size());
}

std::vector<int> code_point_byte_offsets(const std::string& text) {
  auto cps = decode_utf8(text);
  std::vector<int> offsets;
  offsets.reserve(cps.size() + 1);
  for (const auto& [cp, off] : cps) offsets.push_back(off);
  offsets.push_back(static_cast<int>(text.size()));
  return offsets;
}

std::string substr_code_points(const std::string& text, int start, int count) {
  const auto offsets = code_point_byte_offsets(text);
  const int total = static_cast<int>(offsets.size()) - 1;
  check(start >= 0 && count >= 0 && start + count <= total,
        "substr_code_points: range out of bounds");
  return text.substr(static_cast<size_t>(offsets[start]),
                     static_cast<size_t>(offsets[start + count] - offsets[start]));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();
  if (content.size() >= 3 && content.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    content.erase(0, 3);
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  size_t i = 0;
  const size_t n = content.size();
  auto end_field = [&]() {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < n) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r') {
      if (i + 1 < n && content[i + 1] == '\n') ++i;
      end_row();
      ++i;
      continue;
    }
    if (c == '\n') {
      end_row();
      ++i;
      continue;
    }
    field += c;
    field_started = true;
    ++i;
  }
  check(!in_quotes, "malformed CSV (unterminated quote): " + path);
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// ---------------------------------------------------------------------------
// loaders
// ---------------------------------------------------------------------------

namespace {

int parse_int_field(const std::string& field, int row, const std::string& what) {
  int value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  check(ec == std::errc() && ptr == last && !field.empty(),
        "row " + std::to_string(row) + ": cannot parse " + what + " from '" + field + "'");
  return value;
}

Statement make_statement(const std::string& id, const std::string& text, int row) {
  Statement s{id, text, count_code_points(text)};
  check(s.length >= 1, "row " + std::to_string(row) + ": empty sentence");
  return s;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                   const std::string& path) {
  check(got == want, "unexpected CSV header in " + path);
}

}  // namespace

std::vector<std::pair<Statement, BinaryLabel>> load_detection_data(const std::string& path) {
  const auto rows = read_csv(path);
  check(!rows.empty(), "empty file: " + path);
  expect_header(rows[0], {"sentenceID", "gold_label", "sentence"}, path);
  std::vector<std::pair<Statement, BinaryLabel>> out;
  out.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const int row = static_cast<int>(r) + 1;  // 1-based file row
    check(rows[r].size() == 3, "row " + std::to_string(row) + ": expected 3 fields, got " +
                                   std::to_string(rows[r].size()));
    const int label = parse_int_field(rows[r][1], row, "label");
    check(label == 0 || label == 1,
          "row " + std::to_string(row) + ": label must be 0 or 1, got " + rows[r][1]);
    out.emplace_back(make_statement(rows[r][0], rows[r][2], row), BinaryLabel{label});
  }
  return out;
}

std::vector<std::pair<Statement, SpanQuad>> load_span_data(const std::string& path) {
  const auto rows = read_csv(path);
  check(!rows.empty(), "empty file: " + path);
  expect_header(rows[0],
                {"sentenceID", "sentence", "antecedent_startid", "antecedent_endid",
                 "consequent_startid", "consequent_endid"},
                path);
  std::vector<std::pair<Statement, SpanQuad>> out;
  out.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const int row = static_cast<int>(r) + 1;
    check(rows[r].size() == 6, "row " + std::to_string(row) + ": expected 6 fields, got " +
                                   std::to_string(rows[r].size()));
    Statement st = make_statement(rows[r][0], rows[r][1], row);
    const int as = parse_int_field(rows[r][2], row, "antecedent_startid");
    const int ae = parse_int_field(rows[r][3], row, "antecedent_endid");
    const int cs = parse_int_field(rows[r][4], row, "consequent_startid");
    const int ce = parse_int_field(rows[r][5], row, "consequent_endid");
    check(as != -1 && ae != -1, "row " + std::to_string(row) + ": antecedent must be present");
    SpanQuad quad;
    if (cs == -1 && ce == -1) {
      quad = SpanQuad::without_consequent(as, ae);
    } else {
      check(cs != -1 && ce != -1,
            "row " + std::to_string(row) + ": consequent ids must both be -1 or both be >= 0");
      quad = SpanQuad::with_consequent(as, ae, cs, ce);
    }
    try {
      validate_quad(quad, st.length);
    } catch (const std::exception& e) {
      throw std::runtime_error("row " + std::to_string(row) + ": " + e.what());
    }
    out.emplace_back(std::move(st), quad);
  }
  return out;
}

void validate_quad(const SpanQuad& quad, int length) {
  check(length >= 1, "span quad: statement length must be >= 1");
  check(quad.antecedent_start >= 0 && quad.antecedent_start <= quad.antecedent_end &&
            quad.antecedent_end < length,
        "span quad: antecedent indices out of range");
  if (quad.consequent_present) {
    check(quad.consequent_start >= 0 && quad.consequent_start <= quad.consequent_end &&
              quad.consequent_end < length,
          "span quad: consequent indices out of range");
  }
}

// ---------------------------------------------------------------------------
// tokenizer
// ---------------------------------------------------------------------------

namespace {

enum class CharClass { kSpace, kWord, kApostrophe, kPunct };

CharClass classify(uint32_t cp) {
  if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
      cp == 0x00A0) {
    return CharClass::kSpace;
  }
  if (cp == '\'' || cp == 0x2019) return CharClass::kApostrophe;
  if (cp < 128) {
    const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'A' && cp <= 'Z') ||
                       (cp >= 'a' && cp <= 'z');
    return alnum ? CharClass::kWord : CharClass::kPunct;
  }
  // Common non-ASCII punctuation; other non-ASCII code points count as word
  // characters so that accented words stay whole.
  switch (cp) {
    case 0x2018:  // left single quote
    case 0x201C:
    case 0x201D:  // double quotes
    case 0x2013:
    case 0x2014:  // dashes
    case 0x2026:  // ellipsis
    case 0x00AB:
    case 0x00BB:  // guillemets
    case 0x00A1:
    case 0x00BF:  // inverted punctuation
      return CharClass::kPunct;
    default:
      return CharClass::kWord;
  }
}

}  // namespace

std::vector<TokenSpan> tokenize(const std::string& text) {
  const auto cps = decode_utf8(text);
  const auto offsets = code_point_byte_offsets(text);
  const int n = static_cast<int>(cps.size());

  std::vector<TokenSpan> tokens;
  auto emit = [&](int start, int end) {
    tokens.push_back(TokenSpan{
        text.substr(static_cast<size_t>(offsets[start]),
                    static_cast<size_t>(offsets[end] - offsets[start])),
        start, end});
  };

  int i = 0;
  while (i < n) {
    const CharClass cls = classify(cps[static_cast<size_t>(i)].first);
    if (cls == CharClass::kSpace) {
      ++i;
      continue;
    }
    if (cls == CharClass::kWord) {
      int j = i + 1;
      while (j < n) {
        const CharClass cj = classify(cps[static_cast<size_t>(j)].first);
        if (cj == CharClass::kWord) {
          ++j;
        } else if (cj == CharClass::kApostrophe && j + 1 < n &&
                   classify(cps[static_cast<size_t>(j + 1)].first) == CharClass::kWord) {
          j += 2;  // internal apostrophe stays inside the word
        } else {
          break;
        }
      }
      emit(i, j);
      i = j;
      continue;
    }
    emit(i, i + 1);  // punctuation (or boundary apostrophe) as its own token
    ++i;
  }
  check(!tokens.empty(), "tokenize: text is empty or whitespace-only");
  return tokens;
}

bool punctuation_only_token(const std::string& surface) {
  const auto cps = decode_utf8(surface);
  if (cps.empty()) return false;
  for (const auto& [cp, off] : cps) {
    const CharClass cls = classify(cp);
    if (cls != CharClass::kPunct && cls != CharClass::kApostrophe) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// vocabulary / encoding
// ---------------------------------------------------------------------------

Vocab Vocab::build(const std::vector<std::vector<TokenSpan>>& corpus, int min_freq,
                   int max_size) {
  check(max_size > 3, "vocab: max_size must exceed the reserved ids");
  std::map<std::string, int64_t> freq;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++freq[tok.surface];
  }
  std::vector<std::pair<std::string, int64_t>> ranked;
  ranked.reserve(freq.size());
  for (auto& [token, count] : freq) {
    if (count >= min_freq) ranked.emplace_back(token, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.tokens_ = {"<pad>", "<unk>", "<cls>"};
  for (const auto& [token, count] : ranked) {
    if (static_cast<int>(v.tokens_.size()) >= max_size) break;
    v.tokens_.push_back(token);
  }
  for (size_t i = 3; i < v.tokens_.size(); ++i) {
    v.ids_[v.tokens_[i]] = static_cast<int>(i);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens_by_id) {
  check(tokens_by_id.size() >= 3, "vocab: token table must include the reserved ids");
  Vocab v;
  v.tokens_ = std::move(tokens_by_id);
  for (size_t i = 3; i < v.tokens_.size(); ++i) {
    v.ids_[v.tokens_[i]] = static_cast<int>(i);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

EncodedSequence encode_ids(const std::vector<TokenSpan>& tokens, const Vocab& vocab,
                           int max_len) {
  check(max_len >= 2, "encode_ids: max_len must be >= 2");
  EncodedSequence seq;
  seq.ids.assign(static_cast<size_t>(max_len), Vocab::kPadId);
  seq.ids[0] = Vocab::kClsId;
  const int take = std::min(static_cast<int>(tokens.size()), max_len - 1);
  for (int i = 0; i < take; ++i) {
    seq.ids[static_cast<size_t>(i) + 1] = vocab.id(tokens[static_cast<size_t>(i)].surface);
  }
  seq.true_len = take + 1;
  return seq;
}

}  // namespace cfd
