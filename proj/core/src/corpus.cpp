#include "gdedup/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gdedup {

namespace {

using nlohmann::json;

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes one UTF-8 code point starting at i; advances i past it. Invalid
// bytes are returned as-is so malformed input degrades to word characters.
char32_t next_code_point(std::string_view text, std::size_t& i, std::size_t& len) {
  const auto byte = static_cast<unsigned char>(text[i]);
  std::size_t n = 1;
  char32_t cp = byte;
  if (byte >= 0xF0) {
    n = 4;
    cp = byte & 0x07u;
  } else if (byte >= 0xE0) {
    n = 3;
    cp = byte & 0x0Fu;
  } else if (byte >= 0xC0) {
    n = 2;
    cp = byte & 0x1Fu;
  }
  if (n > 1) {
    if (i + n > text.size()) {
      len = 1;
      ++i;
      return byte;
    }
    for (std::size_t k = 1; k < n; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0u) != 0x80u) {
        len = 1;
        ++i;
        return byte;
      }
      cp = (cp << 6) | (cont & 0x3Fu);
    }
  }
  len = n;
  i += n;
  return cp;
}

std::string format_line_error(const std::string& path, std::size_t line_no,
                              const std::string& what) {
  std::ostringstream out;
  out << path << ":" << line_no << ": " << what;
  return out.str();
}

}  // namespace

Vocabulary::Vocabulary() {
  add_token("<s>");
  add_token("</s>");
  add_token("<unk>");
  add_token("<pad>");
}

TokenId Vocabulary::add_token(const std::string& token) {
  const auto id = static_cast<TokenId>(id_to_token_.size());
  const auto [it, inserted] = token_to_id_.emplace(token, id);
  if (!inserted) {
    throw std::invalid_argument("Vocabulary: duplicate token '" + token + "'");
  }
  id_to_token_.push_back(token);
  return id;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("Vocabulary: token id " + std::to_string(id) +
                            " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

void Corpus::add(Document doc) {
  if (doc.id.empty()) {
    throw std::invalid_argument("Corpus: document id must be nonempty");
  }
  const auto [it, inserted] = id_index_.emplace(doc.id, docs_.size());
  if (!inserted) {
    throw std::invalid_argument("Corpus: duplicate document id '" + doc.id + "'");
  }
  docs_.push_back(std::move(doc));
}

std::int64_t Corpus::index_of(std::string_view id) const {
  const auto it = id_index_.find(std::string(id));
  return it == id_index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

void Corpus::tokenize_all(const Vocabulary& vocab, std::size_t max_len) {
  for (auto& doc : docs_) {
    doc.tokens = tokenize(doc.text, vocab, max_len);
  }
}

std::unordered_set<std::string> DuplicateGroundTruth::group_member_ids() const {
  std::unordered_set<std::string> ids;
  for (const auto& group : groups) {
    ids.insert(group.begin(), group.end());
  }
  return ids;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    std::size_t len = 0;
    const char32_t cp = next_code_point(text, i, len);
    bool separator;
    if (cp < 0x80) {
      const auto c = static_cast<unsigned char>(cp);
      separator = std::isspace(c) || std::ispunct(c);
    } else {
      separator = is_unicode_space(cp);
    }
    if (separator) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
      continue;
    }
    if (cp < 0x80) {
      current.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(cp))));
    } else {
      current.append(text.substr(start, len));
    }
  }
  if (!current.empty()) {
    words.push_back(std::move(current));
  }
  return words;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab,
                              std::size_t max_len) {
  std::vector<TokenId> ids;
  for (const auto& word : split_words(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.id_of(word));
  }
  return ids;
}

Vocabulary build_vocab(const Corpus& corpus, int min_count) {
  if (corpus.empty()) {
    throw std::invalid_argument("build_vocab: empty corpus");
  }
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& doc : corpus) {
    for (auto& word : split_words(doc.text)) {
      ++counts[std::move(word)];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [token, count] : counts) {
    if (count >= min_count) {
      ranked.emplace_back(token, count);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) {
    (void)count;
    vocab.add_token(token);
  }
  return vocab;
}

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_jsonl: cannot open " + path);
  }
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(
          format_line_error(path, line_no, std::string("malformed JSONL: ") + e.what()));
    }
    if (!record.is_object() || !record.contains("text") || !record["text"].is_string()) {
      throw std::runtime_error(
          format_line_error(path, line_no, "record must be an object with a string \"text\""));
    }
    Document doc;
    doc.text = record["text"].get<std::string>();
    if (record.contains("id")) {
      if (!record["id"].is_string()) {
        throw std::runtime_error(format_line_error(path, line_no, "\"id\" must be a string"));
      }
      doc.id = record["id"].get<std::string>();
    } else {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%06zu", line_no);
      doc.id = buf;
    }
    if (record.contains("label")) {
      const auto& label = record["label"];
      if (label.is_string()) {
        doc.label = label.get<std::string>();
      } else if (label.is_number_integer()) {
        doc.label = std::to_string(label.get<std::int64_t>());
      } else {
        throw std::runtime_error(
            format_line_error(path, line_no, "\"label\" must be a string or integer"));
      }
    }
    try {
      corpus.add(std::move(doc));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(format_line_error(path, line_no, e.what()));
    }
  }
  return corpus;
}

void write_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_jsonl: cannot open " + path + " for writing");
  }
  for (const auto& doc : corpus) {
    json record;
    record["id"] = doc.id;
    record["text"] = doc.text;
    if (doc.label) {
      record["label"] = *doc.label;
    }
    out << record.dump() << '\n';
  }
}

std::vector<MrpcPair> load_mrpc_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_mrpc_tsv: cannot open " + path);
  }
  std::vector<MrpcPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      // Header; also strip a UTF-8 BOM if the file carries one.
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 5) {
      throw std::runtime_error(format_line_error(
          path, line_no,
          "expected 5 tab-separated columns, got " + std::to_string(fields.size())));
    }
    MrpcPair pair;
    if (fields[0] == "0") {
      pair.label = 0;
    } else if (fields[0] == "1") {
      pair.label = 1;
    } else {
      throw std::runtime_error(
          format_line_error(path, line_no, "quality column must be 0 or 1"));
    }
    pair.id1 = fields[1];
    pair.id2 = fields[2];
    pair.text1 = fields[3];
    pair.text2 = fields[4];
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

DuplicateGroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_ground_truth: cannot open " + path);
  }
  json root;
  in >> root;
  DuplicateGroundTruth truth;
  truth.groups = root.at("groups").get<std::vector<std::vector<std::string>>>();
  truth.singletons = root.at("singletons").get<std::vector<std::string>>();
  return truth;
}

void write_ground_truth(const DuplicateGroundTruth& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_ground_truth: cannot open " + path + " for writing");
  }
  json root;
  root["groups"] = truth.groups;
  root["singletons"] = truth.singletons;
  out << root.dump(2) << '\n';
}

}  // namespace gdedup
