#include "posrep/corpus_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace posrep {

namespace {

void write_ids(std::ostream& out, const std::vector<int>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out << ' ';
    out << ids[i];
  }
}

std::vector<int> parse_ids(std::string_view text, std::size_t line_no) {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    if (pos == text.size()) break;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (ec != std::errc{} || v < 0) {
      throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": bad token id");
    }
    pos = static_cast<std::size_t>(ptr - text.data());
    if (pos < text.size() && text[pos] != ' ') {
      throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": bad token id");
    }
    ids.push_back(v);
  }
  return ids;
}

}  // namespace

void write_corpus(std::ostream& out, const CorpusFile& file) {
  for (const auto& [k, v] : file.header) out << "# " << k << '=' << v << '\n';
  for (const auto& p : file.pairs) {
    write_ids(out, p.src);
    out << '\t';
    write_ids(out, p.tgt);
    out << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, const CorpusFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_corpus(out, file);
}

CorpusFile read_corpus(std::istream& in, int sep_id) {
  CorpusFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string_view body(line);
      body.remove_prefix(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      file.header.emplace_back(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": missing TAB separator");
    }
    SequencePair p;
    p.src = parse_ids(std::string_view(line).substr(0, tab), line_no);
    p.tgt = parse_ids(std::string_view(line).substr(tab + 1), line_no);
    p.src_boundaries = boundaries_of(p.src, sep_id);
    p.tgt_boundaries = boundaries_of(p.tgt, sep_id);
    file.pairs.push_back(std::move(p));
  }
  return file;
}

CorpusFile read_corpus(const std::filesystem::path& path, int sep_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  return read_corpus(in, sep_id);
}

}  // namespace posrep
