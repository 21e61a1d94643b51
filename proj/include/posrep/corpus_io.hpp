#pragma once

#include "posrep/tasks.hpp"

#include <filesystem>
#include <iosfwd>

namespace posrep {

// Text corpus: `# key=value` header lines, then one pair per line as
// space-separated source ids, a TAB, and space-separated target ids.
struct CorpusFile {
  Metadata header;
  Corpus pairs;
};

void write_corpus(std::ostream& out, const CorpusFile& file);
void write_corpus(const std::filesystem::path& path, const CorpusFile& file);
CorpusFile read_corpus(std::istream& in, int sep_id = SpecialTokens::sep);
CorpusFile read_corpus(const std::filesystem::path& path, int sep_id = SpecialTokens::sep);

}  // namespace posrep
