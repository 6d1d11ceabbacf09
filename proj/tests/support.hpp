// Shared fixtures and generators for the test binaries.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "basics/checker.hpp"
#include "basics/effects.hpp"
#include "basics/frontend.hpp"
#include "basics/memstace.hpp"
#include "basics/pipeline.hpp"

namespace testing_support {

inline std::filesystem::path corpus_dir() { return BASICS_CORPUS_DIR; }
inline std::filesystem::path docs_dir() { return BASICS_DOCS_DIR; }

inline std::string corpus_text(const std::string& file) { return basics::read_file((corpus_dir() / file).string()); }

/// The copy() listing: one strcpy into a 16-byte buffer.
inline std::string copy_listing() { return corpus_text("listings/copy_strcpy.asm"); }

struct CorpusCase {
  std::string name;
  std::string file;
  bool vulnerable = false;
  std::string category;
  std::vector<std::string> violated;
  bool input_source = false;
};

std::vector<CorpusCase> corpus_manifest();

/// Everything the checker needs for one listing.
struct Built {
  basics::ProgramImage image;
  basics::BCfg bcfg;
  basics::FunctionMap funcs;
  basics::LoopAnalysis loops;
  basics::MemStaCe space;
};

Built build(const std::string& text, const std::string& root = "main", basics::Config cfg = {});

/// Random stack state: 1-3 frames of 24-64 bytes with control data in
/// arbitrary states, optional canary and up to two buffers per frame.
basics::MemoryState random_state(std::mt19937_64& rng);

using Oracle = std::function<bool(const basics::MemoryState&)>;

/// Hand-written truth of each bundled property body, keyed by name. Exact on
/// states whose frames model every byte a violation needs; bytes a frame
/// does not model never count as a violation.
const std::vector<std::pair<std::string, Oracle>>& property_oracles();

}  // namespace testing_support
