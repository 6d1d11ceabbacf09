#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "basics/instruction.hpp"

namespace basics {

/// Parses an objdump-style Intel listing.
///
/// Accepted lines:
///   `<name>:` or `0000000000401136 <name>:`   function (or data section) header
///   `401136: push rbp`                         instruction
///   `402004: .string "hello"`                  data directive (.string/.byte)
/// Text after `#` (outside string literals) is ignored. Sections whose name
/// starts with '.' hold data directives only.
///
/// Unknown mnemonics are kept as no-effect instructions and recorded in
/// ProgramImage::warnings; malformed lines throw LocatedError(MalformedLine).
ProgramImage parse_disassembly(std::string_view text);

enum class EdgeKind { Fallthrough, Taken, Call, CallReturn };

const char* to_string(EdgeKind kind);

struct Edge {
  EdgeKind kind = EdgeKind::Fallthrough;
  Address target = 0;
};

struct BasicBlock {
  Address start = 0;
  std::string function;
  std::vector<Instruction> instructions;
  std::vector<Edge> successors;
  /// Set for continuation blocks synthesized after a call that ends its function.
  bool synthetic = false;

  Address last_address() const { return instructions.empty() ? start : instructions.back().address; }
};

struct ExternalSink {
  Address site = 0;      // instruction that transfers control
  Address target = 0;    // 0 for register-indirect transfers
  std::string reason;
};

class BCfg {
 public:
  std::map<Address, BasicBlock> blocks;
  Address entry = 0;
  /// Control transfers whose target is neither in the image nor a known symbol,
  /// plus register-indirect calls and jumps.
  std::vector<ExternalSink> external_sinks;
  std::vector<std::string> warnings;

  const BasicBlock* block_at(Address start) const;
  /// Block whose instruction range contains `addr`.
  const BasicBlock* block_containing(Address addr) const;
  std::vector<Address> predecessors(Address block_start) const;
  /// Addresses of every instruction reachable from `from` over all edge kinds.
  std::set<Address> reachable_instructions(Address from) const;
  std::size_t edge_count() const;
};

BCfg build_bcfg(const ProgramImage& image);

class FunctionMap {
 public:
  std::map<std::string, Address> user;
  std::map<Address, std::string> by_address;
  /// Library symbols referenced by calls or listed as `name@plt` headers,
  /// keyed by undecorated name.
  std::map<std::string, Address> library;

  bool is_user(std::string_view name) const { return user.count(std::string(name)) != 0; }
  bool is_library(std::string_view name) const { return library.count(std::string(name)) != 0; }
  std::optional<std::string> name_at(Address entry) const;
  /// User function whose instruction range contains `addr`.
  std::optional<std::string> function_containing(const ProgramImage& image, Address addr) const;
};

/// Throws Error(DuplicateFunction) when two headers share a name.
FunctionMap extract_user_functions(const BCfg& bcfg, const ProgramImage& image);

}  // namespace basics
